//! A small text world of actors, objects and rooms. Actors take random legal
//! actions, actions are transcribed with a synonym grammar, and questions
//! about the resulting story are labelled with answers and supporting
//! statements computed from the true world state.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MemnnError, Result};
use crate::features::tokenize;

pub const ACTORS: [&str; 4] = ["joe", "fred", "bill", "dan"];
pub const OBJECTS: [&str; 3] = ["milk", "football", "apple"];
pub const ROOMS: [&str; 5] = ["kitchen", "office", "bathroom", "garden", "bedroom"];

pub const GO_FORMS: [&str; 5] = ["went to", "journeyed to", "travelled to", "moved to", "went back to"];
pub const GET_FORMS: [&str; 4] = ["picked up", "got", "grabbed", "took"];
pub const DROP_FORMS: [&str; 4] = ["dropped", "left", "discarded", "put down"];
pub const CONNECTIVES: [&str; 9] = [".", "and", "then", ", then", ";", ", later", ", after that", ", and then", ", next"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Location {
    Room(usize),
    Actor(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Go { actor: usize, room: usize },
    Get { actor: usize, object: usize },
    GetFrom { actor: usize, object: usize, container: usize },
    PutIn { actor: usize, object: usize, container: usize },
    Give { actor: usize, object: usize, to: usize },
    Drop { actor: usize, object: usize },
    Look { actor: usize },
    Inventory { actor: usize },
    Examine { actor: usize, object: usize },
}

impl Action {
    pub fn actor(&self) -> usize {
        match *self {
            Action::Go { actor, .. }
            | Action::Get { actor, .. }
            | Action::GetFrom { actor, .. }
            | Action::PutIn { actor, .. }
            | Action::Give { actor, .. }
            | Action::Drop { actor, .. }
            | Action::Look { actor }
            | Action::Inventory { actor }
            | Action::Examine { actor, .. } => actor,
        }
    }

    pub fn object(&self) -> Option<usize> {
        match *self {
            Action::Get { object, .. }
            | Action::GetFrom { object, .. }
            | Action::PutIn { object, .. }
            | Action::Give { object, .. }
            | Action::Drop { object, .. }
            | Action::Examine { object, .. } => Some(object),
            _ => None,
        }
    }

    pub fn mentions_actor(&self, x: usize) -> bool {
        self.actor() == x || matches!(*self, Action::Give { to, .. } if to == x)
    }

    pub fn mentions_object(&self, o: usize) -> bool {
        match *self {
            Action::GetFrom { container, .. } | Action::PutIn { container, .. } if container == o => true,
            _ => self.object() == Some(o),
        }
    }
}

/// Which actions actors may choose from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActionMode {
    ActorOnly,
    ActorObject,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorldState {
    pub actors: Vec<String>,
    pub objects: Vec<String>,
    pub rooms: Vec<String>,
    pub actor_room: Vec<usize>,
    pub object_at: Vec<Location>,
    pub history: Vec<Action>,
}

fn names(defaults: &[&str], n: usize, prefix: &str) -> Vec<String> {
    (0..n)
        .map(|i| defaults.get(i).map_or_else(|| format!("{prefix}{i}"), |s| s.to_string()))
        .collect()
}

/// Seeded world with every actor and object placed in a random room.
pub fn init_world(seed: u64, n_actors: usize, n_objects: usize, n_rooms: usize) -> Result<WorldState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_world_with(&mut rng, n_actors, n_objects, n_rooms)
}

pub fn init_world_with<R: Rng + ?Sized>(rng: &mut R, n_actors: usize, n_objects: usize, n_rooms: usize) -> Result<WorldState> {
    if n_actors == 0 || n_rooms == 0 {
        return Err(MemnnError::Simulation("need at least one actor and one room".into()));
    }
    Ok(WorldState {
        actors: names(&ACTORS, n_actors, "actor"),
        objects: names(&OBJECTS, n_objects, "object"),
        rooms: names(&ROOMS, n_rooms, "room"),
        actor_room: (0..n_actors).map(|_| rng.random_range(0..n_rooms)).collect(),
        object_at: (0..n_objects).map(|_| Location::Room(rng.random_range(0..n_rooms))).collect(),
        history: Vec::new(),
    })
}

impl WorldState {
    pub fn holder(&self, object: usize) -> Option<usize> {
        match self.object_at[object] {
            Location::Actor(a) => Some(a),
            Location::Room(_) => None,
        }
    }

    /// Room the object is in, following its holder if carried.
    pub fn object_room(&self, object: usize) -> usize {
        match self.object_at[object] {
            Location::Room(r) => r,
            Location::Actor(a) => self.actor_room[a],
        }
    }

    fn check_ids(&self, a: &Action) -> std::result::Result<(), String> {
        let ok_actor = |x: usize| x < self.actors.len();
        let ok_object = |x: usize| x < self.objects.len();
        let fine = match *a {
            Action::Go { actor, room } => ok_actor(actor) && room < self.rooms.len(),
            Action::Get { actor, object } | Action::Drop { actor, object } | Action::Examine { actor, object } => {
                ok_actor(actor) && ok_object(object)
            }
            Action::GetFrom { actor, object, container } | Action::PutIn { actor, object, container } => {
                ok_actor(actor) && ok_object(object) && ok_object(container)
            }
            Action::Give { actor, object, to } => ok_actor(actor) && ok_object(object) && ok_actor(to),
            Action::Look { actor } | Action::Inventory { actor } => ok_actor(actor),
        };
        if fine {
            Ok(())
        } else {
            Err(format!("{a:?} refers to an unknown entity"))
        }
    }

    /// Whether `a` may be executed now; the error names the violated rule.
    pub fn check_legal(&self, a: &Action) -> std::result::Result<(), String> {
        self.check_ids(a)?;
        match *a {
            Action::Go { actor, room } => {
                if self.actor_room[actor] == room {
                    return Err("cannot go to a place one is already at".into());
                }
            }
            Action::Get { actor, object } => {
                if self.holder(object).is_some() {
                    return Err("cannot get something that is already held".into());
                }
                if self.object_room(object) != self.actor_room[actor] {
                    return Err("cannot get something in another room".into());
                }
            }
            Action::Drop { actor, object } => {
                if self.holder(object) != Some(actor) {
                    return Err("cannot drop something one does not have".into());
                }
            }
            Action::Give { actor, object, to } => {
                if self.holder(object) != Some(actor) {
                    return Err("cannot give something one does not have".into());
                }
                if actor == to || self.actor_room[actor] != self.actor_room[to] {
                    return Err("can only give to another actor in the same room".into());
                }
            }
            Action::GetFrom { .. } | Action::PutIn { .. } => {
                return Err("this world has no containers".into());
            }
            Action::Examine { actor, object } => {
                if self.object_room(object) != self.actor_room[actor] {
                    return Err("cannot examine something in another room".into());
                }
            }
            Action::Look { .. } | Action::Inventory { .. } => {}
        }
        Ok(())
    }

    /// Execute a legal action and append it to the history.
    pub fn apply(&mut self, a: Action) -> Result<()> {
        self.check_legal(&a).map_err(MemnnError::Simulation)?;
        match a {
            Action::Go { actor, room } => self.actor_room[actor] = room,
            Action::Get { actor, object } => self.object_at[object] = Location::Actor(actor),
            Action::Drop { actor, object } => self.object_at[object] = Location::Room(self.actor_room[actor]),
            Action::Give { object, to, .. } => self.object_at[object] = Location::Actor(to),
            _ => {}
        }
        self.history.push(a);
        Ok(())
    }
}

/// All legal go/get/drop actions for `actor`.
pub fn valid_actions(world: &WorldState, actor: usize, mode: ActionMode) -> Vec<Action> {
    let mut out: Vec<Action> = (0..world.rooms.len())
        .filter(|&room| room != world.actor_room[actor])
        .map(|room| Action::Go { actor, room })
        .collect();
    if mode == ActionMode::ActorObject {
        for object in 0..world.objects.len() {
            match world.object_at[object] {
                Location::Room(r) if r == world.actor_room[actor] => out.push(Action::Get { actor, object }),
                Location::Actor(a) if a == actor => out.push(Action::Drop { actor, object }),
                _ => {}
            }
        }
    }
    out
}

/// Pick an (actor, action) pair uniformly among all legal ones and run it.
pub fn step<R: Rng + ?Sized>(world: &mut WorldState, mode: ActionMode, rng: &mut R) -> Result<Action> {
    let all: Vec<Action> = (0..world.actors.len()).flat_map(|a| valid_actions(world, a, mode)).collect();
    let a = *all
        .choose(rng)
        .ok_or_else(|| MemnnError::Simulation("no actor has a valid action".into()))?;
    world.apply(a)?;
    Ok(a)
}

/// Surface-form choices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grammar {
    /// Probability of "the" before a room or object.
    pub article_prob: f64,
    /// Probability of a trailing "there" after get and drop.
    pub there_prob: f64,
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar {
            article_prob: 0.5,
            there_prob: 0.5,
        }
    }
}

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split_whitespace().map(String::from)
}

pub fn transcribe<R: Rng + ?Sized>(world: &WorldState, action: &Action, grammar: &Grammar, rng: &mut R) -> Result<Vec<String>> {
    world.check_ids(action).map_err(MemnnError::Simulation)?;
    let mut out = vec![world.actors[action.actor()].clone()];
    let (forms, noun, there): (&[&str], &str, bool) = match *action {
        Action::Go { room, .. } => (&GO_FORMS, &world.rooms[room], false),
        Action::Get { object, .. } => (&GET_FORMS, &world.objects[object], true),
        Action::Drop { object, .. } => (&DROP_FORMS, &world.objects[object], true),
        other => return Err(MemnnError::Simulation(format!("no grammar for {other:?}"))),
    };
    out.extend(words(forms.choose(rng).unwrap()));
    if rng.random_bool(grammar.article_prob) {
        out.push("the".into());
    }
    out.push(noun.to_string());
    if there && rng.random_bool(grammar.there_prob) {
        out.push("there".into());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuestionKind {
    WhereIsActor,
    WhereWasBefore,
    WhereIsObject,
}

impl QuestionKind {
    pub const ALL: [QuestionKind; 3] = [
        QuestionKind::WhereIsActor,
        QuestionKind::WhereWasBefore,
        QuestionKind::WhereIsObject,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuestionKind::WhereIsActor => "where_is_actor",
            QuestionKind::WhereWasBefore => "where_was_before",
            QuestionKind::WhereIsObject => "where_is_object",
        }
    }

    /// Kind read off the surface form.
    pub fn infer(tokens: &[String]) -> QuestionKind {
        let t: Vec<&str> = tokens.iter().map(String::as_str).collect();
        if t.contains(&"before") {
            QuestionKind::WhereWasBefore
        } else if t.get(2) == Some(&"the") {
            QuestionKind::WhereIsObject
        } else {
            QuestionKind::WhereIsActor
        }
    }
}

/// What a question asks, in world ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Query {
    Actor(usize),
    Before(usize, usize),
    Object(usize),
}

impl Query {
    pub fn kind(&self) -> QuestionKind {
        match self {
            Query::Actor(_) => QuestionKind::WhereIsActor,
            Query::Before(..) => QuestionKind::WhereWasBefore,
            Query::Object(_) => QuestionKind::WhereIsObject,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Question {
    pub tokens: Vec<String>,
    pub answer: String,
    /// Statement indices, first hop first.
    pub supports: Vec<usize>,
    /// Number of statements written before the question is asked.
    pub position: usize,
    pub kind: QuestionKind,
    /// How many statements back the questioned entity was picked from.
    pub difficulty: Option<usize>,
    /// Optional full-sentence answer, not used by the model.
    pub answer_sentence: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Story {
    pub statements: Vec<Vec<String>>,
    /// Underlying actions, parallel to `statements` (empty for parsed files).
    pub actions: Vec<Action>,
    /// World before the first action (absent for parsed files).
    pub world: Option<WorldState>,
    /// Sorted by position.
    pub questions: Vec<Question>,
}

impl Story {
    pub fn memory_for(&self, q: &Question) -> &[Vec<String>] {
        &self.statements[..q.position]
    }
}

/// Replay `actions` from `world0`, ignoring its history.
pub fn replay(world0: &WorldState, actions: &[Action]) -> Result<WorldState> {
    let mut w = world0.clone();
    w.history.clear();
    for &a in actions {
        w.apply(a)?;
    }
    Ok(w)
}

/// True answer (a room id) after `actions` have been executed from `world0`.
pub fn oracle_answer(world0: &WorldState, actions: &[Action], q: Query) -> Result<usize> {
    let end = replay(world0, actions)?;
    match q {
        Query::Actor(a) => Ok(end.actor_room[a]),
        Query::Object(o) => Ok(end.object_room(o)),
        Query::Before(a, r) => {
            let i = actions
                .iter()
                .rposition(|x| *x == Action::Go { actor: a, room: r })
                .ok_or_else(|| MemnnError::Simulation(format!("actor {a} never entered room {r}")))?;
            Ok(replay(world0, &actions[..i])?.actor_room[a])
        }
    }
}

fn last_go_before(actions: &[Action], actor: usize, end: usize) -> Option<usize> {
    actions[..end]
        .iter()
        .rposition(|x| matches!(*x, Action::Go { actor: a, .. } if a == actor))
}

/// Minimal supporting statements for `q` after `actions`, or `None` when the
/// answer depends on the initial placement rather than a statement.
pub fn supporting_facts(actions: &[Action], q: Query) -> Option<Vec<usize>> {
    match q {
        Query::Actor(a) => last_go_before(actions, a, actions.len()).map(|i| vec![i]),
        Query::Before(a, r) => {
            let i = actions.iter().rposition(|x| *x == Action::Go { actor: a, room: r })?;
            let j = last_go_before(actions, a, i)?;
            Some(vec![i, j])
        }
        Query::Object(o) => {
            let i = actions.iter().rposition(
                |x| matches!(*x, Action::Get { object, .. } | Action::Drop { object, .. } | Action::Give { object, .. } if object == o),
            )?;
            match actions[i] {
                Action::Get { actor, .. } | Action::Give { to: actor, .. } => {
                    let j = last_go_before(actions, actor, actions.len())?;
                    Some(vec![i, j])
                }
                Action::Drop { actor, .. } => {
                    let j = last_go_before(actions, actor, i)?;
                    Some(vec![i, j])
                }
                _ => None,
            }
        }
    }
}

pub fn question_tokens<R: Rng + ?Sized>(world: &WorldState, q: Query, rng: &mut R) -> Vec<String> {
    let now = |rng: &mut R| rng.random_bool(0.5);
    let mut t: Vec<String> = match q {
        Query::Actor(a) => {
            let mut t = vec!["where".into(), "is".into(), world.actors[a].clone()];
            if now(rng) {
                t.push("now".into());
            }
            t
        }
        Query::Object(o) => {
            let mut t = vec!["where".into(), "is".into(), "the".into(), world.objects[o].clone()];
            if now(rng) {
                t.push("now".into());
            }
            t
        }
        Query::Before(a, r) => vec![
            "where".into(),
            "was".into(),
            world.actors[a].clone(),
            "before".into(),
            "the".into(),
            world.rooms[r].clone(),
        ],
    };
    t.push("?".into());
    t
}

/// Task variants of the simulation experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskMode {
    ActorWoBefore,
    Actor,
    ActorObject,
    ActorWoBeforeObject,
}

impl TaskMode {
    pub fn action_mode(self) -> ActionMode {
        match self {
            TaskMode::ActorWoBefore | TaskMode::Actor => ActionMode::ActorOnly,
            _ => ActionMode::ActorObject,
        }
    }

    pub fn with_before(self) -> bool {
        matches!(self, TaskMode::Actor | TaskMode::ActorObject)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskMode::ActorWoBefore => "actor_wo_before",
            TaskMode::Actor => "actor",
            TaskMode::ActorObject => "actor_object",
            TaskMode::ActorWoBeforeObject => "actor_wo_before_object",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            TaskMode::ActorWoBefore,
            TaskMode::Actor,
            TaskMode::ActorObject,
            TaskMode::ActorWoBeforeObject,
        ]
        .into_iter()
        .find(|m| m.name() == s)
    }
}

/// Draw one question about the world after `actions`. The questioned entity
/// comes from a statement 1..=difficulty steps back and is not mentioned
/// after it. Returns `None` when the
/// drawn question has no supporting statements; callers resample.
pub fn generate_question<R: Rng + ?Sized>(
    world0: &WorldState,
    actions: &[Action],
    difficulty: usize,
    mode: TaskMode,
    rng: &mut R,
) -> Result<Option<Question>> {
    if actions.is_empty() || difficulty == 0 {
        return Ok(None);
    }
    let back = rng.random_range(1..=difficulty.min(actions.len()));
    let q = match actions[actions.len() - back] {
        Action::Go { actor, room } => {
            if mode.with_before() && rng.random_bool(0.5) {
                Query::Before(actor, room)
            } else {
                Query::Actor(actor)
            }
        }
        a => match a.object() {
            Some(o) => Query::Object(o),
            None => return Ok(None),
        },
    };
    // The drawn statement must be the entity's last mention.
    let later = &actions[actions.len() - back + 1..];
    let mentioned = |a: &Action| match q {
        Query::Actor(x) | Query::Before(x, _) => a.mentions_actor(x),
        Query::Object(o) => a.mentions_object(o),
    };
    if later.iter().any(mentioned) {
        return Ok(None);
    }
    let Some(supports) = supporting_facts(actions, q) else {
        return Ok(None);
    };
    let world = replay(world0, actions)?;
    let answer = world0.rooms[oracle_answer(world0, actions, q)?].clone();
    Ok(Some(Question {
        tokens: question_tokens(&world, q, rng),
        answer,
        supports,
        position: actions.len(),
        kind: q.kind(),
        difficulty: Some(back),
        answer_sentence: None,
    }))
}

/// Full-sentence answer in one of a few templates.
pub fn answer_sentence<R: Rng + ?Sized>(q: &Question, rng: &mut R) -> Vec<String> {
    let subject = match q.kind {
        QuestionKind::WhereIsObject => format!("the {}", q.tokens[3]),
        _ => q.tokens[2].clone(),
    };
    let room = &q.answer;
    let templates = [
        format!("the {room}"),
        format!("{room} i believe"),
        format!("i think {subject} is in the {room}"),
        format!("{subject} is in the {room}"),
    ];
    tokenize(templates.choose(rng).unwrap())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetConfig {
    pub n_statements: usize,
    pub n_questions: usize,
    pub story_len: usize,
    pub difficulty: usize,
    pub mode: TaskMode,
    pub grammar: Grammar,
    pub answer_sentences: bool,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_statements: 7000,
            n_questions: 3000,
            story_len: 20,
            difficulty: 5,
            mode: TaskMode::ActorObject,
            grammar: Grammar::default(),
            answer_sentences: false,
            seed: 0,
        }
    }
}

const MAX_RESAMPLES: usize = 10_000;

/// One story of `len` statements with `n_questions` questions.
pub fn generate_story<R: Rng + ?Sized>(cfg: &DatasetConfig, len: usize, n_questions: usize, rng: &mut R) -> Result<Story> {
    let world0 = init_world_with(rng, ACTORS.len(), OBJECTS.len(), ROOMS.len())?;
    let mut world = world0.clone();
    let mut statements = Vec::with_capacity(len);
    for _ in 0..len {
        let a = step(&mut world, cfg.mode.action_mode(), rng)?;
        statements.push(transcribe(&world, &a, &cfg.grammar, rng)?);
    }
    let actions = world.history.clone();
    let mut questions = Vec::with_capacity(n_questions);
    for _ in 0..n_questions {
        let mut q = None;
        for _ in 0..MAX_RESAMPLES {
            let p = rng.random_range(1..=len);
            q = generate_question(&world0, &actions[..p], cfg.difficulty, cfg.mode, rng)?;
            if q.is_some() {
                break;
            }
        }
        let mut q = q.ok_or_else(|| MemnnError::Simulation("no eligible question in story".into()))?;
        if cfg.answer_sentences {
            q.answer_sentence = Some(answer_sentence(&q, rng));
        }
        questions.push(q);
    }
    questions.sort_by_key(|q| q.position);
    Ok(Story {
        statements,
        actions,
        world: Some(world0),
        questions,
    })
}

/// Stories totalling `n_statements` statements and `n_questions` questions,
/// spread as evenly as possible.
pub fn generate_stories(cfg: &DatasetConfig) -> Result<Vec<Story>> {
    if cfg.story_len == 0 || cfg.n_statements == 0 {
        return Err(MemnnError::Config("story length and statement count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_stories = cfg.n_statements.div_ceil(cfg.story_len);
    let mut stories = Vec::with_capacity(n_stories);
    for s in 0..n_stories {
        let len = cfg.story_len.min(cfg.n_statements - s * cfg.story_len);
        let nq = cfg.n_questions / n_stories + usize::from(s < cfg.n_questions % n_stories);
        stories.push(generate_story(cfg, len, nq, &mut rng)?);
    }
    Ok(stories)
}

/// Train and test sets from two seeds derived from `cfg.seed`.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<(Vec<Story>, Vec<Story>)> {
    let train = generate_stories(cfg)?;
    let test = generate_stories(&DatasetConfig {
        seed: test_seed(cfg.seed),
        ..*cfg
    })?;
    Ok((train, test))
}

pub fn test_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Keep the first `n` questions (in story order), dropping emptied stories.
pub fn subsample_questions(stories: &[Story], n: usize) -> Vec<Story> {
    let mut left = n;
    let mut out = Vec::new();
    for s in stories {
        if left == 0 {
            break;
        }
        let take = left.min(s.questions.len());
        left -= take;
        if take > 0 {
            let mut s = s.clone();
            s.questions.truncate(take);
            out.push(s);
        }
    }
    out
}

pub fn count_questions(stories: &[Story]) -> usize {
    stories.iter().map(|s| s.questions.len()).sum()
}

/// Statements joined into one word stream. Each statement after the first is
/// preceded by a random connective; a final "." closes the stream. Returns
/// the words and a flag per word marking the end of a statement.
pub fn join_statements<R: Rng + ?Sized>(statements: &[Vec<String>], rng: &mut R) -> (Vec<String>, Vec<bool>) {
    let mut words = Vec::new();
    let mut ends = Vec::new();
    for (i, s) in statements.iter().enumerate() {
        if i > 0 {
            for w in tokenize(CONNECTIVES.choose(rng).unwrap()) {
                words.push(w);
                ends.push(false);
            }
        }
        for w in s {
            words.push(w.clone());
            ends.push(false);
        }
        if let Some(e) = ends.last_mut() {
            *e = true;
        }
    }
    words.push(".".into());
    ends.push(false);
    (words, ends)
}

/// Split a joined stream back into statements by removing connectives.
pub fn split_joined(words: &[String], ends: &[bool]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    for (w, &e) in words.iter().zip(ends) {
        cur.push(w.clone());
        if e {
            out.push(strip_connective(&cur).to_vec());
            cur.clear();
        }
    }
    out
}

/// `segment` without its leading connective, if any.
pub fn strip_connective(segment: &[String]) -> &[String] {
    let mut best = 0;
    for c in CONNECTIVES {
        let c = tokenize(c);
        if c.len() > best && segment.len() > c.len() && segment[..c.len()] == c[..] {
            best = c.len();
        }
    }
    &segment[best..]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpanKind {
    Statement(usize),
    Question(usize),
}

/// A story rendered as one word stream with its gold segmentation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamStory {
    pub words: Vec<String>,
    /// Gold segments in order as half-open word ranges.
    pub spans: Vec<(usize, usize, SpanKind)>,
}

impl StreamStory {
    pub fn boundaries(&self) -> Vec<bool> {
        let mut b = vec![false; self.words.len()];
        for &(_, end, _) in &self.spans {
            b[end - 1] = true;
        }
        b
    }

    pub fn segment(&self, i: usize) -> &[String] {
        let (s, e, _) = self.spans[i];
        &self.words[s..e]
    }

    /// Statement segments including their connectives.
    pub fn statement_segments(&self) -> Vec<Vec<String>> {
        self.spans
            .iter()
            .filter(|s| matches!(s.2, SpanKind::Statement(_)))
            .map(|&(s, e, _)| self.words[s..e].to_vec())
            .collect()
    }

    pub fn question_segments(&self) -> Vec<Vec<String>> {
        self.spans
            .iter()
            .filter(|s| matches!(s.2, SpanKind::Question(_)))
            .map(|&(s, e, _)| self.words[s..e].to_vec())
            .collect()
    }
}

/// Interleave statements and questions into a stream. Statements after the
/// first item carry a connective; questions follow directly and end in "?".
pub fn to_stream<R: Rng + ?Sized>(story: &Story, rng: &mut R) -> StreamStory {
    let mut words: Vec<String> = Vec::new();
    let mut spans = Vec::new();
    let mut qi = 0;
    let mut push_questions = |upto: usize, words: &mut Vec<String>, spans: &mut Vec<(usize, usize, SpanKind)>| {
        while qi < story.questions.len() && story.questions[qi].position <= upto {
            let s = words.len();
            words.extend(story.questions[qi].tokens.iter().cloned());
            spans.push((s, words.len(), SpanKind::Question(qi)));
            qi += 1;
        }
    };
    push_questions(0, &mut words, &mut spans);
    for (i, st) in story.statements.iter().enumerate() {
        let s = words.len();
        if !words.is_empty() {
            words.extend(tokenize(CONNECTIVES.choose(rng).unwrap()));
        }
        words.extend(st.iter().cloned());
        spans.push((s, words.len(), SpanKind::Statement(i)));
        push_questions(i + 1, &mut words, &mut spans);
    }
    words.push(".".into());
    StreamStory { words, spans }
}

/// Story with statements replaced by their stream segments, connectives
/// included, so a model can be trained on what the segmenter will emit.
pub fn with_segments(story: &Story, stream: &StreamStory) -> Story {
    let mut s = story.clone();
    for &(a, b, kind) in &stream.spans {
        if let SpanKind::Statement(i) = kind {
            s.statements[i] = stream.words[a..b].to_vec();
        }
    }
    s
}

fn fixture(lines: &[&str], questions: &[(&str, &str, &[usize], usize)]) -> Story {
    let strip = |s: &str| -> Vec<String> { tokenize(s).into_iter().filter(|t| t != ".").collect() };
    Story {
        statements: lines.iter().map(|s| strip(s)).collect(),
        actions: Vec::new(),
        world: None,
        questions: questions
            .iter()
            .map(|&(q, a, sup, pos)| {
                let tokens = tokenize(q);
                Question {
                    kind: QuestionKind::infer(&tokens),
                    tokens,
                    answer: a.to_string(),
                    supports: sup.to_vec(),
                    position: pos,
                    difficulty: None,
                    answer_sentence: None,
                }
            })
            .collect(),
    }
}

/// The milk story: three questions over six statements.
pub fn milk_story() -> Story {
    fixture(
        &[
            "Joe went to the kitchen.",
            "Fred went to the kitchen.",
            "Joe picked up the milk.",
            "Joe travelled to the office.",
            "Joe left the milk.",
            "Joe went to the bathroom.",
        ],
        &[
            ("Where is the milk now?", "office", &[4, 3], 6),
            ("Where is Joe?", "bathroom", &[5], 6),
            ("Where was Joe before the office?", "kitchen", &[3, 0], 6),
        ],
    )
}

/// The ring story, whose names and places never occur in simulated data.
pub fn ring_story() -> Story {
    fixture(
        &[
            "Bilbo travelled to the cave.",
            "Gollum dropped the ring there.",
            "Bilbo took the ring.",
            "Bilbo went back to the Shire.",
            "Bilbo left the ring there.",
            "Frodo got the ring.",
            "Frodo journeyed to Mount-Doom.",
            "Frodo dropped the ring there.",
            "Sauron died.",
            "Frodo went back to the Shire.",
            "Bilbo travelled to the Grey-havens.",
            "The End.",
        ],
        &[
            ("Where is the ring?", "mount-doom", &[7, 6], 12),
            ("Where is Bilbo now?", "grey-havens", &[10], 12),
            ("Where is Frodo now?", "shire", &[9], 12),
        ],
    )
}
