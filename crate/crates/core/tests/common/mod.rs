//! Second, text-only interpreter of simulated stories.
//!
//! Statements are parsed back from their words, so nothing here shares code
//! with the simulator's own transition function or answer oracle.

#![allow(dead_code)]

use std::collections::HashMap;

use memnn::simulator::{Location, Question, Story};

const GO: [&str; 5] = ["went to", "journeyed to", "travelled to", "moved to", "went back to"];
const GET: [&str; 4] = ["picked up", "got", "grabbed", "took"];
const DROP: [&str; 4] = ["dropped", "left", "discarded", "put down"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Parsed {
    Go(String, String),
    Get(String, String),
    Drop(String, String),
}

impl Parsed {
    fn actor(&self) -> &str {
        match self {
            Parsed::Go(a, _) | Parsed::Get(a, _) | Parsed::Drop(a, _) => a,
        }
    }
}

fn strip_verb<'a>(rest: &'a [String], forms: &[&str]) -> Option<&'a [String]> {
    forms.iter().find_map(|f| {
        let fw: Vec<&str> = f.split(' ').collect();
        let head: Vec<&str> = rest.iter().take(fw.len()).map(String::as_str).collect();
        (head == fw).then(|| &rest[fw.len()..])
    })
}

/// `actor verb [the] noun [there]`.
pub fn parse_statement(tokens: &[String]) -> Result<Parsed, String> {
    let (actor, rest) = tokens.split_first().ok_or("empty statement")?;
    let noun = |tail: &[String], allow_there: bool| -> Result<String, String> {
        let mut t = tail;
        if t.first().map(String::as_str) == Some("the") {
            t = &t[1..];
        }
        if allow_there && t.last().map(String::as_str) == Some("there") {
            t = &t[..t.len() - 1];
        }
        match t {
            [n] => Ok(n.clone()),
            _ => Err(format!("cannot read a noun from {tail:?}")),
        }
    };
    // "went back to" must be tried before "went to" fails on "back".
    if let Some(tail) = strip_verb(rest, &GO) {
        return Ok(Parsed::Go(actor.clone(), noun(tail, false)?));
    }
    if let Some(tail) = strip_verb(rest, &GET) {
        return Ok(Parsed::Get(actor.clone(), noun(tail, true)?));
    }
    if let Some(tail) = strip_verb(rest, &DROP) {
        return Ok(Parsed::Drop(actor.clone(), noun(tail, true)?));
    }
    Err(format!("unknown verb in {tokens:?}"))
}

#[derive(Clone, Debug)]
enum Place {
    Room(String),
    Held(String),
}

/// World state tracked by names.
#[derive(Clone, Debug)]
pub struct TextWorld {
    actor_room: HashMap<String, String>,
    /// Rooms each actor has been in, oldest first, starting with its prior.
    visits: HashMap<String, Vec<String>>,
    object: HashMap<String, Place>,
}

impl TextWorld {
    pub fn from_story(story: &Story) -> Self {
        let w = story.world.as_ref().expect("generated story carries its initial world");
        let mut actor_room = HashMap::new();
        let mut visits = HashMap::new();
        for (a, &r) in w.actors.iter().zip(&w.actor_room) {
            actor_room.insert(a.clone(), w.rooms[r].clone());
            visits.insert(a.clone(), vec![w.rooms[r].clone()]);
        }
        let object = w
            .objects
            .iter()
            .zip(&w.object_at)
            .map(|(o, l)| {
                let p = match *l {
                    Location::Room(r) => Place::Room(w.rooms[r].clone()),
                    Location::Actor(a) => Place::Held(w.actors[a].clone()),
                };
                (o.clone(), p)
            })
            .collect();
        TextWorld {
            actor_room,
            visits,
            object,
        }
    }

    fn room_of_actor(&self, a: &str) -> Result<&String, String> {
        self.actor_room.get(a).ok_or_else(|| format!("unknown actor {a}"))
    }

    fn object_room(&self, o: &str) -> Result<String, String> {
        match self.object.get(o).ok_or_else(|| format!("unknown object {o}"))? {
            Place::Room(r) => Ok(r.clone()),
            Place::Held(a) => self.room_of_actor(a).cloned(),
        }
    }

    /// The world rules: no going where one already is; only get an unheld
    /// object in one's own room; only drop what one holds.
    pub fn check(&self, p: &Parsed) -> Result<(), String> {
        let here = self.room_of_actor(p.actor())?;
        match p {
            Parsed::Go(_, r) if r == here => Err(format!("{p:?}: already there")),
            Parsed::Get(a, o) => match self.object.get(o) {
                Some(Place::Room(r)) if r == here => Ok(()),
                Some(Place::Room(_)) => Err(format!("{p:?}: object elsewhere")),
                Some(Place::Held(h)) => Err(format!("{p:?}: already held by {h} ({a})")),
                None => Err(format!("{p:?}: unknown object")),
            },
            Parsed::Drop(a, o) => match self.object.get(o) {
                Some(Place::Held(h)) if h == a => Ok(()),
                _ => Err(format!("{p:?}: not holding it")),
            },
            Parsed::Go(..) => Ok(()),
        }
    }

    /// Apply without checking legality.
    pub fn apply(&mut self, p: &Parsed) -> Result<(), String> {
        match p {
            Parsed::Go(a, r) => {
                self.actor_room.insert(a.clone(), r.clone());
                self.visits.get_mut(a).ok_or("unknown actor")?.push(r.clone());
            }
            Parsed::Get(a, o) => {
                self.object.insert(o.clone(), Place::Held(a.clone()));
            }
            Parsed::Drop(a, o) => {
                let r = self.room_of_actor(a)?.clone();
                self.object.insert(o.clone(), Place::Room(r));
            }
        }
        Ok(())
    }

    /// Answer a question from its words.
    pub fn answer(&self, tokens: &[String]) -> Result<String, String> {
        let t: Vec<&str> = tokens.iter().map(String::as_str).collect();
        match t.as_slice() {
            ["where", "was", a, "before", "the", r, "?"] => {
                let v = self.visits.get(*a).ok_or_else(|| format!("unknown actor {a}"))?;
                let i = v.iter().rposition(|x| x == r).filter(|&i| i > 0).ok_or("never entered that room")?;
                Ok(v[i - 1].clone())
            }
            ["where", "is", "the", o, "?"] | ["where", "is", "the", o, "now", "?"] => self.object_room(o),
            ["where", "is", a, "?"] | ["where", "is", a, "now", "?"] => self.room_of_actor(a).cloned(),
            _ => Err(format!("unrecognised question {t:?}")),
        }
    }
}

#[derive(Debug, Default)]
pub struct Audit {
    pub statements: usize,
    pub questions: usize,
    pub failures: Vec<String>,
}

impl Audit {
    fn fail(&mut self, s: String) {
        if self.failures.len() < 20 {
            self.failures.push(s);
        }
    }
}

fn check_question(story: &Story, q: &Question, full: &TextWorld, audit: &mut Audit) {
    match full.answer(&q.tokens) {
        Ok(a) if a == q.answer => {}
        other => audit.fail(format!("{:?}: replay gives {other:?}, label {}", q.tokens, q.answer)),
    }
    // The labelled supports alone, replayed in story order over the priors,
    // must determine the same answer.
    let mut sup = q.supports.clone();
    sup.sort_unstable();
    let mut mini = TextWorld::from_story(story);
    for &i in &sup {
        if i >= q.position {
            audit.fail(format!("{:?}: support {i} after the question", q.tokens));
            return;
        }
        match parse_statement(&story.statements[i]) {
            Ok(p) => mini.apply(&p).unwrap_or_else(|e| audit.fail(e)),
            Err(e) => audit.fail(e),
        }
    }
    match mini.answer(&q.tokens) {
        Ok(a) if a == q.answer => {}
        other => audit.fail(format!(
            "{:?}: supports {:?} give {other:?}, label {}",
            q.tokens, q.supports, q.answer
        )),
    }
}

/// Replay every story from its text, checking each statement against the
/// world rules and each question against the replayed state and against a
/// replay of its supporting statements alone.
pub fn audit_stories(stories: &[Story]) -> Audit {
    let mut audit = Audit::default();
    for story in stories {
        let mut w = TextWorld::from_story(story);
        let mut qi = 0;
        for pos in 0..=story.statements.len() {
            while qi < story.questions.len() && story.questions[qi].position == pos {
                check_question(story, &story.questions[qi], &w, &mut audit);
                audit.questions += 1;
                qi += 1;
            }
            let Some(st) = story.statements.get(pos) else { break };
            audit.statements += 1;
            match parse_statement(st) {
                Ok(p) => {
                    if let Err(e) = w.check(&p) {
                        audit.fail(e);
                    }
                    w.apply(&p).unwrap_or_else(|e| audit.fail(e));
                }
                Err(e) => audit.fail(e),
            }
        }
        if qi != story.questions.len() {
            audit.fail("questions out of order".into());
        }
    }
    audit
}
