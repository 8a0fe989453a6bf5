//! Margin-ranking SGD for the retrieval and response scorers, the stream
//! segmenter, and a finite-difference check of the hand-derived gradients.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MemnnError, Result};
use crate::features::{featurize_bag, featurize_time, SparseVector, Stamp, Vocab};
use crate::model::{Episode, MemNN, ModelFlags, Segmenter};
use crate::parallel::{self, Execution};
use crate::scoring::{dot, EmbeddingMatrix, MatrixRole, SegmenterParams};
use crate::simulator::Story;

/// Which triple-score hinges a time-mode retrieval step trains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TimeTerms {
    /// Only the pair the comparison loop evaluates: the older of the true
    /// support and the negative in the first position.
    #[default]
    Scan,
    /// Both orderings of every (true support, negative) pair.
    Both,
}

impl TimeTerms {
    pub fn name(self) -> &'static str {
        match self {
            TimeTerms::Scan => "scan",
            TimeTerms::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scan" => Some(TimeTerms::Scan),
            "both" => Some(TimeTerms::Both),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub epochs: usize,
    /// Negatives sampled per loss term per step.
    pub negatives: usize,
    /// Percentage of word types treated as unseen per example.
    pub dropout: f64,
    pub init_std: f64,
    pub time_terms: TimeTerms,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            learning_rate: 0.01,
            margin: 0.1,
            epochs: 10,
            negatives: 3,
            dropout: 20.0,
            init_std: 0.05,
            time_terms: TimeTerms::Scan,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MemnnError::Config(m.into()));
        if self.dim == 0 || self.epochs == 0 || self.negatives == 0 {
            return bad("dim, epochs and negatives must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be finite and non-negative");
        }
        if !(0.0..=100.0).contains(&self.dropout) {
            return bad("dropout must be a percentage");
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return bad("init_std must be finite and non-negative");
        }
        Ok(())
    }
}

/// One labelled question with the memory it is asked against.
#[derive(Clone, Copy, Debug)]
pub struct SupervisedExample<'a> {
    pub memory: &'a [Vec<String>],
    pub question: &'a [String],
    pub answer: &'a str,
    pub supports: &'a [usize],
    pub story: usize,
}

pub fn examples(stories: &[Story]) -> Vec<SupervisedExample<'_>> {
    stories
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            s.questions.iter().map(move |q| SupervisedExample {
                memory: s.memory_for(q),
                question: &q.tokens,
                answer: &q.answer,
                supports: &q.supports,
                story: i,
            })
        })
        .collect()
}

/// Dictionary over every statement, question and answer.
pub fn build_vocab(stories: &[Story]) -> Result<Vocab> {
    let answers: Vec<Vec<String>> = stories
        .iter()
        .flat_map(|s| s.questions.iter().map(|q| vec![q.answer.clone()]))
        .collect();
    Vocab::build(
        stories
            .iter()
            .flat_map(|s| s.statements.iter().chain(s.questions.iter().map(|q| &q.tokens)))
            .chain(answers.iter())
            .map(Vec::as_slice),
    )
}

/// Which trained matrix a term scores with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Support,
    Response,
}

/// One hinge `max(0, margin + sign · (aᵀ Uᵀ U z + λ aᵀ z))`.
#[derive(Clone, Debug, PartialEq)]
pub struct HingeTerm {
    pub target: Target,
    pub query: SparseVector,
    pub z: SparseVector,
    pub sign: f64,
    pub margin: f64,
    pub lambda: f64,
}

impl HingeTerm {
    /// Value before clipping at zero.
    pub fn raw(&self, u: &EmbeddingMatrix) -> Result<f64> {
        let s = dot(&u.embed(&self.query)?, &u.embed(&self.z)?);
        let lin = if self.lambda == 0.0 {
            0.0
        } else {
            self.lambda * self.query.dot(&self.z)
        };
        Ok(self.margin + self.sign * (s + lin))
    }

    pub fn value(&self, u: &EmbeddingMatrix) -> Result<f64> {
        Ok(self.raw(u)?.max(0.0))
    }
}

pub fn matrix_for(model: &MemNN, t: Target) -> &EmbeddingMatrix {
    match t {
        Target::Support => model.support_matrix(),
        Target::Response => &model.u_r,
    }
}

fn matrix_for_mut(model: &mut MemNN, t: Target) -> &mut EmbeddingMatrix {
    match t {
        Target::Support => model.support_matrix_mut(),
        Target::Response => &mut model.u_r,
    }
}

/// Sampled negatives for one example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Negatives {
    pub hop1: Vec<usize>,
    pub hop2: Vec<usize>,
    pub words: Vec<String>,
}

/// Labelled (o1, o2) for an example. A single-support example uses o1 again
/// at the second hop unless the model forbids repeating it.
pub fn labelled_supports(flags: &ModelFlags, supports: &[usize]) -> Result<(usize, Option<usize>)> {
    let o1 = *supports.first().ok_or(MemnnError::Config("example without supports".into()))?;
    let o2 = match (flags.hops, supports.get(1)) {
        (1, _) => None,
        (_, Some(&o2)) => Some(o2),
        (_, None) if flags.exclude_first => None,
        (_, None) => Some(o1),
    };
    Ok((o1, o2))
}

/// Uniform negatives: slots other than the labelled support at each hop and
/// response candidates other than the answer. Degenerate pools give none.
pub fn sample_negatives<R: Rng + ?Sized>(ep: &Episode<'_>, ex: &SupervisedExample<'_>, count: usize, rng: &mut R) -> Result<Negatives> {
    let flags = ep.model().flags;
    let (o1, o2) = labelled_supports(&flags, ex.supports)?;
    let n = ex.memory.len();
    let ok1 = |i: usize| i != o1;
    let ok2 = |i: usize| Some(i) != o2 && !(flags.exclude_first && i == o1);
    let draw = |ok: &dyn Fn(usize) -> bool, rng: &mut R| -> Vec<usize> {
        if !(0..n).any(ok) {
            return Vec::new();
        }
        (0..count)
            .map(|_| loop {
                let i = rng.random_range(0..n);
                if ok(i) {
                    break i;
                }
            })
            .collect()
    };
    let hop1 = draw(&ok1, rng);
    let hop2 = if o2.is_some() { draw(&ok2, rng) } else { Vec::new() };
    let words: Vec<String> = ep.response_candidates().into_iter().filter(|w| w != ex.answer).collect();
    let words = if words.is_empty() {
        Vec::new()
    } else {
        (0..count).map(|_| words.choose(rng).unwrap().clone()).collect()
    };
    Ok(Negatives { hop1, hop2, words })
}

/// Retrieval terms for one hop: a pairwise hinge without time features,
/// otherwise the triple-score hinges selected by `time_terms`.
#[allow(clippy::too_many_arguments)]
fn hop_terms(
    ep: &Episode<'_>,
    ex: &SupervisedExample<'_>,
    prev: &[usize],
    truth: usize,
    negs: &[usize],
    margin: f64,
    time_terms: TimeTerms,
    out: &mut Vec<HingeTerm>,
) -> Result<()> {
    let model = ep.model();
    let lambda = model.flags.lambda;
    let xs = ep.x_side(ex.question, prev)?;
    let fx = ep.query_vec(ex.question, prev)?;
    let ft = ep.memory_vec(truth, &xs)?;
    for &neg in negs {
        let fn_ = ep.memory_vec(neg, &xs)?;
        if model.flags.time {
            let stamp = prev.last().map_or(Stamp::Query, |&s| Stamp::Slot(s));
            let fwd = ft.sub(&fn_).with_time(&model.layout, featurize_time(stamp, truth, neg))?;
            let rev = fn_.sub(&ft).with_time(&model.layout, featurize_time(stamp, neg, truth))?;
            let (first, second) = match time_terms {
                TimeTerms::Both => (true, true),
                TimeTerms::Scan => (truth < neg, truth > neg),
            };
            if first {
                out.push(HingeTerm {
                    target: Target::Support,
                    query: fx.clone(),
                    z: fwd,
                    sign: -1.0,
                    margin,
                    lambda,
                });
            }
            if second {
                out.push(HingeTerm {
                    target: Target::Support,
                    query: fx.clone(),
                    z: rev,
                    sign: 1.0,
                    margin,
                    lambda,
                });
            }
        } else {
            out.push(HingeTerm {
                target: Target::Support,
                query: fx.clone(),
                z: fn_.sub(&ft),
                sign: 1.0,
                margin,
                lambda,
            });
        }
    }
    Ok(())
}

/// All hinge terms of one example: retrieval terms per hop (pairwise, or
/// triple-score terms in time mode) and the response term.
pub fn hinge_terms(
    ep: &Episode<'_>,
    ex: &SupervisedExample<'_>,
    negs: &Negatives,
    margin: f64,
    time_terms: TimeTerms,
) -> Result<Vec<HingeTerm>> {
    let flags = ep.model().flags;
    let (o1, o2) = labelled_supports(&flags, ex.supports)?;
    let mut out = Vec::new();
    hop_terms(ep, ex, &[], o1, &negs.hop1, margin, time_terms, &mut out)?;
    let mut used = vec![o1];
    if let Some(o2) = o2 {
        hop_terms(ep, ex, &[o1], o2, &negs.hop2, margin, time_terms, &mut out)?;
        used.push(o2);
    }
    let xs = ep.x_side(ex.question, &used)?;
    let fx = ep.query_vec(ex.question, &used)?;
    let fr = ep.word_vec(ex.answer, &xs)?;
    for w in &negs.words {
        out.push(HingeTerm {
            target: Target::Response,
            query: fx.clone(),
            z: ep.word_vec(w, &xs)?.sub(&fr),
            sign: 1.0,
            margin,
            lambda: flags.lambda,
        });
    }
    Ok(out)
}

/// Column gradients of a set of terms, keyed by (matrix, column).
pub type Gradient = BTreeMap<(Target, usize), Vec<f64>>;

/// Total clipped loss and its gradient. An active term contributes
/// `sign · (U z aᵀ + U a zᵀ)`.
pub fn loss_and_gradient(model: &MemNN, terms: &[HingeTerm]) -> Result<(f64, Gradient)> {
    let mut loss = 0.0;
    let mut grad: Gradient = BTreeMap::new();
    for t in terms {
        let u = matrix_for(model, t.target);
        let ua = u.embed(&t.query)?;
        let uz = u.embed(&t.z)?;
        let lin = if t.lambda == 0.0 { 0.0 } else { t.lambda * t.query.dot(&t.z) };
        let v = t.margin + t.sign * (dot(&ua, &uz) + lin);
        if v <= 0.0 {
            continue;
        }
        loss += v;
        let rows = u.rows();
        for (vec, other) in [(&t.query, &uz), (&t.z, &ua)] {
            for &(j, x) in vec.entries() {
                let g = grad.entry((t.target, j)).or_insert_with(|| vec![0.0; rows]);
                for (gi, oi) in g.iter_mut().zip(other.iter()) {
                    *gi += t.sign * x * oi;
                }
            }
        }
    }
    Ok((loss, grad))
}

fn apply_gradient(model: &mut MemNN, grad: &Gradient, lr: f64) {
    for (&(target, col), g) in grad {
        let c = matrix_for_mut(model, target).column_mut(col);
        for (ci, gi) in c.iter_mut().zip(g) {
            *ci -= lr * gi;
        }
    }
}

/// Word types of the example that are treated as unseen for this step;
/// each type is dropped independently with probability `d`%.
pub fn unseen_dropout<R: Rng + ?Sized>(vocab: &Vocab, ex: &SupervisedExample<'_>, d: f64, rng: &mut R) -> HashSet<String> {
    let mut types: Vec<&str> = ex
        .memory
        .iter()
        .flatten()
        .chain(ex.question)
        .map(String::as_str)
        .filter(|t| vocab.contains(t))
        .collect();
    types.sort_unstable();
    types.dedup();
    let p = d / 100.0;
    types
        .into_iter()
        .filter(|_| p > 0.0 && rng.random_bool(p.min(1.0)))
        .map(String::from)
        .collect()
}

/// Episode for one training step, with dropout applied when the model
/// handles unseen words.
pub fn training_episode<'a, R: Rng + ?Sized>(model: &'a MemNN, ex: &SupervisedExample<'a>, cfg: &TrainConfig, rng: &mut R) -> Episode<'a> {
    let dropped = (model.flags.unseen && cfg.dropout > 0.0).then(|| unseen_dropout(&model.vocab, ex, cfg.dropout, rng));
    model.episode_with(ex.memory, dropped)
}

fn check_examples(examples: &[SupervisedExample<'_>]) -> Result<()> {
    if examples.is_empty() {
        return Err(MemnnError::NoExamples);
    }
    for ex in examples {
        if let Some(&s) = ex.supports.iter().find(|&&s| s >= ex.memory.len()) {
            return Err(MemnnError::InvalidSlot(s));
        }
    }
    Ok(())
}

/// One pass over `examples` in a seeded shuffle. Returns the mean loss
/// measured before each example's update.
pub fn sgd_epoch<R: Rng + ?Sized>(
    model: &mut MemNN,
    examples: &[SupervisedExample<'_>],
    cfg: &TrainConfig,
    epoch: usize,
    rng: &mut R,
) -> Result<f64> {
    check_examples(examples)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for (step, &i) in order.iter().enumerate() {
        let ex = &examples[i];
        let (loss, grad) = {
            let ep = training_episode(model, ex, cfg, rng);
            let negs = sample_negatives(&ep, ex, cfg.negatives, rng)?;
            let terms = hinge_terms(&ep, ex, &negs, cfg.margin, cfg.time_terms)?;
            loss_and_gradient(model, &terms)?
        };
        if !loss.is_finite() {
            return Err(MemnnError::NonFiniteLoss { epoch, example: step });
        }
        total += loss;
        apply_gradient(model, &grad, cfg.learning_rate);
    }
    Ok(total / examples.len() as f64)
}

/// Fraction of examples answered correctly.
pub fn accuracy(model: &MemNN, examples: &[SupervisedExample<'_>], exec: Execution) -> Result<f64> {
    if examples.is_empty() {
        return Err(MemnnError::NoExamples);
    }
    let hits = parallel::map_slice(exec, examples, |ex| {
        model.answer(ex.memory, ex.question, None).map(|a| a.word == ex.answer)
    });
    let mut n = 0usize;
    for h in hits {
        n += usize::from(h?);
    }
    Ok(n as f64 / examples.len() as f64)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    /// Training accuracy after each epoch, when tracked.
    pub accuracy: Vec<f64>,
}

/// Run `cfg.epochs` epochs of SGD on `model`.
pub fn train(model: &mut MemNN, examples: &[SupervisedExample<'_>], cfg: &TrainConfig, track_accuracy: bool) -> Result<TrainReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        report.losses.push(sgd_epoch(model, examples, cfg, epoch, &mut rng)?);
        if track_accuracy {
            report.accuracy.push(accuracy(model, examples, Execution::Parallel)?);
        }
    }
    Ok(report)
}

/// Fresh model initialised from `cfg.seed`.
pub fn init_model(vocab: Vocab, flags: ModelFlags, cfg: &TrainConfig) -> Result<MemNN> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    MemNN::new(vocab, flags, cfg.dim, cfg.init_std, &mut rng)
}

/// Dictionary, initialisation and training in one call.
pub fn fit(stories: &[Story], flags: ModelFlags, cfg: &TrainConfig, track_accuracy: bool) -> Result<(MemNN, TrainReport)> {
    let vocab = build_vocab(stories)?;
    let mut model = init_model(vocab, flags, cfg)?;
    let report = train(&mut model, &examples(stories), cfg, track_accuracy)?;
    Ok((model, report))
}

/// Negatives for segmenter training: every proper prefix of the positives,
/// and every prefix of the questions short of the "?".
pub fn segment_negatives(positives: &[Vec<String>], questions: &[Vec<String>]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for p in positives {
        for k in 1..p.len() {
            out.push(p[..k].to_vec());
        }
    }
    for q in questions {
        let end = if q.last().map(String::as_str) == Some("?") {
            q.len() - 1
        } else {
            q.len()
        };
        for k in 1..=end {
            out.push(q[..k].to_vec());
        }
    }
    out
}

/// Hinge-loss SGD for the segmenter: complete segments should score above
/// the margin, prefixes below its negative. Each step pairs one positive
/// with one sampled negative.
pub fn train_segmenter(positives: &[Vec<String>], negatives: &[Vec<String>], vocab: Vocab, cfg: &TrainConfig) -> Result<Segmenter> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(MemnnError::NoExamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let u = EmbeddingMatrix::random(cfg.dim, vocab.len(), MatrixRole::Segmenter, cfg.init_std, &mut rng);
    let w: Vec<f64> = (0..cfg.dim).map(|_| rng.random_range(-cfg.init_std..=cfg.init_std)).collect();
    let mut seg = Segmenter::new(SegmenterParams::new(u, w, cfg.margin)?, vocab)?;
    let pos: Vec<SparseVector> = positives.iter().map(|p| featurize_bag(p, &seg.vocab)).collect();
    let neg: Vec<SparseVector> = negatives.iter().map(|p| featurize_bag(p, &seg.vocab)).collect();
    let mut order: Vec<usize> = (0..pos.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            segmenter_step(&mut seg.params, &pos[i], 1.0, cfg.learning_rate);
            if let Some(n) = neg.choose(&mut rng) {
                segmenter_step(&mut seg.params, n, -1.0, cfg.learning_rate);
            }
        }
    }
    Ok(seg)
}

/// One hinge step on `max(0, margin − label · wᵀ U φ)`.
fn segmenter_step(p: &mut SegmenterParams, phi: &SparseVector, label: f64, lr: f64) {
    let e = p.u.embed(phi).expect("segmenter dims");
    let s = dot(&p.w, &e);
    if p.margin - label * s <= 0.0 {
        return;
    }
    let w_old = p.w.clone();
    for (wi, ei) in p.w.iter_mut().zip(&e) {
        *wi += lr * label * ei;
    }
    for &(j, x) in phi.entries() {
        for (c, wi) in p.u.column_mut(j).iter_mut().zip(&w_old) {
            *c += lr * label * x * wi;
        }
    }
}

/// Central-difference check of [`loss_and_gradient`] on every entry the
/// terms touch. Returns the largest `|analytic − numeric| / max(1, |numeric|)`.
/// Fails when a term lies close enough to its hinge point that the
/// perturbation could cross it.
pub fn finite_difference_check(model: &MemNN, terms: &[HingeTerm], eps: f64) -> Result<f64> {
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(MemnnError::Config("eps must lie in [1e-7, 1e-4]".into()));
    }
    for t in terms {
        let u = matrix_for(model, t.target);
        let ua = u.embed(&t.query)?;
        let uz = u.embed(&t.z)?;
        let na: f64 = ua.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        let nz: f64 = uz.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        let sens = (t.query.entries().iter().map(|e| e.1.abs()).sum::<f64>() * nz
            + t.z.entries().iter().map(|e| e.1.abs()).sum::<f64>() * na)
            .max(1.0);
        if t.raw(u)?.abs() < 10.0 * eps * sens {
            return Err(MemnnError::Config("term too close to its hinge point".into()));
        }
    }
    let (_, grad) = loss_and_gradient(model, terms)?;
    let mut touched: BTreeMap<(Target, usize), ()> = BTreeMap::new();
    for t in terms {
        for &(j, _) in t.query.entries().iter().chain(t.z.entries()) {
            touched.insert((t.target, j), ());
        }
    }
    let mut work = model.clone();
    let loss_of = |m: &MemNN| -> Result<f64> { Ok(loss_and_gradient(m, terms)?.0) };
    let mut worst: f64 = 0.0;
    for &(target, col) in touched.keys() {
        for r in 0..model.dim() {
            let orig = matrix_for(model, target).get(r, col);
            matrix_for_mut(&mut work, target).set(r, col, orig + eps);
            let up = loss_of(&work)?;
            matrix_for_mut(&mut work, target).set(r, col, orig - eps);
            let down = loss_of(&work)?;
            matrix_for_mut(&mut work, target).set(r, col, orig);
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grad.get(&(target, col)).map_or(0.0, |g| g[r]);
            worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}
