//! Candidate pruning on a large synthetic store queried through synonyms.
//!
//! Each slot states a fact `subject relation object`. Every subject and
//! relation has several interchangeable surface forms, and both facts and
//! queries pick a form at random. A query names the subject and relation of
//! one slot; with probability `paraphrase` it uses forms that appear nowhere
//! in that slot, which an exact-word index cannot see past.

use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::features::Vocab;
use crate::harness::config::Hashing;
use crate::harness::experiment::Hasher;
use crate::memory::candidates;
use crate::model::{MemNN, ModelFlags};
use crate::parallel::{self, Execution};
use crate::training::{init_model, train, SupervisedExample, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub subjects: usize,
    pub relations: usize,
    /// Distinct relations stated per subject; slots = subjects × this.
    pub per_subject: usize,
    pub objects: usize,
    /// Surface forms per subject and per relation.
    pub forms: usize,
    pub paraphrase: f64,
    pub train_queries: usize,
    pub test_queries: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 200,
            relations: 100,
            per_subject: 50,
            objects: 200,
            forms: 2,
            paraphrase: 0.3,
            train_queries: 20000,
            test_queries: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthQuery {
    pub tokens: Vec<String>,
    pub slot: usize,
    pub answer: String,
    pub paraphrased: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthStore {
    pub memory: Vec<Vec<String>>,
    /// (subject, relation, form of each) behind every slot.
    keys: Vec<(usize, usize, usize, usize)>,
    pub train: Vec<SynthQuery>,
    pub test: Vec<SynthQuery>,
}

fn subject(i: usize, f: usize) -> String {
    format!("s{i}_{f}")
}

fn relation(i: usize, f: usize) -> String {
    format!("r{i}_{f}")
}

fn other_form<R: Rng + ?Sized>(f: usize, forms: usize, rng: &mut R) -> usize {
    (f + rng.random_range(1..forms)) % forms
}

fn query<R: Rng + ?Sized>(store: &SynthStore, cfg: &SynthConfig, slot: usize, rng: &mut R) -> SynthQuery {
    let (s, r, sf, rf) = store.keys[slot];
    let paraphrased = cfg.forms > 1 && rng.random_bool(cfg.paraphrase);
    let (qs, qr) = if paraphrased {
        (other_form(sf, cfg.forms, rng), other_form(rf, cfg.forms, rng))
    } else {
        (sf, rf)
    };
    SynthQuery {
        tokens: vec![subject(s, qs), relation(r, qr)],
        slot,
        answer: store.memory[slot][2].clone(),
        paraphrased,
    }
}

pub fn synth_store(cfg: &SynthConfig) -> SynthStore {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = SynthStore {
        memory: Vec::new(),
        keys: Vec::new(),
        train: Vec::new(),
        test: Vec::new(),
    };
    let per = cfg.per_subject.min(cfg.relations);
    for s in 0..cfg.subjects {
        for r in sample(&mut rng, cfg.relations, per) {
            let (sf, rf) = (rng.random_range(0..cfg.forms), rng.random_range(0..cfg.forms));
            let o = format!("o{}", rng.random_range(0..cfg.objects));
            store.memory.push(vec![subject(s, sf), relation(r, rf), o]);
            store.keys.push((s, r, sf, rf));
        }
    }
    let n = store.memory.len();
    store.train = (0..cfg.train_queries)
        .map(|_| query(&store, cfg, rng.random_range(0..n), &mut rng))
        .collect();
    store.test = (0..cfg.test_queries)
        .map(|_| query(&store, cfg, rng.random_range(0..n), &mut rng))
        .collect();
    store
}

/// Training settings for the synthetic store. Subjects are seen far less
/// often than simulator words, so the step size is larger.
pub fn synth_train_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: 0.05,
        seed,
        ..Default::default()
    }
}

/// One-hop, untimed model trained to retrieve the queried slot.
pub fn train_synth(store: &SynthStore, cfg: &TrainConfig) -> Result<MemNN> {
    let vocab = Vocab::build(
        store
            .memory
            .iter()
            .map(Vec::as_slice)
            .chain(store.train.iter().map(|q| q.tokens.as_slice())),
    )?;
    let flags = ModelFlags {
        hops: 1,
        time: false,
        ..Default::default()
    };
    let mut model = init_model(vocab, flags, cfg)?;
    let supports: Vec<[usize; 1]> = store.train.iter().map(|q| [q.slot]).collect();
    let examples: Vec<SupervisedExample<'_>> = store
        .train
        .iter()
        .zip(&supports)
        .map(|(q, sup)| SupervisedExample {
            memory: &store.memory,
            question: &q.tokens,
            answer: &q.answer,
            supports: sup,
            story: 0,
        })
        .collect();
    train(&mut model, &examples, cfg, false)?;
    Ok(model)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HashRow {
    pub hashing: Hashing,
    pub mean_candidates: f64,
    pub speedup: f64,
    /// Mean seconds per query spent collecting candidates.
    pub lookup_secs: f64,
    /// Percent of queries whose retrieved slot is the queried one.
    pub accuracy: f64,
    /// Same, over paraphrased queries only.
    pub paraphrase_accuracy: f64,
}

/// Retrieval over the test queries for each hashing mode.
pub fn hash_bench(model: &MemNN, store: &SynthStore, modes: &[Hashing], seed: u64, exec: Execution) -> Result<Vec<HashRow>> {
    let ep = model.episode(&store.memory);
    let n = store.memory.len();
    let mut rows = Vec::new();
    for &mode in modes {
        let hasher = Hasher::new(model, mode, seed, exec)?;
        let index = hasher.index(&store.memory, &model.vocab);
        let t = Instant::now();
        let cands: Vec<Vec<usize>> = store
            .test
            .iter()
            .map(|q| candidates(n, index.as_ref(), &model.vocab, &[&q.tokens]))
            .collect();
        let lookup_secs = t.elapsed().as_secs_f64() / store.test.len().max(1) as f64;
        let hits = parallel::map_range(exec, store.test.len(), |i| -> Result<bool> {
            let c = &cands[i];
            Ok(!c.is_empty() && ep.support_hop1(&store.test[i].tokens, c)? == store.test[i].slot)
        });
        let hits = hits.into_iter().collect::<Result<Vec<bool>>>()?;
        let rate = |keep: &dyn Fn(&SynthQuery) -> bool| {
            let (mut k, mut t) = (0usize, 0usize);
            for (q, &h) in store.test.iter().zip(&hits) {
                if keep(q) {
                    t += 1;
                    k += usize::from(h);
                }
            }
            100.0 * k as f64 / t.max(1) as f64
        };
        let mean_candidates = cands.iter().map(|c| c.len() as f64).sum::<f64>() / cands.len().max(1) as f64;
        rows.push(HashRow {
            hashing: mode,
            mean_candidates,
            speedup: n as f64 / mean_candidates.max(f64::MIN_POSITIVE),
            lookup_secs,
            accuracy: rate(&|_| true),
            paraphrase_accuracy: rate(&|q| q.paraphrased),
        });
    }
    Ok(rows)
}

pub fn rows_table(rows: &[HashRow]) -> String {
    let mut s = format!(
        "{:<12} {:>12} {:>9} {:>12} {:>9} {:>11}\n",
        "hashing", "candidates", "speedup", "lookup(us)", "acc(%)", "para(%)"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:>12.1} {:>8.1}x {:>12.2} {:>9.2} {:>11.2}\n",
            r.hashing.name(),
            r.mean_candidates,
            r.speedup,
            r.lookup_secs * 1e6,
            r.accuracy,
            r.paraphrase_accuracy
        ));
    }
    s
}
