//! Training, evaluation, checkpoints and learning curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MemnnError, Result};
use crate::features::Vocab;
use crate::harness::config::{ExperimentConfig, Hashing, InputMode};
use crate::memory::{word_hash, HashIndex, WordClusters};
use crate::model::{MemNN, Segmenter, StreamItem};
use crate::parallel::{self, Execution};
use crate::scoring::{EmbeddingMatrix, MatrixRole, SegmenterParams};
use crate::simulator::{self, QuestionKind, SpanKind, Story, StreamStory};
use crate::training::{self, labelled_supports, segment_negatives, train_segmenter, TrainReport};

/// Train and test stories for `cfg`, with the training questions cut down
/// to `cfg.train_questions` when set.
pub fn generate(cfg: &ExperimentConfig) -> Result<(Vec<Story>, Vec<Story>)> {
    let (train, test) = simulator::generate_dataset(&cfg.dataset())?;
    let train = match cfg.train_questions {
        Some(n) => simulator::subsample_questions(&train, n),
        None => train,
    };
    Ok((train, test))
}

/// Streams for a list of stories, seeded.
pub fn streams(stories: &[Story], seed: u64) -> Vec<StreamStory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5354_5245_414d);
    stories.iter().map(|s| simulator::to_stream(s, &mut rng)).collect()
}

/// Train per `cfg`. In stream mode the answering model is trained on the
/// gold segments (connectives included) and a segmenter is trained
/// alongside it.
pub fn run_train(cfg: &ExperimentConfig, train: &[Story]) -> Result<(MemNN, TrainReport)> {
    cfg.validate()?;
    match cfg.input {
        InputMode::Sentence => training::fit(train, cfg.flags, &cfg.train, true),
        InputMode::Stream => {
            let st = streams(train, cfg.data_seed);
            let segmented: Vec<Story> = train.iter().zip(&st).map(|(s, t)| simulator::with_segments(s, t)).collect();
            let (mut model, report) = training::fit(&segmented, cfg.flags, &cfg.train, true)?;
            model.segmenter = Some(fit_segmenter(&st, cfg)?);
            Ok((model, report))
        }
    }
}

pub fn fit_segmenter(streams: &[StreamStory], cfg: &ExperimentConfig) -> Result<Segmenter> {
    let pos: Vec<Vec<String>> = streams.iter().flat_map(|s| s.statement_segments()).collect();
    let qs: Vec<Vec<String>> = streams.iter().flat_map(|s| s.question_segments()).collect();
    let neg = segment_negatives(&pos, &qs);
    let vocab = Vocab::build(streams.iter().map(|s| s.words.as_slice()))?;
    train_segmenter(&pos, &neg, vocab, &cfg.train)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuestionRecord {
    pub story: usize,
    pub question: usize,
    pub kind: QuestionKind,
    pub predicted: String,
    pub answer: String,
    pub correct: bool,
    pub supports_correct: bool,
    pub candidates: usize,
    pub memory: usize,
}

#[derive(Clone, Debug, Default)]
pub struct EvalReport {
    pub records: Vec<QuestionRecord>,
    pub wall_clock: Duration,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.records.len()
    }

    pub fn correct(&self) -> usize {
        self.records.iter().filter(|r| r.correct).count()
    }

    /// Answer accuracy in percent.
    pub fn accuracy(&self) -> f64 {
        pct(self.correct(), self.total())
    }

    pub fn support_accuracy(&self) -> f64 {
        pct(self.records.iter().filter(|r| r.supports_correct).count(), self.total())
    }

    pub fn mean_candidates(&self) -> f64 {
        self.records.iter().map(|r| r.candidates as f64).sum::<f64>() / self.total().max(1) as f64
    }

    pub fn mean_memory(&self) -> f64 {
        self.records.iter().map(|r| r.memory as f64).sum::<f64>() / self.total().max(1) as f64
    }

    /// Exhaustive over hashed candidate count.
    pub fn speedup(&self) -> f64 {
        self.mean_memory() / self.mean_candidates().max(f64::MIN_POSITIVE)
    }

    /// (kind, count, accuracy %) for each kind present.
    pub fn by_kind(&self) -> Vec<(QuestionKind, usize, f64)> {
        QuestionKind::ALL
            .iter()
            .filter_map(|&k| {
                let rs: Vec<&QuestionRecord> = self.records.iter().filter(|r| r.kind == k).collect();
                (!rs.is_empty()).then(|| (k, rs.len(), pct(rs.iter().filter(|r| r.correct).count(), rs.len())))
            })
            .collect()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "accuracy {:.2}% ({}/{}), support accuracy {:.2}%",
            self.accuracy(),
            self.correct(),
            self.total(),
            self.support_accuracy()
        );
        for (k, n, a) in self.by_kind() {
            let _ = writeln!(s, "  {:<17} {:>5} questions  {:.2}%", k.name(), n, a);
        }
        let _ = writeln!(
            s,
            "mean candidates {:.2} of {:.2} ({:.2}x), {:.3}s",
            self.mean_candidates(),
            self.mean_memory(),
            self.speedup(),
            self.wall_clock.as_secs_f64()
        );
        s
    }
}

/// Builds the per-question hash index for a hashing mode.
pub struct Hasher {
    mode: Hashing,
    clusters: Option<WordClusters>,
}

impl Hasher {
    pub fn new(model: &MemNN, mode: Hashing, seed: u64, exec: Execution) -> Result<Self> {
        let clusters = match mode {
            Hashing::Cluster(k) => Some(WordClusters::fit(model.support_matrix(), &model.layout, k, seed, exec)?),
            _ => None,
        };
        Ok(Hasher { mode, clusters })
    }

    pub fn index(&self, memory: &[Vec<String>], vocab: &Vocab) -> Option<HashIndex> {
        match self.mode {
            Hashing::None => None,
            Hashing::Word => Some(word_hash(memory, vocab)),
            Hashing::Cluster(_) => self.clusters.as_ref().map(|c| c.index(memory, vocab)),
        }
    }
}

/// Answer every question of `stories`, in parallel across questions.
pub fn run_eval(model: &MemNN, stories: &[Story], hashing: Hashing, seed: u64, exec: Execution) -> Result<EvalReport> {
    let start = Instant::now();
    let hasher = Hasher::new(model, hashing, seed, exec)?;
    let jobs: Vec<(usize, usize)> = stories
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.questions.len()).map(move |j| (i, j)))
        .collect();
    let results = parallel::map_slice(exec, &jobs, |&(si, qi)| -> Result<QuestionRecord> {
        let story = &stories[si];
        let q = &story.questions[qi];
        let memory = story.memory_for(q);
        let index = hasher.index(memory, &model.vocab);
        let (predicted, supports, candidates) = match model.answer(memory, &q.tokens, index.as_ref()) {
            Ok(a) => (a.word, a.supports, a.candidates),
            Err(MemnnError::EmptyCandidates) => (String::new(), Vec::new(), 0),
            Err(e) => return Err(e),
        };
        let (o1, o2) = labelled_supports(&model.flags, &q.supports)?;
        let gold: Vec<usize> = std::iter::once(o1).chain(o2).collect();
        Ok(QuestionRecord {
            story: si,
            question: qi,
            kind: q.kind,
            correct: predicted == q.answer,
            predicted,
            answer: q.answer.clone(),
            supports_correct: supports == gold,
            candidates,
            memory: memory.len(),
        })
    });
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        records,
        wall_clock: start.elapsed(),
    })
}

/// Precision, recall and F1 of predicted boundary positions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundaryScore {
    pub true_pos: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl BoundaryScore {
    pub fn add(&mut self, predicted: &[bool], gold: &[bool]) {
        for (&p, &g) in predicted.iter().zip(gold) {
            self.true_pos += usize::from(p && g);
            self.predicted += usize::from(p);
            self.gold += usize::from(g);
        }
    }

    pub fn precision(&self) -> f64 {
        pct(self.true_pos, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        pct(self.true_pos, self.gold)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct StreamReport {
    pub qa: EvalReport,
    /// Boundaries that end statements; question ends are fixed by "?".
    pub statement_boundaries: BoundaryScore,
}

/// Segment each test story's stream with the model's segmenter, write the
/// emitted statements to memory and answer the questions as they arrive.
pub fn run_stream_eval(model: &MemNN, stories: &[Story], seed: u64, exec: Execution) -> Result<StreamReport> {
    let start = Instant::now();
    let st = streams(stories, seed);
    let jobs: Vec<usize> = (0..stories.len()).collect();
    let per_story = parallel::map_slice(exec, &jobs, |&si| -> Result<(Vec<QuestionRecord>, BoundaryScore)> {
        let story = &stories[si];
        let stream = &st[si];
        let seg = model.segment(&stream.words)?;
        let gold_b: Vec<bool> = {
            let mut b = vec![false; stream.words.len()];
            for &(_, e, k) in &stream.spans {
                if matches!(k, SpanKind::Statement(_)) {
                    b[e - 1] = true;
                }
            }
            b
        };
        let pred_b: Vec<bool> = seg.boundaries.iter().zip(&stream.words).map(|(&b, w)| b && w != "?").collect();
        let mut score = BoundaryScore::default();
        score.add(&pred_b, &gold_b);

        // Spans of the emitted items, in order.
        let mut spans = Vec::with_capacity(seg.items.len());
        let mut start = 0;
        for (i, &b) in seg.boundaries.iter().enumerate() {
            if b {
                spans.push((start, i + 1));
                start = i + 1;
            }
        }
        let gold_span = |k: usize| stream.spans.iter().find(|s| s.2 == SpanKind::Statement(k)).map(|s| (s.0, s.1));
        let mut memory: Vec<Vec<String>> = Vec::new();
        let mut mem_spans = Vec::new();
        let mut records = Vec::new();
        let mut qi = 0;
        for (item, span) in seg.items.iter().zip(spans) {
            match item {
                StreamItem::Statement(t) => {
                    memory.push(t.clone());
                    mem_spans.push(span);
                }
                StreamItem::Question(t) => {
                    let Some(q) = story.questions.get(qi) else { break };
                    let (predicted, supports) = match model.answer(&memory, t, None) {
                        Ok(a) => (a.word, a.supports),
                        Err(MemnnError::EmptyMemory) => (String::new(), Vec::new()),
                        Err(e) => return Err(e),
                    };
                    let (o1, o2) = labelled_supports(&model.flags, &q.supports)?;
                    let gold: Vec<Option<(usize, usize)>> = std::iter::once(o1).chain(o2).map(gold_span).collect();
                    let got: Vec<Option<(usize, usize)>> = supports.iter().map(|&s| Some(mem_spans[s])).collect();
                    records.push(QuestionRecord {
                        story: si,
                        question: qi,
                        kind: q.kind,
                        correct: predicted == q.answer,
                        predicted,
                        answer: q.answer.clone(),
                        supports_correct: got == gold,
                        candidates: memory.len(),
                        memory: memory.len(),
                    });
                    qi += 1;
                }
            }
        }
        Ok((records, score))
    });
    let mut report = StreamReport::default();
    for r in per_story {
        let (recs, score) = r?;
        report.qa.records.extend(recs);
        report.statement_boundaries.true_pos += score.true_pos;
        report.statement_boundaries.predicted += score.predicted;
        report.statement_boundaries.gold += score.gold;
    }
    report.qa.wall_clock = start.elapsed();
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub size: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub seconds: f64,
}

/// Train on the first `size` training questions for each size and evaluate
/// on the full test set.
pub fn learning_curve(cfg: &ExperimentConfig, sizes: &[usize], train: &[Story], test: &[Story]) -> Result<Vec<CurveRow>> {
    let mut rows = Vec::new();
    for &size in sizes {
        let start = Instant::now();
        let sub = simulator::subsample_questions(train, size);
        let (model, report) = training::fit(&sub, cfg.flags, &cfg.train, true)?;
        let eval = run_eval(&model, test, Hashing::None, cfg.train.seed, Execution::Parallel)?;
        rows.push(CurveRow {
            size,
            train_accuracy: 100.0 * report.accuracy.last().copied().unwrap_or(0.0),
            test_accuracy: eval.accuracy(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from("size,train_acc,test_acc,seconds\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.4},{:.4},{:.3}", r.size, r.train_accuracy, r.test_accuracy, r.seconds);
    }
    s
}

pub fn loss_csv(report: &TrainReport) -> String {
    let mut s = String::from("epoch,mean_loss,train_acc\n");
    for (i, l) in report.losses.iter().enumerate() {
        let acc = report.accuracy.get(i).map_or(String::new(), |a| format!("{:.4}", 100.0 * a));
        let _ = writeln!(s, "{},{},{}", i + 1, l, acc);
    }
    s
}

/// Write the model, its configuration and optional loss curve to `dir`.
pub fn save_checkpoint(dir: impl AsRef<Path>, model: &MemNN, cfg: &ExperimentConfig, report: Option<&TrainReport>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut cfg = *cfg;
    cfg.flags = model.flags;
    cfg.train.dim = model.dim();
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    model.vocab.save(dir.join("vocab.txt"))?;
    model.u_o.save(dir.join("u_o.bin"))?;
    model.u_r.save(dir.join("u_r.bin"))?;
    if let Some(u) = &model.u_ot {
        u.save(dir.join("u_ot.bin"))?;
    }
    if let Some(seg) = &model.segmenter {
        seg.vocab.save(dir.join("seg_vocab.txt"))?;
        seg.params.u.save(dir.join("u_seg.bin"))?;
        let w = EmbeddingMatrix::from_rows(1, seg.params.w.len(), MatrixRole::SegmenterWeights, &seg.params.w)?;
        w.save(dir.join("w_seg.bin"))?;
    }
    if let Some(r) = report {
        fs::write(dir.join("loss.csv"), loss_csv(r))?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(MemNN, ExperimentConfig)> {
    let dir = dir.as_ref();
    let cfg = ExperimentConfig::load(dir.join("config.txt"))?;
    let vocab = Vocab::load(dir.join("vocab.txt"))?;
    let u_o = EmbeddingMatrix::load(dir.join("u_o.bin"))?;
    let u_r = EmbeddingMatrix::load(dir.join("u_r.bin"))?;
    let u_ot = if cfg.flags.time {
        Some(EmbeddingMatrix::load(dir.join("u_ot.bin"))?)
    } else {
        None
    };
    let mut model = MemNN::from_parts(vocab, cfg.flags, u_o, u_r, u_ot)?;
    if dir.join("u_seg.bin").exists() {
        let vocab = Vocab::load(dir.join("seg_vocab.txt"))?;
        let u = EmbeddingMatrix::load(dir.join("u_seg.bin"))?;
        let w = EmbeddingMatrix::load(dir.join("w_seg.bin"))?;
        let w: Vec<f64> = (0..w.cols()).map(|c| w.get(0, c)).collect();
        model.segmenter = Some(Segmenter::new(SegmenterParams::new(u, w, cfg.train.margin)?, vocab)?);
    }
    Ok((model, cfg))
}
