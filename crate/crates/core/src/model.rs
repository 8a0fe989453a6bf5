//! The memory network: support retrieval over one or two hops, word
//! responses, and stream segmentation.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{MemnnError, Result};
use crate::features::{featurize_bag, featurize_time, ContextStore, FeatureLayout, Featurizer, LayoutKind, SparseVector, Stamp, Vocab};
use crate::memory::{candidates, HashIndex};
use crate::scoring::{dot, EmbeddingMatrix, MatrixRole, SegmenterParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelFlags {
    /// Number of retrieval hops, 1 or 2.
    pub hops: usize,
    pub time: bool,
    pub matching: bool,
    pub unseen: bool,
    /// Weight of the raw bag-of-words overlap added to every score.
    pub lambda: f64,
    /// Forbid the second hop from returning the first support again.
    pub exclude_first: bool,
}

impl Default for ModelFlags {
    fn default() -> Self {
        ModelFlags {
            hops: 2,
            time: true,
            matching: false,
            unseen: false,
            lambda: 0.0,
            exclude_first: false,
        }
    }
}

impl ModelFlags {
    pub fn layout_kind(&self) -> LayoutKind {
        if self.matching {
            LayoutKind::Matching
        } else if self.unseen {
            LayoutKind::Context
        } else {
            LayoutKind::Base
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.hops) {
            return Err(MemnnError::Config(format!("hops must be 1 or 2, got {}", self.hops)));
        }
        if !self.lambda.is_finite() {
            return Err(MemnnError::Config("lambda must be finite".into()));
        }
        Ok(())
    }
}

/// Boundary classifier with its own dictionary.
#[derive(Clone, Debug, PartialEq)]
pub struct Segmenter {
    pub params: SegmenterParams,
    pub vocab: Vocab,
}

impl Segmenter {
    pub fn new(params: SegmenterParams, vocab: Vocab) -> Result<Self> {
        if params.u.cols() != vocab.len() {
            return Err(MemnnError::DimensionMismatch {
                expected: vocab.len(),
                got: params.u.cols(),
            });
        }
        Ok(Segmenter { params, vocab })
    }

    pub fn zeros(dim: usize, vocab: Vocab, margin: f64) -> Self {
        let u = EmbeddingMatrix::zeros(dim, vocab.len(), MatrixRole::Segmenter);
        Segmenter {
            params: SegmenterParams {
                u,
                w: vec![0.0; dim],
                margin,
            },
            vocab,
        }
    }

    pub fn score(&self, buffer: &[String]) -> f64 {
        let fc = featurize_bag(buffer, &self.vocab);
        // Dimensions agree by construction.
        dot(&self.params.w, &self.params.u.embed(&fc).expect("segmenter dims"))
    }

    pub fn fires(&self, buffer: &[String]) -> bool {
        self.score(buffer) > self.params.margin
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StreamItem {
    Statement(Vec<String>),
    Question(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmentation {
    pub items: Vec<StreamItem>,
    /// `boundaries[i]` is set when a segment ends after word `i`.
    pub boundaries: Vec<bool>,
    /// Words left over at the end without a boundary.
    pub trailing: Vec<String>,
}

/// Greedy left-to-right segmentation. A `?` always closes a question;
/// otherwise the buffer is emitted as a statement once the segmenter fires.
pub fn segment_stream(seg: &Segmenter, words: &[String]) -> Segmentation {
    let mut items = Vec::new();
    let mut boundaries = vec![false; words.len()];
    let mut buf: Vec<String> = Vec::new();
    for (i, w) in words.iter().enumerate() {
        buf.push(w.clone());
        if w == "?" {
            items.push(StreamItem::Question(std::mem::take(&mut buf)));
            boundaries[i] = true;
        } else if seg.fires(&buf) {
            items.push(StreamItem::Statement(std::mem::take(&mut buf)));
            boundaries[i] = true;
        }
    }
    Segmentation {
        items,
        boundaries,
        trailing: buf,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Answer {
    pub word: String,
    pub supports: Vec<usize>,
    /// Size of the first-hop candidate set.
    pub candidates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemNN {
    pub flags: ModelFlags,
    pub vocab: Vocab,
    pub layout: FeatureLayout,
    pub u_o: EmbeddingMatrix,
    pub u_r: EmbeddingMatrix,
    pub u_ot: Option<EmbeddingMatrix>,
    pub segmenter: Option<Segmenter>,
}

impl MemNN {
    pub fn new<R: Rng + ?Sized>(vocab: Vocab, flags: ModelFlags, dim: usize, init_std: f64, rng: &mut R) -> Result<Self> {
        flags.validate()?;
        if vocab.is_empty() {
            return Err(MemnnError::EmptyCorpus);
        }
        let layout = FeatureLayout::new(vocab.len(), flags.layout_kind(), flags.time);
        let d = layout.dim();
        let u_o = EmbeddingMatrix::random(dim, d, MatrixRole::Output, init_std, rng);
        let u_r = EmbeddingMatrix::random(dim, d, MatrixRole::Response, init_std, rng);
        let u_ot = flags
            .time
            .then(|| EmbeddingMatrix::random(dim, d, MatrixRole::OutputTime, init_std, rng));
        Ok(MemNN {
            flags,
            vocab,
            layout,
            u_o,
            u_r,
            u_ot,
            segmenter: None,
        })
    }

    /// Assemble a model from stored parts, checking shapes.
    pub fn from_parts(
        vocab: Vocab,
        flags: ModelFlags,
        u_o: EmbeddingMatrix,
        u_r: EmbeddingMatrix,
        u_ot: Option<EmbeddingMatrix>,
    ) -> Result<Self> {
        flags.validate()?;
        let layout = FeatureLayout::new(vocab.len(), flags.layout_kind(), flags.time);
        for m in [Some(&u_o), Some(&u_r), u_ot.as_ref()].into_iter().flatten() {
            if m.cols() != layout.dim() {
                return Err(MemnnError::DimensionMismatch {
                    expected: layout.dim(),
                    got: m.cols(),
                });
            }
            if m.rows() != u_o.rows() {
                return Err(MemnnError::DimensionMismatch {
                    expected: u_o.rows(),
                    got: m.rows(),
                });
            }
        }
        if flags.time != u_ot.is_some() {
            return Err(MemnnError::MatrixFormat("time flag and U_Ot presence disagree".into()));
        }
        Ok(MemNN {
            flags,
            vocab,
            layout,
            u_o,
            u_r,
            u_ot,
            segmenter: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.u_o.rows()
    }

    /// Matrix that scores supporting memories: U_Ot with time, else U_O.
    pub fn support_matrix(&self) -> &EmbeddingMatrix {
        self.u_ot.as_ref().unwrap_or(&self.u_o)
    }

    pub fn support_matrix_mut(&mut self) -> &mut EmbeddingMatrix {
        self.u_ot.as_mut().unwrap_or(&mut self.u_o)
    }

    pub fn episode<'a>(&'a self, memory: &'a [Vec<String>]) -> Episode<'a> {
        self.episode_with(memory, None)
    }

    /// Episode in which the words of `dropped` are treated as unseen.
    pub fn episode_with<'a>(&'a self, memory: &'a [Vec<String>], dropped: Option<HashSet<String>>) -> Episode<'a> {
        let context = self.layout.has_context().then(|| {
            let mut ctx = ContextStore::default();
            for s in memory {
                ctx.add_sentence_excluding(s, &self.vocab, dropped.as_ref());
            }
            ctx
        });
        Episode {
            model: self,
            memory,
            context,
            dropped,
        }
    }

    /// Answer `x` against `memory`, optionally pruning candidates with `index`.
    pub fn answer(&self, memory: &[Vec<String>], x: &[String], index: Option<&HashIndex>) -> Result<Answer> {
        self.episode(memory).answer(x, index)
    }

    pub fn segment(&self, words: &[String]) -> Result<Segmentation> {
        let seg = self
            .segmenter
            .as_ref()
            .ok_or_else(|| MemnnError::Config("model has no segmenter".into()))?;
        Ok(segment_stream(seg, words))
    }
}

/// A model bound to one memory for answering questions about it.
pub struct Episode<'a> {
    model: &'a MemNN,
    memory: &'a [Vec<String>],
    context: Option<ContextStore>,
    dropped: Option<HashSet<String>>,
}

/// Precomputed pieces of a ranking over memories: `q = U Φx`, and per
/// candidate the score `q · U Φy + λ Φx · Φy`.
struct Ranking {
    q: Vec<f64>,
    scores: Vec<f64>,
}

impl<'a> Episode<'a> {
    pub fn model(&self) -> &MemNN {
        self.model
    }

    pub fn memory(&self) -> &[Vec<String>] {
        self.memory
    }

    pub fn featurizer(&self) -> Featurizer<'_> {
        Featurizer::new(&self.model.layout, &self.model.vocab)
            .with_context(self.context.as_ref())
            .with_dropped(self.dropped.as_ref())
    }

    fn slot(&self, id: usize) -> Result<&'a [String]> {
        self.memory.get(id).map(Vec::as_slice).ok_or(MemnnError::InvalidSlot(id))
    }

    pub fn query_vec(&self, x: &[String], supports: &[usize]) -> Result<SparseVector> {
        let sup: Vec<&[String]> = supports.iter().map(|&s| self.slot(s)).collect::<Result<_>>()?;
        self.featurizer().input(x, &sup)
    }

    pub fn memory_vec(&self, slot: usize, x_side: &[&[String]]) -> Result<SparseVector> {
        self.featurizer().memory(self.slot(slot)?, Some(x_side))
    }

    pub fn word_vec(&self, word: &str, x_side: &[&[String]]) -> Result<SparseVector> {
        self.featurizer().memory(&[word.to_string()], Some(x_side))
    }

    /// Dictionary words, then (with unseen-word handling) words of the memory
    /// that are not in the dictionary, in order of first appearance.
    pub fn response_candidates(&self) -> Vec<String> {
        let mut out: Vec<String> = self.model.vocab.words().to_vec();
        if self.model.flags.unseen {
            let mut seen = HashSet::new();
            for tok in self.memory.iter().flatten() {
                if !self.model.vocab.contains(tok) && seen.insert(tok.as_str()) {
                    out.push(tok.clone());
                }
            }
        }
        out
    }

    fn rank(&self, u: &EmbeddingMatrix, fx: &SparseVector, ys: &[SparseVector]) -> Result<Ranking> {
        let q = u.embed(fx)?;
        let lambda = self.model.flags.lambda;
        let scores = ys
            .iter()
            .map(|fy| {
                let s = dot(&q, &u.embed(fy)?);
                Ok(if lambda == 0.0 { s } else { s + lambda * fx.dot(fy) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Ranking { q, scores })
    }

    fn argmax(ids: &[usize], scores: &[f64]) -> usize {
        let mut best = 0;
        for i in 1..ids.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        ids[best]
    }

    fn check_candidates(&self, cands: &[usize]) -> Result<()> {
        if self.memory.is_empty() {
            return Err(MemnnError::EmptyMemory);
        }
        if cands.is_empty() {
            return Err(MemnnError::EmptyCandidates);
        }
        if let Some(&bad) = cands.iter().find(|&&c| c >= self.memory.len()) {
            return Err(MemnnError::InvalidSlot(bad));
        }
        Ok(())
    }

    /// Best support among `cands` for `x` given earlier supports `prev`,
    /// by plain argmax of the support score. Ties go to the lowest slot.
    pub fn support_argmax(&self, x: &[String], prev: &[usize], cands: &[usize]) -> Result<usize> {
        self.check_candidates(cands)?;
        let xs = self.x_side(x, prev)?;
        let fx = self.query_vec(x, prev)?;
        let ys = cands.iter().map(|&c| self.memory_vec(c, &xs)).collect::<Result<Vec<_>>>()?;
        let r = self.rank(&self.model.u_o, &fx, &ys)?;
        Ok(Self::argmax(cands, &r.scores))
    }

    /// The query followed by the given supports, as token slices.
    pub fn x_side<'b>(&'b self, x: &'b [String], prev: &[usize]) -> Result<Vec<&'b [String]>> {
        let mut v: Vec<&[String]> = vec![x];
        for &s in prev {
            v.push(self.slot(s)?);
        }
        Ok(v)
    }

    /// First-hop support by argmax.
    pub fn support_hop1(&self, x: &[String], cands: &[usize]) -> Result<usize> {
        self.support_argmax(x, &[], cands)
    }

    /// Second-hop support by argmax given the first support.
    pub fn support_hop2(&self, x: &[String], o1: usize, cands: &[usize]) -> Result<usize> {
        let cands = self.hop2_candidates(o1, cands);
        self.support_argmax(x, &[o1], &cands)
    }

    fn hop2_candidates(&self, o1: usize, cands: &[usize]) -> Vec<usize> {
        if self.model.flags.exclude_first {
            cands.iter().copied().filter(|&c| c != o1).collect()
        } else {
            cands.to_vec()
        }
    }

    /// Time-aware retrieval. Candidates are visited oldest first and the
    /// incumbent `t` is replaced by `i` when the triple score of
    /// `(t over i)` is negative; ties keep the older slot.
    pub fn support_time(&self, x: &[String], prev: &[usize], cands: &[usize]) -> Result<usize> {
        self.support_time_impl(x, prev, cands, true)
    }

    /// [`Episode::support_time`] with the time features forced to zero.
    pub fn support_time_untimed(&self, x: &[String], prev: &[usize], cands: &[usize]) -> Result<usize> {
        self.support_time_impl(x, prev, cands, false)
    }

    fn support_time_impl(&self, x: &[String], prev: &[usize], cands: &[usize], timed: bool) -> Result<usize> {
        self.check_candidates(cands)?;
        let u = self.model.support_matrix();
        let layout = &self.model.layout;
        let off = layout.time_offset().ok_or(MemnnError::MissingTimeDims)?;
        let mut sorted = cands.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let xs = self.x_side(x, prev)?;
        let fx = self.query_vec(x, prev)?;
        let ys = sorted.iter().map(|&c| self.memory_vec(c, &xs)).collect::<Result<Vec<_>>>()?;
        let r = self.rank(u, &fx, &ys)?;
        let tau: [f64; 3] = std::array::from_fn(|k| dot(&r.q, u.column(off + k)));
        let stamp = prev.last().map_or(Stamp::Query, |&s| Stamp::Slot(s));
        let mut t = 0;
        for i in 1..sorted.len() {
            let mut s = r.scores[t] - r.scores[i];
            if timed {
                let tf = featurize_time(stamp, sorted[t], sorted[i]);
                s += tf.iter().zip(&tau).map(|(a, b)| a * b).sum::<f64>();
            }
            if s < 0.0 {
                t = i;
            }
        }
        Ok(sorted[t])
    }

    /// Support retrieval as configured: the pairwise scan with time features,
    /// argmax otherwise.
    pub fn retrieve(&self, x: &[String], prev: &[usize], cands: &[usize]) -> Result<usize> {
        if self.model.flags.time {
            self.support_time(x, prev, cands)
        } else {
            self.support_argmax(x, prev, cands)
        }
    }

    /// Highest-scoring response word given the supports. Ties go to the
    /// earliest candidate.
    pub fn respond(&self, x: &[String], supports: &[usize]) -> Result<String> {
        let words = self.response_candidates();
        let xs = self.x_side(x, supports)?;
        let fx = self.query_vec(x, supports)?;
        let ys = words.iter().map(|w| self.word_vec(w, &xs)).collect::<Result<Vec<_>>>()?;
        let r = self.rank(&self.model.u_r, &fx, &ys)?;
        let ids: Vec<usize> = (0..words.len()).collect();
        Ok(words[Self::argmax(&ids, &r.scores)].clone())
    }

    /// Full pipeline: supports over the configured number of hops, then the
    /// response. When the second hop has no candidates the first support
    /// alone feeds the response.
    pub fn answer(&self, x: &[String], index: Option<&HashIndex>) -> Result<Answer> {
        if self.memory.is_empty() {
            return Err(MemnnError::EmptyMemory);
        }
        let vocab = &self.model.vocab;
        let c1 = candidates(self.memory.len(), index, vocab, &[x]);
        let o1 = self.retrieve(x, &[], &c1)?;
        let mut supports = vec![o1];
        if self.model.flags.hops == 2 {
            let c2 = candidates(self.memory.len(), index, vocab, &[x, self.slot(o1)?]);
            let c2 = self.hop2_candidates(o1, &c2);
            if !c2.is_empty() {
                supports.push(self.retrieve(x, &[o1], &c2)?);
            }
        }
        let word = self.respond(x, &supports)?;
        Ok(Answer {
            word,
            supports,
            candidates: c1.len(),
        })
    }
}
