//! Dictionary, feature-space layout and the sparse feature maps.
//!
//! Every word owns one dimension per region of the feature space. The base
//! layout has three regions (memory-side words, query words, words of
//! supporting memories). Context modelling for unseen words adds a left- and
//! right-context bag region; match features add three binary match regions.
//! Write-time features, when enabled, occupy three trailing dimensions.

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::error::{MemnnError, Result};

pub const PUNCTUATION: [char; 5] = ['.', ',', ';', '?', '!'];

/// Lowercases, splits on whitespace and peels the punctuation set into
/// separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut cur = String::new();
        for ch in chunk.chars() {
            if PUNCTUATION.contains(&ch) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.extend(ch.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Word to id map. Ids follow first occurrence in the corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn build<'a, I>(corpus: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut vocab = Vocab::default();
        for sentence in corpus {
            for tok in sentence {
                vocab.insert(tok);
            }
        }
        if vocab.is_empty() {
            return Err(MemnnError::EmptyCorpus);
        }
        Ok(vocab)
    }

    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocab::default();
        for w in words {
            let w = w.as_ref();
            if vocab.index.contains_key(w) {
                return Err(MemnnError::Config(format!("duplicate word {w:?}")));
            }
            vocab.insert(w);
        }
        if vocab.is_empty() {
            return Err(MemnnError::EmptyCorpus);
        }
        Ok(vocab)
    }

    /// Adds `word` if absent and returns its id.
    pub fn insert(&mut self, word: &str) -> usize {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len();
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        id
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// One word per line; line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.words.len() * 8);
        for w in &self.words {
            s.push_str(w);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_words(text.lines())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    YWords,
    XInput,
    XSupport,
    LeftCtx,
    RightCtx,
    Match,
    LeftCtxMatch,
    RightCtxMatch,
}

impl Region {
    pub const ALL: [Region; 8] = [
        Region::YWords,
        Region::XInput,
        Region::XSupport,
        Region::LeftCtx,
        Region::RightCtx,
        Region::Match,
        Region::LeftCtxMatch,
        Region::RightCtxMatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Region::YWords => "Y_WORDS",
            Region::XInput => "X_INPUT",
            Region::XSupport => "X_SUPPORT",
            Region::LeftCtx => "LEFT_CTX",
            Region::RightCtx => "RIGHT_CTX",
            Region::Match => "MATCH",
            Region::LeftCtxMatch => "LEFT_CTX_MATCH",
            Region::RightCtxMatch => "RIGHT_CTX_MATCH",
        }
    }

    fn block(self) -> usize {
        Region::ALL.iter().position(|&r| r == self).unwrap()
    }
}

/// Number of |W|-sized regions: 3, 5 or 8.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayoutKind {
    Base,
    Context,
    Matching,
}

impl LayoutKind {
    pub fn blocks(self) -> usize {
        match self {
            LayoutKind::Base => 3,
            LayoutKind::Context => 5,
            LayoutKind::Matching => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::Base => "base",
            LayoutKind::Context => "context",
            LayoutKind::Matching => "matching",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "base" => Some(LayoutKind::Base),
            "context" => Some(LayoutKind::Context),
            "matching" => Some(LayoutKind::Matching),
            _ => None,
        }
    }
}

pub const TIME_DIMS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    pub vocab_size: usize,
    pub kind: LayoutKind,
    pub time_dims: usize,
}

impl FeatureLayout {
    pub fn new(vocab_size: usize, kind: LayoutKind, time: bool) -> Self {
        FeatureLayout {
            vocab_size,
            kind,
            time_dims: if time { TIME_DIMS } else { 0 },
        }
    }

    pub fn dim(&self) -> usize {
        self.word_dim() + self.time_dims
    }

    /// Dimensions covered by word regions.
    pub fn word_dim(&self) -> usize {
        self.kind.blocks() * self.vocab_size
    }

    pub fn has(&self, region: Region) -> bool {
        region.block() < self.kind.blocks()
    }

    pub fn has_context(&self) -> bool {
        self.has(Region::LeftCtx)
    }

    pub fn has_match(&self) -> bool {
        self.has(Region::Match)
    }

    pub fn region(&self, region: Region) -> Option<Range<usize>> {
        self.has(region).then(|| {
            let start = region.block() * self.vocab_size;
            start..start + self.vocab_size
        })
    }

    /// Feature index of word `id` inside `region`.
    pub fn index(&self, region: Region, id: usize) -> Option<usize> {
        debug_assert!(id < self.vocab_size);
        self.has(region).then(|| region.block() * self.vocab_size + id)
    }

    pub fn time_offset(&self) -> Option<usize> {
        (self.time_dims == TIME_DIMS).then(|| self.word_dim())
    }

    /// The region containing `idx`, or `None` for time dims / out of range.
    pub fn region_of(&self, idx: usize) -> Option<Region> {
        if idx >= self.word_dim() || self.vocab_size == 0 {
            return None;
        }
        Some(Region::ALL[idx / self.vocab_size])
    }
}

/// Sorted sparse vector; indices strictly increasing, no stored zeros.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector { dim, entries: Vec::new() }
    }

    /// Sums duplicate indices and drops zeros.
    pub fn from_entries(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        if let Some(&(i, _)) = entries.iter().find(|(i, _)| *i >= dim) {
            return Err(MemnnError::DimensionMismatch { expected: dim, got: i + 1 });
        }
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        Ok(SparseVector { dim, entries: merged })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.entries
            .binary_search_by_key(&idx, |e| e.0)
            .map(|p| self.entries[p].1)
            .unwrap_or(0.0)
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn scaled(&self, a: f64) -> SparseVector {
        if a == 0.0 {
            return SparseVector::zeros(self.dim);
        }
        SparseVector {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, v)| (i, v * a)).collect(),
        }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &SparseVector) -> SparseVector {
        let (x, y) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(x.len() + y.len());
        let (mut i, mut j) = (0, 0);
        while i < x.len() || j < y.len() {
            let take_x = j >= y.len() || (i < x.len() && x[i].0 < y[j].0);
            let take_y = i >= x.len() || (j < y.len() && y[j].0 < x[i].0);
            if take_x {
                out.push(x[i]);
                i += 1;
            } else if take_y {
                out.push((y[j].0, a * y[j].1));
                j += 1;
            } else {
                let v = x[i].1 + a * y[j].1;
                if v != 0.0 {
                    out.push((x[i].0, v));
                }
                i += 1;
                j += 1;
            }
        }
        SparseVector {
            dim: self.dim.max(other.dim),
            entries: out,
        }
    }

    pub fn add(&self, other: &SparseVector) -> SparseVector {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &SparseVector) -> SparseVector {
        self.axpy(-1.0, other)
    }

    /// Copy with the three write-time features written into the trailing dims.
    pub fn with_time(&self, layout: &FeatureLayout, t: [f64; 3]) -> Result<SparseVector> {
        let off = layout.time_offset().ok_or(MemnnError::MissingTimeDims)?;
        let mut entries = self.entries.clone();
        entries.retain(|e| e.0 < off);
        entries.extend(t.iter().enumerate().map(|(k, &v)| (off + k, v)));
        SparseVector::from_entries(layout.dim(), entries)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            d[i] = v;
        }
        d
    }
}

#[derive(Default)]
struct Builder {
    acc: BTreeMap<usize, f64>,
}

impl Builder {
    fn add(&mut self, idx: usize, v: f64) {
        *self.acc.entry(idx).or_insert(0.0) += v;
    }

    fn flag(&mut self, idx: usize) {
        self.acc.insert(idx, 1.0);
    }

    fn build(self, dim: usize) -> SparseVector {
        SparseVector {
            dim,
            entries: self.acc.into_iter().filter(|e| e.1 != 0.0).collect(),
        }
    }
}

pub type Bag = BTreeMap<usize, u32>;

/// Left/right neighbour bags per surface word.
///
/// Bags are keyed by the surface string so that words outside the dictionary
/// still get a context; bag contents are dictionary ids only.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContextStore {
    left: HashMap<String, Bag>,
    right: HashMap<String, Bag>,
}

impl ContextStore {
    pub fn build<'a, I>(corpus: I, vocab: &Vocab) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut store = ContextStore::default();
        for sentence in corpus {
            store.add_sentence(sentence, vocab);
        }
        store
    }

    pub fn add_sentence(&mut self, sentence: &[String], vocab: &Vocab) {
        self.add_sentence_excluding(sentence, vocab, None)
    }

    /// Like [`ContextStore::add_sentence`], but neighbours listed in
    /// `exclude` are left out of the bags as if they were unknown.
    pub fn add_sentence_excluding(&mut self, sentence: &[String], vocab: &Vocab, exclude: Option<&HashSet<String>>) {
        let known = |t: &String| vocab.id(t).filter(|_| !exclude.is_some_and(|e| e.contains(t)));
        for (i, tok) in sentence.iter().enumerate() {
            if i > 0 {
                if let Some(id) = known(&sentence[i - 1]) {
                    *self.left.entry(tok.clone()).or_default().entry(id).or_insert(0) += 1;
                }
            }
            if let Some(next) = sentence.get(i + 1) {
                if let Some(id) = known(next) {
                    *self.right.entry(tok.clone()).or_default().entry(id).or_insert(0) += 1;
                }
            }
        }
    }

    pub fn left(&self, word: &str) -> Option<&Bag> {
        self.left.get(word)
    }

    pub fn right(&self, word: &str) -> Option<&Bag> {
        self.right.get(word)
    }
}

/// Write time of a featurized item. `Query` is newer than every memory.
///
/// A slot counts as older than itself. At the second hop this keeps the
/// first support, which may be picked again, apart from the memories
/// written before it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stamp {
    Slot(usize),
    Query,
}

impl Stamp {
    fn older_than(self, other: usize) -> bool {
        match self {
            Stamp::Slot(s) => s <= other,
            Stamp::Query => false,
        }
    }
}

/// (x older than y, x older than y', y older than y').
pub fn featurize_time(x: Stamp, y: usize, y2: usize) -> [f64; 3] {
    let b = |c: bool| if c { 1.0 } else { 0.0 };
    [b(x.older_than(y)), b(x.older_than(y2)), b(y < y2)]
}

enum Repr<'t> {
    Word(usize),
    Context(&'t str),
    Skip,
}

/// Builds Φx / Φy vectors for one query against one memory.
///
/// Words outside the dictionary, and dictionary words listed in `dropped`,
/// are represented by their context bags, each scaled to unit mass, when the
/// layout has context regions. Unknown words on a layout without context regions are skipped
/// and counted.
pub struct Featurizer<'a> {
    layout: &'a FeatureLayout,
    vocab: &'a Vocab,
    context: Option<&'a ContextStore>,
    dropped: Option<&'a HashSet<String>>,
    skipped: Cell<usize>,
}

impl<'a> Featurizer<'a> {
    pub fn new(layout: &'a FeatureLayout, vocab: &'a Vocab) -> Self {
        Featurizer {
            layout,
            vocab,
            context: None,
            dropped: None,
            skipped: Cell::new(0),
        }
    }

    pub fn with_context(mut self, ctx: Option<&'a ContextStore>) -> Self {
        self.context = ctx;
        self
    }

    pub fn with_dropped(mut self, dropped: Option<&'a HashSet<String>>) -> Self {
        self.dropped = dropped;
        self
    }

    pub fn layout(&self) -> &FeatureLayout {
        self.layout
    }

    /// Tokens skipped so far (unknown words with no context regions).
    pub fn skipped(&self) -> usize {
        self.skipped.get()
    }

    /// Whether `token` is represented through its context bags.
    pub fn is_unseen(&self, token: &str) -> bool {
        matches!(self.repr(token), Repr::Context(_))
    }

    fn repr<'t>(&self, token: &'t str) -> Repr<'t> {
        let id = self.vocab.id(token);
        let dropped = self.dropped.is_some_and(|d| d.contains(token));
        match id {
            Some(id) if !dropped => Repr::Word(id),
            _ if self.layout.has_context() => Repr::Context(token),
            Some(id) => Repr::Word(id),
            None => Repr::Skip,
        }
    }

    fn add_context(&self, b: &mut Builder, token: &str) {
        let Some(ctx) = self.context else { return };
        for (region, bag) in [(Region::LeftCtx, ctx.left(token)), (Region::RightCtx, ctx.right(token))] {
            let Some(bag) = bag else { continue };
            let total: u32 = bag.values().sum();
            for (&id, &n) in bag {
                if let Some(idx) = self.layout.index(region, id) {
                    b.add(idx, f64::from(n) / f64::from(total));
                }
            }
        }
    }

    fn add_words(&self, b: &mut Builder, tokens: &[String], region: Region) {
        for tok in tokens {
            match self.repr(tok) {
                Repr::Word(id) => b.add(self.layout.index(region, id).unwrap(), 1.0),
                Repr::Context(t) => self.add_context(b, t),
                Repr::Skip => self.skipped.set(self.skipped.get() + 1),
            }
        }
    }

    /// Φx: query words in X_INPUT, words of supporting memories in X_SUPPORT.
    pub fn input(&self, x: &[String], supports: &[&[String]]) -> Result<SparseVector> {
        if !self.layout.has(Region::XInput) {
            return Err(MemnnError::MissingRegion("X_INPUT"));
        }
        let mut b = Builder::default();
        self.add_words(&mut b, x, Region::XInput);
        for s in supports {
            self.add_words(&mut b, s, Region::XSupport);
        }
        Ok(b.build(self.layout.dim()))
    }

    /// Φy, optionally conditioned on the query side for match features.
    pub fn memory(&self, y: &[String], conditional_x: Option<&[&[String]]>) -> Result<SparseVector> {
        let mut b = Builder::default();
        self.add_words(&mut b, y, Region::YWords);
        if let (true, Some(xs)) = (self.layout.has_match(), conditional_x) {
            let x_words: HashSet<&str> = xs.iter().flat_map(|s| s.iter()).map(String::as_str).collect();
            let mut seen = HashSet::new();
            for tok in y {
                if !x_words.contains(tok.as_str()) || !seen.insert(tok.as_str()) {
                    continue;
                }
                match self.repr(tok) {
                    Repr::Word(id) => b.flag(self.layout.index(Region::Match, id).unwrap()),
                    Repr::Context(t) => {
                        let Some(ctx) = self.context else { continue };
                        for (region, bag) in [(Region::LeftCtxMatch, ctx.left(t)), (Region::RightCtxMatch, ctx.right(t))] {
                            for &id in bag.into_iter().flat_map(|bg| bg.keys()) {
                                b.flag(self.layout.index(region, id).unwrap());
                            }
                        }
                    }
                    Repr::Skip => {}
                }
            }
        }
        Ok(b.build(self.layout.dim()))
    }
}

/// Plain bag of words over `vocab` (segmenter features use their own dictionary).
pub fn featurize_bag(tokens: &[String], vocab: &Vocab) -> SparseVector {
    let mut b = Builder::default();
    for tok in tokens {
        if let Some(id) = vocab.id(tok) {
            b.add(id, 1.0);
        }
    }
    b.build(vocab.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn vocab_of(sents: &[&str]) -> Vocab {
        let c: Vec<Vec<String>> = sents.iter().map(|s| toks(s)).collect();
        Vocab::build(c.iter().map(|s| s.as_slice())).unwrap()
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(
            tokenize("Joe went to the garden, then Fred; Where is Joe?"),
            vec!["joe", "went", "to", "the", "garden", ",", "then", "fred", ";", "where", "is", "joe", "?"]
        );
        assert_eq!(
            tokenize("Frodo journeyed to Mount-Doom."),
            vec!["frodo", "journeyed", "to", "mount-doom", "."]
        );
    }

    #[test]
    fn vocab_counts_and_errors() {
        let v = vocab_of(&["joe went kitchen", "joe went office"]);
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("joe"), Some(0));
        assert_eq!(v.id("office"), Some(3));
        let empty: Vec<Vec<String>> = vec![];
        assert!(matches!(
            Vocab::build(empty.iter().map(|s| s.as_slice())),
            Err(MemnnError::EmptyCorpus)
        ));
        let text = v.to_text();
        assert_eq!(Vocab::from_text(&text).unwrap().to_text(), text);
    }

    #[test]
    fn layout_dimensions() {
        for (kind, blocks) in [(LayoutKind::Base, 3), (LayoutKind::Context, 5), (LayoutKind::Matching, 8)] {
            let l = FeatureLayout::new(7, kind, false);
            assert_eq!(l.dim(), 7 * blocks);
            let t = FeatureLayout::new(7, kind, true);
            assert_eq!(t.dim(), 7 * blocks + 3);
            // regions tile [0, word_dim) without overlap
            let mut covered = vec![0; l.dim()];
            for r in Region::ALL.iter().filter(|r| l.has(**r)) {
                for i in l.region(*r).unwrap() {
                    covered[i] += 1;
                    assert_eq!(l.region_of(i), Some(*r));
                }
            }
            assert!(covered.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn input_regions() {
        let v = vocab_of(&["where is bill", "bill is in the kitchen"]);
        let l = FeatureLayout::new(v.len(), LayoutKind::Base, false);
        let f = Featurizer::new(&l, &v);
        let x = f.input(&toks("where is bill"), &[]).unwrap();
        assert_eq!(x.nnz(), 3);
        assert!(x.entries().iter().all(|e| l.region_of(e.0) == Some(Region::XInput)));

        let s = toks("bill is in the kitchen");
        let xs = f.input(&toks("where is bill"), &[&s]).unwrap();
        let n_support = xs.entries().iter().filter(|e| l.region_of(e.0) == Some(Region::XSupport)).count();
        assert_eq!(n_support, 5);
        assert_eq!(xs.nnz(), 8);
    }

    #[test]
    fn unknown_word_skipped_without_context() {
        let v = vocab_of(&["where is bill"]);
        let l = FeatureLayout::new(v.len(), LayoutKind::Base, false);
        let f = Featurizer::new(&l, &v);
        let x = f.input(&toks("where is boromir"), &[]).unwrap();
        assert_eq!(x.nnz(), 2);
        assert_eq!(f.skipped(), 1);
    }

    #[test]
    fn unseen_word_uses_context_regions() {
        let v = vocab_of(&["the appears where is"]);
        let mut ctx = ContextStore::default();
        ctx.add_sentence(&toks("the boromir appears"), &v);
        let l = FeatureLayout::new(v.len(), LayoutKind::Context, false);
        let f = Featurizer::new(&l, &v).with_context(Some(&ctx));
        let y = f.memory(&toks("boromir"), None).unwrap();
        let the = v.id("the").unwrap();
        let appears = v.id("appears").unwrap();
        assert_eq!(
            y.entries(),
            &[
                (l.index(Region::LeftCtx, the).unwrap(), 1.0),
                (l.index(Region::RightCtx, appears).unwrap(), 1.0)
            ]
        );
        assert!(y.entries().iter().all(|e| l.region_of(e.0) != Some(Region::YWords)));
    }

    #[test]
    fn context_bags_have_unit_mass() {
        let v = vocab_of(&["the a appears left"]);
        let mut ctx = ContextStore::default();
        for s in ["the boromir appears", "the boromir left", "a boromir left"] {
            ctx.add_sentence(&toks(s), &v);
        }
        let l = FeatureLayout::new(v.len(), LayoutKind::Context, false);
        let f = Featurizer::new(&l, &v).with_context(Some(&ctx));
        let y = f.memory(&toks("boromir"), None).unwrap();
        let at = |r, w: &str| y.get(l.index(r, v.id(w).unwrap()).unwrap());
        assert!((at(Region::LeftCtx, "the") - 2.0 / 3.0).abs() < 1e-12);
        assert!((at(Region::LeftCtx, "a") - 1.0 / 3.0).abs() < 1e-12);
        assert!((at(Region::RightCtx, "left") - 2.0 / 3.0).abs() < 1e-12);
        assert!((y.entries().iter().map(|e| e.1).sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn match_flags() {
        let v = vocab_of(&["joe left the milk where is now"]);
        let l = FeatureLayout::new(v.len(), LayoutKind::Matching, false);
        let f = Featurizer::new(&l, &v);
        let x = toks("where is the milk");
        let y = f.memory(&toks("joe left the milk"), Some(&[&x])).unwrap();
        let flags: Vec<&str> = y
            .entries()
            .iter()
            .filter(|e| l.region_of(e.0) == Some(Region::Match))
            .map(|e| v.word(e.0 - l.region(Region::Match).unwrap().start))
            .collect();
        assert_eq!(flags, vec!["the", "milk"]);
        assert!(y.entries().iter().all(|e| e.1 == 1.0));

        let plain = f.memory(&toks("joe left the milk"), None).unwrap();
        assert!(plain.entries().iter().all(|e| l.region_of(e.0) == Some(Region::YWords)));

        let disjoint = f.memory(&toks("joe left"), Some(&[&toks("where is now")])).unwrap();
        assert_eq!(disjoint.nnz(), 2);
        assert!(disjoint.entries().iter().all(|e| l.region_of(e.0) == Some(Region::YWords)));
    }

    #[test]
    fn match_flags_are_binary() {
        let v = vocab_of(&["a b"]);
        let l = FeatureLayout::new(v.len(), LayoutKind::Matching, false);
        let f = Featurizer::new(&l, &v);
        let y = f.memory(&toks("a a b"), Some(&[&toks("a a")])).unwrap();
        let m = l.index(Region::Match, 0).unwrap();
        assert_eq!(y.get(m), 1.0);
        assert_eq!(y.get(l.index(Region::YWords, 0).unwrap()), 2.0);
    }

    #[test]
    fn time_features() {
        assert_eq!(featurize_time(Stamp::Query, 3, 7), [0.0, 0.0, 1.0]);
        // x at 5, y at 2, y' at 8: x older than y no, x older than y' yes, y older than y' yes
        assert_eq!(featurize_time(Stamp::Slot(5), 2, 8), [0.0, 1.0, 1.0]);
        assert_eq!(featurize_time(Stamp::Query, 4, 4)[2], 0.0);
        assert_eq!(featurize_time(Stamp::Slot(5), 5, 2), [1.0, 0.0, 0.0]);
        let l = FeatureLayout::new(2, LayoutKind::Base, false);
        assert!(matches!(
            SparseVector::zeros(6).with_time(&l, [0.0, 0.0, 1.0]),
            Err(MemnnError::MissingTimeDims)
        ));
        let lt = FeatureLayout::new(2, LayoutKind::Base, true);
        let v = SparseVector::zeros(9).with_time(&lt, [1.0, 0.0, 1.0]).unwrap();
        assert_eq!(v.entries(), &[(6, 1.0), (8, 1.0)]);
    }

    #[test]
    fn context_store_bags() {
        let v = vocab_of(&["a b c"]);
        let ctx = ContextStore::build([toks("a b c")].iter().map(|s| s.as_slice()), &v);
        let (a, b, c) = (0, 1, 2);
        assert_eq!(ctx.right("a").unwrap(), &Bag::from([(b, 1)]));
        assert_eq!(ctx.left("c").unwrap(), &Bag::from([(b, 1)]));
        assert_eq!(ctx.left("b").unwrap(), &Bag::from([(a, 1)]));
        assert_eq!(ctx.right("b").unwrap(), &Bag::from([(c, 1)]));
        assert!(ctx.left("a").is_none());

        let single = ContextStore::build([toks("a")].iter().map(|s| s.as_slice()), &v);
        assert!(single.left("a").is_none() && single.right("a").is_none());

        // brute-force neighbour count for "a b a b"
        let s = toks("a b a b");
        let rep = ContextStore::build([s.clone()].iter().map(|s| s.as_slice()), &v);
        let brute = s.windows(2).filter(|w| w[0] == "a" && w[1] == "b").count() as u32;
        assert_eq!(rep.right("a").unwrap().get(&b), Some(&brute));
        assert_eq!(brute, 2);
    }

    #[test]
    fn sparse_ops() {
        let a = SparseVector::from_entries(5, vec![(3, 1.0), (0, 2.0), (3, 1.0)]).unwrap();
        assert_eq!(a.entries(), &[(0, 2.0), (3, 2.0)]);
        let b = SparseVector::from_entries(5, vec![(3, 2.0), (4, 1.0)]).unwrap();
        assert_eq!(a.dot(&b), 4.0);
        assert_eq!(a.sub(&a).nnz(), 0);
        assert_eq!(a.add(&b).entries(), &[(0, 2.0), (3, 4.0), (4, 1.0)]);
        assert!(SparseVector::from_entries(5, vec![(5, 1.0)]).is_err());
    }
}
