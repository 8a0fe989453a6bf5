//! Append-only memory and the hashing indexes used to prune candidates.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MemnnError, Result};
use crate::features::{FeatureLayout, Region, Vocab};
use crate::parallel::{self, Execution};
use crate::scoring::EmbeddingMatrix;

/// Read view of one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot<'a> {
    pub tokens: &'a [String],
    pub write_index: usize,
}

/// Memory slots are written once at the next free index and never updated;
/// the write index of a slot is its position.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemoryStore {
    slots: Vec<Vec<String>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_statements<I, T>(statements: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<Vec<String>>,
    {
        let mut store = Self::new();
        for s in statements {
            store.write_slot(s.into())?;
        }
        Ok(store)
    }

    pub fn write_slot(&mut self, tokens: Vec<String>) -> Result<usize> {
        if tokens.is_empty() {
            return Err(MemnnError::EmptyStatement);
        }
        self.slots.push(tokens);
        Ok(self.slots.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<Slot<'_>> {
        self.slots.get(id).map(|t| Slot {
            tokens: t,
            write_index: id,
        })
    }

    pub fn tokens(&self, id: usize) -> &[String] {
        &self.slots[id]
    }

    pub fn statements(&self) -> &[Vec<String>] {
        &self.slots
    }

    pub fn clear(&mut self) {
        self.slots.clear();
    }
}

#[derive(Clone, Debug)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Total squared distance after each assignment step.
    pub distortion: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm from k-means++ seeding. Empty clusters are re-seeded at
/// the point farthest from its centroid. Deterministic given `seed`.
pub fn kmeans(points: &[Vec<f64>], k: usize, iters: usize, seed: u64, exec: Execution) -> Result<KMeans> {
    if k == 0 || iters == 0 {
        return Err(MemnnError::KMeans("k and iters must be positive".into()));
    }
    let distinct: HashSet<Vec<u64>> = points.iter().map(|p| p.iter().map(|v| v.to_bits()).collect()).collect();
    if k > distinct.len() {
        return Err(MemnnError::KMeans(format!("k = {k} exceeds {} distinct points", distinct.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap();
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        centroids.push(points[pick].clone());
        let c = centroids.last().unwrap();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }

    let assign = |centroids: &[Vec<f64>]| -> Vec<(usize, f64)> { parallel::map_slice(exec, points, |p| nearest(p, centroids)) };

    let first = assign(&centroids);
    let mut assignments: Vec<usize> = first.iter().map(|a| a.0).collect();
    let mut distortion = vec![first.iter().map(|a| a.1).sum()];
    let dim = points[0].len();

    for _ in 0..iters {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..points.len()).filter(|&i| counts[assignments[i]] > 1).max_by(|&i, &j| {
                let di = sq_dist(&points[i], &centroids[assignments[i]]);
                let dj = sq_dist(&points[j], &centroids[assignments[j]]);
                di.total_cmp(&dj).then(j.cmp(&i))
            });
            if let Some(i) = far {
                counts[assignments[i]] -= 1;
                counts[c] = 1;
                assignments[i] = c;
                centroids[c] = points[i].clone();
            }
        }
        let next = assign(&centroids);
        let changed = next.iter().zip(&assignments).any(|(n, &a)| n.0 != a);
        assignments = next.iter().map(|a| a.0).collect();
        distortion.push(next.iter().map(|a| a.1).sum());
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignments,
        distortion,
    })
}

/// Y_WORDS-region columns of a scoring matrix, one vector per dictionary word.
pub fn word_vectors(u: &EmbeddingMatrix, layout: &FeatureLayout) -> Vec<Vec<f64>> {
    (0..layout.vocab_size)
        .map(|id| u.column(layout.index(Region::YWords, id).unwrap()).to_vec())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HashKind {
    Word,
    Cluster,
}

/// Bucket index over a snapshot of a memory store.
#[derive(Clone, Debug)]
pub struct HashIndex {
    kind: HashKind,
    /// word id -> bucket id
    word_bucket: Vec<usize>,
    buckets: Vec<Vec<usize>>,
    centroids: Option<Vec<Vec<f64>>>,
    indexed: usize,
}

impl HashIndex {
    fn build(kind: HashKind, memory: &[Vec<String>], vocab: &Vocab, word_bucket: Vec<usize>, n_buckets: usize) -> Self {
        let mut sets = vec![BTreeSet::new(); n_buckets];
        for (slot, tokens) in memory.iter().enumerate() {
            for tok in tokens {
                if let Some(id) = vocab.id(tok) {
                    sets[word_bucket[id]].insert(slot);
                }
            }
        }
        HashIndex {
            kind,
            word_bucket,
            buckets: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            centroids: None,
            indexed: memory.len(),
        }
    }

    pub fn kind(&self) -> &HashKind {
        &self.kind
    }

    pub fn n_buckets(&self) -> usize {
        self.buckets.len()
    }

    pub fn bucket(&self, b: usize) -> &[usize] {
        &self.buckets[b]
    }

    pub fn bucket_of_word(&self, id: usize) -> usize {
        self.word_bucket[id]
    }

    pub fn centroids(&self) -> Option<&[Vec<f64>]> {
        self.centroids.as_deref()
    }

    /// Number of slots covered by the snapshot.
    pub fn indexed(&self) -> usize {
        self.indexed
    }
}

/// One bucket per dictionary word; a slot lands in the bucket of every word it contains.
pub fn build_word_hash(store: &MemoryStore, vocab: &Vocab) -> HashIndex {
    word_hash(store.statements(), vocab)
}

pub fn word_hash(memory: &[Vec<String>], vocab: &Vocab) -> HashIndex {
    HashIndex::build(HashKind::Word, memory, vocab, (0..vocab.len()).collect(), vocab.len())
}

/// Word clusters from k-means over word vectors.
#[derive(Clone, Debug)]
pub struct WordClusters {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
}

impl WordClusters {
    pub fn fit(u: &EmbeddingMatrix, layout: &FeatureLayout, k: usize, seed: u64, exec: Execution) -> Result<Self> {
        let mut points = word_vectors(u, layout);
        for p in &mut points {
            let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                p.iter_mut().for_each(|v| *v /= n);
            }
        }
        let km = kmeans(&points, k, 100, seed, exec)?;
        Ok(WordClusters {
            centroids: km.centroids,
            assignment: km.assignments,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn index(&self, memory: &[Vec<String>], vocab: &Vocab) -> HashIndex {
        let mut idx = HashIndex::build(HashKind::Cluster, memory, vocab, self.assignment.clone(), self.k());
        idx.centroids = Some(self.centroids.clone());
        idx
    }
}

/// A slot lands in the bucket of every cluster one of its words falls into.
pub fn build_cluster_hash(
    store: &MemoryStore,
    vocab: &Vocab,
    u: &EmbeddingMatrix,
    layout: &FeatureLayout,
    k: usize,
    seed: u64,
) -> Result<HashIndex> {
    Ok(WordClusters::fit(u, layout, k, seed, Execution::Parallel)?.index(store.statements(), vocab))
}

/// Slots to score for `input`, ascending. Without an index every slot is a candidate.
pub fn lookup_candidates(store: &MemoryStore, index: Option<&HashIndex>, vocab: &Vocab, input: &[&[String]]) -> Vec<usize> {
    candidates(store.len(), index, vocab, input)
}

/// [`lookup_candidates`] over a memory of `len` slots.
pub fn candidates(len: usize, index: Option<&HashIndex>, vocab: &Vocab, input: &[&[String]]) -> Vec<usize> {
    let Some(index) = index else {
        return (0..len).collect();
    };
    let mut touched = BTreeSet::new();
    for tok in input.iter().flat_map(|s| s.iter()) {
        if let Some(id) = vocab.id(tok) {
            touched.insert(index.word_bucket[id]);
        }
    }
    let mut out: BTreeSet<usize> = BTreeSet::new();
    for b in touched {
        out.extend(index.buckets[b].iter().copied());
    }
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{tokenize, LayoutKind};
    use crate::scoring::MatrixRole;
    use proptest::prelude::*;
    use rand::Rng;

    fn store(sents: &[&str]) -> MemoryStore {
        MemoryStore::from_statements(sents.iter().map(|s| tokenize(s))).unwrap()
    }

    fn vocab(s: &MemoryStore) -> Vocab {
        Vocab::build(s.statements().iter().map(|s| s.as_slice())).unwrap()
    }

    #[test]
    fn writes_are_sequential() {
        let mut m = MemoryStore::new();
        assert_eq!(m.write_slot(tokenize("joe went kitchen")).unwrap(), 0);
        assert_eq!(m.len(), 1);
        assert_eq!(m.write_slot(tokenize("a")).unwrap(), 1);
        assert_eq!(m.write_slot(tokenize("b")).unwrap(), 2);
        assert!(matches!(m.write_slot(vec![]), Err(MemnnError::EmptyStatement)));
        assert_eq!(m.len(), 3);
    }

    #[test]
    fn word_hash_buckets() {
        let s = store(&["a b", "b c", "a a"]);
        let v = vocab(&s);
        let h = build_word_hash(&s, &v);
        assert_eq!(h.n_buckets(), v.len());
        assert_eq!(h.bucket(v.id("b").unwrap()), &[0, 1]);
        assert_eq!(h.bucket(v.id("a").unwrap()), &[0, 2]);
        assert_eq!(h.bucket(v.id("c").unwrap()), &[1]);
    }

    #[test]
    fn lookup_without_index_or_overlap() {
        let s = store(&["a b", "b c", "d"]);
        let v = Vocab::from_words(["a", "b", "c", "d", "e"]).unwrap();
        assert_eq!(lookup_candidates(&s, None, &v, &[]), vec![0, 1, 2]);
        let h = build_word_hash(&s, &v);
        assert!(lookup_candidates(&s, Some(&h), &v, &[&tokenize("e")]).is_empty());
        assert_eq!(lookup_candidates(&s, Some(&h), &v, &[&tokenize("c d")]), vec![1, 2]);
    }

    #[test]
    fn kmeans_degenerate_cases() {
        let pts = vec![vec![0.0], vec![1.0], vec![5.0]];
        let km = kmeans(&pts, 3, 10, 0, Execution::Sequential).unwrap();
        assert_eq!(*km.distortion.last().unwrap(), 0.0);
        let mut a = km.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 3);

        let same = vec![vec![2.0, 3.0]; 4];
        let km = kmeans(&same, 1, 5, 0, Execution::Sequential).unwrap();
        assert_eq!(km.centroids, vec![vec![2.0, 3.0]]);
        assert!(kmeans(&same, 2, 5, 0, Execution::Sequential).is_err());
    }

    #[test]
    fn kmeans_matches_brute_force_partition() {
        let pts: Vec<Vec<f64>> = [0.0, 0.1, 10.0, 10.1].iter().map(|&x| vec![x]).collect();
        // enumerate every 2-partition into non-empty groups
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << pts.len()) - 1 {
            let mut cost = 0.0;
            for side in [true, false] {
                let g: Vec<f64> = (0..pts.len())
                    .filter(|&i| ((mask >> i) & 1 == 1) == side)
                    .map(|i| pts[i][0])
                    .collect();
                let m = g.iter().sum::<f64>() / g.len() as f64;
                cost += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
            }
            best = best.min(cost);
        }
        assert!((best - 0.01).abs() < 1e-12);
        for seed in 0..20 {
            let km = kmeans(&pts, 2, 20, seed, Execution::Sequential).unwrap();
            assert!((km.distortion.last().unwrap() - best).abs() < 1e-9);
            let mut c: Vec<f64> = km.centroids.iter().map(|c| c[0]).collect();
            c.sort_by(f64::total_cmp);
            assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 10.05).abs() < 1e-12);
        }
    }

    #[test]
    fn cluster_hash_k1_and_identity() {
        let s = store(&["a b", "b c", "d e", "e"]);
        let v = vocab(&s);
        let layout = FeatureLayout::new(v.len(), LayoutKind::Base, false);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = EmbeddingMatrix::random(4, layout.dim(), MatrixRole::Output, 1.0, &mut rng);

        let one = build_cluster_hash(&s, &v, &u, &layout, 1, 0).unwrap();
        assert_eq!(one.n_buckets(), 1);
        assert_eq!(lookup_candidates(&s, Some(&one), &v, &[&tokenize("a")]), vec![0, 1, 2, 3]);

        let full = build_cluster_hash(&s, &v, &u, &layout, v.len(), 0).unwrap();
        let word = build_word_hash(&s, &v);
        for q in ["a", "b", "c e", "d"] {
            let q = tokenize(q);
            let c: BTreeSet<usize> = lookup_candidates(&s, Some(&full), &v, &[&q]).into_iter().collect();
            let w: BTreeSet<usize> = lookup_candidates(&s, Some(&word), &v, &[&q]).into_iter().collect();
            assert!(c.is_superset(&w));
        }
        // slots sharing a word share a bucket
        let b = v.id("b").unwrap();
        let bb = one.bucket_of_word(b);
        assert!(one.bucket(bb).contains(&0) && one.bucket(bb).contains(&1));
    }

    proptest! {
        #[test]
        fn kmeans_distortion_non_increasing(seed in 0u64..500, n in 5usize..40, k in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>() * 10.0).collect()).collect();
            let km = kmeans(&pts, k, 50, seed, Execution::Sequential).unwrap();
            for w in km.distortion.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            for (p, &a) in pts.iter().zip(&km.assignments) {
                let d = sq_dist(p, &km.centroids[a]);
                prop_assert!(km.centroids.iter().all(|c| d <= sq_dist(p, c) + 1e-12));
            }
            let par = kmeans(&pts, k, 50, seed, Execution::Parallel).unwrap();
            prop_assert_eq!(par.assignments, km.assignments);
        }

        #[test]
        fn append_only_and_word_hash_complete(sents in proptest::collection::vec(proptest::collection::vec(0u8..6, 1..5), 1..20), q in proptest::collection::vec(0u8..8, 1..4)) {
            let statements: Vec<Vec<String>> = sents.iter().map(|s| s.iter().map(|w| format!("w{w}")).collect()).collect();
            let mut m = MemoryStore::new();
            for (i, s) in statements.iter().enumerate() {
                prop_assert_eq!(m.write_slot(s.clone()).unwrap(), i);
                prop_assert_eq!(m.tokens(i), s.as_slice());
            }
            for (i, s) in statements.iter().enumerate() {
                prop_assert_eq!(m.get(i).unwrap().tokens, s.as_slice());
                prop_assert_eq!(m.get(i).unwrap().write_index, i);
            }
            let v = Vocab::from_words((0..8).map(|w| format!("w{w}"))).unwrap();
            let h = build_word_hash(&m, &v);
            let qt: Vec<String> = q.iter().map(|w| format!("w{w}")).collect();
            let cands: BTreeSet<usize> = lookup_candidates(&m, Some(&h), &v, &[&qt]).into_iter().collect();
            for (i, s) in statements.iter().enumerate() {
                let shares = s.iter().any(|w| qt.contains(w));
                prop_assert_eq!(shares, cands.contains(&i));
            }
        }
    }
}
