//! Brute-force score-every-document rankings and random index instances.

use std::collections::BTreeSet;

use lir_core::encode::Similarity;
use lir_core::index::{DenseFlatIndex, MultiVectorIndex, SparseInvertedIndex};
use lir_core::search::{search_dense, search_multi, search_sparse};
use lir_core::{DenseEmbedding, MultiEmbedding, ScoredDoc, SparseEmbedding};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MAX_DOCS: usize = 1000;
pub const MAX_DIM: usize = 32;
pub const MAX_VOCAB: usize = 256;
pub const MAX_TOKENS: usize = 8;

fn dot64(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0f64;
    for i in 0..a.len() {
        acc += a[i] as f64 * b[i] as f64;
    }
    acc
}

pub fn sim_oracle(sim: Similarity, a: &[f32], b: &[f32]) -> f32 {
    match sim {
        Similarity::Dot => dot64(a, b) as f32,
        Similarity::Cosine => {
            let (na, nb) = (dot64(a, a).sqrt(), dot64(b, b).sqrt());
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                (dot64(a, b) / (na * nb)) as f32
            }
        }
    }
}

pub fn max_sim_oracle(q: &[Vec<f32>], d: &[Vec<f32>], sim: Similarity) -> f32 {
    let mut total = 0f64;
    for qr in q {
        let mut best = f32::NEG_INFINITY;
        for dr in d {
            let s = sim_oracle(sim, qr, dr);
            if s > best {
                best = s;
            }
        }
        total += best as f64;
    }
    total as f32
}

/// Sorts every scored doc (score descending, id ascending) and keeps `k`.
pub fn brute_rank(mut scored: Vec<(String, f32)>, k: usize) -> Vec<(String, f32)> {
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

fn as_pairs(results: &[ScoredDoc]) -> Vec<(String, f32)> {
    results.iter().map(|d| (d.doc_id.clone(), d.score)).collect()
}

fn compare(got: &[ScoredDoc], expected: &[(String, f32)]) -> Result<(), String> {
    let pairs = as_pairs(got);
    if pairs.len() != expected.len() {
        return Err(format!("{} results, oracle has {}", pairs.len(), expected.len()));
    }
    for (i, (g, e)) in pairs.iter().zip(expected).enumerate() {
        if g.0 != e.0 || g.1.to_bits() != e.1.to_bits() {
            return Err(format!("rank {}: got {:?}, oracle {:?}", i + 1, g, e));
        }
    }
    for (i, d) in got.iter().enumerate() {
        if d.rank as usize != i + 1 {
            return Err(format!("rank field {} at position {}", d.rank, i + 1));
        }
    }
    Ok(())
}

/// Shuffled, non-contiguous string ids so that lexical order differs from
/// insertion order.
fn doc_ids(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut ids: Vec<String> = (0..n).map(|i| format!("d{}", i * 7 + rng.gen_range(0..7))).collect();
    ids.shuffle(rng);
    ids
}

/// Values on a coarse grid half of the time, to force exact score ties.
fn values(rng: &mut ChaCha8Rng, n: usize, coarse: bool) -> Vec<f32> {
    (0..n)
        .map(|_| {
            if coarse {
                rng.gen_range(-2i32..=2) as f32 * 0.5
            } else {
                rng.gen_range(-1.0f32..1.0)
            }
        })
        .collect()
}

fn similarity(rng: &mut ChaCha8Rng) -> Similarity {
    if rng.gen_bool(0.5) {
        Similarity::Dot
    } else {
        Similarity::Cosine
    }
}

fn sizes(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let num_docs = if rng.gen_bool(0.2) { rng.gen_range(1..=10) } else { rng.gen_range(1..=MAX_DOCS) };
    let k = if rng.gen_bool(0.1) { num_docs + rng.gen_range(0..5) } else { rng.gen_range(1..=20) };
    (num_docs, k)
}

pub fn dense_instance(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let (num_docs, k) = sizes(rng);
    let dim = rng.gen_range(1..=MAX_DIM);
    let coarse = rng.gen_bool(0.5);
    let sim = similarity(rng);
    let ids = doc_ids(rng, num_docs);
    let rows: Vec<Vec<f32>> = (0..num_docs).map(|_| values(rng, dim, coarse)).collect();
    let q = values(rng, dim, coarse);

    let embs: Vec<DenseEmbedding> = rows.iter().cloned().map(DenseEmbedding::new).collect();
    let index = DenseFlatIndex::new(ids.clone(), &embs, sim).map_err(|e| e.to_string())?;
    let got = search_dense(&index, &DenseEmbedding::new(q.clone()), k).map_err(|e| e.to_string())?;

    let scored = ids.iter().zip(&rows).map(|(id, r)| (id.clone(), sim_oracle(sim, &q, r))).collect();
    compare(&got, &brute_rank(scored, k))
}

fn sparse_vec(rng: &mut ChaCha8Rng, vocab: usize, coarse: bool) -> Vec<(u32, f32)> {
    let n = rng.gen_range(0..=vocab.min(12));
    let mut terms: Vec<u32> = (0..vocab as u32).collect();
    terms.shuffle(rng);
    terms.truncate(n);
    terms.sort_unstable();
    terms
        .into_iter()
        .map(|t| {
            let w = if coarse { rng.gen_range(1..=4) as f32 * 0.25 } else { rng.gen_range(0.001f32..3.0) };
            (t, w)
        })
        .collect()
}

pub fn sparse_instance(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let (num_docs, k) = sizes(rng);
    let vocab = rng.gen_range(1..=MAX_VOCAB);
    let coarse = rng.gen_bool(0.5);
    let ids = doc_ids(rng, num_docs);
    let docs: Vec<Vec<(u32, f32)>> = (0..num_docs).map(|_| sparse_vec(rng, vocab, coarse)).collect();
    let q = sparse_vec(rng, vocab, coarse);

    let embs: Vec<SparseEmbedding> = docs.iter().map(|d| SparseEmbedding::from_pairs(d.iter().copied())).collect();
    let index = SparseInvertedIndex::new(ids.clone(), &embs, vocab).map_err(|e| e.to_string())?;
    let got = search_sparse(&index, &SparseEmbedding::from_pairs(q.iter().copied()), k).map_err(|e| e.to_string())?;

    // densify, dense dot, drop documents sharing no term with the query
    let densify = |v: &[(u32, f32)]| {
        let mut out = vec![0f32; vocab];
        for &(t, w) in v {
            out[t as usize] = w;
        }
        out
    };
    let qd = densify(&q);
    let q_terms: BTreeSet<u32> = q.iter().map(|p| p.0).collect();
    let scored = ids
        .iter()
        .zip(&docs)
        .filter(|(_, d)| d.iter().any(|(t, _)| q_terms.contains(t)))
        .map(|(id, d)| (id.clone(), dot64(&qd, &densify(d)) as f32))
        .collect();
    compare(&got, &brute_rank(scored, k))
}

pub struct MultiInstance {
    pub ids: Vec<String>,
    pub docs: Vec<Vec<Vec<f32>>>,
    pub query: Vec<Vec<f32>>,
    pub sim: Similarity,
    pub k: usize,
}

impl MultiInstance {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let (num_docs, k) = sizes(rng);
        let dim = rng.gen_range(1..=MAX_DIM);
        let coarse = rng.gen_bool(0.5);
        let sim = similarity(rng);
        let ids = doc_ids(rng, num_docs);
        let docs = (0..num_docs)
            .map(|_| (0..rng.gen_range(1..=MAX_TOKENS)).map(|_| values(rng, dim, coarse)).collect())
            .collect();
        let query = (0..rng.gen_range(1..=MAX_TOKENS)).map(|_| values(rng, dim, coarse)).collect();
        Self { ids, docs, query, sim, k }
    }

    pub fn total_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    pub fn check(&self, candidate_k: usize) -> Result<(), String> {
        let embs: Vec<MultiEmbedding> = self
            .docs
            .iter()
            .map(|d| MultiEmbedding::from_rows(d).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        let index = MultiVectorIndex::new(self.ids.clone(), &embs, self.sim).map_err(|e| e.to_string())?;
        let q = MultiEmbedding::from_rows(&self.query).map_err(|e| e.to_string())?;
        let got = search_multi(&index, &q, self.k, candidate_k).map_err(|e| e.to_string())?;
        let scored = self
            .ids
            .iter()
            .zip(&self.docs)
            .map(|(id, d)| (id.clone(), max_sim_oracle(&self.query, d, self.sim)))
            .collect();
        compare(&got, &brute_rank(scored, self.k))
    }
}

/// Exhaustive candidate depth, so stage 1 cannot drop a document.
pub fn multi_instance(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let inst = MultiInstance::random(rng);
    let depth = inst.total_tokens().max(inst.k);
    inst.check(depth)
}
