//! Query-document relevance scoring for every model type.
//!
//! All reductions accumulate in 64-bit and return 32-bit results.

use crate::encode::{Model, Side, Similarity};
use crate::error::{Error, Result};
use crate::types::{Embedding, MultiEmbedding, SparseEmbedding};

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimMismatch { expected: a, found: b });
    }
    Ok(())
}

/// Accumulates from +0.0 (`Iterator::sum` starts at -0.0), so an exactly
/// zero score is always +0.0.
pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (&x, &y)| acc + f64::from(x) * f64::from(y))
}

fn cosine_unchecked(a: &[f32], b: &[f32]) -> f32 {
    let na = dot_f64(a, a).sqrt();
    let nb = dot_f64(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot_f64(a, b) / (na * nb)) as f32
}

pub fn dot(a: &[f32], b: &[f32]) -> Result<f32> {
    check_dims(a.len(), b.len())?;
    Ok(dot_f64(a, b) as f32)
}

/// Cosine similarity; 0 when either vector is all zeros.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f32> {
    check_dims(a.len(), b.len())?;
    Ok(cosine_unchecked(a, b))
}

pub fn similarity(sim: Similarity, a: &[f32], b: &[f32]) -> Result<f32> {
    match sim {
        Similarity::Dot => dot(a, b),
        Similarity::Cosine => cosine(a, b),
    }
}

pub(crate) fn similarity_unchecked(sim: Similarity, a: &[f32], b: &[f32]) -> f32 {
    match sim {
        Similarity::Dot => dot_f64(a, b) as f32,
        Similarity::Cosine => cosine_unchecked(a, b),
    }
}

/// Merge-join over the two sorted entry lists.
pub fn sparse_dot(a: &SparseEmbedding, b: &SparseEmbedding) -> f32 {
    let (a, b) = (a.entries(), b.entries());
    let (mut i, mut j) = (0, 0);
    let mut acc = 0f64;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += f64::from(a[i].1) * f64::from(b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    acc as f32
}

/// Late interaction: for each query token, the best-matching doc token's
/// similarity, summed over query tokens.
pub fn max_sim(q: &MultiEmbedding, d: &MultiEmbedding, sim: Similarity) -> Result<f32> {
    check_dims(q.dim(), d.dim())?;
    Ok(max_sim_flat(q, d.matrix().as_slice(), sim))
}

/// `max_sim` against doc token rows stored flat with the query's width.
pub(crate) fn max_sim_flat(q: &MultiEmbedding, d: &[f32], sim: Similarity) -> f32 {
    let mut total = 0f64;
    for q_row in q.rows() {
        let best = d
            .chunks_exact(q.dim())
            .map(|d_row| similarity_unchecked(sim, q_row, d_row))
            .fold(f32::NEG_INFINITY, f32::max);
        total += f64::from(best);
    }
    total as f32
}

/// Similarity between two embeddings of the same kind.
pub fn score_embeddings(q: &Embedding, d: &Embedding, sim: Similarity) -> Result<f32> {
    match (q, d) {
        (Embedding::Dense(a), Embedding::Dense(b)) => similarity(sim, a.as_slice(), b.as_slice()),
        (Embedding::Sparse(a), Embedding::Sparse(b)) => Ok(sparse_dot(a, b)),
        (Embedding::Multi(a), Embedding::Multi(b)) => max_sim(a, b, sim),
        _ => Err(Error::ConfigConflict(
            "query and document embeddings are of different kinds".into(),
        )),
    }
}

/// Scores `docs` against `query`; output order follows input order.
pub fn score_pairs<S: AsRef<str>>(model: &Model, query: &str, docs: &[S]) -> Result<Vec<f32>> {
    if docs.is_empty() {
        return Err(Error::InvalidConfig("score_pairs needs at least one document".into()));
    }
    match model {
        Model::Bi(bi) => {
            let q = bi.encode(query, Side::Query)?;
            docs.iter()
                .map(|d| {
                    let emb = bi.encode(d.as_ref(), Side::Doc)?;
                    score_embeddings(&q, &emb, bi.config.similarity_function)
                })
                .collect()
        }
        Model::Cross(cross) => docs.iter().map(|d| cross.score(query, d.as_ref())).collect(),
    }
}
