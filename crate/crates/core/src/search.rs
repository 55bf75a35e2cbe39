//! Exact top-k retrieval over the three index kinds.
//!
//! Results are ordered by descending score, ties broken by ascending doc id.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::{BiEncoder, OutputKind, Side};
use crate::error::{Error, Result};
use crate::index::{DenseFlatIndex, Index, MultiVectorIndex, SparseInvertedIndex};
use crate::score::{max_sim_flat, similarity_unchecked};
use crate::types::{DenseEmbedding, Embedding, MultiEmbedding, QueryRecord, Run, ScoredDoc, SparseEmbedding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub k: usize,
    /// Per-query-token candidate depth of the multi-vector first stage;
    /// `10 * k` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_k: Option<usize>,
}

impl SearchConfig {
    pub fn new(k: usize) -> Self {
        Self { k, candidate_k: None }
    }

    pub fn with_candidate_k(mut self, candidate_k: usize) -> Self {
        self.candidate_k = Some(candidate_k);
        self
    }

    pub fn candidate_k(&self) -> usize {
        self.candidate_k.unwrap_or(self.k.saturating_mul(10))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.candidate_k() < self.k {
            return Err(Error::InvalidConfig(format!(
                "candidate_k ({}) must be at least k ({})",
                self.candidate_k(),
                self.k
            )));
        }
        Ok(())
    }
}

/// Heap entry ordered so that the worst-ranked entry is the maximum.
struct Entry<T> {
    score: f32,
    key: T,
}

impl<T: Ord> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.key.cmp(&other.key))
    }
}

impl<T: Ord> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Ord> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Ord> Eq for Entry<T> {}

/// Keeps the best `k` (score, key) pairs seen.
struct TopK<T> {
    k: usize,
    heap: BinaryHeap<Entry<T>>,
}

impl<T: Ord> TopK<T> {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 16) + 1),
        }
    }

    fn push(&mut self, score: f32, key: T) {
        let entry = Entry { score, key };
        if self.heap.len() < self.k {
            self.heap.push(entry);
        } else if let Some(worst) = self.heap.peek() {
            if entry < *worst {
                self.heap.pop();
                self.heap.push(entry);
            }
        }
    }

    fn into_sorted(self) -> Vec<(f32, T)> {
        self.heap.into_sorted_vec().into_iter().map(|e| (e.score, e.key)).collect()
    }
}

fn top_docs<'a>(k: usize, scored: impl Iterator<Item = (f32, &'a str)>) -> Result<Vec<ScoredDoc>> {
    let mut top = TopK::new(k);
    for (score, id) in scored {
        if score.is_nan() {
            return Err(Error::InvalidScore {
                query_id: String::new(),
                doc_id: id.to_string(),
            });
        }
        top.push(score, id);
    }
    Ok(top
        .into_sorted()
        .into_iter()
        .enumerate()
        .map(|(i, (score, id))| ScoredDoc {
            doc_id: id.to_string(),
            score,
            rank: i as u32 + 1,
        })
        .collect())
}

pub fn search_dense(index: &DenseFlatIndex, query: &DenseEmbedding, k: usize) -> Result<Vec<ScoredDoc>> {
    if query.dim() != index.dim() {
        return Err(Error::DimMismatch {
            expected: index.dim(),
            found: query.dim(),
        });
    }
    let sim = index.similarity();
    top_docs(
        k,
        index
            .vectors()
            .iter_rows()
            .zip(index.doc_ids())
            .map(|(row, id)| (similarity_unchecked(sim, query.as_slice(), row), id.as_str())),
    )
}

/// Document-at-a-time merge over the query terms' posting lists. Only
/// documents sharing at least one term with the query are scored; each
/// score is accumulated over terms in ascending order.
pub fn search_sparse(index: &SparseInvertedIndex, query: &SparseEmbedding, k: usize) -> Result<Vec<ScoredDoc>> {
    let lists: Vec<(f64, &[crate::index::Posting])> = query
        .entries()
        .iter()
        .map(|&(term, w)| (f64::from(w), index.postings(term)))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut cursors = vec![0usize; lists.len()];
    let doc_ids = index.doc_ids();
    let mut scored = Vec::new();
    loop {
        let current = lists
            .iter()
            .zip(&cursors)
            .filter_map(|((_, l), &c)| l.get(c).map(|p| p.doc))
            .min();
        let Some(doc) = current else { break };
        let mut acc = 0f64;
        for ((qw, list), cursor) in lists.iter().zip(cursors.iter_mut()) {
            if let Some(p) = list.get(*cursor) {
                if p.doc == doc {
                    acc += qw * f64::from(p.weight);
                    *cursor += 1;
                }
            }
        }
        scored.push((acc as f32, doc_ids[doc as usize].as_str()));
    }
    top_docs(k, scored.into_iter())
}

/// Two stages: each query token retrieves its `candidate_k` nearest doc
/// tokens (ties to the lower token row), the owning documents form the
/// candidate set, and candidates are re-scored with exact MaxSim.
pub fn search_multi(index: &MultiVectorIndex, query: &MultiEmbedding, k: usize, candidate_k: usize) -> Result<Vec<ScoredDoc>> {
    if query.dim() != index.dim() {
        return Err(Error::DimMismatch {
            expected: index.dim(),
            found: query.dim(),
        });
    }
    let sim = index.similarity();
    let mut candidates = BTreeSet::new();
    for q_row in query.rows() {
        let mut top = TopK::new(candidate_k);
        for (row, d_row) in index.tokens().iter_rows().enumerate() {
            let s = similarity_unchecked(sim, q_row, d_row);
            if !s.is_nan() {
                top.push(s, row);
            }
        }
        candidates.extend(top.into_sorted().into_iter().map(|(_, row)| index.owner(row)));
    }
    let doc_ids = index.doc_ids();
    top_docs(
        k,
        candidates
            .into_iter()
            .map(|doc| (max_sim_flat(query, index.doc_tokens(doc), sim), doc_ids[doc].as_str())),
    )
}

pub fn search(index: &Index, query: &Embedding, config: &SearchConfig) -> Result<Vec<ScoredDoc>> {
    match (index, query) {
        (Index::Dense(i), Embedding::Dense(q)) => search_dense(i, q, config.k),
        (Index::Sparse(i), Embedding::Sparse(q)) => search_sparse(i, q, config.k),
        (Index::Multi(i), Embedding::Multi(q)) => search_multi(i, q, config.k, config.candidate_k()),
        _ => Err(Error::ConfigConflict("query embedding kind does not match the index kind".into())),
    }
}

/// Checks that `model` produces embeddings searchable in `index`.
pub fn check_compatible(index: &Index, model: &BiEncoder) -> Result<()> {
    let config = &model.config;
    if config.output_kind != index.kind() {
        return Err(Error::ConfigConflict(format!(
            "model output kind `{}` does not match index kind `{}`",
            config.output_kind.as_str(),
            index.kind().as_str()
        )));
    }
    if config.output_kind != OutputKind::Sparse && config.similarity_function != index.similarity() {
        return Err(Error::ConfigConflict(
            "model similarity function differs from the one the index was built with".into(),
        ));
    }
    if config.projection_dim() != index.dim() {
        return Err(Error::ConfigConflict(format!(
            "model width {} does not match index width {}",
            config.projection_dim(),
            index.dim()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutput {
    pub run: Run,
    /// Queries that encoded to nothing, in input order.
    pub skipped: Vec<String>,
}

/// Encodes and searches every query in parallel. Queries without any
/// token are skipped and reported; the run keeps input query order.
pub fn batch_search(
    index: &Index,
    queries: &[QueryRecord],
    model: &BiEncoder,
    config: &SearchConfig,
    tag: &str,
) -> Result<SearchOutput> {
    config.validate()?;
    check_compatible(index, model)?;
    let mut seen = HashSet::with_capacity(queries.len());
    for q in queries {
        if !seen.insert(q.query_id.as_str()) {
            return Err(Error::DuplicateQuery(q.query_id.clone()));
        }
    }
    let results: Vec<Result<Option<Vec<ScoredDoc>>>> = queries
        .par_iter()
        .map(|q| {
            let emb = match model.encode(&q.text, Side::Query) {
                Ok(e) => e,
                Err(Error::EmptyText(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            search(index, &emb, config)
                .map(Some)
                .map_err(|e| match e {
                    Error::InvalidScore { doc_id, .. } => Error::InvalidScore {
                        query_id: q.query_id.clone(),
                        doc_id,
                    },
                    other => other,
                })
        })
        .collect();
    let mut run = Run::new(tag);
    let mut skipped = Vec::new();
    for (q, result) in queries.iter().zip(results) {
        match result? {
            Some(hits) => run.insert(&q.query_id, hits.into_iter().map(|h| (h.doc_id, h.score)).collect())?,
            None => skipped.push(q.query_id.clone()),
        }
    }
    Ok(SearchOutput { run, skipped })
}
