//! Domain types shared by every pipeline stage.
//!
//! Everything here is immutable after construction. Ranked lists always
//! follow one ordering: score descending, then `doc_id` ascending. Scores
//! are compared exactly as 32-bit values.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;

use crate::error::{Error, Result};

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(Error::InvalidId(id.to_string()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocRecord {
    pub doc_id: String,
    pub text: String,
}

impl DocRecord {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let doc_id = doc_id.into();
        check_id(&doc_id)?;
        Ok(Self {
            doc_id,
            text: text.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
}

impl QueryRecord {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let query_id = query_id.into();
        check_id(&query_id)?;
        Ok(Self {
            query_id,
            text: text.into(),
        })
    }
}

/// Row-major matrix of 32-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::DimMismatch {
                expected: rows.saturating_mul(cols),
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact on an empty slice with cols == 0 would panic
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseEmbedding(Vec<f32>);

impl DenseEmbedding {
    pub fn new(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }
}

impl From<Vec<f32>> for DenseEmbedding {
    fn from(values: Vec<f32>) -> Self {
        Self(values)
    }
}

/// Term-weight vector over a vocabulary. Only strictly positive weights are
/// stored, sorted by term id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseEmbedding {
    entries: Vec<(u32, f32)>,
}

impl SparseEmbedding {
    /// Builds from arbitrary `(term_id, weight)` pairs. Later duplicates
    /// overwrite earlier ones; non-positive weights are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f32)>) -> Self {
        let map: BTreeMap<u32, f32> = pairs.into_iter().collect();
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<u32, f32>) -> Self {
        let entries = map
            .iter()
            .filter(|(_, &w)| w > 0.0)
            .map(|(&t, &w)| (t, w))
            .collect();
        Self { entries }
    }

    /// Keeps the positive entries of a dense vector, using positions as term ids.
    pub fn from_dense(values: &[f32]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(t, &w)| (t as u32, w))
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[(u32, f32)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_map(&self) -> BTreeMap<u32, f32> {
        self.entries.iter().copied().collect()
    }

    pub fn max_term(&self) -> Option<u32> {
        self.entries.last().map(|&(t, _)| t)
    }

    pub fn densify(&self, vocab_size: usize) -> Vec<f32> {
        let mut out = vec![0.0; vocab_size];
        for &(t, w) in &self.entries {
            out[t as usize] = w;
        }
        out
    }
}

/// One vector per retained token, in token order.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiEmbedding {
    tokens: Matrix,
}

impl MultiEmbedding {
    pub fn new(tokens: Matrix) -> Result<Self> {
        if tokens.rows() == 0 {
            return Err(Error::EmptyText(None));
        }
        Ok(Self { tokens })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.rows()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.tokens.row(i)
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.tokens.iter_rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Dense(DenseEmbedding),
    Sparse(SparseEmbedding),
    Multi(MultiEmbedding),
}

/// Total order used for every ranked list: higher score first, then
/// smaller doc id.
pub fn rank_order(a_score: f32, a_id: &str, b_score: f32, b_id: &str) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_id.cmp(b_id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f32,
    pub rank: u32,
}

/// Ranked documents per query, in query insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Run {
    tag: String,
    lists: IndexMap<String, Vec<ScoredDoc>>,
}

impl Run {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            lists: IndexMap::new(),
        }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn set_tag(&mut self, tag: impl Into<String>) {
        self.tag = tag.into();
    }

    /// Adds a query's scored documents in any order; they are sorted and
    /// ranked 1..n.
    pub fn insert(&mut self, query_id: impl Into<String>, docs: Vec<(String, f32)>) -> Result<()> {
        let query_id = query_id.into();
        if self.lists.contains_key(&query_id) {
            return Err(Error::DuplicateQuery(query_id));
        }
        let mut seen = HashSet::with_capacity(docs.len());
        for (doc_id, score) in &docs {
            if score.is_nan() {
                return Err(Error::InvalidScore {
                    query_id,
                    doc_id: doc_id.clone(),
                });
            }
            if !seen.insert(doc_id.as_str()) {
                return Err(Error::DuplicateDoc(doc_id.clone()));
            }
        }
        let mut docs = docs;
        docs.sort_by(|a, b| rank_order(a.1, &a.0, b.1, &b.0));
        let ranked = docs
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| ScoredDoc {
                doc_id,
                score,
                rank: i as u32 + 1,
            })
            .collect();
        self.lists.insert(query_id, ranked);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&[ScoredDoc]> {
        self.lists.get(query_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[ScoredDoc])> + '_ {
        self.lists.iter().map(|(q, d)| (q.as_str(), d.as_slice()))
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.lists.keys().map(String::as_str)
    }

    pub fn num_queries(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    /// Keeps at most `depth` documents per query.
    pub fn truncated(&self, depth: usize) -> Run {
        let lists = self
            .lists
            .iter()
            .map(|(q, d)| (q.clone(), d.iter().take(depth).cloned().collect()))
            .collect();
        Run {
            tag: self.tag.clone(),
            lists,
        }
    }
}

/// Graded relevance judgments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Qrels {
    judgments: IndexMap<String, IndexMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` (and changes nothing) if the pair is already judged.
    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) -> bool {
        let per_query = self.judgments.entry(query_id.into()).or_default();
        let doc_id = doc_id.into();
        if per_query.contains_key(&doc_id) {
            return false;
        }
        per_query.insert(doc_id, grade);
        true
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(doc_id).copied()
    }

    pub fn for_query(&self, query_id: &str) -> Option<&IndexMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &IndexMap<String, u32>)> + '_ {
        self.judgments.iter().map(|(q, j)| (q.as_str(), j))
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(IndexMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub query: QueryRecord,
    pub docs: Vec<DocRecord>,
    pub labels: Vec<f32>,
}

impl TrainSample {
    pub fn new(query: QueryRecord, docs: Vec<DocRecord>, labels: Vec<f32>) -> Result<Self> {
        if docs.len() < 2 {
            return Err(Error::InvalidSample(format!(
                "need at least 2 documents, got {}",
                docs.len()
            )));
        }
        if docs.len() != labels.len() {
            return Err(Error::InvalidSample(format!(
                "{} documents but {} labels",
                docs.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidSample("non-finite label".into()));
        }
        let first = labels[0];
        if labels.iter().all(|&l| l == first) {
            return Err(Error::NoPreference);
        }
        Ok(Self {
            query,
            docs,
            labels,
        })
    }
}
