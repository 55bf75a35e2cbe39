//! Run-vs-qrels effectiveness metrics.
//!
//! nDCG uses linear gain (the grade) and a `log2(rank + 1)` discount.
//! Queries present in the run but not in the qrels are skipped.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::{Qrels, Run, ScoredDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Ndcg(usize),
    Mrr(usize),
    Recall(usize),
}

impl Metric {
    pub fn cutoff(self) -> usize {
        match self {
            Metric::Ndcg(k) | Metric::Mrr(k) | Metric::Recall(k) => k,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg(k) => write!(f, "nDCG@{k}"),
            Metric::Mrr(k) => write!(f, "MRR@{k}"),
            Metric::Recall(k) => write!(f, "Recall@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    /// Case-insensitive `name@k` with name one of ndcg, mrr, recall.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown metric `{s}` (expected nDCG@k, MRR@k or Recall@k)"));
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(Error::BadCutoff);
        }
        match name.trim().to_ascii_lowercase().as_str() {
            "ndcg" => Ok(Metric::Ndcg(k)),
            "mrr" => Ok(Metric::Mrr(k)),
            "recall" => Ok(Metric::Recall(k)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub metric: Metric,
    pub per_query: IndexMap<String, f64>,
    /// Mean over evaluated queries; 0 when none were evaluated.
    pub mean: f64,
}

impl MetricResult {
    fn from_per_query(metric: Metric, per_query: IndexMap<String, f64>) -> Self {
        let mean = if per_query.is_empty() {
            0.0
        } else {
            per_query.values().sum::<f64>() / per_query.len() as f64
        };
        Self { metric, per_query, mean }
    }
}

fn check_cutoff(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::BadCutoff);
    }
    Ok(())
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// DCG of a ranked list over the first `k` positions.
fn dcg(grades: impl Iterator<Item = u32>, k: usize) -> f64 {
    grades
        .take(k)
        .enumerate()
        .map(|(i, g)| f64::from(g) / discount(i + 1))
        .sum()
}

fn per_query<'a>(
    run: &'a Run,
    qrels: &'a Qrels,
) -> impl Iterator<Item = (&'a str, &'a [ScoredDoc], &'a IndexMap<String, u32>)> + 'a {
    run.iter()
        .filter_map(move |(qid, docs)| qrels.for_query(qid).map(|judged| (qid, docs, judged)))
}

pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    check_cutoff(k)?;
    let mut out = IndexMap::new();
    for (qid, docs, judged) in per_query(run, qrels) {
        let mut ideal: Vec<u32> = judged.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg(ideal.into_iter(), k);
        let value = if idcg == 0.0 {
            0.0
        } else {
            dcg(docs.iter().map(|d| judged.get(&d.doc_id).copied().unwrap_or(0)), k) / idcg
        };
        out.insert(qid.to_string(), value);
    }
    Ok(MetricResult::from_per_query(Metric::Ndcg(k), out))
}

/// Reciprocal rank of the first doc graded ≥ 1 within the top `k`.
pub fn mrr_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    check_cutoff(k)?;
    let mut out = IndexMap::new();
    for (qid, docs, judged) in per_query(run, qrels) {
        let first = docs
            .iter()
            .take(k)
            .position(|d| judged.get(&d.doc_id).is_some_and(|&g| g >= 1));
        out.insert(qid.to_string(), first.map_or(0.0, |i| 1.0 / (i + 1) as f64));
    }
    Ok(MetricResult::from_per_query(Metric::Mrr(k), out))
}

/// Fraction of the docs graded ≥ 1 found in the top `k`; queries with no
/// relevant doc are skipped.
pub fn recall_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    check_cutoff(k)?;
    let mut out = IndexMap::new();
    for (qid, docs, judged) in per_query(run, qrels) {
        let relevant = judged.values().filter(|&&g| g >= 1).count();
        if relevant == 0 {
            continue;
        }
        let found = docs
            .iter()
            .take(k)
            .filter(|d| judged.get(&d.doc_id).is_some_and(|&g| g >= 1))
            .count();
        out.insert(qid.to_string(), found as f64 / relevant as f64);
    }
    Ok(MetricResult::from_per_query(Metric::Recall(k), out))
}

pub fn evaluate(run: &Run, qrels: &Qrels, metric: Metric) -> Result<MetricResult> {
    match metric {
        Metric::Ndcg(k) => ndcg_at_k(run, qrels, k),
        Metric::Mrr(k) => mrr_at_k(run, qrels, k),
        Metric::Recall(k) => recall_at_k(run, qrels, k),
    }
}

/// `metric<TAB>query_id<TAB>value` lines, then `metric<TAB>all<TAB>mean`,
/// values with 6 decimals.
pub fn metrics_report(results: &[MetricResult]) -> String {
    let mut out = String::new();
    for r in results {
        for (qid, v) in &r.per_query {
            out.push_str(&format!("{}\t{qid}\t{v:.6}\n", r.metric));
        }
        out.push_str(&format!("{}\tall\t{:.6}\n", r.metric, r.mean));
    }
    out
}
