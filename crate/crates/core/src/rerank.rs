//! Re-scoring an existing run with any model.

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexMap;
use rayon::prelude::*;

use crate::encode::Model;
use crate::error::{Error, Result};
use crate::score::score_pairs;
use crate::types::{Run, ScoredDoc};

/// Id to text resolution for queries or documents.
pub trait TextLookup: Sync {
    fn text(&self, id: &str) -> Option<&str>;
}

impl TextLookup for HashMap<String, String> {
    fn text(&self, id: &str) -> Option<&str> {
        self.get(id).map(String::as_str)
    }
}

impl TextLookup for BTreeMap<String, String> {
    fn text(&self, id: &str) -> Option<&str> {
        self.get(id).map(String::as_str)
    }
}

impl TextLookup for IndexMap<String, String> {
    fn text(&self, id: &str) -> Option<&str> {
        self.get(id).map(String::as_str)
    }
}

/// Re-scores the top `depth` documents of every query (all when `None`) and
/// re-sorts them. Documents past `depth` are dropped. The output tag is the
/// input tag suffixed with `name`.
pub fn re_rank(
    run: &Run,
    docs: &impl TextLookup,
    queries: &impl TextLookup,
    model: &Model,
    depth: Option<usize>,
    name: &str,
) -> Result<Run> {
    if depth == Some(0) {
        return Err(Error::InvalidConfig("re-ranking depth must be at least 1".into()));
    }
    let lists: Vec<(&str, &[ScoredDoc])> = run
        .iter()
        .map(|(qid, list)| (qid, &list[..depth.map_or(list.len(), |d| d.min(list.len()))]))
        .collect();
    let rescored: Vec<Result<Vec<(String, f32)>>> = lists
        .par_iter()
        .map(|&(qid, list)| {
            if list.is_empty() {
                return Ok(Vec::new());
            }
            let query = queries.text(qid).ok_or_else(|| Error::MissingText(qid.to_string()))?;
            let texts = list
                .iter()
                .map(|d| docs.text(&d.doc_id).ok_or_else(|| Error::MissingText(d.doc_id.clone())))
                .collect::<Result<Vec<_>>>()?;
            let scores = score_pairs(model, query, &texts)?;
            Ok(list.iter().map(|d| d.doc_id.clone()).zip(scores).collect())
        })
        .collect();
    let tag = if run.tag().is_empty() { name.to_string() } else { format!("{}-{name}", run.tag()) };
    let mut out = Run::new(tag);
    for ((qid, _), result) in lists.iter().zip(rescored) {
        out.insert(*qid, result?)?;
    }
    Ok(out)
}
