//! Independent nDCG evaluator: the ideal DCG is found by searching over
//! orderings rather than by sorting.

use std::collections::HashMap;

use itertools::Itertools;
use lir_core::{Qrels, Run};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn dcg_of(order: &[u32], k: usize) -> f64 {
    let mut total = 0.0;
    for (i, &g) in order.iter().enumerate().take(k) {
        total += g as f64 / ((i + 2) as f64).log2();
    }
    total
}

/// Maximum DCG@k over every ordering of `grades`, by enumeration.
pub fn ideal_by_permutation(grades: &[u32], k: usize) -> f64 {
    let take = grades.len().min(k);
    grades
        .iter()
        .copied()
        .permutations(take)
        .map(|p| dcg_of(&p, k))
        .fold(0.0, f64::max)
}

/// Maximum DCG@k over orderings, searching placements of the grade
/// multiset position by position (grades 0..=3).
pub fn ideal_by_search(grades: &[u32], k: usize) -> f64 {
    fn best(counts: [usize; 4], pos: usize, k: usize, memo: &mut HashMap<([usize; 4], usize), f64>) -> f64 {
        if pos >= k || counts.iter().all(|&c| c == 0) {
            return 0.0;
        }
        if let Some(&v) = memo.get(&(counts, pos)) {
            return v;
        }
        let mut out = f64::NEG_INFINITY;
        for g in 0..4 {
            if counts[g] > 0 {
                let mut rest = counts;
                rest[g] -= 1;
                let v = g as f64 / ((pos + 2) as f64).log2() + best(rest, pos + 1, k, memo);
                out = out.max(v);
            }
        }
        memo.insert((counts, pos), out);
        out
    }
    let mut counts = [0usize; 4];
    for &g in grades {
        counts[g as usize] += 1;
    }
    best(counts, 0, k, &mut HashMap::new())
}

pub fn ideal(grades: &[u32], k: usize) -> f64 {
    if grades.len() <= 7 {
        ideal_by_permutation(grades, k)
    } else {
        ideal_by_search(grades, k)
    }
}

pub struct Instance {
    pub run: Run,
    pub qrels: Qrels,
    pub k: usize,
    /// Per evaluated query: (query id, expected nDCG).
    pub expected: Vec<(String, f64)>,
}

/// Up to 4 queries over at most 20 docs each, grades 0..=3, with unjudged
/// retrieved docs, judged unretrieved docs and unjudged queries.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let k = rng.gen_range(1..=25);
    let mut run = Run::new("oracle");
    let mut qrels = Qrels::new();
    let mut expected = Vec::new();
    for q in 0..rng.gen_range(1..=4) {
        let qid = format!("q{q}");
        let pool: Vec<String> = (0..rng.gen_range(1..=20)).map(|d| format!("d{d}")).collect();
        let mut retrieved = pool.clone();
        retrieved.shuffle(rng);
        retrieved.truncate(rng.gen_range(1..=pool.len()));
        let scores: Vec<(String, f32)> = retrieved
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), (retrieved.len() - i) as f32))
            .collect();
        run.insert(qid.as_str(), scores).unwrap();

        if rng.gen_bool(0.15) {
            continue;
        }
        let mut grades = HashMap::new();
        for d in &pool {
            if rng.gen_bool(0.6) {
                let g = rng.gen_range(0..=3u32);
                qrels.insert(qid.as_str(), d.as_str(), g);
                grades.insert(d.clone(), g);
            }
        }
        if grades.is_empty() {
            // query absent from qrels: skipped by the evaluator
            continue;
        }
        let all: Vec<u32> = grades.values().copied().collect();
        let order: Vec<u32> = retrieved.iter().map(|d| grades.get(d).copied().unwrap_or(0)).collect();
        let idcg = ideal(&all, k);
        let value = if idcg == 0.0 { 0.0 } else { dcg_of(&order, k) / idcg };
        expected.push((qid, value));
    }
    Instance { run, qrels, k, expected }
}
