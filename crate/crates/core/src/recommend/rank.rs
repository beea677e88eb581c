use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// Items ordered by descending score; ties by ascending item index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub items: Vec<(usize, f64)>,
    pub n: usize,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_ids(&self) -> Vec<usize> {
        self.items.iter().map(|&(i, _)| i).collect()
    }
}

/// Returns the `n` best-scoring items not in `history`. NaN scores are never
/// recommended.
pub fn recommend_top_n(scores: &[f64], history: &HashSet<usize>, n: usize) -> RankedList {
    let mut candidates: Vec<(usize, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|(i, s)| !history.contains(i) && !s.is_nan())
        .collect();
    let by_rank =
        |a: &(usize, f64), b: &(usize, f64)| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0));
    if n < candidates.len() {
        candidates.select_nth_unstable_by(n, by_rank);
        candidates.truncate(n);
    }
    candidates.sort_by(by_rank);
    RankedList { items: candidates, n }
}
