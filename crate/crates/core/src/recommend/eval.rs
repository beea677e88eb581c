use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::rank::recommend_top_n;
use super::{RecommendError, Scorer};
use crate::dataset::{InteractionMatrix, TrainSplit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall_at_k: f64,
    pub ndcg_at_k: f64,
    pub k: usize,
    pub n_eval_users: usize,
}

/// Scores every item by the number of training users who interacted with it.
#[derive(Clone, Debug)]
pub struct PopularityScorer {
    popularity: Vec<f64>,
}

impl PopularityScorer {
    pub fn fit(train: &InteractionMatrix) -> Self {
        Self {
            popularity: train.item_popularity().into_iter().map(|p| p as f64).collect(),
        }
    }
}

impl Scorer for PopularityScorer {
    fn n_items(&self) -> usize {
        self.popularity.len()
    }

    fn score(&self, _input: &[(usize, u32)]) -> Vec<f64> {
        self.popularity.clone()
    }
}

/// Mean recall@k and NDCG@k over the split's validation users, scoring each
/// from its input items only and excluding those items from the ranking.
pub fn evaluate<S: Scorer + ?Sized>(scorer: &S, split: &TrainSplit, k: usize) -> Result<EvalReport, RecommendError> {
    if scorer.n_items() != split.train.n_items() {
        return Err(RecommendError::DimensionMismatch(format!(
            "model has {} items, split has {}",
            scorer.n_items(),
            split.train.n_items()
        )));
    }
    evaluate_scores(split, k, |input| scorer.score(input))
}

/// [`evaluate`] with an arbitrary scoring function.
pub fn evaluate_scores<F>(split: &TrainSplit, k: usize, mut score: F) -> Result<EvalReport, RecommendError>
where
    F: FnMut(&[(usize, u32)]) -> Vec<f64>,
{
    let users: Vec<_> = split
        .validation_users
        .iter()
        .filter(|v| !v.held_out.is_empty())
        .collect();
    if users.is_empty() || k == 0 {
        return Err(RecommendError::EmptyValidation);
    }
    let mut recall_sum = 0.0;
    let mut ndcg_sum = 0.0;
    for user in &users {
        let scores = score(&user.input);
        let history: HashSet<usize> = user.input.iter().map(|&(i, _)| i).collect();
        let held_out: HashSet<usize> = user.held_out.iter().copied().collect();
        let top = recommend_top_n(&scores, &history, k);

        let mut hits = 0usize;
        let mut dcg = 0.0;
        for (pos, &(item, _)) in top.items.iter().enumerate() {
            if held_out.contains(&item) {
                hits += 1;
                dcg += 1.0 / ((pos + 2) as f64).log2();
            }
        }
        let ideal = k.min(held_out.len());
        let idcg: f64 = (0..ideal).map(|pos| 1.0 / ((pos + 2) as f64).log2()).sum();
        recall_sum += hits as f64 / ideal as f64;
        ndcg_sum += dcg / idcg;
    }
    let n = users.len() as f64;
    Ok(EvalReport {
        recall_at_k: recall_sum / n,
        ndcg_at_k: ndcg_sum / n,
        k,
        n_eval_users: users.len(),
    })
}
