//! Implicit-feedback matrix factorization with alternating least squares.
//!
//! Trains on a matrix with planted rank-4 structure, then folds in a user
//! who was never seen during training and ranks unseen items for them.
//!
//! ```bash
//! cargo run --release --example train_mf
//! ```

use std::collections::HashSet;
use std::error::Error;

use liverec::recommend::{recommend_top_n, train_mf_with, TrainingConfig};
use liverec::synth::planted_rank_matrix;

pub fn run() -> Result<(), Box<dyn Error>> {
    let m = planted_rank_matrix(150, 240, 4, 3);
    let cfg = TrainingConfig {
        factors: 8,
        alpha: 10.0,
        regularization: 0.01,
        als_iterations: 12,
        rng_seed: 1,
        ..TrainingConfig::default()
    };
    let model = train_mf_with(&m, &cfg, |it, objective| {
        println!("iteration {it:>2}  objective {objective:.3}");
    })?;

    // item i belongs to group i % 4; the newcomer likes group 1
    let newcomer: Vec<(usize, u32)> = (1..240).step_by(4).take(20).map(|i| (i, 3)).collect();
    let factor = model.fold_in(&newcomer);
    let scores = model.scores_for(&factor);
    let history: HashSet<usize> = newcomer.iter().map(|&(i, _)| i).collect();
    let top = recommend_top_n(&scores, &history, 10);
    println!("top 10 for the newcomer:");
    for (rank, (item, score)) in top.items.iter().enumerate() {
        println!(
            "  {:>2}. item {item:>3} (group {})  score {score:.3}",
            rank + 1,
            item % 4
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run()
}
