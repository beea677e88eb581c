//! MultVAE training, evaluation against a popularity baseline, and a round
//! trip through the model file format.
//!
//! ```bash
//! cargo run --release --example train_multvae
//! ```

use std::error::Error;

use liverec::dataset::split_holdout;
use liverec::recommend::{
    evaluate, read_model_file, train_multvae_with, write_model_file, Model, ModelBundle, PopularityScorer, Scorer,
    TrainingConfig,
};
use liverec::synth::two_block_matrix;

pub fn run() -> Result<(), Box<dyn Error>> {
    let m = two_block_matrix(100, 40, 0.3, 7);
    let split = split_holdout(&m, 0.3, 0.3, 3)?;
    let cfg = TrainingConfig {
        hidden: 32,
        latent: 8,
        epochs: 60,
        batch_size: 16,
        learning_rate: 0.1,
        beta: 0.2,
        beta_anneal_steps: 200,
        rng_seed: 1,
        ..TrainingConfig::default()
    };
    let vae = train_multvae_with(&split.train, &cfg, |epoch, loss| {
        if epoch % 10 == 0 {
            println!("epoch {epoch:>3}  loss {loss:.3}");
        }
    })?;
    let model = Model::MultVae(vae);

    let pop = evaluate(&PopularityScorer::fit(&split.train), &split, 10)?;
    let ours = evaluate(&model, &split, 10)?;
    println!(
        "recall@10 {:.3} vs popularity {:.3}; ndcg@10 {:.3} vs {:.3} ({} users)",
        ours.recall_at_k, pop.recall_at_k, ours.ndcg_at_k, pop.ndcg_at_k, ours.n_eval_users
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("multvae.lrs");
    let bundle = ModelBundle::new(model, cfg, vec![]);
    write_model_file(&path, &bundle)?;
    let loaded = read_model_file(&path)?;
    let user = [(0, 1), (3, 1), (8, 1)];
    let same = bundle.model.score(&user) == loaded.model.score(&user);
    println!(
        "saved {} bytes to {}; reloaded scores identical: {same}",
        std::fs::metadata(&path)?.len(),
        path.display()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run()
}
