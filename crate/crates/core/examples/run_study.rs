//! A complete study session over HTTP, with mock scrobble and catalog
//! services standing in for the real ones.
//!
//! Two models are trained on the mock world's listening data and assigned
//! round-robin. One participant walks through consent, username, waiting,
//! ten track ratings and the closing questionnaire; the admin export then
//! prints the recorded responses.
//!
//! ```bash
//! cargo run --example run_study
//! cargo run --example run_study -- --serve   # keep the backend up for the UI
//! ```

use std::error::Error;
use std::time::Duration;

use liverec::dataset::build_interaction_matrix;
use liverec::preview::mock::{MockCatalog, MockCatalogServer};
use liverec::preview::PreviewConfig;
use liverec::recommend::{train_mf, train_multvae, Model, ModelBundle, TrainingConfig};
use liverec::scrobble::mock::{MockOptions, MockScrobbleServer, MockWorld};
use liverec::scrobble::ScrobbleApiConfig;
use liverec::study::{serve, ModelRegistry, QuestionSet, ServedModel, StudyConfig, StudyService};
use serde_json::{json, Value};

const TOKEN: &str = "example-token";

fn models(world: &MockWorld) -> Result<ModelRegistry, Box<dyn Error>> {
    let ds = world.to_dataset();
    let cfg = TrainingConfig {
        factors: 16,
        als_iterations: 8,
        hidden: 32,
        latent: 8,
        epochs: 10,
        batch_size: 8,
        ..TrainingConfig::default()
    };
    let mf = train_mf(&build_interaction_matrix(&ds, false), &cfg)?;
    let vae = train_multvae(&build_interaction_matrix(&ds, true), &cfg)?;
    Ok(ModelRegistry::from_models(vec![
        ServedModel::new("mf", ModelBundle::new(Model::Mf(mf), cfg.clone(), ds.track_keys()))?,
        ServedModel::new("vae", ModelBundle::new(Model::MultVae(vae), cfg, ds.track_keys()))?,
    ]))
}

async fn study(keep_serving: bool) -> Result<(), Box<dyn Error>> {
    let world = MockWorld::synthetic(30, 400, 200..600, 3, 21);
    let registry = models(&world)?;
    let catalog = MockCatalog::covering(world.to_dataset().tracks(), |i, _| i % 9 == 4);
    let scrobble = MockScrobbleServer::start(world, MockOptions::default()).await?;
    let catalog = MockCatalogServer::start(catalog).await?;

    let dir = tempfile::tempdir()?;
    let cfg = StudyConfig {
        admin_token: TOKEN.into(),
        scrobble: ScrobbleApiConfig {
            page_size: 100,
            min_request_interval_ms: 0,
            ..ScrobbleApiConfig::new(scrobble.base_url())
        },
        catalog: PreviewConfig::new(catalog.base_url()),
        eligibility_threshold: 150,
        log_path: dir.path().join("responses.ndjson"),
        ..StudyConfig::default()
    };
    let service = StudyService::new(cfg, QuestionSet::default(), registry)?;
    let server = serve(service, "127.0.0.1:0").await?;
    let base = server.base_url();
    println!("study backend at {base}");

    let http = reqwest::Client::new();
    let created: Value = http.post(format!("{base}/api/sessions")).send().await?.json().await?;
    let api = format!(
        "{base}/api/sessions/{}",
        created["session_id"].as_str().unwrap_or_default()
    );
    http.post(format!("{api}/consent")).send().await?.error_for_status()?;
    http.post(format!("{api}/username"))
        .json(&json!({"username": "user4", "market": "US"}))
        .send()
        .await?
        .error_for_status()?;

    loop {
        let status: Value = http.get(format!("{api}/status")).send().await?.json().await?;
        println!("status {status}");
        match status["state"].as_str() {
            Some("collecting" | "recommending") => tokio::time::sleep(Duration::from_millis(50)).await,
            Some("rating") => break,
            _ => return Err(format!("session stopped: {status}").into()),
        }
    }

    let items: Value = http.get(format!("{api}/items")).send().await?.json().await?;
    for item in items["items"].as_array().into_iter().flatten() {
        let text = |k: &str| item[k].as_str().unwrap_or_default().to_string();
        println!(
            "{:>2}. {} - {}",
            item["rank"].as_u64().unwrap_or(0),
            text("artist"),
            text("title")
        );
        http.post(format!("{api}/responses/track"))
            .json(&json!({"rank": item["rank"], "answers": {"fit": 4, "familiar": 2, "comment": "nice"}}))
            .send()
            .await?
            .error_for_status()?;
    }
    let done: Value = http
        .post(format!("{api}/responses/global"))
        .json(&json!({"answers": {"overall": 4, "diversity": 3}}))
        .send()
        .await?
        .json()
        .await?;
    println!("final state {}", done["state"]);

    let export = http
        .get(format!("{base}/api/export"))
        .bearer_auth(TOKEN)
        .send()
        .await?
        .text()
        .await?;
    println!("export: {} records", export.lines().count());
    if let Some(first) = export.lines().next() {
        println!("first record {first}");
    }

    if keep_serving {
        println!("serving until ctrl-c");
        tokio::signal::ctrl_c().await?;
    }
    Ok(())
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let keep_serving = std::env::args().any(|a| a == "--serve");
    tokio::runtime::Runtime::new()?.block_on(study(keep_serving))
}

fn main() -> Result<(), Box<dyn Error>> {
    run()
}
