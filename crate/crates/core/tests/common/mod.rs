//! Fixtures shared by the service-level test suites.
#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use liverec::dataset::{build_interaction_matrix, Dataset};
use liverec::preview::mock::MockCatalog;
use liverec::preview::PreviewConfig;
use liverec::recommend::{train_mf, train_multvae, Model, ModelBundle, TrainingConfig};
use liverec::scrobble::mock::{MockUser, MockWorld};
use liverec::scrobble::wire::WireEvent;
use liverec::scrobble::ScrobbleApiConfig;
use liverec::study::{AssignmentPolicy, StatusView, StudyConfig, StudyService};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOKEN: &str = "s3cret";
pub const THRESHOLD: u64 = 100;
pub const PAGE_SIZE: u32 = 100;

/// A synthetic world plus three special accounts: `newbie` (below the
/// eligibility threshold), `hidden` (private) and the regular `user*` crowd.
pub fn world(seed: u64) -> MockWorld {
    let mut w = MockWorld::synthetic(30, 300, 150..400, 3, seed);
    let few: Vec<WireEvent> = w.users["user1"].events.iter().take(20).cloned().collect();
    w.add_user("newbie", few, &[]);
    let hidden = MockUser {
        public: false,
        events: w.users["user2"].events.clone(),
        friends: vec![],
    };
    w.users.insert("hidden".into(), hidden);
    w
}

/// Gives `name` exactly `n` events copied from existing users, so the
/// history spans `n / PAGE_SIZE` pages.
pub fn with_history_len(w: &mut MockWorld, name: &str, n: usize) {
    let pool: Vec<WireEvent> = w.users.values().flat_map(|u| u.events.iter().cloned()).collect();
    let events = pool.into_iter().cycle().take(n).collect();
    w.add_user(name, events, &[]);
}

pub fn dataset(w: &MockWorld) -> Dataset {
    w.to_dataset()
}

pub fn mf_bundle(ds: &Dataset) -> ModelBundle {
    let m = build_interaction_matrix(ds, false);
    let cfg = TrainingConfig {
        factors: 8,
        als_iterations: 4,
        alpha: 10.0,
        regularization: 0.05,
        rng_seed: 3,
        ..TrainingConfig::default()
    };
    let model = train_mf(&m, &cfg).unwrap();
    ModelBundle::new(Model::Mf(model), cfg, ds.track_keys())
}

pub fn vae_bundle(ds: &Dataset) -> ModelBundle {
    let m = build_interaction_matrix(ds, true);
    let cfg = TrainingConfig {
        hidden: 16,
        latent: 4,
        epochs: 3,
        batch_size: 8,
        rng_seed: 3,
        ..TrainingConfig::default()
    };
    let model = train_multvae(&m, &cfg).unwrap();
    ModelBundle::new(Model::MultVae(model), cfg, ds.track_keys())
}

/// A catalog holding every track in `ds` except a seeded `missing` fraction.
pub fn catalog(ds: &Dataset, missing: f64, seed: u64) -> MockCatalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MockCatalog::covering(ds.tracks(), |_, _| rng.random_bool(missing))
}

pub fn config(scrobble: &str, catalog: &str, log_path: &Path) -> StudyConfig {
    StudyConfig {
        admin_token: TOKEN.into(),
        scrobble: ScrobbleApiConfig {
            page_size: PAGE_SIZE,
            min_request_interval_ms: 0,
            retry_base_delay_ms: 5,
            ..ScrobbleApiConfig::new(scrobble)
        },
        catalog: PreviewConfig {
            retry_base_delay_ms: 5,
            ..PreviewConfig::new(catalog)
        },
        assignment: AssignmentPolicy::RoundRobin,
        list_length: 10,
        eligibility_threshold: THRESHOLD,
        log_path: log_path.to_path_buf(),
        log_fsync: false,
        ..StudyConfig::default()
    }
}

/// Polls until the session leaves the background-job states.
pub async fn settle(service: &StudyService, id: &str, timeout: Duration) -> StatusView {
    let start = Instant::now();
    loop {
        let status = service.status(id).unwrap();
        if !matches!(status.state, "collecting" | "recommending") {
            return status;
        }
        assert!(start.elapsed() < timeout, "session {id} stuck in {}", status.state);
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}
