//! Crawling a scrobble API: social-graph expansion, eligibility probes and
//! paginated history downloads, against an in-process mock server.
//!
//! ```bash
//! cargo run --example crawl_mock
//! ```

use std::error::Error;

use liverec::dataset::Dataset;
use liverec::scrobble::mock::{MockOptions, MockScrobbleServer, MockWorld};
use liverec::scrobble::{CrawlPlan, ScrobbleApiConfig, ScrobbleClient};

async fn crawl() -> Result<(), Box<dyn Error>> {
    let world = MockWorld::synthetic(40, 500, 50..300, 4, 11);
    let server = MockScrobbleServer::start(world, MockOptions::default()).await?;
    let client = ScrobbleClient::new(ScrobbleApiConfig {
        page_size: 50,
        min_request_interval_ms: 2,
        ..ScrobbleApiConfig::new(server.base_url())
    })?;

    let plan = CrawlPlan {
        seed_usernames: vec!["user0".into()],
        target_user_count: 12,
        rng_seed: 5,
        max_friends_per_user: 10,
    };
    let found = client.crawl_social_graph(&plan).await?;
    println!(
        "crawled {} users (graph exhausted: {})",
        found.usernames.len(),
        found.exhausted
    );

    let mut events = Vec::new();
    for user in &found.usernames {
        let probe = client.check_eligibility(user, 150).await?;
        if !probe.eligible {
            println!("  {user}: {} events, below threshold", probe.event_count);
            continue;
        }
        let history = client
            .fetch_user_history_with_progress(user, None, |done, total| {
                if done == total {
                    println!("  {user}: {total} pages");
                }
            })
            .await?;
        events.extend(history);
    }
    let ds = Dataset::from_events(events);
    println!(
        "dataset: {} events, {} users, {} tracks, {} requests made",
        ds.n_events(),
        ds.n_users(),
        ds.n_tracks(),
        server.request_count()
    );
    Ok(())
}

pub fn run() -> Result<(), Box<dyn Error>> {
    tokio::runtime::Runtime::new()?.block_on(crawl())
}

fn main() -> Result<(), Box<dyn Error>> {
    run()
}
