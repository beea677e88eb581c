//! Turning a ranked track list into a playable presentation list.
//!
//! Tracks without a preview are skipped and the next candidate moves up, so
//! the list keeps model order and still reaches the requested length.
//!
//! ```bash
//! cargo run --example resolve_previews
//! ```

use std::error::Error;

use liverec::dataset::TrackKey;
use liverec::preview::mock::{MockCatalog, MockCatalogServer};
use liverec::preview::{PreviewConfig, PreviewResolver};

async fn resolve() -> Result<(), Box<dyn Error>> {
    let ranked: Vec<TrackKey> = (0..15)
        .map(|i| TrackKey::new(&format!("Artist {}", i % 5), &format!("Song {i}")))
        .collect();
    // the catalog lacks songs 2 and 6, and song 4 has no preview clip
    let mut catalog = MockCatalog::covering(&ranked, |i, _| i == 2 || i == 6);
    catalog
        .tracks
        .iter_mut()
        .filter(|t| t.title == "Song 4")
        .for_each(|t| t.preview_url = None);
    let server = MockCatalogServer::start(catalog).await?;

    let resolver = PreviewResolver::new(PreviewConfig::new(server.base_url()))?;
    let list = resolver.resolve_ranked_list(&ranked, "US", 10).await?;
    for item in &list.items {
        println!(
            "rank {:>2}  {:<22} {}",
            item.source_rank + 1,
            item.track.to_string(),
            item.preview.preview_url
        );
    }
    for d in &list.discarded {
        println!("skipped rank {:>2}  {}: {:?}", d.source_rank + 1, d.track, d.reason);
    }
    println!(
        "{} of {} resolved after examining {} candidates",
        list.len(),
        list.requested_n,
        list.consumed()
    );
    Ok(())
}

pub fn run() -> Result<(), Box<dyn Error>> {
    tokio::runtime::Runtime::new()?.block_on(resolve())
}

fn main() -> Result<(), Box<dyn Error>> {
    run()
}
