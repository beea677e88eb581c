//! Events file in, train/validation split out.
//!
//! Writes a synthetic listening log to a temporary events file, ingests it
//! back, drops rare tracks, builds the interaction matrix and splits off
//! validation users. A top-up merge of a fresh crawl closes the loop.
//!
//! ```bash
//! cargo run --example dataset_pipeline
//! ```

use std::error::Error;
use std::fs::File;
use std::io::BufReader;

use liverec::dataset::{
    build_interaction_matrix, filter_min_interactions, ingest_reader, split_holdout, top_up_merge, write_events,
};
use liverec::synth::zipf_dataset;

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("events.tsv");

    let crawled = zipf_dataset(400, 3000, 40_000, 1.05, 1);
    write_events(File::create(&path)?, crawled.events())?;
    let (ds, ingest) = ingest_reader(BufReader::new(File::open(&path)?))?;
    println!(
        "ingested {} records: {} events, {} users, {} tracks ({} duplicates, {} malformed)",
        ingest.records,
        ds.n_events(),
        ds.n_users(),
        ds.n_tracks(),
        ingest.duplicates,
        ingest.malformed.len()
    );

    let (filtered, report) = filter_min_interactions(&ds, 10);
    println!(
        "min_le 10: tracks {} -> {} (-{:.1}%), events {} -> {} (-{:.1}%)",
        report.tracks_before,
        report.tracks_after,
        report.track_reduction_pct,
        report.events_before,
        report.events_after,
        report.event_reduction_pct
    );

    let m = build_interaction_matrix(&filtered, true);
    let split = split_holdout(&m, 0.1, 0.2, 7)?;
    println!(
        "matrix {}x{} with {} nonzeros; {} training users, {} validation users ({} skipped)",
        m.n_users(),
        m.n_items(),
        m.nnz(),
        split.train.n_users(),
        split.validation_users.len(),
        split.skipped
    );

    // a later crawl overlaps the first one; the merge keeps each event once
    let fresh = zipf_dataset(450, 3000, 10_000, 1.05, 2);
    let merged = top_up_merge(&ds, &fresh, 42);
    println!(
        "top-up: {} + {} events -> {} events, {} users",
        ds.n_events(),
        fresh.n_events(),
        merged.n_events(),
        merged.n_users()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run()
}
