use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, ListeningEvent};

/// Merges freshly collected events into a base dataset.
///
/// The result holds the union of both event sets with exact duplicates
/// collapsed. Users are laid out in an order shuffled by `seed`; each user's
/// events are sorted by timestamp, artist, then title. The output depends only
/// on the event union and the seed, so merging is commutative and
/// associative at the event level.
pub fn top_up_merge(base: &Dataset, fresh: &Dataset, seed: u64) -> Dataset {
    let mut by_user: BTreeMap<&str, BTreeSet<(u64, &str, &str)>> = BTreeMap::new();
    for e in base.events().iter().chain(fresh.events()) {
        by_user.entry(e.user_id.as_str()).or_default().insert((
            e.timestamp,
            e.artist_name.as_str(),
            e.track_title.as_str(),
        ));
    }
    let mut users: Vec<&str> = by_user.keys().copied().collect();
    users.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let events = users.into_iter().flat_map(|user| {
        by_user[user]
            .iter()
            .map(move |&(timestamp, artist, title)| ListeningEvent {
                user_id: user.to_string(),
                artist_name: artist.to_string(),
                track_title: title.to_string(),
                timestamp,
            })
    });
    Dataset::from_events(events.collect::<Vec<_>>())
}
