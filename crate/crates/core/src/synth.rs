//! Seeded synthetic data: Zipf-distributed listening logs and interaction
//! matrices with planted low-rank structure. Used by the examples, the test
//! suites and the mock fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::dataset::{Dataset, InteractionMatrix, ListeningEvent};

/// Artist and title for synthetic track `t`.
pub fn track_names(t: usize) -> (String, String) {
    (format!("Artist {}", t % 97), format!("Track {t}"))
}

/// `n_events` plays by up to `n_users` users over up to `n_tracks` tracks,
/// with track popularity following a Zipf law of the given exponent.
pub fn zipf_dataset(n_users: usize, n_tracks: usize, n_events: usize, exponent: f64, seed: u64) -> Dataset {
    assert!(n_users > 0 && n_tracks > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zipf = Zipf::new(n_tracks as f64, exponent).expect("valid zipf parameters");
    let events: Vec<ListeningEvent> = (0..n_events)
        .map(|_| {
            let user = rng.random_range(0..n_users);
            let track = zipf.sample(&mut rng) as usize - 1;
            let (artist, title) = track_names(track);
            let ts = rng.random_range(1_500_000_000u64..1_700_000_000);
            ListeningEvent::new(&format!("user{user}"), &artist, &title, ts).expect("valid event")
        })
        .collect();
    Dataset::from_events(events)
}

/// A count matrix whose preference pattern is exactly `U Vᵀ` for binary user
/// memberships `U` (each user in one or more of `rank` groups) and one-hot
/// item groups `V`. Observed counts are drawn from `1..=5`.
pub fn planted_rank_matrix(n_users: usize, n_items: usize, rank: usize, seed: u64) -> InteractionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let item_group: Vec<usize> = (0..n_items).map(|i| i % rank).collect();
    let rows = (0..n_users)
        .map(|_| {
            let mut groups: Vec<bool> = (0..rank).map(|_| rng.random_bool(0.3)).collect();
            if !groups.iter().any(|&g| g) {
                groups[rng.random_range(0..rank)] = true;
            }
            (0..n_items)
                .filter(|&i| groups[item_group[i]])
                .map(|i| (i, rng.random_range(1..=5)))
                .collect()
        })
        .collect();
    InteractionMatrix::from_rows(n_items, rows, false)
}

/// Two user communities with disjoint item blocks: the first half of the users
/// interacts only with the first half of the items and vice versa. Each user
/// picks each in-block item independently with probability `density`, and
/// always has at least two items.
pub fn two_block_matrix(n_users: usize, n_items: usize, density: f64, seed: u64) -> InteractionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_items = n_items / 2;
    let rows = (0..n_users)
        .map(|u| {
            let block = if u < n_users / 2 {
                0..half_items
            } else {
                half_items..n_items
            };
            let start = block.start;
            let mut row: Vec<(usize, u32)> = block.filter(|_| rng.random_bool(density)).map(|i| (i, 1)).collect();
            if row.len() < 2 {
                row = vec![(start, 1), (start + 1, 1)];
            }
            row
        })
        .collect();
    InteractionMatrix::from_rows(n_items, rows, true)
}
