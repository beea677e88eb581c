use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, InteractionMatrix};

/// A user held out of training, scored from `input` against `held_out`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationUser {
    /// Row index in the source matrix.
    pub user: usize,
    /// Visible `(item, value)` pairs, sorted by item.
    pub input: Vec<(usize, u32)>,
    /// Hidden target items, sorted.
    pub held_out: Vec<usize>,
}

/// Strong-generalization split: validation users are removed from the
/// training matrix entirely.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainSplit {
    pub train: InteractionMatrix,
    /// Source row index of each training row.
    pub train_users: Vec<usize>,
    pub validation_users: Vec<ValidationUser>,
    /// Validation users dropped because their input or held-out set would be empty.
    pub skipped: usize,
    pub seed: u64,
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), DatasetError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(DatasetError::InvalidFraction { name, value })
    }
}

/// Moves `round(validation_fraction · n_users)` randomly chosen users to
/// validation and hides `floor(holdout_fraction · |items|)` of each one's
/// items (at least one when they have two or more items and the fraction is
/// positive). Deterministic for a fixed seed.
///
/// Training rows keep their original relative order.
pub fn split_holdout(
    m: &InteractionMatrix,
    validation_fraction: f64,
    holdout_fraction: f64,
    seed: u64,
) -> Result<TrainSplit, DatasetError> {
    check_fraction("validation_fraction", validation_fraction)?;
    check_fraction("holdout_fraction", holdout_fraction)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_users = m.n_users();
    let mut order: Vec<usize> = (0..n_users).collect();
    order.shuffle(&mut rng);
    let n_val = ((validation_fraction * n_users as f64).round() as usize).min(n_users);
    let mut is_val = vec![false; n_users];
    let mut chosen = order[..n_val].to_vec();
    chosen.sort_unstable();
    for &u in &chosen {
        is_val[u] = true;
    }

    let mut validation_users = Vec::with_capacity(n_val);
    let mut skipped = 0;
    for &u in &chosen {
        let mut row = m.row(u).to_vec();
        let len = row.len();
        let mut n_hold = (holdout_fraction * len as f64).floor() as usize;
        if holdout_fraction > 0.0 && len >= 2 {
            n_hold = n_hold.max(1);
        }
        if n_hold == 0 || n_hold >= len {
            skipped += 1;
            continue;
        }
        row.shuffle(&mut rng);
        let mut held_out: Vec<usize> = row[..n_hold].iter().map(|&(i, _)| i).collect();
        let mut input = row[n_hold..].to_vec();
        held_out.sort_unstable();
        input.sort_unstable();
        validation_users.push(ValidationUser {
            user: u,
            input,
            held_out,
        });
    }
    if skipped > 0 {
        tracing::warn!(skipped, "validation users skipped: empty input or held-out set");
    }

    let train_users: Vec<usize> = (0..n_users).filter(|&u| !is_val[u]).collect();
    let train = InteractionMatrix::from_rows(
        m.n_items(),
        train_users.iter().map(|&u| m.row(u).to_vec()).collect(),
        m.is_binarized(),
    );
    Ok(TrainSplit {
        train,
        train_users,
        validation_users,
        skipped,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n_users: usize, n_items: usize) -> InteractionMatrix {
        let rows = (0..n_users)
            .map(|u| (0..n_items).filter(|i| (u + i) % 3 != 0).map(|i| (i, 1)).collect())
            .collect();
        InteractionMatrix::from_rows(n_items, rows, true)
    }

    #[test]
    fn zero_fraction_keeps_matrix() {
        let m = matrix(10, 6);
        let split = split_holdout(&m, 0.0, 0.5, 3).unwrap();
        assert!(split.validation_users.is_empty());
        assert_eq!(split.train, m);
    }

    #[test]
    fn same_seed_same_split() {
        let m = matrix(40, 12);
        assert_eq!(
            split_holdout(&m, 0.25, 0.3, 11).unwrap(),
            split_holdout(&m, 0.25, 0.3, 11).unwrap()
        );
    }

    #[test]
    fn ten_items_twenty_percent_holds_out_two() {
        let m = InteractionMatrix::from_rows(10, vec![(0..10).map(|i| (i, 1)).collect()], true);
        let split = split_holdout(&m, 1.0, 0.2, 5).unwrap();
        let v = &split.validation_users[0];
        assert_eq!(v.held_out.len(), 2);
        assert_eq!(v.input.len(), 8);
        assert!(v.held_out.iter().all(|h| v.input.iter().all(|&(i, _)| i != *h)));
        assert_eq!(split.train.n_users(), 0);
    }

    #[test]
    fn singleton_users_are_skipped() {
        let m = InteractionMatrix::from_rows(3, vec![vec![(0, 1)], vec![(1, 1), (2, 1)]], true);
        let split = split_holdout(&m, 1.0, 0.1, 0).unwrap();
        assert_eq!(split.skipped, 1);
        assert_eq!(split.validation_users.len(), 1);
        assert_eq!(split.validation_users[0].held_out.len(), 1);
    }

    #[test]
    fn rejects_bad_fraction() {
        assert!(split_holdout(&matrix(2, 2), 1.5, 0.1, 0).is_err());
        assert!(split_holdout(&matrix(2, 2), 0.5, -0.1, 0).is_err());
    }
}
