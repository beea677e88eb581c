use std::collections::BTreeMap;

use super::Dataset;

/// Sparse user × item matrix of play counts (or 1s when binarized).
///
/// Rows are stored as item-sorted `(item, value)` lists; every stored value
/// is at least 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionMatrix {
    n_items: usize,
    rows: Vec<Vec<(usize, u32)>>,
    binarized: bool,
}

impl InteractionMatrix {
    /// Builds a matrix from per-user rows. Zero values are dropped, duplicate
    /// items within a row are summed, and rows are sorted by item.
    ///
    /// Panics if an item index is `>= n_items`.
    pub fn from_rows(n_items: usize, rows: Vec<Vec<(usize, u32)>>, binarized: bool) -> Self {
        let rows = rows
            .into_iter()
            .map(|row| {
                let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
                for (item, value) in row {
                    assert!(item < n_items, "item {item} out of range {n_items}");
                    if value > 0 {
                        *merged.entry(item).or_default() += value;
                    }
                }
                merged
                    .into_iter()
                    .map(|(i, v)| (i, if binarized { 1 } else { v }))
                    .collect()
            })
            .collect();
        Self {
            n_items,
            rows,
            binarized,
        }
    }

    /// An `n_users × n_items` matrix with no stored cells.
    pub fn empty(n_users: usize, n_items: usize) -> Self {
        Self {
            n_items,
            rows: vec![Vec::new(); n_users],
            binarized: false,
        }
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn is_binarized(&self) -> bool {
        self.binarized
    }

    pub fn row(&self, user: usize) -> &[(usize, u32)] {
        &self.rows[user]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, u32)]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn get(&self, user: usize, item: usize) -> u32 {
        let row = &self.rows[user];
        row.binary_search_by_key(&item, |&(i, _)| i)
            .map(|pos| row[pos].1)
            .unwrap_or(0)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flatten().map(|&(_, v)| u64::from(v)).sum()
    }

    /// Same sparsity pattern with every value set to 1.
    pub fn binarize(&self) -> Self {
        Self {
            n_items: self.n_items,
            rows: self
                .rows
                .iter()
                .map(|row| row.iter().map(|&(i, _)| (i, 1)).collect())
                .collect(),
            binarized: true,
        }
    }

    /// Item-major view: for each item, the `(user, value)` pairs sorted by user.
    pub fn columns(&self) -> Vec<Vec<(usize, u32)>> {
        let mut cols = vec![Vec::new(); self.n_items];
        for (u, row) in self.rows.iter().enumerate() {
            for &(i, v) in row {
                cols[i].push((u, v));
            }
        }
        cols
    }

    /// Number of users that interacted with each item.
    pub fn item_popularity(&self) -> Vec<u64> {
        let mut pop = vec![0u64; self.n_items];
        for &(i, _) in self.rows.iter().flatten() {
            pop[i] += 1;
        }
        pop
    }
}

/// Cell `(u, i)` holds the number of events of user `u` on track `i`, or 1
/// when `binarize` is set.
pub fn build_interaction_matrix(ds: &Dataset, binarize: bool) -> InteractionMatrix {
    let mut rows: Vec<BTreeMap<usize, u32>> = vec![BTreeMap::new(); ds.n_users()];
    for e in ds.events() {
        let u = ds.user_index(&e.user_id).expect("indexed user");
        let i = ds.track_index(&e.track_key()).expect("indexed track");
        *rows[u].entry(i).or_default() += 1;
    }
    InteractionMatrix::from_rows(
        ds.n_tracks(),
        rows.into_iter().map(|r| r.into_iter().collect()).collect(),
        binarize,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ListeningEvent;

    fn three_plays() -> Dataset {
        Dataset::from_events((0..3).map(|t| ListeningEvent::new("u", "a", "t", t).unwrap()))
    }

    #[test]
    fn binarized_single_cell() {
        let m = build_interaction_matrix(&three_plays(), true);
        assert_eq!((m.n_users(), m.n_items(), m.nnz()), (1, 1, 1));
        assert_eq!(m.get(0, 0), 1);
        assert!(m.is_binarized());
    }

    #[test]
    fn count_single_cell() {
        let m = build_interaction_matrix(&three_plays(), false);
        assert_eq!(m.get(0, 0), 3);
        assert_eq!(m.total(), 3);
    }

    #[test]
    fn from_rows_merges_and_drops_zeros() {
        let m = InteractionMatrix::from_rows(4, vec![vec![(3, 1), (1, 0), (3, 2), (0, 1)]], false);
        assert_eq!(m.row(0), &[(0, 1), (3, 3)]);
        assert_eq!(m.columns()[3], vec![(0, 3)]);
    }
}
