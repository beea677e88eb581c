//! Implicit-feedback matrix factorization trained by alternating least squares.
//!
//! Every observed cell has preference 1 and confidence `1 + α·count`; every
//! unobserved cell has preference 0 and confidence 1. Each half-step solves
//! the regularized weighted normal equations exactly, row by row:
//!
//! ```text
//! (YᵀY + Σ_{i∈row} (c_i − 1) y_i y_iᵀ + λI) x = Σ_{i∈row} c_i y_i
//! ```
//!
//! Training runs item step then user step in each iteration, so the last
//! half-step of training is the same solve that [`MfModel::fold_in`] performs
//! for an unseen user.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{axpy, cholesky_solve, dot, Matrix};
use super::{RecommendError, Scorer, TrainingConfig};
use crate::dataset::InteractionMatrix;

const INIT_BOUND: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct MfModel {
    user_factors: Matrix,
    item_factors: Matrix,
    regularization: f64,
    alpha: f64,
    item_gram: Matrix,
}

impl MfModel {
    pub fn new(
        user_factors: Matrix,
        item_factors: Matrix,
        regularization: f64,
        alpha: f64,
    ) -> Result<Self, RecommendError> {
        if user_factors.cols() != item_factors.cols() {
            return Err(RecommendError::DimensionMismatch(format!(
                "user factors have {} columns, item factors {}",
                user_factors.cols(),
                item_factors.cols()
            )));
        }
        if item_factors.cols() == 0 {
            return Err(RecommendError::InvalidConfig("factors must be at least 1".into()));
        }
        // false for NaN as well
        let in_range = regularization > 0.0 && alpha >= 0.0;
        if !in_range {
            return Err(RecommendError::InvalidConfig("need λ > 0 and α ≥ 0".into()));
        }
        if !user_factors.is_finite() || !item_factors.is_finite() {
            return Err(RecommendError::NonFiniteValue);
        }
        let item_gram = item_factors.gram();
        Ok(Self {
            user_factors,
            item_factors,
            regularization,
            alpha,
            item_gram,
        })
    }

    pub fn factors(&self) -> usize {
        self.item_factors.cols()
    }

    pub fn n_users(&self) -> usize {
        self.user_factors.rows()
    }

    pub fn n_items(&self) -> usize {
        self.item_factors.rows()
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn user_factors(&self) -> &Matrix {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &Matrix {
        &self.item_factors
    }

    /// Solves the user half-step for a user unseen at training time against
    /// the frozen item factors. Indices `>= n_items` are ignored.
    pub fn fold_in(&self, user_vector: &[(usize, u32)]) -> Vec<f64> {
        let row: Vec<(usize, u32)> = user_vector
            .iter()
            .copied()
            .filter(|&(i, c)| i < self.n_items() && c > 0)
            .collect();
        solve_row(
            &self.item_gram,
            &self.item_factors,
            &row,
            self.alpha,
            self.regularization,
        )
        .expect("λ > 0 keeps the system positive definite")
    }

    /// Scores every item for a latent user vector.
    pub fn scores_for(&self, user_factor: &[f64]) -> Vec<f64> {
        self.item_factors.mul_vec(user_factor)
    }
}

impl Scorer for MfModel {
    fn n_items(&self) -> usize {
        self.item_factors.rows()
    }

    fn score(&self, input: &[(usize, u32)]) -> Vec<f64> {
        self.scores_for(&self.fold_in(input))
    }
}

fn solve_row(gram: &Matrix, fixed: &Matrix, row: &[(usize, u32)], alpha: f64, lambda: f64) -> Option<Vec<f64>> {
    let d = fixed.cols();
    let mut a = gram.clone();
    a.add_diagonal(lambda);
    let mut b = vec![0.0; d];
    for &(j, count) in row {
        let y = fixed.row(j);
        let confidence = 1.0 + alpha * f64::from(count);
        a.add_outer(confidence - 1.0, y);
        axpy(confidence, y, &mut b);
    }
    cholesky_solve(&a, &b)
}

fn half_step(
    target: &mut Matrix,
    fixed: &Matrix,
    rows: &[Vec<(usize, u32)>],
    alpha: f64,
    lambda: f64,
) -> Result<(), RecommendError> {
    let gram = fixed.gram();
    for (r, row) in rows.iter().enumerate() {
        let x = solve_row(&gram, fixed, row, alpha, lambda).ok_or(RecommendError::SingularSystem)?;
        target.row_mut(r).copy_from_slice(&x);
    }
    Ok(())
}

/// The weighted regularized objective
/// `Σ_{u,i} c_ui (p_ui − x_u·y_i)² + λ(Σ‖x_u‖² + Σ‖y_i‖²)` over every cell.
pub fn mf_objective(
    m: &InteractionMatrix,
    user_factors: &Matrix,
    item_factors: &Matrix,
    alpha: f64,
    lambda: f64,
) -> f64 {
    // Σ over all cells of s² computed as Σ_u x_uᵀ (YᵀY) x_u, then observed
    // cells are corrected from weight-1 zero targets to their true terms.
    let gram = item_factors.gram();
    let mut total = 0.0;
    for u in 0..m.n_users() {
        let x = user_factors.row(u);
        total += dot(x, &gram.mul_vec(x));
        for &(i, count) in m.row(u) {
            let s = dot(x, item_factors.row(i));
            let c = 1.0 + alpha * f64::from(count);
            total += c * (1.0 - s).powi(2) - s * s;
        }
    }
    let norms: f64 = user_factors
        .as_slice()
        .iter()
        .chain(item_factors.as_slice())
        .map(|v| v * v)
        .sum();
    total + lambda * norms
}

/// Trains with [`train_mf_with`] and no per-iteration callback.
pub fn train_mf(m: &InteractionMatrix, cfg: &TrainingConfig) -> Result<MfModel, RecommendError> {
    train_mf_with(m, cfg, |_, _| {})
}

/// Runs `cfg.als_iterations` full ALS iterations. `on_iteration` receives the
/// 1-based iteration number and the objective after it.
///
/// Factors are initialized uniformly in `[-0.01, 0.01]` from `cfg.rng_seed`.
/// After the last iteration the item factors are rounded to `f32` and one
/// more user step is solved against them, so the stored model is exactly
/// representable in a model file and its user factors are the fold-in
/// solutions of the training rows.
pub fn train_mf_with<F>(
    m: &InteractionMatrix,
    cfg: &TrainingConfig,
    mut on_iteration: F,
) -> Result<MfModel, RecommendError>
where
    F: FnMut(usize, f64),
{
    cfg.validate()?;
    if m.n_users() == 0 || m.n_items() == 0 {
        return Err(RecommendError::EmptyMatrix);
    }
    let (alpha, lambda, d) = (cfg.alpha, cfg.regularization, cfg.factors);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut users = Matrix::uniform(m.n_users(), d, INIT_BOUND, &mut rng);
    let mut items = Matrix::uniform(m.n_items(), d, INIT_BOUND, &mut rng);
    let user_rows: Vec<Vec<(usize, u32)>> = m.rows().map(<[_]>::to_vec).collect();
    let item_rows = m.columns();

    for iteration in 1..=cfg.als_iterations {
        half_step(&mut items, &users, &item_rows, alpha, lambda)?;
        half_step(&mut users, &items, &user_rows, alpha, lambda)?;
        let objective = mf_objective(m, &users, &items, alpha, lambda);
        if !objective.is_finite() {
            return Err(RecommendError::NonFiniteValue);
        }
        tracing::debug!(iteration, objective, "als iteration");
        on_iteration(iteration, objective);
    }

    items.round_to_f32();
    half_step(&mut users, &items, &user_rows, alpha, lambda)?;
    users.round_to_f32();
    MfModel::new(users, items, lambda, alpha)
}
