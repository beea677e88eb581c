//! Multinomial variational autoencoder over a user's item vector.
//!
//! Shapes, for `n` items, hidden width `h` and latent dimension `k`:
//!
//! ```text
//! encoder:  x̂ = x/‖x‖ ─W1[h×n]─ tanh ─W2[2k×h]─▶ (μ, log σ²)
//! sample:   z = μ + σ·ε          (z = μ when not sampling)
//! decoder:  z ─W3[h×k]─ tanh ─W4[n×h]─▶ logits
//! loss:     −Σ x_i log softmax(logits)_i + β · ½ Σ (σ² + μ² − 1 − log σ²)
//! ```
//!
//! Gradients are computed by explicit backpropagation. Training is plain
//! mini-batch SGD with a fixed learning rate and β annealed linearly from 0.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::linalg::Matrix;
use super::{RecommendError, Scorer, TrainingConfig};
use crate::dataset::InteractionMatrix;

/// All network parameters. The same layout holds gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeParams {
    pub enc_hidden_w: Matrix,
    pub enc_hidden_b: Vec<f64>,
    pub enc_out_w: Matrix,
    pub enc_out_b: Vec<f64>,
    pub dec_hidden_w: Matrix,
    pub dec_hidden_b: Vec<f64>,
    pub dec_out_w: Matrix,
    pub dec_out_b: Vec<f64>,
}

impl VaeParams {
    pub const TENSOR_NAMES: [&'static str; 8] = [
        "enc_hidden_w",
        "enc_hidden_b",
        "enc_out_w",
        "enc_out_b",
        "dec_hidden_w",
        "dec_hidden_b",
        "dec_out_w",
        "dec_out_b",
    ];

    pub fn zeros(n_items: usize, hidden: usize, latent: usize) -> Self {
        Self {
            enc_hidden_w: Matrix::zeros(hidden, n_items),
            enc_hidden_b: vec![0.0; hidden],
            enc_out_w: Matrix::zeros(2 * latent, hidden),
            enc_out_b: vec![0.0; 2 * latent],
            dec_hidden_w: Matrix::zeros(hidden, latent),
            dec_hidden_b: vec![0.0; hidden],
            dec_out_w: Matrix::zeros(n_items, hidden),
            dec_out_b: vec![0.0; n_items],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng>(n_items: usize, hidden: usize, latent: usize, rng: &mut R) -> Self {
        let glorot = |rows: usize, cols: usize, rng: &mut R| {
            Matrix::uniform(rows, cols, (6.0 / (rows + cols) as f64).sqrt(), rng)
        };
        Self {
            enc_hidden_w: glorot(hidden, n_items, rng),
            enc_hidden_b: vec![0.0; hidden],
            enc_out_w: glorot(2 * latent, hidden, rng),
            enc_out_b: vec![0.0; 2 * latent],
            dec_hidden_w: glorot(hidden, latent, rng),
            dec_hidden_b: vec![0.0; hidden],
            dec_out_w: glorot(n_items, hidden, rng),
            dec_out_b: vec![0.0; n_items],
        }
    }

    /// Shapes `(rows, cols)` of each tensor in [`Self::TENSOR_NAMES`] order;
    /// biases are `(len, 1)`.
    pub fn shapes(&self) -> [(usize, usize); 8] {
        let m = |m: &Matrix| (m.rows(), m.cols());
        let v = |v: &Vec<f64>| (v.len(), 1);
        [
            m(&self.enc_hidden_w),
            v(&self.enc_hidden_b),
            m(&self.enc_out_w),
            v(&self.enc_out_b),
            m(&self.dec_hidden_w),
            v(&self.dec_hidden_b),
            m(&self.dec_out_w),
            v(&self.dec_out_b),
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            self.enc_hidden_w.as_slice(),
            &self.enc_hidden_b,
            self.enc_out_w.as_slice(),
            &self.enc_out_b,
            self.dec_hidden_w.as_slice(),
            &self.dec_hidden_b,
            self.dec_out_w.as_slice(),
            &self.dec_out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.enc_hidden_w.as_mut_slice(),
            &mut self.enc_hidden_b,
            self.enc_out_w.as_mut_slice(),
            &mut self.enc_out_b,
            self.dec_hidden_w.as_mut_slice(),
            &mut self.dec_hidden_b,
            self.dec_out_w.as_mut_slice(),
            &mut self.dec_out_b,
        ]
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardPass {
    pub normalized_input: Vec<f64>,
    pub enc_hidden: Vec<f64>,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    /// Noise used for the reparameterization; all zeros when not sampling.
    pub eps: Vec<f64>,
    pub z: Vec<f64>,
    pub dec_hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Components of the negative ELBO.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    pub reconstruction: f64,
    pub kl: f64,
    pub loss: f64,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Evaluates the negative ELBO from forward outputs:
/// multinomial negative log-likelihood plus `β·KL(N(μ, σ²) ‖ N(0, I))`.
pub fn elbo_terms(
    logits: &[f64],
    x: &[f64],
    mu: &[f64],
    logvar: &[f64],
    beta: f64,
) -> Result<ElboTerms, RecommendError> {
    if logits.len() != x.len() || mu.len() != logvar.len() {
        return Err(RecommendError::DimensionMismatch("elbo inputs".into()));
    }
    let log_p = log_softmax(logits);
    let reconstruction: f64 = -x
        .iter()
        .zip(&log_p)
        .filter(|(&xi, _)| xi != 0.0)
        .map(|(xi, lp)| xi * lp)
        .sum::<f64>();
    let kl = 0.5
        * mu.iter()
            .zip(logvar)
            .map(|(m, lv)| lv.exp() + m * m - 1.0 - lv)
            .sum::<f64>();
    let loss = reconstruction + beta * kl;
    if !loss.is_finite() {
        return Err(RecommendError::NonFiniteValue);
    }
    Ok(ElboTerms {
        reconstruction,
        kl,
        loss,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultVaeModel {
    params: VaeParams,
    beta: f64,
}

impl MultVaeModel {
    pub fn new(params: VaeParams, beta: f64) -> Result<Self, RecommendError> {
        let n = params.enc_hidden_w.cols();
        let h = params.enc_hidden_w.rows();
        let k2 = params.enc_out_w.rows();
        let k = k2 / 2;
        let expected = [(h, n), (h, 1), (k2, h), (k2, 1), (h, k), (h, 1), (n, h), (n, 1)];
        if k2 == 0 || !k2.is_multiple_of(2) || params.shapes() != expected {
            return Err(RecommendError::DimensionMismatch(format!(
                "inconsistent MultVAE shapes {:?}",
                params.shapes()
            )));
        }
        if !params.is_finite() {
            return Err(RecommendError::NonFiniteValue);
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(RecommendError::InvalidConfig("beta must lie in [0, 1]".into()));
        }
        Ok(Self { params, beta })
    }

    pub fn params(&self) -> &VaeParams {
        &self.params
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_items(&self) -> usize {
        self.params.enc_hidden_w.cols()
    }

    pub fn hidden(&self) -> usize {
        self.params.enc_hidden_w.rows()
    }

    pub fn latent(&self) -> usize {
        self.params.enc_out_w.rows() / 2
    }

    /// Forward pass. With `sample`, `z = μ + σ·ε` with `ε ~ N(0, I)` drawn from
    /// `rng`; otherwise `z = μ` and `rng` is not touched.
    pub fn forward<R: Rng>(&self, x: &[f64], sample: bool, rng: &mut R) -> ForwardPass {
        if sample {
            let eps: Vec<f64> = (0..self.latent()).map(|_| rng.sample(StandardNormal)).collect();
            self.forward_with_noise(x, Some(&eps))
        } else {
            self.forward_with_noise(x, None)
        }
    }

    /// Forward pass with caller-supplied reparameterization noise.
    pub fn forward_with_noise(&self, x: &[f64], eps: Option<&[f64]>) -> ForwardPass {
        let p = &self.params;
        let (n, k) = (self.n_items(), self.latent());
        assert_eq!(x.len(), n, "input length must equal n_items");

        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let normalized_input: Vec<f64> = if norm > 0.0 {
            x.iter().map(|v| v / norm).collect()
        } else {
            vec![0.0; n]
        };

        let mut pre = p.enc_hidden_b.clone();
        for (i, &xi) in normalized_input.iter().enumerate() {
            if xi != 0.0 {
                for (j, a) in pre.iter_mut().enumerate() {
                    *a += p.enc_hidden_w.get(j, i) * xi;
                }
            }
        }
        let enc_hidden: Vec<f64> = pre.iter().map(|a| a.tanh()).collect();

        let mut out = p.enc_out_w.mul_vec(&enc_hidden);
        for (o, b) in out.iter_mut().zip(&p.enc_out_b) {
            *o += b;
        }
        let logvar = out.split_off(k);
        let mu = out;

        let eps = eps.map_or_else(|| vec![0.0; k], <[f64]>::to_vec);
        assert_eq!(eps.len(), k, "noise length must equal latent dimension");
        let z: Vec<f64> = mu
            .iter()
            .zip(&logvar)
            .zip(&eps)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect();

        let mut pre = p.dec_hidden_w.mul_vec(&z);
        for (a, b) in pre.iter_mut().zip(&p.dec_hidden_b) {
            *a += b;
        }
        let dec_hidden: Vec<f64> = pre.iter().map(|a| a.tanh()).collect();

        let mut logits = p.dec_out_w.mul_vec(&dec_hidden);
        for (l, b) in logits.iter_mut().zip(&p.dec_out_b) {
            *l += b;
        }

        ForwardPass {
            normalized_input,
            enc_hidden,
            mu,
            logvar,
            eps,
            z,
            dec_hidden,
            logits,
        }
    }

    /// Negative ELBO of a forward pass and its gradient with respect to every
    /// parameter. The pass must have been computed on the same `x`.
    pub fn elbo_loss(&self, pass: &ForwardPass, x: &[f64], beta: f64) -> Result<(f64, VaeParams), RecommendError> {
        let mut grads = VaeParams::zeros(self.n_items(), self.hidden(), self.latent());
        let loss = self.accumulate_gradients(pass, x, beta, &mut grads)?;
        Ok((loss, grads))
    }

    /// Adds this example's gradient into `grads` and returns its loss.
    fn accumulate_gradients(
        &self,
        pass: &ForwardPass,
        x: &[f64],
        beta: f64,
        grads: &mut VaeParams,
    ) -> Result<f64, RecommendError> {
        let p = &self.params;
        let terms = elbo_terms(&pass.logits, x, &pass.mu, &pass.logvar, beta)?;

        // d loss / d logits = softmax · Σx − x
        let total: f64 = x.iter().sum();
        let log_p = log_softmax(&pass.logits);
        let d_logits: Vec<f64> = log_p.iter().zip(x).map(|(lp, xi)| lp.exp() * total - xi).collect();

        for (i, &g) in d_logits.iter().enumerate() {
            grads.dec_out_b[i] += g;
            let row = grads.dec_out_w.row_mut(i);
            for (w, h) in row.iter_mut().zip(&pass.dec_hidden) {
                *w += g * h;
            }
        }
        let d_dec_hidden = p.dec_out_w.tmul_vec(&d_logits);
        let d_dec_pre: Vec<f64> = d_dec_hidden
            .iter()
            .zip(&pass.dec_hidden)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        for (j, &g) in d_dec_pre.iter().enumerate() {
            grads.dec_hidden_b[j] += g;
            for (w, z) in grads.dec_hidden_w.row_mut(j).iter_mut().zip(&pass.z) {
                *w += g * z;
            }
        }
        let d_z = p.dec_hidden_w.tmul_vec(&d_dec_pre);

        let k = self.latent();
        let mut d_enc_out = vec![0.0; 2 * k];
        for j in 0..k {
            let (mu, lv, eps) = (pass.mu[j], pass.logvar[j], pass.eps[j]);
            d_enc_out[j] = d_z[j] + beta * mu;
            d_enc_out[k + j] = d_z[j] * eps * 0.5 * (0.5 * lv).exp() + beta * 0.5 * (lv.exp() - 1.0);
        }
        for (r, &g) in d_enc_out.iter().enumerate() {
            grads.enc_out_b[r] += g;
            for (w, h) in grads.enc_out_w.row_mut(r).iter_mut().zip(&pass.enc_hidden) {
                *w += g * h;
            }
        }
        let d_enc_hidden = p.enc_out_w.tmul_vec(&d_enc_out);
        let d_enc_pre: Vec<f64> = d_enc_hidden
            .iter()
            .zip(&pass.enc_hidden)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        let n = self.n_items();
        for (j, &g) in d_enc_pre.iter().enumerate() {
            grads.enc_hidden_b[j] += g;
            let row = &mut grads.enc_hidden_w.as_mut_slice()[j * n..(j + 1) * n];
            for (i, &xi) in pass.normalized_input.iter().enumerate() {
                if xi != 0.0 {
                    row[i] += g * xi;
                }
            }
        }
        Ok(terms.loss)
    }

    fn dense_binary(&self, input: &[(usize, u32)]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_items()];
        for &(i, c) in input {
            if i < x.len() && c > 0 {
                x[i] = 1.0;
            }
        }
        x
    }
}

impl Scorer for MultVaeModel {
    fn n_items(&self) -> usize {
        self.params.enc_hidden_w.cols()
    }

    /// Logits of a non-sampling forward pass over the binarized input.
    fn score(&self, input: &[(usize, u32)]) -> Vec<f64> {
        self.forward_with_noise(&self.dense_binary(input), None).logits
    }
}

/// Trains with [`train_multvae_with`] and no per-epoch callback.
pub fn train_multvae(m: &InteractionMatrix, cfg: &TrainingConfig) -> Result<MultVaeModel, RecommendError> {
    train_multvae_with(m, cfg, |_, _| {})
}

/// Mini-batch SGD over user rows. `on_epoch` receives the 1-based epoch and
/// that epoch's mean per-user loss. Parameters are rounded to `f32` at the
/// end so the model is exactly representable in a model file.
///
/// Count matrices are binarized before training.
pub fn train_multvae_with<F>(
    m: &InteractionMatrix,
    cfg: &TrainingConfig,
    mut on_epoch: F,
) -> Result<MultVaeModel, RecommendError>
where
    F: FnMut(usize, f64),
{
    cfg.validate()?;
    let n = m.n_items();
    if m.n_users() == 0 || n == 0 {
        return Err(RecommendError::EmptyMatrix);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let params = VaeParams::glorot(n, cfg.hidden, cfg.latent, &mut rng);
    let mut model = MultVaeModel::new(params, cfg.beta)?;
    let mut grads = VaeParams::zeros(n, cfg.hidden, cfg.latent);

    let users: Vec<usize> = (0..m.n_users()).filter(|&u| !m.row(u).is_empty()).collect();
    if users.is_empty() {
        return Err(RecommendError::EmptyMatrix);
    }
    let mut order = users.clone();
    let mut step = 0usize;
    let mut x = vec![0.0; n];

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let beta = cfg.beta * (step as f64 / cfg.beta_anneal_steps as f64).min(1.0);
            grads.fill_zero();
            for &u in batch {
                x.fill(0.0);
                for &(i, _) in m.row(u) {
                    x[i] = 1.0;
                }
                let pass = model.forward(&x, true, &mut rng);
                let loss = model
                    .accumulate_gradients(&pass, &x, beta, &mut grads)
                    .map_err(|_| RecommendError::NonFiniteLoss { epoch, batch: batch_no })?;
                epoch_loss += loss;
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (param, grad) in model.params.tensors_mut().into_iter().zip(grads.tensors()) {
                for (p, g) in param.iter_mut().zip(grad) {
                    *p -= scale * g;
                }
            }
            if !model.params.is_finite() {
                return Err(RecommendError::NonFiniteLoss { epoch, batch: batch_no });
            }
            step += 1;
        }
        let mean = epoch_loss / users.len() as f64;
        tracing::debug!(epoch, mean_loss = mean, "multvae epoch");
        on_epoch(epoch, mean);
    }

    let mut params = model.params;
    params.enc_hidden_w.round_to_f32();
    params.enc_out_w.round_to_f32();
    params.dec_hidden_w.round_to_f32();
    params.dec_out_w.round_to_f32();
    for b in [
        &mut params.enc_hidden_b,
        &mut params.enc_out_b,
        &mut params.dec_hidden_b,
        &mut params.dec_out_b,
    ] {
        for v in b.iter_mut() {
            *v = f64::from(*v as f32);
        }
    }
    MultVaeModel::new(params, cfg.beta)
}
