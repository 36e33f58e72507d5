//! Bernoulli–Bernoulli restricted Boltzmann machine over support patterns.
//!
//! With hidden units summed out, a visible pattern `v` has free energy
//! `F(v) = −Σⱼ softplus(W_{·j}ᵀv + b_h,j) − b_vᵀv` and `p(v) = exp(−F(v)) / Z`.
//! The recovery prior only needs `−F(v)`; `Z` is computed by brute force for
//! small models as a test oracle.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Largest visible layer [`exact_log_partition`] will enumerate.
pub const MAX_EXACT_VISIBLE: usize = 20;

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbmModel {
    weights: DMatrix<f64>,
    visible_bias: DVector<f64>,
    hidden_bias: DVector<f64>,
}

impl RbmModel {
    pub fn new(
        weights: DMatrix<f64>,
        visible_bias: DVector<f64>,
        hidden_bias: DVector<f64>,
    ) -> Result<Self> {
        if weights.nrows() != visible_bias.len() || weights.ncols() != hidden_bias.len() {
            return Err(Error::InvalidDimension(format!(
                "weights {}x{} do not match biases ({}, {})",
                weights.nrows(),
                weights.ncols(),
                visible_bias.len(),
                hidden_bias.len()
            )));
        }
        let finite = weights.iter().all(|v| v.is_finite())
            && visible_bias.iter().all(|v| v.is_finite())
            && hidden_bias.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("RBM parameters must be finite".into()));
        }
        Ok(Self {
            weights,
            visible_bias,
            hidden_bias,
        })
    }

    /// All-zero parameters: the uniform distribution over patterns.
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n_visible, n_hidden),
            visible_bias: DVector::zeros(n_visible),
            hidden_bias: DVector::zeros(n_hidden),
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn visible_bias(&self) -> &DVector<f64> {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &DVector<f64> {
        &self.hidden_bias
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    /// `Wᵀv + b_h`.
    pub fn hidden_activation(&self, v: &DVector<f64>) -> DVector<f64> {
        self.weights.tr_mul(v) + &self.hidden_bias
    }

    pub fn free_energy(&self, v: &DVector<f64>) -> f64 {
        let act = self.hidden_activation(v);
        -act.iter().map(|&z| softplus(z)).sum::<f64>() - self.visible_bias.dot(v)
    }

    /// Unnormalised log-probability `−F(v) = log p(v) + log Z`.
    pub fn prior_log_score(&self, pattern: &DVector<f64>) -> f64 {
        -self.free_energy(pattern)
    }

    pub fn hidden_probs(&self, v: &DVector<f64>) -> DVector<f64> {
        self.hidden_activation(v).map(sigmoid)
    }

    pub fn visible_probs(&self, h: &DVector<f64>) -> DVector<f64> {
        (&self.weights * h + &self.visible_bias).map(sigmoid)
    }

    /// Gradient of `−F(v)` with respect to every parameter.
    pub fn score_gradient(&self, v: &DVector<f64>) -> RbmGradient {
        let ph = self.hidden_probs(v);
        RbmGradient {
            weights: v * ph.transpose(),
            visible_bias: v.clone(),
            hidden_bias: ph,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RbmGradient {
    pub weights: DMatrix<f64>,
    pub visible_bias: DVector<f64>,
    pub hidden_bias: DVector<f64>,
}

/// `log Σ_v exp(−F(v))` by enumerating all `2^J` visible states.
pub fn exact_log_partition(rbm: &RbmModel) -> Result<f64> {
    let j = rbm.n_visible();
    if j > MAX_EXACT_VISIBLE {
        return Err(Error::Refused(format!(
            "exact partition function needs J <= {MAX_EXACT_VISIBLE}, got {j}"
        )));
    }
    let scores: Vec<f64> = (0u64..1 << j)
        .map(|mask| rbm.prior_log_score(&pattern_from_mask(mask, j)))
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln())
}

/// Binary vector whose bit `i` is bit `i` of `mask`.
pub fn pattern_from_mask(mask: u64, j: usize) -> DVector<f64> {
    DVector::from_fn(j, |i, _| ((mask >> i) & 1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Gibbs sweeps in the negative phase (1 for CD-1).
    pub gibbs_steps: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Epoch at which momentum switches to `final_momentum`.
    pub momentum_switch_epoch: usize,
    pub weight_decay: f64,
    pub init_weight_std: f64,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 100,
            epochs: 50,
            gibbs_steps: 1,
            initial_momentum: 0.5,
            final_momentum: 0.9,
            momentum_switch_epoch: 5,
            weight_decay: 1e-4,
            init_weight_std: 0.01,
        }
    }
}

fn check_patterns(patterns: &DMatrix<f64>) -> Result<()> {
    if patterns.ncols() == 0 || patterns.nrows() == 0 {
        return Err(Error::InvalidDimension("no training patterns".into()));
    }
    if patterns.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidInput("support patterns must be 0/1".into()));
    }
    Ok(())
}

fn initialize(patterns: &DMatrix<f64>, n_hidden: usize, cfg: &CdConfig, rng: &mut Rng) -> RbmModel {
    let (j, b) = patterns.shape();
    let normal = Normal::new(0.0, cfg.init_weight_std).expect("finite std");
    let weights = DMatrix::from_fn(j, n_hidden, |_, _| normal.sample(rng));
    let lo = 1.0 / b as f64;
    let hi = 1.0 - lo;
    let visible_bias = DVector::from_iterator(
        j,
        patterns.row_iter().map(|row| {
            // clamped activation frequency; for B = 1 the clamp collapses to ½
            let p = (row.sum() / b as f64).clamp(lo.min(0.5), hi.max(0.5));
            (p / (1.0 - p)).ln()
        }),
    );
    RbmModel {
        weights,
        visible_bias,
        hidden_bias: DVector::zeros(n_hidden),
    }
}

/// The model [`cd_train`] starts from for the same arguments.
pub fn initial_model(
    patterns: &DMatrix<f64>,
    n_hidden: usize,
    cfg: &CdConfig,
    seed: u64,
) -> Result<RbmModel> {
    check_patterns(patterns)?;
    Ok(initialize(patterns, n_hidden, cfg, &mut rng::seeded(seed)))
}

fn sample_bernoulli(probs: &DMatrix<f64>, rng: &mut Rng) -> DMatrix<f64> {
    probs.map(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

/// Contrastive-divergence training on `J×B` binary patterns.
///
/// Minibatches are drawn from a seeded shuffle each epoch; the negative phase
/// runs `gibbs_steps` sweeps from the data, using visible probabilities for
/// the reconstruction.
pub fn cd_train(
    patterns: &DMatrix<f64>,
    n_hidden: usize,
    cfg: &CdConfig,
    seed: u64,
) -> Result<RbmModel> {
    check_patterns(patterns)?;
    if n_hidden == 0 {
        return Err(Error::InvalidInput("need at least one hidden unit".into()));
    }
    if cfg.batch_size == 0 || cfg.gibbs_steps == 0 {
        return Err(Error::InvalidInput("batch size and Gibbs steps must be >= 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut model = initialize(patterns, n_hidden, cfg, &mut rng);
    let (j, b) = patterns.shape();

    let mut vel_w = DMatrix::zeros(j, n_hidden);
    let mut vel_bv = DVector::zeros(j);
    let mut vel_bh = DVector::zeros(n_hidden);
    let mut order: Vec<usize> = (0..b).collect();

    for epoch in 0..cfg.epochs {
        let momentum = if epoch < cfg.momentum_switch_epoch {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let v0 = DMatrix::from_fn(j, batch.len(), |r, c| patterns[(r, batch[c])]);
            let ph0 = hidden_probs_batch(&model, &v0);
            let mut h = sample_bernoulli(&ph0, &mut rng);
            let mut vk = visible_probs_batch(&model, &h);
            let mut phk = hidden_probs_batch(&model, &vk);
            for _ in 1..cfg.gibbs_steps {
                h = sample_bernoulli(&phk, &mut rng);
                vk = visible_probs_batch(&model, &h);
                phk = hidden_probs_batch(&model, &vk);
            }

            let scale = 1.0 / batch.len() as f64;
            let grad_w = (&v0 * ph0.transpose() - &vk * phk.transpose()) * scale
                - &model.weights * cfg.weight_decay;
            let grad_bv = (v0.column_sum() - vk.column_sum()) * scale;
            let grad_bh = (ph0.column_sum() - phk.column_sum()) * scale;

            vel_w = &vel_w * momentum + grad_w * cfg.learning_rate;
            vel_bv = &vel_bv * momentum + grad_bv * cfg.learning_rate;
            vel_bh = &vel_bh * momentum + grad_bh * cfg.learning_rate;
            model.weights += &vel_w;
            model.visible_bias += &vel_bv;
            model.hidden_bias += &vel_bh;
        }
    }
    if model.weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(
            "RBM training diverged to non-finite parameters".into(),
        ));
    }
    Ok(model)
}

fn hidden_probs_batch(model: &RbmModel, v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut act = model.weights.tr_mul(v);
    for mut col in act.column_iter_mut() {
        col += &model.hidden_bias;
    }
    act.map(sigmoid)
}

fn visible_probs_batch(model: &RbmModel, h: &DMatrix<f64>) -> DMatrix<f64> {
    let mut act = &model.weights * h;
    for mut col in act.column_iter_mut() {
        col += &model.visible_bias;
    }
    act.map(sigmoid)
}

/// Mean exact log-likelihood of the columns of `patterns` (small `J` only).
pub fn mean_log_likelihood(rbm: &RbmModel, patterns: &DMatrix<f64>) -> Result<f64> {
    let log_z = exact_log_partition(rbm)?;
    let total: f64 = patterns
        .column_iter()
        .map(|c| rbm.prior_log_score(&c.into_owned()) - log_z)
        .sum();
    Ok(total / patterns.ncols() as f64)
}
