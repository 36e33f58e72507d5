//! MAP support search and coefficient estimation.
//!
//! With `y = Ξs + η`, `s_θ ~ N(0, Σ_θ)` and `η ~ N(0, Σ_η)`, the support
//! posterior is scored (up to terms constant in `θ`) as
//!
//! ```text
//! ½ bᵀ P⁻¹ b − ½ log det(P Σ_θ) + Σⱼ softplus(W_{·j}ᵀ S^θ + b_h,j) + b_vᵀ S^θ
//! P = Ξ_θᵀ Σ_η⁻¹ Ξ_θ + Σ_θ⁻¹,   b = Ξ_θᵀ Σ_η⁻¹ y
//! ```
//!
//! Everything is evaluated in the whitened space `L⁻¹Ξ`, `L⁻¹y` where
//! `L Lᵀ = Σ_η`, so `Σ_η⁻¹` is never formed.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, IncrementalCholesky};
use crate::rbm::{softplus, RbmModel};
use crate::sensing::{NoiseModel, SensingOperator};
use crate::transforms::{SparseCode, SparsifyingModel};
use crate::{dictlearn, Error, Result};

#[derive(Debug, Clone)]
pub struct RecoveryModel {
    sensing: SensingOperator,
    sparsifier: SparsifyingModel,
    xi: DMatrix<f64>,
    noise: NoiseModel,
    whitened_xi: DMatrix<f64>,
    whitened_gram: DMatrix<f64>,
    coeff_variances: DVector<f64>,
    eligible: Vec<bool>,
    rbm: RbmModel,
    sparsity_k: usize,
}

impl RecoveryModel {
    /// Atoms with zero (never active) or non-finite variance are excluded
    /// from the MAP pursuit.
    pub fn new(
        sensing: SensingOperator,
        sparsifier: SparsifyingModel,
        noise: NoiseModel,
        coeff_variances: DVector<f64>,
        rbm: RbmModel,
        sparsity_k: usize,
    ) -> Result<Self> {
        let j = sparsifier.n_atoms();
        if sensing.n_cols() != sparsifier.n_samples() {
            return Err(Error::InvalidDimension(format!(
                "sensing width {} does not match signal length {}",
                sensing.n_cols(),
                sparsifier.n_samples()
            )));
        }
        if noise.dim() != sensing.m_rows() {
            return Err(Error::InvalidDimension(format!(
                "noise covariance is {}x{0}, expected {}",
                noise.dim(),
                sensing.m_rows()
            )));
        }
        if coeff_variances.len() != j || rbm.n_visible() != j {
            return Err(Error::InvalidDimension(format!(
                "coefficient variances ({}) and RBM visible units ({}) must match atom count {j}",
                coeff_variances.len(),
                rbm.n_visible()
            )));
        }
        if sparsity_k == 0 {
            return Err(Error::InvalidInput("sparsity threshold must be >= 1".into()));
        }
        let xi = sensing.phi() * sparsifier.synthesis();
        let whitened_xi = noise.whiten_matrix(&xi);
        let whitened_gram = whitened_xi.tr_mul(&whitened_xi);
        let eligible = coeff_variances
            .iter()
            .map(|v| *v > 0.0 && v.is_finite())
            .collect();
        Ok(Self {
            sensing,
            sparsifier,
            xi,
            noise,
            whitened_xi,
            whitened_gram,
            coeff_variances,
            eligible,
            rbm,
            sparsity_k,
        })
    }

    pub fn sensing(&self) -> &SensingOperator {
        &self.sensing
    }

    pub fn sparsifier(&self) -> &SparsifyingModel {
        &self.sparsifier
    }

    /// `Ξ = ΦD`.
    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// `L⁻¹Ξ`.
    pub fn whitened_xi(&self) -> &DMatrix<f64> {
        &self.whitened_xi
    }

    pub fn coeff_variances(&self) -> &DVector<f64> {
        &self.coeff_variances
    }

    pub fn is_eligible(&self, atom: usize) -> bool {
        self.eligible.get(atom).copied().unwrap_or(false)
    }

    pub fn rbm(&self) -> &RbmModel {
        &self.rbm
    }

    pub fn sparsity_k(&self) -> usize {
        self.sparsity_k
    }

    pub fn n_atoms(&self) -> usize {
        self.xi.ncols()
    }

    fn check_measurement(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.sensing.m_rows() {
            return Err(Error::InvalidDimension(format!(
                "measurement length {} does not match M = {}",
                y.len(),
                self.sensing.m_rows()
            )));
        }
        Ok(())
    }

    fn check_support(&self, theta: &[usize]) -> Result<()> {
        if theta.is_empty() {
            return Err(Error::InvalidInput("support must be non-empty".into()));
        }
        let mut seen = vec![false; self.n_atoms()];
        for &i in theta {
            if i >= self.n_atoms() {
                return Err(Error::InvalidDimension(format!("atom {i} out of range")));
            }
            if seen[i] {
                return Err(Error::InvalidInput(format!("atom {i} repeated in support")));
            }
            if !self.eligible[i] {
                return Err(Error::InvalidInput(format!(
                    "atom {i} has no coefficient variance (never active)"
                )));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// The three `θ`-dependent pieces of the support log-posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorTerms {
    /// `½ bᵀ P⁻¹ b`.
    pub quadratic: f64,
    /// `log det(P Σ_θ)`.
    pub log_det: f64,
    /// `−F(S^θ)` under the RBM.
    pub prior: f64,
}

impl PosteriorTerms {
    pub fn log_likelihood(&self) -> f64 {
        self.quadratic - 0.5 * self.log_det
    }

    pub fn log_posterior(&self) -> f64 {
        self.log_likelihood() + self.prior
    }
}

/// Evaluate the posterior terms for support `theta` by factoring `P`
/// directly.
pub fn posterior_terms(
    model: &RecoveryModel,
    y: &DVector<f64>,
    theta: &[usize],
) -> Result<PosteriorTerms> {
    model.check_measurement(y)?;
    model.check_support(theta)?;
    let yw = model.noise.whiten(y);
    let xw = linalg::columns(&model.whitened_xi, theta);
    let mut p = xw.tr_mul(&xw);
    let mut log_var = 0.0;
    for (t, &i) in theta.iter().enumerate() {
        let var = model.coeff_variances[i];
        p[(t, t)] += 1.0 / var;
        log_var += var.ln();
    }
    let b = xw.tr_mul(&yw);
    let chol = linalg::cholesky(p, "support precision matrix P")?;
    let z = chol
        .l_dirty()
        .solve_lower_triangular(&b)
        .ok_or_else(|| Error::NotPositiveDefinite("support precision matrix P".into()))?;
    let mut pattern = DVector::zeros(model.n_atoms());
    for &i in theta {
        pattern[i] = 1.0;
    }
    Ok(PosteriorTerms {
        quadratic: 0.5 * z.norm_squared(),
        log_det: linalg::chol_log_det(&chol) + log_var,
        prior: model.rbm.prior_log_score(&pattern),
    })
}

/// Support log-posterior up to an additive constant independent of `theta`.
pub fn support_log_posterior(model: &RecoveryModel, y: &DVector<f64>, theta: &[usize]) -> Result<f64> {
    Ok(posterior_terms(model, y, theta)?.log_posterior())
}

/// Likelihood part only (`log p(y|θ)` minus its `θ`-independent constant).
pub fn support_log_likelihood(model: &RecoveryModel, y: &DVector<f64>, theta: &[usize]) -> Result<f64> {
    Ok(posterior_terms(model, y, theta)?.log_likelihood())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scoring {
    Posterior,
    LikelihoodOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct PursuitOptions {
    pub scoring: Scoring,
    /// Score candidates by extending the current factor of `P` by one row
    /// instead of refactoring it.
    pub fast_path: bool,
}

impl Default for PursuitOptions {
    fn default() -> Self {
        Self {
            scoring: Scoring::Posterior,
            fast_path: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PursuitStatus {
    Complete,
    /// No admissible candidate remained before reaching `K` atoms.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct Recovery {
    /// Atoms in the order they were selected.
    pub selection: Vec<usize>,
    pub code: SparseCode,
    pub signal: DVector<f64>,
    pub status: PursuitStatus,
}

impl Recovery {
    /// Ascending support.
    pub fn support(&self) -> Vec<usize> {
        let mut s = self.selection.clone();
        s.sort_unstable();
        s
    }
}

struct GreedyState {
    selection: Vec<usize>,
    chol: IncrementalCholesky,
    z: Vec<f64>,
    sum_log_var: f64,
    hidden_act: DVector<f64>,
    visible_term: f64,
}

struct Candidate {
    atom: usize,
    score: f64,
    row: Vec<f64>,
    schur: f64,
    z_new: f64,
}

fn score_incremental(
    model: &RecoveryModel,
    state: &GreedyState,
    b_all: &DVector<f64>,
    i: usize,
    scoring: Scoring,
) -> Option<Candidate> {
    let var = model.coeff_variances[i];
    let cross: Vec<f64> = state
        .selection
        .iter()
        .map(|&s| model.whitened_gram[(s, i)])
        .collect();
    let diag = model.whitened_gram[(i, i)] + 1.0 / var;
    let (row, schur) = state.chol.propose(&cross, diag);
    if !(schur > 1e-14 * diag) {
        return None;
    }
    let z_new = (b_all[i] - linalg::dot(&row, &state.z)) / schur.sqrt();
    let quad = 0.5 * (state.z.iter().map(|v| v * v).sum::<f64>() + z_new * z_new);
    let log_det = state.chol.log_det() + schur.ln() + state.sum_log_var + var.ln();
    let mut score = quad - 0.5 * log_det;
    if scoring == Scoring::Posterior {
        let w = model.rbm.weights();
        let hidden: f64 = (0..state.hidden_act.len())
            .map(|h| softplus(state.hidden_act[h] + w[(i, h)]))
            .sum();
        score += hidden + state.visible_term + model.rbm.visible_bias()[i];
    }
    score.is_finite().then_some(Candidate {
        atom: i,
        score,
        row,
        schur,
        z_new,
    })
}

fn score_naive(
    model: &RecoveryModel,
    y: &DVector<f64>,
    selection: &[usize],
    i: usize,
    scoring: Scoring,
) -> Option<f64> {
    let mut theta = selection.to_vec();
    theta.push(i);
    let terms = posterior_terms(model, y, &theta).ok()?;
    let s = match scoring {
        Scoring::Posterior => terms.log_posterior(),
        Scoring::LikelihoodOnly => terms.log_likelihood(),
    };
    s.is_finite().then_some(s)
}

/// Greedy MAP support pursuit followed by posterior-mean coefficients.
pub fn rbm_omp_like(model: &RecoveryModel, y: &DVector<f64>) -> Result<Recovery> {
    rbm_omp_like_with(model, y, PursuitOptions::default())
}

pub fn rbm_omp_like_with(
    model: &RecoveryModel,
    y: &DVector<f64>,
    opts: PursuitOptions,
) -> Result<Recovery> {
    let selection = greedy_support(model, y, opts)?;
    let status = if selection.len() < model.sparsity_k {
        log::warn!(
            "support pursuit stalled at {} of {} atoms",
            selection.len(),
            model.sparsity_k
        );
        PursuitStatus::Stalled
    } else {
        PursuitStatus::Complete
    };
    let code = if selection.is_empty() {
        SparseCode::zeros(model.n_atoms())
    } else {
        let vals = map_coefficients(model, y, &selection)?;
        SparseCode::from_support(model.n_atoms(), &selection, &vals)?
    };
    let signal = model.sparsifier.synthesize(code.values());
    Ok(Recovery {
        selection,
        code,
        signal,
        status,
    })
}

/// Selected atoms (in selection order) of the greedy support pursuit.
pub fn greedy_support(
    model: &RecoveryModel,
    y: &DVector<f64>,
    opts: PursuitOptions,
) -> Result<Vec<usize>> {
    model.check_measurement(y)?;
    let j = model.n_atoms();
    let yw = model.noise.whiten(y);
    let b_all = model.whitened_xi.tr_mul(&yw);
    let mut state = GreedyState {
        selection: Vec::with_capacity(model.sparsity_k),
        chol: IncrementalCholesky::new(),
        z: Vec::new(),
        sum_log_var: 0.0,
        hidden_act: model.rbm.hidden_bias().clone(),
        visible_term: 0.0,
    };
    let mut taken = vec![false; j];

    while state.selection.len() < model.sparsity_k {
        let mut best: Option<Candidate> = None;
        for i in (0..j).filter(|&i| model.eligible[i] && !taken[i]) {
            let cand = if opts.fast_path {
                score_incremental(model, &state, &b_all, i, opts.scoring)
            } else {
                score_naive(model, y, &state.selection, i, opts.scoring).map(|score| Candidate {
                    atom: i,
                    score,
                    row: Vec::new(),
                    schur: 0.0,
                    z_new: 0.0,
                })
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best else { break };
        let i = best.atom;
        if opts.fast_path {
            state.chol.push(best.row, best.schur);
            state.z.push(best.z_new);
        }
        state.sum_log_var += model.coeff_variances[i].ln();
        state.hidden_act += model.rbm.weights().row(i).transpose();
        state.visible_term += model.rbm.visible_bias()[i];
        state.selection.push(i);
        taken[i] = true;
    }
    Ok(state.selection)
}

/// Posterior mean on `theta` via the `M×M` system
/// `(Ξ_θ Σ_θ Ξ_θᵀ + Σ_η) z = y`, `ŝ = Σ_θ Ξ_θᵀ z`.
pub fn map_coefficients(model: &RecoveryModel, y: &DVector<f64>, theta: &[usize]) -> Result<Vec<f64>> {
    model.check_measurement(y)?;
    model.check_support(theta)?;
    let xt = linalg::columns(&model.xi, theta);
    let vars = DVector::from_iterator(theta.len(), theta.iter().map(|&i| model.coeff_variances[i]));
    let mut scaled = xt.clone();
    for (t, mut col) in scaled.column_iter_mut().enumerate() {
        col *= vars[t];
    }
    let cov = &scaled * xt.transpose() + model.noise.sigma_eta();
    let chol = linalg::cholesky(cov, "marginal measurement covariance")?;
    let z = chol.solve(y);
    Ok(scaled.tr_mul(&z).iter().copied().collect())
}

/// Posterior mean on `theta` via the `K×K` system `P ŝ = Ξ_θᵀ Σ_η⁻¹ y`.
pub fn map_coefficients_reduced(
    model: &RecoveryModel,
    y: &DVector<f64>,
    theta: &[usize],
) -> Result<Vec<f64>> {
    model.check_measurement(y)?;
    model.check_support(theta)?;
    let xw = linalg::columns(&model.whitened_xi, theta);
    let mut p = xw.tr_mul(&xw);
    for (t, &i) in theta.iter().enumerate() {
        p[(t, t)] += 1.0 / model.coeff_variances[i];
    }
    let b = xw.tr_mul(&model.noise.whiten(y));
    let chol = linalg::cholesky(p, "support precision matrix P")?;
    Ok(chol.solve(&b).iter().copied().collect())
}

/// Plain OMP on `(Ξ, y)` with `k` atoms; the baseline recovery.
pub fn omp_recover(model: &RecoveryModel, y: &DVector<f64>, k: usize) -> Result<Recovery> {
    model.check_measurement(y)?;
    let out = dictlearn::omp(&model.xi, y, k, None)?;
    let signal = model.sparsifier.synthesize(out.code.values());
    Ok(Recovery {
        status: if out.selection.len() == k {
            PursuitStatus::Complete
        } else {
            PursuitStatus::Stalled
        },
        selection: out.selection,
        code: out.code,
        signal,
    })
}

/// `x̂ = D s`.
pub fn reconstruct_signal(sparsifier: &SparsifyingModel, code: &SparseCode) -> Result<DVector<f64>> {
    if code.values().len() != sparsifier.n_atoms() {
        return Err(Error::InvalidDimension(format!(
            "code has {} entries, model has {} atoms",
            code.values().len(),
            sparsifier.n_atoms()
        )));
    }
    Ok(sparsifier.synthesize(code.values()))
}
