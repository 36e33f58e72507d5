//! Sensing matrices, noisy measurements and the effective noise covariance.
//!
//! A measurement is `y = Φx + n`. With `x = Ds + r` the recovery stage sees
//! `y = Ξs + η` where `η = Φr + n` has covariance
//! `Σ_η = Φ diag(σ_r²) Φᵀ + σ_n² I`; [`NoiseModel`] assembles and factors it.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::linalg;
use crate::rng;
use crate::{Error, Result};

/// Floor added to every representation-error variance before `Σ_η` is built.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperator {
    phi: DMatrix<f64>,
    seed: Option<u64>,
}

impl SensingOperator {
    /// Wrap an arbitrary `M×N` matrix. Used for hand-built test instances;
    /// experiments always go through [`gen_bernoulli_matrix`].
    pub fn from_matrix(phi: DMatrix<f64>) -> Result<Self> {
        if phi.nrows() == 0 || phi.nrows() > phi.ncols() {
            return Err(Error::InvalidDimension(format!(
                "sensing matrix must satisfy 1 <= M <= N, got {}x{}",
                phi.nrows(),
                phi.ncols()
            )));
        }
        Ok(Self { phi, seed: None })
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn m_rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.phi.ncols()
    }

    /// Seed the matrix was generated from, `None` for wrapped matrices.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Draw an `m×n` matrix with i.i.d. entries `±1/√m`, each sign with
/// probability ½. Entries are filled row by row from a ChaCha8 stream.
pub fn gen_bernoulli_matrix(m: usize, n: usize, seed: u64) -> Result<SensingOperator> {
    if m == 0 || m > n {
        return Err(Error::InvalidDimension(format!(
            "Bernoulli matrix needs 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let mut rng = rng::seeded(seed);
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        data.push(if rng.random_bool(0.5) { scale } else { -scale });
    }
    Ok(SensingOperator {
        phi: DMatrix::from_row_slice(m, n, &data),
        seed: Some(seed),
    })
}

/// `y = Φx + n` with `n ~ N(0, σ_n² I)`; `σ_n² = 0` returns `Φx` exactly.
pub fn measure(
    op: &SensingOperator,
    x: &DVector<f64>,
    sigma_n_sq: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    if x.len() != op.n_cols() {
        return Err(Error::InvalidDimension(format!(
            "signal length {} does not match sensing matrix width {}",
            x.len(),
            op.n_cols()
        )));
    }
    if !(sigma_n_sq >= 0.0) || !sigma_n_sq.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noise variance must be finite and >= 0, got {sigma_n_sq}"
        )));
    }
    let mut y = &op.phi * x;
    if sigma_n_sq > 0.0 {
        let normal = Normal::new(0.0, sigma_n_sq.sqrt()).expect("positive std");
        let mut rng = rng::seeded(seed);
        for v in y.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(y)
}

/// Effective measurement-noise covariance and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    sigma_n_sq: f64,
    sigma_r_sq: DVector<f64>,
    sigma_eta: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl NoiseModel {
    /// Build directly from a covariance matrix (no sensing structure).
    pub fn from_covariance(sigma_eta: DMatrix<f64>) -> Result<Self> {
        if sigma_eta.nrows() != sigma_eta.ncols() || sigma_eta.nrows() == 0 {
            return Err(Error::InvalidDimension("covariance must be square".into()));
        }
        let chol = linalg::cholesky(sigma_eta.clone(), "noise covariance")?;
        Ok(Self {
            sigma_n_sq: f64::NAN,
            sigma_r_sq: DVector::zeros(0),
            factor: chol.unpack(),
            sigma_eta,
        })
    }

    pub fn sigma_n_sq(&self) -> f64 {
        self.sigma_n_sq
    }

    /// Representation-error variances as supplied (before flooring).
    pub fn sigma_r_sq(&self) -> &DVector<f64> {
        &self.sigma_r_sq
    }

    pub fn sigma_eta(&self) -> &DMatrix<f64> {
        &self.sigma_eta
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ_η`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.sigma_eta.nrows()
    }

    /// `L⁻¹ v`, i.e. whitening with respect to `Σ_η`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        self.factor
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `L⁻¹ A` applied column-wise.
    pub fn whiten_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor
            .solve_lower_triangular(a)
            .expect("Cholesky factor has a positive diagonal")
    }
}

/// Assemble `Σ_η = Φ diag(σ_r² + ε) Φᵀ + σ_n² I` and factor it once.
pub fn build_noise_model(
    op: &SensingOperator,
    sigma_r_sq: &DVector<f64>,
    sigma_n_sq: f64,
) -> Result<NoiseModel> {
    if sigma_r_sq.len() != op.n_cols() {
        return Err(Error::InvalidDimension(format!(
            "expected {} representation-error variances, got {}",
            op.n_cols(),
            sigma_r_sq.len()
        )));
    }
    if sigma_r_sq.iter().any(|v| !(*v >= 0.0) || !v.is_finite())
        || !(sigma_n_sq >= 0.0)
        || !sigma_n_sq.is_finite()
    {
        return Err(Error::InvalidInput(
            "noise variances must be finite and non-negative".into(),
        ));
    }
    if sigma_n_sq == 0.0 && sigma_r_sq.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput(
            "sampling and representation-error variances are all zero".into(),
        ));
    }

    let phi = op.phi();
    let m = op.m_rows();
    let mut scaled = phi.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= sigma_r_sq[j] + VARIANCE_FLOOR;
    }
    let mut sigma_eta = &scaled * phi.transpose();
    for i in 0..m {
        sigma_eta[(i, i)] += sigma_n_sq;
    }
    // exact symmetry so the factor does not see rounding asymmetry
    for i in 0..m {
        for j in 0..i {
            let avg = 0.5 * (sigma_eta[(i, j)] + sigma_eta[(j, i)]);
            sigma_eta[(i, j)] = avg;
            sigma_eta[(j, i)] = avg;
        }
    }
    let chol = linalg::cholesky(sigma_eta.clone(), "effective noise covariance")?;
    Ok(NoiseModel {
        sigma_n_sq,
        sigma_r_sq: sigma_r_sq.clone(),
        sigma_eta,
        factor: chol.unpack(),
    })
}

/// Noise variance of an `m_bits` uniform quantiser over a range `delta_f`.
pub fn quantization_noise_variance(delta_f: f64, m_bits: u32) -> f64 {
    delta_f * delta_f / (12.0 * 4f64.powi(m_bits as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_are_plus_minus_inverse_sqrt_m() {
        let op = gen_bernoulli_matrix(4, 8, 11).unwrap();
        assert_eq!((op.m_rows(), op.n_cols()), (4, 8));
        assert!(op.phi().iter().all(|&v| v == 0.5 || v == -0.5));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_bernoulli_matrix(64, 128, 42).unwrap();
        let b = gen_bernoulli_matrix(64, 128, 42).unwrap();
        assert_eq!(a, b);
        let c = gen_bernoulli_matrix(64, 128, 43).unwrap();
        assert_ne!(a.phi(), c.phi());
    }

    #[test]
    fn entry_mean_is_near_zero() {
        // Sum of 8192 ±1 draws has std sqrt(8192); the mean of ±1/8 entries
        // therefore has std (1/8)/sqrt(8192). Bound taken from the 4σ rule
        // written as 4/sqrt(64*128*4).
        let op = gen_bernoulli_matrix(64, 128, 5).unwrap();
        let mean = op.phi().mean();
        let bound = 4.0 / ((64 * 128 * 4) as f64).sqrt();
        assert!(mean.abs() <= bound, "mean {mean} exceeds {bound}");
    }

    #[test]
    fn columns_have_unit_norm() {
        let op = gen_bernoulli_matrix(17, 40, 3).unwrap();
        for col in op.phi().column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_dimensions_rejected() {
        assert!(matches!(
            gen_bernoulli_matrix(0, 8, 1),
            Err(Error::InvalidDimension(_))
        ));
        assert!(matches!(
            gen_bernoulli_matrix(9, 8, 1),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn measure_noiseless_cases() {
        let op = gen_bernoulli_matrix(6, 10, 9).unwrap();
        let y = measure(&op, &DVector::zeros(10), 0.0, 1).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));

        let mut e1 = DVector::zeros(10);
        e1[0] = 1.0;
        let y = measure(&op, &e1, 0.0, 1).unwrap();
        assert_eq!(y, op.phi().column(0).into_owned());

        assert!(measure(&op, &DVector::zeros(9), 0.0, 1).is_err());
    }

    #[test]
    fn measure_noise_is_seeded() {
        let op = gen_bernoulli_matrix(6, 10, 9).unwrap();
        let x = DVector::from_fn(10, |i, _| i as f64 - 3.0);
        let a = measure(&op, &x, 0.25, 77).unwrap();
        let b = measure(&op, &x, 0.25, 77).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, &op.phi().clone() * &x);
    }

    #[test]
    fn noise_model_identity_cases() {
        let op = gen_bernoulli_matrix(5, 9, 2).unwrap();
        let nm = build_noise_model(&op, &DVector::zeros(9), 1.0).unwrap();
        // only the variance floor separates Σ_η from I
        let diff = nm.sigma_eta() - DMatrix::<f64>::identity(5, 5);
        assert!(diff.amax() < 1e-7);

        let nm = build_noise_model(&op, &DVector::zeros(9), 4.0).unwrap();
        let diff = nm.factor() - DMatrix::<f64>::identity(5, 5) * 2.0;
        assert!(diff.amax() < 1e-7);
    }

    #[test]
    fn noise_model_matches_hand_product() {
        let s = 1.0 / 2f64.sqrt();
        let phi = DMatrix::from_row_slice(2, 2, &[s, s, s, -s]);
        let op = SensingOperator::from_matrix(phi).unwrap();
        let r = DVector::from_row_slice(&[0.5, 2.0]);
        let nm = build_noise_model(&op, &r, 0.1).unwrap();
        // Σ_η[0,0] = ½(r0+ε) + ½(r1+ε) + σ_n²; Σ_η[0,1] = ½(r0+ε) − ½(r1+ε)
        let e = VARIANCE_FLOOR;
        let d = 0.5 * (0.5 + e) + 0.5 * (2.0 + e) + 0.1;
        let o = 0.5 * (0.5 + e) - 0.5 * (2.0 + e);
        let expect = DMatrix::from_row_slice(2, 2, &[d, o, o, d]);
        assert!((nm.sigma_eta() - expect).amax() < 1e-14);
    }

    #[test]
    fn factor_reproduces_covariance() {
        let op = gen_bernoulli_matrix(20, 48, 8).unwrap();
        let r = DVector::from_fn(48, |i, _| 0.01 * (i % 7) as f64);
        let nm = build_noise_model(&op, &r, 0.05).unwrap();
        let l = nm.factor();
        let rel = linalg::frobenius(&(l * l.transpose() - nm.sigma_eta()))
            / linalg::frobenius(nm.sigma_eta());
        assert!(rel <= 1e-10);
        for i in 0..20 {
            for j in i + 1..20 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn all_zero_variances_rejected() {
        let op = gen_bernoulli_matrix(3, 4, 2).unwrap();
        assert!(build_noise_model(&op, &DVector::zeros(4), 0.0).is_err());
        assert!(build_noise_model(&op, &DVector::from_element(4, -1.0), 1.0).is_err());
    }

    #[test]
    fn quantizer_variance_endpoints() {
        let lo = quantization_noise_variance(37.5, 10);
        let hi = quantization_noise_variance(8600.0, 10);
        assert!((lo - 1.1176e-4).abs() / 1.1176e-4 < 1e-3);
        assert!((hi - 5.8778).abs() / 5.8778 < 1e-3);
        assert_eq!(quantization_noise_variance(0.0, 10), 0.0);
    }
}
