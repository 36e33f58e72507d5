//! Sparsifying synthesis operators.
//!
//! Two kinds are supported: the orthonormal Daubechies-4 (8-tap) wavelet basis
//! with periodic extension, and learned overcomplete dictionaries. Both are
//! stored as an explicit `N×J` synthesis matrix so the recovery stage can treat
//! them uniformly.
//!
//! Wavelet coefficient layout is approximation-first:
//! `[a_L | d_L | d_{L-1} | … | d_1]`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Daubechies-4 scaling filter (four vanishing moments, eight taps).
pub const DB4_LOWPASS: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_09,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

fn db4_highpass() -> [f64; 8] {
    let mut g = [0.0; 8];
    for (n, gn) in g.iter_mut().enumerate() {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        *gn = sign * DB4_LOWPASS[7 - n];
    }
    g
}

fn check_dyadic(n: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::InvalidInput("wavelet level must be >= 1".into()));
    }
    if n == 0 || levels >= usize::BITS as usize || !n.is_multiple_of(1usize << levels) {
        return Err(Error::InvalidDimension(format!(
            "length {n} is not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

// a[k] = Σ h[t] x[(2k+t) mod n], d[k] = Σ g[t] x[(2k+t) mod n]
fn analysis_step(x: &[f64], out: &mut [f64], g: &[f64; 8]) {
    let n = x.len();
    let half = n / 2;
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for t in 0..8 {
            let v = x[(2 * k + t) % n];
            a += DB4_LOWPASS[t] * v;
            d += g[t] * v;
        }
        out[k] = a;
        out[half + k] = d;
    }
}

fn synthesis_step(c: &[f64], out: &mut [f64], g: &[f64; 8]) {
    let n = c.len();
    let half = n / 2;
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..half {
        let (a, d) = (c[k], c[half + k]);
        for t in 0..8 {
            out[(2 * k + t) % n] += DB4_LOWPASS[t] * a + g[t] * d;
        }
    }
}

/// Orthonormal periodic db4 analysis over `levels` octaves.
pub fn dwt_forward(x: &[f64], levels: usize) -> Result<Vec<f64>> {
    check_dyadic(x.len(), levels)?;
    let g = db4_highpass();
    let mut coeffs = x.to_vec();
    let mut scratch = vec![0.0; x.len()];
    let mut len = x.len();
    for _ in 0..levels {
        analysis_step(&coeffs[..len], &mut scratch[..len], &g);
        coeffs[..len].copy_from_slice(&scratch[..len]);
        len /= 2;
    }
    Ok(coeffs)
}

/// Inverse of [`dwt_forward`].
pub fn dwt_inverse(coeffs: &[f64], levels: usize) -> Result<Vec<f64>> {
    check_dyadic(coeffs.len(), levels)?;
    let g = db4_highpass();
    let mut x = coeffs.to_vec();
    let mut scratch = vec![0.0; x.len()];
    let mut len = x.len() >> (levels - 1);
    for _ in 0..levels {
        synthesis_step(&x[..len], &mut scratch[..len], &g);
        x[..len].copy_from_slice(&scratch[..len]);
        len *= 2;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Wavelet { levels: usize },
    Dictionary,
}

/// Synthesis operator `D` (`N×J`) with its atom norms.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsifyingModel {
    kind: TransformKind,
    synthesis: DMatrix<f64>,
    atom_norms: DVector<f64>,
}

impl SparsifyingModel {
    /// db4 basis of length `n`; column `i` is the inverse transform of `eᵢ`.
    pub fn wavelet(n: usize, levels: usize) -> Result<Self> {
        check_dyadic(n, levels)?;
        let mut d = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            let col = dwt_inverse(&e, levels)?;
            d.set_column(i, &DVector::from_vec(col));
            e[i] = 0.0;
        }
        Ok(Self::with_norms(TransformKind::Wavelet { levels }, d))
    }

    /// Overcomplete dictionary; columns must have unit 2-norm.
    pub fn dictionary(synthesis: DMatrix<f64>) -> Result<Self> {
        if synthesis.ncols() == 0 || synthesis.nrows() == 0 {
            return Err(Error::InvalidDimension("empty dictionary".into()));
        }
        for (i, col) in synthesis.column_iter().enumerate() {
            if (col.norm() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "dictionary atom {i} has norm {}",
                    col.norm()
                )));
            }
        }
        Ok(Self::with_norms(TransformKind::Dictionary, synthesis))
    }

    /// Rebuild from persisted parts. Wavelet models are regenerated and must
    /// match the stored matrix.
    pub fn from_parts(kind: TransformKind, synthesis: DMatrix<f64>) -> Result<Self> {
        match kind {
            TransformKind::Dictionary => Self::dictionary(synthesis),
            TransformKind::Wavelet { levels } => {
                let fresh = Self::wavelet(synthesis.nrows(), levels)?;
                if fresh.synthesis.shape() != synthesis.shape()
                    || (&fresh.synthesis - &synthesis).amax() > 1e-12
                {
                    return Err(Error::InvalidInput(
                        "stored wavelet matrix does not match the db4 basis".into(),
                    ));
                }
                Ok(Self::with_norms(kind, synthesis))
            }
        }
    }

    fn with_norms(kind: TransformKind, synthesis: DMatrix<f64>) -> Self {
        let atom_norms = DVector::from_iterator(
            synthesis.ncols(),
            synthesis.column_iter().map(|c| c.norm()),
        );
        Self {
            kind,
            synthesis,
            atom_norms,
        }
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn synthesis(&self) -> &DMatrix<f64> {
        &self.synthesis
    }

    pub fn atom_norms(&self) -> &DVector<f64> {
        &self.atom_norms
    }

    /// Signal length `N`.
    pub fn n_samples(&self) -> usize {
        self.synthesis.nrows()
    }

    /// Atom count `J`.
    pub fn n_atoms(&self) -> usize {
        self.synthesis.ncols()
    }

    pub fn synthesize(&self, values: &DVector<f64>) -> DVector<f64> {
        &self.synthesis * values
    }
}

/// Sparse coefficient vector with its support and binary pattern.
///
/// Entries off the support are exactly zero. Entries on the support are
/// nonzero for codes produced by the coders; MAP estimates from an all-zero
/// measurement may legitimately be zero on a selected support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    values: DVector<f64>,
    support: Vec<usize>,
}

impl SparseCode {
    /// Support taken as the nonzero entries of `values`.
    pub fn from_dense(values: DVector<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        Self { values, support }
    }

    /// Place `support_values[t]` at `support[t]` in a length-`j` vector.
    pub fn from_support(j: usize, support: &[usize], support_values: &[f64]) -> Result<Self> {
        if support.len() != support_values.len() {
            return Err(Error::InvalidDimension(
                "support and values differ in length".into(),
            ));
        }
        let mut values = DVector::zeros(j);
        let mut pairs: Vec<(usize, f64)> =
            support.iter().copied().zip(support_values.iter().copied()).collect();
        pairs.sort_by_key(|p| p.0);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidInput(format!("duplicate index {}", w[0].0)));
            }
        }
        for &(i, v) in &pairs {
            if i >= j {
                return Err(Error::InvalidDimension(format!("index {i} out of range {j}")));
            }
            values[i] = v;
        }
        Ok(Self {
            values,
            support: pairs.into_iter().map(|p| p.0).collect(),
        })
    }

    pub fn zeros(j: usize) -> Self {
        Self {
            values: DVector::zeros(j),
            support: Vec::new(),
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Ascending support indices.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Binary indicator of the support as 0/1 floats.
    pub fn pattern(&self) -> DVector<f64> {
        let mut p = DVector::zeros(self.values.len());
        for &i in &self.support {
            p[i] = 1.0;
        }
        p
    }

    pub fn cardinality(&self) -> usize {
        self.support.len()
    }
}

/// Keep the `k` largest-magnitude nonzero coefficients; ties go to the lower
/// index.
pub fn top_k_sparsify(coeffs: &[f64], k: usize) -> Result<SparseCode> {
    if k == 0 || k > coeffs.len() {
        return Err(Error::InvalidInput(format!(
            "k must lie in 1..={}, got {k}",
            coeffs.len()
        )));
    }
    let mut order: Vec<usize> = (0..coeffs.len()).filter(|&i| coeffs[i] != 0.0).collect();
    order.sort_by(|&a, &b| {
        coeffs[b]
            .abs()
            .total_cmp(&coeffs[a].abs())
            .then(a.cmp(&b))
    });
    order.truncate(k);
    let vals: Vec<f64> = order.iter().map(|&i| coeffs[i]).collect();
    SparseCode::from_support(coeffs.len(), &order, &vals)
}
