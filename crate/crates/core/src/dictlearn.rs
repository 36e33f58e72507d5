//! Dictionary learning and training statistics.
//!
//! K-SVD alternates OMP sparse coding of every training column with
//! rank-one atom updates. The resulting codes give the support patterns used
//! to train the prior, the per-atom coefficient variances and the
//! per-coordinate representation-error variances.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;

use crate::linalg::{self, IncrementalCholesky};
use crate::rng;
use crate::transforms::{self, SparseCode, SparsifyingModel};
use crate::{Error, Result};

/// Relative Schur-complement threshold below which a candidate atom is
/// considered linearly dependent on the current selection.
const DEPENDENCE_TOL: f64 = 1e-10;

/// Atoms whose absolute inner product exceeds this are treated as duplicates.
const COHERENCE_LIMIT: f64 = 0.99;

/// Training segments stored column-wise (`N×B`).
#[derive(Debug, Clone)]
pub struct TrainingSet {
    samples: DMatrix<f64>,
}

impl TrainingSet {
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.ncols() == 0 || samples.nrows() == 0 {
            return Err(Error::InvalidDimension("empty training set".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("training set has non-finite entries".into()));
        }
        Ok(Self { samples })
    }

    pub fn from_segments(segments: &[Vec<f64>]) -> Result<Self> {
        let n = segments.first().map_or(0, Vec::len);
        if segments.iter().any(|s| s.len() != n) {
            return Err(Error::InvalidDimension("segments differ in length".into()));
        }
        let flat: Vec<f64> = segments.iter().flatten().copied().collect();
        Self::new(DMatrix::from_column_slice(n, segments.len(), &flat))
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn count(&self) -> usize {
        self.samples.ncols()
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }
}

/// Result of a greedy pursuit on an explicit matrix.
#[derive(Debug, Clone)]
pub struct OmpOutput {
    pub code: SparseCode,
    /// Atoms in the order they were selected.
    pub selection: Vec<usize>,
    pub residual: DVector<f64>,
}

/// Orthogonal matching pursuit on the columns of `a`.
///
/// Each step picks the eligible column with the largest normalised
/// correlation `|aᵢᵀr| / ‖aᵢ‖` (ties to the lower index), then refits all
/// selected coefficients by least squares. Candidates that are numerically
/// dependent on the current selection are skipped in favour of the next best.
/// The pursuit stops early once the residual vanishes.
pub fn omp(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    eligible: Option<&[bool]>,
) -> Result<OmpOutput> {
    if k == 0 {
        return Err(Error::InvalidInput("sparsity must be >= 1".into()));
    }
    if y.len() != a.nrows() {
        return Err(Error::InvalidDimension(format!(
            "measurement length {} does not match matrix height {}",
            y.len(),
            a.nrows()
        )));
    }
    let j = a.ncols();
    let norms_sq: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
    let mut usable: Vec<bool> = (0..j)
        .map(|i| norms_sq[i] > 0.0 && eligible.is_none_or(|e| e[i]))
        .collect();

    let y_norm = y.norm();
    let mut residual = y.clone();
    let mut selection: Vec<usize> = Vec::new();
    let mut chol = IncrementalCholesky::new();
    let mut coef: Vec<f64> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();

    while selection.len() < k && residual.norm() > 1e-12 * y_norm {
        let corr = a.tr_mul(&residual);
        let mut order: Vec<usize> = (0..j).filter(|&i| usable[i]).collect();
        if order.is_empty() {
            break;
        }
        let score = |i: usize| corr[i].abs() / norms_sq[i].sqrt();
        order.sort_by(|&p, &q| score(q).total_cmp(&score(p)).then(p.cmp(&q)));

        let mut accepted = None;
        for &cand in &order {
            if score(cand) <= 1e-14 * residual.norm() {
                break;
            }
            let col = a.column(cand);
            let cross: Vec<f64> = selection.iter().map(|&s| a.column(s).dot(&col)).collect();
            let (row, schur) = chol.propose(&cross, norms_sq[cand]);
            if schur <= DEPENDENCE_TOL * norms_sq[cand] {
                usable[cand] = false;
                continue;
            }
            chol.push(row, schur);
            accepted = Some(cand);
            break;
        }
        let Some(cand) = accepted else { break };
        usable[cand] = false;
        selection.push(cand);
        rhs.push(a.column(cand).dot(y));
        coef = chol.solve(&rhs);
        residual = y.clone();
        for (t, &s) in selection.iter().enumerate() {
            residual.axpy(-coef[t], &a.column(s), 1.0);
        }
    }

    let code = SparseCode::from_support(j, &selection, &coef)?;
    Ok(OmpOutput {
        code,
        selection,
        residual,
    })
}

/// OMP against a unit-norm sparsifying model.
pub fn omp_code(model: &SparsifyingModel, g: &DVector<f64>, k: usize) -> Result<SparseCode> {
    Ok(omp(model.synthesis(), g, k, None)?.code)
}

#[derive(Debug, Clone)]
pub struct KsvdConfig {
    pub j_atoms: usize,
    pub k: usize,
    pub iters: usize,
    pub seed: u64,
    /// Power iterations used for each rank-one atom update.
    pub power_iters: usize,
}

impl KsvdConfig {
    pub fn new(j_atoms: usize, k: usize) -> Self {
        Self {
            j_atoms,
            k,
            iters: 30,
            seed: 0,
            power_iters: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KsvdOutput {
    pub model: SparsifyingModel,
    /// `J×B` sparse codes.
    pub codes: DMatrix<f64>,
    /// `‖G − DA‖_F` after the initial coding and after every iteration.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct SparseColumn {
    idx: Vec<usize>,
    val: Vec<f64>,
}

/// Learn a `N×J` dictionary from randomly chosen training columns.
pub fn ksvd_train(g: &TrainingSet, cfg: &KsvdConfig) -> Result<KsvdOutput> {
    let (n, b) = (g.dim(), g.count());
    if cfg.j_atoms <= n {
        return Err(Error::InvalidInput(format!(
            "dictionary must be overcomplete: J={} <= N={n}",
            cfg.j_atoms
        )));
    }
    let nonzero: Vec<usize> = (0..b)
        .filter(|&c| g.samples().column(c).norm() > 0.0)
        .collect();
    if nonzero.is_empty() {
        return Err(Error::InvalidInput("training set has rank 0".into()));
    }
    if nonzero.len() < cfg.j_atoms {
        return Err(Error::InvalidInput(format!(
            "need at least {} nonzero training columns to seed the dictionary, have {}",
            cfg.j_atoms,
            nonzero.len()
        )));
    }
    let mut r = rng::seeded(cfg.seed);
    let picks = index::sample(&mut r, nonzero.len(), cfg.j_atoms);
    let mut init = DMatrix::zeros(n, cfg.j_atoms);
    for (atom, p) in picks.iter().enumerate() {
        let col = g.samples().column(nonzero[p]);
        init.set_column(atom, &(col / col.norm()));
    }
    ksvd_train_from(g, init, cfg)
}

/// K-SVD starting from a given dictionary (columns are normalised first).
pub fn ksvd_train_from(
    g: &TrainingSet,
    mut dict: DMatrix<f64>,
    cfg: &KsvdConfig,
) -> Result<KsvdOutput> {
    let (n, b) = (g.dim(), g.count());
    if dict.nrows() != n || dict.ncols() != cfg.j_atoms {
        return Err(Error::InvalidDimension(format!(
            "initial dictionary is {}x{}, expected {n}x{}",
            dict.nrows(),
            dict.ncols(),
            cfg.j_atoms
        )));
    }
    if cfg.k == 0 {
        return Err(Error::InvalidInput("sparsity must be >= 1".into()));
    }
    if g.samples().iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput("training set has rank 0".into()));
    }
    for mut col in dict.column_iter_mut() {
        let nrm = col.norm();
        if nrm == 0.0 {
            return Err(Error::InvalidInput("initial dictionary has a zero atom".into()));
        }
        col /= nrm;
    }

    let samples = g.samples();
    let mut codes = code_all(&dict, samples, cfg.k, None)?;
    let mut resid = residual_matrix(samples, &dict, &codes);
    let mut objective = vec![linalg::frobenius(&resid)];

    for _ in 0..cfg.iters {
        update_atoms(&mut dict, &mut codes, &mut resid, cfg.power_iters);
        let after_update = linalg::frobenius(&resid);

        let (unused, coherent) = atoms_to_replace(&dict, &codes);
        let mut trial = None;
        if !coherent.is_empty() {
            let mut all = unused.clone();
            all.extend(&coherent);
            let (d2, c2, r2) = replace_and_recode(samples, &dict, &codes, &resid, &all, cfg.k)?;
            if linalg::frobenius(&r2) <= after_update * (1.0 + 1e-12) {
                trial = Some((d2, c2, r2));
            }
        }
        let (d2, c2, r2) = match trial {
            Some(t) => t,
            None => replace_and_recode(samples, &dict, &codes, &resid, &unused, cfg.k)?,
        };
        dict = d2;
        codes = c2;
        resid = r2;
        objective.push(linalg::frobenius(&resid));
    }

    let mut dense = DMatrix::zeros(cfg.j_atoms, b);
    for (c, col) in codes.iter().enumerate() {
        for (&i, &v) in col.idx.iter().zip(&col.val) {
            dense[(i, c)] = v;
        }
    }
    Ok(KsvdOutput {
        model: SparsifyingModel::dictionary(dict)?,
        codes: dense,
        objective,
    })
}

fn code_all(
    dict: &DMatrix<f64>,
    samples: &DMatrix<f64>,
    k: usize,
    previous: Option<(&[SparseColumn], &DMatrix<f64>, &[bool])>,
) -> Result<Vec<SparseColumn>> {
    (0..samples.ncols())
        .into_par_iter()
        .map(|c| {
            let g = samples.column(c).into_owned();
            let out = omp(dict, &g, k, None)?;
            let fresh = SparseColumn {
                idx: out.selection.clone(),
                val: out.selection.iter().map(|&i| out.code.values()[i]).collect(),
            };
            if let Some((prev, prev_resid, invalid)) = previous {
                let old = &prev[c];
                let valid = old.idx.iter().all(|&i| !invalid[i]);
                if valid && prev_resid.column(c).norm() < out.residual.norm() {
                    return Ok(old.clone());
                }
            }
            Ok(fresh)
        })
        .collect()
}

fn residual_matrix(
    samples: &DMatrix<f64>,
    dict: &DMatrix<f64>,
    codes: &[SparseColumn],
) -> DMatrix<f64> {
    let mut r = samples.clone();
    for (c, col) in codes.iter().enumerate() {
        let mut rc = r.column_mut(c);
        for (&i, &v) in col.idx.iter().zip(&col.val) {
            rc.axpy(-v, &dict.column(i), 1.0);
        }
    }
    r
}

/// Sequential rank-one update of every used atom. Power iteration starts
/// from the current atom, so each update never increases the residual.
fn update_atoms(
    dict: &mut DMatrix<f64>,
    codes: &mut [SparseColumn],
    resid: &mut DMatrix<f64>,
    power_iters: usize,
) {
    let n = dict.nrows();
    let mut users: Vec<Vec<(usize, usize)>> = vec![Vec::new(); dict.ncols()];
    for (c, col) in codes.iter().enumerate() {
        for (slot, &i) in col.idx.iter().enumerate() {
            users[i].push((c, slot));
        }
    }
    for (atom, omega) in users.iter().enumerate() {
        if omega.is_empty() {
            continue;
        }
        let d = dict.column(atom).into_owned();
        // E restricted to the columns that use this atom, with its contribution added back
        let mut e = DMatrix::zeros(n, omega.len());
        for (t, &(c, slot)) in omega.iter().enumerate() {
            let mut col = resid.column(c).into_owned();
            col.axpy(codes[c].val[slot], &d, 1.0);
            e.set_column(t, &col);
        }
        let mut u = d.clone();
        let mut proj = e.tr_mul(&u);
        let start = proj.norm_squared();
        for _ in 0..power_iters {
            let next = &e * &proj;
            let nrm = next.norm();
            if nrm == 0.0 {
                break;
            }
            let cand = next / nrm;
            let cand_proj = e.tr_mul(&cand);
            if cand_proj.norm_squared() < proj.norm_squared() {
                break;
            }
            let gain = cand_proj.norm_squared() - proj.norm_squared();
            u = cand;
            proj = cand_proj;
            if gain <= 1e-15 * start.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        if proj.norm_squared() < start {
            u = d;
            proj = e.tr_mul(&u);
        }
        dict.set_column(atom, &u);
        for (t, &(c, slot)) in omega.iter().enumerate() {
            codes[c].val[slot] = proj[t];
            let mut col = e.column(t).into_owned();
            col.axpy(-proj[t], &u, 1.0);
            resid.set_column(c, &col);
        }
    }
    // drop coefficients that became exactly zero so supports stay exact
    for col in codes.iter_mut() {
        let keep: Vec<bool> = col.val.iter().map(|v| *v != 0.0).collect();
        if keep.iter().all(|k| *k) {
            continue;
        }
        let mut t = 0;
        col.idx.retain(|_| {
            t += 1;
            keep[t - 1]
        });
        col.val.retain(|v| *v != 0.0);
    }
}

fn atoms_to_replace(dict: &DMatrix<f64>, codes: &[SparseColumn]) -> (Vec<usize>, Vec<usize>) {
    let j = dict.ncols();
    let mut usage = vec![0usize; j];
    for col in codes {
        for &i in &col.idx {
            usage[i] += 1;
        }
    }
    let unused: Vec<usize> = (0..j).filter(|&i| usage[i] == 0).collect();
    let gram = dict.tr_mul(dict);
    let mut coherent = BTreeSet::new();
    for p in 0..j {
        if usage[p] == 0 || coherent.contains(&p) {
            continue;
        }
        for q in p + 1..j {
            if usage[q] == 0 || coherent.contains(&q) {
                continue;
            }
            if gram[(p, q)].abs() > COHERENCE_LIMIT {
                // replace the less used of the pair
                coherent.insert(if usage[q] <= usage[p] { q } else { p });
                if coherent.contains(&p) {
                    break;
                }
            }
        }
    }
    (unused, coherent.into_iter().collect())
}

type Recoded = (DMatrix<f64>, Vec<SparseColumn>, DMatrix<f64>);

fn replace_and_recode(
    samples: &DMatrix<f64>,
    dict: &DMatrix<f64>,
    codes: &[SparseColumn],
    resid: &DMatrix<f64>,
    replace: &[usize],
    k: usize,
) -> Result<Recoded> {
    let mut dict = dict.clone();
    let mut invalid = vec![false; dict.ncols()];
    if !replace.is_empty() {
        let mut worst: Vec<(usize, f64)> = (0..samples.ncols())
            .map(|c| (c, resid.column(c).norm()))
            .filter(|(c, e)| *e > 0.0 && samples.column(*c).norm() > 0.0)
            .collect();
        worst.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (&atom, &(c, _)) in replace.iter().zip(&worst) {
            let col = samples.column(c);
            dict.set_column(atom, &(col / col.norm()));
            invalid[atom] = true;
        }
    }
    let fresh = code_all(&dict, samples, k, Some((codes, resid, &invalid)))?;
    let r = residual_matrix(samples, &dict, &fresh);
    Ok((dict, fresh, r))
}

/// Best-K wavelet codes of every training column (`N×B` in, `N×B` out).
pub fn wavelet_training_codes(g: &TrainingSet, levels: usize, k: usize) -> Result<DMatrix<f64>> {
    let n = g.dim();
    let cols: Result<Vec<DVector<f64>>> = (0..g.count())
        .into_par_iter()
        .map(|c| {
            let x: Vec<f64> = g.samples().column(c).iter().copied().collect();
            let coeffs = transforms::dwt_forward(&x, levels)?;
            Ok(transforms::top_k_sparsify(&coeffs, k.min(n))?.values().clone())
        })
        .collect();
    Ok(DMatrix::from_columns(&cols?))
}

/// Mean of squared coefficients over each atom's activations.
///
/// Returns the variances and the atoms that are never active (variance 0).
pub fn estimate_coeff_variances(codes: &DMatrix<f64>) -> (DVector<f64>, BTreeSet<usize>) {
    let j = codes.nrows();
    let mut var = DVector::zeros(j);
    let mut never = BTreeSet::new();
    for i in 0..j {
        let row = codes.row(i);
        let (sum_sq, count) = row
            .iter()
            .filter(|v| **v != 0.0)
            .fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
        if count == 0 {
            never.insert(i);
        } else {
            var[i] = sum_sq / count as f64;
        }
    }
    (var, never)
}

/// Per-coordinate mean square of `E = G − DA`.
pub fn estimate_repr_error_variances(
    g: &TrainingSet,
    model: &SparsifyingModel,
    codes: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if codes.nrows() != model.n_atoms()
        || codes.ncols() != g.count()
        || model.n_samples() != g.dim()
    {
        return Err(Error::InvalidDimension(
            "training set, model and codes disagree in shape".into(),
        ));
    }
    let e = g.samples() - model.synthesis() * codes;
    let b = g.count() as f64;
    Ok(DVector::from_iterator(
        e.nrows(),
        e.row_iter().map(|r| r.norm_squared() / b),
    ))
}

/// 0/1 indicator of the nonzero entries of `codes`.
pub fn extract_support_patterns(codes: &DMatrix<f64>) -> DMatrix<f64> {
    codes.map(|v| if v != 0.0 { 1.0 } else { 0.0 })
}

/// Everything the recovery prior needs from a trained sparse representation.
#[derive(Debug, Clone)]
pub struct TrainingStatistics {
    pub codes: DMatrix<f64>,
    pub patterns: DMatrix<f64>,
    pub coeff_variances: DVector<f64>,
    pub repr_error_variances: DVector<f64>,
    pub never_active: BTreeSet<usize>,
}

impl TrainingStatistics {
    pub fn compute(
        g: &TrainingSet,
        model: &SparsifyingModel,
        codes: DMatrix<f64>,
    ) -> Result<Self> {
        let repr_error_variances = estimate_repr_error_variances(g, model, &codes)?;
        let (coeff_variances, never_active) = estimate_coeff_variances(&codes);
        Ok(Self {
            patterns: extract_support_patterns(&codes),
            codes,
            coeff_variances,
            repr_error_variances,
            never_active,
        })
    }
}
