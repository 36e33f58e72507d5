//! Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Criteria 9 and 10 need the MIT-BIH Arrhythmia records (`.hea` + `.dat`)
//! in the directory named by `CSRBM_MITDB_DIR`; they are skipped otherwise.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use csrbm::dictlearn::{self, KsvdConfig, TrainingSet};
use csrbm::eval::r_snr;
use csrbm::io::config::{Algorithm, ExperimentConfig};
use csrbm::io::experiment::{run_experiment, ResultRow};
use csrbm::io::wfdb::{decode_format212, encode_format212};
use csrbm::rbm::{self, exact_log_partition, pattern_from_mask, CdConfig, RbmModel};
use csrbm::recovery::{
    self, greedy_support, map_coefficients, posterior_terms, rbm_omp_like, support_log_likelihood,
    PursuitOptions, RecoveryModel, Scoring,
};
use csrbm::rng::seeded;
use csrbm::sensing::{build_noise_model, gen_bernoulli_matrix, measure, quantization_noise_variance};
use csrbm::transforms::{dwt_forward, dwt_inverse, SparsifyingModel};
use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok { Outcome::Pass(detail) } else { Outcome::Fail(detail) }
}

fn normal(r: &mut impl Rng) -> f64 {
    StandardNormal.sample(r)
}

fn unit_columns(mut d: DMatrix<f64>) -> DMatrix<f64> {
    for mut c in d.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    d
}

// ---------------------------------------------------------------- 1

fn wavelet_reconstruction() -> Outcome {
    let mut r = seeded(101);
    let (mut worst_pr, mut worst_energy) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..128).map(|_| normal(&mut r)).collect();
        let c = dwt_forward(&x, 4).unwrap();
        let back = dwt_inverse(&c, 4).unwrap();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nc = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst_pr = worst_pr.max(err / nx);
        worst_energy = worst_energy.max((nc - nx).abs() / nx);
    }
    verdict(
        worst_pr <= 1e-10 && worst_energy <= 1e-10,
        format!("worst relative reconstruction error {worst_pr:.2e}, energy error {worst_energy:.2e}"),
    )
}

// ---------------------------------------------------------------- 2

/// `log Σ_h exp(vᵀWh + b_vᵀv + b_hᵀh)` by enumerating hidden states.
fn joint_log_marginal(w: &DMatrix<f64>, bv: &DVector<f64>, bh: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let p = bh.len();
    let terms: Vec<f64> = (0u64..1 << p)
        .map(|hm| {
            let h = DVector::from_fn(p, |i, _| ((hm >> i) & 1) as f64);
            (v.transpose() * w * &h)[0] + bv.dot(v) + bh.dot(&h)
        })
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn rbm_exactness() -> Outcome {
    let mut r = seeded(202);
    let mut worst_norm = 0.0f64;
    let mut worst_score = 0.0f64;
    let mut worst_grad = 0.0f64;
    for trial in 0..20 {
        let j = 2 + trial % 9;
        let p = 1 + trial % 6;
        let w = DMatrix::from_fn(j, p, |_, _| normal(&mut r));
        let bv = DVector::from_fn(j, |_, _| normal(&mut r));
        let bh = DVector::from_fn(p, |_, _| normal(&mut r));
        let model = RbmModel::new(w.clone(), bv.clone(), bh.clone()).unwrap();
        let log_z = exact_log_partition(&model).unwrap();
        let total: f64 = (0u64..1 << j)
            .map(|m| (model.prior_log_score(&pattern_from_mask(m, j)) - log_z).exp())
            .sum();
        worst_norm = worst_norm.max((total - 1.0).abs());

        for _ in 0..4 {
            let v = DVector::from_fn(j, |_, _| r.random_range(0..2) as f64);
            let s = model.prior_log_score(&v);
            let oracle = joint_log_marginal(&w, &bv, &bh, &v);
            worst_score = worst_score.max((s - oracle).abs() / oracle.abs().max(1.0));

            // central differences of −F against the analytic gradient
            let g = model.score_gradient(&v);
            let h = 1e-5;
            let score_with = |w: DMatrix<f64>, bv: DVector<f64>, bh: DVector<f64>| {
                RbmModel::new(w, bv, bh).unwrap().prior_log_score(&v)
            };
            let rel = |fd: f64, an: f64| (fd - an).abs() / an.abs().max(1.0);
            for a in 0..j {
                for b in 0..p {
                    let (mut wp, mut wm) = (w.clone(), w.clone());
                    wp[(a, b)] += h;
                    wm[(a, b)] -= h;
                    let fd = (score_with(wp, bv.clone(), bh.clone()) - score_with(wm, bv.clone(), bh.clone())) / (2.0 * h);
                    worst_grad = worst_grad.max(rel(fd, g.weights[(a, b)]));
                }
                let (mut vp, mut vm) = (bv.clone(), bv.clone());
                vp[a] += h;
                vm[a] -= h;
                let fd = (score_with(w.clone(), vp, bh.clone()) - score_with(w.clone(), vm, bh.clone())) / (2.0 * h);
                worst_grad = worst_grad.max(rel(fd, g.visible_bias[a]));
            }
            for b in 0..p {
                let (mut hp, mut hm) = (bh.clone(), bh.clone());
                hp[b] += h;
                hm[b] -= h;
                let fd = (score_with(w.clone(), bv.clone(), hp) - score_with(w.clone(), bv.clone(), hm)) / (2.0 * h);
                worst_grad = worst_grad.max(rel(fd, g.hidden_bias[b]));
            }
        }
    }
    verdict(
        worst_norm <= 1e-9 && worst_score <= 1e-9 && worst_grad <= 1e-6,
        format!(
            "normalisation error {worst_norm:.2e}, score vs joint enumeration {worst_score:.2e}, gradient rel. error {worst_grad:.2e}"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn random_instance(r: &mut impl Rng, n: usize, m: usize, j: usize, k: usize, rbm: Option<RbmModel>) -> RecoveryModel {
    let sensing = gen_bernoulli_matrix(m, n, r.random()).unwrap();
    let d = unit_columns(DMatrix::from_fn(n, j, |_, _| normal(r)));
    let sparsifier = SparsifyingModel::dictionary(d).unwrap();
    let sigma_r = DVector::from_fn(n, |_, _| r.random_range(0.0..0.05));
    let noise = build_noise_model(&sensing, &sigma_r, r.random_range(0.001..0.1)).unwrap();
    let vars = DVector::from_fn(j, |_, _| r.random_range(0.2..4.0));
    let rbm = rbm.unwrap_or_else(|| {
        RbmModel::new(
            DMatrix::from_fn(j, 4, |_, _| normal(r)),
            DVector::from_fn(j, |_, _| normal(r) - 2.0),
            DVector::from_fn(4, |_, _| normal(r)),
        )
        .unwrap()
    });
    RecoveryModel::new(sensing, sparsifier, noise, vars, rbm, k).unwrap()
}

/// `log N(y; 0, Ξ_θ Σ_θ Ξ_θᵀ + Σ_η) − log N(y; 0, Σ_η)` from dense matrices.
fn dense_log_likelihood(model: &RecoveryModel, y: &DVector<f64>, theta: &[usize]) -> f64 {
    let xt = DMatrix::from_columns(&theta.iter().map(|&i| model.xi().column(i)).collect::<Vec<_>>());
    let st = DMatrix::from_diagonal(&DVector::from_iterator(
        theta.len(),
        theta.iter().map(|&i| model.coeff_variances()[i]),
    ));
    let eta = model.noise().sigma_eta();
    let cov = &xt * st * xt.transpose() + eta;
    let log_gauss = |c: &DMatrix<f64>| {
        let two_pi = 2.0 * std::f64::consts::PI;
        -0.5 * (y.transpose() * c.clone().try_inverse().unwrap() * y)[0]
            - 0.5 * (c * two_pi).determinant().ln()
    };
    log_gauss(&cov) - log_gauss(eta)
}

fn likelihood_equivalence() -> Outcome {
    let mut r = seeded(303);
    let (mut worst_ll, mut worst_det) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let m = r.random_range(3..=16);
        let n = m + r.random_range(2..12);
        let j = n + r.random_range(1..10);
        let k = r.random_range(1..=6.min(m));
        let model = random_instance(&mut r, n, m, j, k, None);
        let theta: Vec<usize> = index::sample(&mut r, j, k).into_vec();
        let y = DVector::from_fn(m, |_, _| normal(&mut r) * 2.0);

        let ll = support_log_likelihood(&model, &y, &theta).unwrap();
        let oracle = dense_log_likelihood(&model, &y, &theta);
        worst_ll = worst_ll.max((ll - oracle).abs() / oracle.abs().max(1.0));

        let xt = DMatrix::from_columns(&theta.iter().map(|&i| model.xi().column(i)).collect::<Vec<_>>());
        let st = DMatrix::from_diagonal(&DVector::from_iterator(k, theta.iter().map(|&i| model.coeff_variances()[i])));
        let eta_inv = model.noise().sigma_eta().clone().try_inverse().unwrap();
        let rhs = (xt.transpose() * eta_inv * &xt * &st + DMatrix::identity(k, k)).determinant().ln();
        let lhs = posterior_terms(&model, &y, &theta).unwrap().log_det;
        worst_det = worst_det.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    verdict(
        worst_ll <= 1e-8 && worst_det <= 1e-8,
        format!("likelihood rel. error {worst_ll:.2e}, log-determinant rel. error {worst_det:.2e}"),
    )
}

// ---------------------------------------------------------------- 4

fn ksvd_monotonicity() -> Outcome {
    let mut violations = 0;
    let mut strictly = 0;
    for seed in 0..20u64 {
        let mut r = seeded(400 + seed);
        let truth = unit_columns(DMatrix::from_fn(16, 24, |_, _| normal(&mut r)));
        let mut g = DMatrix::zeros(16, 256);
        for c in 0..256 {
            for atom in index::sample(&mut r, 24, 3) {
                let v = normal(&mut r);
                let mut col = g.column_mut(c);
                col.axpy(v, &truth.column(atom), 1.0);
            }
            for i in 0..16 {
                g[(i, c)] += 0.01 * normal(&mut r);
            }
        }
        let mut cfg = KsvdConfig::new(24, 3);
        cfg.iters = 30;
        cfg.seed = seed;
        let out = dictlearn::ksvd_train(&TrainingSet::new(g).unwrap(), &cfg).unwrap();
        for w in out.objective.windows(2) {
            if w[1] > w[0] * (1.0 + 1e-9) {
                violations += 1;
            }
        }
        if out.objective.last() < out.objective.first() {
            strictly += 1;
        }
    }
    verdict(
        violations == 0,
        format!("{violations} increases over 20 seeds x 30 iterations; {strictly}/20 runs strictly improved"),
    )
}

// ---------------------------------------------------------------- 5

fn oracle_greedy(model: &RecoveryModel, y: &DVector<f64>, k: usize) -> Vec<usize> {
    let mut sel: Vec<usize> = Vec::new();
    while sel.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..model.n_atoms() {
            if sel.contains(&i) {
                continue;
            }
            let mut t = sel.clone();
            t.push(i);
            let s = dense_log_likelihood(model, y, &t);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        sel.push(best.unwrap().0);
    }
    sel
}

fn zero_prior_reduction() -> Outcome {
    let mut r = seeded(505);
    let mut mismatches = 0;
    let mut oracle_mismatches = 0;
    for _ in 0..100 {
        let (n, m, j, k) = (16, 8, 24, 3);
        let model = random_instance(&mut r, n, m, j, k, Some(RbmModel::zeros(j, 5)));
        let y = DVector::from_fn(m, |_, _| normal(&mut r) * 2.0);
        let rec = rbm_omp_like(&model, &y).unwrap();
        let lik = greedy_support(
            &model,
            &y,
            PursuitOptions {
                scoring: Scoring::LikelihoodOnly,
                fast_path: false,
            },
        )
        .unwrap();
        if rec.selection != lik {
            mismatches += 1;
        }
        if rec.selection != oracle_greedy(&model, &y, k) {
            oracle_mismatches += 1;
        }
    }
    verdict(
        mismatches == 0 && oracle_mismatches == 0,
        format!("{mismatches}/100 differ from likelihood-only pursuit, {oracle_mismatches}/100 from dense greedy oracle"),
    )
}

// ---------------------------------------------------------------- 6

fn oracle_support_map() -> Outcome {
    let mut r = seeded(606);
    let (n, m, k) = (64, 32, 6);
    let sparsifier = SparsifyingModel::wavelet(n, 4).unwrap();
    let mut good = 0;
    let trials = 200;
    for _ in 0..trials {
        let op = gen_bernoulli_matrix(m, n, r.random()).unwrap();
        let noise = build_noise_model(&op, &DVector::zeros(n), 1e-6).unwrap();
        let model = RecoveryModel::new(
            op.clone(),
            sparsifier.clone(),
            noise,
            DVector::from_element(n, 1.0),
            RbmModel::zeros(n, 1),
            k,
        )
        .unwrap();
        let mut theta: Vec<usize> = index::sample(&mut r, n, k).into_vec();
        theta.sort_unstable();
        let mut s = DVector::zeros(n);
        for &i in &theta {
            s[i] = normal(&mut r);
        }
        let x = sparsifier.synthesize(&s);
        let y = measure(&op, &x, 1e-6, r.random()).unwrap();
        let vals = map_coefficients(&model, &y, &theta).unwrap();
        let mut sh = DVector::zeros(n);
        for (t, &i) in theta.iter().enumerate() {
            sh[i] = vals[t];
        }
        let xh = sparsifier.synthesize(&sh);
        if r_snr(x.as_slice(), xh.as_slice()).unwrap() >= 40.0 {
            good += 1;
        }
    }
    let frac = good as f64 / trials as f64;
    verdict(frac >= 0.95, format!("{good}/{trials} trials at >= 40 dB"))
}

// ---------------------------------------------------------------- 7

/// Supports made of two 3-atom blocks: a uniformly chosen block plus,
/// 90% of the time, its fixed partner (otherwise another random block).
struct PlantedPatterns {
    partner: Vec<usize>,
}

impl PlantedPatterns {
    const BLOCK: usize = 3;
    const BLOCKS: usize = 32;

    fn new(r: &mut impl Rng) -> Self {
        let order = index::sample(r, Self::BLOCKS, Self::BLOCKS).into_vec();
        let mut partner = vec![0; Self::BLOCKS];
        for pair in order.chunks(2) {
            partner[pair[0]] = pair[1];
            partner[pair[1]] = pair[0];
        }
        Self { partner }
    }

    fn draw(&self, r: &mut impl Rng) -> Vec<usize> {
        let a = r.random_range(0..Self::BLOCKS);
        let b = if r.random_bool(0.9) {
            self.partner[a]
        } else {
            loop {
                let c = r.random_range(0..Self::BLOCKS);
                if c != a {
                    break c;
                }
            }
        };
        let mut s: Vec<usize> = [a, b]
            .iter()
            .flat_map(|&blk| (0..Self::BLOCK).map(move |t| blk * Self::BLOCK + t))
            .collect();
        s.sort_unstable();
        s
    }
}

fn structured_prior_benefit() -> Outcome {
    let mut r = seeded(707);
    let (n, k) = (96, 6);
    let m = n / 4;
    let sigma_n_sq = 1e-3;
    let sparsifier = SparsifyingModel::wavelet(n, 4).unwrap();
    let planted = PlantedPatterns::new(&mut r);
    let draw_code = |r: &mut rand_chacha::ChaCha8Rng| -> (Vec<usize>, DVector<f64>) {
        let theta = planted.draw(r);
        let mut s = DVector::zeros(n);
        for &i in &theta {
            s[i] = normal(r);
        }
        (theta, s)
    };

    let b = 5000;
    let mut codes = DMatrix::zeros(n, b);
    for c in 0..b {
        let (_, s) = draw_code(&mut r);
        codes.set_column(c, &s);
    }
    let patterns = dictlearn::extract_support_patterns(&codes);
    let (vars, never) = dictlearn::estimate_coeff_variances(&codes);
    let prior = rbm::cd_train(&patterns, n, &CdConfig::default(), 17).unwrap();

    let trials = 100;
    let (mut sum_rbm, mut sum_omp) = (0.0, 0.0);
    for _ in 0..trials {
        let op = gen_bernoulli_matrix(m, n, r.random()).unwrap();
        let noise = build_noise_model(&op, &DVector::zeros(n), sigma_n_sq).unwrap();
        let model = RecoveryModel::new(op.clone(), sparsifier.clone(), noise, vars.clone(), prior.clone(), k).unwrap();
        let (_, s) = draw_code(&mut r);
        let x = sparsifier.synthesize(&s);
        let y = measure(&op, &x, sigma_n_sq, r.random()).unwrap();
        let xr = rbm_omp_like(&model, &y).unwrap().signal;
        let xo = recovery::omp_recover(&model, &y, k).unwrap().signal;
        sum_rbm += r_snr(x.as_slice(), xr.as_slice()).unwrap();
        sum_omp += r_snr(x.as_slice(), xo.as_slice()).unwrap();
    }
    let (mr, mo) = (sum_rbm / trials as f64, sum_omp / trials as f64);
    verdict(
        mr >= mo + 2.0,
        format!(
            "mean R-SNR rbm-omp-like {mr:.2} dB vs omp {mo:.2} dB over {trials} trials (gap {:.2} dB, {} atoms unused in training)",
            mr - mo,
            never.len()
        ),
    )
}

// ---------------------------------------------------------------- 8

/// Packing written out from the byte layout, independent of the encoder.
fn pack_pair(s0: i16, s1: i16) -> [u8; 3] {
    let a = (s0 as u16) & 0xFFF;
    let b = (s1 as u16) & 0xFFF;
    [(a & 0xFF) as u8, ((a >> 8) as u8) | (((b >> 8) as u8) << 4), (b & 0xFF) as u8]
}

fn wfdb_round_trip() -> Outcome {
    let mut r = seeded(808);
    let pairs: Vec<(i16, i16)> = (0..10_000)
        .map(|_| (r.random_range(-2048..=2047), r.random_range(-2048..=2047)))
        .collect();
    let (a, b): (Vec<i16>, Vec<i16>) = pairs.iter().copied().unzip();
    let bytes = encode_format212(&[a.clone(), b.clone()]).unwrap();
    let oracle: Vec<u8> = pairs.iter().flat_map(|&(x, y)| pack_pair(x, y)).collect();
    let decoded = decode_format212(&bytes, 2).unwrap();
    let worked = decode_format212(&[0x01, 0x00, 0x00], 2).unwrap() == vec![vec![1], vec![0]]
        && decode_format212(&[0xFF, 0x0F, 0x00], 2).unwrap() == vec![vec![-1], vec![0]];
    let exact = decoded == vec![a, b] && bytes == oracle;
    verdict(
        exact && worked,
        format!("10^4 pairs bit-exact: {exact}; worked byte triples: {worked}"),
    )
}

// ---------------------------------------------------------------- 9, 10

fn mitdb_dir() -> Option<PathBuf> {
    std::env::var_os("CSRBM_MITDB_DIR").map(PathBuf::from)
}

fn mitdb_config(dir: PathBuf, records: &[&str], m_ratio: f64) -> ExperimentConfig {
    // 92800 training and 5000 test windows spread evenly over the records
    ExperimentConfig {
        data_source: csrbm::io::config::DataSource::Wfdb,
        data_dir: dir,
        records: records.iter().map(|s| s.to_string()).collect(),
        window_n: 128,
        wavelet_levels: 4,
        m_ratios: vec![m_ratio],
        max_train_segments: 92_800 / records.len(),
        max_test_segments: 5_000 / records.len(),
        ..Default::default()
    }
}

fn macro_mean(rows: &[ResultRow], alg: Algorithm, f: impl Fn(&ResultRow) -> f64) -> f64 {
    let v: Vec<f64> = rows.iter().filter(|r| r.algorithm == alg).map(f).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn mitdb_detection_metrics() -> Outcome {
    let Some(dir) = mitdb_dir() else {
        return Outcome::Skip("set CSRBM_MITDB_DIR to a directory holding the MIT-BIH records".into());
    };
    let mut cfg = mitdb_config(dir, &["103", "105", "106", "108", "112", "113", "116"], 0.3);
    cfg.sparsity_k = 13;
    cfg.sigma_n_sq = 0.1;
    cfg.algorithms = vec![Algorithm::RbmOmpLike];
    let rows = match run_experiment(&cfg) {
        Ok(rows) => rows,
        Err(e) => return Outcome::Fail(format!("experiment failed: {e}")),
    };
    let p = macro_mean(&rows, Algorithm::RbmOmpLike, |r| r.precision);
    let rc = macro_mean(&rows, Algorithm::RbmOmpLike, |r| r.recall);
    verdict(
        (p - 0.982).abs() <= 0.05 && (rc - 0.983).abs() <= 0.05,
        format!("precision {p:.3} (reference 0.982), recall {rc:.3} (reference 0.983)"),
    )
}

fn mitdb_record119_sweep() -> Outcome {
    let Some(dir) = mitdb_dir() else {
        return Outcome::Skip("set CSRBM_MITDB_DIR to a directory holding the MIT-BIH records".into());
    };
    let records = ["103", "105", "106", "108", "112", "113", "116", "119"];
    let mut notes = Vec::new();
    let mut ok = true;
    for (transform, reference) in [("wavelet", 25.0), ("dictionary", 31.67)] {
        let mut cfg = mitdb_config(dir.clone(), &records, 0.35);
        cfg.apply_override(&format!("transform={transform}")).unwrap();
        // 4 s of record 119
        cfg.max_test_segments = (4.0f64 * 360.0 / 128.0).ceil() as usize;
        let rows = match run_experiment(&cfg) {
            Ok(rows) => rows,
            Err(e) => return Outcome::Fail(format!("{transform} experiment failed: {e}")),
        };
        let pick = |alg| rows.iter().find(|r| r.algorithm == alg && r.record == "119").unwrap().r_snr_mean;
        let (rb, om) = (pick(Algorithm::RbmOmpLike), pick(Algorithm::Omp));
        ok &= om < rb && (rb - reference).abs() <= 3.0;
        notes.push(format!("{transform}: omp {om:.2} dB, rbm-omp-like {rb:.2} dB (reference {reference})"));
    }
    verdict(ok, notes.join("; "))
}

// ---------------------------------------------------------------- 11

fn quantizer_endpoints() -> Outcome {
    let lo = quantization_noise_variance(37.5, 10);
    let hi = quantization_noise_variance(8600.0, 10);
    // closed forms: Δf² / (12 · 4^m)
    let lo_exact = 1406.25 / 12_582_912.0;
    let hi_exact = 73_960_000.0 / 12_582_912.0;
    let formula_ok = (lo / lo_exact - 1.0).abs() <= 0.01 && (hi / hi_exact - 1.0).abs() <= 0.01;
    let dev_lo = (lo / 1.1e-4 - 1.0).abs();
    let dev_hi = (hi / 5.88 - 1.0).abs();
    // the quoted figures carry two and three significant digits
    let quoted_ok = format!("{lo:.1e}") == "1.1e-4" && (hi * 100.0).round() / 100.0 == 5.88;
    verdict(
        formula_ok && quoted_ok && dev_hi <= 0.01,
        format!(
            "variance(37.5, 10) = {lo:.4e} ({:.1}% from the quoted 1.1e-4, equal at the quoted 2 digits); variance(8600, 10) = {hi:.4} ({:.2}% from 5.88)",
            dev_lo * 100.0,
            dev_hi * 100.0
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("1 wavelet perfect reconstruction", wavelet_reconstruction, Duration::from_secs(5)),
        ("2 RBM exactness and gradients", rbm_exactness, Duration::from_secs(30)),
        ("3 likelihood equivalence", likelihood_equivalence, Duration::from_secs(30)),
        ("4 K-SVD monotonicity", ksvd_monotonicity, Duration::from_secs(120)),
        ("5 zero-prior reduction", zero_prior_reduction, Duration::from_secs(60)),
        ("6 oracle-support MAP", oracle_support_map, Duration::from_secs(60)),
        ("7 structured-prior benefit", structured_prior_benefit, Duration::from_secs(600)),
        ("8 WFDB 212 round trip", wfdb_round_trip, Duration::from_secs(1)),
        ("9 MIT-BIH detection metrics", mitdb_detection_metrics, Duration::MAX),
        ("10 MIT-BIH record 119 sweep", mitdb_record119_sweep, Duration::MAX),
        ("11 quantizer endpoints", quantizer_endpoints, Duration::from_secs(1)),
    ];
    let mut failed = BTreeSet::new();
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let timing = format!("{:.2}s", took.as_secs_f64());
        match outcome {
            Outcome::Pass(d) if took <= budget => println!("PASS criterion {name}: {d} [{timing}]"),
            Outcome::Pass(d) => {
                failed.insert(name);
                println!("FAIL criterion {name}: {d} [{timing}, over budget {budget:?}]");
            }
            Outcome::Fail(d) => {
                failed.insert(name);
                println!("FAIL criterion {name}: {d} [{timing}]");
            }
            Outcome::Skip(d) => println!("SKIP criterion {name}: {d}"),
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
