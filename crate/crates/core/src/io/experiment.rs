//! End-to-end experiment runner: train on the leading part of every record,
//! compress and recover the rest, and report one CSV row per
//! (algorithm, M, repetition, record).

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use super::config::{Algorithm, DataSource, ExperimentConfig, TransformChoice, Units};
use super::container::ModelBundle;
use super::synth::{synthetic_ecg, SynthConfig};
use super::wfdb;
use crate::dictlearn::{self, KsvdConfig, TrainingSet, TrainingStatistics};
use crate::eval;
use crate::rbm;
use crate::recovery::{self, RecoveryModel};
use crate::rng::derive_seed;
use crate::sensing;
use crate::transforms::SparsifyingModel;
use crate::{Error, Result};

/// Per-segment R-SNR values above this are clipped before averaging, so an
/// exact reconstruction does not turn the mean infinite.
pub const R_SNR_CAP_DB: f64 = 200.0;

pub const CSV_HEADER: [&str; 11] = [
    "algorithm",
    "transform",
    "M_over_N",
    "repetition",
    "record",
    "r_snr_mean",
    "precision",
    "recall",
    "psim_precision",
    "psim_recall",
    "wall_time_ms",
];

/// One input signal in the configured units.
#[derive(Debug, Clone)]
pub struct SourceRecord {
    pub name: String,
    pub fs: f64,
    pub samples: Vec<f64>,
    /// Known R-peak positions (synthetic data only).
    pub true_peaks: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub transform: TransformChoice,
    pub m_over_n: f64,
    pub repetition: usize,
    pub record: String,
    pub r_snr_mean: f64,
    pub precision: f64,
    pub recall: f64,
    pub psim_precision: f64,
    pub psim_recall: f64,
    pub wall_time_ms: f64,
}

/// Load every configured record. For WFDB sources all files are checked
/// before any is decoded.
pub fn load_sources(cfg: &ExperimentConfig) -> Result<Vec<SourceRecord>> {
    match cfg.data_source {
        DataSource::Wfdb => {
            for name in &cfg.records {
                for f in wfdb::record_files(&cfg.data_dir, name)? {
                    if !f.exists() {
                        return Err(Error::MissingData(f));
                    }
                }
            }
            cfg.records
                .iter()
                .map(|name| {
                    let rec = wfdb::read_record(&cfg.data_dir, name)?;
                    let spec = rec.meta.signals.get(cfg.channel).ok_or_else(|| {
                        Error::Config(format!("record {name} has no channel {}", cfg.channel))
                    })?;
                    let scale = match cfg.units {
                        Units::Adu => spec.gain,
                        Units::Millivolts => 1.0,
                    };
                    Ok(SourceRecord {
                        name: name.clone(),
                        fs: rec.meta.sampling_freq,
                        samples: rec.signals[cfg.channel].iter().map(|v| v * scale).collect(),
                        true_peaks: None,
                    })
                })
                .collect()
        }
        DataSource::Synthetic => (0..cfg.synth_records)
            .map(|i| {
                let sc = SynthConfig {
                    fs: cfg.synth_fs,
                    duration_s: cfg.synth_duration_s,
                    ..SynthConfig::default()
                };
                let ecg = synthetic_ecg(&sc, derive_seed(cfg.seed, &[10, i as u64]))?;
                let scale = match cfg.units {
                    Units::Adu => cfg.synth_gain,
                    Units::Millivolts => 1.0,
                };
                Ok(SourceRecord {
                    name: format!("synth{i}"),
                    fs: ecg.fs,
                    samples: ecg.samples.iter().map(|v| v * scale).collect(),
                    true_peaks: Some(ecg.r_peaks),
                })
            })
            .collect(),
    }
}

fn split_point(cfg: &ExperimentConfig, len: usize) -> usize {
    (len as f64 * cfg.train_fraction).floor() as usize
}

/// `cap` evenly spaced items (all of them when `cap` is 0 or large enough).
fn evenly_spaced<T: Clone>(items: Vec<T>, cap: usize) -> Vec<T> {
    if cap == 0 || items.len() <= cap {
        return items;
    }
    (0..cap).map(|i| items[i * items.len() / cap].clone()).collect()
}

/// Overlapping training windows from the leading part of every record.
pub fn training_segments(cfg: &ExperimentConfig, sources: &[SourceRecord]) -> Vec<Vec<f64>> {
    sources
        .iter()
        .flat_map(|s| {
            let head = &s.samples[..split_point(cfg, s.samples.len())];
            evenly_spaced(
                eval::segment_strided(head, cfg.window_n, cfg.stride()),
                cfg.max_train_segments,
            )
        })
        .collect()
}

/// Start offset and non-overlapping windows of the test part of a record.
pub fn test_segments(cfg: &ExperimentConfig, source: &SourceRecord) -> (usize, Vec<Vec<f64>>) {
    let start = split_point(cfg, source.samples.len());
    let mut segs = eval::segment(&source.samples[start..], cfg.window_n);
    if cfg.max_test_segments > 0 {
        segs.truncate(cfg.max_test_segments);
    }
    (start, segs)
}

/// Learn the sparsifying model and its training statistics.
pub fn train_sparsifier(
    cfg: &ExperimentConfig,
    g: &TrainingSet,
) -> Result<(SparsifyingModel, TrainingStatistics)> {
    let k = cfg.sparsity();
    let (model, codes) = match cfg.transform {
        TransformChoice::Wavelet => {
            let model = SparsifyingModel::wavelet(cfg.window_n, cfg.wavelet_levels)?;
            let codes = dictlearn::wavelet_training_codes(g, cfg.wavelet_levels, k)?;
            (model, codes)
        }
        TransformChoice::Dictionary => {
            let mut kc = KsvdConfig::new(cfg.atoms(), k);
            kc.iters = cfg.ksvd_iters;
            kc.seed = derive_seed(cfg.seed, &[0]);
            let out = dictlearn::ksvd_train(g, &kc)?;
            log::info!(
                "K-SVD objective {:.4e} -> {:.4e}",
                out.objective.first().copied().unwrap_or(f64::NAN),
                out.objective.last().copied().unwrap_or(f64::NAN)
            );
            (out.model, out.codes)
        }
    };
    let stats = TrainingStatistics::compute(g, &model, codes)?;
    Ok((model, stats))
}

/// Fit the support prior.
pub fn train_prior(cfg: &ExperimentConfig, patterns: &nalgebra::DMatrix<f64>) -> Result<rbm::RbmModel> {
    rbm::cd_train(patterns, cfg.hidden(), &cfg.rbm, derive_seed(cfg.seed, &[3]))
}

/// Sparsifier, statistics and prior from raw training windows.
pub fn train_bundle(cfg: &ExperimentConfig, segments: &[Vec<f64>]) -> Result<ModelBundle> {
    let g = TrainingSet::from_segments(segments)?;
    log::info!("training on {} segments of length {}", g.count(), g.dim());
    let (sparsifier, stats) = train_sparsifier(cfg, &g)?;
    if !stats.never_active.is_empty() {
        log::info!("{} atoms never active in training", stats.never_active.len());
    }
    let rbm = train_prior(cfg, &stats.patterns)?;
    Ok(ModelBundle {
        sparsifier,
        rbm,
        coeff_variances: stats.coeff_variances,
        repr_error_variances: stats.repr_error_variances,
        config_echo: cfg.to_text(),
        support_patterns: None,
    })
}

/// Recovery model for one sensing matrix.
pub fn recovery_model(
    bundle: &ModelBundle,
    m: usize,
    sigma_n_sq: f64,
    sensing_seed: u64,
    k: usize,
) -> Result<RecoveryModel> {
    let n = bundle.sparsifier.n_samples();
    let op = sensing::gen_bernoulli_matrix(m, n, sensing_seed)?;
    let noise = sensing::build_noise_model(&op, &bundle.repr_error_variances, sigma_n_sq)?;
    RecoveryModel::new(
        op,
        bundle.sparsifier.clone(),
        noise,
        bundle.coeff_variances.clone(),
        bundle.rbm.clone(),
        k,
    )
}

/// Recover one window from its measurement.
pub fn recover(model: &RecoveryModel, y: &DVector<f64>, algorithm: Algorithm) -> Result<Vec<f64>> {
    let rec = match algorithm {
        Algorithm::RbmOmpLike => recovery::rbm_omp_like(model, y)?,
        Algorithm::Omp => recovery::omp_recover(model, y, model.sparsity_k())?,
    };
    Ok(rec.signal.iter().copied().collect())
}

/// Metrics of one reconstructed record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordMetrics {
    pub r_snr_mean: f64,
    pub precision: f64,
    pub recall: f64,
    pub psim_precision: f64,
    pub psim_recall: f64,
}

fn or_nan(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

fn psim_or_nan(orig: Option<f64>, recon: Option<f64>) -> f64 {
    match (orig, recon) {
        (Some(o), Some(r)) => eval::psim(o, r).unwrap_or(f64::NAN),
        _ => f64::NAN,
    }
}

/// Compare original and reconstructed windows of one record.
///
/// Detection precision and recall score the reconstruction's QRS detections
/// against those found on the original. PSim compares each metric computed
/// against `truth` on the original and on the reconstruction; without known
/// beat positions the original's detections serve as truth.
pub fn record_metrics(
    original: &[Vec<f64>],
    reconstructed: &[Vec<f64>],
    fs: f64,
    truth: Option<&[usize]>,
    tolerance: usize,
) -> Result<RecordMetrics> {
    let snrs: Vec<f64> = original
        .iter()
        .zip(reconstructed)
        .filter(|(x, _)| x.iter().any(|v| *v != 0.0))
        .map(|(x, xh)| eval::r_snr(x, xh).map(|v| v.min(R_SNR_CAP_DB)))
        .collect::<Result<_>>()?;
    let r_snr_mean = if snrs.is_empty() {
        f64::NAN
    } else {
        snrs.iter().sum::<f64>() / snrs.len() as f64
    };

    let x = eval::concatenate(original);
    let xh = eval::concatenate(reconstructed);
    let ref_peaks = eval::detect_qrs(&x, fs);
    let rec_peaks = eval::detect_qrs(&xh, fs);
    let m = eval::match_peaks(&ref_peaks, &rec_peaks, tolerance);
    let truth = truth.unwrap_or(&ref_peaks);
    let on_orig = eval::match_peaks(truth, &ref_peaks, tolerance);
    let on_recon = eval::match_peaks(truth, &rec_peaks, tolerance);
    Ok(RecordMetrics {
        r_snr_mean,
        precision: or_nan(m.precision()),
        recall: or_nan(m.recall()),
        psim_precision: psim_or_nan(on_orig.precision(), on_recon.precision()),
        psim_recall: psim_or_nan(on_orig.recall(), on_recon.recall()),
    })
}

struct TestRecord<'a> {
    source: &'a SourceRecord,
    segments: Vec<Vec<f64>>,
    truth: Option<Vec<usize>>,
}

/// Run the whole protocol. Data files are validated before training starts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let sources = load_sources(cfg)?;
    let train = training_segments(cfg, &sources);
    if train.is_empty() {
        return Err(Error::InvalidInput(
            "records too short to yield any training window".into(),
        ));
    }
    let bundle = train_bundle(cfg, &train)?;

    let tests: Vec<TestRecord> = sources
        .iter()
        .map(|s| {
            let (start, segments) = test_segments(cfg, s);
            let end = start + segments.len() * cfg.window_n;
            let truth = s.true_peaks.as_ref().map(|p| {
                p.iter()
                    .filter(|&&i| i >= start && i < end)
                    .map(|&i| i - start)
                    .collect()
            });
            TestRecord {
                source: s,
                segments,
                truth,
            }
        })
        .collect();
    if tests.iter().all(|t| t.segments.is_empty()) {
        return Err(Error::InvalidInput("records too short to yield any test window".into()));
    }

    let jobs: Vec<(usize, usize)> = (0..cfg.m_ratios.len())
        .flat_map(|mi| (0..cfg.repetitions).map(move |rep| (mi, rep)))
        .collect();
    let k = cfg.sparsity();
    let per_job: Vec<Vec<(usize, ResultRow)>> = jobs
        .par_iter()
        .map(|&(mi, rep)| {
            let ratio = cfg.m_ratios[mi];
            let m = cfg.measurements(ratio);
            let model = recovery_model(
                &bundle,
                m,
                cfg.sigma_n_sq,
                derive_seed(cfg.seed, &[1, mi as u64, rep as u64]),
                k,
            )?;
            let mut rows = Vec::new();
            for (ri, t) in tests.iter().enumerate() {
                if t.segments.is_empty() {
                    continue;
                }
                let ys: Vec<DVector<f64>> = t
                    .segments
                    .iter()
                    .enumerate()
                    .map(|(si, seg)| {
                        let seed = derive_seed(cfg.seed, &[2, mi as u64, rep as u64, ri as u64, si as u64]);
                        sensing::measure(model.sensing(), &DVector::from_column_slice(seg), cfg.sigma_n_sq, seed)
                    })
                    .collect::<Result<_>>()?;
                for (ai, &alg) in cfg.algorithms.iter().enumerate() {
                    let clock = Instant::now();
                    let recon: Vec<Vec<f64>> = ys
                        .iter()
                        .map(|y| recover(&model, y, alg))
                        .collect::<Result<_>>()?;
                    let elapsed = clock.elapsed().as_secs_f64() * 1e3;
                    let mt = record_metrics(
                        &t.segments,
                        &recon,
                        t.source.fs,
                        t.truth.as_deref(),
                        cfg.qrs_tolerance,
                    )?;
                    rows.push((
                        ai,
                        ResultRow {
                            algorithm: alg,
                            transform: cfg.transform,
                            m_over_n: ratio,
                            repetition: rep,
                            record: t.source.name.clone(),
                            r_snr_mean: mt.r_snr_mean,
                            precision: mt.precision,
                            recall: mt.recall,
                            psim_precision: mt.psim_precision,
                            psim_recall: mt.psim_recall,
                            wall_time_ms: if cfg.timing { elapsed } else { 0.0 },
                        },
                    ));
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    // jobs are already in (M, repetition) order and records in input order;
    // a stable sort on algorithm gives (algorithm, M, repetition, record)
    let mut rows: Vec<(usize, ResultRow)> = per_job.into_iter().flatten().collect();
    rows.sort_by_key(|(ai, _)| *ai);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

fn fmt(v: f64) -> String {
    if v.is_nan() { "nan".into() } else { format!("{v:.6}") }
}

pub fn write_csv(rows: &[ResultRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.algorithm.name().to_string(),
            match r.transform {
                TransformChoice::Wavelet => "wavelet".into(),
                TransformChoice::Dictionary => "dictionary".into(),
            },
            format!("{}", r.m_over_n),
            r.repetition.to_string(),
            r.record.clone(),
            fmt(r.r_snr_mean),
            fmt(r.precision),
            fmt(r.recall),
            fmt(r.psim_precision),
            fmt(r.psim_recall),
            format!("{:.3}", r.wall_time_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}
