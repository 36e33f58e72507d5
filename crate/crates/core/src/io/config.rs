//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Lists are comma separated. A value of `0` for the size keys marked "auto"
//! selects the documented default for the chosen transform. See the README
//! for the full key table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::rbm::CdConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Wfdb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformChoice {
    Wavelet,
    Dictionary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    RbmOmpLike,
    Omp,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RbmOmpLike => "rbm-omp-like",
            Algorithm::Omp => "omp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rbm-omp-like" => Some(Algorithm::RbmOmpLike),
            "omp" => Some(Algorithm::Omp),
            _ => None,
        }
    }
}

/// Amplitude units the pipeline works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    /// Baseline-removed ADC units, i.e. millivolts times gain.
    Adu,
    Millivolts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data_source: DataSource,
    pub data_dir: PathBuf,
    pub records: Vec<String>,
    pub channel: usize,
    pub units: Units,
    pub synth_records: usize,
    pub synth_duration_s: f64,
    pub synth_fs: f64,
    pub synth_gain: f64,
    pub window_n: usize,
    /// Leading fraction of each record used for training.
    pub train_fraction: f64,
    /// auto: N/4
    pub train_stride: usize,
    /// Per record; 0 = no cap.
    pub max_train_segments: usize,
    /// Per record; 0 = no cap.
    pub max_test_segments: usize,
    pub transform: TransformChoice,
    pub wavelet_levels: usize,
    /// auto: N for wavelets, 3N for dictionaries.
    pub atoms_j: usize,
    /// auto: round(0.1N) for wavelets, round(0.08N) for dictionaries.
    pub sparsity_k: usize,
    /// auto: J.
    pub hidden_p: usize,
    pub ksvd_iters: usize,
    pub rbm: CdConfig,
    pub m_ratios: Vec<f64>,
    pub sigma_n_sq: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub qrs_tolerance: usize,
    /// Record wall-clock time per row. Off by default so output is reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_source: DataSource::Synthetic,
            data_dir: PathBuf::from("data"),
            records: Vec::new(),
            channel: 0,
            units: Units::Adu,
            synth_records: 2,
            synth_duration_s: 60.0,
            synth_fs: 360.0,
            synth_gain: 200.0,
            window_n: 128,
            train_fraction: 0.75,
            train_stride: 0,
            max_train_segments: 0,
            max_test_segments: 0,
            transform: TransformChoice::Wavelet,
            wavelet_levels: 4,
            atoms_j: 0,
            sparsity_k: 0,
            hidden_p: 0,
            ksvd_iters: 30,
            rbm: CdConfig::default(),
            m_ratios: vec![0.3],
            sigma_n_sq: 0.25,
            repetitions: 1,
            seed: 1,
            algorithms: vec![Algorithm::RbmOmpLike, Algorithm::Omp],
            qrs_tolerance: 4,
            timing: false,
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value {value:?} for {key}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "data_source",
        "data_dir",
        "records",
        "channel",
        "units",
        "synth_records",
        "synth_duration_s",
        "synth_fs",
        "synth_gain",
        "window_n",
        "train_fraction",
        "train_stride",
        "max_train_segments",
        "max_test_segments",
        "transform",
        "wavelet_levels",
        "atoms_j",
        "sparsity_k",
        "hidden_p",
        "ksvd_iters",
        "rbm_learning_rate",
        "rbm_batch_size",
        "rbm_epochs",
        "rbm_gibbs_steps",
        "rbm_initial_momentum",
        "rbm_final_momentum",
        "rbm_momentum_switch_epoch",
        "rbm_weight_decay",
        "rbm_init_weight_std",
        "m_ratios",
        "sigma_n_sq",
        "repetitions",
        "seed",
        "algorithms",
        "qrs_tolerance",
        "timing",
    ];

    /// Apply one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "data_source" => {
                self.data_source = match value {
                    "synthetic" => DataSource::Synthetic,
                    "wfdb" => DataSource::Wfdb,
                    _ => return Err(bad(key, value)),
                }
            }
            "data_dir" => self.data_dir = PathBuf::from(value),
            "records" => self.records = list(value).map(String::from).collect(),
            "channel" => self.channel = num(key, value)?,
            "units" => {
                self.units = match value {
                    "adu" => Units::Adu,
                    "mv" => Units::Millivolts,
                    _ => return Err(bad(key, value)),
                }
            }
            "synth_records" => self.synth_records = num(key, value)?,
            "synth_duration_s" => self.synth_duration_s = num(key, value)?,
            "synth_fs" => self.synth_fs = num(key, value)?,
            "synth_gain" => self.synth_gain = num(key, value)?,
            "window_n" => self.window_n = num(key, value)?,
            "train_fraction" => self.train_fraction = num(key, value)?,
            "train_stride" => self.train_stride = num(key, value)?,
            "max_train_segments" => self.max_train_segments = num(key, value)?,
            "max_test_segments" => self.max_test_segments = num(key, value)?,
            "transform" => {
                self.transform = match value {
                    "wavelet" => TransformChoice::Wavelet,
                    "dictionary" => TransformChoice::Dictionary,
                    _ => return Err(bad(key, value)),
                }
            }
            "wavelet_levels" => self.wavelet_levels = num(key, value)?,
            "atoms_j" => self.atoms_j = num(key, value)?,
            "sparsity_k" => self.sparsity_k = num(key, value)?,
            "hidden_p" => self.hidden_p = num(key, value)?,
            "ksvd_iters" => self.ksvd_iters = num(key, value)?,
            "rbm_learning_rate" => self.rbm.learning_rate = num(key, value)?,
            "rbm_batch_size" => self.rbm.batch_size = num(key, value)?,
            "rbm_epochs" => self.rbm.epochs = num(key, value)?,
            "rbm_gibbs_steps" => self.rbm.gibbs_steps = num(key, value)?,
            "rbm_initial_momentum" => self.rbm.initial_momentum = num(key, value)?,
            "rbm_final_momentum" => self.rbm.final_momentum = num(key, value)?,
            "rbm_momentum_switch_epoch" => self.rbm.momentum_switch_epoch = num(key, value)?,
            "rbm_weight_decay" => self.rbm.weight_decay = num(key, value)?,
            "rbm_init_weight_std" => self.rbm.init_weight_std = num(key, value)?,
            "m_ratios" => {
                self.m_ratios = list(value)
                    .map(|v| num::<f64>(key, v))
                    .collect::<Result<_>>()?
            }
            "sigma_n_sq" => self.sigma_n_sq = num(key, value)?,
            "repetitions" => self.repetitions = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "algorithms" => {
                self.algorithms = list(value)
                    .map(|v| Algorithm::parse(v).ok_or_else(|| bad(key, v)))
                    .collect::<Result<_>>()?
            }
            "qrs_tolerance" => self.qrs_tolerance = num(key, value)?,
            "timing" => self.timing = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(k.trim(), v)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Apply every setting in `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            self.set(k.trim(), v).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingData(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put(
            "data_source",
            match self.data_source {
                DataSource::Synthetic => "synthetic",
                DataSource::Wfdb => "wfdb",
            }
            .into(),
        );
        put("data_dir", self.data_dir.display().to_string());
        put("records", self.records.join(","));
        put("channel", self.channel.to_string());
        put(
            "units",
            match self.units {
                Units::Adu => "adu",
                Units::Millivolts => "mv",
            }
            .into(),
        );
        put("synth_records", self.synth_records.to_string());
        put("synth_duration_s", self.synth_duration_s.to_string());
        put("synth_fs", self.synth_fs.to_string());
        put("synth_gain", self.synth_gain.to_string());
        put("window_n", self.window_n.to_string());
        put("train_fraction", self.train_fraction.to_string());
        put("train_stride", self.train_stride.to_string());
        put("max_train_segments", self.max_train_segments.to_string());
        put("max_test_segments", self.max_test_segments.to_string());
        put(
            "transform",
            match self.transform {
                TransformChoice::Wavelet => "wavelet",
                TransformChoice::Dictionary => "dictionary",
            }
            .into(),
        );
        put("wavelet_levels", self.wavelet_levels.to_string());
        put("atoms_j", self.atoms_j.to_string());
        put("sparsity_k", self.sparsity_k.to_string());
        put("hidden_p", self.hidden_p.to_string());
        put("ksvd_iters", self.ksvd_iters.to_string());
        put("rbm_learning_rate", self.rbm.learning_rate.to_string());
        put("rbm_batch_size", self.rbm.batch_size.to_string());
        put("rbm_epochs", self.rbm.epochs.to_string());
        put("rbm_gibbs_steps", self.rbm.gibbs_steps.to_string());
        put("rbm_initial_momentum", self.rbm.initial_momentum.to_string());
        put("rbm_final_momentum", self.rbm.final_momentum.to_string());
        put("rbm_momentum_switch_epoch", self.rbm.momentum_switch_epoch.to_string());
        put("rbm_weight_decay", self.rbm.weight_decay.to_string());
        put("rbm_init_weight_std", self.rbm.init_weight_std.to_string());
        put("m_ratios", join(&self.m_ratios));
        put("sigma_n_sq", self.sigma_n_sq.to_string());
        put("repetitions", self.repetitions.to_string());
        put("seed", self.seed.to_string());
        put(
            "algorithms",
            self.algorithms.iter().map(|a| a.name()).collect::<Vec<_>>().join(","),
        );
        put("qrs_tolerance", self.qrs_tolerance.to_string());
        put("timing", self.timing.to_string());
        s
    }

    pub fn atoms(&self) -> usize {
        match (self.atoms_j, self.transform) {
            (0, TransformChoice::Wavelet) => self.window_n,
            (0, TransformChoice::Dictionary) => 3 * self.window_n,
            (j, _) => j,
        }
    }

    pub fn sparsity(&self) -> usize {
        let ratio = match self.transform {
            TransformChoice::Wavelet => 0.1,
            TransformChoice::Dictionary => 0.08,
        };
        match self.sparsity_k {
            0 => ((ratio * self.window_n as f64).round() as usize).max(1),
            k => k,
        }
    }

    pub fn hidden(&self) -> usize {
        match self.hidden_p {
            0 => self.atoms(),
            p => p,
        }
    }

    pub fn stride(&self) -> usize {
        match self.train_stride {
            0 => (self.window_n / 4).max(1),
            s => s,
        }
    }

    pub fn measurements(&self, ratio: f64) -> usize {
        ((ratio * self.window_n as f64).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.window_n == 0 {
            return fail("window_n must be positive");
        }
        if self.transform == TransformChoice::Wavelet {
            if self.atoms() != self.window_n {
                return fail("atoms_j must equal window_n for the wavelet transform");
            }
            if !self.window_n.is_multiple_of(1 << self.wavelet_levels) {
                return fail("window_n must be divisible by 2^wavelet_levels");
            }
        } else if self.atoms() <= self.window_n {
            return fail("atoms_j must exceed window_n for a dictionary");
        }
        if self.sparsity() > self.window_n {
            return fail("sparsity_k must not exceed window_n");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail("train_fraction must lie in (0, 1)");
        }
        if self.m_ratios.is_empty() || self.m_ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return fail("m_ratios must be non-empty and in (0, 1]");
        }
        if !(self.sigma_n_sq >= 0.0) {
            return fail("sigma_n_sq must be non-negative");
        }
        if self.repetitions == 0 {
            return fail("repetitions must be positive");
        }
        if self.algorithms.is_empty() {
            return fail("algorithms must not be empty");
        }
        if self.rbm.batch_size == 0 || self.rbm.gibbs_steps == 0 {
            return fail("rbm_batch_size and rbm_gibbs_steps must be positive");
        }
        match self.data_source {
            DataSource::Wfdb if self.records.is_empty() => fail("records must name at least one record"),
            DataSource::Synthetic if self.synth_records == 0 || !(self.synth_fs > 0.0) => {
                fail("synthetic source needs synth_records > 0 and synth_fs > 0")
            }
            _ => Ok(()),
        }
    }
}
