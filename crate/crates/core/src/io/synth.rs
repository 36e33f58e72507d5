//! Seeded synthetic ECG: P, Q, R, S and T waves as Gaussian bumps on a
//! jittered RR grid, plus slow baseline wander and a little white noise.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub fs: f64,
    pub duration_s: f64,
    /// Mean RR interval in seconds.
    pub mean_rr: f64,
    /// Relative RR jitter (uniform, ±).
    pub rr_jitter: f64,
    /// Relative amplitude jitter per wave (uniform, ±).
    pub amp_jitter: f64,
    pub noise_std: f64,
    pub wander_amp: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            fs: 360.0,
            duration_s: 10.0,
            mean_rr: 0.8,
            rr_jitter: 0.08,
            amp_jitter: 0.1,
            noise_std: 0.01,
            wander_amp: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticEcg {
    /// Millivolts.
    pub samples: Vec<f64>,
    pub fs: f64,
    /// Sample index of each R wave.
    pub r_peaks: Vec<usize>,
}

struct Wave {
    offset_s: f64,
    amp: f64,
    width_s: f64,
}

const WAVES: [Wave; 5] = [
    Wave { offset_s: -0.20, amp: 0.15, width_s: 0.025 },
    Wave { offset_s: -0.030, amp: -0.12, width_s: 0.010 },
    Wave { offset_s: 0.0, amp: 1.2, width_s: 0.012 },
    Wave { offset_s: 0.030, amp: -0.25, width_s: 0.010 },
    Wave { offset_s: 0.28, amp: 0.35, width_s: 0.045 },
];

pub fn synthetic_ecg(cfg: &SynthConfig, seed: u64) -> Result<SyntheticEcg> {
    if !(cfg.fs > 0.0 && cfg.duration_s > 0.0 && cfg.mean_rr > 0.0) {
        return Err(Error::InvalidInput(
            "fs, duration and RR interval must be positive".into(),
        ));
    }
    let n = (cfg.fs * cfg.duration_s).floor() as usize;
    let mut r = rng::seeded(seed);
    let mut samples = vec![0.0; n];
    let mut r_peaks = Vec::new();

    let mut beat_t = 0.35 + r.random::<f64>() * cfg.mean_rr * 0.5;
    while beat_t < cfg.duration_s + 0.5 {
        for w in &WAVES {
            let amp = w.amp * (1.0 + cfg.amp_jitter * r.random_range(-1.0..=1.0));
            let centre = (beat_t + w.offset_s) * cfg.fs;
            let sigma = w.width_s * cfg.fs;
            let lo = (centre - 5.0 * sigma).floor().max(0.0) as usize;
            let hi = ((centre + 5.0 * sigma).ceil().max(0.0) as usize).min(n);
            for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
                let z = (i as f64 - centre) / sigma;
                *s += amp * (-0.5 * z * z).exp();
            }
        }
        let peak = (beat_t * cfg.fs).round() as usize;
        if peak < n {
            r_peaks.push(peak);
        }
        beat_t += cfg.mean_rr * (1.0 + cfg.rr_jitter * r.random_range(-1.0..=1.0));
    }

    let phase = r.random::<f64>() * std::f64::consts::TAU;
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("finite std");
    for (i, s) in samples.iter_mut().enumerate() {
        let t = i as f64 / cfg.fs;
        *s += cfg.wander_amp * (std::f64::consts::TAU * 0.25 * t + phase).sin();
        *s += noise.sample(&mut r);
    }
    Ok(SyntheticEcg {
        samples,
        fs: cfg.fs,
        r_peaks,
    })
}
