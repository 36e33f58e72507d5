//! Reconstruction and detection metrics.

use crate::{Error, Result};

/// Reconstruction SNR in dB, `10 log10(‖x‖² / ‖x − x̂‖²)`.
///
/// An exact reconstruction returns `f64::INFINITY`.
pub fn r_snr(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::InvalidDimension(format!(
            "signal lengths differ: {} vs {}",
            x.len(),
            x_hat.len()
        )));
    }
    let signal: f64 = x.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::InvalidInput("R-SNR undefined for a zero signal".into()));
    }
    let err: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / err).log10())
}

/// Non-overlapping windows of length `n`; a trailing remainder shorter than
/// `n` is dropped.
pub fn segment(x: &[f64], n: usize) -> Vec<Vec<f64>> {
    segment_strided(x, n, n)
}

/// Windows of length `n` starting every `stride` samples.
pub fn segment_strided(x: &[f64], n: usize, stride: usize) -> Vec<Vec<f64>> {
    if n == 0 || stride == 0 || x.len() < n {
        return Vec::new();
    }
    (0..=x.len() - n)
        .step_by(stride)
        .map(|s| x[s..s + n].to_vec())
        .collect()
}

pub fn concatenate(segments: &[Vec<f64>]) -> Vec<f64> {
    segments.iter().flatten().copied().collect()
}

fn odd_window(samples: f64) -> usize {
    let w = samples.round().max(1.0) as usize;
    if w.is_multiple_of(2) { w + 1 } else { w }
}

/// Centred moving average; near the edges the window is truncated.
fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    let half = w / 2;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Intermediate signals of the QRS detector, exposed for inspection.
#[derive(Debug, Clone)]
pub struct QrsTrace {
    pub bandpassed: Vec<f64>,
    pub integrated: Vec<f64>,
    pub peaks: Vec<usize>,
}

/// Pan–Tompkins-style R-peak detector.
///
/// Band-pass as the difference of two centred moving averages (passband
/// roughly 5–15 Hz), five-point derivative, squaring, 150 ms moving-window
/// integration, then adaptive signal/noise thresholds with a 200 ms
/// refractory period and RR-based search-back. All filters are zero-phase so
/// reported indices line up with the input.
pub fn detect_qrs(x: &[f64], fs: f64) -> Vec<usize> {
    detect_qrs_trace(x, fs).peaks
}

pub fn detect_qrs_trace(x: &[f64], fs: f64) -> QrsTrace {
    let n = x.len();
    if n < 5 || !(fs > 0.0) {
        return QrsTrace {
            bandpassed: x.to_vec(),
            integrated: vec![0.0; n],
            peaks: Vec::new(),
        };
    }
    let short = moving_average(x, odd_window(0.03 * fs));
    let long = moving_average(x, odd_window(0.09 * fs));
    let bp: Vec<f64> = short.iter().zip(&long).map(|(s, l)| s - l).collect();

    let at = |i: isize| bp[i.clamp(0, n as isize - 1) as usize];
    let deriv: Vec<f64> = (0..n as isize)
        .map(|i| (2.0 * at(i + 1) + at(i + 2) - at(i - 2) - 2.0 * at(i - 1)) / 8.0)
        .collect();
    let squared: Vec<f64> = deriv.iter().map(|d| d * d).collect();
    let w_int = odd_window(0.15 * fs);
    let mwi = moving_average(&squared, w_int);

    let refractory = (0.2 * fs).round() as usize;
    let candidates = local_maxima(&mwi, refractory);

    let learn = ((2.0 * fs) as usize).clamp(1, n);
    let init_max = mwi[..learn].iter().copied().fold(0.0, f64::max);
    let init_mean = mwi[..learn].iter().sum::<f64>() / learn as f64;
    let mut spki = 0.25 * init_max;
    let mut npki = 0.5 * init_mean;

    let t_wave_window = (0.36 * fs).round() as usize;
    let slope = |i: usize| -> f64 {
        let lo = i.saturating_sub(w_int / 2);
        let hi = (i + w_int / 2 + 1).min(n);
        deriv[lo..hi].iter().fold(0.0, |m, d| m.max(d.abs()))
    };

    let mut qrs: Vec<usize> = Vec::new();
    let mut last_slope = 0.0;
    let mut rr: Vec<usize> = Vec::new();
    let mut skipped: Vec<usize> = Vec::new();

    for &c in &candidates {
        let thr1 = npki + 0.25 * (spki - npki);
        let thr2 = 0.5 * thr1;
        let v = mwi[c];

        // search back for a missed beat if the gap is unusually long
        if let (Some(&prev), false) = (qrs.last(), rr.is_empty()) {
            let avg_rr = rr.iter().sum::<usize>() as f64 / rr.len() as f64;
            if (c - prev) as f64 > 1.66 * avg_rr {
                let best = skipped
                    .iter()
                    .copied()
                    .filter(|&s| s > prev + refractory && mwi[s] > thr2)
                    .max_by(|&a, &b| mwi[a].total_cmp(&mwi[b]).then(b.cmp(&a)));
                if let Some(s) = best {
                    spki = 0.25 * mwi[s] + 0.75 * spki;
                    rr.push(s - prev);
                    qrs.push(s);
                    last_slope = slope(s);
                }
            }
        }

        let is_qrs = v > thr1 && {
            match qrs.last() {
                Some(&prev) if c - prev < t_wave_window => slope(c) >= 0.5 * last_slope,
                _ => true,
            }
        };
        if is_qrs {
            spki = 0.125 * v + 0.875 * spki;
            if let Some(&prev) = qrs.last() {
                rr.push(c - prev);
                if rr.len() > 8 {
                    rr.remove(0);
                }
            }
            qrs.push(c);
            last_slope = slope(c);
            skipped.clear();
        } else {
            npki = 0.125 * v + 0.875 * npki;
            skipped.push(c);
        }
    }

    // locate the R wave as the largest band-passed excursion near each beat
    let half = w_int / 2;
    let mut peaks: Vec<usize> = qrs
        .iter()
        .map(|&c| {
            let lo = c.saturating_sub(half);
            let hi = (c + half + 1).min(n);
            (lo..hi)
                .max_by(|&a, &b| bp[a].abs().total_cmp(&bp[b].abs()).then(b.cmp(&a)))
                .unwrap_or(c)
        })
        .collect();
    peaks.sort_unstable();
    peaks.dedup();

    QrsTrace {
        bandpassed: bp,
        integrated: mwi,
        peaks,
    }
}

/// Strictly positive samples that are the maximum of their `±radius`
/// neighbourhood (earliest index wins a tie).
fn local_maxima(x: &[f64], radius: usize) -> Vec<usize> {
    let n = x.len();
    (0..n)
        .filter(|&i| {
            if x[i] <= 0.0 {
                return false;
            }
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(n);
            (lo..hi).all(|j| x[j] < x[i] || (x[j] == x[i] && j >= i))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeakMatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl PeakMatchResult {
    /// `TP / (TP + FP)`, `None` when no test peaks were reported.
    pub fn precision(&self) -> Option<f64> {
        let d = self.true_positives + self.false_positives;
        (d > 0).then(|| self.true_positives as f64 / d as f64)
    }

    /// `TP / (TP + FN)`, `None` when there are no reference peaks.
    pub fn recall(&self) -> Option<f64> {
        let d = self.true_positives + self.false_negatives;
        (d > 0).then(|| self.true_positives as f64 / d as f64)
    }
}

/// One-to-one matching of ascending peak lists within `±tol` samples.
///
/// Walks both lists in index order, pairing the earliest compatible peaks.
pub fn match_peaks(reference: &[usize], test: &[usize], tol: usize) -> PeakMatchResult {
    let (mut i, mut j, mut tp) = (0, 0, 0);
    while i < reference.len() && j < test.len() {
        let (r, t) = (reference[i], test[j]);
        if r.abs_diff(t) <= tol {
            tp += 1;
            i += 1;
            j += 1;
        } else if r < t {
            i += 1;
        } else {
            j += 1;
        }
    }
    PeakMatchResult {
        true_positives: tp,
        false_positives: test.len() - tp,
        false_negatives: reference.len() - tp,
    }
}

/// Percentage similarity `100 − |y − ȳ| / y · 100`. May be negative.
pub fn psim(orig_metric: f64, recon_metric: f64) -> Result<f64> {
    if orig_metric == 0.0 {
        return Err(Error::InvalidInput("PSim undefined for a zero reference metric".into()));
    }
    Ok(100.0 - (orig_metric - recon_metric).abs() / orig_metric * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_snr_examples() {
        assert_eq!(r_snr(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), f64::INFINITY);
        assert!(r_snr(&[1.0, 2.0], &[0.0, 0.0]).unwrap().abs() < 1e-12);
        // ‖x‖² = 1, ‖x − x̂‖² = 0.01 → 20 dB
        assert!((r_snr(&[1.0, 0.0], &[0.9, 0.0]).unwrap() - 20.0).abs() < 1e-9);
        assert!(r_snr(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(r_snr(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn r_snr_is_scale_invariant() {
        let x = [0.3, -1.2, 4.0, 0.0, 2.2];
        let y = [0.1, -1.0, 3.7, 0.2, 2.0];
        let base = r_snr(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * 13.0).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * 13.0).collect();
        assert!((r_snr(&xs, &ys).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn segmentation_examples() {
        let x: Vec<f64> = (0..300).map(f64::from).collect();
        let segs = segment(&x, 128);
        assert_eq!(segs.len(), 2);
        assert_eq!(concatenate(&segs), x[..256].to_vec());

        let x: Vec<f64> = (0..256).map(f64::from).collect();
        assert_eq!(concatenate(&segment(&x, 128)), x);
        assert!(segment(&x[..100], 128).is_empty());
        assert_eq!(segment_strided(&x, 128, 32).len(), 5);
    }

    fn bump_train(fs: f64, seconds: f64, amp: f64) -> (Vec<f64>, Vec<usize>) {
        let n = (fs * seconds) as usize;
        let sigma = 0.02 * fs / 2.355; // 20 ms full width at half maximum
        let centers: Vec<usize> = (0..)
            .map(|k| (0.5 * fs + k as f64 * fs) as usize)
            .take_while(|&c| c + (fs as usize) / 4 < n)
            .collect();
        let mut x = vec![0.0; n];
        for &c in &centers {
            for (i, v) in x.iter_mut().enumerate() {
                let d = (i as f64 - c as f64) / sigma;
                *v += amp * (-0.5 * d * d).exp();
            }
        }
        (x, centers)
    }

    #[test]
    fn flat_signal_has_no_beats() {
        assert!(detect_qrs(&vec![0.0; 3600], 360.0).is_empty());
        assert!(detect_qrs(&[], 360.0).is_empty());
    }

    #[test]
    fn detects_every_bump_once() {
        let (x, centers) = bump_train(360.0, 12.0, 1.0);
        let peaks = detect_qrs(&x, 360.0);
        assert_eq!(peaks.len(), centers.len(), "{peaks:?}");
        for (p, c) in peaks.iter().zip(&centers) {
            assert!(p.abs_diff(*c) <= 10, "peak {p} vs center {c}");
        }
    }

    #[test]
    fn detection_is_scale_invariant_and_deterministic() {
        let (x, _) = bump_train(360.0, 10.0, 1.0);
        let scaled: Vec<f64> = x.iter().map(|v| v * 10.0).collect();
        let a = detect_qrs(&x, 360.0);
        assert_eq!(a, detect_qrs(&scaled, 360.0));
        assert_eq!(a, detect_qrs(&x, 360.0));
    }

    #[test]
    fn match_examples() {
        let r = match_peaks(&[10, 50, 90], &[10, 50, 90], 4);
        assert_eq!(r.precision(), Some(1.0));
        assert_eq!(r.recall(), Some(1.0));

        let r = match_peaks(&[100, 300], &[103, 290], 4);
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (1, 1, 1));
        assert_eq!(r.precision(), Some(0.5));
        assert_eq!(r.recall(), Some(0.5));

        let r = match_peaks(&[100, 300], &[], 4);
        assert_eq!(r.precision(), None);
        assert_eq!(r.recall(), Some(0.0));
    }

    #[test]
    fn one_reference_peak_matches_at_most_one_test_peak() {
        let r = match_peaks(&[100], &[98, 101], 4);
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (1, 1, 0));
    }

    #[test]
    fn psim_examples() {
        assert!((psim(0.9, 0.9).unwrap() - 100.0).abs() < 1e-12);
        assert!((psim(0.8, 0.6).unwrap() - 75.0).abs() < 1e-12);
        assert!(psim(0.5, 1.0).unwrap().abs() < 1e-12);
        assert!(psim(0.0, 1.0).is_err());
    }
}
