//! Parameter-error and signal metrics.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScfaError};
use crate::linalg::{inner, norm2, CMat};
use crate::scalar::Real;

/// `acos(|aᴴb| / (‖a‖‖b‖))`, in `[0, π/2]`.
pub fn hermitian_angle<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Result<T> {
    if a.len() != b.len() {
        return Err(ScfaError::Configuration("vectors differ in length".into()));
    }
    let (na, nb) = (norm2(a), norm2(b));
    if !(na > T::zero()) || !(nb > T::zero()) {
        return Err(ScfaError::DegenerateVector("zero column in Hermitian angle".into()));
    }
    let ip = inner(a, b);
    if ip.norm() == T::zero() {
        return Ok(T::lit(std::f64::consts::FRAC_PI_2));
    }
    // chord between the unit vectors after phase alignment, accurate near zero
    let phase = ip / ip.norm();
    let chord = a
        .iter()
        .zip(b)
        .map(|(x, y)| (y / nb - x * phase / na).norm_sqr())
        .fold(T::zero(), |s, v| s + v)
        .sqrt();
    let half = (chord / T::lit(2.0)).min(T::one());
    Ok((T::lit(2.0) * half.asin()).min(T::lit(std::f64::consts::FRAC_PI_2)))
}

/// Mean Hermitian angle over all columns and segments. Columns must already
/// be permutation-aligned.
pub fn hermitian_angle_error<T: Real>(truth: &[CMat<T>], estimated: &[CMat<T>]) -> Result<f64> {
    if truth.len() != estimated.len() || truth.is_empty() {
        return Err(ScfaError::Configuration(format!(
            "{} reference and {} estimated mixing matrices",
            truth.len(),
            estimated.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, b) in truth.iter().zip(estimated) {
        if a.rows() != b.rows() || a.cols() != b.cols() {
            return Err(ScfaError::Configuration("mixing matrices differ in shape".into()));
        }
        for j in 0..a.cols() {
            total += hermitian_angle(&a.column(j), &b.column(j))?.as_f64();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// PSD values indexed `(frame, bin, channel)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdTrack {
    pub frames: usize,
    pub bins: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl PsdTrack {
    pub fn zeros(frames: usize, bins: usize, channels: usize) -> Self {
        Self {
            frames,
            bins,
            channels,
            data: vec![0.0; frames * bins * channels],
        }
    }

    pub fn from_fn(frames: usize, bins: usize, channels: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(frames, bins, channels);
        for t in 0..frames {
            for k in 0..bins {
                for c in 0..channels {
                    out.set(t, k, c, f(t, k, c));
                }
            }
        }
        out
    }

    fn index(&self, t: usize, k: usize, c: usize) -> usize {
        (t * self.bins + k) * self.channels + c
    }

    pub fn get(&self, t: usize, k: usize, c: usize) -> f64 {
        self.data[self.index(t, k, c)]
    }

    pub fn set(&mut self, t: usize, k: usize, c: usize, v: f64) {
        let i = self.index(t, k, c);
        self.data[i] = v;
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.frames == other.frames && self.bins == other.bins && self.channels == other.channels
    }
}

/// Which tiles count as negligible and are left out of the averages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipRule {
    /// Tiles below `relative_threshold · max` are skipped, the maximum taken
    /// over the frames of the tile's segment in the same bin and channel.
    pub relative_threshold: f64,
    pub frames_per_segment: usize,
}

impl Default for SkipRule {
    fn default() -> Self {
        Self {
            relative_threshold: 1e-6,
            frames_per_segment: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LogErrors {
    pub total: f64,
    /// Part coming from tiles where the estimate exceeds the truth.
    pub over: f64,
    pub under: f64,
    pub included: usize,
    pub skipped: usize,
    /// Estimates raised to the floor inside the logarithm.
    pub floored: usize,
}

/// `10/(n·extra) · Σ |log₁₀(p/p̂)|` over the `n` included tiles.
///
/// `extra` is the additional source-count normalizer carried by the
/// late-reverberation and self-noise errors (1 for source PSDs).
pub fn psd_log_errors(truth: &PsdTrack, estimate: &PsdTrack, skip: &SkipRule, extra: f64) -> Result<LogErrors> {
    if !truth.same_shape(estimate) {
        return Err(ScfaError::Configuration(format!(
            "PSD tracks differ in shape: {}×{}×{} vs {}×{}×{}",
            truth.frames, truth.bins, truth.channels, estimate.frames, estimate.bins, estimate.channels
        )));
    }
    if skip.frames_per_segment == 0 || !(extra > 0.0) {
        return Err(ScfaError::Configuration("invalid skip rule or normalizer".into()));
    }
    let global_max = truth.data.iter().copied().fold(0.0f64, f64::max);
    let floor = 1e-12 * global_max;
    let mut out = LogErrors::default();
    for k in 0..truth.bins {
        for c in 0..truth.channels {
            for seg_start in (0..truth.frames).step_by(skip.frames_per_segment) {
                let seg_end = (seg_start + skip.frames_per_segment).min(truth.frames);
                let seg_max = (seg_start..seg_end).map(|t| truth.get(t, k, c)).fold(0.0f64, f64::max);
                for t in seg_start..seg_end {
                    let p = truth.get(t, k, c);
                    if !(p > 0.0) || p < skip.relative_threshold * seg_max {
                        out.skipped += 1;
                        continue;
                    }
                    let mut est = estimate.get(t, k, c);
                    if !(est >= floor) || est <= 0.0 {
                        est = floor.max(f64::MIN_POSITIVE);
                        out.floored += 1;
                    }
                    let e = (p / est).log10();
                    if e < 0.0 {
                        out.over += -e;
                    } else {
                        out.under += e;
                    }
                    out.included += 1;
                }
            }
        }
    }
    if out.included > 0 {
        let norm = 10.0 / (out.included as f64 * extra);
        out.over *= norm;
        out.under *= norm;
    }
    out.total = out.over + out.under;
    Ok(out)
}

/// Segmental SNR over the sub-frames where each source is active, averaged
/// over sources.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsnrSettings {
    pub subframe_len: usize,
    pub hop: usize,
    /// A sub-frame is active when its clean energy exceeds this fraction of
    /// the mean sub-frame energy.
    pub activity_threshold: f64,
    pub floor_db: f64,
    pub ceiling_db: f64,
}

impl Default for SsnrSettings {
    fn default() -> Self {
        Self {
            subframe_len: 200,
            hop: 50,
            activity_threshold: 0.01,
            floor_db: -10.0,
            ceiling_db: 35.0,
        }
    }
}

pub fn segmental_snr(clean: &[Vec<f64>], enhanced: &[Vec<f64>], settings: &SsnrSettings) -> Result<f64> {
    if clean.len() != enhanced.len() || clean.is_empty() {
        return Err(ScfaError::Configuration("clean and enhanced source counts differ".into()));
    }
    if settings.subframe_len == 0 || settings.hop == 0 {
        return Err(ScfaError::Configuration("sub-frame length and hop must be positive".into()));
    }
    let mut per_source = Vec::with_capacity(clean.len());
    for (j, (s, e)) in clean.iter().zip(enhanced).enumerate() {
        if s.len() != e.len() {
            return Err(ScfaError::Configuration(format!("source {j}: signals differ in length")));
        }
        let starts: Vec<usize> = if s.len() >= settings.subframe_len {
            (0..=s.len() - settings.subframe_len).step_by(settings.hop).collect()
        } else {
            Vec::new()
        };
        let energy = |a: usize| s[a..a + settings.subframe_len].iter().map(|v| v * v).sum::<f64>();
        let energies: Vec<f64> = starts.iter().map(|&a| energy(a)).collect();
        if energies.is_empty() {
            return Err(ScfaError::InsufficientActivity { source_index: j });
        }
        let mean = energies.iter().sum::<f64>() / energies.len() as f64;
        let mut total = 0.0;
        let mut active = 0usize;
        for (&a, &en) in starts.iter().zip(&energies) {
            if !(en > settings.activity_threshold * mean) || en <= 0.0 {
                continue;
            }
            let distortion: f64 = (a..a + settings.subframe_len).map(|n| (s[n] - e[n]).powi(2)).sum();
            let db = if distortion > 0.0 {
                10.0 * (en / distortion).log10()
            } else {
                settings.ceiling_db
            };
            total += db.clamp(settings.floor_db, settings.ceiling_db);
            active += 1;
        }
        if active == 0 {
            return Err(ScfaError::InsufficientActivity { source_index: j });
        }
        per_source.push(total / active as f64);
    }
    Ok(per_source.iter().sum::<f64>() / per_source.len() as f64)
}

/// All parameter and signal metrics of one estimation run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub source_psd: LogErrors,
    pub late_psd: Option<LogErrors>,
    pub self_noise: Option<LogErrors>,
    pub ratf_angle: Option<f64>,
    pub ssnr: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn angle_cases() {
        let a = vec![c(1.0, 0.5), c(-0.2, 0.3), c(0.0, 1.0)];
        assert!(hermitian_angle(&a, &a).unwrap().abs() < 1e-7);
        let scaled: Vec<_> = a.iter().map(|z| z * Complex::from_polar(3.5, 1.1)).collect();
        assert!(hermitian_angle(&a, &scaled).unwrap().abs() < 1e-7);
        let e1 = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let e2 = vec![c(0.0, 0.0), c(0.0, 2.0)];
        assert!((hermitian_angle(&e1, &e2).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!(matches!(
            hermitian_angle(&e1, &[c(0.0, 0.0), c(0.0, 0.0)]),
            Err(ScfaError::DegenerateVector(_))
        ));
    }

    #[test]
    fn log_error_cases() {
        let truth = PsdTrack::from_fn(3, 2, 2, |t, k, c| 1.0 + (t + k + c) as f64);
        let same = psd_log_errors(&truth, &truth, &SkipRule::default(), 1.0).unwrap();
        assert_eq!(same.total, 0.0);
        let one = PsdTrack::from_fn(1, 1, 1, |_, _, _| 2.0);
        let ten = PsdTrack::from_fn(1, 1, 1, |_, _, _| 20.0);
        let e = psd_log_errors(&one, &ten, &SkipRule::default(), 1.0).unwrap();
        assert!((e.total - 10.0).abs() < 1e-12);
        assert!((e.over - 10.0).abs() < 1e-12);
        assert_eq!(e.under, 0.0);
    }

    #[test]
    fn split_matches_scalar_loop_and_swaps_symmetrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = PsdTrack::from_fn(5, 4, 3, |_, _, _| 0.0);
        let truth = PsdTrack {
            data: truth.data.iter().map(|_| rng.random_range(0.1..5.0)).collect(),
            ..truth
        };
        let est = PsdTrack {
            data: truth.data.iter().map(|_| rng.random_range(0.1..5.0)).collect(),
            ..truth.clone()
        };
        let e = psd_log_errors(&truth, &est, &SkipRule::default(), 1.0).unwrap();
        let (mut ov, mut un) = (0.0, 0.0);
        for (p, q) in truth.data.iter().zip(&est.data) {
            let d = (p / q).log10().abs() * 10.0 / 60.0;
            if q > p {
                ov += d
            } else {
                un += d
            }
        }
        assert!((e.over - ov).abs() < 1e-10 && (e.under - un).abs() < 1e-10);
        assert!((e.total - e.over - e.under).abs() < 1e-10);
        let swapped = psd_log_errors(&est, &truth, &SkipRule::default(), 1.0).unwrap();
        assert!((swapped.total - e.total).abs() < 1e-10);
        assert!((swapped.over - e.under).abs() < 1e-10);
    }

    #[test]
    fn skip_rule_and_floor() {
        let truth = PsdTrack::from_fn(2, 1, 1, |t, _, _| if t == 0 { 1.0 } else { 1e-9 });
        let est = PsdTrack::from_fn(2, 1, 1, |_, _, _| -1.0);
        let strict = SkipRule {
            relative_threshold: 1e-6,
            frames_per_segment: 2,
        };
        let e = psd_log_errors(&truth, &est, &strict, 1.0).unwrap();
        assert_eq!((e.included, e.skipped, e.floored), (1, 1, 1));
        assert!(e.total.is_finite());
        let loose = SkipRule {
            relative_threshold: 0.0,
            ..strict
        };
        assert!(psd_log_errors(&truth, &est, &loose, 1.0).unwrap().included >= e.included);
        assert!(psd_log_errors(&truth, &PsdTrack::zeros(1, 1, 1), &strict, 1.0).is_err());
    }

    #[test]
    fn ssnr_cases() {
        let settings = SsnrSettings {
            subframe_len: 100,
            hop: 100,
            ..SsnrSettings::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clean: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = vec![clean.clone()];
        assert_eq!(segmental_snr(&s, &s, &settings).unwrap(), 35.0);
        assert!(segmental_snr(&s, &[vec![0.0; 2000]], &settings).unwrap().abs() < 1e-12);
        // noise scaled to exactly 10 dB in every sub-frame
        let mut noisy = clean.clone();
        for a in (0..2000).step_by(100) {
            let noise: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
            let en: f64 = clean[a..a + 100].iter().map(|v| v * v).sum();
            let nn: f64 = noise.iter().map(|v| v * v).sum();
            let g = (en / nn / 10.0).sqrt();
            for i in 0..100 {
                noisy[a + i] += g * noise[i];
            }
        }
        assert!((segmental_snr(&s, &[noisy], &settings).unwrap() - 10.0).abs() < 0.1);
        assert!(matches!(
            segmental_snr(&[vec![0.0; 2000]], &[vec![0.0; 2000]], &settings),
            Err(ScfaError::InsufficientActivity { source_index: 0 })
        ));
    }
}
