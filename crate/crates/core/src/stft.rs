//! Framing, sub-frame STFT analysis/synthesis and sample CPSDMs.
//!
//! Time is split into consecutive non-overlapping frames of `T` samples.
//! Each frame holds overlapping sub-frames of `N` samples; frames are grouped
//! into (possibly overlapping) segments of `|B|` frames.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScfaError};
use crate::linalg::{CMat, HermitianMatrix};
use crate::model::FrequencyGrid;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    /// Frame length `T` in samples.
    pub frame_len: usize,
    /// Sub-frame length `N` in samples.
    pub subframe_len: usize,
    /// Sub-frame overlap fraction in `[0, 1)`.
    pub subframe_overlap: f64,
    /// Frames per segment `|B|`.
    pub frames_per_segment: usize,
    /// Frames between consecutive segment starts.
    pub segment_hop: usize,
}

impl FramePlan {
    pub fn validate(&self) -> Result<()> {
        if self.subframe_len == 0 || self.subframe_len > self.frame_len {
            return Err(ScfaError::Configuration(format!(
                "sub-frame length {} must be in 1..={}",
                self.subframe_len, self.frame_len
            )));
        }
        if !(0.0..1.0).contains(&self.subframe_overlap) {
            return Err(ScfaError::Configuration(format!(
                "sub-frame overlap {} must lie in [0, 1)",
                self.subframe_overlap
            )));
        }
        if self.frames_per_segment == 0 || self.segment_hop == 0 {
            return Err(ScfaError::Configuration(
                "frames per segment and segment hop must be positive".into(),
            ));
        }
        self.subframe_hop().map(|_| ())
    }

    /// `N·(1 − ov)`, required to be a positive integer.
    pub fn subframe_hop(&self) -> Result<usize> {
        let hop = self.subframe_len as f64 * (1.0 - self.subframe_overlap);
        let rounded = hop.round();
        if rounded < 1.0 || (hop - rounded).abs() > 1e-9 {
            return Err(ScfaError::Configuration(format!(
                "sub-frame hop {hop} is not a positive integer"
            )));
        }
        Ok(rounded as usize)
    }

    /// `|Θ_t| = floor((T − N)/hop) + 1`.
    pub fn subframes_per_frame(&self) -> Result<usize> {
        Ok((self.frame_len - self.subframe_len) / self.subframe_hop()? + 1)
    }

    pub fn with_frames_per_segment(mut self, frames: usize) -> Self {
        self.frames_per_segment = frames;
        self
    }
}

/// Index layout produced by [`plan_frames`].
#[derive(Clone, Debug, PartialEq)]
pub struct FrameLayout {
    /// Per frame, absolute sample index of each sub-frame start.
    pub subframe_starts: Vec<Vec<usize>>,
    /// Per segment, the first frame index (segments span `|B|` frames).
    pub segment_starts: Vec<usize>,
    pub frames_per_segment: usize,
}

impl FrameLayout {
    pub fn num_frames(&self) -> usize {
        self.subframe_starts.len()
    }

    pub fn segment_frames(&self, segment: usize) -> std::ops::Range<usize> {
        let s = self.segment_starts[segment];
        s..s + self.frames_per_segment
    }
}

/// Segment start frames for `num_frames` frames.
pub fn segment_starts(num_frames: usize, frames_per_segment: usize, hop: usize) -> Vec<usize> {
    if num_frames < frames_per_segment {
        return Vec::new();
    }
    let mut starts: Vec<usize> = (0..=num_frames - frames_per_segment).step_by(hop).collect();
    // the trailing frames must be covered by some segment
    let last = num_frames - frames_per_segment;
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    starts
}

pub fn plan_frames(signal_len: usize, plan: &FramePlan) -> Result<FrameLayout> {
    plan.validate()?;
    if signal_len < plan.frame_len {
        return Err(ScfaError::InsufficientData(format!(
            "signal of {signal_len} samples is shorter than one frame ({})",
            plan.frame_len
        )));
    }
    let hop = plan.subframe_hop()?;
    let per_frame = plan.subframes_per_frame()?;
    let frames = signal_len / plan.frame_len;
    let subframe_starts = (0..frames)
        .map(|t| (0..per_frame).map(|i| t * plan.frame_len + i * hop).collect())
        .collect();
    Ok(FrameLayout {
        subframe_starts,
        segment_starts: segment_starts(frames, plan.frames_per_segment, plan.segment_hop),
        frames_per_segment: plan.frames_per_segment,
    })
}

/// Analysis/synthesis window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    SqrtHann,
    /// Test mode: no tapering.
    Rectangular,
}

impl Window {
    pub fn coefficients<T: Real>(&self, len: usize) -> Vec<T> {
        match self {
            Window::Rectangular => vec![T::one(); len],
            // sampled half a tap off the grid so no tap is zero
            Window::SqrtHann => (0..len)
                .map(|n| T::lit((std::f64::consts::PI * (n as f64 + 0.5) / len as f64).sin()))
                .collect(),
        }
    }
}

/// Multichannel sub-frame spectra `y_θ(t,k)`, stored `[t][θ][k][m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubframeSpectra<T> {
    pub frames: usize,
    pub subframes: usize,
    pub bins: usize,
    pub channels: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> SubframeSpectra<T> {
    pub fn zeros(frames: usize, subframes: usize, bins: usize, channels: usize) -> Self {
        Self {
            frames,
            subframes,
            bins,
            channels,
            data: vec![Complex::new(T::zero(), T::zero()); frames * subframes * bins * channels],
        }
    }

    #[inline]
    fn offset(&self, t: usize, theta: usize, k: usize) -> usize {
        ((t * self.subframes + theta) * self.bins + k) * self.channels
    }

    pub fn vector(&self, t: usize, theta: usize, k: usize) -> &[Complex<T>] {
        let o = self.offset(t, theta, k);
        &self.data[o..o + self.channels]
    }

    pub fn vector_mut(&mut self, t: usize, theta: usize, k: usize) -> &mut [Complex<T>] {
        let o = self.offset(t, theta, k);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    /// All sub-frame vectors of tile `(t, k)`.
    pub fn tile(&self, t: usize, k: usize) -> Vec<&[Complex<T>]> {
        (0..self.subframes).map(|th| self.vector(t, th, k)).collect()
    }
}

/// Windowed, zero-padded one-sided transforms of every sub-frame.
pub fn stft_subframes<T: Real>(
    signal: &[Vec<T>],
    plan: &FramePlan,
    grid: &FrequencyGrid,
    window: Window,
) -> Result<SubframeSpectra<T>> {
    grid.validate()?;
    if grid.fft_len < plan.subframe_len {
        return Err(ScfaError::Configuration(format!(
            "fft length {} is shorter than the sub-frame length {}",
            grid.fft_len, plan.subframe_len
        )));
    }
    let channels = signal.len();
    if channels == 0 {
        return Err(ScfaError::InsufficientData("no channels".into()));
    }
    let len = signal[0].len();
    if signal.iter().any(|c| c.len() != len) {
        return Err(ScfaError::Configuration("channels have different lengths".into()));
    }
    let layout = plan_frames(len, plan)?;
    let subframes = plan.subframes_per_frame()?;
    let bins = grid.num_bins();
    let win: Vec<T> = window.coefficients(plan.subframe_len);
    let fft = FftPlanner::<T>::new().plan_fft_forward(grid.fft_len);
    let mut out = SubframeSpectra::zeros(layout.num_frames(), subframes, bins, channels);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); grid.fft_len];
    for (t, starts) in layout.subframe_starts.iter().enumerate() {
        for (theta, &start) in starts.iter().enumerate() {
            for (m, chan) in signal.iter().enumerate() {
                buf.iter_mut().for_each(|z| *z = Complex::new(T::zero(), T::zero()));
                for n in 0..plan.subframe_len {
                    buf[n] = Complex::new(chan[start + n] * win[n], T::zero());
                }
                fft.process(&mut buf);
                for k in 0..bins {
                    out.vector_mut(t, theta, k)[m] = buf[k];
                }
            }
        }
    }
    Ok(out)
}

/// Weighted overlap-add synthesis of single-channel sub-frame spectra
/// (`[t][θ][k]`) back to `signal_len` samples.
///
/// Each output sample is normalised by the accumulated squared window at that
/// position, which makes analysis followed by synthesis the identity wherever
/// at least one sub-frame has a nonzero window value.
pub fn overlap_add<T: Real>(
    spectra: &[Complex<T>],
    frames: usize,
    subframes: usize,
    plan: &FramePlan,
    grid: &FrequencyGrid,
    window: Window,
    signal_len: usize,
) -> Result<Vec<T>> {
    let bins = grid.num_bins();
    if spectra.len() != frames * subframes * bins {
        return Err(ScfaError::Coverage(format!(
            "expected {} spectral values, got {}",
            frames * subframes * bins,
            spectra.len()
        )));
    }
    let hop = plan.subframe_hop()?;
    let k_len = grid.fft_len;
    let win: Vec<T> = window.coefficients(plan.subframe_len);
    let ifft = FftPlanner::<T>::new().plan_fft_inverse(k_len);
    let mut out = vec![T::zero(); signal_len];
    let mut norm = vec![T::zero(); signal_len];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); k_len];
    let scale = T::one() / T::from_count(k_len);
    for t in 0..frames {
        for theta in 0..subframes {
            let start = t * plan.frame_len + theta * hop;
            let base = (t * subframes + theta) * bins;
            for k in 0..bins {
                buf[k] = spectra[base + k];
            }
            // Hermitian extension of the one-sided spectrum
            for k in bins..k_len {
                buf[k] = spectra[base + (k_len - k)].conj();
            }
            buf[0].im = T::zero();
            buf[k_len / 2].im = T::zero();
            ifft.process(&mut buf);
            for n in 0..plan.subframe_len {
                let idx = start + n;
                if idx >= signal_len {
                    break;
                }
                out[idx] = out[idx] + buf[n].re * scale * win[n];
                norm[idx] = norm[idx] + win[n] * win[n];
            }
        }
    }
    let tiny = T::lit(1e-8);
    for (o, w) in out.iter_mut().zip(&norm) {
        *o = if *w > tiny { *o / *w } else { T::zero() };
    }
    Ok(out)
}

/// `(1/|Θ|) Σ_θ y_θ y_θᴴ`.
pub fn sample_cpsdm<T: Real>(subframes: &[&[Complex<T>]]) -> Result<HermitianMatrix<T>> {
    let first = subframes
        .first()
        .ok_or_else(|| ScfaError::InsufficientData("empty sub-frame set".into()))?;
    let m = first.len();
    let mut acc = CMat::zeros(m, m);
    for y in subframes {
        if y.len() != m {
            return Err(ScfaError::InvalidParameter("sub-frame vectors differ in length".into()));
        }
        acc.add_outer(y, T::one());
    }
    Ok(acc.scale(T::one() / T::from_count(subframes.len())).hermitian_part())
}

/// Sample CPSDMs for every `(t, k)` tile.
#[derive(Clone, Debug)]
pub struct CpsdmSeries<T> {
    pub frames: usize,
    pub bins: usize,
    pub channels: usize,
    /// Indexed `t * bins + k`.
    pub matrices: Vec<HermitianMatrix<T>>,
    pub subframe_counts: Vec<usize>,
}

impl<T: Real> CpsdmSeries<T> {
    pub fn from_spectra(spectra: &SubframeSpectra<T>) -> Result<Self> {
        let mut matrices = Vec::with_capacity(spectra.frames * spectra.bins);
        for t in 0..spectra.frames {
            for k in 0..spectra.bins {
                matrices.push(sample_cpsdm(&spectra.tile(t, k))?);
            }
        }
        Ok(Self {
            frames: spectra.frames,
            bins: spectra.bins,
            channels: spectra.channels,
            matrices,
            subframe_counts: vec![spectra.subframes; spectra.frames],
        })
    }

    pub fn get(&self, t: usize, k: usize) -> &HermitianMatrix<T> {
        &self.matrices[t * self.bins + k]
    }

    /// The frames of bin `k` in `range`.
    pub fn bin_frames(&self, k: usize, range: std::ops::Range<usize>) -> Vec<HermitianMatrix<T>> {
        range.map(|t| self.get(t, k).clone()).collect()
    }
}
