//! MVDR and multichannel Wiener filters and their application to sub-frame spectra.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Result, ScfaError};
use crate::linalg::{cholesky_factor, hermitian_inverse, inner, norm2, CMat, HermitianMatrix};
use crate::model::FrequencyGrid;
use crate::scalar::Real;
use crate::solver::objective::LOADING;
use crate::stft::{overlap_add, FramePlan, SubframeSpectra, Window};

/// `P_n⁻¹a / (aᴴP_n⁻¹a)`.
pub fn mvdr_weights<T: Real>(noise: &HermitianMatrix<T>, ratf: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    if noise.rows() != ratf.len() {
        return Err(ScfaError::Configuration("noise CPSDM and RATF differ in size".into()));
    }
    if norm2(ratf) == T::zero() {
        return Err(ScfaError::DegenerateVector("RATF is zero".into()));
    }
    let inv = hermitian_inverse(noise)?;
    let num = inv.mul_vec(ratf);
    let den = inner(ratf, &num);
    Ok(num.iter().map(|z| z / den).collect())
}

/// MVDR followed by the single-channel Wiener gain `p / (p + w_mᴴ P_n w_m)`.
pub fn mwf_weights<T: Real>(psd: T, ratf: &[Complex<T>], noise: &HermitianMatrix<T>) -> Result<Vec<Complex<T>>> {
    if !(psd >= T::zero()) {
        return Err(ScfaError::InvalidParameter("target PSD must be ≥ 0".into()));
    }
    let w = mvdr_weights(noise, ratf)?;
    let residual = noise.quad_form(&w);
    let denom = psd + residual;
    let gain = if denom > T::zero() { psd / denom } else { T::zero() };
    Ok(w.iter().map(|z| z * gain).collect())
}

/// `Σ_{i≠j} p_i a_i a_iᴴ + γΦ + diag(q)`, diagonally loaded when not positive definite.
pub fn interference_cpsdm<T: Real>(
    mixing: &CMat<T>,
    psd: &[T],
    target: usize,
    gamma: T,
    self_noise: &[T],
    phi: &HermitianMatrix<T>,
) -> HermitianMatrix<T> {
    let m = mixing.rows();
    let mut n = phi.scale(gamma);
    for (i, &p) in psd.iter().enumerate() {
        if i != target {
            n.add_outer(&mixing.column(i), p);
        }
    }
    n.add_to_diagonal(|i| if self_noise.len() == 1 { self_noise[0] } else { self_noise[i] });
    if cholesky_factor(&n).is_ok() {
        return n;
    }
    // load relative to the whole tile power so an all-zero interference stays usable
    let target_power = psd.get(target).map_or(T::zero(), |&p| p * norm2(&mixing.column(target)).powi(2));
    let load = T::lit(LOADING) * (n.real_trace() + target_power) / T::from_count(m);
    n.add_to_diagonal(|_| if load > T::zero() { load } else { T::one() });
    n
}

/// Beamformer weights for every `(t, k, source)`; `None` marks a missing tile.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet<T> {
    pub frames: usize,
    pub bins: usize,
    pub sources: usize,
    data: Vec<Option<Vec<Complex<T>>>>,
}

impl<T: Real> WeightSet<T> {
    pub fn new(frames: usize, bins: usize, sources: usize) -> Self {
        Self {
            frames,
            bins,
            sources,
            data: vec![None; frames * bins * sources],
        }
    }

    fn index(&self, t: usize, k: usize, j: usize) -> usize {
        (t * self.bins + k) * self.sources + j
    }

    pub fn set(&mut self, t: usize, k: usize, j: usize, w: Vec<Complex<T>>) {
        let i = self.index(t, k, j);
        self.data[i] = Some(w);
    }

    pub fn get(&self, t: usize, k: usize, j: usize) -> Option<&[Complex<T>]> {
        self.data[self.index(t, k, j)].as_deref()
    }

    /// Same weights for every tile and source.
    pub fn constant(frames: usize, bins: usize, sources: usize, w: &[Complex<T>]) -> Self {
        Self {
            frames,
            bins,
            sources,
            data: vec![Some(w.to_vec()); frames * bins * sources],
        }
    }
}

/// Filters every tile with `wᴴ y` and resynthesises one signal per source.
pub fn apply_and_reconstruct<T: Real>(
    weights: &WeightSet<T>,
    spectra: &SubframeSpectra<T>,
    plan: &FramePlan,
    grid: &FrequencyGrid,
    signal_len: usize,
) -> Result<Vec<Vec<T>>> {
    if weights.frames != spectra.frames || weights.bins != spectra.bins {
        return Err(ScfaError::Coverage(format!(
            "weights cover {}×{} tiles, data has {}×{}",
            weights.frames, weights.bins, spectra.frames, spectra.bins
        )));
    }
    for t in 0..weights.frames {
        for k in 0..weights.bins {
            for j in 0..weights.sources {
                match weights.get(t, k, j) {
                    Some(w) if w.len() == spectra.channels => {}
                    Some(_) => return Err(ScfaError::Coverage(format!("weights at ({t}, {k}) have the wrong length"))),
                    None => return Err(ScfaError::Coverage(format!("no weights for source {j} at ({t}, {k})"))),
                }
            }
        }
    }
    (0..weights.sources)
        .into_par_iter()
        .map(|j| {
            let mut out = Vec::with_capacity(spectra.frames * spectra.subframes * spectra.bins);
            for t in 0..spectra.frames {
                for th in 0..spectra.subframes {
                    for k in 0..spectra.bins {
                        let w = weights.get(t, k, j).expect("coverage checked");
                        out.push(inner(w, spectra.vector(t, th, k)));
                    }
                }
            }
            overlap_add(&out, spectra.frames, spectra.subframes, plan, grid, Window::SqrtHann, signal_len)
        })
        .collect()
}
