//! Reference estimators: whitened-eigenvalue late PSD, whitened-eigenvector
//! RATF and MVDR target PSD.

use num_complex::Complex;

use crate::beamforming::mvdr_weights;
use crate::error::{Result, ScfaError};
use crate::linalg::{cholesky_factor, hermitian_eig, whiten, CMat, HermitianMatrix};
use crate::scalar::Real;
use crate::solver::objective::diagonal_loading;
use crate::solver::online::frame_owners;
use crate::stft::{segment_starts, CpsdmSeries};

/// Mean of all but the largest eigenvalue of `L_Φ⁻¹ P̂_y L_Φ⁻ᴴ`.
pub fn late_psd_eig<T: Real>(data: &HermitianMatrix<T>, phi: &HermitianMatrix<T>) -> Result<T> {
    let m = data.rows();
    if m < 2 || phi.rows() != m {
        return Err(ScfaError::Configuration("late PSD needs at least two matching channels".into()));
    }
    let l = cholesky_factor(phi)?;
    let eig = hermitian_eig(&whiten(&l, data))?;
    let tail = eig.values[1..].iter().fold(T::zero(), |a, &b| a + b);
    Ok(tail / T::from_count(m - 1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatfEstimate<T> {
    pub ratf: Vec<Complex<T>>,
    /// Largest whitened eigenvalue.
    pub dominant: T,
    /// No excess power over the noise: the direction is arbitrary.
    pub low_confidence: bool,
}

/// RATF from the dominant eigenvector of the noise-whitened CPSDM.
pub fn ratf_gevd<T: Real>(data: &HermitianMatrix<T>, noise: &HermitianMatrix<T>, reference: usize) -> Result<RatfEstimate<T>> {
    let m = data.rows();
    if noise.rows() != m || reference >= m {
        return Err(ScfaError::Configuration("RATF estimate needs matching sizes and a valid reference".into()));
    }
    let l = cholesky_factor(noise)?;
    let eig = hermitian_eig(&whiten(&l, data))?;
    let v = CMat::column_vector(&eig.vector(0));
    let colored = (&l * &v).column(0);
    let pivot = colored[reference];
    if pivot.norm() < T::lit(1e-12) {
        return Err(ScfaError::DegenerateReference {
            value: pivot.norm().as_f64(),
        });
    }
    let mut ratf: Vec<Complex<T>> = colored.iter().map(|z| z / pivot).collect();
    ratf[reference] = Complex::new(T::one(), T::zero());
    Ok(RatfEstimate {
        ratf,
        dominant: eig.values[0],
        low_confidence: eig.values[0] <= T::one() + T::lit(1e-6),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetPsd<T> {
    /// `max(raw, 0)`.
    pub value: T,
    pub raw: T,
}

/// `w_MVDRᴴ (P̂_y − P̂_n) w_MVDR`, floored at zero.
pub fn target_psd_mvdr<T: Real>(data: &HermitianMatrix<T>, noise: &HermitianMatrix<T>, ratf: &[Complex<T>]) -> Result<TargetPsd<T>> {
    let w = mvdr_weights(noise, ratf)?;
    let raw = (data - noise).quad_form(&w);
    Ok(TargetPsd {
        value: raw.max(T::zero()),
        raw,
    })
}

/// Reference-method estimates of one bin, per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTrack<T> {
    pub bin: usize,
    pub psd: Vec<T>,
    pub raw_psd: Vec<T>,
    pub gamma: Vec<T>,
    pub ratf: Vec<Vec<Complex<T>>>,
    pub low_confidence_frames: usize,
    /// The coherence needed diagonal loading before whitening.
    pub loaded_coherence: bool,
}

/// Single-source reference chain on one bin: γ̂ per frame, P̂_n = γ̂Φ + qI,
/// per-frame RATFs averaged over each segment, then the MVDR target PSD.
/// Frames take the estimate of the earliest segment containing them.
pub fn reference_bin<T: Real>(
    series: &CpsdmSeries<T>,
    phi: &HermitianMatrix<T>,
    k: usize,
    self_noise: T,
    reference: usize,
    frames_per_segment: usize,
    segment_hop: usize,
) -> Result<ReferenceTrack<T>> {
    let (phi_used, loaded_coherence) = match cholesky_factor(phi) {
        Ok(_) => (phi.clone(), false),
        Err(_) => (diagonal_loading(phi), true),
    };
    let m = series.channels;
    let frames = series.frames;
    let mut gamma = Vec::with_capacity(frames);
    let mut noise = Vec::with_capacity(frames);
    let mut per_frame = Vec::with_capacity(frames);
    let mut low_confidence_frames = 0;
    for t in 0..frames {
        let data = series.get(t, k);
        let g = late_psd_eig(data, &phi_used)?.max(T::zero());
        let mut n = phi_used.scale(g);
        n.add_to_diagonal(|_| self_noise);
        let est = ratf_gevd(data, &n, reference)?;
        if est.low_confidence {
            low_confidence_frames += 1;
        }
        gamma.push(g);
        noise.push(n);
        per_frame.push(est.ratf);
    }
    let starts = segment_starts(frames, frames_per_segment, segment_hop);
    if starts.is_empty() {
        return Err(ScfaError::InsufficientData(format!(
            "{frames} frames do not fill one segment of {frames_per_segment}"
        )));
    }
    let averages: Vec<Vec<Complex<T>>> = starts
        .iter()
        .map(|&s| {
            let mut avg = vec![Complex::new(T::zero(), T::zero()); m];
            for a in &per_frame[s..s + frames_per_segment] {
                for (x, y) in avg.iter_mut().zip(a) {
                    *x = *x + y / T::from_count(frames_per_segment);
                }
            }
            let pivot = avg[reference];
            if pivot.norm() > T::zero() {
                avg = avg.iter().map(|z| z / pivot).collect();
            }
            avg[reference] = Complex::new(T::one(), T::zero());
            avg
        })
        .collect();
    let owners = frame_owners(frames, &starts, frames_per_segment);
    let ratf: Vec<Vec<Complex<T>>> = owners.iter().map(|&s| averages[s].clone()).collect();
    let mut psd = Vec::with_capacity(frames);
    let mut raw_psd = Vec::with_capacity(frames);
    for t in 0..frames {
        let p = target_psd_mvdr(series.get(t, k), &noise[t], &ratf[t])?;
        psd.push(p.value);
        raw_psd.push(p.raw);
    }
    Ok(ReferenceTrack {
        bin: k,
        psd,
        raw_psd,
        gamma,
        ratf,
        low_confidence_frames,
        loaded_coherence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_util::{random_matrix, random_pd};
    use crate::model::{distance_matrix, spherical_coherence, FrequencyGrid, Geometry};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coherence(k: usize) -> HermitianMatrix<f64> {
        let g = Geometry {
            mic_positions: Geometry::circular_array(4, 0.02, [0.0; 3]),
            source_positions: vec![[1.0, 0.0, 0.0]],
            reference_index: 0,
        };
        let grid = FrequencyGrid {
            fft_len: 256,
            sampling_rate: 16000.0,
            speed_of_sound: 343.0,
        };
        spherical_coherence(&distance_matrix(&g), k, &grid).unwrap().matrix
    }

    #[test]
    fn late_psd_of_pure_diffuse_field() {
        let phi = coherence(80);
        assert!((late_psd_eig(&phi.scale(0.3), &phi).unwrap() - 0.3).abs() < 1e-10);
        assert!((late_psd_eig(&phi, &phi).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn late_psd_ignores_rank_one_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = coherence(100);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 4, 1).column(0);
            let mut p = phi.scale(0.05);
            p.add_outer(&a, 2.0);
            assert!((late_psd_eig(&p, &phi).unwrap() - 0.05).abs() <= 1e-9 * 0.05);
        }
    }

    #[test]
    fn gevd_with_identity_noise_returns_relative_steering() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 4, 1).column(0);
        let mut p = CMat::identity(4);
        p.add_outer(&a, 0.7);
        let est = ratf_gevd(&p, &CMat::identity(4), 2).unwrap();
        assert_eq!(est.ratf[2], Complex::new(1.0, 0.0));
        for i in 0..4 {
            assert!((est.ratf[i] - a[i] / a[2]).norm() < 1e-9);
        }
        assert!(!est.low_confidence);
        let noise = random_pd(&mut rng, 4, 0.5);
        assert!(ratf_gevd(&noise, &noise, 0).unwrap().low_confidence);
    }

    #[test]
    fn mvdr_target_psd_is_exact_and_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = random_pd(&mut rng, 4, 0.5);
        let a = random_matrix(&mut rng, 4, 1).column(0);
        let mut p = noise.clone();
        p.add_outer(&a, 0.4);
        assert!((target_psd_mvdr(&p, &noise, &a).unwrap().value - 0.4).abs() < 1e-9);
        assert_eq!(target_psd_mvdr(&noise, &noise, &a).unwrap().value, 0.0);
        let mut shifted = p.clone();
        shifted.add_outer(&a, 0.25);
        let d = target_psd_mvdr(&shifted, &noise, &a).unwrap().raw - target_psd_mvdr(&p, &noise, &a).unwrap().raw;
        assert!((d - 0.25).abs() < 1e-9);
        let mut below = noise.clone();
        below.add_to_diagonal(|_| -1e-3);
        let t = target_psd_mvdr(&below, &noise, &a).unwrap();
        assert!(t.raw < 0.0);
        assert_eq!(t.value, 0.0);
    }
}
