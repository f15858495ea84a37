use num_complex::Complex;
use rand::Rng;

use crate::error::{Result, ScfaError};
use crate::linalg::{hermitian_eig, CMat, HermitianMatrix};
use crate::model::SegmentParameters;
use crate::scalar::Real;

use super::constraints::ConstraintSet;
use super::packing::VariablePacking;

/// Estimates of the previous segment and how far the segment moved.
#[derive(Clone, Copy, Debug)]
pub struct WarmStart<'a, T> {
    pub previous: &'a SegmentParameters<T>,
    /// Start of the new segment minus start of the previous one, in frames.
    pub shift: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Initialization<T> {
    pub x: Vec<T>,
    /// Columns whose eigenvector vanished at the reference and fell back to all ones.
    pub fallback_columns: Vec<usize>,
    /// Frames copied from the previous segment.
    pub copied_frames: usize,
}

fn min_diag<T: Real>(p: &HermitianMatrix<T>) -> T {
    p.diag_real().into_iter().fold(T::infinity(), T::min)
}

/// Top-`r` eigenvectors of the frame-averaged CPSDM, scaled to one at the
/// reference microphone.
pub fn dominant_relative_eigenvectors<T: Real>(
    data: &[HermitianMatrix<T>],
    sources: usize,
    reference: usize,
) -> Result<(CMat<T>, Vec<usize>)> {
    let first = data
        .first()
        .ok_or_else(|| ScfaError::InsufficientData("no CPSDMs in segment".into()))?;
    let m = first.rows();
    let mut mean = CMat::zeros(m, m);
    for p in data {
        mean.add_scaled(p, T::one() / T::from_count(data.len()));
    }
    let eig = hermitian_eig(&mean.hermitian_part())?;
    let mut fallback = Vec::new();
    let mut a = CMat::zeros(m, sources);
    for j in 0..sources {
        let col = if j < m {
            let v = eig.vector(j);
            let pivot = v[reference];
            if pivot.norm() < T::lit(1e-9) {
                None
            } else {
                Some(v.iter().map(|z| z / pivot).collect::<Vec<_>>())
            }
        } else {
            None
        };
        let col = col.unwrap_or_else(|| {
            fallback.push(j);
            vec![Complex::new(T::one(), T::zero()); m]
        });
        a.set_column(j, &col);
    }
    Ok((a, fallback))
}

/// Starting point of one segment solve.
///
/// Without a warm start the mixing matrix comes from the dominant relative
/// eigenvectors and every PSD is drawn uniformly in its box. With one, the
/// mixing matrix, self-noise and overlapping frames are copied and only the
/// new frames are drawn.
pub fn initialize_segment<T: Real, R: Rng + ?Sized>(
    data: &[HermitianMatrix<T>],
    packing: &VariablePacking,
    constraints: &ConstraintSet<T>,
    warm: Option<WarmStart<'_, T>>,
    rng: &mut R,
) -> Result<Initialization<T>> {
    if data.len() != packing.frames {
        return Err(ScfaError::Configuration(format!(
            "{} CPSDMs for {} frames",
            data.len(),
            packing.frames
        )));
    }
    let rho = packing.reference;
    let mut x = vec![T::zero(); packing.len()];
    let mut protected = vec![false; packing.len()];
    let draw = |idx: usize, default_hi: T, rng: &mut R, x: &mut Vec<T>| {
        let lo = if constraints.lower[idx].is_finite() {
            constraints.lower[idx]
        } else {
            T::zero()
        };
        let hi = if constraints.upper[idx].is_finite() {
            constraints.upper[idx]
        } else {
            default_hi.max(lo)
        };
        let u = T::lit(rng.random::<f64>());
        x[idx] = lo + (hi - lo) * u;
    };
    let noise_hi = data.iter().map(min_diag).fold(T::infinity(), T::min).max(T::zero());

    let mut fallback_columns = Vec::new();
    let mut copied_frames = 0;
    let mixing = match warm {
        Some(w) => {
            let prev = w.previous;
            if prev.num_mics() != packing.mics || prev.num_sources() != packing.sources {
                return Err(ScfaError::Initialization("warm start has different dimensions".into()));
            }
            prev.mixing.clone()
        }
        None => {
            let (a, fb) = dominant_relative_eigenvectors(data, packing.sources, rho)?;
            fallback_columns = fb;
            a
        }
    };
    for i in 0..packing.mics {
        for j in 0..packing.sources {
            if let Some(idx) = packing.mixing_index(i, j) {
                x[idx] = constraints.clamp_value(idx, mixing[(i, j)].re);
                x[idx + 1] = constraints.clamp_value(idx + 1, mixing[(i, j)].im);
            }
        }
    }

    for (t, p) in data.iter().enumerate() {
        let source_frame = warm.and_then(|w| {
            let s = t + w.shift;
            (s < w.previous.num_frames()).then_some(s)
        });
        match (warm, source_frame) {
            (Some(w), Some(s)) => {
                copied_frames += 1;
                for j in 0..packing.sources {
                    let idx = packing.psd_index(t, j);
                    x[idx] = w.previous.psd[s][j];
                    protected[idx] = true;
                }
                if let Some(g) = packing.gamma_index(t) {
                    x[g] = w.previous.gamma[s];
                    protected[g] = true;
                }
            }
            _ => {
                let p_ref = p[(rho, rho)].re.max(T::zero());
                for j in 0..packing.sources {
                    draw(packing.psd_index(t, j), p_ref, rng, &mut x);
                }
                if let Some(g) = packing.gamma_index(t) {
                    draw(g, min_diag(p).max(T::zero()), rng, &mut x);
                }
            }
        }
    }
    for i in 0..packing.self_noise_len {
        let idx = packing.self_noise_index(i);
        match warm {
            Some(w) => x[idx] = w.previous.self_noise[i],
            None => draw(idx, noise_hi, rng, &mut x),
        }
    }
    constraints.repair(&mut x, Some(&protected));
    Ok(Initialization {
        x,
        fallback_columns,
        copied_frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::assemble_cpsdm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cplx(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn rank_one_data_gives_relative_steering_vector() {
        let a = vec![cplx(0.5, 0.5), cplx(1.0, 0.0), cplx(-0.3, 0.8)];
        let mut p = CMat::outer(&a, &a).scale(2.0);
        p.add_to_diagonal(|_| 0.1);
        let packing = VariablePacking::new(3, 1, 2, 1, false, true);
        let set = ConstraintSet::unconstrained(packing.len());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = initialize_segment(&[p.clone(), p], &packing, &set, None, &mut rng).unwrap();
        let params = packing.unpack(&init.x);
        for i in 0..3 {
            let expected = a[i] / a[1];
            assert!((params.mixing[(i, 0)] - expected).norm() < 1e-10);
        }
        assert!(init.fallback_columns.is_empty());
    }

    #[test]
    fn zero_reference_falls_back_to_ones() {
        let a = vec![cplx(0.0, 0.0), cplx(1.0, 0.0)];
        let p = CMat::outer(&a, &a).scale(3.0);
        let (mix, fb) = dominant_relative_eigenvectors(&[p], 1, 0).unwrap();
        assert_eq!(fb, vec![0]);
        assert_eq!(mix.column(0), vec![cplx(1.0, 0.0); 2]);
    }

    #[test]
    fn warm_start_copies_overlapping_frames() {
        let packing = VariablePacking::new(2, 1, 4, 0, true, true);
        let previous = SegmentParameters {
            mixing: CMat::from_rows(2, 1, vec![cplx(1.0, 0.0), cplx(0.4, -0.2)]),
            psd: vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
            gamma: vec![0.1, 0.2, 0.3, 0.4],
            self_noise: vec![0.01],
            reference_index: 0,
        };
        let phi = CMat::identity(2);
        let data: Vec<_> = (0..4)
            .map(|t| {
                let s = (t + 1).min(3);
                assemble_cpsdm(&previous.mixing, &previous.psd[s], previous.gamma[s], &[0.01], &phi).unwrap()
            })
            .collect();
        let set = ConstraintSet::unconstrained(packing.len());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let warm = WarmStart {
            previous: &previous,
            shift: 1,
        };
        let init = initialize_segment(&data, &packing, &set, Some(warm), &mut rng).unwrap();
        let params = packing.unpack(&init.x);
        assert_eq!(init.copied_frames, 3);
        for t in 0..3 {
            assert_eq!(params.psd[t], previous.psd[t + 1]);
            assert_eq!(params.gamma[t], previous.gamma[t + 1]);
        }
        assert_eq!(params.mixing, previous.mixing);
        assert_eq!(params.self_noise, previous.self_noise);
        assert!(params.psd[3][0] >= 0.0);
    }
}
