use num_complex::Complex;

use crate::linalg::CMat;
use crate::model::SegmentParameters;
use crate::scalar::Real;

/// Ordering of the free real variables of one (segment, bin) problem:
/// `[Re, Im of a_ij for i ≠ ρ]`, then `p_j(t)` (frame-major), then `γ(t)`
/// when estimated, then the self-noise entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VariablePacking {
    pub mics: usize,
    pub sources: usize,
    pub frames: usize,
    pub reference: usize,
    pub has_gamma: bool,
    pub self_noise_len: usize,
}

impl VariablePacking {
    pub fn new(mics: usize, sources: usize, frames: usize, reference: usize, has_gamma: bool, shared_self_noise: bool) -> Self {
        Self {
            mics,
            sources,
            frames,
            reference,
            has_gamma,
            self_noise_len: if shared_self_noise { 1 } else { mics },
        }
    }

    pub fn num_mixing(&self) -> usize {
        2 * (self.mics - 1) * self.sources
    }

    pub fn len(&self) -> usize {
        self.num_mixing() + self.frames * self.sources + if self.has_gamma { self.frames } else { 0 } + self.self_noise_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of `Re(a_ij)`; `Im(a_ij)` follows at `+1`. `None` for the fixed
    /// reference row.
    pub fn mixing_index(&self, i: usize, j: usize) -> Option<usize> {
        if i == self.reference {
            return None;
        }
        let row = if i > self.reference { i - 1 } else { i };
        Some(2 * (row * self.sources + j))
    }

    pub fn psd_index(&self, t: usize, j: usize) -> usize {
        self.num_mixing() + t * self.sources + j
    }

    pub fn gamma_index(&self, t: usize) -> Option<usize> {
        self.has_gamma
            .then(|| self.num_mixing() + self.frames * self.sources + t)
    }

    pub fn self_noise_index(&self, i: usize) -> usize {
        let base = self.num_mixing() + self.frames * self.sources + if self.has_gamma { self.frames } else { 0 };
        base + if self.self_noise_len == 1 { 0 } else { i }
    }

    pub fn pack<T: Real>(&self, params: &SegmentParameters<T>) -> Vec<T> {
        let mut x = vec![T::zero(); self.len()];
        for i in 0..self.mics {
            for j in 0..self.sources {
                if let Some(idx) = self.mixing_index(i, j) {
                    x[idx] = params.mixing[(i, j)].re;
                    x[idx + 1] = params.mixing[(i, j)].im;
                }
            }
        }
        for t in 0..self.frames {
            for j in 0..self.sources {
                x[self.psd_index(t, j)] = params.psd[t][j];
            }
            if let Some(g) = self.gamma_index(t) {
                x[g] = params.gamma[t];
            }
        }
        for i in 0..self.self_noise_len {
            x[self.self_noise_index(i)] = params.self_noise[i];
        }
        x
    }

    pub fn unpack<T: Real>(&self, x: &[T]) -> SegmentParameters<T> {
        assert_eq!(x.len(), self.len(), "packed vector has wrong length");
        let mixing = CMat::from_fn(self.mics, self.sources, |i, j| match self.mixing_index(i, j) {
            Some(idx) => Complex::new(x[idx], x[idx + 1]),
            None => Complex::new(T::one(), T::zero()),
        });
        let psd = (0..self.frames)
            .map(|t| (0..self.sources).map(|j| x[self.psd_index(t, j)]).collect())
            .collect();
        let gamma = (0..self.frames)
            .map(|t| self.gamma_index(t).map_or(T::zero(), |g| x[g]))
            .collect();
        let self_noise = (0..self.self_noise_len).map(|i| x[self.self_noise_index(i)]).collect();
        SegmentParameters {
            mixing,
            psd,
            gamma,
            self_noise,
            reference_index: self.reference,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pack_unpack_round_trip(
            mics in 1usize..6, sources in 1usize..4, frames in 1usize..5,
            reference_seed in 0usize..100, has_gamma: bool, shared: bool,
            values in proptest::collection::vec(-10.0f64..10.0, 200),
        ) {
            let reference = reference_seed % mics;
            let packing = VariablePacking::new(mics, sources, frames, reference, has_gamma, shared);
            let x: Vec<f64> = values[..packing.len()].to_vec();
            let params = packing.unpack(&x);
            prop_assert_eq!(packing.pack(&params), x);
            for j in 0..sources {
                prop_assert_eq!(params.mixing[(reference, j)], Complex::new(1.0, 0.0));
            }
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let p = VariablePacking::new(4, 2, 3, 1, true, true);
        assert_eq!(p.num_mixing(), 12);
        assert_eq!(p.mixing_index(0, 0), Some(0));
        assert_eq!(p.mixing_index(1, 0), None);
        assert_eq!(p.mixing_index(2, 1), Some(6));
        assert_eq!(p.psd_index(0, 0), 12);
        assert_eq!(p.gamma_index(0), Some(18));
        assert_eq!(p.self_noise_index(3), 21);
        assert_eq!(p.len(), 22);
    }
}
