use num_complex::Complex;

use crate::error::{Result, ScfaError};
use crate::linalg::{cholesky_factor, hermitian_inverse, inverse_sqrt, logdet_from_cholesky, CMat, HermitianMatrix};
use crate::model::model_cpsdm_unchecked;
use crate::scalar::Real;

use super::packing::VariablePacking;
use super::variant::ObjectiveKind;

/// Relative diagonal loading applied to singular covariance matrices.
pub const LOADING: f64 = 1e-10;

/// Adds `LOADING · tr(P)/M` to the diagonal.
pub fn diagonal_loading<T: Real>(p: &HermitianMatrix<T>) -> HermitianMatrix<T> {
    let m = p.rows();
    let load = T::lit(LOADING) * p.real_trace().abs().max(T::min_positive_value()) / T::from_count(m);
    let mut out = p.clone();
    out.add_to_diagonal(|_| load);
    out
}

/// Per-segment data of one objective: the target CPSDMs and whatever the
/// chosen objective precomputes from them.
#[derive(Clone, Debug)]
pub struct SegmentObjective<T> {
    pub kind: ObjectiveKind,
    pub packing: VariablePacking,
    pub data: Vec<HermitianMatrix<T>>,
    pub phi: HermitianMatrix<T>,
    /// `P̂⁻¹` for GLS.
    weights: Vec<HermitianMatrix<T>>,
    /// True when some `P̂` needed loading to become positive definite.
    pub data_loaded: bool,
}

/// Result of one evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    pub value: T,
    pub gradient: Vec<T>,
    /// True when some model CPSDM needed loading (ML only).
    pub model_loaded: bool,
}

impl<T: Real> SegmentObjective<T> {
    pub fn new(kind: ObjectiveKind, packing: VariablePacking, data: &[HermitianMatrix<T>], phi: &HermitianMatrix<T>) -> Result<Self> {
        if data.len() != packing.frames {
            return Err(ScfaError::Configuration(format!(
                "{} CPSDMs for {} frames",
                data.len(),
                packing.frames
            )));
        }
        let mut data_loaded = false;
        let mut stored = Vec::with_capacity(data.len());
        for p in data {
            if p.rows() != packing.mics || !p.is_square() || phi.rows() != packing.mics {
                return Err(ScfaError::Configuration("CPSDM dimensions do not match the packing".into()));
            }
            if !p.is_finite() {
                return Err(ScfaError::Numeric("sample CPSDM has non-finite entries".into()));
            }
            let needs_pd = kind != ObjectiveKind::Ls;
            if needs_pd && cholesky_factor(p).is_err() {
                data_loaded = true;
                stored.push(diagonal_loading(p));
            } else {
                stored.push(p.hermitian_part());
            }
        }
        let weights = if kind == ObjectiveKind::Gls {
            stored
                .iter()
                .map(|p| {
                    let w = inverse_sqrt(p).or_else(|_| inverse_sqrt(&diagonal_loading(p)))?;
                    Ok((&w * &w).hermitian_part())
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self {
            kind,
            packing,
            data: stored,
            phi: phi.clone(),
            weights,
            data_loaded,
        })
    }

    fn model(&self, params_mixing: &CMat<T>, x: &[T], t: usize) -> HermitianMatrix<T> {
        let pk = &self.packing;
        let psd: Vec<T> = (0..pk.sources).map(|j| x[pk.psd_index(t, j)]).collect();
        let gamma = pk.gamma_index(t).map_or(T::zero(), |g| x[g]);
        let q: Vec<T> = (0..pk.mics).map(|i| x[pk.self_noise_index(i)]).collect();
        model_cpsdm_unchecked(params_mixing, &psd, gamma, &q, &self.phi)
    }

    fn mixing(&self, x: &[T]) -> CMat<T> {
        let pk = &self.packing;
        CMat::from_fn(pk.mics, pk.sources, |i, j| match pk.mixing_index(i, j) {
            Some(idx) => Complex::new(x[idx], x[idx + 1]),
            None => Complex::new(T::one(), T::zero()),
        })
    }

    /// Objective value only; `+∞` when the ML model cannot be factorized.
    pub fn value(&self, x: &[T]) -> T {
        self.evaluate_inner(x, false).map_or(T::infinity(), |e| e.value)
    }

    /// Value and gradient, `None` when the ML model cannot be factorized.
    pub fn evaluate(&self, x: &[T]) -> Option<Evaluation<T>> {
        self.evaluate_inner(x, true)
    }

    fn evaluate_inner(&self, x: &[T], with_gradient: bool) -> Option<Evaluation<T>> {
        let pk = &self.packing;
        let a = self.mixing(x);
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let mut value = T::zero();
        let mut grad = vec![T::zero(); if with_gradient { pk.len() } else { 0 }];
        let mut model_loaded = false;
        for t in 0..pk.frames {
            let p_model = self.model(&a, x, t);
            let data = &self.data[t];
            let g = match self.kind {
                ObjectiveKind::Ml => {
                    if !(p_model.real_trace() > T::zero()) {
                        return None;
                    }
                    let (p_fact, loaded) = match cholesky_factor(&p_model) {
                        Ok(l) => (l, false),
                        Err(_) => (cholesky_factor(&diagonal_loading(&p_model)).ok()?, true),
                    };
                    model_loaded |= loaded;
                    let p_used = if loaded { diagonal_loading(&p_model) } else { p_model };
                    let inv = hermitian_inverse(&p_used).ok()?;
                    let inv_data = &inv * data;
                    value = value + logdet_from_cholesky(&p_fact) + inv_data.real_trace();
                    if !with_gradient {
                        continue;
                    }
                    (&inv - &(&inv_data * &inv)).hermitian_part()
                }
                ObjectiveKind::Ls => {
                    let e = &p_model - data;
                    let n = e.frobenius_norm();
                    value = value + half * n * n;
                    e
                }
                ObjectiveKind::Gls => {
                    let e = &p_model - data;
                    let s = &self.weights[t];
                    let ses = (&(s * &e) * s).hermitian_part();
                    // ‖W E W‖² = tr(S E S E)
                    value = value + half * ses.trace_of_product(&e).re;
                    ses
                }
            };
            if !with_gradient {
                continue;
            }
            for j in 0..pk.sources {
                let col = a.column(j);
                let ga = g.mul_vec(&col);
                let quad = col
                    .iter()
                    .zip(&ga)
                    .fold(T::zero(), |acc, (c, v)| acc + (c.conj() * v).re);
                grad[pk.psd_index(t, j)] = quad;
                let p = x[pk.psd_index(t, j)];
                for (i, v) in ga.iter().enumerate() {
                    if let Some(idx) = pk.mixing_index(i, j) {
                        grad[idx] = grad[idx] + two * p * v.re;
                        grad[idx + 1] = grad[idx + 1] + two * p * v.im;
                    }
                }
            }
            if let Some(gi) = pk.gamma_index(t) {
                grad[gi] = g.trace_of_product(&self.phi).re;
            }
            if pk.self_noise_len == 1 {
                let idx = pk.self_noise_index(0);
                grad[idx] = grad[idx] + g.real_trace();
            } else {
                for i in 0..pk.mics {
                    let idx = pk.self_noise_index(i);
                    grad[idx] = grad[idx] + g[(i, i)].re;
                }
            }
        }
        if !value.is_finite() {
            return None;
        }
        Some(Evaluation {
            value,
            gradient: grad,
            model_loaded,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_util::{random_matrix, random_pd};
    use crate::model::SegmentParameters;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, pk: &VariablePacking) -> Vec<f64> {
        let mut x: Vec<f64> = (0..pk.len()).map(|_| rng.random_range(0.2..1.5)).collect();
        for i in 0..pk.num_mixing() {
            x[i] = rng.random_range(-1.0..1.0);
        }
        x
    }

    fn phi(m: usize) -> CMat<f64> {
        CMat::from_fn(m, m, |i, j| {
            Complex::new(if i == j { 1.0 } else { 0.3 / (1.0 + (i as f64 - j as f64).abs()) }, 0.0)
        })
    }

    #[test]
    fn ml_value_at_data_and_zero_gamma_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pk = VariablePacking::new(3, 1, 2, 0, true, true);
        let x = random_params(&mut rng, &pk);
        let ph = phi(3);
        let params: SegmentParameters<f64> = pk.unpack(&x);
        let data: Vec<_> = (0..2).map(|t| params.frame_cpsdm(t, &ph).unwrap()).collect();
        let obj = SegmentObjective::new(ObjectiveKind::Ml, pk, &data, &ph).unwrap();
        let ev = obj.evaluate(&x).unwrap();
        let expected: f64 = data
            .iter()
            .map(|p| logdet_from_cholesky(&cholesky_factor(p).unwrap()) + 3.0)
            .sum();
        assert!((ev.value - expected).abs() < 1e-10);
        assert!(ev.gradient.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn ls_gamma_gradient_is_trace_of_residual_for_identity_phi() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pk = VariablePacking::new(3, 2, 1, 0, true, false);
        let x = random_params(&mut rng, &pk);
        let data = vec![random_pd(&mut rng, 3, 0.5)];
        let id = CMat::identity(3);
        let obj = SegmentObjective::new(ObjectiveKind::Ls, pk, &data, &id).unwrap();
        let ev = obj.evaluate(&x).unwrap();
        let model = pk.unpack(&x).frame_cpsdm(0, &id).unwrap();
        let expected = (&model - &data[0]).real_trace();
        assert!((ev.gradient[pk.gamma_index(0).unwrap()] - expected).abs() < 1e-12);
    }

    #[test]
    fn ml_is_minimised_at_the_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_pd(&mut rng, 4, 0.3);
        let value = |p: &CMat<f64>| {
            let l = cholesky_factor(p).unwrap();
            logdet_from_cholesky(&l) + (&hermitian_inverse(p).unwrap() * &data).real_trace()
        };
        let at_data = value(&data);
        for _ in 0..20 {
            let other = random_pd(&mut rng, 4, 0.1);
            assert!(value(&other) >= at_data - 1e-10);
        }
        let _ = random_matrix(&mut rng, 1, 1);
    }

    #[test]
    fn singular_data_is_loaded() {
        let pk = VariablePacking::new(2, 1, 1, 0, false, true);
        let a = vec![Complex::new(1.0, 0.0), Complex::new(1.0, 0.0)];
        let data = vec![CMat::outer(&a, &a)];
        let obj = SegmentObjective::new(ObjectiveKind::Ml, pk, &data, &CMat::identity(2)).unwrap();
        assert!(obj.data_loaded);
        let obj = SegmentObjective::new(ObjectiveKind::Ls, pk, &data, &CMat::identity(2)).unwrap();
        assert!(!obj.data_loaded);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for kind in [ObjectiveKind::Ml, ObjectiveKind::Ls, ObjectiveKind::Gls] {
            for &(has_gamma, shared) in &[(true, true), (false, false)] {
                let pk = VariablePacking::new(4, 2, 3, 1, has_gamma, shared);
                let data: Vec<_> = (0..3).map(|_| random_pd(&mut rng, 4, 0.5)).collect();
                let obj = SegmentObjective::new(kind, pk, &data, &phi(4)).unwrap();
                let x = random_params(&mut rng, &pk);
                let ev = obj.evaluate(&x).unwrap();
                for i in 0..x.len() {
                    let h = 1e-5 * x[i].abs().max(1.0);
                    let mut xp = x.clone();
                    xp[i] += h;
                    let mut xm = x.clone();
                    xm[i] -= h;
                    let fd = (obj.value(&xp) - obj.value(&xm)) / (2.0 * h);
                    let err = (fd - ev.gradient[i]).abs() / fd.abs().max(ev.gradient[i].abs()).max(1e-3);
                    assert!(err < 1e-6, "{kind} var {i}: {fd} vs {}", ev.gradient[i]);
                }
            }
        }
    }
}
