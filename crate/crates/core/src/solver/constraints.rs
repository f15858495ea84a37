//! Feasible sets over packed variables and the Euclidean projection onto them.

use num_complex::Complex;

use crate::error::{Result, ScfaError};
use crate::linalg::HermitianMatrix;
use crate::model::{DistanceMatrix, FrequencyGrid};
use crate::scalar::Real;
use crate::stft::FramePlan;

use super::packing::VariablePacking;
use super::variant::{ConstraintParams, ProblemVariant, PsdSumConstraint, RatfBox};

/// `Σ coeff·x[index] ≤ rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow<T> {
    pub terms: Vec<(usize, T)>,
    pub rhs: T,
}

impl<T: Real> LinearRow<T> {
    pub fn lhs(&self, x: &[T]) -> T {
        self.terms.iter().fold(T::zero(), |acc, &(i, c)| acc + c * x[i])
    }
}

/// Mixing-matrix entry held fixed (excluded from the packing).
#[derive(Clone, Debug, PartialEq)]
pub struct FixedEntry<T> {
    pub row: usize,
    pub col: usize,
    pub value: Complex<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub rows: Vec<LinearRow<T>>,
    pub fixed: Vec<FixedEntry<T>>,
}

impl<T: Real> ConstraintSet<T> {
    pub fn unconstrained(n: usize) -> Self {
        Self {
            lower: vec![T::neg_infinity(); n],
            upper: vec![T::infinity(); n],
            rows: Vec::new(),
            fixed: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(ScfaError::Configuration("bound vectors differ in length".into()));
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l <= u) {
                return Err(ScfaError::Configuration(format!(
                    "variable {i} has lower bound {l} above upper bound {u}"
                )));
            }
        }
        Ok(())
    }

    /// Largest violation of any bound or row (0 when feasible).
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for (i, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[i] - v).max(v - self.upper[i]);
        }
        for row in &self.rows {
            worst = worst.max(row.lhs(x) - row.rhs);
        }
        worst
    }

    /// Constraint set for variables rescaled as `z = x / scale`.
    pub fn scaled(&self, scale: &[T]) -> Self {
        Self {
            lower: self.lower.iter().zip(scale).map(|(&l, &s)| l / s).collect(),
            upper: self.upper.iter().zip(scale).map(|(&u, &s)| u / s).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| LinearRow {
                    terms: r.terms.iter().map(|&(i, c)| (i, c * scale[i])).collect(),
                    rhs: r.rhs,
                })
                .collect(),
            fixed: self.fixed.clone(),
        }
    }

    fn clamp(&self, i: usize, v: T) -> T {
        v.max(self.lower[i]).min(self.upper[i])
    }

    /// `v` clipped into the bounds of variable `i`.
    pub fn clamp_value(&self, i: usize, v: T) -> T {
        self.clamp(i, v)
    }

    /// Euclidean projection onto the box intersected with the rows.
    ///
    /// Solved through the dual: for row multipliers `μ ≥ 0` the primal point
    /// is `clamp(y − Cᵀμ)`, and each multiplier is updated exactly by a
    /// breakpoint search on its piecewise-linear row residual. Rows that
    /// share variables are handled by repeated sweeps.
    pub fn project(&self, y: &[T]) -> Vec<T> {
        let n = y.len();
        let mut x: Vec<T> = (0..n).map(|i| self.clamp(i, y[i])).collect();
        if self.rows.is_empty() || self.rows.iter().all(|r| r.lhs(&x) <= r.rhs) {
            return x;
        }
        let mut mu = vec![T::zero(); self.rows.len()];
        // shift[i] = Σ_r μ_r c_ri
        let mut shift = vec![T::zero(); n];
        let scale = y.iter().fold(T::one(), |a, b| a.max(b.abs()));
        let tol = T::epsilon() * T::lit(16.0) * scale;
        for _sweep in 0..2000 {
            let mut max_change = T::zero();
            for (r, row) in self.rows.iter().enumerate() {
                // remove own contribution
                for &(i, c) in &row.terms {
                    shift[i] = shift[i] - mu[r] * c;
                }
                let z: Vec<(usize, T, T)> = row.terms.iter().map(|&(i, c)| (i, c, y[i] - shift[i])).collect();
                let new_mu = self.row_multiplier(&z, row.rhs);
                max_change = max_change.max((new_mu - mu[r]).abs());
                mu[r] = new_mu;
                for &(i, c) in &row.terms {
                    shift[i] = shift[i] + mu[r] * c;
                }
            }
            if max_change <= tol {
                break;
            }
        }
        for i in 0..n {
            x[i] = self.clamp(i, y[i] - shift[i]);
        }
        self.repair(&mut x, None);
        x
    }

    /// Smallest `μ ≥ 0` with `Σ c·clamp(z − μc) ≤ rhs`.
    fn row_multiplier(&self, z: &[(usize, T, T)], rhs: T) -> T {
        let h = |mu: T| {
            z.iter()
                .fold(T::zero(), |acc, &(i, c, zi)| acc + c * self.clamp(i, zi - mu * c))
                - rhs
        };
        if h(T::zero()) <= T::zero() {
            return T::zero();
        }
        let mut breaks: Vec<T> = Vec::with_capacity(2 * z.len());
        for &(i, c, zi) in z {
            if c == T::zero() {
                continue;
            }
            for bound in [self.lower[i], self.upper[i]] {
                if bound.is_finite() {
                    let b = (zi - bound) / c;
                    if b > T::zero() && b.is_finite() {
                        breaks.push(b);
                    }
                }
            }
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let mut prev_mu = T::zero();
        let mut prev_h = h(T::zero());
        for &b in &breaks {
            let hb = h(b);
            if hb <= T::zero() {
                // h is linear on [prev_mu, b]
                let denom = prev_h - hb;
                return if denom > T::zero() {
                    prev_mu + (b - prev_mu) * prev_h / denom
                } else {
                    b
                };
            }
            prev_mu = b;
            prev_h = hb;
        }
        // beyond the last breakpoint h is linear with slope −Σ c² over free vars
        let slope: T = z
            .iter()
            .filter(|&&(i, c, zi)| {
                let v = zi - prev_mu * c;
                c != T::zero() && v > self.lower[i] && v < self.upper[i]
            })
            .fold(T::zero(), |acc, &(_, c, _)| acc + c * c);
        if slope > T::zero() {
            prev_mu + prev_h / slope
        } else {
            prev_mu
        }
    }

    /// Pulls violated rows back inside by shrinking the row's variables
    /// towards their (finite) lower bounds. Variables flagged in `protected`
    /// are only shrunk when the others cannot absorb the violation.
    pub fn repair(&self, x: &mut [T], protected: Option<&[bool]>) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.max(self.lower[i]).min(self.upper[i]);
        }
        for row in &self.rows {
            for pass in 0..2 {
                let lhs = row.lhs(x);
                if lhs <= row.rhs {
                    break;
                }
                let movable = |i: usize, c: T| {
                    c > T::zero()
                        && self.lower[i].is_finite()
                        && (pass == 1 || protected.is_none_or(|p| !p[i]))
                };
                let slack: T = row
                    .terms
                    .iter()
                    .filter(|&&(i, c)| movable(i, c))
                    .fold(T::zero(), |acc, &(i, c)| acc + c * (x[i] - self.lower[i]));
                if slack <= T::zero() {
                    continue;
                }
                let fixed_part = lhs - slack;
                let factor = ((row.rhs - fixed_part) / slack)
                    .max(T::zero())
                    .min(T::one())
                    * (T::one() - T::epsilon() * T::lit(8.0));
                for &(i, c) in &row.terms {
                    if movable(i, c) {
                        x[i] = self.lower[i] + (x[i] - self.lower[i]) * factor;
                    }
                }
            }
        }
    }
}

/// Builds the feasible set of one (segment, bin) problem.
#[allow(clippy::too_many_arguments)]
pub fn build_constraints<T: Real>(
    variant: &ProblemVariant,
    grid: &FrequencyGrid,
    plan: &FramePlan,
    data: &[HermitianMatrix<T>],
    phi: &HermitianMatrix<T>,
    distances: Option<&DistanceMatrix>,
    params: &ConstraintParams,
    packing: &VariablePacking,
) -> Result<ConstraintSet<T>> {
    variant.validate()?;
    if !(params.delta_with_gamma > 0.0) || !(params.delta_without_gamma > 0.0) {
        return Err(ScfaError::Configuration("δ₁ and δ₂ must be positive".into()));
    }
    if !(params.min_distance > 0.0) {
        return Err(ScfaError::Configuration("λ must be positive".into()));
    }
    if data.len() != packing.frames {
        return Err(ScfaError::Configuration(format!(
            "{} CPSDMs supplied for a {}-frame segment",
            data.len(),
            packing.frames
        )));
    }
    let m = packing.mics;
    let rho = packing.reference;
    let mut set = ConstraintSet::unconstrained(packing.len());
    let lambda = params.min_distance;

    // RATF boxes
    let ratf_bound = |i: usize| -> Result<Option<f64>> {
        match variant.ratf_box {
            RatfBox::None => Ok(None),
            RatfBox::Blind => {
                let span = plan.subframe_len as f64 * grid.speed_of_sound / grid.sampling_rate;
                Ok(Some((span + lambda) / lambda))
            }
            RatfBox::DistanceBased => {
                let d = distances.ok_or_else(|| {
                    ScfaError::Configuration("distance-based RATF box requested without a distance matrix".into())
                })?;
                if d.order != m {
                    return Err(ScfaError::Configuration(format!(
                        "distance matrix has order {}, expected {m}",
                        d.order
                    )));
                }
                Ok(Some((d.get(rho, i) + lambda) / lambda))
            }
        }
    };
    for i in 0..m {
        if let Some(b) = ratf_bound(i)? {
            for j in 0..packing.sources {
                if let Some(idx) = packing.mixing_index(i, j) {
                    for k in [idx, idx + 1] {
                        set.lower[k] = T::lit(-b);
                        set.upper[k] = T::lit(b);
                    }
                }
            }
        }
    }

    // positivity
    let zero_or_free = if variant.positivity_on_psds {
        T::zero()
    } else {
        T::neg_infinity()
    };
    for t in 0..packing.frames {
        for j in 0..packing.sources {
            set.lower[packing.psd_index(t, j)] = zero_or_free;
        }
        if let Some(g) = packing.gamma_index(t) {
            set.lower[g] = zero_or_free;
        }
    }
    for i in 0..packing.self_noise_len {
        set.lower[packing.self_noise_index(i)] = zero_or_free;
    }

    let min_diag = |p: &HermitianMatrix<T>| p.diag_real().into_iter().fold(T::infinity(), T::min);

    if variant.gamma_box {
        let phi_min = min_diag(phi);
        if !(phi_min > T::zero()) {
            return Err(ScfaError::Configuration("coherence matrix has a nonpositive diagonal".into()));
        }
        for (t, p) in data.iter().enumerate() {
            let g = packing.gamma_index(t).expect("γ box implies γ is estimated");
            set.upper[g] = (min_diag(p) / phi_min).max(T::zero());
            set.lower[g] = T::zero();
        }
    }
    if variant.self_noise_box {
        let bound = data.iter().map(min_diag).fold(T::infinity(), T::min).max(T::zero());
        for i in 0..packing.self_noise_len {
            let idx = packing.self_noise_index(i);
            set.lower[idx] = T::zero();
            set.upper[idx] = bound;
        }
    }

    match variant.psd_sum {
        PsdSumConstraint::None => {}
        PsdSumConstraint::WithGamma | PsdSumConstraint::WithoutGamma => {
            let with_gamma = variant.psd_sum == PsdSumConstraint::WithGamma;
            let delta = T::lit(if with_gamma {
                params.delta_with_gamma
            } else {
                params.delta_without_gamma
            });
            for (t, p) in data.iter().enumerate() {
                let mut terms: Vec<(usize, T)> = (0..packing.sources).map(|j| (packing.psd_index(t, j), T::one())).collect();
                if with_gamma {
                    terms.push((packing.gamma_index(t).expect("validated"), phi[(rho, rho)].re));
                    terms.push((packing.self_noise_index(rho), T::one()));
                }
                set.rows.push(LinearRow {
                    terms,
                    rhs: delta * p[(rho, rho)].re,
                });
            }
        }
    }

    set.fixed = (0..packing.sources)
        .map(|j| FixedEntry {
            row: rho,
            col: j,
            value: Complex::new(T::one(), T::zero()),
        })
        .collect();
    set.validate()?;
    Ok(set)
}
