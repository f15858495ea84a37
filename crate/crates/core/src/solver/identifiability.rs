use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScfaError};
use crate::linalg::{singular_values, CMat};
use crate::scalar::Real;

use super::variant::ProblemVariant;

/// Outcome of the parameter-counting checks for one problem size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identifiability {
    /// Equations ≥ unknowns.
    pub first_condition: bool,
    /// At least `r²` fixed entries.
    pub second_condition: bool,
    pub equations: i64,
    pub unknowns: i64,
    /// `equations − unknowns`.
    pub margin: i64,
}

/// Unknown count of the first condition for the given model flags.
pub fn unknown_count(mics: usize, sources: usize, frames: usize, estimate_gamma: bool, shared_self_noise: bool) -> i64 {
    let (m, r, b) = (mics as i64, sources as i64, frames as i64);
    let base = m * r + b * r - r;
    let noise = if shared_self_noise { 1 } else { m };
    let gamma = if estimate_gamma { b } else { 0 };
    base + noise + gamma
}

/// `|B_β| · M(M+1)/2`.
pub fn equation_count(mics: usize, frames: usize) -> i64 {
    let (m, b) = (mics as i64, frames as i64);
    b * m * (m + 1) / 2
}

pub fn check_identifiability(mics: usize, sources: usize, frames: usize, variant: &ProblemVariant) -> Identifiability {
    let equations = equation_count(mics, frames);
    let unknowns = unknown_count(mics, sources, frames, variant.estimate_gamma, variant.shared_self_noise);
    let (r, b) = (sources as i64, frames as i64);
    Identifiability {
        first_condition: equations >= unknowns,
        second_condition: r + b * (r * r - r) / 2 >= r * r,
        equations,
        unknowns,
        margin: equations - unknowns,
    }
}

/// Smallest microphone count meeting the first condition.
pub fn minimum_mics(sources: usize, frames: usize, estimate_gamma: bool, shared_self_noise: bool) -> usize {
    (1..)
        .find(|&m| equation_count(m, frames) >= unknown_count(m, sources, frames, estimate_gamma, shared_self_noise))
        .expect("equations grow quadratically in M")
}

/// Largest `k` such that every `k`-column subset has full column rank.
pub fn kruskal_rank<T: Real>(matrix: &CMat<T>) -> Result<usize> {
    let n = matrix.cols();
    if n > 8 {
        return Err(ScfaError::Regime(format!(
            "Kruskal rank is computed by exhaustive search for at most 8 columns, got {n}"
        )));
    }
    let full_rank = |cols: &[usize]| -> Result<bool> {
        let sub = CMat::from_fn(matrix.rows(), cols.len(), |i, j| matrix[(i, cols[j])]);
        let sv = singular_values(&sub)?;
        let largest = sv.first().copied().unwrap_or(T::zero());
        if !(largest > T::zero()) {
            return Ok(false);
        }
        let threshold = T::lit(1e-10) * largest;
        Ok(sv.iter().filter(|&&s| s > threshold).count() == cols.len())
    };
    let mut rank = 0;
    for k in 1..=n.min(matrix.rows()) {
        for subset in (0..n).combinations(k) {
            if !full_rank(&subset)? {
                return Ok(rank);
            }
        }
        rank = k;
    }
    Ok(rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    #[test]
    fn spec_examples() {
        let id = check_identifiability(4, 3, 6, &ProblemVariant::rev1());
        assert_eq!((id.equations, id.unknowns, id.margin), (60, 34, 26));
        assert!(id.first_condition && id.second_condition);
        let distinct = ProblemVariant {
            shared_self_noise: false,
            ..ProblemVariant::no_rev()
        };
        let id = check_identifiability(2, 2, 1, &distinct);
        assert_eq!((id.equations, id.unknowns), (3, 6));
        assert!(!id.first_condition);
        for v in [ProblemVariant::rev1(), ProblemVariant::no_rev(), distinct] {
            assert!(check_identifiability(3, 1, 1, &v).second_condition);
        }
        assert!(!check_identifiability(4, 3, 1, &ProblemVariant::no_rev()).second_condition);
    }

    #[test]
    fn kruskal_rank_cases() {
        let id = CMat::<f64>::from_fn(4, 3, |i, j| Complex::new(if i == j { 1.0 } else { 0.0 }, 0.0));
        assert_eq!(kruskal_rank(&id).unwrap(), 3);
        let zero_col = CMat::<f64>::from_fn(3, 3, |i, j| Complex::new(if j == 1 { 0.0 } else { (i + j + 1) as f64 }, 0.0));
        assert_eq!(kruskal_rank(&zero_col).unwrap(), 0);
        let twins = CMat::<f64>::from_fn(3, 3, |i, j| {
            let c = if j == 2 { 0 } else { j };
            Complex::new(((i + 1) * (c + 2)) as f64 + (i * i * c) as f64, 0.0)
        });
        assert_eq!(kruskal_rank(&twins).unwrap(), 1);
        assert!(matches!(kruskal_rank(&CMat::<f64>::zeros(2, 9)), Err(ScfaError::Regime(_))));
    }
}
