use itertools::Itertools;

use crate::error::{Result, ScfaError};
use crate::evaluation::hermitian_angle;
use crate::linalg::CMat;
use crate::scalar::Real;

/// Oracle column matching: the permutation `π` minimizing
/// `Σ_j ∠(reference_j, estimated_{π(j)})`, found exhaustively.
///
/// `result[j]` is the estimated column matched to reference column `j`.
pub fn resolve_permutation<T: Real>(estimated: &CMat<T>, reference: &CMat<T>) -> Result<Vec<usize>> {
    if estimated.rows() != reference.rows() || estimated.cols() != reference.cols() {
        return Err(ScfaError::Configuration(format!(
            "cannot match a {}×{} estimate to a {}×{} reference",
            estimated.rows(),
            estimated.cols(),
            reference.rows(),
            reference.cols()
        )));
    }
    let r = reference.cols();
    if r > 6 {
        return Err(ScfaError::Regime(format!("exhaustive matching supports at most 6 sources, got {r}")));
    }
    let mut cost = vec![vec![0.0f64; r]; r];
    for (j, row) in cost.iter_mut().enumerate() {
        let a = reference.column(j);
        for (i, c) in row.iter_mut().enumerate() {
            *c = hermitian_angle(&a, &estimated.column(i))?.as_f64();
        }
    }
    let best = (0..r)
        .permutations(r)
        .map(|p| {
            let total: f64 = p.iter().enumerate().map(|(j, &i)| cost[j][i]).sum();
            (total, p)
        })
        .fold(None::<(f64, Vec<usize>)>, |best, cand| match best {
            Some(b) if b.0 <= cand.0 => Some(b),
            _ => Some(cand),
        });
    Ok(best.map(|b| b.1).unwrap_or_default())
}

/// Columns of `m` reordered as `m[:, perm[j]]`.
pub fn permute_columns<T: Real>(m: &CMat<T>, perm: &[usize]) -> CMat<T> {
    CMat::from_fn(m.rows(), perm.len(), |i, j| m[(i, perm[j])])
}
