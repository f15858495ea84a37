use serde::{Deserialize, Serialize};

use crate::error::{Result, ScfaError};
use crate::scalar::Real;

use super::constraints::ConstraintSet;
use super::objective::SegmentObjective;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Projected-gradient norm below tolerance.
    Converged,
    IterationLimit,
    /// No sufficient decrease along either search direction.
    LineSearchFailed,
    /// Neither the objective nor the iterate moved for several iterations.
    Stalled,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::IterationLimit => "iteration-limit",
            Self::LineSearchFailed => "line-search-failed",
            Self::Stalled => "stalled",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Relative tolerance on the projected-gradient norm.
    pub gradient_tolerance: f64,
    pub feasibility_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            feasibility_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub max_violation: f64,
    /// `‖P(z − ∇f) − z‖` in the solver's internal scaling.
    pub pg_norm: f64,
    pub termination: Termination,
    /// First identifiability condition failed; the solve went ahead anyway.
    pub identifiability_warning: bool,
    pub data_loaded: bool,
    pub model_loaded: bool,
    pub fallback_columns: Vec<usize>,
}

/// Dense inverse-Hessian approximation.
struct Bfgs<T> {
    n: usize,
    h: Vec<T>,
    updated: bool,
}

impl<T: Real> Bfgs<T> {
    fn new(n: usize) -> Self {
        let mut b = Self {
            n,
            h: vec![T::zero(); n * n],
            updated: false,
        };
        b.reset();
        b
    }

    fn reset(&mut self) {
        self.h.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..self.n {
            self.h[i * self.n + i] = T::one();
        }
        self.updated = false;
    }

    /// `−H g` restricted to the free variables.
    fn direction(&self, g: &[T], free: &[bool]) -> Vec<T> {
        let n = self.n;
        (0..n)
            .map(|i| {
                if !free[i] {
                    return T::zero();
                }
                let row = &self.h[i * n..(i + 1) * n];
                -(0..n).filter(|&j| free[j]).fold(T::zero(), |acc, j| acc + row[j] * g[j])
            })
            .collect()
    }

    fn update(&mut self, s: &[T], y: &[T]) {
        let n = self.n;
        let sy = dot(s, y);
        let yy = dot(y, y);
        if !(sy > T::lit(1e-12) * dot(s, s).sqrt() * yy.sqrt()) {
            return;
        }
        if !self.updated {
            let scale = sy / yy;
            self.h.iter_mut().for_each(|v| *v = *v * scale);
            self.updated = true;
        }
        let rho = T::one() / sy;
        let hy: Vec<T> = (0..n)
            .map(|i| (0..n).fold(T::zero(), |acc, j| acc + self.h[i * n + j] * y[j]))
            .collect();
        let yhy = dot(y, &hy);
        let factor = (T::one() + rho * yhy) * rho;
        for i in 0..n {
            for j in 0..n {
                self.h[i * n + j] = self.h[i * n + j] - rho * (hy[i] * s[j] + s[i] * hy[j]) + factor * s[i] * s[j];
            }
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Optimizer output before the caller attaches identifiability or init details.
#[derive(Clone, Debug)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub report: SolveReport,
}

/// Projected quasi-Newton minimization of a segment objective over a
/// constraint set.
///
/// Works in variables `z = x / scale`. Each iteration tries a BFGS step on
/// the variables not held at a bound, projects it back onto the feasible set
/// and backtracks along the resulting feasible direction; when that fails the
/// curvature is discarded and a projected-gradient step is tried instead.
pub fn minimize<T: Real>(
    objective: &SegmentObjective<T>,
    constraints: &ConstraintSet<T>,
    x0: &[T],
    scale: &[T],
    options: &SolverOptions,
) -> Result<Minimum<T>> {
    let n = x0.len();
    if constraints.len() != n || scale.len() != n {
        return Err(ScfaError::Configuration("constraint set and start point differ in length".into()));
    }
    let set = constraints.scaled(scale);
    let to_x = |z: &[T]| -> Vec<T> { z.iter().zip(scale).map(|(a, s)| *a * *s).collect() };
    let eval = |z: &[T]| {
        objective.evaluate(&to_x(z)).map(|e| {
            let g: Vec<T> = e.gradient.iter().zip(scale).map(|(g, s)| *g * *s).collect();
            (e.value, g, e.model_loaded)
        })
    };
    let value = |z: &[T]| objective.value(&to_x(z));

    let mut x_start = x0.to_vec();
    constraints.repair(&mut x_start, None);
    let mut z: Vec<T> = x_start.iter().zip(scale).map(|(x, s)| *x / *s).collect();
    z = set.project(&z);
    let (mut f, mut g, mut model_loaded) = eval(&z).ok_or_else(|| {
        ScfaError::Initialization("objective is not finite at the starting point".into())
    })?;
    let initial_objective = f;
    let x_initial = to_x(&z);

    let armijo = T::lit(1e-4);
    let tol = T::lit(options.gradient_tolerance);
    let mut bfgs = Bfgs::new(n);
    let mut iterations = 0;
    let mut stall = 0;
    let mut last_step: Option<(Vec<T>, Vec<T>)> = None;
    let pg_norm = |z: &[T], g: &[T]| {
        let trial: Vec<T> = z.iter().zip(g).map(|(a, b)| *a - *b).collect();
        let p = set.project(&trial);
        norm(&p.iter().zip(z).map(|(a, b)| *a - *b).collect::<Vec<_>>())
    };
    let mut pg = pg_norm(&z, &g);
    let termination = loop {
        if pg <= tol * (T::one() + f.abs()) {
            break Termination::Converged;
        }
        if iterations >= options.max_iterations {
            break Termination::IterationLimit;
        }
        let free: Vec<bool> = (0..n)
            .map(|i| {
                let eps = T::lit(1e-10) * (T::one() + z[i].abs());
                let at_lower = z[i] - set.lower[i] <= eps && g[i] > T::zero();
                let at_upper = set.upper[i] - z[i] <= eps && g[i] < T::zero();
                !(at_lower || at_upper)
            })
            .collect();

        let search = |dir: &[T], slope: T| -> Option<(T, Vec<T>)> {
            if !(slope < T::zero()) || !slope.is_finite() {
                return None;
            }
            let mut t = T::one();
            for _ in 0..60 {
                let zt: Vec<T> = z.iter().zip(dir).map(|(a, d)| *a + t * *d).collect();
                let ft = value(&zt);
                if ft.is_finite() && ft <= f + armijo * t * slope {
                    return Some((ft, zt));
                }
                t = t * T::lit(0.5);
            }
            None
        };
        let feasible_direction = |step: &[T]| -> (Vec<T>, T) {
            let trial: Vec<T> = z.iter().zip(step).map(|(a, d)| *a + *d).collect();
            let p = set.project(&trial);
            let dir: Vec<T> = p.iter().zip(&z).map(|(a, b)| *a - *b).collect();
            let slope = dot(&g, &dir);
            (dir, slope)
        };

        let qn_step = bfgs.direction(&g, &free);
        let (dir, slope) = feasible_direction(&qn_step);
        let mut accepted = search(&dir, slope);
        if accepted.is_none() {
            bfgs.reset();
            let alpha = match &last_step {
                Some((s, y)) if dot(s, y) > T::zero() => dot(s, s) / dot(s, y),
                _ => T::one() / g.iter().fold(T::one(), |a, b| a.max(b.abs())),
            };
            let pg_step: Vec<T> = g.iter().map(|v| -alpha * *v).collect();
            let (dir, slope) = feasible_direction(&pg_step);
            accepted = search(&dir, slope);
        }
        let Some((f_new, z_new)) = accepted else {
            break Termination::LineSearchFailed;
        };
        let Some((f_eval, g_new, loaded)) = eval(&z_new) else {
            break Termination::LineSearchFailed;
        };
        model_loaded |= loaded;
        iterations += 1;
        let s: Vec<T> = z_new.iter().zip(&z).map(|(a, b)| *a - *b).collect();
        let y: Vec<T> = g_new.iter().zip(&g).map(|(a, b)| *a - *b).collect();
        bfgs.update(&s, &y);
        let small_move = norm(&s) <= T::lit(1e-14) * (T::one() + norm(&z));
        let small_change = (f - f_new).abs() <= T::lit(1e-15) * (T::one() + f.abs());
        stall = if small_move && small_change { stall + 1 } else { 0 };
        last_step = Some((s, y));
        z = z_new;
        f = f_eval;
        g = g_new;
        pg = pg_norm(&z, &g);
        if stall >= 3 {
            break Termination::Stalled;
        }
    };

    let mut x = to_x(&z);
    if constraints.max_violation(&x) > T::zero() {
        constraints.repair(&mut x, None);
    }
    let mut final_objective = objective.value(&x);
    if !(final_objective <= initial_objective) {
        x = x_initial;
        final_objective = initial_objective;
    }
    Ok(Minimum {
        report: SolveReport {
            initial_objective: initial_objective.as_f64(),
            final_objective: final_objective.as_f64(),
            iterations,
            max_violation: constraints.max_violation(&x).as_f64(),
            pg_norm: pg.as_f64(),
            termination,
            identifiability_warning: false,
            data_loaded: objective.data_loaded,
            model_loaded,
            fallback_columns: Vec::new(),
        },
        x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMat;
    use crate::solver::constraints::LinearRow;
    use crate::solver::packing::VariablePacking;
    use crate::solver::variant::ObjectiveKind;
    use num_complex::Complex;

    #[test]
    fn bfgs_update_satisfies_secant_condition() {
        let mut b = Bfgs::<f64>::new(3);
        let s = [0.3, -0.1, 0.2];
        let y = [0.5, 0.1, 0.4];
        b.update(&s, &y);
        let hy: Vec<f64> = (0..3).map(|i| (0..3).map(|j| b.h[i * 3 + j] * y[j]).sum()).collect();
        for i in 0..3 {
            assert!((hy[i] - s[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_tile_ls_fit_respects_row() {
        // 1 mic, 1 source, 1 frame: P = p + q, data 2, row p + q ≤ 1
        let packing = VariablePacking::new(1, 1, 1, 0, false, true);
        let data = vec![CMat::from_rows(1, 1, vec![Complex::new(2.0, 0.0)])];
        let obj = SegmentObjective::new(ObjectiveKind::Ls, packing, &data, &CMat::identity(1)).unwrap();
        let mut set = ConstraintSet::unconstrained(2);
        set.lower = vec![0.0, 0.0];
        set.rows.push(LinearRow {
            terms: vec![(0, 1.0), (1, 1.0)],
            rhs: 1.0,
        });
        let m = minimize(&obj, &set, &[0.1, 0.1], &[1.0, 1.0], &SolverOptions::default()).unwrap();
        assert!((m.x[0] + m.x[1] - 1.0f64).abs() < 1e-9);
        assert!(m.report.max_violation <= 1e-12);
        assert!((m.report.final_objective - 0.5).abs() < 1e-9);
        assert_eq!(m.report.termination, Termination::Converged);
    }

    #[test]
    fn non_finite_start_is_an_initialization_error() {
        let packing = VariablePacking::new(2, 1, 1, 0, false, true);
        let data = vec![CMat::identity(2)];
        let obj = SegmentObjective::new(ObjectiveKind::Ml, packing, &data, &CMat::identity(2)).unwrap();
        let set = ConstraintSet::unconstrained(packing.len());
        let err = minimize(&obj, &set, &vec![0.0; packing.len()], &vec![1.0; packing.len()], &SolverOptions::default());
        assert!(matches!(err, Err(ScfaError::Initialization(_))));
    }
}
