//! Dense complex matrices and the Hermitian kernels the estimators rely on.
//!
//! Orders are small (M ≤ 16), so everything is row-major `Vec` storage with
//! straightforward loops. Eigen-decomposition uses cyclic complex Jacobi
//! rotations, which is accurate to working precision for Hermitian input and
//! returns exactly unitary eigenvectors.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;

use crate::error::{Result, ScfaError};
use crate::scalar::Real;

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

/// Hermitian matrices share the dense representation; Hermitian-ness is a
/// property checked by the routines that require it.
pub type HermitianMatrix<T> = CMat<T>;

impl<T: Real> CMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex::new(T::one(), T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self { rows, cols, data }
    }

    pub fn from_real_diag(diag: &[T]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex::new(diag[i], T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
    }

    /// Column vector `n × 1`.
    pub fn column_vector(v: &[Complex<T>]) -> Self {
        Self::from_rows(v.len(), 1, v.to_vec())
    }

    /// Outer product `a bᴴ`.
    pub fn outer(a: &[Complex<T>], b: &[Complex<T>]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[Complex<T>]) {
        for (i, x) in v.iter().enumerate() {
            self[(i, j)] = *x;
        }
    }

    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_complex(&self, s: Complex<T>) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| f(*z)).collect(),
        }
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, other: &Self, s: T) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x = *x + *y * s;
        }
    }

    /// `self += s · a aᴴ`.
    pub fn add_outer(&mut self, a: &[Complex<T>], s: T) {
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = a[i] * a[j].conj() * s;
                self[(i, j)] = self[(i, j)] + v;
            }
        }
    }

    pub fn add_to_diagonal(&mut self, values: impl Fn(usize) -> T) {
        for i in 0..self.rows.min(self.cols) {
            let v = values(i);
            self[(i, i)].re = self[(i, i)].re + v;
        }
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
    }

    pub fn real_trace(&self) -> T {
        self.trace().re
    }

    pub fn diag_real(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)].re).collect()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .map(|z| z.norm_sqr())
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest `|a_ij − conj(a_ji)|`.
    pub fn hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.is_square() && self.hermitian_defect() <= tol
    }

    /// `(A + Aᴴ)/2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * half
        })
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + *a * *b)
            })
            .collect()
    }

    /// `trace(self · other)` without forming the product.
    pub fn trace_of_product(&self, other: &Self) -> Complex<T> {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc = acc + self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    /// Quadratic form `aᴴ self a` (real part).
    pub fn quad_form(&self, a: &[Complex<T>]) -> T {
        inner(a, &self.mul_vec(a)).re
    }
}

impl<T> Index<(usize, usize)> for CMat<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &CMat<T> {
    type Output = CMat<T>;
    fn mul(self, rhs: &CMat<T>) -> CMat<T> {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] = out[(i, j)] + a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl<T: Real> Add for &CMat<T> {
    type Output = CMat<T>;
    fn add(self, rhs: &CMat<T>) -> CMat<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &CMat<T> {
    type Output = CMat<T>;
    fn sub(self, rhs: &CMat<T>) -> CMat<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// `aᴴ b`.
pub fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * *y)
}

pub fn norm2<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).fold(T::zero(), |x, y| x + y).sqrt()
}

/// Lower-triangular Cholesky factor `L` with `L Lᴴ = P`.
///
/// A pivot must exceed `1e-12 · trace(P)`; anything smaller is reported as a
/// decomposition error naming the pivot index.
pub fn cholesky_factor<T: Real>(p: &HermitianMatrix<T>) -> Result<CMat<T>> {
    check_square_finite(p)?;
    let n = p.rows();
    let threshold = T::lit(1e-12) * p.real_trace().abs();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = p[(j, j)].re;
        for k in 0..j {
            d = d - l[(j, k)].norm_sqr();
        }
        if !(d > threshold) || d <= T::zero() {
            return Err(ScfaError::Decomposition {
                pivot: j,
                value: d.as_f64(),
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex::new(djj, T::zero());
        for i in (j + 1)..n {
            let mut s = p[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn forward_substitute<T: Real>(l: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s = s - l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `Lᴴ X = B` for lower-triangular `L`.
pub fn backward_substitute_adjoint<T: Real>(l: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s = s - l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].conj();
        }
    }
    x
}

/// `L⁻¹ P L⁻ᴴ` for a Cholesky factor `L`.
pub fn whiten<T: Real>(l: &CMat<T>, p: &CMat<T>) -> CMat<T> {
    let left = forward_substitute(l, p); // L⁻¹ P
    let right = forward_substitute(l, &left.adjoint()); // L⁻¹ (L⁻¹ P)ᴴ = L⁻¹ P L⁻ᴴ (P Hermitian)
    right.hermitian_part()
}

/// Returns `(log|P|, P⁻¹ X)` using a Cholesky factorization.
pub fn logdet_and_inverse_apply<T: Real>(p: &HermitianMatrix<T>, x: &CMat<T>) -> Result<(T, CMat<T>)> {
    let l = cholesky_factor(p)?;
    let logdet = logdet_from_cholesky(&l);
    let y = forward_substitute(&l, x);
    Ok((logdet, backward_substitute_adjoint(&l, &y)))
}

pub fn logdet_from_cholesky<T: Real>(l: &CMat<T>) -> T {
    (0..l.rows())
        .map(|i| l[(i, i)].re.ln())
        .fold(T::zero(), |a, b| a + b)
        * T::lit(2.0)
}

/// Inverse of a positive-definite Hermitian matrix.
pub fn hermitian_inverse<T: Real>(p: &HermitianMatrix<T>) -> Result<CMat<T>> {
    let (_, inv) = logdet_and_inverse_apply(p, &CMat::identity(p.rows()))?;
    Ok(inv.hermitian_part())
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEig<T> {
    /// Eigenvalues in descending order.
    pub values: Vec<T>,
    /// Unitary matrix whose columns are the matching eigenvectors.
    pub vectors: CMat<T>,
}

impl<T: Real> HermitianEig<T> {
    pub fn vector(&self, i: usize) -> Vec<Complex<T>> {
        self.vectors.column(i)
    }

    /// Rebuilds `V diag(f(λ)) Vᴴ`.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> CMat<T> {
        let n = self.vectors.rows();
        let mut out = CMat::zeros(n, n);
        for (i, &l) in self.values.iter().enumerate() {
            out.add_outer(&self.vectors.column(i), f(l));
        }
        out.hermitian_part()
    }
}

/// Eigenvalues (descending) and unitary eigenvectors of a Hermitian matrix.
pub fn hermitian_eig<T: Real>(p: &HermitianMatrix<T>) -> Result<HermitianEig<T>> {
    check_square_finite(p)?;
    let n = p.rows();
    let mut a = p.hermitian_part();
    let mut v = CMat::identity(n);
    let scale = a.frobenius_norm();
    if n > 1 && scale > T::zero() {
        let eps = T::epsilon();
        for _sweep in 0..100 {
            let mut off = T::zero();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        off = off + a[(i, j)].norm_sqr();
                    }
                }
            }
            if off.sqrt() <= eps * eps.sqrt() * scale {
                break;
            }
            for p_ in 0..n - 1 {
                for q in (p_ + 1)..n {
                    jacobi_rotate(&mut a, &mut v, p_, q);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&x, &y| diag[y].partial_cmp(&diag[x]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(HermitianEig { values, vectors })
}

/// One complex Jacobi rotation annihilating `a[p,q]`.
fn jacobi_rotate<T: Real>(a: &mut CMat<T>, v: &mut CMat<T>, p: usize, q: usize) {
    let apq = a[(p, q)];
    let g = apq.norm();
    if g == T::zero() {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let phase = apq / g; // e^{iφ}
    let tau = (aqq - app) / (T::lit(2.0) * g);
    let t = if tau >= T::zero() {
        T::one() / (tau + (T::one() + tau * tau).sqrt())
    } else {
        -T::one() / (-tau + (T::one() + tau * tau).sqrt())
    };
    let c = T::one() / (T::one() + t * t).sqrt();
    let s = t * c;
    // G = diag(1, e^{-iφ}) · [[c, s], [-s, c]]
    let e = phase.conj();
    let g00 = Complex::new(c, T::zero());
    let g01 = Complex::new(s, T::zero());
    let g10 = e * (-s);
    let g11 = e * c;
    let n = a.rows();
    // A ← A G
    for i in 0..n {
        let aip = a[(i, p)];
        let aiq = a[(i, q)];
        a[(i, p)] = aip * g00 + aiq * g10;
        a[(i, q)] = aip * g01 + aiq * g11;
    }
    // A ← Gᴴ A
    for j in 0..n {
        let apj = a[(p, j)];
        let aqj = a[(q, j)];
        a[(p, j)] = g00.conj() * apj + g10.conj() * aqj;
        a[(q, j)] = g01.conj() * apj + g11.conj() * aqj;
    }
    a[(p, q)] = Complex::new(T::zero(), T::zero());
    a[(q, p)] = Complex::new(T::zero(), T::zero());
    a[(p, p)].im = T::zero();
    a[(q, q)].im = T::zero();
    for i in 0..n {
        let vip = v[(i, p)];
        let viq = v[(i, q)];
        v[(i, p)] = vip * g00 + viq * g10;
        v[(i, q)] = vip * g01 + viq * g11;
    }
}

/// Symmetric (eigen-based) inverse square root of a positive-definite matrix.
pub fn inverse_sqrt<T: Real>(p: &HermitianMatrix<T>) -> Result<CMat<T>> {
    let eig = hermitian_eig(p)?;
    let floor = T::lit(1e-12) * p.real_trace().abs();
    if let Some((i, &l)) = eig.values.iter().enumerate().find(|(_, &l)| !(l > floor)) {
        return Err(ScfaError::Decomposition {
            pivot: i,
            value: l.as_f64(),
        });
    }
    Ok(eig.reconstruct_with(|l| T::one() / l.sqrt()))
}

/// Smallest eigenvalue.
pub fn min_eigenvalue<T: Real>(p: &HermitianMatrix<T>) -> Result<T> {
    Ok(*hermitian_eig(p)?.values.last().unwrap_or(&T::zero()))
}

/// Singular values (descending) via the eigenvalues of `Bᴴ B`.
pub fn singular_values<T: Real>(b: &CMat<T>) -> Result<Vec<T>> {
    let gram = &b.adjoint() * b;
    Ok(hermitian_eig(&gram)?
        .values
        .into_iter()
        .map(|l| l.max(T::zero()).sqrt())
        .collect())
}

fn check_square_finite<T: Real>(p: &CMat<T>) -> Result<()> {
    if !p.is_square() {
        return Err(ScfaError::InvalidParameter(format!(
            "expected a square matrix, got {}×{}",
            p.rows(),
            p.cols()
        )));
    }
    if !p.is_finite() {
        return Err(ScfaError::Numeric("matrix has non-finite entries".into()));
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn cholesky_of_identity_and_diagonal() {
        let i3 = CMat::<f64>::identity(3);
        assert_eq!(cholesky_factor(&i3).unwrap(), i3);
        let d = CMat::from_real_diag(&[4.0, 9.0]);
        let l = cholesky_factor(&d).unwrap();
        assert_eq!(l, CMat::from_real_diag(&[2.0, 3.0]));
    }

    #[test]
    fn cholesky_reconstructs_random_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = random_pd(&mut rng, 4, 0.1);
            let l = cholesky_factor(&p).unwrap();
            let r = &(&l * &l.adjoint()) - &p;
            assert!(r.frobenius_norm() <= 1e-10 * p.frobenius_norm());
            for i in 0..4 {
                for j in (i + 1)..4 {
                    assert_eq!(l[(i, j)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn cholesky_names_offending_pivot() {
        let mut p = CMat::<f64>::from_real_diag(&[1.0, 1.0, 1.0]);
        p[(2, 2)] = c(-1.0, 0.0);
        match cholesky_factor(&p) {
            Err(ScfaError::Decomposition { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("unexpected {other:?}"),
        }
        let rank1 = CMat::outer(&[c(1.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(
            cholesky_factor(&rank1),
            Err(ScfaError::Decomposition { pivot: 1, .. })
        ));
    }

    #[test]
    fn eig_of_simple_matrices() {
        let e = hermitian_eig(&CMat::<f64>::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let e = hermitian_eig(&CMat::from_real_diag(&[1.0, 5.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![5.0, 3.0, 1.0]);
        // permuted identity columns
        assert!((e.vectors[(1, 0)].norm() - 1.0f64).abs() < 1e-15);
        assert!((e.vectors[(2, 1)].norm() - 1.0f64).abs() < 1e-15);
        assert!((e.vectors[(0, 2)].norm() - 1.0f64).abs() < 1e-15);
    }

    #[test]
    fn eig_rank_one_update_closed_form() {
        let a = vec![c(1.0, 0.0), c(0.3, -0.4), c(-0.7, 0.2), c(0.1, 0.9)];
        let (p, gamma) = (2.5, 0.3);
        let mut m = CMat::identity(4).scale(gamma);
        m.add_outer(&a, p);
        let e = hermitian_eig(&m).unwrap();
        let na2 = norm2(&a).powi(2);
        assert!((e.values[0] - (p * na2 + gamma)).abs() < 1e-12);
        for &l in &e.values[1..] {
            assert!((l - gamma).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_residual_and_unitarity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 4, 8, 16] {
            let b = random_matrix(&mut rng, n, n);
            let p = (&b + &b.adjoint()).scale(0.5);
            let e = hermitian_eig(&p).unwrap();
            let lam = CMat::from_real_diag(&e.values);
            let resid = &(&p * &e.vectors) - &(&e.vectors * &lam);
            assert!(resid.frobenius_norm() <= 1e-9 * p.frobenius_norm().max(1e-300));
            let vhv = &e.vectors.adjoint() * &e.vectors;
            assert!((&vhv - &CMat::identity(n)).frobenius_norm() <= 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            let tr: f64 = e.values.iter().sum();
            assert!((tr - p.real_trace()).abs() <= 1e-10 * p.frobenius_norm() * n as f64);
        }
    }

    #[test]
    fn logdet_and_solve() {
        let i2 = CMat::<f64>::identity(2);
        let (ld, x) = logdet_and_inverse_apply(&i2, &i2).unwrap();
        assert_eq!(ld, 0.0);
        assert_eq!(x, i2);
        let e = std::f64::consts::E;
        let (ld, x) = logdet_and_inverse_apply(&CMat::from_real_diag(&[e, e]), &i2).unwrap();
        assert!((ld - 2.0).abs() < 1e-15);
        assert!((&x - &i2.scale(1.0 / e)).frobenius_norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = random_pd(&mut rng, 5, 0.2);
            let rhs = random_matrix(&mut rng, 5, 3);
            let (ld, sol) = logdet_and_inverse_apply(&p, &rhs).unwrap();
            let back = &p * &sol;
            assert!((&back - &rhs).frobenius_norm() <= 1e-9 * rhs.frobenius_norm());
            let eig_ld: f64 = hermitian_eig(&p).unwrap().values.iter().map(|l| l.ln()).sum();
            assert!((ld - eig_ld).abs() <= 1e-8 * eig_ld.abs().max(1.0));
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut p = CMat::<f64>::identity(2);
        p[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(hermitian_eig(&p), Err(ScfaError::Numeric(_))));
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_pd(&mut rng, 4, 0.5);
        let w = inverse_sqrt(&p).unwrap();
        let prod = &(&w * &w) * &p;
        assert!((&prod - &CMat::identity(4)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn f32_path_works() {
        let p = CMat::<f32>::from_real_diag(&[4.0, 9.0]);
        let l = cholesky_factor(&p).unwrap();
        assert!((l[(1, 1)].re - 3.0).abs() < 1e-6);
        let e = hermitian_eig(&p).unwrap();
        assert_eq!(e.values, vec![9.0, 4.0]);
    }
}
