//! Small dense complex linear algebra over any [`Real`].
//!
//! The matrices handled here are at most a few hundred rows (Gram matrices of
//! section bases, r×r density matrices), so plain row-major storage with
//! textbook algorithms is enough: Cholesky with triangular solves, and a
//! cyclic Jacobi eigen-solver for Hermitian matrices.

use std::ops::{Add, Index, IndexMut, Mul};

use num_complex::Complex;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::real::{abs2, cabs, Cx, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Cx<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Cx<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = Complex::new(*v, T::zero());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> Cx<T> {
        (0..self.rows.min(self.cols)).fold(Complex::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn map<U: Real>(&self, f: impl Fn(Cx<T>) -> Cx<U>) -> CMatrix<U> {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| f(*z)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(cabs(*z)))
    }

    /// Max entry modulus of `self - self^*`.
    pub fn hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max(cabs(self[(i, j)] - self[(j, i)].conj()));
            }
        }
        worst
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `self^b` by repeated multiplication (square matrices only).
    pub fn power(&self, b: u32) -> Result<Self, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let mut acc = Self::identity(self.rows);
        for _ in 0..b {
            acc = acc.matmul(self)?;
        }
        Ok(acc)
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Cx<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Cx<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cx<T> {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Add for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn add(self, rhs: Self) -> CMatrix<T> {
        CMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + rhs[(i, j)])
    }
}

impl<T: Real> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn mul(self, rhs: Self) -> CMatrix<T> {
        self.matmul(rhs).expect("matrix dimensions agree")
    }
}

/// Lower-triangular factor `L` with `A = L L^*`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    lower: CMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(a: &CMatrix<T>) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare {
                rows: a.rows,
                cols: a.cols,
            });
        }
        let n = a.rows;
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)].re;
            for k in 0..j {
                diag -= abs2(l[(j, k)]);
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(LinalgError::NotPositiveDefinite {
                    pivot: j,
                    value: diag.to_f64(),
                });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = Complex::new(ljj, T::zero());
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &CMatrix<T> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    /// Solves `L X = B`.
    pub fn solve_lower(&self, b: &CMatrix<T>) -> CMatrix<T> {
        let n = self.dim();
        let mut x = b.clone();
        for c in 0..b.cols {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.lower[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lower[(i, i)].re;
            }
        }
        x
    }

    /// Solves `L^* X = B`.
    pub fn solve_upper(&self, b: &CMatrix<T>) -> CMatrix<T> {
        let n = self.dim();
        let mut x = b.clone();
        for c in 0..b.cols {
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.lower[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = s / self.lower[(i, i)].re;
            }
        }
        x
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &CMatrix<T>) -> CMatrix<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `L^{-*}`, whose columns are coefficient vectors of an orthonormal basis
    /// when `A` is a Gram matrix.
    pub fn inverse_upper(&self) -> CMatrix<T> {
        self.solve_upper(&CMatrix::identity(self.dim()))
    }

    pub fn reconstruct(&self) -> CMatrix<T> {
        &self.lower * &self.lower.conj_transpose()
    }

    /// `(max L_ii / min L_ii)^2`, a cheap lower bound on the 2-norm condition
    /// number of `A`.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let v = self.lower[(i, i)].re.to_f64();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (hi / lo).powi(2)
    }
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant<T: Real>(a: &CMatrix<T>) -> Result<Cx<T>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut det = Complex::new(T::one(), T::zero());
    for k in 0..n {
        let p = (k..n)
            .max_by(|&x, &y| {
                abs2(m[(x, k)])
                    .partial_cmp(&abs2(m[(y, k)]))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty range");
        if m[(p, k)].is_zero() {
            return Ok(Complex::zero());
        }
        if p != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = tmp;
            }
            det = -det;
        }
        let pivot = m[(k, k)];
        det *= pivot;
        for i in (k + 1)..n {
            let f = m[(i, k)] / pivot;
            for j in k..n {
                let t = f * m[(k, j)];
                m[(i, j)] -= t;
            }
        }
    }
    Ok(det)
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T> {
    /// Sorted descending; ties keep their original diagonal order.
    pub values: Vec<T>,
    /// Columns are the eigenvectors matching `values`.
    pub vectors: CMatrix<T>,
}

const JACOBI_MAX_SWEEPS: usize = 60;

/// Cyclic complex Jacobi. Converges quadratically; deterministic given the
/// input bits.
pub fn hermitian_eigen<T: Real>(a: &CMatrix<T>) -> Result<HermitianEigen<T>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] = Complex::new(m[(i, i)].re, T::zero());
    }
    let mut v = CMatrix::<T>::identity(n);
    let eps = T::from_f64(T::UNIT_ROUNDOFF);

    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut off = T::zero();
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..n {
                let w = abs2(m[(i, j)]);
                total += w;
                if i != j {
                    off += w;
                }
            }
        }
        if off <= eps * eps * total || off.to_f64() == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let mag = cabs(apq);
                if mag.to_f64() == 0.0 {
                    continue;
                }
                let phase = apq / mag;
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let theta = (aqq - app) / (T::from_f64(2.0) * mag);
                let sign = if theta < T::zero() {
                    -T::one()
                } else {
                    T::one()
                };
                let t = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // U restricted to (p, q): [[c, s], [-conj(phase) s, conj(phase) c]]
                let ph = phase.conj();
                let u_pp = Complex::new(c, T::zero());
                let u_pq = Complex::new(s, T::zero());
                let u_qp = -ph * s;
                let u_qq = ph * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * u_pp + mkq * u_qp;
                    m[(k, q)] = mkp * u_pq + mkq * u_qq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = u_pp.conj() * mpk + u_qp.conj() * mqk;
                    m[(q, k)] = u_pq.conj() * mpk + u_qq.conj() * mqk;
                }
                m[(p, q)] = Complex::zero();
                m[(q, p)] = Complex::zero();
                m[(p, p)] = Complex::new(m[(p, p)].re, T::zero());
                m[(q, q)] = Complex::new(m[(q, q)].re, T::zero());
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * u_pp + vkq * u_qp;
                    v[(k, q)] = vkp * u_pq + vkq * u_qq;
                }
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[(j, j)]
            .re
            .partial_cmp(&m[(i, i)].re)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

pub fn hermitian_eigenvalues<T: Real>(a: &CMatrix<T>) -> Result<Vec<T>, LinalgError> {
    hermitian_eigen(a).map(|e| e.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Quad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> CMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(n, n, |_, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn cholesky_reconstructs_hpd_matrix() {
        let b = random_matrix(7, 1);
        let a = &(&b * &b.conj_transpose()) + &CMatrix::identity(7);
        let chol = Cholesky::factor(&a).unwrap();
        assert!(chol.reconstruct().sub(&a).max_abs() < 1e-13);
        let x = chol.solve(&CMatrix::identity(7));
        let should_be_id = &a * &x;
        assert!(should_be_id.sub(&CMatrix::identity(7)).max_abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = CMatrix::<f64>::diagonal(&[1.0, -2.0]);
        assert!(matches!(
            Cholesky::factor(&a),
            Err(LinalgError::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        // Unitary conjugation of a known diagonal.
        let q = {
            let b = random_matrix(6, 3);
            let h = &b + &b.conj_transpose();
            hermitian_eigen(&h).unwrap().vectors
        };
        let d = CMatrix::diagonal(&[5.0, 3.0, 3.0, 1.0, 0.0, -2.0]);
        let a = &(&q * &d) * &q.conj_transpose();
        let vals = hermitian_eigenvalues(&a).unwrap();
        for (got, want) in vals.iter().zip([5.0, 3.0, 3.0, 1.0, 0.0, -2.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn jacobi_vectors_diagonalize_in_quad() {
        let b =
            random_matrix(5, 9).map(|z| Complex::new(Quad::from_f64(z.re), Quad::from_f64(z.im)));
        let h = &b + &b.conj_transpose();
        let eig = hermitian_eigen(&h).unwrap();
        let v = &eig.vectors;
        let d = &(&v.conj_transpose() * &h) * v;
        let resid = d.sub(&CMatrix::diagonal(&eig.values)).max_abs();
        assert!(resid.to_f64() < 1e-28, "{resid:?}");
    }
}
