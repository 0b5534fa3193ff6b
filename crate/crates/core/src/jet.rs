//! Truncated multivariate Taylor series ("jets").
//!
//! A jet stores the Taylor coefficients of a function of `nvars` complex
//! variables around a base point, up to total degree `order`. Kähler
//! quantities are obtained by treating `z_i` and `w_i = conj(z_i)` as
//! independent variables: the coefficient of `dz^a dw^b` times `a! b!` is the
//! mixed partial `∂^a ∂̄^b f`.
//!
//! Arithmetic is closed under `+ - *`, division, and composition with
//! univariate analytic functions (`ln`, `exp`, powers). Every operation keeps
//! track of the degree up to which the coefficients are valid.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex;
use num_traits::Zero;
use thiserror::Error;

use crate::real::{cabs, Cx, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("base value {re:e}{im:+e}i of {function} is not on the real axis")]
    ComplexBase {
        function: &'static str,
        re: f64,
        im: f64,
    },
    #[error("{function} is not defined at base value {value:e}")]
    Domain { function: &'static str, value: f64 },
}

/// Monomial bookkeeping shared by all jets with the same shape.
#[derive(Debug)]
pub struct JetLayout {
    nvars: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    degrees: Vec<usize>,
    lookup: HashMap<Vec<u8>, usize>,
    /// `(i, j, k)`: monomial `i` times monomial `j` is monomial `k`.
    products: Vec<(u32, u32, u32)>,
}

impl JetLayout {
    fn build(nvars: usize, order: usize) -> Self {
        let mut monomials = Vec::new();
        for degree in 0..=order {
            let mut current = vec![0u8; nvars];
            push_degree(&mut monomials, &mut current, 0, degree);
        }
        let degrees: Vec<usize> = monomials
            .iter()
            .map(|m| m.iter().map(|&e| e as usize).sum())
            .collect();
        let lookup: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let mut products = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                if degrees[i] + degrees[j] > order {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                products.push((i as u32, j as u32, lookup[&sum] as u32));
            }
        }
        Self {
            nvars,
            order,
            monomials,
            degrees,
            lookup,
            products,
        }
    }

    /// Process-wide cache; layouts are immutable once built.
    pub fn shared(nvars: usize, order: usize) -> Arc<JetLayout> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetLayout>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet layout cache poisoned");
        guard
            .entry((nvars, order))
            .or_insert_with(|| Arc::new(JetLayout::build(nvars, order)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.lookup.get(exponents).copied()
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, current: &mut Vec<u8>, var: usize, remaining: usize) {
    if var + 1 == current.len() {
        current[var] = remaining as u8;
        out.push(current.clone());
        current[var] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e as u8;
        push_degree(out, current, var + 1, remaining - e);
    }
    current[var] = 0;
}

#[derive(Debug, Clone)]
pub struct Jet<T> {
    layout: Arc<JetLayout>,
    /// Coefficients of total degree above this are not meaningful.
    order: usize,
    coeffs: Vec<Cx<T>>,
}

impl<T: Real> Jet<T> {
    pub fn constant(layout: &Arc<JetLayout>, value: Cx<T>) -> Self {
        let mut coeffs = vec![Complex::zero(); layout.len()];
        coeffs[0] = value;
        Self {
            layout: layout.clone(),
            order: layout.order,
            coeffs,
        }
    }

    pub fn real_constant(layout: &Arc<JetLayout>, value: T) -> Self {
        Self::constant(layout, Complex::new(value, T::zero()))
    }

    /// The coordinate function `base + d(var)`.
    pub fn variable(layout: &Arc<JetLayout>, var: usize, base: Cx<T>) -> Self {
        let mut jet = Self::constant(layout, base);
        if layout.order >= 1 {
            let mut e = vec![0u8; layout.nvars];
            e[var] = 1;
            jet.coeffs[layout.lookup[&e]] = Complex::new(T::one(), T::zero());
        }
        jet
    }

    pub fn layout(&self) -> &Arc<JetLayout> {
        &self.layout
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> Cx<T> {
        self.coeffs[0]
    }

    pub fn coefficient(&self, exponents: &[u8]) -> Cx<T> {
        let deg: usize = exponents.iter().map(|&e| e as usize).sum();
        if deg > self.order {
            return Complex::zero();
        }
        self.layout
            .index_of(exponents)
            .map(|i| self.coeffs[i])
            .unwrap_or_else(Complex::zero)
    }

    /// `∂^exponents f` at the base point (coefficient times multi-factorial).
    pub fn partial(&self, exponents: &[u8]) -> Cx<T> {
        let factor: f64 = exponents
            .iter()
            .map(|&e| (1..=e as u32).map(|k| k as f64).product::<f64>())
            .product();
        self.coefficient(exponents) * T::from_f64(factor)
    }

    /// Drops validity above `order`.
    pub fn truncate(mut self, order: usize) -> Self {
        self.order = self.order.min(order);
        for (c, &d) in self.coeffs.iter_mut().zip(&self.layout.degrees) {
            if d > self.order {
                *c = Complex::zero();
            }
        }
        self
    }

    pub fn scale(&self, s: Cx<T>) -> Self {
        Self {
            layout: self.layout.clone(),
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn scale_real(&self, s: T) -> Self {
        self.scale(Complex::new(s, T::zero()))
    }

    pub fn add_constant(&self, s: Cx<T>) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    /// Partial derivative in variable `var`; validity order drops by one.
    pub fn derivative(&self, var: usize) -> Self {
        let layout = &self.layout;
        let mut coeffs = vec![Complex::zero(); layout.len()];
        if self.order > 0 {
            let mut target = vec![0u8; layout.nvars];
            for (i, m) in layout.monomials.iter().enumerate() {
                let e = m[var];
                if e == 0 || layout.degrees[i] > self.order {
                    continue;
                }
                target.copy_from_slice(m);
                target[var] -= 1;
                coeffs[layout.lookup[&target]] = self.coeffs[i] * T::from_f64(e as f64);
            }
        }
        Self {
            layout: layout.clone(),
            order: self.order.saturating_sub(1),
            coeffs,
        }
    }

    fn product(&self, other: &Self) -> Self {
        let order = self.order.min(other.order);
        let layout = &self.layout;
        let mut coeffs = vec![Complex::zero(); layout.len()];
        for &(i, j, k) in &layout.products {
            let (i, j, k) = (i as usize, j as usize, k as usize);
            if layout.degrees[k] > order {
                continue;
            }
            let a = self.coeffs[i];
            let b = other.coeffs[j];
            if a.is_zero() || b.is_zero() {
                continue;
            }
            coeffs[k] += a * b;
        }
        Self {
            layout: layout.clone(),
            order,
            coeffs,
        }
    }

    /// Composition `f(self)` where `taylor[k] = f^{(k)}(a0) / k!` at the base
    /// value `a0` of `self`.
    pub fn compose(&self, taylor: &[Cx<T>]) -> Self {
        let delta = self.add_constant(-self.value());
        let n = taylor.len().min(self.order + 1);
        let mut acc = Self::constant(&self.layout, taylor[n - 1]).truncate(self.order);
        for k in (0..n - 1).rev() {
            acc = (&acc * &delta).add_constant(taylor[k]);
        }
        acc
    }

    fn real_base(&self, function: &'static str) -> Result<T, JetError> {
        let v = self.value();
        let scale = cabs(v).max(T::one());
        if v.im.abs() > scale * T::from_f64(1e4 * T::UNIT_ROUNDOFF) {
            return Err(JetError::ComplexBase {
                function,
                re: v.re.to_f64(),
                im: v.im.to_f64(),
            });
        }
        Ok(v.re)
    }

    /// Natural logarithm; the base value must be real and positive.
    pub fn ln(&self) -> Result<Self, JetError> {
        let a0 = self.real_base("ln")?;
        if !(a0 > T::zero()) {
            return Err(JetError::Domain {
                function: "ln",
                value: a0.to_f64(),
            });
        }
        let mut taylor = vec![Complex::new(a0.ln(), T::zero())];
        let inv = T::one() / a0;
        let mut pow = inv;
        for k in 1..=self.order {
            let sign = if k % 2 == 1 { T::one() } else { -T::one() };
            taylor.push(Complex::new(sign * pow / T::from_usize(k), T::zero()));
            pow *= inv;
        }
        Ok(self.compose(&taylor))
    }

    /// Exponential; the base value must be real.
    pub fn exp(&self) -> Result<Self, JetError> {
        let a0 = self.real_base("exp")?;
        let e = a0.exp();
        let mut taylor = Vec::with_capacity(self.order + 1);
        let mut fact = T::one();
        for k in 0..=self.order {
            if k > 0 {
                fact *= T::from_usize(k);
            }
            taylor.push(Complex::new(e / fact, T::zero()));
        }
        Ok(self.compose(&taylor))
    }

    /// `self^p` for real `p`; the base value must be real and positive unless
    /// `p` is a non-negative integer.
    pub fn powf(&self, p: f64) -> Result<Self, JetError> {
        let a0 = self.real_base("pow")?;
        let integral = p.fract() == 0.0 && p >= 0.0;
        if !integral && !(a0 > T::zero()) {
            return Err(JetError::Domain {
                function: "pow",
                value: a0.to_f64(),
            });
        }
        if a0 == T::zero() {
            // Only reachable for non-negative integer powers.
            let mut acc = Self::real_constant(&self.layout, T::one()).truncate(self.order);
            for _ in 0..p as u32 {
                acc = &acc * self;
            }
            return Ok(acc);
        }
        // Generalized binomial: (a0 + d)^p = a0^p sum C(p, k) (d / a0)^k
        let a0p = if integral {
            a0.powi(p as i32)
        } else {
            (T::from_f64(p) * a0.ln()).exp()
        };
        let inv = T::one() / a0;
        let mut taylor = Vec::with_capacity(self.order + 1);
        let mut binom = T::one();
        let mut pow = a0p;
        for k in 0..=self.order {
            if k > 0 {
                binom = binom * (T::from_f64(p) - T::from_usize(k - 1)) / T::from_usize(k);
                pow *= inv;
            }
            taylor.push(Complex::new(binom * pow, T::zero()));
        }
        Ok(self.compose(&taylor))
    }

    pub fn recip(&self) -> Result<Self, JetError> {
        let v = self.value();
        if v.is_zero() {
            return Err(JetError::Domain {
                function: "recip",
                value: 0.0,
            });
        }
        let inv = Complex::new(T::one(), T::zero()) / v;
        let mut taylor = Vec::with_capacity(self.order + 1);
        let mut pow = inv;
        for k in 0..=self.order {
            let sign = if k % 2 == 0 { T::one() } else { -T::one() };
            taylor.push(pow * sign);
            pow *= inv;
        }
        Ok(self.compose(&taylor))
    }

    pub fn div(&self, other: &Self) -> Result<Self, JetError> {
        Ok(self * &other.recip()?)
    }

    /// Largest coefficient modulus, for tolerance scaling in tests.
    pub fn max_abs(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, c| m.max(cabs(*c)))
    }
}

impl<'a, T: Real> Add for &'a Jet<T> {
    type Output = Jet<T>;
    fn add(self, rhs: Self) -> Jet<T> {
        let order = self.order.min(rhs.order);
        Jet {
            layout: self.layout.clone(),
            order,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
        .truncate(order)
    }
}

impl<'a, T: Real> Sub for &'a Jet<T> {
    type Output = Jet<T>;
    fn sub(self, rhs: Self) -> Jet<T> {
        let order = self.order.min(rhs.order);
        Jet {
            layout: self.layout.clone(),
            order,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
        .truncate(order)
    }
}

impl<'a, T: Real> Mul for &'a Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: Self) -> Jet<T> {
        self.product(rhs)
    }
}

impl<'a, T: Real> Neg for &'a Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        Jet {
            layout: self.layout.clone(),
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

/// Square matrix of jets (metric tensors, bundle weights).
pub type JetMatrix<T> = Vec<Vec<Jet<T>>>;

/// Determinant by Gaussian elimination without pivoting. Valid for matrices
/// whose leading principal minors have nonzero base values, e.g. Hermitian
/// positive-definite ones.
pub fn jet_determinant<T: Real>(m: &JetMatrix<T>) -> Result<Jet<T>, JetError> {
    let n = m.len();
    let mut a = m.clone();
    let mut det = Jet::real_constant(a[0][0].layout(), T::one());
    for k in 0..n {
        let pivot = a[k][k].clone();
        det = &det * &pivot;
        if k + 1 == n {
            break;
        }
        let inv = pivot.recip()?;
        for i in (k + 1)..n {
            let factor = &a[i][k] * &inv;
            for j in (k + 1)..n {
                let t = &factor * &a[k][j];
                a[i][j] = &a[i][j] - &t;
            }
        }
    }
    Ok(det)
}

/// Inverse by Gauss-Jordan elimination without pivoting (same validity
/// condition as [`jet_determinant`]).
pub fn jet_inverse<T: Real>(m: &JetMatrix<T>) -> Result<JetMatrix<T>, JetError> {
    let n = m.len();
    let layout = m[0][0].layout().clone();
    let order = m
        .iter()
        .flat_map(|row| row.iter().map(|j| j.order()))
        .min()
        .unwrap_or(0);
    let one = Jet::real_constant(&layout, T::one()).truncate(order);
    let zero = Jet::real_constant(&layout, T::zero()).truncate(order);
    let mut a = m.clone();
    let mut inv: JetMatrix<T> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { one.clone() } else { zero.clone() })
                .collect()
        })
        .collect();
    for k in 0..n {
        let p = a[k][k].recip()?;
        for j in 0..n {
            a[k][j] = &a[k][j] * &p;
            inv[k][j] = &inv[k][j] * &p;
        }
        for i in 0..n {
            if i == k {
                continue;
            }
            let f = a[i][k].clone();
            for j in 0..n {
                let t = &f * &a[k][j];
                a[i][j] = &a[i][j] - &t;
                let t = &f * &inv[k][j];
                inv[i][j] = &inv[i][j] - &t;
            }
        }
    }
    Ok(inv)
}

/// `tr(A B)` for square jet matrices.
pub fn jet_trace_product<T: Real>(a: &JetMatrix<T>, b: &JetMatrix<T>) -> Jet<T> {
    let n = a.len();
    let mut acc: Option<Jet<T>> = None;
    for i in 0..n {
        for j in 0..n {
            let t = &a[i][j] * &b[j][i];
            acc = Some(match acc {
                None => t,
                Some(s) => &s + &t,
            });
        }
    }
    acc.expect("non-empty matrix")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::{cx, Quad};

    fn layout(n: usize, p: usize) -> Arc<JetLayout> {
        JetLayout::shared(n, p)
    }

    #[test]
    fn monomial_counts_match_binomials() {
        // C(nvars + order, nvars)
        assert_eq!(layout(2, 8).len(), 45);
        assert_eq!(layout(4, 8).len(), 495);
        assert_eq!(layout(1, 5).len(), 6);
    }

    #[test]
    fn univariate_log_matches_series() {
        // ln(1 + x) around x = 0.5
        let l = layout(1, 6);
        let x = Jet::<f64>::variable(&l, 0, cx(0.5, 0.0));
        let f = x.add_constant(cx(1.0, 0.0)).ln().unwrap();
        // k-th derivative of ln(1+x) is (-1)^{k+1} (k-1)! / (1+x)^k
        for k in 1..=6u8 {
            let want = (if k % 2 == 1 { 1.0 } else { -1.0 })
                * (1..k as u32).map(|v| v as f64).product::<f64>()
                / 1.5f64.powi(k as i32);
            let got = f.partial(&[k]).re;
            assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "k={k}");
        }
    }

    #[test]
    fn mixed_partials_of_fubini_study_potential() {
        // φ = ln(1 + z w) at z = 1, w = 1: ∂∂̄φ = 1/(1+t)^2 = 1/4.
        let l = layout(2, 4);
        let z = Jet::<Quad>::variable(&l, 0, cx(Quad::from_f64(1.0), Quad::from_f64(0.0)));
        let w = Jet::<Quad>::variable(&l, 1, cx(Quad::from_f64(1.0), Quad::from_f64(0.0)));
        let phi = (&z * &w)
            .add_constant(cx(Quad::from_f64(1.0), Quad::from_f64(0.0)))
            .ln()
            .unwrap();
        let g = phi.partial(&[1, 1]);
        assert!((g.re - Quad::from_f64(0.25)).abs().to_f64() < 1e-31);
        // ∂^2∂̄^2 φ = -(2 - 4t + ...)... check against the closed form
        // d/dt-chain: ∂∂̄ (1+t)^{-2} at t = 1 with ∂ = w d/dt, ∂̄ = z d/dt:
        // ∂_z ∂_w [(1+zw)^{-2}] = -2(1+t)^{-3} + 6 t (1+t)^{-4} = -1/4 + 6/16 = 1/8
        let g22 = phi.partial(&[2, 2]);
        assert!((g22.re - Quad::from_f64(0.125)).abs().to_f64() < 1e-30);
    }

    #[test]
    fn determinant_and_inverse_agree_on_constant_matrix() {
        let l = layout(2, 2);
        let c = |v: f64| Jet::<f64>::real_constant(&l, v);
        let m = vec![vec![c(2.0), c(1.0)], vec![c(1.0), c(3.0)]];
        let det = jet_determinant(&m).unwrap();
        assert!((det.value().re - 5.0).abs() < 1e-14);
        let inv = jet_inverse(&m).unwrap();
        assert!((inv[0][0].value().re - 0.6).abs() < 1e-14);
        assert!((inv[0][1].value().re + 0.2).abs() < 1e-14);
    }

    #[test]
    fn division_inverts_multiplication() {
        let l = layout(2, 5);
        let x = Jet::<f64>::variable(&l, 0, cx(0.3, 0.1));
        let y = Jet::<f64>::variable(&l, 1, cx(0.7, -0.2));
        let a = (&x * &y).add_constant(cx(2.0, 0.0));
        let b = (&x + &y).add_constant(cx(1.5, 0.0));
        let q = a.div(&b).unwrap();
        let back = &q * &b;
        assert!((&back - &a).max_abs() < 1e-12);
    }

    #[test]
    fn powf_matches_repeated_products() {
        let l = layout(2, 4);
        let x = Jet::<f64>::variable(&l, 0, cx(0.4, 0.0));
        let y = Jet::<f64>::variable(&l, 1, cx(0.4, 0.0));
        let t = (&x * &y).add_constant(cx(1.0, 0.0));
        let cube = &(&t * &t) * &t;
        assert!((&t.powf(3.0).unwrap() - &cube).max_abs() < 1e-13);
        let inv3 = t.powf(-3.0).unwrap();
        assert!((&(&inv3 * &cube) - &Jet::real_constant(&l, 1.0).truncate(4)).max_abs() < 1e-12);
    }

    #[test]
    fn derivative_lowers_order() {
        let l = layout(2, 3);
        let x = Jet::<f64>::variable(&l, 0, cx(1.0, 0.0));
        let cube = &(&x * &x) * &x;
        let d = cube.derivative(0);
        assert_eq!(d.order(), 2);
        assert!((d.value().re - 3.0).abs() < 1e-15);
        assert!((d.partial(&[1, 0]).re - 6.0).abs() < 1e-15);
    }
}
