//! Scalar abstraction shared by every numeric path.
//!
//! Geometry, quadrature and section-space code is generic over [`Real`], which
//! is implemented for `f64` (the "double" precision profile) and for the
//! double-double type [`qd::Quad`] (the "high" profile, ~31 significant digits).

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::{BigInt, Sign};
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{Num, NumAssign};
pub use qd::Quad;

/// Complex scalar over a [`Real`] base.
pub type Cx<T> = Complex<T>;

pub trait Real:
    Num + NumAssign + Copy + Debug + PartialOrd + Neg<Output = Self> + Send + Sync + 'static
{
    /// Unit roundoff of the representation.
    const UNIT_ROUNDOFF: f64;
    /// Significant decimal digits carried.
    const DIGITS: u32;
    const NAME: &'static str;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin_cos(self) -> (Self, Self);
    fn pi() -> Self;

    fn to_quad(self) -> Quad;

    fn from_i64(x: i64) -> Self {
        Self::from_f64(x as f64)
    }

    fn from_usize(x: usize) -> Self {
        Self::from_f64(x as f64)
    }

    fn abs(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn is_finite(self) -> bool {
        self.to_f64().is_finite()
    }

    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { Self::one() / self } else { self };
        let mut e = n.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    fn sinh(self) -> Self {
        let e = self.exp();
        (e - Self::one() / e) / Self::from_f64(2.0)
    }

    fn cosh(self) -> Self {
        let e = self.exp();
        (e + Self::one() / e) / Self::from_f64(2.0)
    }

    /// `ln(1 + e^x)` without overflow for large `x`.
    fn ln_1p_exp(self) -> Self {
        if self > Self::zero() {
            self + (Self::one() + (-self).exp()).ln()
        } else {
            (Self::one() + self.exp()).ln()
        }
    }

    fn from_bigint(x: &BigInt) -> Self {
        let (sign, digits) = x.to_u32_digits();
        let radix = Self::from_f64(4294967296.0);
        let mut acc = Self::zero();
        for d in digits.iter().rev() {
            acc = acc * radix + Self::from_f64(*d as f64);
        }
        if sign == Sign::Minus {
            -acc
        } else {
            acc
        }
    }

    fn from_ratio(x: &BigRational) -> Self {
        Self::from_bigint(x.numer()) / Self::from_bigint(x.denom())
    }
}

impl Real for f64 {
    const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;
    const DIGITS: u32 = 15;
    const NAME: &'static str = "double";

    fn to_quad(self) -> Quad {
        Quad::from(self)
    }

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }
    fn pi() -> Self {
        std::f64::consts::PI
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Real for Quad {
    const UNIT_ROUNDOFF: f64 = f64::EPSILON * f64::EPSILON / 4.0;
    const DIGITS: u32 = 31;
    const NAME: &'static str = "high";

    fn to_quad(self) -> Quad {
        self
    }

    fn from_f64(x: f64) -> Self {
        Quad::from_f64(x)
    }
    fn to_f64(self) -> f64 {
        self.0 + self.1
    }
    fn sqrt(self) -> Self {
        Quad::sqrt(self)
    }
    fn exp(self) -> Self {
        Quad::exp(self)
    }
    fn ln(self) -> Self {
        Quad::ln(self)
    }
    fn sin_cos(self) -> (Self, Self) {
        quad_sin_cos(self)
    }
    fn pi() -> Self {
        Quad::PI
    }
    fn is_finite(self) -> bool {
        Quad::is_finite(self)
    }
}

/// Taylor evaluation after reduction by multiples of pi/2; accurate to a few
/// ulps of `Quad` for moderate arguments.
fn quad_sin_cos(x: Quad) -> (Quad, Quad) {
    let half_pi = Quad::PI / Quad::from_f64(2.0);
    let k = (x / half_pi).0.round();
    let r = x - half_pi * Quad::from_f64(k);
    let r2 = r * r;

    let mut sin = Quad::from_f64(0.0);
    let mut cos = Quad::from_f64(0.0);
    let mut term_s = r;
    let mut term_c = Quad::from_f64(1.0);
    for i in 0..30 {
        sin += term_s;
        cos += term_c;
        let a = (2 * i + 2) as f64;
        let b = (2 * i + 3) as f64;
        term_s = -term_s * r2 / Quad::from_f64(a * b);
        term_c = -term_c * r2 / Quad::from_f64((2 * i + 1) as f64 * a);
        if term_s.0.abs() < 1e-40 && term_c.0.abs() < 1e-40 {
            break;
        }
    }
    match (k as i64).rem_euclid(4) {
        0 => (sin, cos),
        1 => (cos, -sin),
        2 => (-sin, -cos),
        _ => (-cos, sin),
    }
}

/// Complex helpers that only need field operations.
pub fn cx<T: Real>(re: T, im: T) -> Cx<T> {
    Complex::new(re, im)
}

pub fn cx_real<T: Real>(re: T) -> Cx<T> {
    Complex::new(re, T::zero())
}

pub fn cx_from_f64<T: Real>(z: Complex<f64>) -> Cx<T> {
    Complex::new(T::from_f64(z.re), T::from_f64(z.im))
}

pub fn cx_to_f64<T: Real>(z: Cx<T>) -> Complex<f64> {
    Complex::new(z.re.to_f64(), z.im.to_f64())
}

pub fn abs2<T: Real>(z: Cx<T>) -> T {
    z.re * z.re + z.im * z.im
}

pub fn cabs<T: Real>(z: Cx<T>) -> T {
    abs2(z).sqrt()
}

/// `e^{i theta}`.
pub fn cis<T: Real>(theta: T) -> Cx<T> {
    let (s, c) = theta.sin_cos();
    Complex::new(c, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    #[test]
    fn quad_trig_matches_reference_digits() {
        // sin(1), cos(1) to 34 digits.
        let (s, c) = Quad::from_f64(1.0).sin_cos();
        let sin1 = Quad(0.8414709848078965, 1.776845092935536e-18);
        let cos1 = Quad(0.5403023058681398, -4.760954612604417e-17);
        assert!((s - sin1).abs().to_f64() < 1e-30);
        assert!((c - cos1).abs().to_f64() < 1e-30);
    }

    #[test]
    fn quad_trig_pythagorean_identity() {
        for i in -20..20 {
            let x = Quad::from_f64(i as f64 * 0.37) / Quad::from_f64(3.0);
            let (s, c) = x.sin_cos();
            let one = s * s + c * c - Quad::from_f64(1.0);
            assert!(one.abs().to_f64() < 1e-30, "x = {i}");
        }
    }

    #[test]
    fn powi_handles_negative_exponents() {
        let x = Quad::from_f64(3.0);
        let y = x.powi(-3) * Quad::from_f64(27.0) - Quad::from_f64(1.0);
        assert!(y.abs().to_f64() < 1e-31);
        assert_eq!(2.0f64.powi(10), 1024.0);
    }

    #[test]
    fn big_integers_convert_beyond_f64_mantissa() {
        // 3^70 has 111 bits; the double-double image must keep ~31 digits.
        let big = BigInt::from(3u32).pow(70);
        let q = Quad::from_bigint(&big);
        let third = q / Quad::from_f64(3.0).powi(70) - Quad::from_f64(1.0);
        assert!(third.abs().to_f64() < 1e-30);
        let r = BigRational::new(BigInt::from(1), BigInt::from(1320));
        assert!((f64::from_ratio(&r) - 1.0 / 1320.0).abs() < 1e-18);
    }

    #[test]
    fn ln_1p_exp_is_stable() {
        assert!((800.0f64.ln_1p_exp() - 800.0).abs() < 1e-12);
        assert!(((-800.0f64).ln_1p_exp()).abs() < 1e-300);
        assert!((0.0f64.ln_1p_exp() - 2f64.ln()).abs() < 1e-15);
    }
}
