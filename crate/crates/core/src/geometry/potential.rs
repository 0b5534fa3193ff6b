use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{ChartDomain, ChartPoint, GeometryError};
use crate::jet::{Jet, JetError, JetLayout};
use crate::linalg::CMatrix;
use crate::real::{Cx, Real};

/// Highest jet order the potentials are trusted to deliver.
pub const MAX_JET_ORDER: usize = 8;

/// Support radius (in `t = |z|^2`) of the compactly supported bump.
const BUMP_RADIUS: f64 = 2.0;

/// Perturbation profiles added to the Fubini–Study potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `t / (1 + t)^3`, analytic and `U(n)`-invariant.
    P1,
    /// `Re(z_1) t / (1 + t)^3`, analytic, not invariant.
    P2,
    /// `exp(-1 / (1 - (t/2)^2))` for `t < 2`, zero beyond; smooth, not analytic.
    P3,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::P1 => "p1",
            Profile::P2 => "p2",
            Profile::P3 => "p3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p1" => Some(Profile::P1),
            "p2" => Some(Profile::P2),
            "p3" => Some(Profile::P3),
            _ => None,
        }
    }

    pub fn is_analytic(self) -> bool {
        !matches!(self, Profile::P3)
    }

    pub fn is_radial(self) -> bool {
        !matches!(self, Profile::P2)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `log(1 + |z|^2)`.
    FubiniStudy,
    /// `|z|^2`; a geometry probe with infinite volume.
    Flat,
    /// `log(1 + |z|^2) + ε P(z)`.
    PerturbedFubiniStudy { epsilon: f64, profile: Profile },
}

/// Local Kähler potential `φ` on the standard affine chart of `C^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct KahlerPotential {
    n: usize,
    kind: PotentialKind,
    /// Additive constant; never changes any curvature quantity.
    offset: f64,
}

impl KahlerPotential {
    pub fn new(n: usize, kind: PotentialKind) -> Self {
        assert!(n >= 1, "complex dimension must be positive");
        Self {
            n,
            kind,
            offset: 0.0,
        }
    }

    pub fn fubini_study(n: usize) -> Self {
        Self::new(n, PotentialKind::FubiniStudy)
    }

    pub fn flat(n: usize) -> Self {
        Self::new(n, PotentialKind::Flat)
    }

    pub fn perturbed(n: usize, epsilon: f64, profile: Profile) -> Self {
        Self::new(n, PotentialKind::PerturbedFubiniStudy { epsilon, profile })
    }

    /// `φ + c`.
    pub fn with_offset(mut self, c: f64) -> Self {
        self.offset = c;
        self
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn domain(&self) -> ChartDomain {
        ChartDomain::Affine
    }

    pub fn is_analytic(&self) -> bool {
        match self.kind {
            PotentialKind::PerturbedFubiniStudy { profile, .. } => profile.is_analytic(),
            _ => true,
        }
    }

    /// Whether `φ` depends on `|z|^2` only.
    pub fn is_radial(&self) -> bool {
        self.radial_metric().is_some()
    }

    pub fn radial_metric(&self) -> Option<RadialMetric> {
        match self.kind {
            PotentialKind::PerturbedFubiniStudy { profile, .. } if !profile.is_radial() => None,
            kind => Some(RadialMetric {
                n: self.n,
                kind,
                offset: self.offset,
            }),
        }
    }

    pub(crate) fn check_point<T: Real>(&self, x: &ChartPoint<T>) -> Result<(), GeometryError> {
        if x.dimension() != self.n {
            return Err(GeometryError::DimensionMismatch {
                expected: self.n,
                got: x.dimension(),
            });
        }
        if !self.domain().contains(x) {
            return Err(GeometryError::OutsideChart);
        }
        Ok(())
    }

    /// All mixed partials of `φ` at `x` up to total order `order`, as a jet in
    /// the `2n` variables `(z_1, …, z_n, z̄_1, …, z̄_n)`.
    pub fn jet<T: Real>(&self, x: &ChartPoint<T>, order: usize) -> Result<Jet<T>, GeometryError> {
        self.check_point(x)?;
        if order > MAX_JET_ORDER {
            return Err(GeometryError::JetUnavailable {
                requested: order,
                available: MAX_JET_ORDER,
            });
        }
        let vars = ChartVariables::new(x, order);
        Ok(self.jet_from(&vars)?)
    }

    pub(crate) fn jet_from<T: Real>(&self, vars: &ChartVariables<T>) -> Result<Jet<T>, JetError> {
        let t = vars.norm_sqr();
        let fs = || t.add_constant(real(T::one())).ln();
        let phi = match self.kind {
            PotentialKind::FubiniStudy => fs()?,
            PotentialKind::Flat => t.clone(),
            PotentialKind::PerturbedFubiniStudy { epsilon, profile } => {
                let p = match profile {
                    Profile::P1 => rational_profile(&t)?,
                    Profile::P2 => {
                        let re = (&vars.z[0] + &vars.w[0]).scale_real(T::from_f64(0.5));
                        &re * &rational_profile(&t)?
                    }
                    Profile::P3 => bump(&t)?,
                };
                &fs()? + &p.scale_real(T::from_f64(epsilon))
            }
        };
        Ok(phi.add_constant(real(T::from_f64(self.offset))))
    }

    /// Pointwise value `φ(x)`.
    pub fn value<T: Real>(&self, x: &ChartPoint<T>) -> T {
        let t = x.norm_sqr();
        let one = T::one();
        let fs = (one + t).ln();
        let phi = match self.kind {
            PotentialKind::FubiniStudy => fs,
            PotentialKind::Flat => t,
            PotentialKind::PerturbedFubiniStudy { epsilon, profile } => {
                let p = match profile {
                    Profile::P1 => t / (one + t).powi(3),
                    Profile::P2 => x.coord(0).re * t / (one + t).powi(3),
                    Profile::P3 => bump_value(t),
                };
                fs + T::from_f64(epsilon) * p
            }
        };
        phi + T::from_f64(self.offset)
    }
}

/// `φ` and `log det g` at one point, for integration weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureSample<T> {
    pub phi: T,
    pub ln_det_g: T,
}

impl KahlerPotential {
    /// `φ(x)` and `log det g(x)`, accurate far out in the chart.
    ///
    /// The Fubini–Study part is taken in closed form, `det g_FS = (1+t)^{-n-1}`
    /// and `g_FS^{-1} = (1+t)(I + z̄ zᵀ)`, so that only the perturbation goes
    /// through jets: `det g = det g_FS · det(I + g_FS^{-1} ε ∂∂̄P)`.
    pub fn measure_sample<T: Real>(
        &self,
        x: &ChartPoint<T>,
    ) -> Result<MeasureSample<T>, GeometryError> {
        self.check_point(x)?;
        let n = self.n;
        let t = x.norm_sqr();
        let l1 = (T::one() + t).ln();
        let phi = self.value(x);
        let (epsilon, profile) = match self.kind {
            PotentialKind::Flat => {
                return Ok(MeasureSample {
                    phi,
                    ln_det_g: T::zero(),
                })
            }
            PotentialKind::FubiniStudy => {
                return Ok(MeasureSample {
                    phi,
                    ln_det_g: -T::from_usize(n + 1) * l1,
                })
            }
            PotentialKind::PerturbedFubiniStudy { epsilon, profile } => (epsilon, profile),
        };
        let vars = ChartVariables::new(x, 2);
        let tj = vars.norm_sqr();
        let p = match profile {
            Profile::P1 => rational_profile(&tj)?,
            Profile::P2 => {
                let re = (&vars.z[0] + &vars.w[0]).scale_real(T::from_f64(0.5));
                &re * &rational_profile(&tj)?
            }
            Profile::P3 => bump(&tj)?,
        };
        let eps = T::from_f64(epsilon);
        let e = CMatrix::from_fn(n, n, |i, j| p.derivative(i).derivative(n + j).value() * eps);
        let one_t = T::one() + t;
        let fs_inv = CMatrix::from_fn(n, n, |i, j| {
            let delta = if i == j { T::one() } else { T::zero() };
            (x.coord(i).conj() * x.coord(j) + real(delta)) * one_t
        });
        let mut m = &fs_inv * &e;
        for i in 0..n {
            m[(i, i)] += real(T::one());
        }
        let det = match n {
            1 => m[(0, 0)],
            2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
            _ => crate::linalg::determinant(&m)?,
        };
        // For n <= 2 a positive determinant and trace certify positivity.
        let trace_g = (T::from_usize(n - 1) * one_t + T::one()) / (one_t * one_t) + e.trace().re;
        if !(det.re > T::zero()) || !(trace_g > T::zero()) {
            return Err(GeometryError::NonPositiveMetric {
                min_eigenvalue: det.re.min(trace_g).to_f64(),
            });
        }
        Ok(MeasureSample {
            phi,
            ln_det_g: det.re.ln() - T::from_usize(n + 1) * l1,
        })
    }
}

fn real<T: Real>(v: T) -> Cx<T> {
    Complex::new(v, T::zero())
}

/// `t (1 + t)^{-3}`.
fn rational_profile<T: Real>(t: &Jet<T>) -> Result<Jet<T>, JetError> {
    Ok(t * &t.add_constant(real(T::one())).powf(-3.0)?)
}

fn bump<T: Real>(t: &Jet<T>) -> Result<Jet<T>, JetError> {
    let radius = T::from_f64(BUMP_RADIUS);
    let t0 = t.value().re;
    let zero = Jet::real_constant(t.layout(), T::zero()).truncate(t.order());
    if !(t0 < radius) {
        return Ok(zero);
    }
    let s = t.scale_real(T::one() / radius);
    let u = (&s * &s).scale_real(-T::one()).add_constant(real(T::one()));
    let arg = u.recip()?.scale_real(-T::one());
    // Past this point every Taylor coefficient is below the representable range.
    if arg.value().re < T::from_f64(-700.0) {
        return Ok(zero);
    }
    arg.exp()
}

fn bump_value<T: Real>(t: T) -> T {
    let s = t / T::from_f64(BUMP_RADIUS);
    if !(s < T::one()) {
        return T::zero();
    }
    let arg = -T::one() / (T::one() - s * s);
    if arg < T::from_f64(-700.0) {
        T::zero()
    } else {
        arg.exp()
    }
}

/// Jet variables `z_i`, `w_i = z̄_i` centred at a chart point.
pub(crate) struct ChartVariables<T> {
    pub z: Vec<Jet<T>>,
    pub w: Vec<Jet<T>>,
}

impl<T: Real> ChartVariables<T> {
    pub fn new(x: &ChartPoint<T>, order: usize) -> Self {
        let n = x.dimension();
        let layout = JetLayout::shared(2 * n, order);
        let z = (0..n)
            .map(|i| Jet::variable(&layout, i, x.coord(i)))
            .collect();
        let w = (0..n)
            .map(|i| Jet::variable(&layout, n + i, x.coord(i).conj()))
            .collect();
        Self { z, w }
    }

    pub fn norm_sqr(&self) -> Jet<T> {
        let mut acc = &self.z[0] * &self.w[0];
        for (z, w) in self.z.iter().zip(&self.w).skip(1) {
            acc = &acc + &(z * w);
        }
        acc
    }
}

/// Closed-form radial data of a `U(n)`-invariant potential `φ(t)`, `t = |z|^2`.
///
/// In these coordinates `g` has eigenvalue `φ'(t)` on the sphere directions
/// (multiplicity `n - 1`) and `(t φ')'` in the radial direction. All values
/// are evaluated from `ln t` so that nodes far out on `[0, ∞)` keep full
/// relative accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialMetric {
    n: usize,
    kind: PotentialKind,
    offset: f64,
}

/// Radial quantities at one value of `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSample<T> {
    pub t: T,
    pub phi: T,
    /// `φ'(t)`.
    pub tangential: T,
    /// `(t φ'(t))'`.
    pub normal: T,
}

impl<T: Real> RadialSample<T> {
    /// `ln det g` for complex dimension `n`.
    pub fn ln_det_g(&self, n: usize) -> T {
        self.normal.ln() + T::from_usize(n - 1) * self.tangential.ln()
    }

    pub fn is_positive(&self) -> bool {
        self.normal > T::zero() && self.tangential > T::zero()
    }
}

impl RadialMetric {
    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn sample<T: Real>(&self, ln_t: T) -> Result<RadialSample<T>, GeometryError> {
        let one = T::one();
        let t = ln_t.exp();
        let l1 = ln_t.ln_1p_exp();
        let (mut phi, mut tangential, mut normal) = match self.kind {
            PotentialKind::Flat => (t, one, one),
            _ => (l1, (-l1).exp(), (-(l1 + l1)).exp()),
        };
        if let PotentialKind::PerturbedFubiniStudy { epsilon, profile } = self.kind {
            let eps = T::from_f64(epsilon);
            let (p, dp, np) = match profile {
                Profile::P1 => {
                    let c = |k: f64| (-T::from_f64(k) * l1).exp();
                    let p = (ln_t - T::from_f64(3.0) * l1).exp();
                    let dp = (one - T::from_f64(2.0) * t) * c(4.0);
                    let np = (one - T::from_f64(7.0) * t + T::from_f64(4.0) * t * t) * c(5.0);
                    (p, dp, np)
                }
                Profile::P3 => bump_radial(t)?,
                Profile::P2 => unreachable!("non-radial profile"),
            };
            phi += eps * p;
            tangential += eps * dp;
            normal += eps * np;
        }
        phi += T::from_f64(self.offset);
        let sample = RadialSample {
            t,
            phi,
            tangential,
            normal,
        };
        if !sample.is_positive() {
            return Err(GeometryError::NonPositiveMetric {
                min_eigenvalue: sample.normal.min(sample.tangential).to_f64(),
            });
        }
        Ok(sample)
    }
}

/// `(P, P', (t P')')` of the bump at `t`, from a univariate jet.
fn bump_radial<T: Real>(t: T) -> Result<(T, T, T), GeometryError> {
    let layout = JetLayout::shared(1, 2);
    let tj = Jet::variable(&layout, 0, real(t));
    let b = bump(&tj)?;
    let p = b.coefficient(&[0]).re;
    let dp = b.coefficient(&[1]).re;
    let d2p = b.coefficient(&[2]).re * T::from_f64(2.0);
    Ok((p, dp, dp + t * d2p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Quad;

    fn pt(re: f64, im: f64) -> ChartPoint<f64> {
        ChartPoint::from_f64(&[Complex::new(re, im)])
    }

    #[test]
    fn jets_are_conjugate_symmetric() {
        let pot = KahlerPotential::perturbed(1, 0.1, Profile::P2);
        let j = pot.jet(&pt(0.3, -0.4), 4).unwrap();
        for a in 0..=4u8 {
            for b in 0..=(4 - a) {
                let lhs = j.partial(&[a, b]);
                let rhs = j.partial(&[b, a]).conj();
                assert!((lhs - rhs).norm() < 1e-13, "({a},{b})");
            }
        }
    }

    #[test]
    fn jet_order_above_eight_is_refused() {
        let pot = KahlerPotential::fubini_study(1);
        let err = pot.jet(&pt(0.1, 0.0), 9).unwrap_err();
        assert!(matches!(
            err,
            GeometryError::JetUnavailable { requested: 9, .. }
        ));
    }

    #[test]
    fn closed_form_radial_data_matches_jets() {
        for profile in [Profile::P1, Profile::P3] {
            let pot = KahlerPotential::perturbed(1, 0.1, profile);
            let radial = pot.radial_metric().unwrap();
            for &t in &[0.05, 0.4, 1.0, 1.7, 3.0] {
                let x = ChartPoint::<Quad>::from_f64(&[Complex::new(t.sqrt(), 0.0)]);
                let j = pot.jet(&x, 2).unwrap();
                let g = j.partial(&[1, 1]).re;
                let s = radial
                    .sample(Quad::from_f64(t.sqrt()).powi(2).ln())
                    .unwrap();
                assert!((s.normal - g).abs().to_f64() < 1e-28, "{profile} t={t}");
                assert!((s.phi - pot.value(&x)).abs().to_f64() < 1e-28);
            }
        }
    }

    #[test]
    fn radial_data_stays_finite_far_out() {
        let radial = KahlerPotential::perturbed(2, 0.1, Profile::P1)
            .radial_metric()
            .unwrap();
        let s = radial.sample(200.0f64).unwrap();
        // (1 + t)^{-2} (1 + 0.4 (1 + t)^{-1} + …) with t = e^200.
        assert!(((s.normal.ln() + 400.0) / 400.0).abs() < 1e-12);
        assert!(s.ln_det_g(2).is_finite());
    }

    #[test]
    fn p2_has_no_radial_reduction() {
        assert!(KahlerPotential::perturbed(1, 0.1, Profile::P2)
            .radial_metric()
            .is_none());
        assert!(!KahlerPotential::perturbed(1, 0.1, Profile::P3).is_analytic());
    }
}
