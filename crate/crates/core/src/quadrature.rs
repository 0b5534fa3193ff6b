//! Integration against `dμ = (2π)^{-n} ω^n / n!` on the affine chart.
//!
//! The radial rule maps `t ∈ [0, ∞)` to `s = t / (1 + t) ∈ [0, 1)` and applies
//! tanh-sinh nodes in `s`; composed, this is `t = exp(π sinh v)` with the
//! trapezoid rule in `v`. Levels halve the step in `v` and reuse every
//! previous node, and the difference of consecutive levels is the error
//! estimate. Exact Dirichlet integrals serve as the oracle for the
//! Fubini–Study case.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ChartPoint, GeometryError, KahlerPotential};
use crate::real::{cis, cx_real, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("quadrature did not reach tolerance {target:e} within {nodes} nodes (estimate {achieved:e})")]
    Failure {
        target: f64,
        achieved: f64,
        nodes: usize,
    },
    #[error("chart integration supports n <= 2, got n = {0}")]
    DimensionUnsupported(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureMode {
    ExactOracle,
    Radial1d,
    Tensor2d,
    MonteCarloCheck,
}

/// Integration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    pub mode: QuadratureMode,
    /// Absolute error target.
    pub target_tolerance: f64,
    /// Relative error target; an estimate passes if it meets either bound.
    pub relative_tolerance: f64,
    pub precision_digits: u32,
    /// Maximum integrand evaluations (vector-valued evaluations count once).
    pub node_budget: usize,
    pub seed: u64,
}

impl Integrator {
    pub fn new(mode: QuadratureMode, target_tolerance: f64) -> Self {
        Self {
            mode,
            target_tolerance,
            relative_tolerance: 0.0,
            precision_digits: 15,
            node_budget: 2_000_000,
            seed: 0x5eed,
        }
    }

    /// Tolerances matched to a scalar type.
    pub fn for_precision<T: Real>(mode: QuadratureMode) -> Self {
        let rel = (T::UNIT_ROUNDOFF * 1e3).max(1e-30);
        Self {
            relative_tolerance: rel,
            precision_digits: T::DIGITS,
            ..Self::new(mode, rel * 1e-3)
        }
    }

    pub fn with_relative(mut self, rel: f64) -> Self {
        self.relative_tolerance = rel;
        self
    }

    pub fn with_budget(mut self, nodes: usize) -> Self {
        self.node_budget = nodes;
        self
    }

    fn accepts(&self, error: f64, value: f64) -> bool {
        error
            <= self
                .target_tolerance
                .max(self.relative_tolerance * value.abs())
    }
}

/// A value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub nodes: usize,
}

/// Neumaier-compensated accumulator with a fixed summation order.
#[derive(Debug, Clone, Copy)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Real> Default for CompensatedSum<T> {
    fn default() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }
}

impl<T: Real> CompensatedSum<T> {
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

/// Node of the radial rule: `t = exp(π sinh v)`.
#[derive(Debug, Clone, Copy)]
pub struct RadialNode<T> {
    pub ln_t: T,
    pub t: T,
    /// `ln(dt/dv) = ln t + ln(π cosh v)`.
    pub ln_jacobian: T,
}

impl<T: Real> RadialNode<T> {
    fn at(v: T) -> Self {
        let pi = T::pi();
        let ln_t = pi * v.sinh();
        Self {
            ln_t,
            t: ln_t.exp(),
            ln_jacobian: ln_t + (pi * v.cosh()).ln(),
        }
    }
}

const FIRST_STEP: f64 = 0.5;
const MAX_LEVEL: usize = 9;
/// `|v|` cut-off for the radial rule: `t ∈ [e^{-233}, e^{233}]`.
const RADIAL_SPAN: f64 = 5.0;
/// `|v|` cut-off for chart rules: `t ∈ [e^{-80}, e^{80}]`.
const CHART_SPAN: f64 = 3.93;

/// Integer node indices new at `level` (step `FIRST_STEP / 2^level`).
fn level_indices(level: usize, span: f64) -> impl Iterator<Item = i64> {
    let h = FIRST_STEP / (1u64 << level) as f64;
    let kmax = (span / h).floor() as i64;
    let stride = if level == 0 { 1 } else { 2 };
    let start = if level == 0 { -kmax } else { -kmax | 1 };
    (start..=kmax)
        .step_by(stride)
        .filter(move |k| level == 0 || k.rem_euclid(2) == 1)
}

fn step<T: Real>(level: usize) -> T {
    T::from_f64(FIRST_STEP) / T::from_usize(1usize << level)
}

impl Integrator {
    /// Vector-valued radial integral `∫_0^∞ F(t) dt`. `eval` receives a node
    /// and writes `F(t) · dt/dv` for every component.
    pub fn integrate_radial_batch<T, F>(
        &self,
        components: usize,
        mut eval: F,
    ) -> Result<Vec<Estimate<T>>, QuadratureError>
    where
        T: Real,
        F: FnMut(&RadialNode<T>, &mut [T]) -> Result<(), QuadratureError>,
    {
        let mut sums = vec![CompensatedSum::<T>::default(); components];
        let mut magnitudes = vec![T::zero(); components];
        let mut buf = vec![T::zero(); components];
        let mut previous: Option<Vec<T>> = None;
        let mut nodes = 0usize;
        let mut worst = f64::INFINITY;
        for level in 0..=MAX_LEVEL {
            let h = step::<T>(level);
            for k in level_indices(level, RADIAL_SPAN) {
                if nodes >= self.node_budget {
                    return Err(QuadratureError::Failure {
                        target: self.target_tolerance,
                        achieved: worst,
                        nodes,
                    });
                }
                let node = RadialNode::at(h * T::from_i64(k));
                buf.iter_mut().for_each(|b| *b = T::zero());
                eval(&node, &mut buf)?;
                for ((s, a), b) in sums.iter_mut().zip(&mut magnitudes).zip(&buf) {
                    s.add(*b);
                    *a += b.abs();
                }
                nodes += 1;
            }
            let current: Vec<T> = sums.iter().map(|s| s.value() * h).collect();
            if let Some(prev) = &previous {
                let floor = 10.0 * T::UNIT_ROUNDOFF * h.to_f64();
                let errors: Vec<f64> = current
                    .iter()
                    .zip(prev)
                    .zip(&magnitudes)
                    .map(|((c, p), a)| (*c - *p).abs().to_f64() + floor * a.to_f64())
                    .collect();
                worst = errors
                    .iter()
                    .zip(&current)
                    .map(|(e, c)| {
                        e / self
                            .target_tolerance
                            .max(self.relative_tolerance * c.abs().to_f64())
                    })
                    .fold(0.0, f64::max);
                if errors
                    .iter()
                    .zip(&current)
                    .all(|(e, c)| self.accepts(*e, c.to_f64()))
                {
                    return Ok(current
                        .into_iter()
                        .zip(errors)
                        .map(|(value, error)| Estimate {
                            value,
                            error,
                            nodes,
                        })
                        .collect());
                }
            }
            previous = Some(current);
        }
        Err(QuadratureError::Failure {
            target: self.target_tolerance,
            achieved: worst,
            nodes,
        })
    }

    /// `∫_0^∞ f(t) w(t) dt`.
    pub fn integrate_radial<T: Real>(
        &self,
        f: impl Fn(T) -> T,
        weight: impl Fn(T) -> T,
    ) -> Result<Estimate<T>, QuadratureError> {
        let mut out = self.integrate_radial_batch(1, |node, buf| {
            buf[0] = f(node.t) * weight(node.t) * node.ln_jacobian.exp();
            Ok(())
        })?;
        Ok(out.remove(0))
    }

    /// `∫ f dμ` over the chart of a dimension-1 or dimension-2 potential by a
    /// product of radial rules in each `t_k = |z_k|^2` with angular trapezoid
    /// rules in each `θ_k`. Angular resolution adapts per radial node.
    pub fn integrate_chart<T: Real>(
        &self,
        f: impl Fn(&ChartPoint<T>) -> T,
        potential: &KahlerPotential,
    ) -> Result<Estimate<T>, QuadratureError> {
        let mut out = self.integrate_chart_batch(1, potential, |z, buf| {
            buf[0] = f(z);
            Ok(())
        })?;
        Ok(out.remove(0))
    }

    /// Vector-valued [`Integrator::integrate_chart`]: `eval` writes every
    /// component of the integrand at a chart point.
    pub fn integrate_chart_batch<T, F>(
        &self,
        components: usize,
        potential: &KahlerPotential,
        mut eval: F,
    ) -> Result<Vec<Estimate<T>>, QuadratureError>
    where
        T: Real,
        F: FnMut(&ChartPoint<T>, &mut [T]) -> Result<(), QuadratureError>,
    {
        let n = potential.dimension();
        if n > 2 {
            return Err(QuadratureError::DimensionUnsupported(n));
        }
        let mut integrand = |z: &ChartPoint<T>, buf: &mut [T]| -> Result<(), QuadratureError> {
            let s = potential.measure_sample(z)?;
            buf.iter_mut().for_each(|b| *b = T::zero());
            eval(z, buf)?;
            let w = s.ln_det_g.exp();
            buf.iter_mut().for_each(|b| *b *= w);
            Ok(())
        };
        let mut sums = vec![CompensatedSum::<T>::default(); components];
        let mut angular_error = vec![0.0f64; components];
        let mut previous: Option<Vec<T>> = None;
        let mut nodes = 0usize;
        let mut worst = f64::INFINITY;
        let mut seen: Vec<Vec<i64>> = Vec::new();
        for level in 0..=MAX_LEVEL {
            let h = step::<T>(level);
            let hn = h.powi(n as i32).to_f64();
            // Grid indices at this level expressed at the finest resolution so
            // that previously visited products are skipped.
            let scale = 1i64 << (MAX_LEVEL - level);
            let all: Vec<i64> = (0..=level)
                .flat_map(|l| level_indices(l, CHART_SPAN).map(move |k| k << (MAX_LEVEL - l)))
                .collect();
            let new_nodes: Vec<Vec<i64>> = match n {
                1 => all.iter().map(|&k| vec![k]).collect(),
                _ => all
                    .iter()
                    .flat_map(|&a| all.iter().map(move |&b| vec![a, b]))
                    .collect(),
            };
            for idx in new_nodes {
                if seen.binary_search(&idx).is_ok() {
                    continue;
                }
                let radial: Vec<RadialNode<T>> = idx
                    .iter()
                    .map(|&k| RadialNode::at(h * T::from_i64(k) / T::from_i64(scale)))
                    .collect();
                let jac = radial
                    .iter()
                    .fold(T::zero(), |a, r| a + r.ln_jacobian)
                    .exp();
                let tol_node =
                    1e-3 * self.target_tolerance / (jac.to_f64() * hn).max(f64::MIN_POSITIVE);
                let (avg, err, used) =
                    self.angular_average(&mut integrand, components, &radial, tol_node)?;
                nodes += used;
                if nodes > self.node_budget {
                    return Err(QuadratureError::Failure {
                        target: self.target_tolerance,
                        achieved: worst,
                        nodes,
                    });
                }
                for c in 0..components {
                    sums[c].add(avg[c] * jac);
                    angular_error[c] += err[c] * jac.to_f64();
                }
                let pos = seen.binary_search(&idx).unwrap_err();
                seen.insert(pos, idx);
            }
            let hn_t = h.powi(n as i32);
            let current: Vec<T> = sums.iter().map(|s| s.value() * hn_t).collect();
            if let Some(prev) = &previous {
                let errors: Vec<f64> = current
                    .iter()
                    .zip(prev)
                    .zip(&angular_error)
                    .map(|((c, p), a)| (*c - *p).abs().to_f64() + a * hn)
                    .collect();
                worst = errors
                    .iter()
                    .zip(&current)
                    .map(|(e, c)| {
                        e / self
                            .target_tolerance
                            .max(self.relative_tolerance * c.abs().to_f64())
                    })
                    .fold(0.0, f64::max);
                if errors
                    .iter()
                    .zip(&current)
                    .all(|(e, c)| self.accepts(*e, c.to_f64()))
                {
                    return Ok(current
                        .into_iter()
                        .zip(errors)
                        .map(|(value, error)| Estimate {
                            value,
                            error,
                            nodes,
                        })
                        .collect());
                }
            }
            previous = Some(current);
        }
        Err(QuadratureError::Failure {
            target: self.target_tolerance,
            achieved: worst,
            nodes,
        })
    }

    /// Mean of the integrand over the torus at fixed `t_k`, doubling the
    /// number of angles until the half-resolution subset agrees.
    fn angular_average<T: Real>(
        &self,
        integrand: &mut impl FnMut(&ChartPoint<T>, &mut [T]) -> Result<(), QuadratureError>,
        components: usize,
        radial: &[RadialNode<T>],
        tol: f64,
    ) -> Result<(Vec<T>, Vec<f64>, usize), QuadratureError> {
        let n = radial.len();
        let max_angles = if n == 1 { 512 } else { 64 };
        let radii: Vec<T> = radial
            .iter()
            .map(|r| (r.ln_t / T::from_f64(2.0)).exp())
            .collect();
        let mut buf = vec![T::zero(); components];
        let mut count = 4usize;
        let mut used = 0usize;
        loop {
            let mut full = vec![CompensatedSum::<T>::default(); components];
            let mut half = vec![CompensatedSum::<T>::default(); components];
            let angles: Vec<_> = (0..count)
                .map(|a| cis(T::from_f64(2.0) * T::pi() * T::from_usize(a) / T::from_usize(count)))
                .collect();
            let tuples: Vec<Vec<usize>> = match n {
                1 => (0..count).map(|a| vec![a]).collect(),
                _ => (0..count)
                    .flat_map(|a| (0..count).map(move |b| vec![a, b]))
                    .collect(),
            };
            for tup in &tuples {
                let coords = tup
                    .iter()
                    .zip(&radii)
                    .map(|(&a, &r)| angles[a] * cx_real(r))
                    .collect();
                integrand(&ChartPoint::new(coords), &mut buf)?;
                let even = tup.iter().all(|a| a % 2 == 0);
                for c in 0..components {
                    full[c].add(buf[c]);
                    if even {
                        half[c].add(buf[c]);
                    }
                }
            }
            used += tuples.len();
            let cells = T::from_usize(tuples.len());
            let half_cells = cells / T::from_usize(1 << n);
            let avg: Vec<T> = full.iter().map(|s| s.value() / cells).collect();
            let err: Vec<f64> = full
                .iter()
                .zip(&half)
                .map(|(f, h)| (f.value() / cells - h.value() / half_cells).abs().to_f64())
                .collect();
            let converged = err
                .iter()
                .zip(&avg)
                .all(|(e, a)| *e <= tol.max(self.relative_tolerance * a.abs().to_f64()));
            if converged || count >= max_angles {
                return Ok((avg, err, used));
            }
            count *= 2;
        }
    }

    /// Importance-sampled estimate of `∫ f dμ` using Fubini–Study points.
    /// Diagnostic only; the error is three standard errors.
    pub fn monte_carlo_check(
        &self,
        f: impl Fn(&ChartPoint<f64>) -> f64,
        potential: &KahlerPotential,
        samples: usize,
    ) -> Result<Estimate<f64>, QuadratureError> {
        let n = potential.dimension();
        if n > 2 {
            return Err(QuadratureError::DimensionUnsupported(n));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let fs_volume = if n == 1 { 1.0 } else { 0.5 };
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for i in 0..samples {
            let t: Vec<f64> = if n == 1 {
                let u: f64 = rng.gen();
                vec![u / (1.0 - u)]
            } else {
                // Uniform point of the 2-simplex.
                let e: Vec<f64> = (0..3)
                    .map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln())
                    .collect();
                vec![e[1] / e[0], e[2] / e[0]]
            };
            let coords = t
                .iter()
                .map(|&tk| {
                    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
                    num_complex::Complex::from_polar(tk.sqrt(), theta)
                })
                .collect();
            let z = ChartPoint::new(coords);
            let s = potential.measure_sample(&z)?;
            let ln_fs = -((n + 1) as f64) * (1.0 + z.norm_sqr()).ln();
            let w = fs_volume * f(&z) * (s.ln_det_g - ln_fs).exp();
            let delta = w - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (w - mean);
        }
        let var = if samples > 1 {
            m2 / (samples - 1) as f64
        } else {
            f64::INFINITY
        };
        Ok(Estimate {
            value: mean,
            error: 3.0 * (var / samples as f64).sqrt(),
            nodes: samples,
        })
    }
}

fn factorial(k: u64) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// `∫ t^j (1+t)^{-m-2} dt = j! (m-j)! / (m+1)!`.
pub fn beta_exact(j: u64, m: u64) -> BigRational {
    assert!(j <= m, "beta_exact needs j <= m");
    BigRational::new(factorial(j) * factorial(m - j), factorial(m + 1))
}

/// Norm of `z^a` in `L^D` over `CP^n` with Fubini–Study data:
/// `Π a_i! (D - |a|)! / (D + n)!`.
pub fn dirichlet_exact(a: &[u64], degree: u64) -> BigRational {
    let total: u64 = a.iter().sum();
    assert!(
        total <= degree,
        "monomial degree exceeds the line bundle degree"
    );
    let num = a
        .iter()
        .fold(factorial(degree - total), |acc, &ai| acc * factorial(ai));
    BigRational::new(num, factorial(degree + a.len() as u64))
}

/// `Π a_i! / (|a| + n - 1)!`: integral of `t^a` over the simplex slice
/// `Σ t_i = s`, divided by `s^{|a| + n - 1}`.
pub fn simplex_moment(a: &[u64]) -> BigRational {
    let total: u64 = a.iter().sum();
    let num = a.iter().fold(BigInt::one(), |acc, &ai| acc * factorial(ai));
    if a.is_empty() {
        return BigRational::zero();
    }
    BigRational::new(num, factorial(total + a.len() as u64 - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Profile;
    use crate::real::Quad;

    #[test]
    fn beta_values() {
        assert_eq!(beta_exact(0, 0), BigRational::one());
        assert_eq!(beta_exact(3, 10), BigRational::new(1.into(), 1320.into()));
        for m in 0..12 {
            for j in 0..=m {
                assert_eq!(beta_exact(j, m), beta_exact(m - j, m));
            }
        }
        assert_eq!(dirichlet_exact(&[3], 10), beta_exact(3, 10));
        // Vol(CP^2) = 2!/2!·... with a = 0, D = 0: 0!/2! = 1/2.
        assert_eq!(
            dirichlet_exact(&[0, 0], 0),
            BigRational::new(1.into(), 2.into())
        );
    }

    #[test]
    fn radial_beta_integral() {
        let integ = Integrator::for_precision::<Quad>(QuadratureMode::Radial1d);
        let est = integ
            .integrate_radial(|t: Quad| t.powi(3), |t| (Quad::from_f64(1.0) + t).powi(-12))
            .unwrap();
        let exact = Quad::from_f64(1.0) / Quad::from_f64(1320.0);
        let err = (est.value - exact).abs().to_f64();
        assert!(err < 1e-30, "{err:e}");
        assert!(est.error >= err);
        let mass = integ
            .integrate_radial(
                |_| Quad::from_f64(1.0),
                |t| (Quad::from_f64(1.0) + t).powi(-2),
            )
            .unwrap();
        assert!((mass.value - Quad::from_f64(1.0)).abs().to_f64() < 1e-30);
        let zero = integ
            .integrate_radial(|_| Quad::from_f64(0.0), |_| Quad::from_f64(1.0))
            .unwrap();
        assert_eq!(zero.value.to_f64(), 0.0);
    }

    #[test]
    fn exhausted_budget_is_a_failure() {
        let integ = Integrator::for_precision::<Quad>(QuadratureMode::Radial1d).with_budget(30);
        let err = integ
            .integrate_radial(|t: Quad| t.powi(3), |t| (Quad::from_f64(1.0) + t).powi(-12))
            .unwrap_err();
        assert!(matches!(err, QuadratureError::Failure { .. }));
    }

    #[test]
    fn chart_volumes() {
        let integ = Integrator::new(QuadratureMode::Tensor2d, 1e-12).with_relative(1e-12);
        let v1 = integ
            .integrate_chart(|_| 1.0, &KahlerPotential::fubini_study(1))
            .unwrap();
        assert!((v1.value - 1.0).abs() < 1e-12);
        let v2 = integ
            .integrate_chart(|_| 1.0, &KahlerPotential::fubini_study(2))
            .unwrap();
        assert!((v2.value - 0.5).abs() < 1e-12, "{}", v2.value);
        let bad = integ.integrate_chart(|_| 1.0, &KahlerPotential::fubini_study(3));
        assert!(matches!(bad, Err(QuadratureError::DimensionUnsupported(3))));
    }

    #[test]
    fn chart_rule_reduces_to_radial_rule() {
        let pot = KahlerPotential::perturbed(1, 0.1, Profile::P1);
        let radial = pot.radial_metric().unwrap();
        let integ = Integrator::new(QuadratureMode::Tensor2d, 1e-14).with_relative(1e-14);
        let f = |z: &ChartPoint<f64>| (-5.0 * pot.value(z)).exp() * z.norm_sqr().powi(2);
        let chart = integ.integrate_chart(f, &pot).unwrap();
        let rad = integ
            .integrate_radial_batch(1, |node: &RadialNode<f64>, buf| {
                let s = radial.sample(node.ln_t)?;
                buf[0] = (2.0 * node.ln_t - 5.0 * s.phi + s.ln_det_g(1) + node.ln_jacobian).exp();
                Ok(())
            })
            .unwrap();
        assert!((chart.value - rad[0].value).abs() < 1e-12);
        // Off-diagonal pairing of z^1 and z^2 vanishes by angular symmetry.
        let off = integ
            .integrate_chart(
                |z: &ChartPoint<f64>| {
                    ((-5.0 * pot.value(z)).exp() * z.coord(0) * z.coord(0).conj().powi(2)).re
                },
                &pot,
            )
            .unwrap();
        assert!(off.value.abs() < 1e-13);
    }

    #[test]
    fn monte_carlo_roughly_agrees() {
        let integ = Integrator::new(QuadratureMode::MonteCarloCheck, 1e-2);
        let pot = KahlerPotential::perturbed(1, 0.1, Profile::P2);
        let est = integ.monte_carlo_check(|_| 1.0, &pot, 20_000).unwrap();
        // The perturbation is exact, so the volume is still 1.
        assert!((est.value - 1.0).abs() < est.error.max(1e-2));
    }
}
