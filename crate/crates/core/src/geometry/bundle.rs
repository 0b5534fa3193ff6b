use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::potential::ChartVariables;
use super::{ChartPoint, GeometryError};
use crate::jet::{Jet, JetError};
use crate::linalg::CMatrix;
use crate::real::Real;

/// One diagonal entry `H_α = c · (1 + |z|^2)^{-k}` of the bundle weight, i.e.
/// `ψ_α = k log(1 + |z|^2) - log c`. On `CP^n` this is the Fubini–Study
/// metric of `O(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberWeight {
    pub twist: i64,
    pub scale: f64,
}

impl FiberWeight {
    pub fn twist(k: i64) -> Self {
        Self {
            twist: k,
            scale: 1.0,
        }
    }

    pub fn trivial() -> Self {
        Self::twist(0)
    }

    /// `ψ_α` at `x`.
    pub fn psi<T: Real>(&self, x: &ChartPoint<T>) -> T {
        T::from_i64(self.twist) * (T::one() + x.norm_sqr()).ln() - T::from_f64(self.scale).ln()
    }

    /// `ψ_α` as a function of `ln t`.
    pub fn psi_radial<T: Real>(&self, ln_t: T) -> T {
        T::from_i64(self.twist) * ln_t.ln_1p_exp() - T::from_f64(self.scale).ln()
    }

    fn psi_jet<T: Real>(&self, vars: &ChartVariables<T>) -> Result<Jet<T>, JetError> {
        let t = vars.norm_sqr();
        let l = t.add_constant(Complex::new(T::one(), T::zero())).ln()?;
        Ok(l.scale_real(T::from_i64(self.twist))
            .add_constant(Complex::new(-T::from_f64(self.scale).ln(), T::zero())))
    }
}

/// Hermitian metric on `E = ⊕ O(k_α)` in the monomial frame, `H = diag(e^{-ψ_α})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetric {
    weights: Vec<FiberWeight>,
}

impl BundleMetric {
    pub fn new(weights: Vec<FiberWeight>) -> Self {
        assert!(!weights.is_empty(), "bundle rank must be positive");
        assert!(
            weights.iter().all(|w| w.scale > 0.0 && w.scale.is_finite()),
            "fiber scales must be positive"
        );
        Self { weights }
    }

    pub fn trivial(rank: usize) -> Self {
        Self::new(vec![FiberWeight::trivial(); rank])
    }

    pub fn twisted(twists: &[i64]) -> Self {
        Self::new(twists.iter().map(|&k| FiberWeight::twist(k)).collect())
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[FiberWeight] {
        &self.weights
    }

    pub fn twists(&self) -> Vec<i64> {
        self.weights.iter().map(|w| w.twist).collect()
    }

    pub fn is_analytic(&self) -> bool {
        true
    }

    /// Direct sum `self ⊕ other`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Self { weights }
    }

    /// `H(x)`.
    pub fn weight<T: Real>(&self, x: &ChartPoint<T>) -> CMatrix<T> {
        let diag: Vec<T> = self.weights.iter().map(|w| (-w.psi(x)).exp()).collect();
        CMatrix::diagonal(&diag)
    }

    /// Jets of `H`; off-diagonal entries vanish identically.
    pub fn weight_jet<T: Real>(
        &self,
        x: &ChartPoint<T>,
        order: usize,
    ) -> Result<Vec<Jet<T>>, GeometryError> {
        let vars = ChartVariables::new(x, order);
        self.weights
            .iter()
            .map(|w| Ok(w.psi_jet(&vars)?.scale_real(-T::one()).exp()?))
            .collect()
    }

    pub(crate) fn psi_jets<T: Real>(
        &self,
        vars: &ChartVariables<T>,
    ) -> Result<Vec<Jet<T>>, JetError> {
        self.weights.iter().map(|w| w.psi_jet(vars)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_matches_its_jet() {
        let bundle = BundleMetric::new(vec![
            FiberWeight::twist(2),
            FiberWeight {
                twist: 0,
                scale: 3.5,
            },
        ]);
        let x = ChartPoint::<f64>::from_f64(&[Complex::new(0.6, 0.2)]);
        let h = bundle.weight(&x);
        let jets = bundle.weight_jet(&x, 3).unwrap();
        for (a, j) in jets.iter().enumerate() {
            assert!((h[(a, a)] - j.value()).norm() < 1e-14);
        }
        assert!((h[(1, 1)].re - 3.5).abs() < 1e-14);
        assert_eq!(h[(0, 1)], Complex::new(0.0, 0.0));
    }
}
