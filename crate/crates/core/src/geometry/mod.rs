//! Local Kähler geometry on a single affine chart.
//!
//! Conventions used throughout the crate:
//!
//! * `g_{ij̄} = ∂_i ∂_j̄ φ` for the local potential `φ`, with `h_L = e^{-φ}`;
//! * `ω = i Σ g_{ij̄} dz^i ∧ dz̄^j`;
//! * `R_{ij̄} = -∂_i ∂_j̄ log det g`, `ρ = g^{ij̄} R_{ij̄}`;
//! * `Δ = g^{ij̄} ∂_i ∂_j̄` on functions (complex Laplacian, no factor 2);
//! * pointwise norms carry `e^{-mφ}` times the bundle weight `H`;
//! * the measure is `dμ = (2π)^{-n} ω^n / n!`.
//!
//! With these choices Fubini–Study on CP^1 has `ρ = 2`, unit total mass, and
//! Bergman density `σ_1 = m + 1`.

mod bundle;
mod curvature;
pub mod finite_difference;
mod potential;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jet::JetError;
use crate::linalg::LinalgError;
use crate::real::{abs2, cx_from_f64, cx_to_f64, Cx, Real};

pub use bundle::{BundleMetric, FiberWeight};
pub use curvature::{
    bundle_scalar_curvature, curvature_report, laplacian_power_rho, metric_tensor, ricci_tensor,
    scalar_curvature, volume_density, CurvatureReport, K_MAX,
};
pub use potential::{
    KahlerPotential, MeasureSample, PotentialKind, Profile, RadialMetric, RadialSample,
    MAX_JET_ORDER,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("metric is not positive definite at the query point (smallest eigenvalue {min_eigenvalue:e})")]
    NonPositiveMetric { min_eigenvalue: f64 },
    #[error("jet of order {requested} unavailable (supported up to {available})")]
    JetUnavailable { requested: usize, available: usize },
    #[error("finite differences could not reach tolerance {tolerance:e} (estimate {estimate:e})")]
    StepSizeUnderflow { tolerance: f64, estimate: f64 },
    #[error("point has {got} coordinates, chart dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point lies outside the chart domain")]
    OutsideChart,
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A point `(z_1, …, z_n)` of the affine chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint<T> {
    coords: Vec<Cx<T>>,
}

impl<T: Real> ChartPoint<T> {
    pub fn new(coords: Vec<Cx<T>>) -> Self {
        Self { coords }
    }

    pub fn from_f64(coords: &[Complex<f64>]) -> Self {
        Self {
            coords: coords.iter().map(|z| cx_from_f64(*z)).collect(),
        }
    }

    pub fn origin(n: usize) -> Self {
        Self {
            coords: vec![Complex::new(T::zero(), T::zero()); n],
        }
    }

    pub fn dimension(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Cx<T>] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> Cx<T> {
        self.coords[i]
    }

    /// `|z|^2 = Σ |z_i|^2`.
    pub fn norm_sqr(&self) -> T {
        self.coords.iter().fold(T::zero(), |acc, z| acc + abs2(*z))
    }

    pub fn shifted(&self, i: usize, delta: Cx<T>) -> Self {
        let mut out = self.clone();
        out.coords[i] += delta;
        out
    }

    pub fn to_f64(&self) -> ChartPoint<f64> {
        ChartPoint {
            coords: self.coords.iter().map(|z| cx_to_f64(*z)).collect(),
        }
    }

    pub fn convert<U: Real>(&self) -> ChartPoint<U> {
        ChartPoint {
            coords: self
                .coords
                .iter()
                .map(|z| Complex::new(U::from_f64(z.re.to_f64()), U::from_f64(z.im.to_f64())))
                .collect(),
        }
    }
}

impl ChartPoint<f64> {
    /// `[[re, im], …]` for reports.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.coords.iter().map(|z| [z.re, z.im]).collect()
    }
}

/// Valid coordinate region of a chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChartDomain {
    /// The whole affine chart `C^n` (full measure in `CP^n`).
    Affine,
}

impl ChartDomain {
    pub fn contains<T: Real>(&self, x: &ChartPoint<T>) -> bool {
        match self {
            ChartDomain::Affine => x
                .coords
                .iter()
                .all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }
}

/// Line bundle potential together with the auxiliary bundle `(E, h_E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub potential: KahlerPotential,
    pub bundle: BundleMetric,
}

impl Geometry {
    pub fn new(potential: KahlerPotential, bundle: BundleMetric) -> Self {
        Self { potential, bundle }
    }

    pub fn dimension(&self) -> usize {
        self.potential.dimension()
    }

    pub fn rank(&self) -> usize {
        self.bundle.rank()
    }

    /// Both metrics invariant under the diagonal torus action `z_i ↦ e^{iθ_i} z_i`.
    pub fn is_torus_invariant(&self) -> bool {
        self.potential.radial_metric().is_some()
    }

    /// Pure Fubini–Study potential with Fubini–Study twist weights, for which
    /// monomial norms are Dirichlet integrals known in closed form.
    pub fn has_exact_gram(&self) -> bool {
        matches!(self.potential.kind(), PotentialKind::FubiniStudy)
    }

    pub fn is_analytic(&self) -> bool {
        self.potential.is_analytic() && self.bundle.is_analytic()
    }
}
