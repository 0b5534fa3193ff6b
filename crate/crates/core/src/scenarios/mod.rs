//! Scenario catalog, configuration files, orchestration and report output.

mod config;
mod output;
mod runner;

use std::fmt::{self, Write as _};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BundleMetric, Geometry, KahlerPotential, PotentialKind, Profile};
use crate::quadrature::QuadratureMode;

pub use config::{parse_config, ConfigError, ConfigErrorKind};
pub use output::{emit_tables, render_tables, OutputFormat, RenderedFile};
pub use runner::{
    run_scenario, run_suite, CoefficientRow, RemainderRow, RunReport, SampleRow, ScenarioReport,
    ScenarioStatus, SeriesReport, OPEN_QUESTION_RHO_E,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Arithmetic used for Gram matrices and density evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// `f64`.
    Double,
    /// Double-double, about 31 digits.
    High,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::Double => "double",
            Precision::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "double" => Some(Precision::Double),
            "high" => Some(Precision::High),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    Cp1,
    Cp2,
    /// `C^n` with the Euclidean potential, curvature only.
    Flat1,
    Flat2,
}

impl Manifold {
    pub const ALL: [Manifold; 4] = [
        Manifold::Cp1,
        Manifold::Cp2,
        Manifold::Flat1,
        Manifold::Flat2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Manifold::Cp1 => "cp1",
            Manifold::Cp2 => "cp2",
            Manifold::Flat1 => "flat1",
            Manifold::Flat2 => "flat2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn dimension(self) -> usize {
        match self {
            Manifold::Cp1 | Manifold::Flat1 => 1,
            Manifold::Cp2 | Manifold::Flat2 => 2,
        }
    }

    pub fn is_flat(self) -> bool {
        matches!(self, Manifold::Flat1 | Manifold::Flat2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BundleSpec {
    Trivial { rank: usize },
    Twisted { twists: Vec<i64> },
}

impl BundleSpec {
    pub fn metric(&self) -> BundleMetric {
        match self {
            BundleSpec::Trivial { rank } => BundleMetric::trivial(*rank),
            BundleSpec::Twisted { twists } => BundleMetric::twisted(twists),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            BundleSpec::Trivial { rank } => *rank,
            BundleSpec::Twisted { twists } => twists.len(),
        }
    }

    pub fn is_twisted(&self) -> bool {
        matches!(self, BundleSpec::Twisted { twists } if twists.iter().any(|&k| k != 0))
    }
}

/// `ε · profile` added to Fubini–Study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub epsilon: f64,
    pub profile: Profile,
}

/// Gram strategy requested by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureChoice {
    Auto,
    Exact,
    Radial,
    Tensor,
}

impl QuadratureChoice {
    pub fn name(self) -> &'static str {
        match self {
            QuadratureChoice::Auto => "auto",
            QuadratureChoice::Exact => "exact",
            QuadratureChoice::Radial => "radial",
            QuadratureChoice::Tensor => "tensor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Auto, Self::Exact, Self::Radial, Self::Tensor]
            .into_iter()
            .find(|c| c.name() == s)
    }

    pub fn mode(self) -> Option<QuadratureMode> {
        match self {
            QuadratureChoice::Auto => None,
            QuadratureChoice::Exact => Some(QuadratureMode::ExactOracle),
            QuadratureChoice::Radial => Some(QuadratureMode::Radial1d),
            QuadratureChoice::Tensor => Some(QuadratureMode::Tensor2d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub manifold: Manifold,
    pub perturbation: Option<Perturbation>,
    pub bundle: BundleSpec,
    /// Chart points as `[re, im]` per coordinate.
    pub points: Vec<Vec<[f64; 2]>>,
    pub m_schedule: Vec<u32>,
    pub b_list: Vec<u32>,
    pub precision: Precision,
    pub quadrature: QuadratureChoice,
    /// Fit order; chosen per series when absent.
    pub order: Option<usize>,
    /// Integrate `σ_1` against the measure at every `m`.
    pub trace_check: bool,
    /// `m` range of the remainder-order regression.
    pub remainder_window: Option<(u32, u32)>,
}

impl Scenario {
    pub fn dimension(&self) -> usize {
        self.manifold.dimension()
    }

    pub fn rank(&self) -> usize {
        self.bundle.rank()
    }

    pub fn potential(&self) -> KahlerPotential {
        let n = self.dimension();
        match (self.manifold.is_flat(), self.perturbation) {
            (true, _) => KahlerPotential::flat(n),
            (false, None) => KahlerPotential::fubini_study(n),
            (false, Some(p)) => KahlerPotential::perturbed(n, p.epsilon, p.profile),
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.potential(), self.bundle.metric())
    }

    pub fn is_analytic(&self) -> bool {
        self.geometry().is_analytic()
    }

    pub fn potential_kind(&self) -> PotentialKind {
        self.potential().kind()
    }

    /// Renders the scenario in the configuration grammar.
    pub fn to_config(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[{}]", self.name);
        let _ = writeln!(out, "manifold = {}", self.manifold.name());
        if let Some(p) = self.perturbation {
            let _ = writeln!(out, "epsilon = {:?}", p.epsilon);
            let _ = writeln!(out, "profile = {}", p.profile);
        }
        match &self.bundle {
            BundleSpec::Trivial { rank } => {
                let _ = writeln!(out, "bundle = trivial");
                let _ = writeln!(out, "ranks = {rank}");
            }
            BundleSpec::Twisted { twists } => {
                let _ = writeln!(out, "bundle = twisted");
                let _ = writeln!(out, "twists = {}", join(twists));
            }
        }
        let points: Vec<String> = self
            .points
            .iter()
            .map(|p| {
                p.iter()
                    .map(|[re, im]| {
                        format!(
                            "{re:?}{}{im:?}i",
                            if im.is_sign_negative() { "" } else { "+" }
                        )
                    })
                    .collect::<Vec<_>>()
                    .join(", ")
            })
            .collect();
        let _ = writeln!(out, "points = {}", points.join(" | "));
        let _ = writeln!(out, "m = {}", config::render_schedule(&self.m_schedule));
        let _ = writeln!(out, "b = {}", join(&self.b_list));
        let _ = writeln!(out, "precision = {}", self.precision.name());
        let _ = writeln!(out, "quadrature = {}", self.quadrature.name());
        if let Some(order) = self.order {
            let _ = writeln!(out, "order = {order}");
        }
        let _ = writeln!(out, "trace = {}", self.trace_check);
        if let Some((lo, hi)) = self.remainder_window {
            let _ = writeln!(out, "remainder_window = {lo}..{hi}");
        }
        out
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Deterministic chart points with coordinates in `[-1.5, 1.5]^2`.
pub fn random_points(n: usize, count: usize, seed: u64) -> Vec<Vec<[f64; 2]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let z = Complex::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
                    // Round to 12 digits so configs render compactly.
                    [
                        (z.re * 1e12f64).round() / 1e12,
                        (z.im * 1e12f64).round() / 1e12,
                    ]
                })
                .collect()
        })
        .collect()
}

fn base(name: &str, manifold: Manifold, bundle: BundleSpec) -> Scenario {
    Scenario {
        name: name.into(),
        manifold,
        perturbation: None,
        bundle,
        points: random_points(manifold.dimension(), 3, 7),
        m_schedule: (5..=40).collect(),
        b_list: vec![1, 2],
        precision: Precision::High,
        quadrature: QuadratureChoice::Auto,
        order: None,
        trace_check: false,
        remainder_window: None,
    }
}

/// Built-in scenarios, sorted by name.
pub fn catalog() -> Vec<Scenario> {
    let trivial = |rank| BundleSpec::Trivial { rank };
    let twisted = |twists: &[i64]| BundleSpec::Twisted {
        twists: twists.to_vec(),
    };
    let mut out = vec![
        Scenario {
            points: random_points(1, 10, 1),
            m_schedule: (5..=60).collect(),
            b_list: vec![1, 2, 3],
            trace_check: true,
            ..base("fs-cp1-baseline", Manifold::Cp1, trivial(1))
        },
        base("fs-cp1-rank2", Manifold::Cp1, trivial(2)),
        base("fs-cp1-rank3", Manifold::Cp1, trivial(3)),
        base("fs-cp1-twist1", Manifold::Cp1, twisted(&[1])),
        base("fs-cp1-twist2", Manifold::Cp1, twisted(&[2])),
        Scenario {
            b_list: vec![1, 2, 3, 4],
            ..base("fs-cp1-split", Manifold::Cp1, twisted(&[2, 0]))
        },
        Scenario {
            m_schedule: (5..=30).collect(),
            b_list: vec![1],
            trace_check: true,
            ..base("fs-cp2-baseline", Manifold::Cp2, trivial(1))
        },
        Scenario {
            perturbation: Some(Perturbation {
                epsilon: 0.1,
                profile: Profile::P1,
            }),
            m_schedule: (10..=50).collect(),
            quadrature: QuadratureChoice::Radial,
            trace_check: true,
            remainder_window: Some((20, 50)),
            ..base("p1-cp1", Manifold::Cp1, trivial(1))
        },
        Scenario {
            perturbation: Some(Perturbation {
                epsilon: 0.1,
                profile: Profile::P2,
            }),
            points: random_points(1, 2, 11),
            m_schedule: (4..=14).collect(),
            b_list: vec![1],
            precision: Precision::Double,
            quadrature: QuadratureChoice::Tensor,
            order: Some(2),
            ..base("p2-cp1", Manifold::Cp1, trivial(1))
        },
        Scenario {
            perturbation: Some(Perturbation {
                epsilon: 0.1,
                profile: Profile::P3,
            }),
            m_schedule: (10..=40).collect(),
            b_list: vec![1],
            precision: Precision::Double,
            quadrature: QuadratureChoice::Radial,
            ..base("p3-cp1", Manifold::Cp1, trivial(1))
        },
        Scenario {
            m_schedule: vec![],
            b_list: vec![1],
            ..base("flat-probe", Manifold::Flat1, trivial(1))
        },
    ];
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

pub fn find_scenario(name: &str) -> Result<Scenario, ScenarioError> {
    catalog()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ScenarioError::UnknownScenario(name.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_round_trips_through_config() {
        for s in catalog() {
            let parsed =
                parse_config(&s.to_config()).unwrap_or_else(|e| panic!("{}: {e:?}", s.name));
            assert_eq!(parsed, vec![s.clone()], "{}", s.to_config());
        }
    }

    #[test]
    fn catalog_names_unique_and_sorted() {
        let names: Vec<String> = catalog().into_iter().map(|s| s.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(names, sorted);
        assert!(find_scenario("cp7").is_err());
    }
}
