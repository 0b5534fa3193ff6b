use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Precision, Scenario};
use crate::asymptotics::{
    convergence_probe, fit_expansion, judge, log_remainder_probe, predict_coefficients,
    remainder_order_check, AsymptoticsError, CoefficientPrediction, ConvergenceReport,
    ExpansionFit, LogRemainderProbe, SigmaSample, SigmaSeries, Verdict,
};
use crate::geometry::{curvature_report, ChartPoint, CurvatureReport, Geometry, K_MAX};
use crate::quadrature::Integrator;
use crate::real::{Quad, Real};
use crate::sections::{
    density_matrix, expected_dimension, gram_matrix, trace_identity_check, GramStrategy,
    GramStructure, SectionBasis, SectionError,
};

/// Note attached to `a_1` rows disputed because of the `ρ_E` normalization.
pub const OPEN_QUESTION_RHO_E: &str = "open question rho_E";

const CONVENTIONS: [&str; 5] = [
    "g_{ij} = d_i dbar_j phi, h_L = exp(-phi)",
    "R_{ij} = -d_i dbar_j log det g, rho = g^{ij} R_{ij}",
    "Delta = g^{ij} d_i dbar_j (complex Laplacian)",
    "dmu = (2 pi)^{-n} omega^n / n!",
    "FS on CP^1: rho = 2, sigma_1 = m + 1",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub m: u32,
    pub sigma_b: f64,
    pub err_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub k: usize,
    pub a_fit: Option<f64>,
    pub a_unc: Option<f64>,
    pub a_pred: Option<f64>,
    pub verdict: Verdict,
    /// Absolute tolerance the verdict was judged against.
    pub tolerance: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderRow {
    pub order: usize,
    pub window: (u32, u32),
    pub slope: Option<f64>,
    pub bound: f64,
    /// `pass`, `fail` or `below-noise`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub b: u32,
    pub point_index: usize,
    pub point: Vec<[f64; 2]>,
    pub m_range: Option<(u32, u32)>,
    pub samples: Vec<SampleRow>,
    pub fit: Option<ExpansionFit>,
    pub fit_error: Option<String>,
    pub coefficients: Vec<CoefficientRow>,
    pub remainder: Vec<RemainderRow>,
    pub convergence: Option<ConvergenceReport>,
    pub convergence_error: Option<String>,
    pub log_remainder: Option<LogRemainderProbe>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramRow {
    pub m: u32,
    pub d: usize,
    pub structure: GramStructure,
    pub condition: f64,
    pub scaled_condition: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub m: u32,
    pub residual: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioStatus {
    Completed,
    /// Some `m` values failed; fits use the realized range.
    Partial,
    /// Curvature and predictions only.
    GeometryOnly,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub scenario: Scenario,
    pub precision: Precision,
    pub analytic: bool,
    pub strategy: Option<GramStrategy>,
    pub integrator: Option<Integrator>,
    pub status: ScenarioStatus,
    pub curvature: Vec<CurvatureReport>,
    pub gram: Vec<GramRow>,
    pub gram_failures: Vec<(u32, String)>,
    pub trace_residuals: Vec<TraceRow>,
    pub series: Vec<SeriesReport>,
    pub invariant_failures: Vec<String>,
    pub precision_failures: Vec<String>,
    pub error: Option<String>,
}

impl ScenarioReport {
    fn empty(s: &Scenario, precision: Precision) -> Self {
        Self {
            name: s.name.clone(),
            scenario: s.clone(),
            precision,
            analytic: s.is_analytic(),
            strategy: None,
            integrator: None,
            status: ScenarioStatus::Completed,
            curvature: Vec::new(),
            gram: Vec::new(),
            gram_failures: Vec::new(),
            trace_residuals: Vec::new(),
            series: Vec::new(),
            invariant_failures: Vec::new(),
            precision_failures: Vec::new(),
            error: None,
        }
    }

    pub fn series_for(&self, b: u32, point: usize) -> Option<&SeriesReport> {
        self.series
            .iter()
            .find(|s| s.b == b && s.point_index == point)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub conventions: Vec<String>,
    pub precision_override: Option<Precision>,
    pub scenarios: Vec<ScenarioReport>,
    /// Wall-clock seconds per scenario; not part of the serialized report.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    /// 0 success, 1 invariant failure, 3 precision or quadrature failure.
    pub fn exit_code(&self) -> i32 {
        if self
            .scenarios
            .iter()
            .any(|s| !s.invariant_failures.is_empty())
        {
            1
        } else if self
            .scenarios
            .iter()
            .any(|s| !s.precision_failures.is_empty())
        {
            3
        } else {
            0
        }
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}

/// Runs every scenario; failures are recorded per scenario and never stop
/// the others. Reports are ordered by scenario name.
pub fn run_suite(scenarios: &[Scenario], precision: Option<Precision>) -> RunReport {
    let mut reports = Vec::new();
    let mut timings = Vec::new();
    for s in scenarios {
        let start = Instant::now();
        reports.push(run_scenario(s, precision));
        timings.push((s.name.clone(), start.elapsed().as_secs_f64()));
    }
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    RunReport {
        conventions: CONVENTIONS.iter().map(|c| c.to_string()).collect(),
        precision_override: precision,
        scenarios: reports,
        timings,
    }
}

pub fn run_scenario(s: &Scenario, precision: Option<Precision>) -> ScenarioReport {
    match precision.unwrap_or(s.precision) {
        Precision::Double => run_with::<f64>(s, Precision::Double),
        Precision::High => run_with::<Quad>(s, Precision::High),
    }
}

struct Tolerances {
    a0: f64,
    a1_abs: f64,
    a1_rel: f64,
    trace: f64,
}

fn tolerances(strategy: GramStrategy) -> Tolerances {
    match strategy {
        GramStrategy::Exact => Tolerances {
            a0: 1e-8,
            a1_abs: 1e-8,
            a1_rel: 0.0,
            trace: 1e-9,
        },
        _ => Tolerances {
            a0: 1e-6,
            a1_abs: 0.0,
            a1_rel: 1e-3,
            trace: 1e-9,
        },
    }
}

/// Highest order tried when a scenario does not fix one.
const MAX_SEARCH_ORDER: usize = 16;
/// Fitted coefficients past this order on quadrature data track the fit
/// window rather than the expansion, so the growth probe stops here.
const QUADRATURE_PROBE_ORDER: usize = 2;

/// `σ_b` samples for one point and all `b`, in schedule order.
type PointSamples = Vec<Vec<SigmaSample>>;

fn run_with<T: Real>(s: &Scenario, precision: Precision) -> ScenarioReport {
    let mut report = ScenarioReport::empty(s, precision);
    let geometry = s.geometry();
    let points: Vec<ChartPoint<T>> = s
        .points
        .iter()
        .map(|p| {
            ChartPoint::new(
                p.iter()
                    .map(|[re, im]| num_complex::Complex::new(T::from_f64(*re), T::from_f64(*im)))
                    .collect(),
            )
        })
        .collect();
    for x in &points {
        match curvature_report(&geometry, x, K_MAX) {
            Ok(c) => report.curvature.push(c),
            Err(e) => {
                report.status = ScenarioStatus::Failed;
                report.error = Some(format!("curvature: {e}"));
                report
                    .invariant_failures
                    .push(format!("curvature unavailable: {e}"));
                return report;
            }
        }
    }
    let r = s.rank();
    if s.manifold.is_flat() {
        report.status = ScenarioStatus::GeometryOnly;
        for &b in &s.b_list {
            for (i, c) in report.curvature.clone().iter().enumerate() {
                let pred = predict_coefficients(c, b, r);
                let rows = (0..=1)
                    .map(|k| CoefficientRow {
                        k,
                        a_fit: None,
                        a_unc: None,
                        a_pred: pred.get(k),
                        verdict: Verdict::Inconclusive,
                        tolerance: None,
                        note: Some("geometry-only probe".into()),
                    })
                    .collect();
                report.series.push(SeriesReport {
                    b,
                    point_index: i,
                    point: s.points[i].clone(),
                    m_range: None,
                    samples: Vec::new(),
                    fit: None,
                    fit_error: None,
                    coefficients: rows,
                    remainder: Vec::new(),
                    convergence: None,
                    convergence_error: None,
                    log_remainder: None,
                });
            }
        }
        return report;
    }

    let strategy = match s.quadrature.mode() {
        Some(mode) => match GramStrategy::for_mode(mode, &geometry) {
            Ok(st) => st,
            Err(e) => {
                report.status = ScenarioStatus::Failed;
                report.error = Some(e.to_string());
                report.precision_failures.push(e.to_string());
                return report;
            }
        },
        None => GramStrategy::best(&geometry),
    };
    let integrator = Integrator::for_precision::<T>(strategy.mode());
    report.strategy = Some(strategy);
    report.integrator = Some(integrator.clone());
    let tol = tolerances(strategy);

    let mut samples: Vec<PointSamples> = vec![vec![Vec::new(); s.b_list.len()]; points.len()];
    for &m in &s.m_schedule {
        match sample_m(s, &geometry, &integrator, &points, m, &mut report) {
            Ok(values) => {
                for (p, per_b) in values.into_iter().enumerate() {
                    for (j, sample) in per_b.into_iter().enumerate() {
                        samples[p][j].push(sample);
                    }
                }
            }
            Err(e) => report.gram_failures.push((m, e.to_string())),
        }
    }
    for row in &report.trace_residuals {
        if !(row.residual < tol.trace) {
            report.invariant_failures.push(format!(
                "trace identity residual {:e} at m = {} exceeds {:e}",
                row.residual, row.m, tol.trace
            ));
        }
    }
    if samples
        .first()
        .is_none_or(|p| p.first().is_none_or(|v| v.is_empty()))
    {
        report.status = ScenarioStatus::Failed;
        report.error = Some("no m value produced a usable Gram matrix".into());
        report.precision_failures.push("no usable samples".into());
        return report;
    }
    if !report.gram_failures.is_empty() {
        report.status = ScenarioStatus::Partial;
    }

    for (j, &b) in s.b_list.iter().enumerate() {
        for (p, point_samples) in samples.iter().enumerate() {
            let prediction = predict_coefficients(&report.curvature[p], b, r);
            let series = SigmaSeries::new(
                b,
                s.dimension(),
                r,
                s.points[p].clone(),
                point_samples[j].clone(),
            );
            let entry = match series {
                Ok(series) => analyse(s, strategy, &tol, &series, &prediction, p, &mut report),
                Err(e) => {
                    report
                        .precision_failures
                        .push(format!("b = {b}, point {p}: {e}"));
                    continue;
                }
            };
            report.series.push(entry);
        }
    }
    report
}

/// Gram matrix at one `m` and `σ_b` at every point; trace identity if asked.
fn sample_m<T: Real>(
    s: &Scenario,
    geometry: &Geometry,
    integrator: &Integrator,
    points: &[ChartPoint<T>],
    m: u32,
    report: &mut ScenarioReport,
) -> Result<Vec<Vec<SigmaSample>>, SectionError> {
    let basis = SectionBasis::build(geometry, m)?;
    let d = basis.len();
    let expected = expected_dimension(s.dimension(), m, &geometry.bundle.twists());
    if d != expected {
        report.invariant_failures.push(format!(
            "m = {m}: basis has {d} sections, expected {expected}"
        ));
    }
    let gram = gram_matrix::<T>(&basis, geometry, integrator)?;
    report.gram.push(GramRow {
        m,
        d,
        structure: gram.structure,
        condition: gram.condition,
        scaled_condition: gram.scaled_condition,
        relative_error: gram.relative_error,
    });
    if s.trace_check {
        let res = trace_identity_check(&basis, &gram, geometry, integrator)?;
        report.trace_residuals.push(TraceRow {
            m,
            residual: res.residual,
            error: res.error,
        });
    }
    // Perturbation of K relative to its size: quadrature error amplified by
    // the scaled condition, plus rounding in the triangular solves.
    let amplification = gram.scaled_condition.max(1.0);
    let relative =
        amplification * (2.0 * gram.relative_error + 100.0 * d as f64 * T::UNIT_ROUNDOFF);
    points
        .iter()
        .map(|x| {
            let k = density_matrix(&basis, &gram, geometry, x)?;
            Ok(s.b_list
                .iter()
                .map(|&b| {
                    let value = k.sigma_b(b).to_quad();
                    SigmaSample {
                        m,
                        value,
                        error: value.to_f64() * b as f64 * relative,
                    }
                })
                .collect())
        })
        .collect()
}

fn choose_order(
    s: &Scenario,
    strategy: GramStrategy,
    series: &SigmaSeries,
) -> Result<ExpansionFit, AsymptoticsError> {
    let available = series.samples().len();
    if let Some(order) = s.order {
        return fit_expansion(series, order);
    }
    if strategy == GramStrategy::Exact {
        let order = (series.exponent() as usize + 3).min(available.saturating_sub(4).max(1));
        return fit_expansion(series, order);
    }
    // Smallest a_1 uncertainty over the orders the data supports.
    let mut best: Option<ExpansionFit> = None;
    let mut last_error = None;
    for order in 2..=MAX_SEARCH_ORDER.min(available.saturating_sub(4)) {
        match fit_expansion(series, order) {
            Ok(fit) => {
                if best
                    .as_ref()
                    .is_none_or(|b| fit.uncertainties[1] < b.uncertainties[1])
                {
                    best = Some(fit);
                }
            }
            Err(e) => last_error = Some(e),
        }
    }
    match (best, last_error) {
        (Some(fit), _) => Ok(fit),
        (None, Some(e)) => Err(e),
        (None, None) => fit_expansion(series, 1),
    }
}

fn analyse(
    s: &Scenario,
    strategy: GramStrategy,
    tol: &Tolerances,
    series: &SigmaSeries,
    prediction: &CoefficientPrediction,
    point_index: usize,
    report: &mut ScenarioReport,
) -> SeriesReport {
    let b = series.b;
    let rows: Vec<SampleRow> = series
        .samples()
        .iter()
        .map(|x| SampleRow {
            m: x.m,
            sigma_b: x.value.to_f64(),
            err_bound: x.error,
        })
        .collect();
    let mut out = SeriesReport {
        b,
        point_index,
        point: series.point.clone(),
        m_range: series.m_range(),
        samples: rows,
        fit: None,
        fit_error: None,
        coefficients: Vec::new(),
        remainder: Vec::new(),
        convergence: None,
        convergence_error: None,
        log_remainder: None,
    };
    let tag = format!("b = {b}, point {point_index}");
    let fit = match choose_order(s, strategy, series) {
        Ok(fit) => fit,
        Err(e) => {
            report
                .precision_failures
                .push(format!("{tag}: fit failed: {e}"));
            out.fit_error = Some(e.to_string());
            return out;
        }
    };

    for k in 0..=fit.order {
        let (a, u) = (fit.coefficients[k], fit.uncertainties[k]);
        let pred = prediction.get(k);
        let row = match (k, pred) {
            (0 | 1, Some(p)) => {
                let floor = if k == 0 {
                    tol.a0
                } else {
                    tol.a1_abs.max(tol.a1_rel * p.abs())
                };
                let j = judge(a, u, p, floor, 0.1 * p.abs().max(1.0));
                let mut note = None;
                if j.verdict == Verdict::Disputed {
                    let covered = k == 1 && b > 1 && s.bundle.is_twisted();
                    if covered {
                        let c = &prediction.curvature;
                        let scaled =
                            0.5 * (b as usize * series.r) as f64 * c.rho + b as f64 * c.rho_e;
                        let agrees = (a - scaled).abs() <= j.tolerance;
                        note = Some(format!(
                            "{OPEN_QUESTION_RHO_E}: b-scaled value {scaled:.16e} {}",
                            if agrees { "matches" } else { "also differs" }
                        ));
                        if !agrees {
                            report
                                .invariant_failures
                                .push(format!("{tag}: a_1 = {a:e} matches neither prediction"));
                        }
                    } else {
                        report
                            .invariant_failures
                            .push(format!("{tag}: a_{k} = {a:e} disputes prediction {p:e}"));
                    }
                }
                CoefficientRow {
                    k,
                    a_fit: Some(a),
                    a_unc: Some(u),
                    a_pred: Some(p),
                    verdict: j.verdict,
                    tolerance: Some(j.tolerance),
                    note,
                }
            }
            _ => CoefficientRow {
                k,
                a_fit: Some(a),
                a_unc: Some(u),
                a_pred: pred,
                verdict: Verdict::Inconclusive,
                tolerance: None,
                note: pred.map(|_| "leading curvature term only".to_string()),
            },
        };
        out.coefficients.push(row);
    }

    let window = s.remainder_window.or(series.m_range()).unwrap_or((0, 0));
    let windowed = series.window(window.0, window.1);
    for order in 0..=1usize {
        if fit.order <= order || windowed.samples().len() < 3 {
            continue;
        }
        let bound = (series.exponent() - order as i32 - 1) as f64 + 0.2;
        let (slope, status) = match remainder_order_check(&windowed, &fit, order) {
            Ok(c) => {
                if !c.pass {
                    report.invariant_failures.push(format!(
                        "{tag}: remainder slope {:.3} above {:.1} at N = {order}",
                        c.slope, c.bound
                    ));
                }
                (Some(c.slope), if c.pass { "pass" } else { "fail" })
            }
            Err(AsymptoticsError::ResidualBelowNoise) => (None, "below-noise"),
            Err(e) => {
                report
                    .precision_failures
                    .push(format!("{tag}: remainder check: {e}"));
                (None, "unavailable")
            }
        };
        out.remainder.push(RemainderRow {
            order,
            window,
            slope,
            bound,
            status: status.into(),
        });
    }

    let exact = strategy == GramStrategy::Exact;
    let (min_resolved, top) = if exact {
        (4, usize::MAX)
    } else {
        (2, QUADRATURE_PROBE_ORDER)
    };
    match convergence_probe(&fit, report.analytic, min_resolved, top) {
        Ok(c) => {
            if report.analytic && !c.bound_holds {
                report
                    .invariant_failures
                    .push(format!("{tag}: {}", c.growth_report));
            }
            out.convergence = Some(c);
        }
        Err(e) => out.convergence_error = Some(e.to_string()),
    }
    if exact {
        let probe = log_remainder_probe(series, &fit);
        if !probe.holds {
            report.invariant_failures.push(format!(
                "{tag}: remainder at N = floor(ln m) exceeds m^(bn) exp(-(ln m)^2) scaling"
            ));
        }
        out.log_remainder = Some(probe);
    }
    out.fit = Some(fit);
    out
}
