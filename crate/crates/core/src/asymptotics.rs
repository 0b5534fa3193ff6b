//! Extraction of the coefficients `a_k` in
//! `σ_b(m) ~ a_0 m^{bn} + a_1 m^{bn-1} + …` from sampled values, and the
//! checks that compare them with curvature predictions.
//!
//! Fits are done in `u = 1/m` on `y = σ_b m^{-bn}` so that the basis is a
//! polynomial in a small variable; arithmetic is double-double throughout.

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::CurvatureReport;
use crate::real::{Quad, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticsError {
    #[error("need at least {needed} samples for order {order}, have {got}")]
    TooFewSamples {
        order: usize,
        needed: usize,
        got: usize,
    },
    #[error(
        "sample errors too large to resolve a_{order} (propagated uncertainty {uncertainty:e})"
    )]
    InsufficientPrecision { order: usize, uncertainty: f64 },
    #[error("fit design matrix ill-conditioned (estimate {condition:e})")]
    IllConditioned { condition: f64 },
    #[error("residual is below the sample noise floor")]
    ResidualBelowNoise,
    #[error("only {resolved} coefficients resolved, need {needed}")]
    InsufficientCoefficients { resolved: usize, needed: usize },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
}

/// Condition estimates above this are rejected.
pub const CONDITION_LIMIT: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaSample {
    pub m: u32,
    pub value: Quad,
    /// Absolute error bound.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSeries {
    pub b: u32,
    pub n: usize,
    pub r: usize,
    pub point: Vec<[f64; 2]>,
    samples: Vec<SigmaSample>,
}

impl SigmaSeries {
    pub fn new(
        b: u32,
        n: usize,
        r: usize,
        point: Vec<[f64; 2]>,
        samples: Vec<SigmaSample>,
    ) -> Result<Self, AsymptoticsError> {
        if samples.windows(2).any(|w| w[0].m >= w[1].m) {
            return Err(AsymptoticsError::InvalidSeries(
                "m must be strictly increasing".into(),
            ));
        }
        if samples
            .iter()
            .any(|s| !(s.value > Quad::zero()) || !s.value.is_finite())
        {
            return Err(AsymptoticsError::InvalidSeries(
                "σ_b values must be positive".into(),
            ));
        }
        Ok(Self {
            b,
            n,
            r,
            point,
            samples,
        })
    }

    pub fn samples(&self) -> &[SigmaSample] {
        &self.samples
    }

    /// Leading exponent `bn`.
    pub fn exponent(&self) -> i32 {
        (self.b as usize * self.n) as i32
    }

    pub fn m_range(&self) -> Option<(u32, u32)> {
        Some((self.samples.first()?.m, self.samples.last()?.m))
    }

    /// Samples with `lo ≤ m ≤ hi`.
    pub fn window(&self, lo: u32, hi: u32) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .filter(|s| s.m >= lo && s.m <= hi)
                .copied()
                .collect(),
            ..self.clone()
        }
    }

    fn without(&self, skip: &[usize]) -> Vec<SigmaSample> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(i, _)| !skip.contains(i))
            .map(|(_, s)| *s)
            .collect()
    }

    /// `Σ_{k ≤ N} a_k m^{bn-k}`.
    pub fn truncated(&self, coefficients: &[f64], m: u32) -> Quad {
        let u = Quad::one() / Quad::from_usize(m as usize);
        let poly = coefficients
            .iter()
            .rev()
            .fold(Quad::zero(), |acc, a| acc * u + Quad::from_f64(*a));
        poly * Quad::from_usize(m as usize).powi(self.exponent())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub uncertainties: Vec<f64>,
    /// Log-log slope of `|σ_b - fit|` against `m`, when above noise.
    pub residual_order: Option<f64>,
    pub condition: f64,
}

struct RawFit {
    coefficients: Vec<Quad>,
    propagated: Vec<f64>,
    condition: f64,
}

/// Weighted least squares by Householder QR with column equilibration.
fn least_squares(
    samples: &[SigmaSample],
    exponent: i32,
    order: usize,
) -> Result<RawFit, AsymptoticsError> {
    let rows = samples.len();
    let cols = order + 1;
    let floor = Quad::from_f64(Quad::UNIT_ROUNDOFF * 16.0);
    let mut a = vec![vec![Quad::zero(); cols]; rows];
    let mut y = vec![Quad::zero(); rows];
    for (i, s) in samples.iter().enumerate() {
        let m = Quad::from_usize(s.m as usize);
        let scale = m.powi(-exponent);
        let yi = s.value * scale;
        let si = (Quad::from_f64(s.error) * scale).max(yi.abs() * floor);
        let u = Quad::one() / m;
        let mut p = Quad::one();
        for c in 0..cols {
            a[i][c] = p / si;
            p *= u;
        }
        y[i] = yi / si;
    }
    let col_scale: Vec<Quad> = (0..cols)
        .map(|c| {
            let s = (0..rows)
                .fold(Quad::zero(), |acc, i| acc + a[i][c] * a[i][c])
                .sqrt();
            if s > Quad::zero() {
                s
            } else {
                Quad::one()
            }
        })
        .collect();
    for row in a.iter_mut() {
        for c in 0..cols {
            row[c] /= col_scale[c];
        }
    }
    // Householder; R overwrites the upper triangle of `a`.
    for k in 0..cols {
        let norm = (k..rows)
            .fold(Quad::zero(), |acc, i| acc + a[i][k] * a[i][k])
            .sqrt();
        if norm == Quad::zero() {
            return Err(AsymptoticsError::IllConditioned {
                condition: f64::INFINITY,
            });
        }
        let alpha = if a[k][k] > Quad::zero() { -norm } else { norm };
        let mut v: Vec<Quad> = (k..rows).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vnorm2 = v.iter().fold(Quad::zero(), |acc, x| acc + *x * *x);
        if vnorm2 > Quad::zero() {
            for c in k..cols {
                let dot = (k..rows).fold(Quad::zero(), |acc, i| acc + v[i - k] * a[i][c]);
                let f = Quad::from_f64(2.0) * dot / vnorm2;
                for i in k..rows {
                    a[i][c] -= f * v[i - k];
                }
            }
            let dot = (k..rows).fold(Quad::zero(), |acc, i| acc + v[i - k] * y[i]);
            let f = Quad::from_f64(2.0) * dot / vnorm2;
            for i in k..rows {
                y[i] -= f * v[i - k];
            }
        }
    }
    // R^{-1} by back substitution, column by column.
    let mut rinv = vec![vec![Quad::zero(); cols]; cols];
    for j in 0..cols {
        for i in (0..=j).rev() {
            let mut acc = if i == j { Quad::one() } else { Quad::zero() };
            for k in (i + 1)..=j {
                acc -= a[i][k] * rinv[k][j];
            }
            rinv[i][j] = acc / a[i][i];
        }
    }
    let norm1 = |m: &dyn Fn(usize, usize) -> Quad| {
        (0..cols)
            .map(|j| (0..cols).fold(0.0, |acc, i| acc + m(i, j).abs().to_f64()))
            .fold(0.0, f64::max)
    };
    let condition =
        norm1(&|i, j| if i <= j { a[i][j] } else { Quad::zero() }) * norm1(&|i, j| rinv[i][j]);
    if !(condition <= CONDITION_LIMIT) {
        return Err(AsymptoticsError::IllConditioned { condition });
    }
    let mut coefficients = vec![Quad::zero(); cols];
    let mut propagated = vec![0.0; cols];
    for i in 0..cols {
        let mut acc = Quad::zero();
        let mut row2 = 0.0;
        for j in i..cols {
            acc += rinv[i][j] * y[j];
            row2 += rinv[i][j].to_f64().powi(2);
        }
        coefficients[i] = acc / col_scale[i];
        // Rows were whitened by the sample errors, so unit noise propagates
        // through R^{-1} directly.
        propagated[i] = row2.sqrt() / col_scale[i].to_f64();
    }
    Ok(RawFit {
        coefficients,
        propagated,
        condition,
    })
}

fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / k, sy / k);
    let (num, den) = points.iter().fold((0.0, 0.0), |(n, d), (x, y)| {
        let dx = x.ln() - mx;
        (n + dx * (y.ln() - my), d + dx * dx)
    });
    if den > 0.0 {
        Some(num / den)
    } else {
        None
    }
}

/// Fits `σ_b m^{-bn} ≈ Σ_{k ≤ N} a_k m^{-k}`. Uncertainties are the largest of
/// the propagated sample error, the spread over refits that drop each
/// adjacent pair of samples, and the shift under a fit of order `N + 1`.
pub fn fit_expansion(series: &SigmaSeries, order: usize) -> Result<ExpansionFit, AsymptoticsError> {
    let samples = series.samples();
    let needed = order + 3;
    if samples.len() < needed {
        return Err(AsymptoticsError::TooFewSamples {
            order,
            needed,
            got: samples.len(),
        });
    }
    let exponent = series.exponent();
    let full = least_squares(samples, exponent, order)?;
    let coefficients: Vec<f64> = full.coefficients.iter().map(|c| c.to_f64()).collect();
    let scale = coefficients[0].abs().max(1.0);
    if full.propagated[order] > scale {
        return Err(AsymptoticsError::InsufficientPrecision {
            order,
            uncertainty: full.propagated[order],
        });
    }
    let mut spread = vec![0.0f64; order + 1];
    for i in 0..samples.len() - 1 {
        let refit = least_squares(&series.without(&[i, i + 1]), exponent, order)?;
        for (k, s) in spread.iter_mut().enumerate() {
            *s = s.max(
                (refit.coefficients[k] - full.coefficients[k])
                    .abs()
                    .to_f64(),
            );
        }
    }
    if samples.len() > needed {
        if let Ok(higher) = least_squares(samples, exponent, order + 1) {
            for (k, s) in spread.iter_mut().enumerate() {
                *s = s.max(
                    (higher.coefficients[k] - full.coefficients[k])
                        .abs()
                        .to_f64(),
                );
            }
        }
    }
    let uncertainties = spread
        .iter()
        .zip(&full.propagated)
        .map(|(s, p)| s.max(*p))
        .collect();
    let noisy: Vec<(f64, f64)> = samples
        .iter()
        .filter_map(|s| {
            let r = (s.value - truncated_quad(&full.coefficients, exponent, s.m))
                .abs()
                .to_f64();
            let noise = s.error + s.value.to_f64() * Quad::UNIT_ROUNDOFF * 64.0;
            (r > 10.0 * noise).then_some((s.m as f64, r))
        })
        .collect();
    let residual_order = if noisy.len() * 2 >= samples.len() {
        loglog_slope(&noisy)
    } else {
        None
    };
    Ok(ExpansionFit {
        order,
        coefficients,
        uncertainties,
        residual_order,
        condition: full.condition,
    })
}

fn truncated_quad(coefficients: &[Quad], exponent: i32, m: u32) -> Quad {
    let u = Quad::one() / Quad::from_usize(m as usize);
    let poly = coefficients
        .iter()
        .rev()
        .fold(Quad::zero(), |acc, a| acc * u + *a);
    poly * Quad::from_usize(m as usize).powi(exponent)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderCheck {
    pub slope: f64,
    /// `bn - N - 1 + 0.2`.
    pub bound: f64,
    pub pass: bool,
}

/// Log-log slope of `|σ_b(m) - Σ_{k≤N} a_k m^{bn-k}|` using the first `N + 1`
/// coefficients of `fit` (which may come from a higher-order fit).
pub fn remainder_order_check(
    series: &SigmaSeries,
    fit: &ExpansionFit,
    order: usize,
) -> Result<RemainderCheck, AsymptoticsError> {
    if fit.coefficients.len() < order + 1 {
        return Err(AsymptoticsError::InsufficientCoefficients {
            resolved: fit.coefficients.len(),
            needed: order + 1,
        });
    }
    let head = &fit.coefficients[..=order];
    let exponent = series.exponent();
    let mut points = Vec::new();
    for s in series.samples() {
        let r = (s.value - series.truncated(head, s.m)).abs().to_f64();
        let m = s.m as f64;
        let coefficient_noise: f64 = fit.uncertainties[..=order]
            .iter()
            .enumerate()
            .map(|(k, u)| u * m.powi(exponent - k as i32))
            .sum();
        let noise = s.error + s.value.to_f64() * Quad::UNIT_ROUNDOFF * 64.0 + coefficient_noise;
        if r <= 10.0 * noise {
            return Err(AsymptoticsError::ResidualBelowNoise);
        }
        points.push((m, r));
    }
    let slope = loglog_slope(&points).ok_or(AsymptoticsError::InsufficientCoefficients {
        resolved: points.len(),
        needed: 2,
    })?;
    let bound = (exponent - order as i32 - 1) as f64 + 0.2;
    Ok(RemainderCheck {
        slope,
        bound,
        pass: slope <= bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPrediction {
    pub a0: f64,
    pub a1: f64,
    /// `(k, prediction)` for `k = 2..=K`.
    pub leading: Vec<(usize, f64)>,
    pub curvature: CurvatureReport,
}

impl CoefficientPrediction {
    pub fn get(&self, k: usize) -> Option<f64> {
        match k {
            0 => Some(self.a0),
            1 => Some(self.a1),
            _ => self.leading.iter().find(|(j, _)| *j == k).map(|(_, v)| *v),
        }
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `a_0 = r`, `a_1 = ½ b r ρ + ρ_E`, and for `k ≥ 2` the leading curvature
/// terms `b r k/(k+1)! Δ^{k-1}ρ + 1/k! Δ^{k-1}ρ_E`.
pub fn predict_coefficients(report: &CurvatureReport, b: u32, r: usize) -> CoefficientPrediction {
    let br = (b as usize * r) as f64;
    let leading = (2..=report.laplacians_rho.len())
        .map(|k| {
            let rho = report.laplacians_rho[k - 1];
            let rho_e = report.laplacians_rho_e.get(k - 1).copied().unwrap_or(0.0);
            (
                k,
                br * k as f64 / factorial(k + 1) * rho + rho_e / factorial(k),
            )
        })
        .collect();
    CoefficientPrediction {
        a0: r as f64,
        a1: 0.5 * br * report.rho + report.rho_e,
        leading,
        curvature: report.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Match,
    Disputed,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Match => "MATCH",
            Verdict::Disputed => "DISPUTED",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Judgement {
    pub verdict: Verdict,
    /// Largest `|fit - prediction|` accepted as a match.
    pub tolerance: f64,
}

/// MATCH within `max(floor, 5 × uncertainty)`; INCONCLUSIVE when the
/// uncertainty alone exceeds `resolution`; DISPUTED otherwise.
pub fn judge(
    fit: f64,
    uncertainty: f64,
    prediction: f64,
    floor: f64,
    resolution: f64,
) -> Judgement {
    let tolerance = floor.max(5.0 * uncertainty);
    let verdict = if !fit.is_finite() || uncertainty > resolution {
        Verdict::Inconclusive
    } else if (fit - prediction).abs() <= tolerance {
        Verdict::Match
    } else {
        Verdict::Disputed
    };
    Judgement { verdict, tolerance }
}

/// Coefficients of `(Σ_k c_k u^k)^b` through `u^order`.
pub fn power_series_pow(coefficients: &[f64], b: u32, order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    out[0] = 1.0;
    for _ in 0..b {
        let mut next = vec![0.0; order + 1];
        for (i, x) in out.iter().enumerate() {
            for (j, c) in coefficients.iter().enumerate().take(order + 1 - i) {
                next[i + j] += x * c;
            }
        }
        out = next;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Reciprocal of the fitted geometric growth rate of `|a_j|`.
    pub delta_estimate: Option<f64>,
    pub terminating: bool,
    pub bound_holds: bool,
    /// Highest `j` whose coefficient is resolved.
    pub resolved: usize,
    /// Per `j`: verdict that `|a_j| ≤ C δ^{-j}` is consistent with the data.
    pub per_coefficient: Vec<Verdict>,
    pub growth_report: String,
}

/// Zero threshold for coefficients of a terminating expansion.
pub const VANISHING: f64 = 1e-9;

/// Geometric-growth probe on `|a_j|` for `j <= top`. Coefficients with
/// uncertainty above half their size end the resolved range. Super-geometric
/// growth is flagged when a second difference of `ln|a_j|` exceeds `ln 2`.
pub fn convergence_probe(
    fit: &ExpansionFit,
    analytic: bool,
    min_resolved: usize,
    top: usize,
) -> Result<ConvergenceReport, AsymptoticsError> {
    let a = &fit.coefficients;
    let unc = &fit.uncertainties;
    let mut resolved = 0usize;
    for j in 0..a.len().min(top.saturating_add(1)) {
        let known_zero = a[j].abs() <= VANISHING && unc[j] <= VANISHING;
        if known_zero || unc[j] <= 0.5 * a[j].abs() {
            resolved = j;
        } else {
            break;
        }
    }
    if resolved < min_resolved {
        return Err(AsymptoticsError::InsufficientCoefficients {
            resolved: resolved + 1,
            needed: min_resolved + 1,
        });
    }
    let last_nonzero = (0..=resolved)
        .rev()
        .find(|&j| a[j].abs() > VANISHING)
        .unwrap_or(0);
    let terminating =
        last_nonzero < resolved && ((last_nonzero + 1)..=resolved).all(|j| a[j].abs() <= VANISHING);
    let per = |ok: bool| {
        (0..a.len())
            .map(|j| {
                if j > resolved {
                    Verdict::Inconclusive
                } else if ok {
                    Verdict::Match
                } else {
                    Verdict::Disputed
                }
            })
            .collect::<Vec<_>>()
    };
    if terminating {
        return Ok(ConvergenceReport {
            delta_estimate: None,
            terminating: true,
            bound_holds: true,
            resolved,
            per_coefficient: per(true),
            growth_report: format!(
                "terminating series (a_j = 0 for {} < j <= {}); bound satisfied for every δ ≤ 1",
                last_nonzero, resolved
            ),
        });
    }
    let logs: Vec<(f64, f64)> = (0..=resolved)
        .filter(|&j| a[j].abs() > VANISHING)
        .map(|j| (j as f64, a[j].abs().ln()))
        .collect();
    let k = logs.len() as f64;
    let (mx, my) = logs
        .iter()
        .fold((0.0, 0.0), |(x, y), p| (x + p.0 / k, y + p.1 / k));
    let (num, den) = logs.iter().fold((0.0, 0.0), |(n, d), p| {
        (n + (p.0 - mx) * (p.1 - my), d + (p.0 - mx).powi(2))
    });
    let rate = if den > 0.0 { num / den } else { 0.0 };
    let delta_estimate = Some((-rate).exp());
    let bound_holds = logs
        .windows(3)
        .all(|w| w[2].1 - 2.0 * w[1].1 + w[0].1 <= std::f64::consts::LN_2);
    let growth_report = format!(
        "{} metric: |a_j| grows geometrically with rate {:.6e} over j <= {}; {}",
        if analytic { "analytic" } else { "non-analytic" },
        rate.exp(),
        resolved,
        if bound_holds {
            "no super-geometric growth"
        } else {
            "super-geometric growth detected"
        }
    );
    Ok(ConvergenceReport {
        delta_estimate,
        terminating: false,
        bound_holds,
        resolved,
        per_coefficient: per(bound_holds),
        growth_report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRemainderProbe {
    /// `(m, N, remainder / (m^{bn} e^{-(ln m)^2}))`.
    pub ratios: Vec<(u32, usize, f64)>,
    /// Largest ratio, an estimate of the constant.
    pub constant: f64,
    pub holds: bool,
}

/// Truncates at `N = ⌊ln m⌋` and compares the remainder with
/// `m^{bn} e^{-(ln m)^2}`. The bound holds when the ratio over the upper half
/// of the range does not exceed its maximum over the lower half.
pub fn log_remainder_probe(series: &SigmaSeries, fit: &ExpansionFit) -> LogRemainderProbe {
    let exponent = series.exponent();
    let ratios: Vec<(u32, usize, f64)> = series
        .samples()
        .iter()
        .map(|s| {
            let m = s.m as f64;
            let order = (m.ln().floor() as usize).min(fit.coefficients.len() - 1);
            let r = (s.value - series.truncated(&fit.coefficients[..=order], s.m))
                .abs()
                .to_f64();
            let noise = s.error + s.value.to_f64() * Quad::UNIT_ROUNDOFF * 64.0;
            let r = if r <= 10.0 * noise { 0.0 } else { r };
            (
                s.m,
                order,
                r / (m.powi(exponent) * (-(m.ln().powi(2))).exp()),
            )
        })
        .collect();
    let half = ratios.len() / 2;
    let max = |xs: &[(u32, usize, f64)]| xs.iter().map(|r| r.2).fold(0.0, f64::max);
    let (lower, upper) = ratios.split_at(half);
    let holds = max(upper) <= max(lower);
    LogRemainderProbe {
        constant: max(&ratios),
        ratios,
        holds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series<F: Fn(u32) -> Quad>(
        b: u32,
        n: usize,
        ms: impl Iterator<Item = u32>,
        f: F,
    ) -> SigmaSeries {
        let samples = ms
            .map(|m| SigmaSample {
                m,
                value: f(m),
                error: 0.0,
            })
            .collect();
        SigmaSeries::new(b, n, 1, vec![[0.0, 0.0]], samples).unwrap()
    }

    fn q(m: u32) -> Quad {
        Quad::from_usize(m as usize)
    }

    #[test]
    fn recovers_binomial_coefficients() {
        for b in 1..=3u32 {
            let s = series(b, 1, 5..=60, |m| (q(m) + Quad::one()).powi(b as i32));
            let fit = fit_expansion(&s, b as usize + 2).unwrap();
            for k in 0..=(b as usize + 2) {
                let expected = if k <= b as usize {
                    (0..k).fold(1.0, |acc, i| acc * (b as f64 - i as f64) / (i as f64 + 1.0))
                } else {
                    0.0
                };
                assert!(
                    (fit.coefficients[k] - expected).abs() < 1e-10,
                    "b={b} k={k}: {:?}",
                    fit.coefficients
                );
            }
        }
    }

    #[test]
    fn rank_r_leading_coefficient() {
        let s = series(2, 1, 5..=40, |m| {
            Quad::from_f64(3.0) * (q(m) + Quad::one()).powi(2)
        });
        let fit = fit_expansion(&s, 3).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn constant_series() {
        let s = series(1, 0, 1..=12, |_| Quad::from_f64(2.5));
        let fit = fit_expansion(&s, 2).unwrap();
        assert!((fit.coefficients[0] - 2.5).abs() < 1e-12);
        assert!(fit.coefficients[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn too_few_samples() {
        let s = series(1, 1, 5..=7, |m| q(m) + Quad::one());
        assert!(matches!(
            fit_expansion(&s, 1),
            Err(AsymptoticsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn noisy_samples_cannot_resolve_high_order() {
        let samples = (5..=12)
            .map(|m| SigmaSample {
                m,
                value: q(m) + Quad::one(),
                error: 1e3,
            })
            .collect();
        let s = SigmaSeries::new(1, 1, 1, vec![], samples).unwrap();
        assert!(matches!(
            fit_expansion(&s, 4),
            Err(AsymptoticsError::InsufficientPrecision { .. })
        ));
    }

    #[test]
    fn remainder_slopes() {
        let s = series(1, 1, 5..=60, |m| q(m) + Quad::one());
        let fit = fit_expansion(&s, 3).unwrap();
        let check = remainder_order_check(&s, &fit, 0).unwrap();
        assert!(check.slope.abs() < 1e-12 && check.pass);
        assert_eq!(
            remainder_order_check(&s, &fit, 1),
            Err(AsymptoticsError::ResidualBelowNoise)
        );
        let s3 = series(3, 1, 20..=50, |m| (q(m) + Quad::one()).powi(3));
        let fit3 = fit_expansion(&s3, 5).unwrap();
        let c = remainder_order_check(&s3, &fit3, 1).unwrap();
        assert!(c.pass && (c.slope - 1.0).abs() < 0.1, "{c:?}");
    }

    #[test]
    fn predictions_on_fubini_study() {
        use crate::geometry::{
            curvature_report, BundleMetric, ChartPoint, Geometry, KahlerPotential,
        };
        let g = Geometry::new(KahlerPotential::fubini_study(1), BundleMetric::trivial(1));
        let report = curvature_report(&g, &ChartPoint::<f64>::origin(1), 3).unwrap();
        let p = predict_coefficients(&report, 1, 1);
        assert!((p.a1 - 1.0).abs() < 1e-12);
        assert!(p.leading.iter().all(|(_, v)| v.abs() < 1e-10));
        let p = predict_coefficients(&report, 3, 2);
        assert!((p.a0 - 2.0).abs() < 1e-15 && (p.a1 - 6.0).abs() < 1e-12);
        let twisted = Geometry::new(
            KahlerPotential::fubini_study(1),
            BundleMetric::twisted(&[2]),
        );
        let report = curvature_report(&twisted, &ChartPoint::<f64>::origin(1), 1).unwrap();
        assert!((predict_coefficients(&report, 1, 1).a1 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn verdicts() {
        assert_eq!(
            judge(1.0, 1e-12, 1.0 + 1e-10, 1e-8, 1.0).verdict,
            Verdict::Match
        );
        assert_eq!(judge(4.0, 1e-12, 3.0, 1e-8, 1.0).verdict, Verdict::Disputed);
        assert_eq!(
            judge(4.0, 2.0, 3.0, 1e-8, 1.0).verdict,
            Verdict::Inconclusive
        );
    }

    #[test]
    fn power_series() {
        assert_eq!(
            power_series_pow(&[1.0, 1.0], 3, 4),
            vec![1.0, 3.0, 3.0, 1.0, 0.0]
        );
    }

    #[test]
    fn terminating_convergence_and_log_remainder() {
        let s = series(2, 1, 5..=60, |m| (q(m) + Quad::one()).powi(2));
        let fit = fit_expansion(&s, 5).unwrap();
        let report = convergence_probe(&fit, true, 4, usize::MAX).unwrap();
        assert!(report.terminating && report.bound_holds, "{report:?}");
        assert!(log_remainder_probe(&s, &fit).holds);
    }

    #[test]
    fn geometric_growth_probe() {
        // σ = m / (1 - 2/m) has a_j = 2^j.
        let s = series(1, 1, 20..=60, |m| {
            q(m) / (Quad::one() - Quad::from_f64(2.0) / q(m))
        });
        let fit = fit_expansion(&s, 8).unwrap();
        let report = convergence_probe(&fit, true, 2, usize::MAX).unwrap();
        assert!(
            !report.terminating && report.bound_holds,
            "{report:?} {fit:?}"
        );
        let delta = report.delta_estimate.unwrap();
        assert!((delta - 0.5).abs() < 0.05, "{delta}");
    }
}
