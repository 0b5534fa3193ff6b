//! Holomorphic sections of `L^m ⊗ E` over `CP^n` as monomials in a frame of
//! `E = ⊕ O(k_α)`, their `L^2` Gram matrix, and the pointwise density matrix.
//!
//! With `G = L L^*` the orthonormal sections are `T = L^{-1} s`. The density
//! matrix `S(x)_{ab} = ⟨T_a, T_b⟩(x)` equals `Y Y^*` for the `d × r` matrix
//! `Y = L^{-1} S̃`, where `S̃_{iα} = s_i^α(x) e^{-mφ/2} H_α^{1/2}`. Its nonzero
//! spectrum is that of the `r × r` matrix `K = Y^* Y`.

use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ChartPoint, Geometry, GeometryError};
use crate::linalg::{hermitian_eigen, CMatrix, Cholesky, LinalgError};
use crate::quadrature::{
    dirichlet_exact, simplex_moment, Integrator, QuadratureError, QuadratureMode, RadialNode,
};
use crate::real::{abs2, cabs, cx_real, Cx, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SectionError {
    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),
    #[error("Gram matrix too ill-conditioned for {precision} precision (scaled condition {scaled_condition:e}, raw {condition:e})")]
    SingularGram {
        precision: &'static str,
        condition: f64,
        scaled_condition: f64,
    },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `z^exponents` in frame `frame`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisEntry {
    pub exponents: Vec<u32>,
    pub frame: usize,
}

impl BasisEntry {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionBasis {
    m: u32,
    n: usize,
    twists: Vec<i64>,
    entries: Vec<BasisEntry>,
    /// Rows are coefficients of recombined sections in the monomial basis.
    recombination: Option<CMatrix<f64>>,
}

fn monomials(n: usize, max_degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for degree in 0..=max_degree {
        let mut current = vec![0u32; n];
        fill(&mut out, &mut current, 0, degree);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, var: usize, remaining: u32) {
    if var + 1 == current.len() {
        current[var] = remaining;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e;
        fill(out, current, var + 1, remaining - e);
    }
    current[var] = 0;
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// `dim H^0(CP^n, O(m) ⊗ ⊕ O(k_α)) = Σ_α C(m + k_α + n, n)`.
pub fn expected_dimension(n: usize, m: u32, twists: &[i64]) -> usize {
    twists
        .iter()
        .map(|&k| {
            let deg = m as i64 + k;
            if deg < 0 {
                0
            } else {
                binomial(deg as u64 + n as u64, n as u64) as usize
            }
        })
        .sum()
}

impl SectionBasis {
    /// Monomial basis of `Γ(CP^n, O(m) ⊗ E)`.
    pub fn build(geometry: &Geometry, m: u32) -> Result<Self, SectionError> {
        if m == 0 {
            return Err(SectionError::UnsupportedScenario(
                "m must be at least 1".into(),
            ));
        }
        if matches!(
            geometry.potential.kind(),
            crate::geometry::PotentialKind::Flat
        ) {
            return Err(SectionError::UnsupportedScenario(
                "the flat model has no compact section space".into(),
            ));
        }
        let n = geometry.dimension();
        let twists = geometry.bundle.twists();
        let mut entries = Vec::new();
        for (frame, &k) in twists.iter().enumerate() {
            let deg = m as i64 + k;
            if deg < 0 {
                continue;
            }
            for exponents in monomials(n, deg as u32) {
                entries.push(BasisEntry { exponents, frame });
            }
        }
        Ok(Self {
            m,
            n,
            twists,
            entries,
            recombination: None,
        })
    }

    /// The basis `s'_i = Σ_j A_ij s_j`; `A` must be invertible.
    pub fn recombine(&self, a: CMatrix<f64>) -> Self {
        assert_eq!(a.rows(), self.len());
        assert_eq!(a.cols(), self.len());
        Self {
            recombination: Some(a),
            ..self.clone()
        }
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.twists.len()
    }

    pub fn entries(&self) -> &[BasisEntry] {
        &self.entries
    }

    /// Every entry is a single monomial (no recombination applied).
    pub fn is_symmetric(&self) -> bool {
        self.recombination.is_none()
    }

    fn recombination<T: Real>(&self) -> Option<CMatrix<T>> {
        self.recombination
            .as_ref()
            .map(|a| a.map(|z| Complex::new(T::from_f64(z.re), T::from_f64(z.im))))
    }

    /// `d × r` matrix `S̃_{iα} = s_i^α(x) e^{-mφ(x)/2} H_α(x)^{1/2}`.
    fn weighted_values<T: Real>(&self, geometry: &Geometry, x: &ChartPoint<T>) -> CMatrix<T> {
        let half = T::from_f64(0.5);
        let m = T::from_usize(self.m as usize);
        let phi = geometry.potential.value(x);
        let log_weights: Vec<T> = geometry
            .bundle
            .weights()
            .iter()
            .map(|w| -(m * phi + w.psi(x)) * half)
            .collect();
        let logs: Vec<(T, Cx<T>)> = x
            .coords()
            .iter()
            .map(|z| {
                let r2 = abs2(*z);
                let unit = if r2 > T::zero() {
                    *z / cx_real(r2.sqrt())
                } else {
                    cx_real(T::one())
                };
                (r2.ln() * half, unit)
            })
            .collect();
        let mut s = CMatrix::zeros(self.len(), self.rank());
        for (i, e) in self.entries.iter().enumerate() {
            let mut log_mod = log_weights[e.frame];
            let mut phase = cx_real(T::one());
            let mut vanishes = false;
            for (&a, (ln_r, unit)) in e.exponents.iter().zip(&logs) {
                if a == 0 {
                    continue;
                }
                if !ln_r.is_finite() {
                    vanishes = true;
                    break;
                }
                log_mod += T::from_usize(a as usize) * *ln_r;
                phase *= unit.powu(a);
            }
            if !vanishes {
                s[(i, e.frame)] = phase * log_mod.exp();
            }
        }
        match self.recombination::<T>() {
            Some(a) => &a * &s,
            None => s,
        }
    }
}

/// How Gram entries are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramStrategy {
    /// Closed-form Dirichlet integrals (Fubini–Study data).
    Exact,
    /// Torus-invariant metrics: diagonal, one radial integral per entry.
    Radial,
    /// Full chart quadrature of every entry.
    Dense,
}

impl GramStrategy {
    pub fn for_mode(mode: QuadratureMode, geometry: &Geometry) -> Result<Self, SectionError> {
        match mode {
            QuadratureMode::ExactOracle if geometry.has_exact_gram() => Ok(Self::Exact),
            QuadratureMode::ExactOracle => Err(SectionError::UnsupportedScenario(
                "exact Gram oracle needs Fubini–Study data".into(),
            )),
            QuadratureMode::Radial1d if geometry.is_torus_invariant() => Ok(Self::Radial),
            QuadratureMode::Radial1d => Err(SectionError::UnsupportedScenario(
                "radial reduction needs a torus-invariant metric".into(),
            )),
            QuadratureMode::Tensor2d => Ok(Self::Dense),
            QuadratureMode::MonteCarloCheck => Err(SectionError::UnsupportedScenario(
                "Monte Carlo is a diagnostic, not a Gram strategy".into(),
            )),
        }
    }

    /// Most accurate strategy available for the geometry.
    pub fn best(geometry: &Geometry) -> Self {
        if geometry.has_exact_gram() {
            Self::Exact
        } else if geometry.is_torus_invariant() {
            Self::Radial
        } else {
            Self::Dense
        }
    }

    pub fn mode(self) -> QuadratureMode {
        match self {
            Self::Exact => QuadratureMode::ExactOracle,
            Self::Radial => QuadratureMode::Radial1d,
            Self::Dense => QuadratureMode::Tensor2d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GramStructure {
    Diagonal,
    Dense,
}

#[derive(Debug, Clone)]
enum Factor<T> {
    /// Square roots of the diagonal.
    Diagonal(Vec<T>),
    Dense(Cholesky<T>),
}

#[derive(Debug, Clone)]
pub struct GramMatrix<T> {
    values: CMatrix<T>,
    factor: Factor<T>,
    pub structure: GramStructure,
    pub strategy: GramStrategy,
    /// Bound on `|δG_ij| / sqrt(G_ii G_jj)` from quadrature.
    pub relative_error: f64,
    /// `(max L_ii / min L_ii)^2` of `G`.
    pub condition: f64,
    /// Same, after symmetric diagonal scaling to unit diagonal.
    pub scaled_condition: f64,
}

/// `condition × unit roundoff` above this is treated as singular.
pub const CONDITION_BUDGET: f64 = 1e-3;

impl<T: Real> GramMatrix<T> {
    pub fn values(&self) -> &CMatrix<T> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.rows()
    }

    /// Lower factor `L` with `G = L L^*`.
    pub fn lower(&self) -> CMatrix<T> {
        match &self.factor {
            Factor::Diagonal(d) => CMatrix::diagonal(d),
            Factor::Dense(c) => c.lower().clone(),
        }
    }

    /// `L^{-1} B`.
    pub fn solve_lower(&self, b: &CMatrix<T>) -> CMatrix<T> {
        match &self.factor {
            Factor::Diagonal(d) => {
                CMatrix::from_fn(b.rows(), b.cols(), |i, j| b[(i, j)] / cx_real(d[i]))
            }
            Factor::Dense(c) => c.solve_lower(b),
        }
    }

    fn from_values(
        values: CMatrix<T>,
        strategy: GramStrategy,
        relative_error: f64,
    ) -> Result<Self, SectionError> {
        let d = values.rows();
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || values[(i, j)] == Complex::zero()));
        let singular = |condition: f64, scaled: f64| SectionError::SingularGram {
            precision: T::NAME,
            condition,
            scaled_condition: scaled,
        };
        let diag: Vec<T> = (0..d).map(|i| values[(i, i)].re).collect();
        if diag.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(singular(f64::INFINITY, f64::INFINITY));
        }
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            (lo.min(v.to_f64()), hi.max(v.to_f64()))
        });
        if diagonal {
            let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            return Ok(Self {
                factor: Factor::Diagonal(diag.iter().map(|v| v.sqrt()).collect()),
                values,
                structure: GramStructure::Diagonal,
                strategy,
                relative_error,
                condition,
                scaled_condition: 1.0,
            });
        }
        let inv_sqrt: Vec<T> = diag.iter().map(|v| T::one() / v.sqrt()).collect();
        let scaled = CMatrix::from_fn(d, d, |i, j| {
            values[(i, j)] * cx_real(inv_sqrt[i] * inv_sqrt[j])
        });
        let scaled_chol =
            Cholesky::factor(&scaled).map_err(|_| singular(f64::INFINITY, f64::INFINITY))?;
        let scaled_condition = scaled_chol.condition_estimate();
        let chol =
            Cholesky::factor(&values).map_err(|_| singular(f64::INFINITY, scaled_condition))?;
        let condition = chol.condition_estimate();
        if scaled_condition * T::UNIT_ROUNDOFF > CONDITION_BUDGET {
            return Err(singular(condition, scaled_condition));
        }
        Ok(Self {
            factor: Factor::Dense(chol),
            values,
            structure: GramStructure::Dense,
            strategy,
            relative_error,
            condition,
            scaled_condition,
        })
    }
}

fn to_real<T: Real>(q: &BigRational) -> T {
    T::from_ratio(q)
}

/// `G_ij = ∫ ⟨s_i, s_j⟩ e^{-mφ} dμ` with the pairing through `H`.
pub fn gram_matrix<T: Real>(
    basis: &SectionBasis,
    geometry: &Geometry,
    integrator: &Integrator,
) -> Result<GramMatrix<T>, SectionError> {
    let strategy = GramStrategy::for_mode(integrator.mode, geometry)?;
    let d = basis.len();
    let m = basis.m();
    let weights = geometry.bundle.weights();
    let (raw, error) = match strategy {
        GramStrategy::Exact => {
            let shift =
                (-T::from_f64(geometry.potential.offset()) * T::from_usize(m as usize)).exp();
            let diag: Vec<T> = basis
                .entries
                .iter()
                .map(|e| {
                    let k = geometry.bundle.twists()[e.frame];
                    let a: Vec<u64> = e.exponents.iter().map(|&v| v as u64).collect();
                    let scale = BigRational::from_f64(weights[e.frame].scale)
                        .unwrap_or_else(BigRational::one);
                    to_real::<T>(&(dirichlet_exact(&a, (m as i64 + k) as u64) * scale)) * shift
                })
                .collect();
            (CMatrix::diagonal(&diag), 0.0)
        }
        GramStrategy::Radial => radial_gram(basis, geometry, integrator)?,
        GramStrategy::Dense => dense_gram(basis, geometry, integrator)?,
    };
    let (values, error) = match basis.recombination::<T>() {
        Some(a) => {
            let g = &(&a * &raw) * &a.conj_transpose();
            let root: Vec<f64> = (0..d).map(|j| raw[(j, j)].re.to_f64().sqrt()).collect();
            let worst = (0..d).fold(0.0f64, |acc, i| {
                let spread: f64 = (0..d).map(|j| cabs(a[(i, j)]).to_f64() * root[j]).sum();
                acc.max(spread * spread / g[(i, i)].re.to_f64())
            });
            (g, error * worst)
        }
        None => (raw, error),
    };
    GramMatrix::from_values(values, strategy, error)
}

/// One radial integral per distinct `(|a|, α)`, times the simplex moment of `a`.
fn radial_gram<T: Real>(
    basis: &SectionBasis,
    geometry: &Geometry,
    integrator: &Integrator,
) -> Result<(CMatrix<T>, f64), SectionError> {
    let n = basis.dimension();
    let radial = geometry.potential.radial_metric().ok_or_else(|| {
        SectionError::UnsupportedScenario("radial reduction needs a torus-invariant metric".into())
    })?;
    let m = T::from_usize(basis.m() as usize);
    let mut keys: Vec<(u32, usize)> = basis
        .entries
        .iter()
        .map(|e| (e.degree(), e.frame))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let weights = geometry.bundle.weights().to_vec();
    let estimates =
        integrator.integrate_radial_batch(keys.len(), |node: &RadialNode<T>, out| {
            let s = radial.sample(node.ln_t)?;
            let base = s.ln_det_g(n) - m * s.phi + node.ln_jacobian;
            for ((deg, frame), slot) in keys.iter().zip(out.iter_mut()) {
                let power = T::from_usize(*deg as usize + n - 1);
                *slot = (base + power * node.ln_t - weights[*frame].psi_radial(node.ln_t)).exp();
            }
            Ok(())
        })?;
    let mut error = 0.0f64;
    let diag: Vec<T> = basis
        .entries
        .iter()
        .map(|e| {
            let idx = keys
                .binary_search(&(e.degree(), e.frame))
                .expect("key present");
            let a: Vec<u64> = e.exponents.iter().map(|&v| v as u64).collect();
            let c = to_real::<T>(&simplex_moment(&a));
            error = error.max(estimates[idx].error / estimates[idx].value.abs().to_f64());
            estimates[idx].value * c
        })
        .collect();
    Ok((CMatrix::diagonal(&diag), error))
}

fn dense_gram<T: Real>(
    basis: &SectionBasis,
    geometry: &Geometry,
    integrator: &Integrator,
) -> Result<(CMatrix<T>, f64), SectionError> {
    let d = basis.len();
    let raw = SectionBasis {
        recombination: None,
        ..basis.clone()
    };
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (i..d).map(move |j| (i, j)))
        .filter(|&(i, j)| raw.entries[i].frame == raw.entries[j].frame)
        .collect();
    let estimates = integrator.integrate_chart_batch(
        2 * pairs.len(),
        &geometry.potential,
        |z: &ChartPoint<T>, out: &mut [T]| {
            let s = raw.weighted_values(geometry, z);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let frame = raw.entries[i].frame;
                let v = s[(i, frame)] * s[(j, frame)].conj();
                out[2 * p] = v.re;
                out[2 * p + 1] = v.im;
            }
            Ok(())
        },
    )?;
    let mut diag = vec![0usize; d];
    for (p, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            diag[i] = p;
        }
    }
    let mut g = CMatrix::zeros(d, d);
    let mut error = 0.0f64;
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let v = Complex::new(estimates[2 * p].value, estimates[2 * p + 1].value);
        let abs_err = estimates[2 * p].error + estimates[2 * p + 1].error;
        let scale = (estimates[2 * diag[i]].value * estimates[2 * diag[j]].value)
            .sqrt()
            .to_f64();
        error = error.max(abs_err / scale);
        if i == j {
            g[(i, i)] = cx_real(v.re);
        } else {
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    Ok((g, error))
}

/// `K(x)`, the `r × r` reduction of `S(x)`.
#[derive(Debug, Clone)]
pub struct DensityMatrix<T> {
    pub point: ChartPoint<T>,
    pub values: CMatrix<T>,
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<T>,
}

pub fn density_matrix<T: Real>(
    basis: &SectionBasis,
    gram: &GramMatrix<T>,
    geometry: &Geometry,
    x: &ChartPoint<T>,
) -> Result<DensityMatrix<T>, SectionError> {
    geometry.potential.check_point(x)?;
    let y = gram.solve_lower(&basis.weighted_values(geometry, x));
    let values = &y.conj_transpose() * &y;
    let eig = hermitian_eigen(&values)?;
    let eigenvalues = eig.values.iter().map(|v| v.max(T::zero())).collect();
    Ok(DensityMatrix {
        point: x.clone(),
        values,
        eigenvalues,
    })
}

impl<T: Real> DensityMatrix<T> {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Σ λ_i^b`.
    pub fn sigma_b(&self, b: u32) -> T {
        assert!(b >= 1, "b starts at 1");
        self.eigenvalues
            .iter()
            .fold(T::zero(), |acc, l| acc + l.powi(b as i32))
    }

    /// `tr(K^b)` by repeated multiplication.
    pub fn trace_power(&self, b: u32) -> T {
        self.values.power(b).expect("square matrix").trace().re
    }
}

/// `σ_1(x)` alone: `Σ |Y_{iα}|^2`.
pub fn sigma_one<T: Real>(
    basis: &SectionBasis,
    gram: &GramMatrix<T>,
    geometry: &Geometry,
    x: &ChartPoint<T>,
) -> T {
    let y = gram.solve_lower(&basis.weighted_values(geometry, x));
    (0..y.rows()).fold(T::zero(), |acc, i| {
        (0..y.cols()).fold(acc, |a, j| a + abs2(y[(i, j)]))
    })
}

/// Result of the `d × d` orthonormal-basis path.
#[derive(Debug, Clone)]
pub struct OrthonormalEvaluation<T> {
    pub sigma: T,
    /// Spectrum of `S(x)`, descending.
    pub spectrum: Vec<T>,
}

/// Orthonormalizes explicitly (`T = L^{-1} s`), forms the full `d × d`
/// matrix `S(x)` and returns `tr(S^b)` together with its spectrum.
pub fn sigma_b_via_orthonormal<T: Real>(
    basis: &SectionBasis,
    gram: &GramMatrix<T>,
    geometry: &Geometry,
    x: &ChartPoint<T>,
    b: u32,
) -> Result<OrthonormalEvaluation<T>, SectionError> {
    sigma_b_rotated(basis, gram, geometry, x, b, None)
}

/// As [`sigma_b_via_orthonormal`], with the orthonormal basis rotated by `q`.
pub fn sigma_b_rotated<T: Real>(
    basis: &SectionBasis,
    gram: &GramMatrix<T>,
    geometry: &Geometry,
    x: &ChartPoint<T>,
    b: u32,
    q: Option<&CMatrix<T>>,
) -> Result<OrthonormalEvaluation<T>, SectionError> {
    geometry.potential.check_point(x)?;
    let d = gram.dim();
    let c = gram.solve_lower(&CMatrix::identity(d));
    let mut t = &c * &basis.weighted_values(geometry, x);
    if let Some(q) = q {
        t = q * &t;
    }
    let s = &t * &t.conj_transpose();
    let sigma = s.power(b)?.trace().re;
    let spectrum = hermitian_eigen(&s)?.values;
    Ok(OrthonormalEvaluation { sigma, spectrum })
}

/// `σ_b` for `b > r` from `σ_1, …, σ_r` through Newton's identities with
/// `e_{r+1} = e_{r+2} = … = 0`.
pub fn newton_reduce<T: Real>(sigmas: &[T], b: usize) -> T {
    let r = sigmas.len();
    assert!(r >= 1, "need at least one power sum");
    let mut e = vec![T::one()];
    for k in 1..=r {
        let mut acc = T::zero();
        for i in 1..=k {
            let term = e[k - i] * sigmas[i - 1];
            acc = if i % 2 == 1 { acc + term } else { acc - term };
        }
        e.push(acc / T::from_usize(k));
    }
    let mut p: Vec<T> = sigmas.to_vec();
    for k in (r + 1)..=b {
        let mut acc = T::zero();
        for i in 1..=r {
            let term = e[i] * p[k - i - 1];
            acc = if i % 2 == 1 { acc + term } else { acc - term };
        }
        p.push(acc);
    }
    p[b - 1]
}

/// `∫ σ_1 dμ - d`, with the integration error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceResidual {
    pub residual: f64,
    pub integral: f64,
    pub error: f64,
}

pub fn trace_identity_check<T: Real>(
    basis: &SectionBasis,
    gram: &GramMatrix<T>,
    geometry: &Geometry,
    integrator: &Integrator,
) -> Result<TraceResidual, SectionError> {
    let n = basis.dimension();
    let d = T::from_usize(basis.len());
    let estimate = match geometry.potential.radial_metric() {
        Some(radial) => {
            // σ_1 is torus invariant and, for U(n)-invariant data, depends on
            // |z|^2 only; the simplex slice Σ t_k = s has area s^{n-1}/(n-1)!.
            let fact = (1..n).fold(T::one(), |acc, k| acc * T::from_usize(k));
            let mut out = integrator.integrate_radial_batch(1, |node: &RadialNode<T>, buf| {
                let s = radial.sample(node.ln_t)?;
                let mut coords = vec![cx_real(T::zero()); n];
                coords[0] = cx_real((node.ln_t * T::from_f64(0.5)).exp());
                let sigma = sigma_one(basis, gram, geometry, &ChartPoint::new(coords));
                let log = s.ln_det_g(n) + T::from_usize(n - 1) * node.ln_t + node.ln_jacobian;
                buf[0] = sigma * log.exp() / fact;
                Ok(())
            })?;
            out.remove(0)
        }
        None => {
            let mut out = integrator.integrate_chart_batch(1, &geometry.potential, |z, buf| {
                buf[0] = sigma_one(basis, gram, geometry, z);
                Ok(())
            })?;
            out.remove(0)
        }
    };
    Ok(TraceResidual {
        residual: (estimate.value - d).abs().to_f64(),
        integral: estimate.value.to_f64(),
        error: estimate.error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BundleMetric, KahlerPotential, Profile};
    use crate::real::Quad;

    fn fs(n: usize, twists: &[i64]) -> Geometry {
        Geometry::new(
            KahlerPotential::fubini_study(n),
            BundleMetric::twisted(twists),
        )
    }

    fn pt(re: f64, im: f64) -> ChartPoint<f64> {
        ChartPoint::from_f64(&[Complex::new(re, im)])
    }

    #[test]
    fn basis_dimensions() {
        assert_eq!(SectionBasis::build(&fs(1, &[0]), 5).unwrap().len(), 6);
        assert_eq!(SectionBasis::build(&fs(2, &[0]), 3).unwrap().len(), 10);
        assert_eq!(SectionBasis::build(&fs(1, &[2, 0]), 4).unwrap().len(), 12);
        assert_eq!(expected_dimension(1, 4, &[2, 0]), 12);
        assert_eq!(expected_dimension(2, 30, &[0]), 31 * 32 / 2);
        let flat = Geometry::new(KahlerPotential::flat(1), BundleMetric::trivial(1));
        assert!(matches!(
            SectionBasis::build(&flat, 3),
            Err(SectionError::UnsupportedScenario(_))
        ));
    }

    #[test]
    fn fubini_study_density_is_m_plus_one() {
        let g = fs(1, &[0]);
        let integ = Integrator::new(QuadratureMode::ExactOracle, 0.0);
        for m in [1u32, 7, 20] {
            let basis = SectionBasis::build(&g, m).unwrap();
            let gram = gram_matrix::<f64>(&basis, &g, &integ).unwrap();
            assert_eq!(gram.structure, GramStructure::Diagonal);
            for x in [pt(0.0, 0.0), pt(0.7, 0.0), pt(-1.3, 2.2)] {
                let k = density_matrix(&basis, &gram, &g, &x).unwrap();
                assert!((k.sigma_b(1) - (m + 1) as f64).abs() < 1e-12 * (m + 1) as f64);
                let b3 = ((m + 1) as f64).powi(3);
                assert!((k.sigma_b(3) - b3).abs() < 1e-12 * b3);
            }
        }
    }

    #[test]
    fn rank_two_trivial_bundle_is_scaled_identity() {
        let g = fs(1, &[0, 0]);
        let basis = SectionBasis::build(&g, 6).unwrap();
        let gram = gram_matrix::<f64>(
            &basis,
            &g,
            &Integrator::new(QuadratureMode::ExactOracle, 0.0),
        )
        .unwrap();
        let k = density_matrix(&basis, &gram, &g, &pt(0.4, -0.1)).unwrap();
        assert!(k.values.sub(&CMatrix::identity(2).scale(7.0)).max_abs() < 1e-12);
        assert!((k.sigma_b(2) - 2.0 * 49.0).abs() < 1e-10);
    }

    #[test]
    fn radial_gram_matches_exact_oracle() {
        let g = fs(2, &[1]);
        let basis = SectionBasis::build(&g, 4).unwrap();
        let exact = gram_matrix::<Quad>(
            &basis,
            &g,
            &Integrator::new(QuadratureMode::ExactOracle, 0.0),
        )
        .unwrap();
        let integ = Integrator::for_precision::<Quad>(QuadratureMode::Radial1d);
        let radial = gram_matrix::<Quad>(&basis, &g, &integ).unwrap();
        for i in 0..basis.len() {
            let a = exact.values()[(i, i)].re;
            let b = radial.values()[(i, i)].re;
            assert!(((a - b) / a).abs().to_f64() < 1e-27, "entry {i}");
        }
    }

    #[test]
    fn newton_identities_small_cases() {
        let l = [3.0f64, 0.5];
        let p = |b: i32| l.iter().map(|v| v.powi(b)).sum::<f64>();
        assert!((newton_reduce(&[p(1), p(2)], 3) - p(3)).abs() < 1e-12);
        let s3 = 1.5 * p(1) * p(2) - 0.5 * p(1).powi(3);
        assert!((newton_reduce(&[p(1), p(2)], 3) - s3).abs() < 1e-12);
        assert!((newton_reduce(&[p(1), p(2)], 4) - p(4)).abs() < 1e-11);
        assert!((newton_reduce(&[2.5f64], 2) - 6.25).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_path_agrees_and_has_rank_r() {
        let g = fs(1, &[2, 0]);
        let basis = SectionBasis::build(&g, 5).unwrap();
        let gram = gram_matrix::<f64>(
            &basis,
            &g,
            &Integrator::new(QuadratureMode::ExactOracle, 0.0),
        )
        .unwrap();
        let x = pt(0.3, 0.8);
        let k = density_matrix(&basis, &gram, &g, &x).unwrap();
        let slow = sigma_b_via_orthonormal(&basis, &gram, &g, &x, 2).unwrap();
        assert!(((slow.sigma - k.sigma_b(2)) / k.sigma_b(2)).abs() < 1e-12);
        assert!(slow.spectrum[2] < 1e-10 * slow.spectrum[0]);
    }

    #[test]
    fn m_equals_one_at_origin() {
        let g = fs(1, &[0]);
        let basis = SectionBasis::build(&g, 1).unwrap();
        let integ = Integrator::new(QuadratureMode::Tensor2d, 1e-13).with_relative(1e-13);
        let gram = gram_matrix::<f64>(&basis, &g, &integ).unwrap();
        let k = density_matrix(&basis, &gram, &g, &pt(0.0, 0.0)).unwrap();
        assert!((k.values[(0, 0)].re - 2.0).abs() < 1e-11);
    }

    #[test]
    fn trace_identity_on_perturbed_metric() {
        let g = Geometry::new(
            KahlerPotential::perturbed(1, 0.1, Profile::P1),
            BundleMetric::trivial(1),
        );
        let basis = SectionBasis::build(&g, 12).unwrap();
        let integ = Integrator::new(QuadratureMode::Radial1d, 1e-14).with_relative(1e-14);
        let gram = gram_matrix::<f64>(&basis, &g, &integ).unwrap();
        let res = trace_identity_check(&basis, &gram, &g, &integ).unwrap();
        assert!(res.residual < 1e-10, "{res:?}");
    }
}
