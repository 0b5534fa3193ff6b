use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::potential::ChartVariables;
use super::{BundleMetric, ChartPoint, Geometry, GeometryError, KahlerPotential, MAX_JET_ORDER};
use crate::jet::{jet_determinant, jet_inverse, jet_trace_product, Jet, JetMatrix};
use crate::linalg::{hermitian_eigenvalues, CMatrix};
use crate::real::{Cx, Real};

/// Highest `k` for which `Δ^{k-1} ρ` is available.
pub const K_MAX: usize = 3;

fn complex_hessian<T: Real>(f: &Jet<T>, n: usize) -> JetMatrix<T> {
    (0..n)
        .map(|i| {
            let di = f.derivative(i);
            (0..n).map(|j| di.derivative(n + j)).collect()
        })
        .collect()
}

fn values<T: Real>(m: &JetMatrix<T>) -> CMatrix<T> {
    CMatrix::from_fn(m.len(), m.len(), |i, j| m[i][j].value())
}

/// Metric, inverse metric and `log det g` as jets around one point.
struct MetricJets<T> {
    n: usize,
    vars: ChartVariables<T>,
    g: JetMatrix<T>,
    ginv: JetMatrix<T>,
    ln_det: Jet<T>,
}

impl<T: Real> MetricJets<T> {
    fn new(
        potential: &KahlerPotential,
        x: &ChartPoint<T>,
        order: usize,
    ) -> Result<Self, GeometryError> {
        potential.check_point(x)?;
        if order > MAX_JET_ORDER {
            return Err(GeometryError::JetUnavailable {
                requested: order,
                available: MAX_JET_ORDER,
            });
        }
        let n = potential.dimension();
        let vars = ChartVariables::new(x, order);
        let phi = potential.jet_from(&vars)?;
        let g = complex_hessian(&phi, n);
        check_positive(&values(&g))?;
        let ginv = jet_inverse(&g)?;
        let ln_det = jet_determinant(&g)?.ln()?;
        Ok(Self {
            n,
            vars,
            g,
            ginv,
            ln_det,
        })
    }

    fn laplacian(&self, f: &Jet<T>) -> Jet<T> {
        jet_trace_product(&self.ginv, &complex_hessian(f, self.n))
    }

    fn ricci(&self) -> JetMatrix<T> {
        complex_hessian(&self.ln_det, self.n)
            .into_iter()
            .map(|row| row.iter().map(|e| -e).collect())
            .collect()
    }

    fn rho(&self) -> Jet<T> {
        jet_trace_product(&self.ginv, &self.ricci())
    }

    fn rho_e(&self, bundle: &BundleMetric) -> Result<Jet<T>, GeometryError> {
        let psis = bundle.psi_jets(&self.vars)?;
        let mut acc = self.laplacian(&psis[0]);
        for psi in &psis[1..] {
            acc = &acc + &self.laplacian(psi);
        }
        Ok(acc)
    }

    /// `[f, Δf, …, Δ^{count-1} f]` at the base point.
    fn laplacian_tower(&self, f: Jet<T>, count: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(count);
        let mut cur = f;
        for k in 0..count {
            out.push(cur.value().re);
            if k + 1 < count {
                cur = self.laplacian(&cur);
            }
        }
        out
    }
}

fn check_positive<T: Real>(g: &CMatrix<T>) -> Result<(), GeometryError> {
    let eig = hermitian_eigenvalues(g)?;
    let min = eig.last().copied().unwrap_or_else(T::zero);
    if !(min > T::zero()) || !min.is_finite() {
        return Err(GeometryError::NonPositiveMetric {
            min_eigenvalue: min.to_f64(),
        });
    }
    Ok(())
}

/// `g_{ij̄}(x) = ∂_i ∂_j̄ φ(x)`.
pub fn metric_tensor<T: Real>(
    potential: &KahlerPotential,
    x: &ChartPoint<T>,
) -> Result<CMatrix<T>, GeometryError> {
    let mj = MetricJets::new(potential, x, 2)?;
    Ok(values(&mj.g))
}

/// `R_{ij̄}(x) = -∂_i ∂_j̄ log det g`.
pub fn ricci_tensor<T: Real>(
    potential: &KahlerPotential,
    x: &ChartPoint<T>,
) -> Result<CMatrix<T>, GeometryError> {
    let mj = MetricJets::new(potential, x, 4)?;
    Ok(values(&mj.ricci()))
}

pub fn scalar_curvature<T: Real>(
    potential: &KahlerPotential,
    x: &ChartPoint<T>,
) -> Result<T, GeometryError> {
    let mj = MetricJets::new(potential, x, 4)?;
    Ok(mj.rho().value().re)
}

/// `Δ^{k-1} ρ(x)`; `k = 1` is `ρ` itself.
pub fn laplacian_power_rho<T: Real>(
    potential: &KahlerPotential,
    x: &ChartPoint<T>,
    k: usize,
) -> Result<T, GeometryError> {
    assert!(k >= 1, "k starts at 1");
    let order = 4 + 2 * (k - 1);
    let mj = MetricJets::new(potential, x, order)?;
    Ok(*mj.laplacian_tower(mj.rho(), k).last().expect("k >= 1"))
}

/// `ρ_E = g^{ij̄} tr_E Θ_{ij̄} = Σ_α Δ ψ_α`.
pub fn bundle_scalar_curvature<T: Real>(
    bundle: &BundleMetric,
    potential: &KahlerPotential,
    x: &ChartPoint<T>,
) -> Result<T, GeometryError> {
    let mj = MetricJets::new(potential, x, 2)?;
    Ok(mj.rho_e(bundle)?.value().re)
}

/// Density `(2π)^{-n} det g` of `dμ = (2π)^{-n} ω^n / n!` against
/// `Π_k i dz_k ∧ dz̄_k`, which in polar coordinates `z_k = sqrt(t_k) e^{iθ_k}`
/// is `Π_k dt_k dθ_k`.
pub fn volume_density<T: Real>(
    potential: &KahlerPotential,
    x: &ChartPoint<T>,
) -> Result<T, GeometryError> {
    let mj = MetricJets::new(potential, x, 2)?;
    let det = mj.ln_det.value().re.exp();
    Ok(det / (T::pi() + T::pi()).powi(potential.dimension() as i32))
}

/// Everything the coefficient formulas need at one point, reported in `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub point: Vec<[f64; 2]>,
    /// Row-major `[re, im]` entries.
    pub g: Vec<Vec<[f64; 2]>>,
    pub det_g: f64,
    pub ricci: Vec<Vec<[f64; 2]>>,
    pub rho: f64,
    /// `Δ^{k-1} ρ` for `k = 1..=K`.
    pub laplacians_rho: Vec<f64>,
    pub rho_e: f64,
    pub laplacians_rho_e: Vec<f64>,
}

fn pairs<T: Real>(m: &CMatrix<T>) -> Vec<Vec<[f64; 2]>> {
    (0..m.rows())
        .map(|i| {
            (0..m.cols())
                .map(|j| {
                    let z: Cx<T> = m[(i, j)];
                    [z.re.to_f64(), z.im.to_f64()]
                })
                .collect()
        })
        .collect()
}

/// Curvature quantities up to `Δ^{kmax-1}` at `x`.
pub fn curvature_report<T: Real>(
    geometry: &Geometry,
    x: &ChartPoint<T>,
    kmax: usize,
) -> Result<CurvatureReport, GeometryError> {
    let kmax = kmax.max(1);
    if kmax > K_MAX {
        return Err(GeometryError::JetUnavailable {
            requested: 4 + 2 * (kmax - 1),
            available: MAX_JET_ORDER,
        });
    }
    let mj = MetricJets::new(&geometry.potential, x, 2 * kmax + 2)?;
    let g = values(&mj.g);
    let ricci = values(&mj.ricci());
    let laplacians_rho = mj.laplacian_tower(mj.rho(), kmax);
    let laplacians_rho_e = mj.laplacian_tower(mj.rho_e(&geometry.bundle)?, kmax);
    let det: Complex<T> = mj.ln_det.value();
    Ok(CurvatureReport {
        point: x.to_f64().to_pairs(),
        g: pairs(&g),
        det_g: det.re.exp().to_f64(),
        ricci: pairs(&ricci),
        rho: laplacians_rho[0].to_f64(),
        laplacians_rho: laplacians_rho.iter().map(|v| v.to_f64()).collect(),
        rho_e: laplacians_rho_e[0].to_f64(),
        laplacians_rho_e: laplacians_rho_e.iter().map(|v| v.to_f64()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Profile;
    use crate::real::Quad;

    fn p1(re: f64, im: f64) -> ChartPoint<f64> {
        ChartPoint::from_f64(&[Complex::new(re, im)])
    }

    fn p2(a: (f64, f64), b: (f64, f64)) -> ChartPoint<f64> {
        ChartPoint::from_f64(&[Complex::new(a.0, a.1), Complex::new(b.0, b.1)])
    }

    #[test]
    fn fubini_study_metric_values() {
        let fs = KahlerPotential::fubini_study(1);
        let g0 = metric_tensor(&fs, &p1(0.0, 0.0)).unwrap();
        assert!((g0[(0, 0)].re - 1.0).abs() < 1e-15);
        let g1 = metric_tensor(&fs, &p1(1.0, 0.0)).unwrap();
        assert!((g1[(0, 0)].re - 0.25).abs() < 1e-15);
        let flat = KahlerPotential::flat(2);
        let g = metric_tensor(&flat, &p2((0.3, 1.0), (-2.0, 0.5))).unwrap();
        assert!(g.sub(&CMatrix::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn scalar_curvature_of_model_spaces() {
        let x1 = p1(0.7, -0.2);
        assert!(
            (scalar_curvature(&KahlerPotential::fubini_study(1), &x1).unwrap() - 2.0).abs() < 1e-12
        );
        let x2 = p2((0.4, 0.1), (-0.3, 0.8));
        assert!(
            (scalar_curvature(&KahlerPotential::fubini_study(2), &x2).unwrap() - 6.0).abs() < 1e-12
        );
        assert!(
            scalar_curvature(&KahlerPotential::flat(2), &x2)
                .unwrap()
                .abs()
                < 1e-14
        );
    }

    #[test]
    fn laplacians_vanish_on_constant_curvature() {
        let fs = KahlerPotential::fubini_study(1);
        for k in 2..=K_MAX {
            let v = laplacian_power_rho(&fs, &p1(0.5, 0.5), k).unwrap();
            assert!(v.abs() < 1e-10, "k={k}: {v}");
            assert_eq!(
                laplacian_power_rho(&KahlerPotential::flat(1), &p1(0.5, 0.5), k).unwrap(),
                0.0
            );
        }
        assert!(matches!(
            laplacian_power_rho(&fs, &p1(0.5, 0.5), 4),
            Err(GeometryError::JetUnavailable { requested: 10, .. })
        ));
    }

    #[test]
    fn twisted_bundle_curvature() {
        let fs = KahlerPotential::fubini_study(1);
        let x = p1(-0.4, 1.3);
        for k in [1i64, 2, 5] {
            let rho_e = bundle_scalar_curvature(&BundleMetric::twisted(&[k]), &fs, &x).unwrap();
            assert!((rho_e - k as f64).abs() < 1e-12);
        }
        let sum = BundleMetric::twisted(&[2]).direct_sum(&BundleMetric::twisted(&[3]));
        assert!((bundle_scalar_curvature(&sum, &fs, &x).unwrap() - 5.0).abs() < 1e-12);
        let constant = BundleMetric::new(vec![
            crate::geometry::FiberWeight {
                twist: 0,
                scale: 7.0
            };
            3
        ]);
        assert_eq!(bundle_scalar_curvature(&constant, &fs, &x).unwrap(), 0.0);
    }

    #[test]
    fn volume_density_normalization() {
        let flat = KahlerPotential::flat(2);
        let v = volume_density(&flat, &p2((1.0, 2.0), (0.0, -1.0))).unwrap();
        assert!((v - std::f64::consts::TAU.powi(-2)).abs() < 1e-15);
        let fs = KahlerPotential::fubini_study(1);
        let v = volume_density(&fs, &p1(1.0, 0.0)).unwrap();
        assert!((v - 0.25 / std::f64::consts::TAU).abs() < 1e-15);
    }

    #[test]
    fn constant_offset_changes_nothing() {
        let x = ChartPoint::<Quad>::from_f64(&[Complex::new(0.3, 0.6)]);
        let base = Geometry::new(
            KahlerPotential::perturbed(1, 0.1, Profile::P1),
            BundleMetric::twisted(&[1]),
        );
        let shifted = Geometry::new(
            base.potential.clone().with_offset(4.25),
            base.bundle.clone(),
        );
        let a = curvature_report(&base, &x, 3).unwrap();
        let b = curvature_report(&shifted, &x, 3).unwrap();
        assert_eq!(a.g, b.g);
        assert_eq!(a.rho, b.rho);
        assert_eq!(a.laplacians_rho, b.laplacians_rho);
        assert_eq!(a.rho_e, b.rho_e);
    }

    #[test]
    fn report_is_hermitian_and_positive() {
        let geom = Geometry::new(
            KahlerPotential::perturbed(2, 0.1, Profile::P1),
            BundleMetric::trivial(1),
        );
        let x = p2((0.2, -0.1), (0.5, 0.3));
        let r = curvature_report(&geom, &x, 2).unwrap();
        assert!(r.det_g > 0.0);
        for (m, name) in [(&r.g, "g"), (&r.ricci, "ricci")] {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((m[i][j][0] - m[j][i][0]).abs() < 1e-12, "{name}");
                    assert!((m[i][j][1] + m[j][i][1]).abs() < 1e-12, "{name}");
                }
            }
        }
        assert_eq!(r.laplacians_rho.len(), 2);
    }

    #[test]
    fn nonpositive_metric_is_reported() {
        let pot = KahlerPotential::perturbed(1, -3.0, Profile::P1);
        let err = metric_tensor(&pot, &p1(0.0, 0.0)).unwrap_err();
        assert!(matches!(err, GeometryError::NonPositiveMetric { .. }));
    }
}
