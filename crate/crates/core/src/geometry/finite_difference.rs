//! Curvature from point values of `φ` alone.
//!
//! Each derivative level is a central second difference on the real `2n`
//! chart, combined over steps `h` and `h/2` by Richardson extrapolation, so the
//! truncation error is `O(h^4)`. A level fed with values of noise `ε` therefore
//! balances at `h ~ ε^{1/6}` with output noise `~ ε^{2/3}`; the step for every
//! nested level is derived from that recursion starting at the unit roundoff.

use num_complex::Complex;

use super::{curvature, ChartPoint, GeometryError, KahlerPotential, K_MAX};
use crate::linalg::{CMatrix, Cholesky};
use crate::real::Real;

type ScalarFn<'a, T> = dyn Fn(&ChartPoint<T>) -> Result<T, GeometryError> + 'a;

/// Step for nesting depth `level` (1 = Hessian of `φ`), before scaling by `|x|`.
pub fn nested_step(unit_roundoff: f64, level: usize) -> (f64, f64) {
    let mut noise = unit_roundoff;
    let mut h = noise;
    for _ in 0..level {
        h = noise.powf(1.0 / 6.0);
        noise = noise.powf(2.0 / 3.0);
    }
    (h, noise)
}

fn step_for<T: Real>(x: &ChartPoint<T>, level: usize) -> T {
    let scale = x.norm_sqr().sqrt().max(T::one());
    T::from_f64(nested_step(T::UNIT_ROUNDOFF, level).0) * scale
}

fn real_shift<T: Real>(x: &ChartPoint<T>, dir: usize, h: T) -> ChartPoint<T> {
    let n = x.dimension();
    let delta = if dir < n {
        Complex::new(h, T::zero())
    } else {
        Complex::new(T::zero(), h)
    };
    x.shifted(dir % n, delta)
}

/// Real Hessian over `(x_1..x_n, y_1..y_n)` with one step size.
fn real_hessian<T: Real>(
    f: &ScalarFn<'_, T>,
    x: &ChartPoint<T>,
    h: T,
) -> Result<Vec<Vec<T>>, GeometryError> {
    let dim = 2 * x.dimension();
    let f0 = f(x)?;
    let two = T::from_f64(2.0);
    let mut out = vec![vec![T::zero(); dim]; dim];
    for a in 0..dim {
        let fp = f(&real_shift(x, a, h))?;
        let fm = f(&real_shift(x, a, -h))?;
        out[a][a] = (fp - two * f0 + fm) / (h * h);
        for b in 0..a {
            let pp = f(&real_shift(&real_shift(x, a, h), b, h))?;
            let pm = f(&real_shift(&real_shift(x, a, h), b, -h))?;
            let mp = f(&real_shift(&real_shift(x, a, -h), b, h))?;
            let mm = f(&real_shift(&real_shift(x, a, -h), b, -h))?;
            let v = (pp - pm - mp + mm) / (T::from_f64(4.0) * h * h);
            out[a][b] = v;
            out[b][a] = v;
        }
    }
    Ok(out)
}

/// `∂_i ∂_j̄ f = ¼ [f_{x_i x_j} + f_{y_i y_j} + i (f_{x_i y_j} - f_{y_i x_j})]`.
fn complex_from_real<T: Real>(d: &[Vec<T>], n: usize) -> CMatrix<T> {
    let q = T::from_f64(0.25);
    CMatrix::from_fn(n, n, |i, j| {
        Complex::new(
            q * (d[i][j] + d[n + i][n + j]),
            q * (d[i][n + j] - d[n + i][j]),
        )
    })
}

/// Richardson-combined complex Hessian from steps `h, h/2`, with the distance
/// to the same combination from `h/2, h/4` as error estimate.
fn complex_hessian<T: Real>(
    f: &ScalarFn<'_, T>,
    x: &ChartPoint<T>,
    h: T,
) -> Result<(CMatrix<T>, T), GeometryError> {
    let n = x.dimension();
    let two = T::from_f64(2.0);
    let d1 = complex_from_real(&real_hessian(f, x, h)?, n);
    let d2 = complex_from_real(&real_hessian(f, x, h / two)?, n);
    let d4 = complex_from_real(&real_hessian(f, x, h / (two * two))?, n);
    let extrapolate = |coarse: &CMatrix<T>, fine: &CMatrix<T>| {
        CMatrix::from_fn(n, n, |i, j| {
            (fine[(i, j)] * T::from_f64(4.0) - coarse[(i, j)]) / T::from_f64(3.0)
        })
    };
    let est = extrapolate(&d1, &d2);
    let err = extrapolate(&d2, &d4).sub(&est).max_abs();
    Ok((est, err))
}

fn trace_solve<T: Real>(g: &CMatrix<T>, h: &CMatrix<T>) -> Result<T, GeometryError> {
    let chol = Cholesky::factor(g).map_err(|_| GeometryError::NonPositiveMetric {
        min_eigenvalue: f64::NAN,
    })?;
    Ok(chol.solve(h).trace().re)
}

fn metric_at<T: Real>(
    p: &KahlerPotential,
    y: &ChartPoint<T>,
) -> Result<(CMatrix<T>, T), GeometryError> {
    let phi = |z: &ChartPoint<T>| Ok(p.value(z));
    complex_hessian(&phi, y, step_for(y, 1))
}

fn ln_det<T: Real>(g: &CMatrix<T>) -> Result<T, GeometryError> {
    let chol = Cholesky::factor(g).map_err(|_| GeometryError::NonPositiveMetric {
        min_eigenvalue: f64::NAN,
    })?;
    let l = chol.lower();
    Ok((0..l.rows()).fold(T::zero(), |acc, i| acc + l[(i, i)].re.ln()) * T::from_f64(2.0))
}

/// `g_{ij̄}` from point values of `φ`.
pub fn metric_tensor_fd<T: Real>(
    potential: &KahlerPotential,
    x: &ChartPoint<T>,
) -> Result<CMatrix<T>, GeometryError> {
    potential.check_point(x)?;
    Ok(metric_at(potential, x)?.0)
}

fn rho_at<T: Real>(p: &KahlerPotential, y: &ChartPoint<T>) -> Result<(T, T), GeometryError> {
    let (g, _) = metric_at(p, y)?;
    let ldg = |z: &ChartPoint<T>| ln_det(&metric_at(p, z)?.0);
    let (hess, err) = complex_hessian(&ldg, y, step_for(y, 2))?;
    let rho = -trace_solve(&g, &hess)?;
    // Crude bound: the inverse metric scales the Hessian error.
    let scale = trace_solve(&g, &CMatrix::identity(g.rows()))?;
    Ok((rho, err * scale))
}

/// `Δ^{k-1} ρ(x)` by nested differences, with its Richardson error estimate.
pub fn laplacian_power_rho_fd<T: Real>(
    potential: &KahlerPotential,
    x: &ChartPoint<T>,
    k: usize,
) -> Result<(T, T), GeometryError> {
    assert!(k >= 1, "k starts at 1");
    potential.check_point(x)?;
    tower(potential, x, k)
}

fn tower<T: Real>(
    p: &KahlerPotential,
    y: &ChartPoint<T>,
    k: usize,
) -> Result<(T, T), GeometryError> {
    if k == 1 {
        return rho_at(p, y);
    }
    let (g, _) = metric_at(p, y)?;
    let inner = |z: &ChartPoint<T>| Ok(tower(p, z, k - 1)?.0);
    let (hess, err) = complex_hessian(&inner, y, step_for(y, k + 1))?;
    let scale = trace_solve(&g, &CMatrix::identity(g.rows()))?;
    Ok((trace_solve(&g, &hess)?, err * scale))
}

/// Jets when available, nested differences otherwise. The difference path
/// must meet `tolerance` relative to `max(1, |value|)`.
pub fn laplacian_power_rho_with_fallback<T: Real>(
    potential: &KahlerPotential,
    x: &ChartPoint<T>,
    k: usize,
    tolerance: f64,
) -> Result<T, GeometryError> {
    if k <= K_MAX {
        match curvature::laplacian_power_rho(potential, x, k) {
            Err(GeometryError::JetUnavailable { .. }) => {}
            other => return other,
        }
    }
    let (value, err) = laplacian_power_rho_fd(potential, x, k)?;
    let bound = tolerance * value.abs().to_f64().max(1.0);
    if !(err.to_f64() <= bound) {
        return Err(GeometryError::StepSizeUnderflow {
            tolerance,
            estimate: err.to_f64(),
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{laplacian_power_rho, metric_tensor, Profile};
    use crate::real::Quad;

    #[test]
    fn step_recursion() {
        let (h1, n1) = nested_step(1e-32, 1);
        assert!((h1 - 1e-32f64.powf(1.0 / 6.0)).abs() < 1e-20);
        assert!((n1 - 1e-32f64.powf(2.0 / 3.0)).abs() < 1e-30);
        let (h3, _) = nested_step(1e-32, 3);
        assert!(h3 > 1e-3 && h3 < 1e-2);
    }

    #[test]
    fn fd_metric_matches_jets() {
        let pot = KahlerPotential::perturbed(2, 0.1, Profile::P2);
        let x = ChartPoint::<Quad>::from_f64(&[Complex::new(0.3, -0.2), Complex::new(0.1, 0.5)]);
        let a = metric_tensor_fd(&pot, &x).unwrap();
        let b = metric_tensor(&pot, &x).unwrap();
        assert!(a.sub(&b).max_abs().to_f64() < 1e-18);
    }

    #[test]
    fn fd_scalar_curvature_of_fubini_study() {
        let pot = KahlerPotential::fubini_study(1);
        let x = ChartPoint::<Quad>::from_f64(&[Complex::new(0.4, 0.3)]);
        let (rho, err) = laplacian_power_rho_fd(&pot, &x, 1).unwrap();
        assert!((rho - Quad::from_f64(2.0)).abs().to_f64() < 1e-12);
        assert!(err.to_f64() < 1e-10);
    }

    #[test]
    fn perturbed_laplacian_of_rho_agrees_with_jets() {
        let pot = KahlerPotential::perturbed(1, 0.1, Profile::P1);
        let x = ChartPoint::<Quad>::origin(1);
        let jet = laplacian_power_rho(&pot, &x, 2).unwrap();
        let (fd, err) = laplacian_power_rho_fd(&pot, &x, 2).unwrap();
        let rel = ((fd - jet) / jet).abs().to_f64();
        assert!(rel < 1e-6, "jet {jet:?} fd {fd:?}");
        assert!(err.to_f64() < 1e-6 * jet.abs().to_f64());
    }

    #[test]
    fn double_precision_cannot_nest_deeply() {
        let pot = KahlerPotential::perturbed(1, 0.1, Profile::P1);
        let x = ChartPoint::<f64>::from_f64(&[Complex::new(0.2, 0.1)]);
        let err = laplacian_power_rho_with_fallback(&pot, &x, 4, 1e-6).unwrap_err();
        assert!(
            matches!(err, GeometryError::StepSizeUnderflow { .. }),
            "{err:?}"
        );
    }
}
