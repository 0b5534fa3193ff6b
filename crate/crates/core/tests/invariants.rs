use num_complex::Complex;
use proptest::prelude::*;

use bergman_lab::asymptotics::{
    fit_expansion, judge, power_series_pow, SigmaSample, SigmaSeries, Verdict,
};
use bergman_lab::geometry::{BundleMetric, ChartPoint, Geometry, KahlerPotential};
use bergman_lab::linalg::CMatrix;
use bergman_lab::quadrature::{Integrator, QuadratureMode};
use bergman_lab::real::{Quad, Real};
use bergman_lab::scenarios::{
    parse_config, random_points, BundleSpec, Manifold, Precision, QuadratureChoice, Scenario,
};
use bergman_lab::sections::{
    density_matrix, gram_matrix, newton_reduce, sigma_b_via_orthonormal, SectionBasis,
};

fn fs(n: usize, twists: &[i64]) -> Geometry {
    Geometry::new(
        KahlerPotential::fubini_study(n),
        BundleMetric::twisted(twists),
    )
}

fn point(re: f64, im: f64) -> ChartPoint<f64> {
    ChartPoint::from_f64(&[Complex::new(re, im)])
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn newton_matches_power_sums(l1 in 0.01f64..10.0, l2 in 0.01f64..10.0, b in 3usize..7) {
        let p = |k: i32| l1.powi(k) + l2.powi(k);
        let got = newton_reduce(&[p(1), p(2)], b);
        prop_assert!((got - p(b as i32)).abs() <= 1e-11 * p(b as i32));
    }

    #[test]
    fn power_series_of_binomial(b in 1u32..8, order in 0usize..10) {
        let c = power_series_pow(&[1.0, 1.0], b, order);
        for (k, v) in c.iter().enumerate() {
            let want = if k as u32 <= b { binomial(b, k as u32) } else { 0.0 };
            prop_assert!((v - want).abs() < 1e-9);
        }
    }

    #[test]
    fn fubini_study_density_is_flat(m in 1u32..25, k in 0i64..3, re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let g = fs(1, &[k]);
        let basis = SectionBasis::build(&g, m).unwrap();
        let gram = gram_matrix::<f64>(&basis, &g, &Integrator::new(QuadratureMode::ExactOracle, 0.0)).unwrap();
        let dm = density_matrix(&basis, &gram, &g, &point(re, im)).unwrap();
        let want = (m as i64 + k + 1) as f64;
        prop_assert!((dm.sigma_b(1) - want).abs() <= 1e-11 * want);
        prop_assert!((dm.sigma_b(2) - want * want).abs() <= 1e-11 * want * want);
    }

    #[test]
    fn sigma_is_basis_independent(
        m in 1u32..8,
        entries in proptest::collection::vec((-0.4f64..0.4, -0.4f64..0.4), 64),
        re in -1.5f64..1.5,
        im in -1.5f64..1.5,
    ) {
        let g = fs(1, &[1, 0]);
        let basis = SectionBasis::build(&g, m).unwrap();
        let d = basis.len();
        let mut a = CMatrix::from_fn(d, d, |i, j| {
            let (x, y) = entries[(i * d + j) % entries.len()];
            Complex::new(x, y)
        });
        for i in 0..d {
            a[(i, i)] += Complex::new(1.0, 0.0);
        }
        let integ = Integrator::new(QuadratureMode::ExactOracle, 0.0);
        let gram = gram_matrix::<Quad>(&basis, &g, &integ).unwrap();
        let mixed = basis.recombine(a);
        let mixed_gram = gram_matrix::<Quad>(&mixed, &g, &integ).unwrap();
        let x = ChartPoint::new(vec![Complex::new(Quad::from_f64(re), Quad::from_f64(im))]);
        let k = density_matrix(&basis, &gram, &g, &x).unwrap();
        let k2 = density_matrix(&mixed, &mixed_gram, &g, &x).unwrap();
        for b in 1..=3 {
            let (s, t) = (k.sigma_b(b).to_f64(), k2.sigma_b(b).to_f64());
            prop_assert!((s - t).abs() <= 1e-12 * s, "b = {b}: {s} vs {t}");
        }
    }

    #[test]
    fn density_rank_is_bundle_rank(m in 2u32..10, re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let g = fs(1, &[2, 0]);
        let basis = SectionBasis::build(&g, m).unwrap();
        let gram = gram_matrix::<f64>(&basis, &g, &Integrator::new(QuadratureMode::ExactOracle, 0.0)).unwrap();
        let x = point(re, im);
        let full = sigma_b_via_orthonormal(&basis, &gram, &g, &x, 2).unwrap();
        let k = density_matrix(&basis, &gram, &g, &x).unwrap();
        prop_assert!(full.spectrum[2].abs() < 1e-10 * full.spectrum[0]);
        prop_assert!((full.sigma - k.sigma_b(2)).abs() <= 1e-10 * k.sigma_b(2));
    }

    #[test]
    fn fit_recovers_polynomials(c in proptest::collection::vec(-5.0f64..5.0, 1..4)) {
        // σ = m (1 + c_1/m + c_2/m^2 + ...), kept positive by the leading term.
        let samples = (20u32..=60)
            .map(|m| {
                let mq = Quad::from_usize(m as usize);
                let tail = c.iter().enumerate().fold(Quad::from_f64(1.0), |acc, (k, &ck)| {
                    acc + Quad::from_f64(ck) / mq.powi(k as i32 + 1)
                });
                SigmaSample { m, value: mq * tail, error: 0.0 }
            })
            .collect();
        let series = SigmaSeries::new(1, 1, 1, vec![[0.0, 0.0]], samples).unwrap();
        let fit = fit_expansion(&series, c.len() + 2).unwrap();
        prop_assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        for (k, &ck) in c.iter().enumerate() {
            prop_assert!((fit.coefficients[k + 1] - ck).abs() < 1e-8 * (1.0 + ck.abs()), "a_{} = {}", k + 1, fit.coefficients[k + 1]);
        }
    }

    #[test]
    fn judge_is_consistent(fit in -10.0f64..10.0, pred in -10.0f64..10.0, unc in 0.0f64..1e-3, floor in 1e-9f64..1e-2) {
        let j = judge(fit, unc, pred, floor, 0.1);
        prop_assert_eq!(j.tolerance, floor.max(5.0 * unc));
        let close = (fit - pred).abs() <= j.tolerance;
        prop_assert_eq!(j.verdict == Verdict::Match, close);
        prop_assert_eq!(j.verdict == Verdict::Disputed, !close);
    }

    #[test]
    fn random_points_are_reproducible(n in 1usize..3, count in 0usize..12, seed in any::<u64>()) {
        let a = random_points(n, count, seed);
        prop_assert_eq!(&a, &random_points(n, count, seed));
        prop_assert_eq!(a.len(), count);
        for p in &a {
            prop_assert_eq!(p.len(), n);
            prop_assert!(p.iter().flatten().all(|v| v.abs() <= 1.5));
        }
    }

    #[test]
    fn config_round_trip(
        cp2 in any::<bool>(),
        twists in proptest::collection::vec(-1i64..3, 1..4),
        lo in 1u32..20,
        len in 0u32..30,
        step in 1u32..4,
        bs in proptest::collection::btree_set(1u32..5, 1..4),
        high in any::<bool>(),
        trace in any::<bool>(),
    ) {
        let manifold = if cp2 { Manifold::Cp2 } else { Manifold::Cp1 };
        let s = Scenario {
            name: "prop".into(),
            manifold,
            perturbation: None,
            bundle: BundleSpec::Twisted { twists },
            points: random_points(manifold.dimension(), 2, lo as u64),
            m_schedule: (lo..=lo + len).step_by(step as usize).collect(),
            b_list: bs.into_iter().collect(),
            precision: if high { Precision::High } else { Precision::Double },
            quadrature: QuadratureChoice::Auto,
            order: None,
            trace_check: trace,
            remainder_window: None,
        };
        let parsed = parse_config(&s.to_config()).map_err(|e| TestCaseError::fail(format!("{e:?}")))?;
        prop_assert_eq!(parsed, vec![s]);
    }
}
