//! Property tests for the norm machinery, the stability extraction and the
//! convolution estimates.

use evostab::lp::{a_p, lp_norm, truncation_bound_check, Exponent, Grid, SampledSignal};
use evostab::stability::{
    certify_from_admissibility, convolution_bound, exp_convolve, extract_exponential, gauge_exponent, lemma31_bound,
    verify_certificate, ConvolutionCase, StabilityCertificate,
};
use proptest::prelude::*;

fn exponent() -> impl Strategy<Value = Exponent> {
    prop_oneof![
        3 => (1.0f64..8.0).prop_map(Exponent::Finite),
        1 => Just(Exponent::Infinity),
    ]
}

fn signal(len: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = SampledSignal> {
    (0.01f64..0.5, prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), len))
        .prop_map(|(dt, values)| SampledSignal { t0: 0.0, dt, values })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn minkowski(f in signal(2..40, 2), shift in prop::collection::vec(-3.0f64..3.0, 2), p in exponent()) {
        let g = f.map(|t, v| vec![v[1] * shift[0] + t, v[0] * shift[1]]);
        let lhs = lp_norm(&f.add(&g).unwrap(), p);
        let rhs = lp_norm(&f, p) + lp_norm(&g, p);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn homogeneity(f in signal(2..40, 3), c in -5.0f64..5.0, p in exponent()) {
        let lhs = lp_norm(&f.scale(c), p);
        let rhs = c.abs() * lp_norm(&f, p);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
    }

    #[test]
    fn truncation_bound(f in signal(2..60, 1), p in exponent(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let span = f.end_time();
        let (lo, hi) = (a.min(b) * span, a.max(b) * span);
        let check = truncation_bound_check(&f, p, lo, hi - lo, 1e-12).unwrap();
        prop_assert!(check.holds, "{check:?}");
        prop_assert!(check.rhs <= a_p(hi - lo, p) * lp_norm(&f, p) + 1e-12);
    }

    #[test]
    fn staircase_is_dominated_by_extracted_envelope(
        m in 0.5f64..10.0, d in 0.1f64..5.0, c in 0.01f64..0.99, t0 in 0.0f64..10.0,
    ) {
        let (n, nu) = extract_exponential(m, d, c).unwrap();
        prop_assert!((n - m / c).abs() <= 1e-12 * n);
        prop_assert!((nu * d + c.ln()).abs() <= 1e-12);
        let samples: Vec<_> = (0..300)
            .map(|j| {
                let lag = j as f64 * d / 17.0;
                (t0 + lag, t0, m * c.powf((lag / d).floor()))
            })
            .collect();
        let check = verify_certificate(&samples, &StabilityCertificate::empirical(n, nu), 1e-12);
        prop_assert!(check.passed, "{check:?}");
    }

    #[test]
    fn exp_convolve_decreases_in_nu(
        values in prop::collection::vec(0.0f64..4.0, 2..200),
        nu1 in 0.1f64..5.0,
        extra in 0.0f64..5.0,
    ) {
        let h = SampledSignal { t0: 0.0, dt: 0.05, values: values.into_iter().map(|v| vec![v]).collect() };
        let slow = exp_convolve(&h, nu1).unwrap();
        let fast = exp_convolve(&h, nu1 + extra).unwrap();
        for (a, b) in slow.values.iter().zip(&fast.values) {
            prop_assert!(b[0] <= a[0] + 1e-14 * a[0].max(1.0));
            prop_assert!(b[0] >= 0.0);
        }
    }

    #[test]
    fn convolution_estimates_hold(
        coeffs in prop::collection::vec((-1.0f64..1.0, 0.0f64..6.3), 4),
        w in 0.2f64..3.0,
        nu in 0.3f64..3.0,
        case in 0usize..6,
    ) {
        let (p, q) = [
            (Exponent::Infinity, Exponent::Infinity),
            (Exponent::Finite(1.0), Exponent::Finite(1.0)),
            (Exponent::Finite(1.0), Exponent::Finite(2.0)),
            (Exponent::Finite(1.0), Exponent::Infinity),
            (Exponent::Finite(2.0), Exponent::Finite(2.0)),
            (Exponent::Finite(2.0), Exponent::Finite(4.0)),
        ][case];
        let a0: f64 = coeffs.iter().map(|(a, _)| a.abs()).sum();
        let grid = Grid::span(15.0, 1e-2).unwrap();
        let h = SampledSignal::from_scalar_fn(grid, |t| {
            let v = a0 + coeffs.iter().enumerate().map(|(k, (a, ph))| a * ((k + 1) as f64 * w * t + ph).cos()).sum::<f64>();
            v.max(0.0)
        });
        let report = convolution_bound(&ConvolutionCase::new(p, q, nu).unwrap(), &h).unwrap();
        prop_assert!(report.holds, "{report:?}");
    }

    #[test]
    fn uniform_bound_under_its_premise(
        steps in prop::collection::vec(-0.05f64..0.05, 10..300),
        start in 0.1f64..3.0,
        q in exponent(),
    ) {
        // A log-Lipschitz walk on dt = 1/20; m is the largest growth over a unit window.
        let dt = 0.05;
        let mut values = vec![start];
        for s in &steps {
            let last = *values.last().unwrap();
            values.push(last * s.exp());
        }
        let window = 20;
        let mut m = 1.0f64;
        for i in 0..values.len() {
            for r in &values[i..values.len().min(i + window + 1)] {
                m = m.max(r / values[i]);
            }
        }
        let h = SampledSignal { t0: 0.0, dt, values: values.into_iter().map(|v| vec![v]).collect() };
        let report = lemma31_bound(&h, m * (1.0 + 1e-9), q).unwrap();
        prop_assert!(report.premise_holds);
        prop_assert!(report.bound_holds, "{report:?}");
    }

    #[test]
    fn certificates_decay_off_the_excluded_pair(
        k in 0.01f64..10.0, m in 1.0f64..3.0, omega in 1e-6f64..0.5, p in exponent(), q in exponent(),
    ) {
        let e = gauge_exponent(p, q);
        prop_assert!(e >= 0.0);
        match certify_from_admissibility(k, m, omega, p, q) {
            Ok(cert) => {
                prop_assert!(e > 0.0);
                prop_assert!(cert.nu > 0.0 && cert.n >= 2.0);
            }
            Err(_) => prop_assert!(e == 0.0),
        }
    }

    #[test]
    fn exponent_text_roundtrip(p in exponent()) {
        let back: Exponent = p.to_string().parse().unwrap();
        prop_assert_eq!(back, p);
        if let Exponent::Finite(v) = p {
            let c = p.conjugate();
            prop_assert!((c.conjugate().reciprocal() - 1.0 / v).abs() < 1e-12);
        }
    }
}
