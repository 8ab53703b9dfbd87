//! Mild solver against closed forms and a direct-quadrature oracle.

use evostab::evolution::{
    check_axioms, EvolutionFamily, ExponentialFamily, FamilyKind, FnFamily, Growth, StateSampler,
};
use evostab::lp::Grid;
use evostab::mild::{
    generate_family, gronwall_bound_check, solve_mild, FnNonlinearity, LinearNonlinearity, MildSolveConfig,
    Nonlinearity,
};
use evostab::state;
use rand::Rng;

fn max_error(dt: f64) -> f64 {
    let sol = solve_mild(
        &ExponentialFamily::scalar(1.0),
        &LinearNonlinearity { coefficient: 0.5 },
        0.0,
        &[1.0],
        5.0,
        &MildSolveConfig::with_dt(dt),
    )
    .unwrap();
    sol.path.values.iter().enumerate().map(|(k, v)| (v[0] - (-0.5 * sol.path.time(k)).exp()).abs()).fold(0.0, f64::max)
}

#[test]
fn second_order_convergence() {
    let coarse = max_error(0.02);
    let fine = max_error(0.01);
    let ratio = coarse / fine;
    assert!(fine <= 0.01);
    assert!((3.0..=5.0).contains(&ratio), "error ratio {ratio}");
}

/// `U(t,s) = exp(−∫_s^t a)` with `a(τ) = 1 + ½ sin τ`, so `‖U(t,s)‖ ≤ e·e^{−(t−s)}`.
fn time_dependent() -> impl EvolutionFamily {
    let big_a = |t: f64| t - 0.5 * t.cos();
    FnFamily::new(1, Growth::new(std::f64::consts::E, -1.0), FamilyKind::Linear, move |t, s, x: &[f64]| {
        state::scale((-(big_a(t) - big_a(s))).exp(), x)
    })
}

#[test]
fn recursive_memory_matches_direct_quadrature() {
    let linear = time_dependent();
    let f = FnNonlinearity::new(0.5, false, |t: f64, x: &[f64]| vec![0.5 * x[0].sin() + t.cos()]);
    let (s, x0, horizon, dt) = (0.3, 0.8, 3.0, 0.01);
    let sol = solve_mild(&linear, &f, s, &[x0], horizon, &MildSolveConfig::with_dt(dt)).unwrap();

    // Picard on x_i = U(t_i,s)x0 + Σ_j w_ij U(t_i,t_j) f(t_j, x_j), O(m²) per sweep.
    let m = sol.path.len();
    let times = sol.path.times();
    let mut x: Vec<f64> = vec![x0; m];
    for _ in 0..200 {
        let fx: Vec<f64> = (0..m).map(|j| f.evaluate(times[j], &[x[j]])[0]).collect();
        let next: Vec<f64> = (0..m)
            .map(|i| {
                let mut acc = linear.evaluate(times[i], s, &[x0]).unwrap()[0];
                if i > 0 {
                    for j in 0..=i {
                        let w = if j == 0 || j == i { 0.5 * dt } else { dt };
                        acc += w * linear.evaluate(times[i], times[j], &[fx[j]]).unwrap()[0];
                    }
                }
                acc
            })
            .collect();
        let delta = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if delta < 1e-14 {
            break;
        }
    }
    let gap = x.iter().zip(&sol.path.values).map(|(a, b)| (a - b[0]).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-11, "recursive vs direct: {gap}");
}

#[test]
fn chunk_length_does_not_change_the_result() {
    let f = FnNonlinearity::new(1.0, true, |_t, x: &[f64]| vec![-x[0].sin()]);
    let linear = ExponentialFamily::scalar(0.5);
    let a =
        solve_mild(&linear, &f, 0.0, &[2.0], 4.0, &MildSolveConfig { chunk_len: 0.3, ..MildSolveConfig::default() })
            .unwrap();
    let b =
        solve_mild(&linear, &f, 0.0, &[2.0], 4.0, &MildSolveConfig { chunk_len: 10.0, ..MildSolveConfig::default() })
            .unwrap();
    assert!(a.path.max_distance(&b.path).unwrap() < 1e-12);
}

#[test]
fn generated_family_is_an_evolution_family() {
    let f = FnNonlinearity::new(0.8, true, |t: f64, x: &[f64]| vec![0.8 * (x[0] * t.cos()).tanh()]);
    let family = generate_family(ExponentialFamily::scalar(1.0), f, MildSolveConfig::with_dt(0.01)).unwrap();
    let grid = Grid::span(3.0, 0.01).unwrap();
    let report = check_axioms(&family, grid, &StateSampler::new(1, 2.0), 40, 5, 1e-9).unwrap();
    assert!(report.passes, "{report:?}");
}

#[test]
fn gronwall_holds_on_random_samples() {
    let f = FnNonlinearity::new(0.7, true, |_t, x: &[f64]| vec![0.7 * x[0].sin(), -0.7 * x[1].cos() + 0.7]);
    let family = generate_family(ExponentialFamily::new(0.2, 2), f, MildSolveConfig::with_dt(0.01)).unwrap();
    let mut rng = evostab::evolution::seeded_rng(11);
    let samples: Vec<_> = (0..40)
        .map(|_| {
            let s = rng.gen_range(0.0..2.0);
            let t = s + rng.gen_range(0.0..2.0);
            let x = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let y = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            (t, s, x, y)
        })
        .collect();
    let report = gronwall_bound_check(&family.linear, &family.nonlinearity, &family, &samples, 1e-9).unwrap();
    assert!(report.holds, "{} violations", report.n_violations);
}

#[test]
fn nonlinear_linear_family_is_rejected() {
    let nonlinear = FnFamily::new(1, Growth::new(1.0, 0.0), FamilyKind::Nonlinear, |_t, _s, x: &[f64]| x.to_vec());
    let err =
        solve_mild(&nonlinear, &LinearNonlinearity { coefficient: 1.0 }, 0.0, &[1.0], 1.0, &MildSolveConfig::default());
    assert!(err.is_err());
}
