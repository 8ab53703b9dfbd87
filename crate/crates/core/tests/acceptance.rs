//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the table is always printed; the
//! process exits nonzero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use evostab::evolution::{
    check_axioms, classify_stability, seeded_rng, ClassifyConfig, EvolutionFamily, ExponentialFamily, StateSampler,
    OMEGA_FLOOR,
};
use evostab::green::{check_theorem31, estimate_admissibility, Theorem31Config};
use evostab::lp::{indicator, lp_norm, Exponent, Grid, SampledSignal};
use evostab::mild::{generate_family, gronwall_bound_check, solve_mild, LinearNonlinearity, MildSolveConfig};
use evostab::models::example21::DEFAULT_INVERSION_TOL;
use evostab::models::{
    check_attraction, check_prop42, choose_n0, example21_family, find_fixed_point, heat_mild_family, HPreset,
    PointwiseReaction, Reaction, ScalarFieldH, SpectralHeatModel,
};
use evostab::stability::{
    certify_from_admissibility, convolution_bound, exp_convolve, extract_exponential, sample_lip_profile,
    verify_certificate, ConvolutionCase, StabilityCertificate,
};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_mild_solver_order() -> Outcome {
    let clock = Instant::now();
    let max_error = |dt: f64| {
        let sol = solve_mild(
            &ExponentialFamily::scalar(1.0),
            &LinearNonlinearity { coefficient: 0.5 },
            0.0,
            &[1.0],
            5.0,
            &MildSolveConfig::with_dt(dt),
        )
        .unwrap();
        sol.path
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| (v[0] - (-0.5 * sol.path.time(k)).exp()).abs())
            .fold(0.0, f64::max)
    };
    let e1 = max_error(0.01);
    let e2 = max_error(0.005);
    let ratio = e1 / e2;
    let secs = clock.elapsed().as_secs_f64();
    ensure(
        e1 <= 0.01 && (3.0..=5.0).contains(&ratio) && secs < 1.0,
        format!("error(dt=0.01) = {e1:.3e}, ratio = {ratio:.4}, runtime = {secs:.3}s"),
    )
}

fn c2_gronwall() -> Outcome {
    let model = SpectralHeatModel::new(16).unwrap();
    let reaction = Reaction { lambda: 1.0, beta: 0.5, ..Default::default() };
    let family = heat_mild_family(&model, reaction, MildSolveConfig::with_dt(0.01)).unwrap();
    let sampler = StateSampler::unit_cube(16);
    let mut rng = seeded_rng(2);
    let samples: Vec<_> = (0..100)
        .map(|_| {
            let s = rng.gen_range(0.0..2.0);
            let t = s + rng.gen_range(0.0..2.0);
            (t, s, sampler.sample(&mut rng), sampler.sample(&mut rng))
        })
        .collect();
    // Relative slack covering the O(dt²) trapezoid error of the solver.
    let allowance = 1e-6;
    let report = gronwall_bound_check(&family.linear, &family.nonlinearity, &family, &samples, allowance).unwrap();
    let tightest = report.rows.iter().map(|r| r.lhs / r.rhs).fold(0.0, f64::max);
    ensure(
        report.n_violations == 0,
        format!("{} violations over 100 samples, max lhs/rhs = {tightest:.4}", report.n_violations),
    )
}

fn c3_example21_sandwich() -> Outcome {
    let presets = [
        HPreset::Constant { value: 0.75 },
        HPreset::AffineClip { intercept: 0.75, slope: -0.05 },
        HPreset::SinStep { width: 5.0 },
    ];
    let (mut lo, mut hi, mut e2) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for (k, preset) in presets.into_iter().enumerate() {
        let family = example21_family(ScalarFieldH::new(preset).unwrap());
        let mut rng = seeded_rng(30 + k as u64);
        let mut n = 0;
        while n < 500 {
            let s = rng.gen_range(0.0..5.0);
            let t = s + rng.gen_range(0.0..5.0);
            let x: f64 = rng.gen_range(-5.0..5.0);
            let y: f64 = rng.gen_range(-5.0..5.0);
            if (x - y).abs() < 1e-9 {
                continue;
            }
            let r = (family.evaluate(t, s, &[x]).unwrap()[0] - family.evaluate(t, s, &[y]).unwrap()[0]).abs()
                / (x - y).abs();
            lo = lo.min(r);
            hi = hi.max(r);
            n += 1;
        }
        let axioms = check_axioms(
            &family,
            Grid::span(10.0, 0.01).unwrap(),
            &StateSampler::new(1, 5.0),
            500,
            40 + k as u64,
            DEFAULT_INVERSION_TOL,
        )
        .unwrap();
        e2 = e2.max(axioms.max_e2);
    }
    ensure(
        lo >= 0.5 - 1e-6 && hi <= 1.0 + 1e-6 && e2 <= 10.0 * DEFAULT_INVERSION_TOL,
        format!("ratios in [{lo:.6}, {hi:.6}], max e2 violation = {e2:.2e}"),
    )
}

fn c4_staircase() -> Outcome {
    let mut rng = seeded_rng(4);
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let m = rng.gen_range(0.5..10.0);
        let d = rng.gen_range(0.1..5.0);
        let c: f64 = rng.gen_range(0.01..0.99);
        let t0 = rng.gen_range(0.0..10.0);
        let (n, nu) = extract_exponential(m, d, c).unwrap();
        let samples: Vec<_> = (0..=500)
            .map(|j| {
                let lag = j as f64 * d / 25.0;
                (t0 + lag, t0, m * c.powf((lag / d).floor()))
            })
            .collect();
        let check = verify_certificate(&samples, &StabilityCertificate::empirical(n, nu), 1e-12);
        if !check.passed {
            failures += 1;
        }
        worst = worst.max(check.worst_excess);
    }
    ensure(failures == 0, format!("{failures} of 100 certificates failed, worst excess = {worst:.2e}"))
}

fn random_nonnegative_band_limited(rng: &mut impl Rng, grid: Grid) -> SampledSignal {
    let w = rng.gen_range(0.2..2.0);
    let terms: Vec<(f64, f64)> =
        (1..=4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU))).collect();
    let a0 = terms.iter().map(|(a, _)| a.abs()).sum::<f64>() + rng.gen_range(0.0..0.5);
    SampledSignal::from_scalar_fn(grid, |t| {
        let v = a0 + terms.iter().enumerate().map(|(k, (a, ph))| a * ((k + 1) as f64 * w * t + ph).cos()).sum::<f64>();
        v.max(0.0)
    })
}

fn c5_convolution() -> Outcome {
    let grid = Grid::span(10.0, 1e-3).unwrap();
    let chi = indicator(0.0, 1.0, &[1.0], grid).unwrap();
    let spot1 = lp_norm(&exp_convolve(&chi, 1.0).unwrap(), Exponent::Infinity);
    let ones = SampledSignal::from_scalar_fn(grid, |_| 1.0);
    let spot2 = lp_norm(&exp_convolve(&ones, 2.0).unwrap(), Exponent::Infinity);
    let err1 = (spot1 - (1.0 - (-1.0f64).exp())).abs();
    let err2 = (spot2 - 0.5).abs();

    let fin = Exponent::Finite;
    let inf = Exponent::Infinity;
    let cases = [
        (inf, inf),
        (fin(1.0), fin(1.0)),
        (fin(1.0), fin(2.0)),
        (fin(1.0), inf),
        (fin(2.0), fin(2.0)),
        (fin(2.0), fin(4.0)),
    ];
    let random_grid = Grid::span(20.0, 1e-3).unwrap();
    let mut violations = 0;
    let mut worst = 0.0f64;
    for (k, (p, q)) in cases.into_iter().enumerate() {
        let mut rng = seeded_rng(50 + k as u64);
        for _ in 0..200 {
            let nu = rng.gen_range(0.5..3.0);
            let h = random_nonnegative_band_limited(&mut rng, random_grid);
            let report = convolution_bound(&ConvolutionCase::new(p, q, nu).unwrap(), &h).unwrap();
            if !report.holds {
                violations += 1;
            }
            worst = worst.max(report.h_conv_norm_checked / report.bound);
        }
    }
    ensure(
        violations == 0 && err1 <= 1e-4 && err2 <= 1e-4,
        format!(
            "{violations} violations over 1200 signals (max ‖H‖/bound = {worst:.4}); spot errors {err1:.2e}, {err2:.2e}"
        ),
    )
}

fn c6_certificate_pipeline() -> Outcome {
    let grid = Grid::span(40.0, 0.05).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for nu in [0.5, 1.0, 2.0] {
        let family = ExponentialFamily::scalar(nu);
        let adm = estimate_admissibility(&family, Exponent::Finite(2.0), Exponent::Finite(2.0), grid, 16, 6).unwrap();
        let growth = family.growth();
        let cert = certify_from_admissibility(
            adm.k_estimate,
            growth.m,
            growth.omega.max(OMEGA_FLOOR),
            Exponent::Finite(2.0),
            Exponent::Finite(2.0),
        )
        .unwrap();
        let samples = sample_lip_profile(&family, 30.0, 61, 10.0, 3, &StateSampler::unit_cube(1), 8, 60).unwrap();
        let check = verify_certificate(&samples, &cert, 1e-12);
        ok &= check.passed && cert.nu <= nu;
        details.push(format!(
            "ν={nu}: K={:.4}, ν_cert={:.3e}, N={:.3}, violations={}",
            adm.k_estimate, cert.nu, cert.n, check.n_violations
        ));
    }
    ensure(ok, details.join("; "))
}

fn c7_admissibility_equivalence() -> Outcome {
    let grid = Grid::span(20.0, 0.05).unwrap();
    let sampler = StateSampler::unit_cube(1);
    let cfg = Theorem31Config::default();
    let identity = check_theorem31(&ExponentialFamily::identity(1), grid, &sampler, cfg).unwrap();
    let decaying = check_theorem31(&ExponentialFamily::scalar(1.0), grid, &sampler, cfg).unwrap();
    let expanding = check_theorem31(&ExponentialFamily::scalar(-0.1), grid, &sampler, cfg).unwrap();
    let witness = expanding.growth_witness_lag;
    ensure(
        identity.passes && decaying.passes && !expanding.condition_ii && witness.is_some(),
        format!(
            "identity passes = {}, decay passes = {}, expanding (ii) = {} with witness t−s = {:?}",
            identity.passes, decaying.passes, expanding.condition_ii, witness
        ),
    )
}

fn c8_fixed_point() -> Outcome {
    let clock = Instant::now();
    let forcing = Reaction { forcing_amplitude: 1.0, forcing_rate: 1.0, ..Default::default() };
    let family =
        generate_family(ExponentialFamily::scalar(1.0), PointwiseReaction(forcing), MildSolveConfig::with_dt(1e-2))
            .unwrap();
    let sampler = StateSampler::unit_cube(1);
    let classified = classify_stability(
        &family,
        Grid::span(10.0, 0.1).unwrap(),
        &sampler,
        ClassifyConfig { seed: 8, ..ClassifyConfig::default() },
    )
    .unwrap();
    let Some((n, alpha)) = classified.certificate() else {
        return Err("forced model not classified as exponentially stable".into());
    };
    let n0 = choose_n0(n, alpha).unwrap();
    let grid = Grid::span(10.0, 1e-3).unwrap();
    let fixed = find_fixed_point(&family, n0, grid, Exponent::Finite(2.0), 1e-10, 200, None).unwrap();
    let err =
        fixed.phi.times().iter().zip(&fixed.phi.values).map(|(t, v)| (v[0] - t * (-t).exp()).abs()).fold(0.0, f64::max);
    let attraction = check_attraction(&family, &fixed.phi, n, alpha, &sampler, 20, 80, 1e-9).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    ensure(
        err <= 1e-3 && attraction.holds && secs < 10.0,
        format!(
            "max |φ − t e^(−t)| = {err:.2e}, fitted (N, α) = ({n:.4}, {alpha:.4}), n0 = {n0}, attraction violations = {}, runtime = {secs:.2}s",
            attraction.n_violations
        ),
    )
}

fn c9_spectral_decay() -> Outcome {
    let model = SpectralHeatModel::new(16).unwrap();
    let family =
        heat_mild_family(&model, Reaction { lambda: 1.0, ..Default::default() }, MildSolveConfig::with_dt(1e-2))
            .unwrap();
    let mut worst = 0.0f64;
    for k in 0..16 {
        let rate = (k * k + 1) as f64;
        let t = 1.0 / rate;
        let mut e_k = vec![0.0; 16];
        e_k[k] = 1.0;
        let measured = -family.evaluate(t, 0.0, &e_k).unwrap()[k].ln() / t;
        worst = worst.max((measured - rate).abs() / rate);
    }
    let bounded =
        check_prop42(&family, &StateSampler::unit_cube(16), 1.0, 1e-9, Grid::span(2.0, 0.01).unwrap(), 20, 9).unwrap();
    ensure(
        worst <= 1e-3 && bounded.holds,
        format!("max relative rate error = {worst:.2e}, boundedness with N = 1: max ratio {:.4}", bounded.max_ratio),
    )
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("adm.toml");
    std::fs::write(
        &config,
        "seed = 10\n[grid]\nT = 20.0\ndt = 0.05\n[model]\nkind = \"closed_form_linear\"\nrate = 1.0\n\
         [admissibility]\np = 2\nq = \"inf\"\nn_test_pairs = 16\n",
    )
    .map_err(|e| e.to_string())?;
    let mut docs = Vec::new();
    for run in 0..2 {
        let out_dir = dir.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_evostab"))
            .arg("--config")
            .arg(&config)
            .args(["--command", "admissibility", "--out"])
            .arg(&out_dir)
            .env_remove("EVOSTAB_OUT_DIR")
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        let bytes = std::fs::read(out_dir.join("admissibility.json")).map_err(|e| e.to_string())?;
        docs.push(bytes);
    }
    let parse = |b: &[u8]| serde_json::from_slice::<serde_json::Value>(b).unwrap();
    let (a, b) = (parse(&docs[0]), parse(&docs[1]));
    let same_k = a["report"]["K_estimate"] == b["report"]["K_estimate"];
    let same_witness = a["report"]["witness_pair"] == b["report"]["witness_pair"];
    ensure(
        same_k && same_witness && docs[0] == docs[1],
        format!(
            "K_estimate = {} both runs: {same_k}, witness pair {} identical: {same_witness}, reports byte-identical: {}",
            a["report"]["K_estimate"],
            a["report"]["witness_pair"]["index"],
            docs[0] == docs[1]
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("mild-solver order", c1_mild_solver_order),
        ("Gronwall bound on the spectral model", c2_gronwall),
        ("scalar H-flow sandwich and cocycle", c3_example21_sandwich),
        ("exponential extraction from a contraction window", c4_staircase),
        ("convolution bounds and spot values", c5_convolution),
        ("certificate soundness pipeline", c6_certificate_pipeline),
        ("(L¹, L^∞) characterization", c7_admissibility_equivalence),
        ("fixed point and attraction", c8_fixed_point),
        ("spectral decay and boundedness", c9_spectral_decay),
        ("admissibility determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("PASS  criterion {:>2}: {name} — {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {:>2}: {name} — {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
