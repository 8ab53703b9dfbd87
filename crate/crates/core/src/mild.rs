//! Mild solutions of `x' = A(t)x + f(t,x)` and the evolution family they
//! generate.
//!
//! Given the linear family `U(t,s)` of `x' = A(t)x` and a Lipschitz
//! nonlinearity `f`, the mild solution starting from `x` at time `s` is the
//! fixed point of the variation-of-constants map
//!
//! ```text
//! x(t) = U(t,s)x + ∫_s^t U(t,τ) f(τ, x(τ)) dτ.
//! ```
//!
//! The memory integral is discretized with the trapezoid rule on a uniform
//! grid and the resulting discrete equation is solved by Picard iteration,
//! starting from `x⁽⁰⁾(t) = U(t,s)x`. Horizons longer than `chunk_len` are
//! solved chunk by chunk, restarting from the end value of the previous
//! chunk (the cocycle law of the generated family).

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{check_time_order, seeded_rng, EvolutionFamily, FamilyKind, Growth, StateSampler, OMEGA_FLOOR};
use crate::lp::SampledSignal;
use crate::state::{self, State};

/// A nonlinearity `f(t, x)`, Lipschitz in `x` uniformly in `t`.
pub trait Nonlinearity: Send + Sync {
    fn evaluate(&self, t: f64, x: &[f64]) -> State;

    /// Declared Lipschitz constant `L`.
    fn lipschitz(&self) -> f64;

    /// Whether `f(t, 0) = 0` for all `t`.
    fn vanishes_at_zero(&self) -> bool;
}

impl<N: Nonlinearity + ?Sized> Nonlinearity for &N {
    fn evaluate(&self, t: f64, x: &[f64]) -> State {
        (**self).evaluate(t, x)
    }
    fn lipschitz(&self) -> f64 {
        (**self).lipschitz()
    }
    fn vanishes_at_zero(&self) -> bool {
        (**self).vanishes_at_zero()
    }
}

impl<N: Nonlinearity + ?Sized> Nonlinearity for Box<N> {
    fn evaluate(&self, t: f64, x: &[f64]) -> State {
        (**self).evaluate(t, x)
    }
    fn lipschitz(&self) -> f64 {
        (**self).lipschitz()
    }
    fn vanishes_at_zero(&self) -> bool {
        (**self).vanishes_at_zero()
    }
}

impl<N: Nonlinearity + ?Sized> Nonlinearity for Arc<N> {
    fn evaluate(&self, t: f64, x: &[f64]) -> State {
        (**self).evaluate(t, x)
    }
    fn lipschitz(&self) -> f64 {
        (**self).lipschitz()
    }
    fn vanishes_at_zero(&self) -> bool {
        (**self).vanishes_at_zero()
    }
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNonlinearity;

impl Nonlinearity for ZeroNonlinearity {
    fn evaluate(&self, _t: f64, x: &[f64]) -> State {
        state::zeros(x.len())
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn vanishes_at_zero(&self) -> bool {
        true
    }
}

/// `f(t, x) = coefficient · x`.
#[derive(Debug, Clone, Copy)]
pub struct LinearNonlinearity {
    pub coefficient: f64,
}

impl Nonlinearity for LinearNonlinearity {
    fn evaluate(&self, _t: f64, x: &[f64]) -> State {
        state::scale(self.coefficient, x)
    }
    fn lipschitz(&self) -> f64 {
        self.coefficient.abs()
    }
    fn vanishes_at_zero(&self) -> bool {
        true
    }
}

/// A nonlinearity given by a closure together with its declared constants.
pub struct FnNonlinearity<F> {
    lipschitz: f64,
    vanishes_at_zero: bool,
    map: F,
}

impl<F> FnNonlinearity<F>
where
    F: Fn(f64, &[f64]) -> State + Send + Sync,
{
    pub fn new(lipschitz: f64, vanishes_at_zero: bool, map: F) -> Self {
        FnNonlinearity { lipschitz, vanishes_at_zero, map }
    }
}

impl<F> Nonlinearity for FnNonlinearity<F>
where
    F: Fn(f64, &[f64]) -> State + Send + Sync,
{
    fn evaluate(&self, t: f64, x: &[f64]) -> State {
        (self.map)(t, x)
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    fn vanishes_at_zero(&self) -> bool {
        self.vanishes_at_zero
    }
}

/// Sampled check of a nonlinearity's declared constants.
#[derive(Debug, Clone, Serialize)]
pub struct NonlinearityCheck {
    pub max_ratio: f64,
    pub max_at_zero: f64,
    pub consistent: bool,
}

pub fn check_nonlinearity<N: Nonlinearity + ?Sized>(
    f: &N,
    sampler: &StateSampler,
    times: (f64, f64),
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> NonlinearityCheck {
    let mut rng = seeded_rng(seed);
    let zero = state::zeros(sampler.dim);
    let (mut max_ratio, mut max_at_zero) = (0.0f64, 0.0f64);
    for _ in 0..n_samples {
        let t = rng.gen_range(times.0..=times.1);
        let x = sampler.sample(&mut rng);
        let y = sampler.sample(&mut rng);
        let d = state::distance(&x, &y);
        if d > 0.0 {
            max_ratio = max_ratio.max(state::distance(&f.evaluate(t, &x), &f.evaluate(t, &y)) / d);
        }
        max_at_zero = max_at_zero.max(state::norm(&f.evaluate(t, &zero)));
    }
    let consistent = max_ratio <= f.lipschitz() + tol && (!f.vanishes_at_zero() || max_at_zero <= tol);
    NonlinearityCheck { max_ratio, max_at_zero, consistent }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MildSolveConfig {
    pub dt: f64,
    pub max_picard_iters: usize,
    pub fixed_point_tol: f64,
    /// Length of the sub-intervals chained through the cocycle law.
    pub chunk_len: f64,
}

impl Default for MildSolveConfig {
    fn default() -> Self {
        MildSolveConfig { dt: 0.01, max_picard_iters: 200, fixed_point_tol: 1e-12, chunk_len: 1.0 }
    }
}

impl MildSolveConfig {
    pub fn with_dt(dt: f64) -> Self {
        MildSolveConfig { dt, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0 && self.max_picard_iters > 0 && self.fixed_point_tol > 0.0 && self.chunk_len > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("mild solver settings must all be positive: {self:?}")))
        }
    }
}

/// Output of [`solve_mild`].
#[derive(Debug, Clone, Serialize)]
pub struct MildSolution {
    pub path: SampledSignal,
    /// Picard iterations summed over all chunks.
    pub iterations: usize,
    /// Largest final Picard update over all chunks.
    pub residual: f64,
    /// Update sizes per iteration, one list per chunk.
    pub residual_history: Vec<Vec<f64>>,
}

const EXPANSION_LIMIT: usize = 3;

/// Solves the variation-of-constants equation on `[s, s + horizon]`.
///
/// The horizon is split into `ceil(horizon / dt)` equal steps, so the last
/// node is exactly `s + horizon`.
pub fn solve_mild<U, N>(
    linear: &U,
    f: &N,
    s: f64,
    x: &[f64],
    horizon: f64,
    cfg: &MildSolveConfig,
) -> Result<MildSolution>
where
    U: EvolutionFamily + ?Sized,
    N: Nonlinearity + ?Sized,
{
    cfg.validate()?;
    if linear.kind() != FamilyKind::Linear {
        return Err(Error::Domain("the mild solver needs a linear evolution family".into()));
    }
    if !(horizon >= 0.0) || !(s >= 0.0) {
        return Err(Error::Domain(format!("need s >= 0 and horizon >= 0, got {s}, {horizon}")));
    }
    if horizon == 0.0 {
        return Ok(MildSolution {
            path: SampledSignal { t0: s, dt: cfg.dt, values: vec![x.to_vec()] },
            iterations: 0,
            residual: 0.0,
            residual_history: Vec::new(),
        });
    }
    let steps = ((horizon / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let chunk_steps = ((cfg.chunk_len / h).round() as usize).max(1);

    let mut values = Vec::with_capacity(steps + 1);
    values.push(x.to_vec());
    let mut iterations = 0;
    let mut residual = 0.0f64;
    let mut residual_history = Vec::new();
    let mut start = 0;
    while start < steps {
        let m = chunk_steps.min(steps - start);
        let xc = values[start].clone();
        let chunk = picard_chunk(linear, f, s, start, h, m, &xc, cfg)?;
        iterations += chunk.history.len();
        residual = residual.max(*chunk.history.last().unwrap_or(&0.0));
        residual_history.push(chunk.history);
        values.extend(chunk.values.into_iter().skip(1));
        start += m;
    }
    Ok(MildSolution { path: SampledSignal { t0: s, dt: h, values }, iterations, residual, residual_history })
}

struct ChunkSolution {
    values: Vec<State>,
    history: Vec<f64>,
}

/// Picard iteration on nodes `first..=first+m` of the grid `s + k·h`.
#[allow(clippy::too_many_arguments)]
fn picard_chunk<U, N>(
    linear: &U,
    f: &N,
    s: f64,
    first: usize,
    h: f64,
    m: usize,
    xc: &[f64],
    cfg: &MildSolveConfig,
) -> Result<ChunkSolution>
where
    U: EvolutionFamily + ?Sized,
    N: Nonlinearity + ?Sized,
{
    let time = |i: usize| s + (first + i) as f64 * h;
    let tc = time(0);
    let base: Vec<State> = (0..=m)
        .map(|i| if i == 0 { Ok(xc.to_vec()) } else { linear.evaluate(time(i), tc, xc) })
        .collect::<Result<_>>()?;
    // U(t_{i+1}, t_i) is reused by every sweep; the step propagators are
    // applied to the running memory sum below.
    let mut x = base.clone();
    let mut history = Vec::new();
    let mut expanding = 0;
    for _ in 0..cfg.max_picard_iters {
        let fx: Vec<State> = (0..=m).map(|i| f.evaluate(time(i), &x[i])).collect();
        // memory_i = Σ_{j<i} c_j U(t_i, t_j) f_j with trapezoid end weight
        // h/2 at j = 0; the node i itself enters with weight h/2.
        let mut next = Vec::with_capacity(m + 1);
        next.push(xc.to_vec());
        let mut memory = state::zeros(xc.len());
        for i in 0..m {
            let c = if i == 0 { 0.5 * h } else { h };
            state::axpy(c, &fx[i], &mut memory);
            memory = linear.evaluate(time(i + 1), time(i), &memory)?;
            let mut xi = base[i + 1].clone();
            state::axpy(1.0, &memory, &mut xi);
            state::axpy(0.5 * h, &fx[i + 1], &mut xi);
            next.push(xi);
        }
        let update = x.iter().zip(&next).map(|(a, b)| state::distance(a, b)).fold(0.0, f64::max);
        if let Some(&prev) = history.last() {
            if update > prev {
                expanding += 1;
            } else {
                expanding = 0;
            }
        }
        history.push(update);
        x = next;
        if !update.is_finite() {
            return Err(Error::Convergence {
                iterations: history.len(),
                residual: update,
                reason: "Picard iterate is not finite".into(),
            });
        }
        if update <= cfg.fixed_point_tol {
            return Ok(ChunkSolution { values: x, history });
        }
        if expanding >= EXPANSION_LIMIT {
            return Err(Error::Convergence {
                iterations: history.len(),
                residual: update,
                reason: format!("Picard map expanded for {EXPANSION_LIMIT} consecutive iterations; shrink chunk_len"),
            });
        }
    }
    Err(Error::Convergence {
        iterations: history.len(),
        residual: *history.last().unwrap_or(&f64::NAN),
        reason: "iteration budget exhausted".into(),
    })
}

/// The nonlinear evolution family generated by `x' = A(t)x + f(t,x)`:
/// `X(t,s)x` is the mild solution from `x` at time `s`, evaluated at `t`.
#[derive(Clone)]
pub struct GeneratedFamily<U, N> {
    pub linear: U,
    pub nonlinearity: N,
    pub cfg: MildSolveConfig,
}

pub fn generate_family<U, N>(linear: U, nonlinearity: N, cfg: MildSolveConfig) -> Result<GeneratedFamily<U, N>>
where
    U: EvolutionFamily,
    N: Nonlinearity,
{
    cfg.validate()?;
    if linear.kind() != FamilyKind::Linear {
        return Err(Error::Domain("generate_family needs a linear evolution family".into()));
    }
    Ok(GeneratedFamily { linear, nonlinearity, cfg })
}

/// `(K, ω + K L)` with `ω` raised to a small positive floor.
pub fn gronwall_growth(linear: Growth, lipschitz: f64) -> Growth {
    let omega = linear.omega.max(OMEGA_FLOOR);
    Growth { m: linear.m, omega: omega + linear.m * lipschitz }
}

impl<U: EvolutionFamily, N: Nonlinearity> EvolutionFamily for GeneratedFamily<U, N> {
    fn dim(&self) -> usize {
        self.linear.dim()
    }

    fn growth(&self) -> Growth {
        gronwall_growth(self.linear.growth(), self.nonlinearity.lipschitz())
    }

    fn kind(&self) -> FamilyKind {
        FamilyKind::Nonlinear
    }

    fn evaluate(&self, t: f64, s: f64, x: &[f64]) -> Result<State> {
        check_time_order(t, s)?;
        if t - s <= 1e-14 {
            return Ok(x.to_vec());
        }
        let sol = solve_mild(&self.linear, &self.nonlinearity, s, x, t - s, &self.cfg)?;
        Ok(sol.path.values.last().cloned().unwrap_or_else(|| x.to_vec()))
    }

    fn flow(&self, s: f64, x: &[f64], times: &[f64]) -> Result<Vec<State>> {
        let mut out = Vec::with_capacity(times.len());
        let mut current = x.to_vec();
        let mut at = s;
        for &t in times {
            check_time_order(t, at)?;
            if t - at > 1e-14 {
                current = self.evaluate(t, at, &current)?;
                at = t;
            }
            out.push(current.clone());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GronwallRow {
    pub t: f64,
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GronwallReport {
    pub k: f64,
    pub omega: f64,
    pub lipschitz: f64,
    pub rows: Vec<GronwallRow>,
    pub n_violations: usize,
    pub holds: bool,
}

/// Checks `‖X(t,s)x − X(t,s)y‖ ≤ K e^{(ω+KL)(t−s)} ‖x−y‖` on the given
/// samples, with `K, ω` from the linear family and `L` from `f`.
/// A sample passes when `lhs ≤ rhs (1 + allowance) + allowance`.
pub fn gronwall_bound_check<U, N, X>(
    linear: &U,
    f: &N,
    generated: &X,
    samples: &[(f64, f64, State, State)],
    allowance: f64,
) -> Result<GronwallReport>
where
    U: EvolutionFamily + ?Sized,
    N: Nonlinearity + ?Sized,
    X: EvolutionFamily + ?Sized,
{
    let growth = linear.growth();
    let (k, omega, lipschitz) = (growth.m, growth.omega.max(OMEGA_FLOOR), f.lipschitz());
    let rows = samples
        .iter()
        .map(|(t, s, x, y)| -> Result<GronwallRow> {
            let lhs = state::distance(&generated.evaluate(*t, *s, x)?, &generated.evaluate(*t, *s, y)?);
            let rhs = k * ((omega + k * lipschitz) * (t - s)).exp() * state::distance(x, y);
            Ok(GronwallRow { t: *t, s: *s, lhs, rhs })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_violations = rows.iter().filter(|r| r.lhs > r.rhs * (1.0 + allowance) + allowance).count();
    Ok(GronwallReport { k, omega, lipschitz, rows, n_violations, holds: n_violations == 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{check_axioms, ExponentialFamily};
    use crate::lp::Grid;

    fn decay() -> ExponentialFamily {
        ExponentialFamily::scalar(1.0)
    }

    #[test]
    fn zero_nonlinearity_reproduces_linear_flow() {
        let sol = solve_mild(&decay(), &ZeroNonlinearity, 0.5, &[2.0], 3.0, &MildSolveConfig::default()).unwrap();
        for (k, v) in sol.path.values.iter().enumerate() {
            let t = sol.path.time(k);
            assert!((v[0] - 2.0 * (-(t - 0.5)).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_reaction_matches_closed_form() {
        let f = LinearNonlinearity { coefficient: 0.5 };
        let sol = solve_mild(&decay(), &f, 0.0, &[1.0], 5.0, &MildSolveConfig::with_dt(0.01)).unwrap();
        let err = sol
            .path
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| (v[0] - (-0.5 * sol.path.time(k)).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "max error {err}");
        assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn boxed_forcing_matches_convolution() {
        // x' = -x + χ_[0,1](t), x(0) = 0.
        let f = FnNonlinearity::new(0.0, false, |t, _x: &[f64]| vec![if t <= 1.0 + 1e-12 { 1.0 } else { 0.0 }]);
        let dt = 1e-3;
        let sol = solve_mild(&decay(), &f, 0.0, &[0.0], 4.0, &MildSolveConfig::with_dt(dt)).unwrap();
        let e = std::f64::consts::E;
        for (k, v) in sol.path.values.iter().enumerate() {
            let t = sol.path.time(k);
            let exact = if t <= 1.0 { 1.0 - (-t).exp() } else { (e - 1.0) * (-t).exp() };
            // The jump at t = 1 costs one half-cell of the trapezoid.
            assert!((v[0] - exact).abs() < dt, "t = {t}");
        }
    }

    #[test]
    fn residuals_shrink_after_first_iterate() {
        let f = FnNonlinearity::new(0.8, true, |_t, x: &[f64]| x.iter().map(|v| -0.8 * v.sin()).collect());
        let sol = solve_mild(&ExponentialFamily::new(0.3, 2), &f, 0.0, &[1.0, -2.0], 3.0, &MildSolveConfig::default())
            .unwrap();
        for hist in &sol.residual_history {
            for w in hist[1..].windows(2) {
                assert!(w[1] <= w[0], "{hist:?}");
            }
            assert!(*hist.last().unwrap() <= 1e-12);
        }
    }

    #[test]
    fn expanding_picard_map_aborts() {
        let f = LinearNonlinearity { coefficient: 40.0 };
        let cfg = MildSolveConfig { chunk_len: 5.0, ..MildSolveConfig::with_dt(0.05) };
        let err = solve_mild(&decay(), &f, 0.0, &[1.0], 5.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }), "{err}");
    }

    #[test]
    fn nonconvergence_reports_last_residual() {
        let f = LinearNonlinearity { coefficient: 0.5 };
        let cfg = MildSolveConfig { max_picard_iters: 2, ..Default::default() };
        match solve_mild(&decay(), &f, 0.0, &[1.0], 1.0, &cfg) {
            Err(Error::Convergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn generated_family_with_zero_forcing_is_linear_family() {
        let fam = generate_family(decay(), ZeroNonlinearity, MildSolveConfig::default()).unwrap();
        for (t, s, x) in [(2.0, 0.5, 1.5), (0.3, 0.1, -2.0), (1.0, 1.0, 4.0)] {
            let v = fam.evaluate(t, s, &[x]).unwrap()[0];
            assert!((v - x * (-(t - s)).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn generated_family_closed_form_and_axioms() {
        let fam =
            generate_family(decay(), LinearNonlinearity { coefficient: 0.5 }, MildSolveConfig::default()).unwrap();
        let v = fam.evaluate(3.0, 1.0, &[2.0]).unwrap()[0];
        assert!((v - 2.0 * (-1.0f64).exp()).abs() < 1e-5);
        assert_eq!(fam.growth(), Growth { m: 1.0, omega: OMEGA_FLOOR + 0.5 });

        let grid = Grid::span(3.0, 0.1).unwrap();
        let rep = check_axioms(&fam, grid, &StateSampler::unit_cube(1), 100, 5, 10.0 * fam.cfg.dt).unwrap();
        assert!(rep.passes, "{rep:?}");
        assert_eq!(rep.max_e1, 0.0);
    }

    #[test]
    fn zero_solution_is_preserved() {
        let f = FnNonlinearity::new(1.0, true, |_t, x: &[f64]| x.iter().map(|v| -v / (1.0 + v * v)).collect());
        let fam = generate_family(ExponentialFamily::new(0.2, 3), f, MildSolveConfig::default()).unwrap();
        let v = fam.evaluate(2.5, 0.5, &[0.0; 3]).unwrap();
        assert!(state::norm(&v) <= 1e-12);
    }

    #[test]
    fn gronwall_examples() {
        let lin = ExponentialFamily::scalar(1.0);
        let zero_fam = generate_family(lin, ZeroNonlinearity, MildSolveConfig::default()).unwrap();
        let samples = vec![(2.0, 0.0, vec![1.0], vec![-1.0]), (1.0, 0.5, vec![0.3], vec![0.3])];
        let rep = gronwall_bound_check(&lin, &ZeroNonlinearity, &zero_fam, &samples, 1e-9).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.rows[1].lhs, 0.0);
        assert_eq!(rep.rows[1].rhs, 0.0);

        // Declared K = 1, ω = 1 for the decaying family; L = 0.5.
        let declared = FnFamilyDecl(lin);
        let f = LinearNonlinearity { coefficient: 0.5 };
        let fam = generate_family(lin, f, MildSolveConfig::default()).unwrap();
        let rep = gronwall_bound_check(&declared, &f, &fam, &[(3.0, 1.0, vec![1.0], vec![0.0])], 1e-9).unwrap();
        assert!((rep.rows[0].lhs - (-1.0f64).exp()).abs() < 1e-5);
        assert!((rep.rows[0].rhs - 3.0f64.exp()).abs() < 1e-9);
        assert!(rep.holds);
    }

    /// The decaying family but with declared growth (1, 1).
    struct FnFamilyDecl(ExponentialFamily);

    impl EvolutionFamily for FnFamilyDecl {
        fn dim(&self) -> usize {
            1
        }
        fn growth(&self) -> Growth {
            Growth { m: 1.0, omega: 1.0 }
        }
        fn kind(&self) -> FamilyKind {
            FamilyKind::Linear
        }
        fn evaluate(&self, t: f64, s: f64, x: &[f64]) -> Result<State> {
            self.0.evaluate(t, s, x)
        }
    }

    #[test]
    fn nonlinearity_check_flags_wrong_constant() {
        let honest = FnNonlinearity::new(1.0, true, |_t, x: &[f64]| x.iter().map(|v| v.sin()).collect());
        let liar = FnNonlinearity::new(0.1, true, |_t, x: &[f64]| x.to_vec());
        let sampler = StateSampler::unit_cube(2);
        assert!(check_nonlinearity(&honest, &sampler, (0.0, 1.0), 100, 0, 1e-12).consistent);
        assert!(!check_nonlinearity(&liar, &sampler, (0.0, 1.0), 100, 0, 1e-12).consistent);
    }
}
