//! Evolution families `X(t,s)` on `Δ = {t ≥ s ≥ 0}`.
//!
//! An evolution family satisfies `X(t,t) = id` and the cocycle law
//! `X(t,s) = X(t,r)∘X(r,s)`; it is *continuous* when in addition
//! `‖X(t,s)‖_lip ≤ M e^{ω(t-s)}`. Everything here treats the family as a
//! black-box evaluator: the Lipschitz seminorm is estimated from below by
//! sampling pairs of states, and stability is classified from those
//! estimates.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{Grid, SampledSignal};
use crate::state::{self, State};

/// Floor used whenever a growth exponent must be strictly positive.
pub const OMEGA_FLOOR: f64 = 1e-6;

/// Default number of sampled pairs for Lipschitz estimates.
pub const DEFAULT_PAIRS: usize = 64;

/// Declared exponential growth bound `‖X(t,s)‖_lip ≤ M e^{ω(t-s)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub m: f64,
    pub omega: f64,
}

impl Growth {
    pub fn new(m: f64, omega: f64) -> Self {
        Growth { m, omega: omega.max(OMEGA_FLOOR) }
    }

    pub fn bound(&self, lag: f64) -> f64 {
        self.m * (self.omega * lag).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Linear,
    Nonlinear,
}

/// A (possibly nonlinear) evolution family acting on `ℝⁿ`.
///
/// Implementations must be pure: evaluation may happen concurrently from
/// many threads.
pub trait EvolutionFamily: Send + Sync {
    fn dim(&self) -> usize;

    fn growth(&self) -> Growth;

    fn kind(&self) -> FamilyKind;

    /// `X(t,s)x` for `t ≥ s ≥ 0`.
    fn evaluate(&self, t: f64, s: f64, x: &[f64]) -> Result<State>;

    /// `X(τ,s)x` for each `τ` in the nondecreasing list `times`, all `≥ s`.
    ///
    /// The default evaluates every time independently, which is exact for
    /// closed-form families. Families computed by integration override this
    /// to reuse work along the path.
    fn flow(&self, s: f64, x: &[f64], times: &[f64]) -> Result<Vec<State>> {
        times.iter().map(|&t| self.evaluate(t.max(s), s, x)).collect()
    }
}

impl<F: EvolutionFamily + ?Sized> EvolutionFamily for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn growth(&self) -> Growth {
        (**self).growth()
    }
    fn kind(&self) -> FamilyKind {
        (**self).kind()
    }
    fn evaluate(&self, t: f64, s: f64, x: &[f64]) -> Result<State> {
        (**self).evaluate(t, s, x)
    }
    fn flow(&self, s: f64, x: &[f64], times: &[f64]) -> Result<Vec<State>> {
        (**self).flow(s, x, times)
    }
}

impl<F: EvolutionFamily + ?Sized> EvolutionFamily for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn growth(&self) -> Growth {
        (**self).growth()
    }
    fn kind(&self) -> FamilyKind {
        (**self).kind()
    }
    fn evaluate(&self, t: f64, s: f64, x: &[f64]) -> Result<State> {
        (**self).evaluate(t, s, x)
    }
    fn flow(&self, s: f64, x: &[f64], times: &[f64]) -> Result<Vec<State>> {
        (**self).flow(s, x, times)
    }
}

impl<F: EvolutionFamily + ?Sized> EvolutionFamily for Arc<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn growth(&self) -> Growth {
        (**self).growth()
    }
    fn kind(&self) -> FamilyKind {
        (**self).kind()
    }
    fn evaluate(&self, t: f64, s: f64, x: &[f64]) -> Result<State> {
        (**self).evaluate(t, s, x)
    }
    fn flow(&self, s: f64, x: &[f64], times: &[f64]) -> Result<Vec<State>> {
        (**self).flow(s, x, times)
    }
}

pub(crate) fn check_time_order(t: f64, s: f64) -> Result<()> {
    if s >= 0.0 && t >= s - 1e-12 {
        Ok(())
    } else {
        Err(Error::Domain(format!("evolution family needs t >= s >= 0, got t = {t}, s = {s}")))
    }
}

/// `X(t,s)x = e^{-rate (t-s)} x` on `ℝⁿ`. A negative rate gives an
/// expanding family; `rate = 0` is the identity family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFamily {
    pub rate: f64,
    pub dim: usize,
}

impl ExponentialFamily {
    pub fn new(rate: f64, dim: usize) -> Self {
        ExponentialFamily { rate, dim }
    }

    pub fn scalar(rate: f64) -> Self {
        Self::new(rate, 1)
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(0.0, dim)
    }
}

impl EvolutionFamily for ExponentialFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn growth(&self) -> Growth {
        Growth::new(1.0, -self.rate)
    }

    fn kind(&self) -> FamilyKind {
        FamilyKind::Linear
    }

    fn evaluate(&self, t: f64, s: f64, x: &[f64]) -> Result<State> {
        check_time_order(t, s)?;
        Ok(state::scale((-self.rate * (t - s)).exp(), x))
    }
}

/// A family given by an arbitrary closure, mostly for experiments and tests.
pub struct FnFamily<F> {
    dim: usize,
    growth: Growth,
    kind: FamilyKind,
    map: F,
}

impl<F> FnFamily<F>
where
    F: Fn(f64, f64, &[f64]) -> State + Send + Sync,
{
    pub fn new(dim: usize, growth: Growth, kind: FamilyKind, map: F) -> Self {
        FnFamily { dim, growth, kind, map }
    }
}

impl<F> EvolutionFamily for FnFamily<F>
where
    F: Fn(f64, f64, &[f64]) -> State + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn growth(&self) -> Growth {
        self.growth
    }
    fn kind(&self) -> FamilyKind {
        self.kind
    }
    fn evaluate(&self, t: f64, s: f64, x: &[f64]) -> Result<State> {
        check_time_order(t, s)?;
        Ok((self.map)(t, s, x))
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws states with components uniform in `[-radius, radius]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSampler {
    pub dim: usize,
    pub radius: f64,
}

impl StateSampler {
    pub fn new(dim: usize, radius: f64) -> Self {
        StateSampler { dim, radius }
    }

    pub fn unit_cube(dim: usize) -> Self {
        Self::new(dim, 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        (0..self.dim).map(|_| rng.gen_range(-self.radius..=self.radius)).collect()
    }
}

/// Maximum sampled violations of the evolution-family axioms.
#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub n_samples: usize,
    pub seed: u64,
    pub tol: f64,
    /// `max ‖X(t,t)x − x‖`.
    pub max_e1: f64,
    /// `max ‖X(t,s)x − X(t,r)X(r,s)x‖`.
    pub max_e2: f64,
    /// e₂ violation divided by `max(1, M e^{ω(t-s)})`.
    pub max_e2_scaled: f64,
    /// Largest relative excess of a sampled ratio over `M e^{ω(t-s)}`.
    pub max_growth_excess: f64,
    /// `(t, r, s)` of the worst e₂ violation.
    pub e2_witness: Option<(f64, f64, f64)>,
    pub passes: bool,
}

/// Samples `n_samples` triples `s ≤ r ≤ t` from the grid together with
/// states `x, y` and records the worst violations of (e₁), (e₂) and the
/// declared growth bound.
pub fn check_axioms<F: EvolutionFamily + ?Sized>(
    family: &F,
    grid: Grid,
    sampler: &StateSampler,
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<AxiomReport> {
    let mut rng = seeded_rng(seed);
    let growth = family.growth();
    let draws: Vec<_> = (0..n_samples)
        .map(|_| {
            let mut idx = [0usize; 3].map(|_| rng.gen_range(0..grid.len));
            idx.sort_unstable();
            let x = sampler.sample(&mut rng);
            let y = sampler.sample(&mut rng);
            (grid.time(idx[0]), grid.time(idx[1]), grid.time(idx[2]), x, y)
        })
        .collect();

    let rows = draws
        .par_iter()
        .map(|(s, r, t, x, y)| -> Result<(f64, f64, f64, f64)> {
            let e1 = state::distance(&family.evaluate(*t, *t, x)?, x);
            let direct = family.evaluate(*t, *s, x)?;
            let composed = family.evaluate(*t, *r, &family.evaluate(*r, *s, x)?)?;
            let e2 = state::distance(&direct, &composed);
            let bound = growth.bound(t - s);
            let e2_scaled = e2 / bound.max(1.0);
            let dxy = state::distance(x, y);
            let excess = if dxy > 0.0 {
                let ratio = state::distance(&direct, &family.evaluate(*t, *s, y)?) / dxy;
                ((ratio - bound) / bound).max(0.0)
            } else {
                0.0
            };
            Ok((e1, e2, e2_scaled, excess))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = AxiomReport {
        n_samples,
        seed,
        tol,
        max_e1: 0.0,
        max_e2: 0.0,
        max_e2_scaled: 0.0,
        max_growth_excess: 0.0,
        e2_witness: None,
        passes: true,
    };
    for ((s, r, t, _, _), (e1, e2, e2_scaled, excess)) in draws.iter().zip(rows) {
        report.max_e1 = report.max_e1.max(e1);
        if e2_scaled > report.max_e2_scaled {
            report.max_e2_scaled = e2_scaled;
            report.e2_witness = Some((*t, *r, *s));
        }
        report.max_e2 = report.max_e2.max(e2);
        report.max_growth_excess = report.max_growth_excess.max(excess);
    }
    report.passes = report.max_e1 <= tol && report.max_e2_scaled <= tol && report.max_growth_excess <= tol;
    Ok(report)
}

/// A sampled lower bound on `‖X(t,s)‖_lip`.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzEstimate {
    pub t: f64,
    pub s: f64,
    pub value: f64,
    pub n_pairs: usize,
    pub seed: u64,
    pub ratios: Vec<f64>,
}

/// Maximum of `‖X(t,s)x − X(t,s)y‖ / ‖x − y‖` over `n_pairs` sampled pairs.
pub fn estimate_lip_norm<F: EvolutionFamily + ?Sized>(
    family: &F,
    t: f64,
    s: f64,
    sampler: &StateSampler,
    n_pairs: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    check_time_order(t, s)?;
    if n_pairs == 0 {
        return Err(Error::Estimation("need at least one sampled pair".into()));
    }
    let mut rng = seeded_rng(seed);
    let pairs: Vec<(State, State)> = (0..n_pairs)
        .map(|_| (sampler.sample(&mut rng), sampler.sample(&mut rng)))
        .filter(|(x, y)| state::distance(x, y) > 0.0)
        .collect();
    if pairs.is_empty() {
        return Err(Error::Estimation("sampler produced only coincident pairs".into()));
    }
    let ratios = pairs
        .par_iter()
        .map(|(x, y)| -> Result<f64> {
            let fx = family.evaluate(t, s, x)?;
            let fy = family.evaluate(t, s, y)?;
            Ok(state::distance(&fx, &fy) / state::distance(x, y))
        })
        .collect::<Result<Vec<_>>>()?;
    let value = ratios.iter().copied().fold(0.0, f64::max);
    Ok(LipschitzEstimate { t, s, value, n_pairs, seed, ratios })
}

/// Growth constants from a local bound `φ` with `‖X(t,s)‖_lip ≤ φ(t-s)`:
/// `M = sup_{[0,1]} φ`, `ω = max{1, ln φ(1)}`.
pub fn growth_from_phi(phi: impl Fn(f64) -> f64) -> Result<Growth> {
    let at_one = phi(1.0);
    if !(at_one > 0.0) {
        return Err(Error::Domain(format!("need φ(1) > 0, got {at_one}")));
    }
    const NODES: usize = 1001;
    let m = (0..NODES).map(|k| phi(k as f64 / (NODES - 1) as f64)).fold(f64::NEG_INFINITY, f64::max);
    Ok(Growth { m, omega: at_one.ln().max(1.0) })
}

/// The trajectory `u_{t0,x0}`: `X(t,t0)x0` for `t ≥ t0`, zero before.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub t0: f64,
    pub x0: State,
    pub path: SampledSignal,
}

pub fn trajectory<F: EvolutionFamily + ?Sized>(family: &F, t0: f64, x0: &[f64], grid: Grid) -> Result<Trajectory> {
    if t0 < grid.start - 1e-12 || t0 > grid.end() + 1e-12 {
        return Err(Error::Domain(format!("trajectory start {t0} outside grid span [{}, {}]", grid.start, grid.end())));
    }
    let eps = 1e-9 * grid.dt;
    let first = (0..grid.len).find(|&k| grid.time(k) >= t0 - eps).unwrap_or(grid.len);
    let times: Vec<f64> = (first..grid.len).map(|k| grid.time(k).max(t0)).collect();
    let tail = family.flow(t0, x0, &times)?;
    let mut values = vec![state::zeros(x0.len()); first];
    values.extend(tail);
    Ok(Trajectory { t0, x0: x0.to_vec(), path: SampledSignal { t0: grid.start, dt: grid.dt, values } })
}

/// Largest `‖u_{t0,x0}(t)‖` over the final `tail_fraction` of the grid, for
/// `n_states` sampled `x0` and starts `t0 ∈ {start, start + span/4}`.
pub fn trajectory_tail_max<F: EvolutionFamily + ?Sized>(
    family: &F,
    grid: Grid,
    sampler: &StateSampler,
    n_states: usize,
    seed: u64,
    tail_fraction: f64,
) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Domain(format!("tail fraction must be in (0, 1], got {tail_fraction}")));
    }
    let mut rng = seeded_rng(seed);
    let span = grid.end() - grid.start;
    let starts = [grid.start, grid.start + 0.25 * span];
    let cases: Vec<(f64, State)> = starts
        .iter()
        .flat_map(|&t0| (0..n_states).map(move |_| t0).collect::<Vec<_>>())
        .map(|t0| (t0, sampler.sample(&mut rng)))
        .collect();
    let tail_start = grid.len - ((grid.len as f64 * tail_fraction).ceil() as usize).clamp(1, grid.len);
    let maxima = cases
        .par_iter()
        .map(|(t0, x0)| -> Result<f64> {
            let traj = trajectory(family, *t0, x0, grid)?;
            Ok(traj.path.values[tail_start..].iter().map(|v| state::norm(v)).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(maxima.into_iter().fold(0.0, f64::max))
}

/// Tuning knobs for [`classify_stability`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub n_lags: usize,
    pub n_bases: usize,
    pub n_pairs: usize,
    pub n_states: usize,
    pub seed: u64,
    pub tail_fraction: f64,
    pub tol: f64,
    /// Threshold on trajectory tails for the asymptotic flag.
    pub asymptotic_tol: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            n_lags: 16,
            n_bases: 3,
            n_pairs: 16,
            n_states: 4,
            seed: 0,
            tail_fraction: 0.25,
            tol: 1e-6,
            asymptotic_tol: 1e-3,
        }
    }
}

/// Least-squares fit `ln g(τ) ≈ ln N − ν τ`, with `N` raised so that the
/// envelope `N e^{-ν τ}` covers every sample.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExponentialFit {
    pub n: f64,
    pub nu: f64,
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityClassification {
    pub lags: Vec<f64>,
    /// Largest sampled Lipschitz ratio at each lag, over all base times.
    pub lip_estimates: Vec<f64>,
    pub fit: ExponentialFit,
    /// Bound observed on the first half of the lag range.
    pub uniform_bound: f64,
    pub uniformly_stable: bool,
    pub uniformly_exponentially_stable: bool,
    pub asymptotically_stable: bool,
    pub tail_max: f64,
    pub config: ClassifyConfig,
}

impl StabilityClassification {
    /// `(N, ν)` when the family was classified as u.e.s.
    pub fn certificate(&self) -> Option<(f64, f64)> {
        self.uniformly_exponentially_stable.then_some((self.fit.n, self.fit.nu))
    }
}

pub(crate) fn geometric_lags(min: f64, max: f64, n: usize) -> Vec<f64> {
    if n <= 1 || max <= min {
        return vec![max];
    }
    let ratio = (max / min).powf(1.0 / (n - 1) as f64);
    (0..n).map(|k| min * ratio.powi(k as i32)).collect()
}

pub(crate) fn fit_exponential(lags: &[f64], values: &[f64]) -> ExponentialFit {
    let logs: Vec<f64> = values.iter().map(|v| v.max(1e-300).ln()).collect();
    let n = lags.len() as f64;
    let mean_x = lags.iter().sum::<f64>() / n;
    let mean_y = logs.iter().sum::<f64>() / n;
    let sxx: f64 = lags.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = lags.iter().zip(&logs).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = mean_y - slope * mean_x;
    let rms_residual =
        (lags.iter().zip(&logs).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    let nu = -slope;
    let envelope = lags.iter().zip(values).map(|(tau, g)| g * (nu * tau).exp()).fold(0.0, f64::max);
    ExponentialFit { n: envelope, nu, slope, intercept, rms_residual }
}

/// Empirical stability trichotomy from sampled Lipschitz ratios.
///
/// Lags are geometrically spaced over the grid span. The family is flagged
/// uniformly stable when ratios at long lags do not exceed the bound seen
/// on the first half of the lag range, uniformly exponentially stable when
/// the log-linear fit has slope below `-tol` and RMS residual at most `tol`,
/// and asymptotically stable when every sampled trajectory tail stays below
/// `asymptotic_tol`.
pub fn classify_stability<F: EvolutionFamily + ?Sized>(
    family: &F,
    grid: Grid,
    sampler: &StateSampler,
    cfg: ClassifyConfig,
) -> Result<StabilityClassification> {
    let span = grid.end() - grid.start;
    if !(span > 0.0) {
        return Err(Error::Domain("classification needs a grid with positive span".into()));
    }
    let lags = geometric_lags(grid.dt.max(1e-3 * span), span, cfg.n_lags);
    let mut lip_estimates = Vec::with_capacity(lags.len());
    for (k, &lag) in lags.iter().enumerate() {
        let mut best = 0.0f64;
        for b in 0..cfg.n_bases.max(1) {
            let frac = if cfg.n_bases > 1 { b as f64 / (cfg.n_bases - 1) as f64 } else { 0.0 };
            let s = grid.start + frac * (span - lag).max(0.0);
            let est = estimate_lip_norm(
                family,
                s + lag,
                s,
                sampler,
                cfg.n_pairs,
                cfg.seed.wrapping_add((k * 101 + b) as u64),
            )?;
            best = best.max(est.value);
        }
        lip_estimates.push(best);
    }

    let uniform_bound =
        lags.iter().zip(&lip_estimates).filter(|(tau, _)| **tau <= 0.5 * span).map(|(_, g)| *g).fold(0.0, f64::max);
    let overall = lip_estimates.iter().copied().fold(0.0, f64::max);
    let uniformly_stable = overall <= uniform_bound * (1.0 + cfg.tol) + cfg.tol;

    let fit = fit_exponential(&lags, &lip_estimates);
    let uniformly_exponentially_stable = fit.slope < -cfg.tol && fit.rms_residual <= cfg.tol;

    let tail_max = trajectory_tail_max(family, grid, sampler, cfg.n_states, cfg.seed, cfg.tail_fraction)?;

    Ok(StabilityClassification {
        lags,
        lip_estimates,
        fit,
        uniform_bound,
        uniformly_stable,
        uniformly_exponentially_stable,
        asymptotically_stable: tail_max <= cfg.asymptotic_tol,
        tail_max,
        config: cfg,
    })
}
