//! The Green's operator `(𝔾f)(t) = ∫₀ᵗ X(t,s) f(s) ds` and empirical
//! admissibility constants.
//!
//! A pair `(Lᵖ, Lᵠ)` is admissible when `𝔾` maps `Lᵖ` into `Lᵠ` with
//! `‖𝔾f − 𝔾g‖_q ≤ K ‖f − g‖_p`. Here `K` is estimated from below as the
//! largest ratio over a seeded test set that mixes truncated trajectories
//! `χ_[a,b] u_{t₀,x}` with random band-limited signals. All norms are taken
//! over the finite window `[0, T]` of the grid.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{estimate_lip_norm, geometric_lags, seeded_rng, trajectory, EvolutionFamily, StateSampler};
use crate::lp::{lp_distance, lp_norm, Exponent, Grid, SampledSignal};
use crate::stability::uniform_bound_constant;
use crate::state::{self, State};

/// Label attached to every sampled admissibility constant.
pub const ESTIMATE_QUALITY: &str = "estimate (lower bound)";

const N_HARMONICS: usize = 4;

/// At most this many parallel work units, each holding a full-length partial
/// sum; the sums are added in chunk order, independent of the thread count.
const GREEN_CHUNKS: usize = 64;

/// `(𝔾f)(tᵢ)`, the trapezoid rule applied to `s ↦ X(tᵢ, s) f(s)` on the
/// nodes of `f` up to `tᵢ`. The first node is always zero.
///
/// Each source node `tⱼ` is pushed forward once with [`EvolutionFamily::flow`],
/// so integrated families cost O(m²) steps rather than O(m³).
pub fn green_apply<F: EvolutionFamily + ?Sized>(family: &F, f: &SampledSignal) -> Result<SampledSignal> {
    let (dim, m) = (f.dim(), f.len());
    let times = f.times();
    let chunk = m.div_ceil(GREEN_CHUNKS).max(1);
    let starts: Vec<usize> = (0..m).step_by(chunk).collect();
    let partials = starts
        .par_iter()
        .map(|&first| -> Result<Vec<State>> {
            let mut acc = vec![state::zeros(dim); m];
            for j in first..(first + chunk).min(m) {
                let path = family.flow(times[j], &f.values[j], &times[j..])?;
                for (i, v) in (j..m).zip(&path) {
                    if i == 0 {
                        continue;
                    }
                    let w = if j == 0 || j == i { 0.5 * f.dt } else { f.dt };
                    state::axpy(w, v, &mut acc[i]);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![state::zeros(dim); m];
    for part in &partials {
        for (total, v) in values.iter_mut().zip(part) {
            state::axpy(1.0, v, total);
        }
    }
    Ok(SampledSignal { t0: f.t0, dt: f.dt, values })
}

/// A member `χ_[a,b] u_{t₀,x}` of the truncated-trajectory test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AXMember {
    pub x: State,
    pub t0: f64,
    pub a: f64,
    pub b: f64,
}

/// Which truncated trajectories to build.
#[derive(Debug, Clone)]
pub enum AXSpec {
    Explicit(Vec<AXMember>),
    Random { count: usize, seed: u64, sampler: StateSampler },
}

impl AXMember {
    pub fn signal<F: EvolutionFamily + ?Sized>(&self, family: &F, grid: Grid) -> Result<SampledSignal> {
        let traj = trajectory(family, self.t0, &self.x, grid)?;
        traj.path.truncate(self.a, self.b)
    }

    fn random<R: Rng + ?Sized>(rng: &mut R, grid: Grid, sampler: &StateSampler) -> Self {
        let (start, end) = (grid.start, grid.end());
        let t0 = rng.gen_range(start..=start + 0.5 * (end - start));
        let a = rng.gen_range(t0..=end);
        let b = rng.gen_range(a..=end);
        AXMember { x: sampler.sample(rng), t0, a, b }
    }
}

pub fn generate_ax<F: EvolutionFamily + ?Sized>(family: &F, grid: Grid, spec: &AXSpec) -> Result<Vec<SampledSignal>> {
    let members = match spec {
        AXSpec::Explicit(members) => members.clone(),
        AXSpec::Random { count, seed, sampler } => {
            let mut rng = seeded_rng(*seed);
            (0..*count).map(|_| AXMember::random(&mut rng, grid, sampler)).collect()
        }
    };
    members.par_iter().map(|m| m.signal(family, grid)).collect()
}

/// Coefficients of `c₀ + Σ_k a_k sin(kπt/T + φ_k)` per component.
#[derive(Debug, Clone, Serialize)]
pub struct BandLimited {
    pub dc: State,
    pub amplitudes: Vec<State>,
    pub phases: Vec<State>,
}

impl BandLimited {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim: usize, n_harmonics: usize) -> Self {
        let dc = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let amplitudes =
            (1..=n_harmonics).map(|k| (0..dim).map(|_| rng.gen_range(-1.0..=1.0) / k as f64).collect()).collect();
        let phases = (0..n_harmonics).map(|_| (0..dim).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()).collect();
        BandLimited { dc, amplitudes, phases }
    }

    pub fn signal(&self, grid: Grid) -> SampledSignal {
        let span = (grid.end() - grid.start).max(f64::MIN_POSITIVE);
        SampledSignal::from_fn(grid, |t| {
            let mut v = self.dc.clone();
            for (k, (amp, ph)) in self.amplitudes.iter().zip(&self.phases).enumerate() {
                let w = (k + 1) as f64 * PI / span;
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi += amp[i] * (w * (t - grid.start) + ph[i]).sin();
                }
            }
            v
        })
    }
}

/// How a test pair was built.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairSpec {
    /// Two truncated trajectories sharing `t₀, a, b`.
    TruncatedTrajectories {
        first: AXMember,
        second: AXMember,
    },
    BandLimited {
        first: BandLimited,
        second: BandLimited,
    },
}

impl PairSpec {
    fn is_ax(&self) -> bool {
        matches!(self, PairSpec::TruncatedTrajectories { .. })
    }

    fn signals<F: EvolutionFamily + ?Sized>(&self, family: &F, grid: Grid) -> Result<(SampledSignal, SampledSignal)> {
        match self {
            PairSpec::TruncatedTrajectories { first, second } => {
                Ok((first.signal(family, grid)?, second.signal(family, grid)?))
            }
            PairSpec::BandLimited { first, second } => Ok((first.signal(grid), second.signal(grid))),
        }
    }
}

/// Deterministic test pairs: even indices are truncated trajectories, odd
/// indices band-limited signals. The list for `n` pairs is a prefix of the
/// list for any larger `n`.
pub fn test_pairs(grid: Grid, sampler: &StateSampler, n_pairs: usize, seed: u64) -> Vec<PairSpec> {
    let mut rng = seeded_rng(seed);
    (0..n_pairs)
        .map(|i| {
            if i % 2 == 0 {
                let first = AXMember::random(&mut rng, grid, sampler);
                let second = AXMember { x: sampler.sample(&mut rng), ..first.clone() };
                PairSpec::TruncatedTrajectories { first, second }
            } else {
                PairSpec::BandLimited {
                    first: BandLimited::random(&mut rng, sampler.dim, N_HARMONICS),
                    second: BandLimited::random(&mut rng, sampler.dim, N_HARMONICS),
                }
            }
        })
        .collect()
}

/// A test pair as inline signals.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessPair {
    pub index: usize,
    pub spec: PairSpec,
    pub f: SampledSignal,
    pub g: SampledSignal,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub p: Exponent,
    pub q: Exponent,
    #[serde(rename = "K_estimate")]
    pub k_estimate: f64,
    pub estimate_quality: String,
    pub horizon: f64,
    pub dt: f64,
    pub n_test_pairs: usize,
    /// Pairs with `‖f − g‖_p > 0`.
    pub n_valid_pairs: usize,
    pub seed: u64,
    /// Largest ratio among truncated-trajectory pairs and band-limited pairs.
    pub max_ratio_ax: f64,
    pub max_ratio_band_limited: f64,
    pub ratios: Vec<Option<f64>>,
    pub witness_pair: WitnessPair,
    /// `ψ ≡ 0` with `‖𝔾ψ‖_∞`, reported for the `(L¹, L^∞)` pair.
    pub psi_witness: Option<SampledSignal>,
    pub psi_green_sup: Option<f64>,
}

/// Largest sampled `‖𝔾f − 𝔾g‖_q / ‖f − g‖_p` over `n_test_pairs` pairs.
pub fn estimate_admissibility<F: EvolutionFamily + ?Sized>(
    family: &F,
    p: Exponent,
    q: Exponent,
    grid: Grid,
    n_test_pairs: usize,
    seed: u64,
) -> Result<AdmissibilityReport> {
    estimate_admissibility_with(family, p, q, grid, &StateSampler::unit_cube(family.dim()), n_test_pairs, seed)
}

pub fn estimate_admissibility_with<F: EvolutionFamily + ?Sized>(
    family: &F,
    p: Exponent,
    q: Exponent,
    grid: Grid,
    sampler: &StateSampler,
    n_test_pairs: usize,
    seed: u64,
) -> Result<AdmissibilityReport> {
    if n_test_pairs == 0 {
        return Err(Error::Estimation("need at least one test pair".into()));
    }
    let specs = test_pairs(grid, sampler, n_test_pairs, seed);
    let ratios = specs
        .par_iter()
        .map(|spec| -> Result<Option<f64>> {
            let (f, g) = spec.signals(family, grid)?;
            let denom = lp_distance(&f, &g, p)?;
            if !(denom > 0.0) {
                return Ok(None);
            }
            let num = lp_distance(&green_apply(family, &f)?, &green_apply(family, &g)?, q)?;
            Ok(Some(num / denom))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<(usize, f64)> = None;
    let (mut max_ax, mut max_bl) = (0.0f64, 0.0f64);
    for (i, r) in ratios.iter().enumerate() {
        let Some(r) = *r else { continue };
        if specs[i].is_ax() {
            max_ax = max_ax.max(r);
        } else {
            max_bl = max_bl.max(r);
        }
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((i, r));
        }
    }
    let Some((index, k_estimate)) = best else {
        return Err(Error::Estimation("every sampled test pair coincides in Lᵖ".into()));
    };
    let (f, g) = specs[index].signals(family, grid)?;
    let (psi_witness, psi_green_sup) = if p == Exponent::Finite(1.0) && q.is_infinite() {
        let psi = SampledSignal::zeros(grid, family.dim());
        let sup = lp_norm(&green_apply(family, &psi)?, Exponent::Infinity);
        (Some(psi), Some(sup))
    } else {
        (None, None)
    };
    Ok(AdmissibilityReport {
        p,
        q,
        k_estimate,
        estimate_quality: ESTIMATE_QUALITY.into(),
        horizon: grid.end() - grid.start,
        dt: grid.dt,
        n_test_pairs,
        n_valid_pairs: ratios.iter().flatten().count(),
        seed,
        max_ratio_ax: max_ax,
        max_ratio_band_limited: max_bl,
        ratios,
        witness_pair: WitnessPair { index, spec: specs[index].clone(), f, g },
        psi_witness,
        psi_green_sup,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Theorem31Config {
    pub n_lags: usize,
    pub n_bases: usize,
    pub n_pairs: usize,
    pub n_test_pairs: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for Theorem31Config {
    fn default() -> Self {
        Theorem31Config { n_lags: 16, n_bases: 2, n_pairs: 16, n_test_pairs: 16, seed: 0, tol: 1e-6 }
    }
}

/// Both directions of the `(L¹, L^∞)` characterization on a finite window.
#[derive(Debug, Clone, Serialize)]
pub struct Theorem31Report {
    pub horizon: f64,
    /// `sup ‖(𝔾ψ)(t)‖` for `ψ ≡ 0`.
    pub psi_green_sup: f64,
    /// `𝔾ψ` does not grow over the second half of the window.
    pub condition_i: bool,
    pub lags: Vec<f64>,
    pub lip_estimates: Vec<f64>,
    /// Largest estimate on lags up to half the window.
    pub n_observed: f64,
    /// Estimates at longer lags stay below `n_observed`.
    pub condition_ii: bool,
    /// Lag of the largest estimate when (ii) fails.
    pub growth_witness_lag: Option<f64>,
    /// Sampled `‖𝔾f − 𝔾g‖_∞ ≤ N ‖f − g‖₁` with `N = n_observed`.
    pub sufficiency_pairs: usize,
    pub sufficiency_violations: usize,
    pub sufficiency_holds: bool,
    /// `K` for `(L¹, L^∞)` and the uniform bound `C` it implies.
    pub k_estimate: f64,
    pub necessity_bound: f64,
    pub necessity_holds: bool,
    pub passes: bool,
}

pub fn check_theorem31<F: EvolutionFamily + ?Sized>(
    family: &F,
    grid: Grid,
    sampler: &StateSampler,
    cfg: Theorem31Config,
) -> Result<Theorem31Report> {
    let span = grid.end() - grid.start;
    if !(span > 0.0) {
        return Err(Error::Domain("check needs a grid with positive span".into()));
    }
    let tol = cfg.tol;

    // (i) with ψ ≡ 0.
    let psi = SampledSignal::zeros(grid, family.dim());
    let green_psi = green_apply(family, &psi)?;
    let norms = green_psi.norms();
    let half = norms.len() / 2;
    let first_half = norms[..=half].iter().copied().fold(0.0, f64::max);
    let psi_green_sup = norms.iter().copied().fold(0.0, f64::max);
    let condition_i = psi_green_sup.is_finite() && psi_green_sup <= first_half * (1.0 + tol) + tol;

    // (ii) from sampled seminorms.
    let lags = geometric_lags(grid.dt.max(1e-3 * span), span, cfg.n_lags);
    let lip_estimates = lags
        .par_iter()
        .enumerate()
        .map(|(k, &lag)| -> Result<f64> {
            let mut best = 0.0f64;
            for b in 0..cfg.n_bases.max(1) {
                let frac = if cfg.n_bases > 1 { b as f64 / (cfg.n_bases - 1) as f64 } else { 0.0 };
                let s = grid.start + frac * (span - lag).max(0.0);
                let seed = cfg.seed.wrapping_add((k * 101 + b) as u64);
                best = best.max(estimate_lip_norm(family, s + lag, s, sampler, cfg.n_pairs, seed)?.value);
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_observed =
        lags.iter().zip(&lip_estimates).filter(|(tau, _)| **tau <= 0.5 * span).map(|(_, g)| *g).fold(0.0, f64::max);
    let (worst_idx, worst) =
        lip_estimates
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, g)| if g > acc.1 { (i, g) } else { acc });
    let condition_ii = worst <= n_observed * (1.0 + tol) + tol;
    let growth_witness_lag = (!condition_ii).then_some(lags[worst_idx]);

    // Sufficiency: ‖𝔾f − 𝔾g‖_∞ ≤ N ‖f − g‖₁.
    let one = Exponent::Finite(1.0);
    let specs = test_pairs(grid, sampler, cfg.n_test_pairs, cfg.seed);
    let rows = specs
        .par_iter()
        .map(|spec| -> Result<(f64, f64)> {
            let (f, g) = spec.signals(family, grid)?;
            let lhs = lp_distance(&green_apply(family, &f)?, &green_apply(family, &g)?, Exponent::Infinity)?;
            Ok((lhs, lp_distance(&f, &g, one)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let sufficiency_violations = rows.iter().filter(|(lhs, d)| *lhs > n_observed * d * (1.0 + tol) + tol).count();

    // Necessity: an (L¹, L^∞) constant K forces ‖X(t,s)‖_lip ≤ C(K, M, ω).
    let k_estimate = rows.iter().filter(|(_, d)| *d > 0.0).map(|(lhs, d)| lhs / d).fold(0.0, f64::max);
    let growth = family.growth();
    let necessity_bound = uniform_bound_constant(k_estimate, growth.m, growth.omega);
    let necessity_holds = worst <= necessity_bound * (1.0 + tol) + tol;

    let sufficiency_holds = sufficiency_violations == 0;
    Ok(Theorem31Report {
        horizon: span,
        psi_green_sup,
        condition_i,
        lags,
        lip_estimates,
        n_observed,
        condition_ii,
        growth_witness_lag,
        sufficiency_pairs: rows.len(),
        sufficiency_violations,
        sufficiency_holds,
        k_estimate,
        necessity_bound,
        necessity_holds,
        passes: condition_i && condition_ii && sufficiency_holds && necessity_holds,
    })
}
