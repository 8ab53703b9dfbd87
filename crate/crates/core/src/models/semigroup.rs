//! Evolution semigroups on `Lʳ(ℝ₊, 𝕏)` and the mild solution they fix.
//!
//! For a linear family `U`, `[Tʰf](t) = U(t, t−h) f(t−h)` for `t ≥ h` and
//! `0` before. For the nonlinear family `X`, `[S(h)f](t) = X(t, t−h) f(t−h)`
//! for `t ≥ h`; on `[0, h)` we feed in the solution from zero, `X(t, 0)0`.
//! That inflow is what makes `S` a semigroup whose common fixed point is
//! `φ(t) = X(t,0)0` when `X(·,0)0 ≠ 0`; for families with `X(t,s)0 = 0` it is
//! the zero extension.
//!
//! The fixed point is found by iterating `S(n₀)` with `n₀` large enough that
//! `N e^{−α n₀} ≤ 1/2`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{seeded_rng, EvolutionFamily, FamilyKind, StateSampler};
use crate::lp::{lp_distance, Exponent, Grid, SampledSignal};
use crate::mild::Nonlinearity;
use crate::state::{self, State};

/// A signal regarded as an element of `Lʳ(ℝ₊, 𝕏)`, `1 ≤ r < ∞`.
#[derive(Debug, Clone, Serialize)]
pub struct EvolutionSemigroupState {
    pub r: Exponent,
    pub f: SampledSignal,
}

impl EvolutionSemigroupState {
    pub fn new(r: Exponent, f: SampledSignal) -> Result<Self> {
        if r.is_infinite() {
            return Err(Error::Domain("evolution semigroups act on Lʳ with finite r".into()));
        }
        Ok(EvolutionSemigroupState { r, f })
    }
}

fn check_step(hstep: f64) -> Result<()> {
    if hstep >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("semigroup step must be >= 0, got {hstep}")))
    }
}

/// `Tʰ` for a linear family: shift right by `h` and propagate, zero on `[0, h)`.
pub fn evolution_semigroup_t<U: EvolutionFamily + ?Sized>(
    st: &EvolutionSemigroupState,
    hstep: f64,
    linear: &U,
) -> Result<EvolutionSemigroupState> {
    check_step(hstep)?;
    if linear.kind() != FamilyKind::Linear {
        return Err(Error::Domain("Tʰ needs a linear evolution family".into()));
    }
    let f = &st.f;
    let dim = f.dim();
    let eps = 1e-9 * f.dt;
    let values = f
        .times()
        .into_iter()
        .map(|t| {
            if t + eps < hstep {
                Ok(state::zeros(dim))
            } else {
                let from = (t - hstep).max(0.0);
                linear.evaluate(t, from, &f.value_at(from))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvolutionSemigroupState { r: st.r, f: SampledSignal { t0: f.t0, dt: f.dt, values } })
}

/// `S(h)` for a (possibly nonlinear) family, with inflow `X(t, 0)0` on `[0, h)`.
pub fn evolution_semigroup_s<F: EvolutionFamily + ?Sized>(
    st: &EvolutionSemigroupState,
    hstep: f64,
    family: &F,
) -> Result<EvolutionSemigroupState> {
    check_step(hstep)?;
    let f = &st.f;
    let dim = f.dim();
    let eps = 1e-9 * f.dt;
    let times = f.times();
    let split = times.iter().position(|t| t + eps >= hstep).unwrap_or(times.len());
    let mut values = family.flow(0.0, &state::zeros(dim), &times[..split])?;
    let shifted = times[split..]
        .par_iter()
        .map(|&t| {
            let from = (t - hstep).max(0.0);
            family.evaluate(t, from, &f.value_at(from))
        })
        .collect::<Result<Vec<_>>>()?;
    values.extend(shifted);
    Ok(EvolutionSemigroupState { r: st.r, f: SampledSignal { t0: f.t0, dt: f.dt, values } })
}

/// Smallest integer `n₀ ≥ 1` with `N e^{−α n₀} ≤ 1/2`.
pub fn choose_n0(n: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && n > 0.0) {
        return Err(Error::Domain(format!("need N > 0 and α > 0, got N = {n}, α = {alpha}")));
    }
    Ok(((2.0 * n).ln() / alpha).ceil().max(1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub phi: SampledSignal,
    pub n0: f64,
    pub r: Exponent,
    pub iterations: usize,
    /// `‖f_{k+1} − f_k‖_r` per iteration.
    pub updates: Vec<f64>,
    /// Ratios of successive nonzero updates.
    pub contraction_factors: Vec<f64>,
    /// `max_t ‖φ(t) − X(t,0)0‖`.
    pub deviation_from_zero_solution: f64,
}

/// Iterates `f ↦ S(n₀)f` from `start` (default `f ≡ 0`) until successive
/// iterates are within `tol` in `Lʳ`.
pub fn find_fixed_point<F: EvolutionFamily + ?Sized>(
    family: &F,
    n0: f64,
    grid: Grid,
    r: Exponent,
    tol: f64,
    max_iters: usize,
    start: Option<SampledSignal>,
) -> Result<FixedPointReport> {
    if !(n0 > 0.0) {
        return Err(Error::Domain(format!("n0 must be positive, got {n0}")));
    }
    let f0 = start.unwrap_or_else(|| SampledSignal::zeros(grid, family.dim()));
    let mut st = EvolutionSemigroupState::new(r, f0)?;
    let mut updates = Vec::new();
    let mut contraction_factors = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        let next = evolution_semigroup_s(&st, n0, family)?;
        let update = lp_distance(&next.f, &st.f, r)?;
        if let Some(&prev) = updates.last() {
            if prev > 0.0 {
                let factor: f64 = update / prev;
                contraction_factors.push(factor);
                if factor >= 1.0 && update > tol {
                    return Err(Error::NonContractive { factor });
                }
            }
        }
        updates.push(update);
        st = next;
        if update <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            iterations: updates.len(),
            residual: *updates.last().unwrap_or(&f64::NAN),
            reason: "fixed-point iteration budget exhausted".into(),
        });
    }
    let zero_solution = family.flow(0.0, &state::zeros(family.dim()), &st.f.times())?;
    let deviation_from_zero_solution =
        st.f.values.iter().zip(&zero_solution).map(|(a, b)| state::distance(a, b)).fold(0.0, f64::max);
    Ok(FixedPointReport {
        phi: st.f,
        n0,
        r,
        iterations: updates.len(),
        updates,
        contraction_factors,
        deviation_from_zero_solution,
    })
}

/// `max_t ‖φ(t) − ∫₀ᵗ U(t,ξ) G(ξ, φ(ξ)) dξ‖`, trapezoid in `ξ`.
///
/// The memory sum is propagated node to node with `U(t_{i+1}, t_i)`, which
/// equals the direct quadrature for a linear family with an exact cocycle.
pub fn fixed_point_integral_residual<U, N>(linear: &U, g: &N, phi: &SampledSignal) -> Result<f64>
where
    U: EvolutionFamily + ?Sized,
    N: Nonlinearity + ?Sized,
{
    let times = phi.times();
    let h = phi.dt;
    let gv: Vec<State> = times.iter().zip(&phi.values).map(|(t, v)| g.evaluate(*t, v)).collect();
    let mut memory = state::zeros(phi.dim());
    let mut worst = state::norm(&phi.values[0]);
    for i in 0..times.len().saturating_sub(1) {
        let c = if i == 0 { 0.5 * h } else { h };
        state::axpy(c, &gv[i], &mut memory);
        memory = linear.evaluate(times[i + 1], times[i], &memory)?;
        let mut integral = memory.clone();
        state::axpy(0.5 * h, &gv[i + 1], &mut integral);
        worst = worst.max(state::distance(&phi.values[i + 1], &integral));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AttractionReport {
    pub n: f64,
    pub alpha: f64,
    pub n_samples: usize,
    pub n_violations: usize,
    /// Largest `‖X(t,0)x − φ(t)‖ − N e^{−αt}‖x‖`.
    pub worst_excess: f64,
    pub holds: bool,
}

/// Checks `‖X(t,0)x − φ(t)‖ ≤ N e^{−αt}‖x‖ + tol` along the grid of `φ`.
#[allow(clippy::too_many_arguments)]
pub fn check_attraction<F: EvolutionFamily + ?Sized>(
    family: &F,
    phi: &SampledSignal,
    n: f64,
    alpha: f64,
    sampler: &StateSampler,
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<AttractionReport> {
    let mut rng = seeded_rng(seed);
    let xs: Vec<State> = (0..n_samples).map(|_| sampler.sample(&mut rng)).collect();
    let times = phi.times();
    let excesses = xs
        .par_iter()
        .map(|x| -> Result<f64> {
            let path = family.flow(phi.t0, x, &times)?;
            let nx = state::norm(x);
            Ok(path
                .iter()
                .zip(&phi.values)
                .zip(&times)
                .map(|((u, p), t)| state::distance(u, p) - n * (-alpha * t).exp() * nx)
                .fold(f64::NEG_INFINITY, f64::max))
        })
        .collect::<Result<Vec<_>>>()?;
    let n_violations = excesses.iter().filter(|e| **e > tol).count();
    Ok(AttractionReport {
        n,
        alpha,
        n_samples,
        n_violations,
        worst_excess: excesses.into_iter().fold(f64::NEG_INFINITY, f64::max),
        holds: n_violations == 0,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundednessReport {
    pub n: f64,
    pub n_samples: usize,
    pub n_violations: usize,
    /// Largest `‖X(t,s)x‖ / ‖x‖` seen.
    pub max_ratio: f64,
    pub holds: bool,
}

/// Checks `‖X(t,s)x‖ ≤ N‖x‖ + tol` on sampled `s ≤ t` in the grid span.
///
/// Requires the zero solution (`X(t,s)0 = 0`); if a sampled `X(t,s)0` is
/// farther than `tol` from zero the check refuses with a hypothesis error.
pub fn check_prop42<F: EvolutionFamily + ?Sized>(
    family: &F,
    sampler: &StateSampler,
    n: f64,
    tol: f64,
    grid: Grid,
    n_samples: usize,
    seed: u64,
) -> Result<BoundednessReport> {
    let mut rng = seeded_rng(seed);
    let (start, end) = (grid.start, grid.end());
    let draws: Vec<(f64, f64, State)> = (0..n_samples)
        .map(|_| {
            let a = rng.gen_range(start..=end);
            let b = rng.gen_range(start..=end);
            (a.max(b), a.min(b), sampler.sample(&mut rng))
        })
        .collect();
    let zero = state::zeros(family.dim());
    for (t, s, _) in &draws {
        let at_zero = state::norm(&family.evaluate(*t, *s, &zero)?);
        if at_zero > tol {
            return Err(Error::HypothesisViolation(format!("zero is not a solution: ‖X({t}, {s})0‖ = {at_zero:e}")));
        }
    }
    let mut report = BoundednessReport { n, n_samples, n_violations: 0, max_ratio: 0.0, holds: true };
    for (t, s, x) in &draws {
        let nx = state::norm(x);
        let nu = state::norm(&family.evaluate(*t, *s, x)?);
        if nu > n * nx + tol {
            report.n_violations += 1;
        }
        if nx > 0.0 {
            report.max_ratio = report.max_ratio.max(nu / nx);
        }
    }
    report.holds = report.n_violations == 0;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::ExponentialFamily;
    use crate::lp::indicator;

    fn r2() -> Exponent {
        Exponent::Finite(2.0)
    }

    #[test]
    fn shift_examples() {
        let grid = Grid::span(4.0, 0.01).unwrap();
        let fam = ExponentialFamily::scalar(1.0);
        let f = indicator(0.0, 1.0, &[1.0], grid).unwrap();
        let st = EvolutionSemigroupState::new(r2(), f.clone()).unwrap();

        let same = evolution_semigroup_t(&st, 0.0, &fam).unwrap();
        assert!(same.f.max_distance(&f).unwrap() < 1e-15);

        let moved = evolution_semigroup_t(&st, 1.0, &fam).unwrap();
        let expected = indicator(1.0, 2.0, &[(-1.0f64).exp()], grid).unwrap();
        assert!(moved.f.max_distance(&expected).unwrap() < 1e-12);

        let gone = evolution_semigroup_t(&st, 5.0, &fam).unwrap();
        assert!(gone.f.values.iter().all(|v| v[0] == 0.0));

        let s = evolution_semigroup_s(&st, 1.0, &fam).unwrap();
        assert!(s.f.max_distance(&moved.f).unwrap() < 1e-12);
        assert!(EvolutionSemigroupState::new(Exponent::Infinity, f).is_err());
    }

    #[test]
    fn n0_choice() {
        assert_eq!(choose_n0(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(choose_n0(4.0, 0.5).unwrap(), 5.0);
        assert!(choose_n0(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_solution_is_the_fixed_point_without_forcing() {
        let grid = Grid::span(5.0, 0.01).unwrap();
        let fam = ExponentialFamily::scalar(1.0);
        let rep = find_fixed_point(&fam, 1.0, grid, r2(), 1e-12, 50, None).unwrap();
        assert!(rep.phi.values.iter().all(|v| v[0] == 0.0));
        let start = SampledSignal::from_scalar_fn(grid, |t| (3.0 * t).sin());
        let rep = find_fixed_point(&fam, 1.0, grid, r2(), 1e-12, 50, Some(start)).unwrap();
        assert!(rep.phi.values.iter().all(|v| v[0].abs() < 1e-12));
    }

    #[test]
    fn prop42_examples() {
        let grid = Grid::span(10.0, 0.1).unwrap();
        let s = StateSampler::unit_cube(1);
        let rep = check_prop42(&ExponentialFamily::scalar(1.0), &s, 1.0, 1e-12, grid, 50, 0).unwrap();
        assert!(rep.holds);
        let rep = check_prop42(&ExponentialFamily::scalar(-0.5), &s, 1.0, 1e-12, grid, 50, 0).unwrap();
        assert!(!rep.holds);
    }
}
