//! Exponential-stability certificates and the estimates behind them.
//!
//! The pipeline runs from an admissibility constant `K` of the Green's
//! operator to explicit constants `(N, ν)` with
//! `‖X(t,s)‖_lip ≤ N e^{-ν(t-s)}`:
//!
//! 1. a uniform bound `‖X(t,s)‖_lip ≤ C` with `C = (K+1)M²e^{2ω} + Me^{ω}`;
//! 2. a decay step `‖X(t₀+δ,t₀)‖_lip ≤ 2KC²/(a_p(δ)b_q(δ))`, made `≤ 1/2`
//!    by choosing `d` with `a_p(d)b_q(d) = 4KC²`;
//! 3. the extraction `ν = -ln c / d`, `N = M/c` for a quantity that shrinks
//!    by a factor `c` over every window of length `d`.
//!
//! The other direction — stability implies admissibility — rests on bounds
//! for the exponential convolution `H(t) = ∫₀ᵗ e^{-ν(t-s)} h(s) ds`,
//! implemented in [`convolution_bound`].

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{estimate_lip_norm, trajectory_tail_max, EvolutionFamily, ExponentialFit, Growth, StateSampler};
use crate::lp::{lp_norm, Exponent, Grid, SampledSignal};

/// Relative slack for the premise `h(r) ≤ m h(t)`.
const PREMISE_TOL: f64 = 1e-12;

/// Outcome of [`lemma31_bound`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UniformBoundReport {
    /// Whether `h(r) ≤ m h(t)` for all grid pairs with `0 ≤ r − t ≤ 1`.
    pub premise_holds: bool,
    /// `m h(0) + m ‖h‖_q`.
    pub bound: f64,
    pub sup_h: f64,
    /// `sup_h ≤ bound`; only meaningful when the premise holds.
    pub bound_holds: bool,
}

/// Uniform bound for a nonnegative scalar function that cannot grow by more
/// than a factor `m` over unit windows: `‖h‖_∞ ≤ m h(0) + m ‖h‖_q`.
///
/// The window `r ∈ [t, t+1]` is checked on grid pairs with `r − t ≤ 1 + dt/2`.
pub fn lemma31_bound(h: &SampledSignal, m: f64, q: Exponent) -> Result<UniformBoundReport> {
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("growth factor m must be >= 1, got {m}")));
    }
    let values = h.scalar_values();
    if let Some(bad) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("h must be nonnegative, found {bad}")));
    }
    let window = ((1.0 + 0.5 * h.dt) / h.dt).floor() as usize;
    let premise_holds = (0..values.len()).all(|i| {
        let cap = m * values[i];
        values[i..values.len().min(i + window + 1)].iter().all(|r| *r <= cap + PREMISE_TOL * cap.max(1.0))
    });
    let bound = m * values[0] + m * lp_norm(h, q);
    let sup_h = values.iter().copied().fold(0.0, f64::max);
    Ok(UniformBoundReport { premise_holds, bound, sup_h, bound_holds: sup_h <= bound * (1.0 + 1e-12) })
}

/// `(N, ν)` with `ν = −ln c / d` and `N = M e^{νd} = M / c`.
pub fn extract_exponential(m: f64, d: f64, c: f64) -> Result<(f64, f64)> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!("contraction factor c must lie in (0, 1), got {c}")));
    }
    if !(d > 0.0) || !(m > 0.0) {
        return Err(Error::Domain(format!("need M > 0 and d > 0, got M = {m}, d = {d}")));
    }
    let nu = -c.ln() / d;
    Ok((m / c, nu))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Read off sampled Lipschitz ratios.
    Empirical,
    /// Produced by the admissibility-to-stability chain.
    Theoretical,
}

/// Intermediate constants of a certificate; absent entries did not apply.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CertificateAudit {
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub omega: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    /// Uniform bound on `‖X(t,s)‖_lip`.
    #[serde(rename = "C")]
    pub uniform_bound: Option<f64>,
    /// Window length over which the seminorm halves.
    pub d: Option<f64>,
    /// Contraction factor per window.
    #[serde(rename = "c")]
    pub contraction: Option<f64>,
    pub p: Option<Exponent>,
    pub q: Option<Exponent>,
    pub gauge_exponent: Option<f64>,
}

/// `‖X(t,s)‖_lip ≤ N e^{−ν(t−s)}` together with how it was obtained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityCertificate {
    #[serde(rename = "N")]
    pub n: f64,
    pub nu: f64,
    pub provenance: Provenance,
    pub audit: CertificateAudit,
}

impl StabilityCertificate {
    pub fn empirical(n: f64, nu: f64) -> Self {
        StabilityCertificate { n, nu, provenance: Provenance::Empirical, audit: CertificateAudit::default() }
    }

    pub fn from_fit(fit: &ExponentialFit) -> Self {
        Self::empirical(fit.n, fit.nu)
    }

    pub fn bound(&self, lag: f64) -> f64 {
        self.n * (-self.nu * lag).exp()
    }

    /// Step-by-step derivation, one line per constant.
    pub fn trace(&self) -> Vec<String> {
        let a = &self.audit;
        let mut lines = Vec::new();
        if let (Some(p), Some(q)) = (a.p, a.q) {
            lines.push(format!("exponents: p = {p}, q = {q}"));
        }
        if let (Some(m), Some(omega)) = (a.m, a.omega) {
            lines.push(format!("growth: ‖X(t,s)‖_lip ≤ M e^(ω(t−s)) with M = {m}, ω = {omega}"));
        }
        if let Some(k) = a.k {
            lines.push(format!("admissibility constant: K = {k}"));
        }
        if let Some(c) = a.uniform_bound {
            lines.push(format!("uniform bound: C = (K+1)M²e^(2ω) + Me^ω = {c}"));
        }
        if let Some(e) = a.gauge_exponent {
            lines.push(format!("gauge: a_p(d)·b_q(d) = d^{e}"));
        }
        if let Some(d) = a.d {
            lines.push(format!("window: a_p(d)·b_q(d) = 4KC² gives d = {d}"));
        }
        if let Some(c) = a.contraction {
            lines.push(format!("contraction per window: ‖X(t₀+d,t₀)‖_lip ≤ {c}"));
        }
        lines.push(format!(
            "certificate ({}): ‖X(t,s)‖_lip ≤ N e^(−ν(t−s)) with N = {}, ν = {}",
            self.provenance, self.n, self.nu
        ));
        lines
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Empirical => "empirical",
            Provenance::Theoretical => "theoretical",
        })
    }
}

/// Result of checking samples against a certificate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CertificateCheck {
    pub passed: bool,
    pub n_samples: usize,
    pub n_violations: usize,
    /// Largest `g − N e^{−ν(t−t₀)}` seen (negative when every sample is inside).
    pub worst_excess: f64,
    /// `t − t₀` at the worst sample.
    pub worst_lag: Option<f64>,
}

/// Checks `g(t, t₀) ≤ N e^{−ν(t−t₀)} + tol` for samples `(t, t₀, g)`.
pub fn verify_certificate(samples: &[(f64, f64, f64)], cert: &StabilityCertificate, tol: f64) -> CertificateCheck {
    let mut check = CertificateCheck {
        passed: true,
        n_samples: samples.len(),
        n_violations: 0,
        worst_excess: f64::NEG_INFINITY,
        worst_lag: None,
    };
    for &(t, t0, g) in samples {
        let excess = g - cert.bound(t - t0);
        if excess > tol {
            check.n_violations += 1;
        }
        if excess > check.worst_excess {
            check.worst_excess = excess;
            check.worst_lag = Some(t - t0);
        }
    }
    check.passed = check.n_violations == 0;
    check
}

/// `e(p,q)` with `a_p(d) b_q(d) = d^{e(p,q)}`:
/// `(1 − 1/p) + 1/q`, reading `1/∞ = 0` and `a_∞(d) = d`.
pub fn gauge_exponent(p: Exponent, q: Exponent) -> f64 {
    let from_p = match p {
        Exponent::Infinity => 1.0,
        Exponent::Finite(p) => 1.0 - 1.0 / p,
    };
    from_p + q.reciprocal()
}

/// `C = (K+1)M²e^{2ω} + Me^{ω}`.
pub fn uniform_bound_constant(k: f64, m: f64, omega: f64) -> f64 {
    (k + 1.0) * m * m * (2.0 * omega).exp() + m * omega.exp()
}

/// Turns an `(Lᵖ, Lᵠ)` admissibility constant `K` of the Green's operator
/// and the growth constants `(M, ω)` into `(N, ν) = (2C, ln 2 / d)`.
pub fn certify_from_admissibility(
    k: f64,
    m: f64,
    omega: f64,
    p: Exponent,
    q: Exponent,
) -> Result<StabilityCertificate> {
    if !(k > 0.0 && m > 0.0 && omega > 0.0) {
        return Err(Error::Domain(format!("need K, M, ω > 0, got K = {k}, M = {m}, ω = {omega}")));
    }
    let e = gauge_exponent(p, q);
    if e <= 0.0 {
        return Err(Error::NonCertifiable {
            p: p.to_string(),
            q: q.to_string(),
            reason: "a_p(d)·b_q(d) is constant, so no window length forces a contraction; (p, q) = (1, ∞) is excluded"
                .into(),
        });
    }
    let c_uniform = uniform_bound_constant(k, m, omega);
    let d = (4.0 * k * c_uniform * c_uniform).powf(1.0 / e);
    let contraction = 0.5;
    let (n, nu) = extract_exponential(c_uniform, d, contraction)?;
    Ok(StabilityCertificate {
        n,
        nu,
        provenance: Provenance::Theoretical,
        audit: CertificateAudit {
            m: Some(m),
            omega: Some(omega),
            k: Some(k),
            uniform_bound: Some(c_uniform),
            d: Some(d),
            contraction: Some(contraction),
            p: Some(p),
            q: Some(q),
            gauge_exponent: Some(e),
        },
    })
}

/// Convenience wrapper taking declared growth.
pub fn certify_with_growth(k: f64, growth: Growth, p: Exponent, q: Exponent) -> Result<StabilityCertificate> {
    certify_from_admissibility(k, growth.m, growth.omega, p, q)
}

/// Samples `(t, s, ‖X(t,s)‖_lip estimate)` on lags `0, Δ, …, max_lag`
/// and `n_bases` base times `s ∈ [0, base_span]`.
#[allow(clippy::too_many_arguments)]
pub fn sample_lip_profile<F: EvolutionFamily + ?Sized>(
    family: &F,
    max_lag: f64,
    n_lags: usize,
    base_span: f64,
    n_bases: usize,
    sampler: &StateSampler,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, f64)>> {
    let lags: Vec<f64> = if n_lags <= 1 {
        vec![max_lag]
    } else {
        (0..n_lags).map(|k| max_lag * k as f64 / (n_lags - 1) as f64).collect()
    };
    let bases: Vec<f64> = if n_bases <= 1 {
        vec![0.0]
    } else {
        (0..n_bases).map(|b| base_span * b as f64 / (n_bases - 1) as f64).collect()
    };
    let jobs: Vec<(usize, f64, f64)> = bases
        .iter()
        .flat_map(|&s| lags.iter().map(move |&lag| (s, lag)))
        .enumerate()
        .map(|(i, (s, lag))| (i, s, lag))
        .collect();
    jobs.par_iter()
        .map(|&(i, s, lag)| {
            let est = estimate_lip_norm(family, s + lag, s, sampler, n_pairs, seed.wrapping_add(i as u64))?;
            Ok((s + lag, s, est.value))
        })
        .collect()
}

/// `H(t) = ∫₀ᵗ e^{−ν(t−s)} h(s) ds` by the trapezoid rule, computed with
/// the exact one-step recursion `H_{i+1} = e^{−νΔ}H_i + Δ/2 (e^{−νΔ}h_i + h_{i+1})`.
pub fn exp_convolve(h: &SampledSignal, nu: f64) -> Result<SampledSignal> {
    if !(nu > 0.0) {
        return Err(Error::Domain(format!("decay rate must be positive, got {nu}")));
    }
    let values = h.scalar_values();
    if let Some(bad) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("h must be nonnegative, found {bad}")));
    }
    let decay = (-nu * h.dt).exp();
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(vec![0.0]);
    for w in values.windows(2) {
        acc = decay * acc + 0.5 * h.dt * (decay * w[0] + w[1]);
        out.push(vec![acc]);
    }
    Ok(SampledSignal { t0: h.t0, dt: h.dt, values: out })
}

/// Parameters of the convolution estimate `‖H‖_q ≤ c(p,q,ν) ‖h‖_p`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConvolutionCase {
    pub p: Exponent,
    pub q: Exponent,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ConvolutionCase {
    /// Default split `α = β = 1/2`.
    pub fn new(p: Exponent, q: Exponent, nu: f64) -> Result<Self> {
        Self::with_alpha(p, q, nu, 0.5)
    }

    pub fn with_alpha(p: Exponent, q: Exponent, nu: f64, alpha: f64) -> Result<Self> {
        if !p.le(q) {
            return Err(Error::Domain(format!("convolution estimate needs p <= q, got p = {p}, q = {q}")));
        }
        if !(nu > 0.0) {
            return Err(Error::Domain(format!("decay rate must be positive, got {nu}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(ConvolutionCase { p, q, nu, alpha, beta: 1.0 - alpha })
    }

    /// 1 for `p = ∞`, 2 for `p = 1`, 3 for `1 < p < ∞`.
    pub fn case_number(&self) -> u8 {
        match self.p {
            Exponent::Infinity => 1,
            Exponent::Finite(1.0) => 2,
            Exponent::Finite(_) => 3,
        }
    }

    /// The constant `c` with `‖H‖_q ≤ c ‖h‖_p`.
    pub fn bound_constant(&self) -> f64 {
        let nu = self.nu;
        match self.p {
            Exponent::Infinity => 1.0 / nu,
            Exponent::Finite(1.0) => (1.0 / nu).max(1.0),
            Exponent::Finite(p) => {
                let pc = p / (p - 1.0);
                let c = (nu * self.alpha * pc).powf(1.0 - p);
                let sup_part = (nu * pc).powf(-1.0 / pc);
                let lp_part = c.powf(1.0 / p) * (nu * self.beta * p).powf(-1.0 / p);
                sup_part.max(lp_part)
            }
        }
    }

    /// Slack for the trapezoid discretization of the kernel, relative to the
    /// bound: the discrete kernel mass exceeds `1/ν` by `O((ν dt)²)`.
    pub fn quadrature_allowance(&self, bound: f64, dt: f64) -> f64 {
        let s = match self.p {
            Exponent::Finite(p) if p > 1.0 => p.max(p / (p - 1.0)),
            _ => 1.0,
        };
        bound * (self.nu * dt * s).powi(2) / 4.0 + 1e-9
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvolutionReport {
    pub case: u8,
    pub h_norm_p: f64,
    /// `‖H‖_q` computed directly on the grid.
    pub h_conv_norm_q: f64,
    /// `max{‖H‖_p, ‖H‖_∞}` when `p < q < ∞`, else `‖H‖_q`; this is what the
    /// case constants control.
    pub h_conv_norm_checked: f64,
    pub bound_constant: f64,
    pub bound: f64,
    pub allowance: f64,
    pub holds: bool,
}

pub fn convolution_bound(case: &ConvolutionCase, h: &SampledSignal) -> Result<ConvolutionReport> {
    let big_h = exp_convolve(h, case.nu)?;
    let h_norm_p = lp_norm(h, case.p);
    let h_conv_norm_q = lp_norm(&big_h, case.q);
    let between = !case.q.is_infinite() && case.p != case.q;
    let h_conv_norm_checked =
        if between { lp_norm(&big_h, case.p).max(lp_norm(&big_h, Exponent::Infinity)) } else { h_conv_norm_q };
    let bound_constant = case.bound_constant();
    let bound = bound_constant * h_norm_p;
    let allowance = case.quadrature_allowance(bound, h.dt);
    Ok(ConvolutionReport {
        case: case.case_number(),
        h_norm_p,
        h_conv_norm_q,
        h_conv_norm_checked,
        bound_constant,
        bound,
        allowance,
        holds: h_conv_norm_checked <= bound + allowance && h_conv_norm_q <= bound + allowance,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AsymptoticReport {
    pub tail_max: f64,
    pub tail_fraction: f64,
    pub tol: f64,
    pub holds: bool,
}

/// Trajectories from sampled `(t₀, x₀)` must stay below `tol` over the final
/// `tail_fraction` of the grid; this stands in for `lim u(t) = 0`.
pub fn check_asymptotic<F: EvolutionFamily + ?Sized>(
    family: &F,
    grid: Grid,
    sampler: &StateSampler,
    tail_fraction: f64,
    tol: f64,
    n_states: usize,
    seed: u64,
) -> Result<AsymptoticReport> {
    let tail_max = trajectory_tail_max(family, grid, sampler, n_states, seed, tail_fraction)?;
    Ok(AsymptoticReport { tail_max, tail_fraction, tol, holds: tail_max <= tol })
}
