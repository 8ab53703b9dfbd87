//! Reaction–diffusion `u_t = u_xx + g(t, u)` on `(0, π)` with Neumann
//! boundary conditions, in the orthonormal cosine basis
//! `φ₀ = 1/√π`, `φ_k = √(2/π) cos(kx)`.
//!
//! The Laplacian is diagonal (`Δφ_k = −k² φ_k`), so the heat semigroup is
//! applied exactly. The reaction term acts pointwise in physical space: the
//! Nemytsky operator maps coefficients to values at the collocation points
//! `x_j = π(j + 1/2)/n`, applies `g`, and maps back. With as many points as
//! modes the transform is orthogonal, so Euclidean norms of coefficient
//! vectors are `L²(0, π)` norms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{check_time_order, EvolutionFamily, FamilyKind, Growth};
use crate::mild::{generate_family, GeneratedFamily, MildSolveConfig, Nonlinearity};
use crate::state::State;

pub const DEFAULT_MODES: usize = 16;

/// `g(t, y) = −λ y − β y/(1 + y²) + a e^{−r t}`.
///
/// Lipschitz in `y` with constant `|λ| + |β|`; vanishes at `y = 0` iff `a = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reaction {
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub forcing_amplitude: f64,
    #[serde(default)]
    pub forcing_rate: f64,
}

/// Named reaction terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum ReactionPreset {
    Zero,
    /// `g(y) = −λ y`.
    Linear {
        lambda: f64,
    },
    /// `g(y) = −λ y − β y/(1 + y²)`.
    Saturating {
        lambda: f64,
        beta: f64,
    },
    /// Any combination, including time-dependent forcing.
    Custom(Reaction),
}

impl ReactionPreset {
    pub fn reaction(&self) -> Reaction {
        match *self {
            ReactionPreset::Zero => Reaction::default(),
            ReactionPreset::Linear { lambda } => Reaction { lambda, ..Default::default() },
            ReactionPreset::Saturating { lambda, beta } => Reaction { lambda, beta, ..Default::default() },
            ReactionPreset::Custom(r) => r,
        }
    }
}

impl Reaction {
    pub fn eval(&self, t: f64, y: f64) -> f64 {
        let mut v = -self.lambda * y - self.beta * y / (1.0 + y * y);
        if self.forcing_amplitude != 0.0 {
            v += self.forcing_amplitude * (-self.forcing_rate * t).exp();
        }
        v
    }

    pub fn lipschitz(&self) -> f64 {
        self.lambda.abs() + self.beta.abs()
    }

    pub fn vanishes_at_zero(&self) -> bool {
        self.forcing_amplitude == 0.0
    }
}

/// Componentwise application of a [`Reaction`] on `ℝⁿ`; the reaction term
/// of the closed-form scalar and diagonal models.
#[derive(Debug, Clone, Copy)]
pub struct PointwiseReaction(pub Reaction);

impl Nonlinearity for PointwiseReaction {
    fn evaluate(&self, t: f64, x: &[f64]) -> State {
        x.iter().map(|y| self.0.eval(t, *y)).collect()
    }
    fn lipschitz(&self) -> f64 {
        self.0.lipschitz()
    }
    fn vanishes_at_zero(&self) -> bool {
        self.0.vanishes_at_zero()
    }
}

/// Cosine-mode discretization of the Neumann Laplacian on `(0, π)`.
#[derive(Debug, Clone)]
pub struct SpectralHeatModel {
    pub n_modes: usize,
    pub n_points: usize,
    /// `basis[j][k] = φ_k(x_j)`.
    basis: Vec<Vec<f64>>,
}

impl SpectralHeatModel {
    pub fn new(n_modes: usize) -> Result<Self> {
        Self::with_points(n_modes, n_modes)
    }

    pub fn with_points(n_modes: usize, n_points: usize) -> Result<Self> {
        if n_modes == 0 || n_points < n_modes {
            return Err(Error::Domain(format!(
                "need 1 <= n_modes <= n_points, got {n_modes} modes and {n_points} points"
            )));
        }
        let basis = (0..n_points)
            .map(|j| {
                let x = PI * (j as f64 + 0.5) / n_points as f64;
                (0..n_modes).map(|k| mode(k, x)).collect()
            })
            .collect();
        Ok(SpectralHeatModel { n_modes, n_points, basis })
    }

    /// `0, −1, −4, …, −(n−1)²`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.n_modes).map(|k| -((k * k) as f64)).collect()
    }

    pub fn collocation_points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| PI * (j as f64 + 0.5) / self.n_points as f64).collect()
    }

    /// Coefficients to values at the collocation points.
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|row| row.iter().zip(coeffs).map(|(p, c)| p * c).sum()).collect()
    }

    /// Values at the collocation points to coefficients (midpoint quadrature
    /// of `∫ u φ_k`, exact for the represented modes).
    pub fn forward(&self, values: &[f64]) -> State {
        let w = PI / self.n_points as f64;
        (0..self.n_modes).map(|k| w * self.basis.iter().zip(values).map(|(row, v)| row[k] * v).sum::<f64>()).collect()
    }

    /// Coefficients of `u(x)` projected onto the represented modes.
    pub fn project(&self, u: impl Fn(f64) -> f64) -> State {
        let values: Vec<f64> = self.collocation_points().into_iter().map(u).collect();
        self.forward(&values)
    }
}

fn mode(k: usize, x: f64) -> f64 {
    if k == 0 {
        1.0 / PI.sqrt()
    } else {
        (2.0 / PI).sqrt() * (k as f64 * x).cos()
    }
}

/// `T(t)c`: mode `k` scaled by `e^{−k² t}`.
pub fn heat_semigroup_apply(model: &SpectralHeatModel, t: f64, coeffs: &[f64]) -> Result<State> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("semigroup time must be >= 0, got {t}")));
    }
    if coeffs.len() != model.n_modes {
        return Err(Error::Domain(format!("expected {} coefficients, got {}", model.n_modes, coeffs.len())));
    }
    Ok(coeffs.iter().enumerate().map(|(k, c)| c * (-((k * k) as f64) * t).exp()).collect())
}

/// The heat semigroup as a linear evolution family `U(t,s) = T(t − s)`.
#[derive(Debug, Clone)]
pub struct HeatSemigroup {
    pub model: SpectralHeatModel,
}

impl EvolutionFamily for HeatSemigroup {
    fn dim(&self) -> usize {
        self.model.n_modes
    }

    fn growth(&self) -> Growth {
        Growth::new(1.0, 0.0)
    }

    fn kind(&self) -> FamilyKind {
        FamilyKind::Linear
    }

    fn evaluate(&self, t: f64, s: f64, x: &[f64]) -> Result<State> {
        check_time_order(t, s)?;
        heat_semigroup_apply(&self.model, (t - s).max(0.0), x)
    }
}

/// `G(t, u) = g(t, u(t, ·))` acting on cosine coefficients.
#[derive(Debug, Clone)]
pub struct Nemytsky {
    pub model: SpectralHeatModel,
    pub reaction: Reaction,
}

impl Nonlinearity for Nemytsky {
    fn evaluate(&self, t: f64, x: &[f64]) -> State {
        let values: Vec<f64> = self.model.inverse(x).into_iter().map(|y| self.reaction.eval(t, y)).collect();
        self.model.forward(&values)
    }

    fn lipschitz(&self) -> f64 {
        self.reaction.lipschitz()
    }

    fn vanishes_at_zero(&self) -> bool {
        self.reaction.vanishes_at_zero()
    }
}

pub type HeatMildFamily = GeneratedFamily<HeatSemigroup, Nemytsky>;

/// The family generated by `u' = Δu + G(t, u)` through the mild solver.
pub fn heat_mild_family(model: &SpectralHeatModel, reaction: Reaction, cfg: MildSolveConfig) -> Result<HeatMildFamily> {
    generate_family(HeatSemigroup { model: model.clone() }, Nemytsky { model: model.clone(), reaction }, cfg)
}
