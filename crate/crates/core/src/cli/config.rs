//! Run configuration: one TOML (or JSON) document describing the model, the
//! time grid and the parameters of each command.
//!
//! ```toml
//! command = "admissibility"
//! seed = 7
//!
//! [grid]
//! T = 20.0
//! dt = 0.05
//!
//! [model]
//! kind = "closed_form_linear"
//! rate = 1.0
//!
//! [admissibility]
//! p = 2
//! q = "inf"
//! n_test_pairs = 32
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::{ClassifyConfig, EvolutionFamily, ExponentialFamily};
use crate::lp::{Exponent, Grid};
use crate::mild::{generate_family, GeneratedFamily, MildSolveConfig, Nonlinearity};
use crate::models::example21::{DEFAULT_DU, DEFAULT_INVERSION_TOL, DEFAULT_TABLE_HALF_WIDTH};
use crate::models::heat::DEFAULT_MODES;
use crate::models::{
    example21_family, heat_mild_family, Example21Family, HPreset, HeatMildFamily, HeatSemigroup, PointwiseReaction,
    ReactionPreset, ScalarFieldH, SpectralHeatModel,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub grid: GridConfig,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green: Option<GreenParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admissibility: Option<AdmissibilityParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifyParams>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
}

impl GridConfig {
    pub fn grid(&self) -> Result<Grid> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidConfig(format!("grid.T must be > 0, got {}", self.horizon)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("grid.dt must be > 0, got {}", self.dt)));
        }
        if self.dt > self.horizon {
            return Err(Error::InvalidConfig(format!("grid.dt = {} exceeds grid.T = {}", self.dt, self.horizon)));
        }
        Grid::span(self.horizon, self.dt).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// `x' = −rate·x (+ g(t, x) componentwise)` on `ℝ^dim`.
    ClosedFormLinear {
        rate: f64,
        #[serde(default = "one")]
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reaction: Option<ReactionPreset>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        solver: Option<MildSolveConfig>,
    },
    /// `u' = h(u)` on `ℝ`.
    ScalarH {
        h: HPreset,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        du: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        half_width: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inversion_tol: Option<f64>,
    },
    /// `u_t = u_xx + g(t, u)` on `(0, π)`, Neumann, in cosine modes.
    SpectralHeat {
        #[serde(default = "default_modes")]
        n_modes: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reaction: Option<ReactionPreset>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        solver: Option<MildSolveConfig>,
    },
}

fn one() -> usize {
    1
}

fn default_modes() -> usize {
    DEFAULT_MODES
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    /// Initial states; shorter vectors are padded with zeros.
    #[serde(default)]
    pub initial: Vec<Vec<f64>>,
    #[serde(default)]
    pub t0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Zero,
    Indicator { a: f64, b: f64, amplitude: Vec<f64> },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenParams {
    pub signal: SignalSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibilityParams {
    pub p: Exponent,
    pub q: Exponent,
    #[serde(default = "default_pairs")]
    pub n_test_pairs: usize,
}

fn default_pairs() -> usize {
    32
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Exponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Exponent>,
    /// Inline admissibility constant; otherwise read from `report`.
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    /// Overrides of the model's declared growth.
    #[serde(default, rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_lags: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymptotic_tol: Option<f64>,
}

impl ClassifyParams {
    pub fn to_config(&self, seed: u64) -> ClassifyConfig {
        let d = ClassifyConfig::default();
        ClassifyConfig {
            n_lags: self.n_lags.unwrap_or(d.n_lags),
            n_pairs: self.n_pairs.unwrap_or(d.n_pairs),
            tol: self.tol.unwrap_or(d.tol),
            asymptotic_tol: self.asymptotic_tol.unwrap_or(d.asymptotic_tol),
            seed,
            ..d
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let cfg: RunConfig = if json {
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, json)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.grid()?;
        match &self.model {
            ModelConfig::ClosedFormLinear { dim, solver, .. } => {
                if *dim == 0 {
                    return Err(Error::InvalidConfig("model.dim must be >= 1".into()));
                }
                if let Some(s) = solver {
                    s.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
                }
            }
            ModelConfig::SpectralHeat { n_modes, solver, .. } => {
                if *n_modes == 0 {
                    return Err(Error::InvalidConfig("model.n_modes must be >= 1".into()));
                }
                if let Some(s) = solver {
                    s.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
                }
            }
            ModelConfig::ScalarH { .. } => {}
        }
        if let Some(a) = &self.admissibility {
            if a.n_test_pairs == 0 {
                return Err(Error::InvalidConfig("admissibility.n_test_pairs must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical (sorted-key) JSON encoding.
    pub fn hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(&serde_json::to_value(self)?)?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }
}

/// A model built from its configuration.
pub enum BuiltModel {
    Exponential(ExponentialFamily),
    ExponentialWithReaction(GeneratedFamily<ExponentialFamily, PointwiseReaction>),
    Heat(HeatSemigroup),
    HeatWithReaction(HeatMildFamily),
    ScalarH(Example21Family),
}

impl BuiltModel {
    pub fn build(cfg: &ModelConfig) -> Result<Self> {
        Ok(match cfg {
            ModelConfig::ClosedFormLinear { rate, dim, reaction, solver } => {
                let linear = ExponentialFamily::new(*rate, *dim);
                match reaction {
                    None | Some(ReactionPreset::Zero) => BuiltModel::Exponential(linear),
                    Some(r) => BuiltModel::ExponentialWithReaction(generate_family(
                        linear,
                        PointwiseReaction(r.reaction()),
                        solver.unwrap_or_default(),
                    )?),
                }
            }
            ModelConfig::SpectralHeat { n_modes, reaction, solver } => {
                let model = SpectralHeatModel::new(*n_modes)?;
                match reaction {
                    None | Some(ReactionPreset::Zero) => BuiltModel::Heat(HeatSemigroup { model }),
                    Some(r) => BuiltModel::HeatWithReaction(heat_mild_family(
                        &model,
                        r.reaction(),
                        solver.unwrap_or_default(),
                    )?),
                }
            }
            ModelConfig::ScalarH { h, du, half_width, inversion_tol } => {
                let field = ScalarFieldH::with_table(
                    *h,
                    du.unwrap_or(DEFAULT_DU),
                    half_width.unwrap_or(DEFAULT_TABLE_HALF_WIDTH),
                    inversion_tol.unwrap_or(DEFAULT_INVERSION_TOL),
                )
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
                BuiltModel::ScalarH(example21_family(field))
            }
        })
    }

    pub fn family(&self) -> &dyn EvolutionFamily {
        match self {
            BuiltModel::Exponential(f) => f,
            BuiltModel::ExponentialWithReaction(f) => f,
            BuiltModel::Heat(f) => f,
            BuiltModel::HeatWithReaction(f) => f,
            BuiltModel::ScalarH(f) => f,
        }
    }

    /// Linear part, nonlinearity and solver settings of generated families.
    pub fn mild_parts(&self) -> Option<(&dyn EvolutionFamily, &dyn Nonlinearity, &MildSolveConfig)> {
        match self {
            BuiltModel::ExponentialWithReaction(f) => Some((&f.linear, &f.nonlinearity, &f.cfg)),
            BuiltModel::HeatWithReaction(f) => Some((&f.linear, &f.nonlinearity, &f.cfg)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
        command = "simulate"
        [grid]
        T = 2.0
        dt = 0.01
        [model]
        kind = "closed_form_linear"
        rate = 1.0
    "#;

    #[test]
    fn parses_minimal_toml() {
        let cfg = RunConfig::parse(BASIC, false).unwrap();
        assert_eq!(cfg.command.as_deref(), Some("simulate"));
        assert!(matches!(cfg.model, ModelConfig::ClosedFormLinear { dim: 1, .. }));
    }

    #[test]
    fn json_and_toml_hash_alike() {
        let a = RunConfig::parse(BASIC, false).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = RunConfig::parse(&json, true).unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn rejects_bad_grid_and_unknown_fields() {
        let bad = BASIC.replace("dt = 0.01", "dt = 0.0");
        assert!(matches!(RunConfig::parse(&bad, false), Err(Error::InvalidConfig(_))));
        let unknown = BASIC.replace("rate = 1.0", "rate = 1.0\nspeed = 2");
        let err = RunConfig::parse(&unknown, false).unwrap_err();
        assert!(err.to_string().contains("speed"), "{err}");
    }

    #[test]
    fn parses_reaction_presets() {
        let text = r#"
            [grid]
            T = 1.0
            dt = 0.1
            [model]
            kind = "spectral_heat"
            n_modes = 4
            reaction = { preset = "saturating", lambda = 1.0, beta = 0.5 }
        "#;
        let cfg = RunConfig::parse(text, false).unwrap();
        let built = BuiltModel::build(&cfg.model).unwrap();
        assert_eq!(built.family().dim(), 4);
        assert_eq!(built.mild_parts().unwrap().1.lipschitz(), 1.5);

        let custom = text.replace(
            r#"{ preset = "saturating", lambda = 1.0, beta = 0.5 }"#,
            r#"{ preset = "custom", lambda = 1.0, forcing_amplitude = 1.0, forcing_rate = 1.0 }"#,
        );
        let cfg = RunConfig::parse(&custom, false).unwrap();
        let built = BuiltModel::build(&cfg.model).unwrap();
        assert!(!built.mild_parts().unwrap().1.vanishes_at_zero());
    }
}
