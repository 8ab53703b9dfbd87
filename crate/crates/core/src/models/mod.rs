//! Concrete instances: the scalar `H`-flow, the spectral Neumann heat model
//! and the evolution semigroups on `Lʳ(ℝ₊, 𝕏)`.

pub mod example21;
pub mod heat;
pub mod semigroup;

pub use example21::{example21_family, Example21Family, HPreset, ScalarFieldH};
pub use heat::{
    heat_mild_family, heat_semigroup_apply, HeatMildFamily, HeatSemigroup, Nemytsky, PointwiseReaction, Reaction,
    ReactionPreset, SpectralHeatModel,
};
pub use semigroup::{
    check_attraction, check_prop42, choose_n0, evolution_semigroup_s, evolution_semigroup_t, find_fixed_point,
    fixed_point_integral_residual, EvolutionSemigroupState,
};
