//! Finite and gaussian coupling constructions, Prokhorov distances and the
//! smoothing variable.

mod discrete;
mod prokhorov;
mod rosenthal;
mod smoothing;
mod variance;

pub use discrete::{
    maximal_coupling, maximal_coupling_of, total_variation, write_plan_csv, CouplingPlan, DiscreteDistribution, Histogram, Mass,
};
pub use prokhorov::{
    prokhorov_exact_small, prokhorov_upper_bound, smoothed_discrete_bound, smoothing_constant, unit_ball_volume, CharGrid,
    BRUTE_FORCE_LIMIT,
};
pub use rosenthal::{rosenthal_terms, rosenthal_terms_with, zaitsev_block_grouping, Grouping, RosenthalTerms};
pub use smoothing::{build_smoothing_v, bump, SmoothingSpec, DEFAULT_RESOLUTION, LEAKAGE_TOL};
pub use variance::{default_delta, variance_matching_coupling, VarianceMatching, DEFAULT_DELTA_SLACK};
