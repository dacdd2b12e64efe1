//! Mixing-rate machinery and the bound-based quilt mechanism.

mod bound;
mod mixing;

pub use bound::{
    a_star, approx_plan, extent_threshold, fast_plan, influence_bound, mqm_approx, mqm_approx_fast,
    shape_bound,
};
pub use mixing::{
    binary_mixing, eigengap, is_primitive, is_reversible, mixing_summary, stationary_distribution,
    symmetric_eigenvalues, time_reversal, GapMode, MixingSummary, REVERSIBLE_TOL,
};
