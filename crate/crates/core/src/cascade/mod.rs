//! Bound propagation: Hölder combinators, the doubling cascade, the
//! uniform-goodness sweep, the tilt chain and the final constant.

pub mod chain;
pub mod doubling;
pub mod holder;
pub mod sweep;

pub use chain::{
    build_lambda_chain, candidate_checks, default_chain_margin, explicit_tail_constant,
    phi_chain_bound, phi_step, theorem_constant, LambdaChain, TheoremConstant,
    DEFAULT_SEARCH_CAP_LOG2,
};
pub use doubling::{
    build_cascade, cascade_threshold, doubling_cascade, half_root_series, uniform_threshold_index,
    CascadeTrace, NamedCheck,
};
pub use holder::{
    halve_combine, halving_bound, optimal_holder, split_combine_lower, split_combine_upper,
    split_lower_bound, split_upper_bound, HolderPair,
};
pub use sweep::{moderate_constant, scalar_leak_cert, sweep_axis, uniform_good_sweep};
