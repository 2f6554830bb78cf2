//! Per-BS majorization-minimization with a trust-region safeguard.

pub mod optimizer;
pub mod subproblem;
pub mod surrogate;
pub mod trust_region;

pub use optimizer::{
    initialize_deployment, mm_optimize, write_iteration_csv, IterationRecord, MmConfig, MmOutcome, MmStatus,
    ITERATION_HEADER,
};
pub use subproblem::{minimize_on_ball, solve_subproblem, LinearizedRate, SubproblemResult, SubproblemStatus};
pub use surrogate::{build_surrogate, surrogate_value, BsSurrogate, TargetSurrogate};
pub use trust_region::{acceptance_ratio, TrustRegionState};
