//! Major-Minor mean field equilibrium: trader best response by backward
//! dynamic programming, the induced flows of measures, the damped Picard
//! fixed point, and the LP's search over piecewise-constant controls.
//!
//! The solver works in deterministic-flow mode: common noise is off, so the
//! flows `(q_t, μ_t)` are deterministic and the conditional laws reduce to
//! plain marginals.

mod dp;
mod env;
mod flows;
mod major_minor;
mod picard;

pub use dp::{bellman_residual, best_response, evaluate_policy, policy_value, solve_dp, Kernel, PolicyGrid};
pub use env::EnvPath;
pub use flows::{induced_flows, FlowOfMeasures};
pub use major_minor::{
    lp_objective, pattern_neighbors, pattern_search, solve_major_minor, MajorMinorOptions, MajorMinorSolution, SearchOutcome,
    SearchResult, TraceEntry,
};
pub use picard::{fixed_point_residual, mfg_map, solve_mfg, MfgSetup, MfgSolution, PicardOptions};
