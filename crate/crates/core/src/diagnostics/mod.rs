//! Monte-Carlo certification of structural conditions on a process.
//!
//! Conditional expectations given `F_k` are estimated by resampling the next
//! transition from a [`Snapshot`](crate::Snapshot). Every check reports
//! estimates with their standard errors and compares them with a one-sided
//! `z`-SE tolerance (see [`crate::stats`]). Ratios whose denominator cannot be
//! distinguished from zero are vacuous and never count as violations.

use alloc::format;
use alloc::string::String;

use crate::engine::SeedSpec;
use crate::linalg::StochasticMatrix;
use crate::stats::FLOAT_FLOOR;

mod abs_prob;
mod balance;
mod convergence;
mod flow_graph;
mod martingale;
mod reciprocity;

pub use abs_prob::{
    absolute_probability_study, estimate_abs_prob, estimate_abs_prob_horizons, AbsProbEstimate, AbsProbStudy,
    IdentityRecord, IdentityReport, StudyOptions, MIN_INNER_SAMPLES,
};
pub use balance::{
    check_balancedness, check_pair_reciprocity, check_subsymmetry, BalancednessReport, EntrywiseReport, PairRecord,
    SubsetRecord, SUBSYMMETRY_NOTE,
};
pub use convergence::{
    ordering_convergence, symmetric_function_series, OrderingConvergence, SeriesReport, SymmetricFn,
};
pub use flow_graph::{
    compare_partitions, components, consensus_clusters, converged_clusters, flow_graph, ClusterPartition, FlowGraph,
    FlowSource, PartitionComparison,
};
pub use martingale::{lyapunov_test, martingale_test_v_ell, ConvexFn, Direction, MartingaleRecord, MartingaleReport};
pub use reciprocity::{
    check_weak_reciprocity, predicted_reciprocity_coefficient, prefix_suffix_rules, AdaptedRule, ReciprocityRecord,
    ReciprocityReport, RulePair,
};

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_PROBES: usize = 20;
pub const DEFAULT_TAU: f64 = 1.0;
pub const DEFAULT_TOL_CLUSTER: f64 = 1e-6;
pub const DEFAULT_ORDERING_WINDOW: usize = 50;
pub const DEFAULT_ORDERING_TOL: f64 = 1e-9;

/// Default absolute-probability horizon `50·m`.
pub fn default_horizon(m: usize) -> u64 {
    50 * m as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Consistent,
    Violation,
}

impl Verdict {
    pub fn from_ok(ok: bool) -> Self {
        if ok {
            Verdict::Consistent
        } else {
            Verdict::Violation
        }
    }

    pub fn is_violation(self) -> bool {
        self == Verdict::Violation
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Violation => "violation",
        }
    }
}

/// `min_i W_ii >= γ - 1e-12`.
pub fn diagonal_bound_holds(w: &StochasticMatrix, gamma: f64) -> bool {
    w.min_diagonal() >= gamma - FLOAT_FLOOR
}

/// Private seed scope for probe `index`.
pub(crate) fn probe_seeds(seeds: &SeedSpec, index: usize) -> SeedSpec {
    seeds.scoped(&format!("probe/{index}"))
}

pub(crate) fn scope(seeds: &SeedSpec, name: &str) -> SeedSpec {
    seeds.scoped(name)
}

pub(crate) fn probe_name(label: &str, step: u64) -> String {
    format!("{label}@{step}")
}
