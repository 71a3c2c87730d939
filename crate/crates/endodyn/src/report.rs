//! Serialized report records. Every estimate carries its standard error and
//! sample count; vacuous ratios are written as `"vacuous": true` with a null
//! value.

use std::collections::BTreeMap;

use endodyn_core::diagnostics::{
    BalancednessReport, ClusterPartition, EntrywiseReport, IdentityReport, MartingaleReport, OrderingConvergence,
    ReciprocityReport, SeriesReport,
};
use endodyn_core::linalg::SubsetMask;
use endodyn_core::stats::{MeanEstimate, Ratio};
use serde::Serialize;

use crate::config::RunConfig;

pub const SUMMARY_VERSION: &str = "endodyn-summary/1";
pub const DIAGNOSTICS_VERSION: &str = "endodyn-diagnostics/1";

/// Subset records are listed in full up to this many subsets per probe;
/// beyond it only the binding subset is kept.
const MAX_LISTED_SUBSETS: usize = 254;

#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl From<MeanEstimate> for Estimate {
    fn from(e: MeanEstimate) -> Self {
        Estimate { mean: e.mean, se: e.se, n: e.n }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioOut {
    pub value: Option<f64>,
    pub se: Option<f64>,
    pub vacuous: bool,
    pub n: usize,
}

impl RatioOut {
    pub fn new(r: Ratio, n: usize) -> Self {
        match r {
            Ratio::Finite { value, se } => RatioOut { value: Some(value), se: Some(se), vacuous: false, n },
            Ratio::Vacuous => RatioOut { value: None, se: None, vacuous: true, n },
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn blocks(p: &ClusterPartition) -> Vec<Vec<usize>> {
    p.blocks().to_vec()
}

fn members(s: &SubsetMask) -> Vec<usize> {
    s.iter().collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderingOut {
    pub window: usize,
    pub tol: f64,
    pub converged: bool,
    pub ordering_converged_at: Option<u64>,
    pub state_converged_at: Option<u64>,
    pub trailing_ordering_drift: f64,
    pub trailing_state_drift: f64,
    pub final_ordering: Vec<f64>,
}

impl From<&OrderingConvergence> for OrderingOut {
    fn from(c: &OrderingConvergence) -> Self {
        OrderingOut {
            window: c.window,
            tol: c.tol,
            converged: c.converged(),
            ordering_converged_at: c.ordering_converged_at,
            state_converged_at: c.state_converged_at,
            trailing_ordering_drift: c.trailing_ordering_drift,
            trailing_state_drift: c.trailing_state_drift,
            final_ordering: c.final_ordering.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicaSummary {
    pub replica: usize,
    pub initial_state: Vec<f64>,
    pub final_state: Vec<f64>,
    pub final_spread: f64,
    pub ordering: OrderingOut,
    /// `"converged"` or `"not_converged"`; clusters are only reported for
    /// settled runs.
    pub cluster_status: String,
    pub clusters: Option<Vec<Vec<usize>>>,
    /// Clusters of the final state regardless of convergence.
    pub n_clusters: usize,
    pub flow_components: Vec<Vec<usize>>,
    pub flow_edges: usize,
    pub comparison: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub version: &'static str,
    pub seed: u64,
    pub config: RunConfig,
    pub tau: f64,
    pub tol_cluster: f64,
    pub flow_window_start: u64,
    pub replicas: Vec<ReplicaSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TauCheck {
    pub tau: f64,
    pub comparison: Option<String>,
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowGraphOut {
    pub tau: f64,
    pub horizon: u64,
    pub window_start: u64,
    pub edges: Vec<(usize, usize)>,
    pub components: Vec<Vec<usize>>,
    pub cluster_status: String,
    pub clusters: Option<Vec<Vec<usize>>>,
    pub comparison: Option<String>,
    pub robustness: Vec<TauCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesOut {
    pub function: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
    pub max_deviation: f64,
    pub trailing_drift: f64,
    pub converged_at: Option<u64>,
    pub nonincreasing: bool,
}

impl From<&SeriesReport> for SeriesOut {
    fn from(s: &SeriesReport) -> Self {
        let p = match s.function {
            endodyn_core::diagnostics::SymmetricFn::PNorm(p) => Some(p),
            _ => None,
        };
        SeriesOut {
            function: s.function.name(),
            p,
            initial: s.values[0],
            last: *s.values.last().expect("series has the initial value"),
            max_deviation: s.max_deviation,
            trailing_drift: s.trailing_drift,
            converged_at: s.converged_at,
            nonincreasing: s.nonincreasing,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsetOut {
    pub subset: Vec<usize>,
    pub inflow: Estimate,
    pub outflow: Estimate,
    pub ratio: RatioOut,
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceProbe {
    pub step: u64,
    pub samples: usize,
    pub alpha_hat: RatioOut,
    pub alpha_lower: Option<f64>,
    pub violations: usize,
    pub verdict: &'static str,
    pub subsets_listed: &'static str,
    pub subsets: Vec<SubsetOut>,
}

impl From<&BalancednessReport> for BalanceProbe {
    fn from(r: &BalancednessReport) -> Self {
        let out = |s: &endodyn_core::diagnostics::SubsetRecord| SubsetOut {
            subset: members(&s.subset),
            inflow: s.inflow.into(),
            outflow: s.outflow.into(),
            ratio: RatioOut::new(s.ratio, r.samples),
            consistent: s.consistent,
        };
        let (listed, subsets) = if r.records.len() <= MAX_LISTED_SUBSETS {
            ("all", r.records.iter().map(out).collect())
        } else {
            let worst = r.records.iter().min_by(|a, b| a.ratio.lower(r.z).total_cmp(&b.ratio.lower(r.z)));
            ("binding", worst.into_iter().map(out).collect())
        };
        BalanceProbe {
            step: r.step,
            samples: r.samples,
            alpha_hat: RatioOut::new(r.alpha_hat, r.samples),
            alpha_lower: finite(r.alpha_lower),
            violations: r.violations(),
            verdict: r.verdict.as_str(),
            subsets_listed: listed,
            subsets,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceSection {
    pub bound: Option<f64>,
    pub z: f64,
    /// Smallest certified lower bound `α̂ - z·SE` over probes.
    pub alpha_lower_min: Option<f64>,
    pub verdict: &'static str,
    pub probes: Vec<BalanceProbe>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairOut {
    pub i: usize,
    pub j: usize,
    pub forward: Estimate,
    pub backward: Estimate,
    pub ratio: RatioOut,
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntrywiseProbe {
    pub step: u64,
    pub eta_hat: RatioOut,
    pub eta_lower: Option<f64>,
    pub violations: usize,
    pub verdict: &'static str,
    pub pairs: Vec<PairOut>,
}

impl From<&EntrywiseReport> for EntrywiseProbe {
    fn from(r: &EntrywiseReport) -> Self {
        EntrywiseProbe {
            step: r.step,
            eta_hat: RatioOut::new(r.eta_hat, r.samples),
            eta_lower: finite(r.eta_lower),
            violations: r.violations(),
            verdict: r.verdict.as_str(),
            pairs: r
                .records
                .iter()
                .map(|p| PairOut {
                    i: p.i,
                    j: p.j,
                    forward: p.forward.into(),
                    backward: p.backward.into(),
                    ratio: RatioOut::new(p.ratio, r.samples),
                    consistent: p.consistent,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EntrywiseSection {
    pub bound: Option<f64>,
    pub z: f64,
    pub eta_lower_min: Option<f64>,
    pub note: &'static str,
    pub verdict: &'static str,
    pub probes: Vec<EntrywiseProbe>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RuleOut {
    pub rule: usize,
    pub size: usize,
    pub current: &'static str,
    pub next: &'static str,
    pub inflow: Estimate,
    pub outflow: Estimate,
    pub ratio: RatioOut,
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReciprocityProbe {
    pub step: u64,
    pub alpha_hat: RatioOut,
    pub alpha_lower: Option<f64>,
    pub verdict: &'static str,
    pub rules: Vec<RuleOut>,
}

impl From<&ReciprocityReport> for ReciprocityProbe {
    fn from(r: &ReciprocityReport) -> Self {
        ReciprocityProbe {
            step: r.step,
            alpha_hat: RatioOut::new(r.alpha_hat, r.samples),
            alpha_lower: finite(r.alpha_lower),
            verdict: r.verdict.as_str(),
            rules: r
                .records
                .iter()
                .map(|x| RuleOut {
                    rule: x.rule,
                    size: x.size,
                    current: x.current,
                    next: x.next,
                    inflow: x.inflow.into(),
                    outflow: x.outflow.into(),
                    ratio: RatioOut::new(x.ratio, r.samples),
                    consistent: x.consistent,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReciprocitySection {
    pub a: f64,
    pub a_source: &'static str,
    pub gamma: Option<f64>,
    pub predicted: Option<f64>,
    pub z: f64,
    /// Only the sorted prefix/suffix rule family is checked.
    pub partial: bool,
    pub alpha_lower_min: Option<f64>,
    pub verdict: &'static str,
    pub probes: Vec<ReciprocityProbe>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleRecordOut {
    pub step: u64,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<usize>,
    pub current: Estimate,
    pub next: Estimate,
    pub increment: f64,
    pub increment_se: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleSection {
    pub direction: &'static str,
    pub z: f64,
    pub samples: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub min_value: f64,
    pub verdict: &'static str,
    pub parameters: BTreeMap<&'static str, serde_json::Value>,
    pub records: Vec<MartingaleRecordOut>,
}

impl MartingaleSection {
    pub fn new(r: &MartingaleReport, parameters: BTreeMap<&'static str, serde_json::Value>) -> Self {
        MartingaleSection {
            direction: r.direction.as_str(),
            z: r.z,
            samples: r.samples,
            violations: r.violations,
            violation_rate: r.violation_rate(),
            min_value: r.min_value,
            verdict: r.verdict.as_str(),
            parameters,
            records: r
                .records
                .iter()
                .map(|x| MartingaleRecordOut {
                    step: x.step,
                    label: x.label.clone(),
                    ell: x.ell,
                    current: x.current.into(),
                    next: x.next.into(),
                    increment: x.increment,
                    increment_se: x.increment_se,
                    consistent: x.consistent,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityRecordOut {
    pub step: u64,
    pub residual: f64,
    pub residual_se: f64,
    pub argmax: usize,
    pub outcomes: usize,
    pub pi_bar: Vec<f64>,
    pub pi_bar_se: Vec<f64>,
    pub samples: usize,
    pub spread_half: f64,
    pub spread_full: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentitySection {
    pub horizon: u64,
    pub max_residual: f64,
    pub max_residual_se: f64,
    pub records: Vec<IdentityRecordOut>,
}

impl From<&IdentityReport> for IdentitySection {
    fn from(r: &IdentityReport) -> Self {
        IdentitySection {
            horizon: r.horizon,
            max_residual: r.max_residual,
            max_residual_se: r.max_residual_se,
            records: r
                .records
                .iter()
                .map(|x| IdentityRecordOut {
                    step: x.step,
                    residual: x.residual,
                    residual_se: x.residual_se,
                    argmax: x.argmax,
                    outcomes: x.outcomes,
                    pi_bar: x.pi_bar.pi_bar.clone(),
                    pi_bar_se: x.pi_bar.se.clone(),
                    samples: x.pi_bar.samples,
                    spread_half: x.pi_bar.spread_half,
                    spread_full: x.pi_bar.spread_full,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub version: &'static str,
    pub seed: u64,
    pub config: RunConfig,
    pub probe_steps: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordering: Option<OrderingOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_graph: Option<FlowGraphOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symmetric: Option<Vec<SeriesOut>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balancedness: Option<BalanceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsymmetry: Option<EntrywiseSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_reciprocity: Option<EntrywiseSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_reciprocity: Option<ReciprocitySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_ell: Option<MartingaleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<MartingaleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identity: Option<Vec<IdentitySection>>,
    /// Per-check outcome: `consistent`, `violation`, `reported`, `warning`
    /// or `skipped`.
    pub verdicts: BTreeMap<String, String>,
    pub hard_violations: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
