//! JSON run configuration. Parsing is strict: unknown keys are errors.

use std::path::Path;

use endodyn_core::diagnostics::{
    default_horizon, ConvexFn, SymmetricFn, DEFAULT_ORDERING_TOL, DEFAULT_ORDERING_WINDOW, DEFAULT_PROBES,
    DEFAULT_SAMPLES, DEFAULT_TAU, DEFAULT_TOL_CLUSTER,
};
use endodyn_core::engine::FlowWindow;
use endodyn_core::models::{
    AnyModel, AsyncHkParams, ConfidenceSampler, FailureSchedule, FixedMatrix, GammaSampler, Gossip, GossipParams,
    HkAsync, HkLinkFailure, HkParams, HkRandomConfidence, HkSync, LinkFailParams, PairRule, RandConfParams,
};
use endodyn_core::{SeedSpec, StateVector, StochasticMatrix};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub m: usize,
    pub x0: InitialState,
    pub steps: u64,
    pub master_seed: u64,
    #[serde(default = "defaults::replicas")]
    pub replicas: usize,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: String,
    #[serde(default = "defaults::retain_threshold")]
    pub retain_threshold: usize,
    /// Fraction of the run, counted from the end, whose flow feeds the flow graph.
    #[serde(default = "defaults::flow_tail_fraction")]
    pub flow_tail_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    HkSync {
        epsilon: f64,
    },
    HkAsync {
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probabilities: Option<Vec<f64>>,
    },
    HkLinkFailure {
        epsilon: f64,
        /// A constant, or one value per step with the last one held.
        failure_probability: FailureProbability,
    },
    HkRandomConfidence {
        confidence: ConfidenceLaw,
    },
    Gossip {
        epsilon: f64,
        gamma_low: f64,
        gamma_high: f64,
        /// Fixed mixing weight; `γ ~ U[gamma_low, gamma_high]` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
    Fixed {
        matrix: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FailureProbability {
    Constant(f64),
    PerStep(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConfidenceLaw {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    TwoPoint { low: f64, high: f64, p_low: f64 },
}

/// `x(0)`: an explicit array, `"uniform(lo,hi)"` (drawn per replica) or
/// `"equally-spaced(lo,hi)"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInitialState", into = "RawInitialState")]
pub enum InitialState {
    Explicit(Vec<f64>),
    Uniform { lo: f64, hi: f64 },
    EquallySpaced { lo: f64, hi: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawInitialState {
    Values(Vec<f64>),
    Text(String),
}

impl TryFrom<RawInitialState> for InitialState {
    type Error = String;

    fn try_from(raw: RawInitialState) -> Result<Self, String> {
        match raw {
            RawInitialState::Values(v) => Ok(InitialState::Explicit(v)),
            RawInitialState::Text(s) => parse_x0(&s),
        }
    }
}

impl From<InitialState> for RawInitialState {
    fn from(x: InitialState) -> Self {
        match x {
            InitialState::Explicit(v) => RawInitialState::Values(v),
            InitialState::Uniform { lo, hi } => RawInitialState::Text(format!("uniform({lo},{hi})")),
            InitialState::EquallySpaced { lo, hi } => RawInitialState::Text(format!("equally-spaced({lo},{hi})")),
        }
    }
}

fn parse_x0(s: &str) -> Result<InitialState, String> {
    let s = s.trim();
    let bad = || format!("x0 `{s}`: expected an array, \"uniform(lo,hi)\" or \"equally-spaced(lo,hi)\"");
    let open = s.find('(').ok_or_else(bad)?;
    let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
    let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("x0 `{s}`: bounds must be finite with lo < hi"));
    }
    match s[..open].trim() {
        "uniform" => Ok(InitialState::Uniform { lo, hi }),
        "equally-spaced" => Ok(InitialState::EquallySpaced { lo, hi }),
        _ => Err(bad()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Ordering,
    FlowGraph,
    Symmetric,
    Balancedness,
    Subsymmetry,
    PairReciprocity,
    WeakReciprocity,
    VEll,
    Lyapunov,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetricFnConfig {
    Sum,
    Spread,
    PNorm(f64),
}

impl From<SymmetricFnConfig> for SymmetricFn {
    fn from(c: SymmetricFnConfig) -> Self {
        match c {
            SymmetricFnConfig::Sum => SymmetricFn::Sum,
            SymmetricFnConfig::Spread => SymmetricFn::Spread,
            SymmetricFnConfig::PNorm(p) => SymmetricFn::PNorm(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "defaults::checks")]
    pub checks: Vec<Check>,
    /// Resamples per conditional expectation.
    #[serde(default = "defaults::samples")]
    pub samples: usize,
    #[serde(default = "defaults::probes")]
    pub probes: usize,
    /// Explicit probe steps; otherwise `probes` steps spread evenly over the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_steps: Option<Vec<u64>>,
    /// Absolute-probability horizon `T`, default `50·m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    /// Horizons for the identity residual, default `[T/5, T]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity_horizons: Option<Vec<u64>>,
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    #[serde(default = "defaults::tau_robustness")]
    pub tau_robustness: Vec<f64>,
    #[serde(default = "defaults::tol_cluster")]
    pub tol_cluster: f64,
    #[serde(default = "defaults::ordering_window")]
    pub ordering_window: usize,
    #[serde(default = "defaults::ordering_tol")]
    pub ordering_tol: f64,
    #[serde(default = "defaults::z")]
    pub z: f64,
    #[serde(default = "defaults::g")]
    pub g: String,
    /// Lower bound checked by the balancedness test. For asynchronous HK the
    /// default is `p̲/m`; other models only report `α̂`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance_bound: Option<f64>,
    /// Balancedness coefficient fed to the reciprocity prediction; default
    /// is the certified lower bound from the balancedness check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// `V_ℓ` weight; default is half the certified reciprocity coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ells: Option<Vec<usize>>,
    #[serde(default = "defaults::symmetric_functions")]
    pub symmetric_functions: Vec<SymmetricFnConfig>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl DiagnosticsConfig {
    pub fn horizon(&self, m: usize) -> u64 {
        self.horizon.unwrap_or_else(|| default_horizon(m))
    }

    pub fn identity_horizons(&self, m: usize) -> Vec<u64> {
        let t = self.horizon(m);
        let mut hs = self.identity_horizons.clone().unwrap_or_else(|| vec![(t / 5).max(1), t]);
        hs.sort_unstable();
        hs.dedup();
        hs
    }

    /// Probe steps in `[0, K)`, ascending and distinct.
    pub fn probe_steps(&self, steps: u64) -> Vec<u64> {
        let mut ks = match &self.probe_steps {
            Some(ks) => ks.clone(),
            None => {
                let p = self.probes as u64;
                (0..p).map(|i| i * steps / p).collect()
            }
        };
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    pub fn convex_fn(&self) -> Result<ConvexFn> {
        ConvexFn::from_name(&self.g).map_err(|e| CliError::config(e.to_string()))
    }

    fn validate(&self, m: usize, steps: u64) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(format!("diagnostics.{name} must be positive and finite, got {v}")))
            }
        };
        positive("tau", self.tau)?;
        self.tau_robustness.iter().try_for_each(|t| positive("tau_robustness", *t))?;
        positive("tol_cluster", self.tol_cluster)?;
        positive("ordering_tol", self.ordering_tol)?;
        positive("z", self.z)?;
        if self.samples < 2 {
            return Err(CliError::config("diagnostics.samples must be at least 2"));
        }
        if self.probes == 0 || self.ordering_window == 0 {
            return Err(CliError::config("diagnostics.probes and ordering_window must be at least 1"));
        }
        if let Some(ks) = &self.probe_steps {
            if ks.is_empty() || ks.iter().any(|k| *k >= steps) {
                return Err(CliError::config(format!(
                    "diagnostics.probe_steps must be nonempty and below steps={steps}"
                )));
            }
        }
        if self.horizon == Some(0) || self.identity_horizons.as_ref().is_some_and(|h| h.is_empty() || h.contains(&0)) {
            return Err(CliError::config("diagnostics horizons must be at least 1"));
        }
        if let Some(ells) = &self.ells {
            if ells.is_empty() || ells.iter().any(|l| *l == 0 || *l > m) {
                return Err(CliError::config(format!("diagnostics.ells must lie in 1..={m}")));
            }
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b <= 0.5) {
                return Err(CliError::config("diagnostics.beta must lie in (0, 1/2]"));
            }
        }
        self.convex_fn()?;
        for f in &self.symmetric_functions {
            if let SymmetricFnConfig::PNorm(p) = f {
                if p.is_nan() || *p < 1.0 {
                    return Err(CliError::config("p_norm needs p >= 1"));
                }
            }
        }
        Ok(())
    }
}

/// One scalar model parameter swept over `values`, each run once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

mod defaults {
    use super::*;

    pub fn replicas() -> usize {
        1
    }
    pub fn output_dir() -> String {
        "out".into()
    }
    pub fn retain_threshold() -> usize {
        endodyn_core::engine::DEFAULT_RETAIN_THRESHOLD
    }
    pub fn flow_tail_fraction() -> f64 {
        0.5
    }
    pub fn checks() -> Vec<Check> {
        use Check::*;
        vec![Ordering, FlowGraph, Symmetric, Balancedness, Subsymmetry, WeakReciprocity, VEll, Lyapunov, Identity]
    }
    pub fn samples() -> usize {
        DEFAULT_SAMPLES
    }
    pub fn probes() -> usize {
        DEFAULT_PROBES
    }
    pub fn tau() -> f64 {
        DEFAULT_TAU
    }
    pub fn tau_robustness() -> Vec<f64> {
        vec![0.5, 2.0]
    }
    pub fn tol_cluster() -> f64 {
        DEFAULT_TOL_CLUSTER
    }
    pub fn ordering_window() -> usize {
        DEFAULT_ORDERING_WINDOW
    }
    pub fn ordering_tol() -> f64 {
        DEFAULT_ORDERING_TOL
    }
    pub fn z() -> f64 {
        endodyn_core::stats::DEFAULT_Z
    }
    pub fn g() -> String {
        "square".into()
    }
    pub fn symmetric_functions() -> Vec<SymmetricFnConfig> {
        vec![SymmetricFnConfig::Sum, SymmetricFnConfig::Spread]
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(CliError::config(format!("m must be at least 2, got {}", self.m)));
        }
        if self.steps == 0 {
            return Err(CliError::config("steps must be at least 1"));
        }
        if self.replicas == 0 {
            return Err(CliError::config("replicas must be at least 1"));
        }
        if !(self.flow_tail_fraction > 0.0 && self.flow_tail_fraction <= 1.0) {
            return Err(CliError::config("flow_tail_fraction must lie in (0, 1]"));
        }
        if let InitialState::Explicit(v) = &self.x0 {
            if v.len() != self.m {
                return Err(CliError::config(format!("x0 has {} entries but m = {}", v.len(), self.m)));
            }
            StateVector::new(v.clone()).map_err(|e| CliError::config(format!("x0: {e}")))?;
        }
        if let Some(d) = &self.diagnostics {
            d.validate(self.m, self.steps)?;
        }
        if let Some(s) = &self.sweep {
            if s.seeds.is_empty() {
                return Err(CliError::config("sweep.seeds must not be empty"));
            }
            if s.values.is_empty() {
                return Err(CliError::config("sweep.values must not be empty"));
            }
            for v in &s.values {
                self.with_parameter(&s.parameter, *v)?;
            }
        }
        self.build_model()?;
        Ok(())
    }

    pub fn seeds(&self) -> SeedSpec {
        SeedSpec::new(self.master_seed)
    }

    pub fn flow_window(&self) -> FlowWindow {
        FlowWindow::TrailingFraction(self.flow_tail_fraction)
    }

    pub fn diagnostics_or_default(&self) -> DiagnosticsConfig {
        self.diagnostics.clone().unwrap_or_default()
    }

    /// `x(0)` for replica `r`; random initial states use the stream `x0/<r>`.
    pub fn initial_state(&self, replica: usize) -> Result<StateVector> {
        let v = match &self.x0 {
            InitialState::Explicit(v) => v.clone(),
            InitialState::Uniform { lo, hi } => {
                let mut rng = self.seeds().child_stream(&format!("x0/{replica}"));
                (0..self.m).map(|_| rng.random_range(*lo..*hi)).collect()
            }
            InitialState::EquallySpaced { lo, hi } => return Ok(StateVector::equally_spaced(self.m, *lo, *hi)?),
        };
        Ok(StateVector::new(v)?)
    }

    /// Builds the model; invalid parameters are configuration errors.
    pub fn build_model(&self) -> Result<AnyModel> {
        let m = self.m;
        let cfg = |e: endodyn_core::Error| CliError::config(format!("model: {e}"));
        let model: AnyModel = match &self.model {
            ModelConfig::HkSync { epsilon } => HkSync::new(HkParams::new(m, *epsilon).map_err(cfg)?).into(),
            ModelConfig::HkAsync { epsilon, probabilities } => {
                let base = HkParams::new(m, *epsilon).map_err(cfg)?;
                let params = match probabilities {
                    None => AsyncHkParams::uniform(base),
                    Some(p) => AsyncHkParams::with_probabilities(base, p.clone()).map_err(cfg)?,
                };
                HkAsync::new(params).into()
            }
            ModelConfig::HkLinkFailure { epsilon, failure_probability } => {
                let base = HkParams::new(m, *epsilon).map_err(cfg)?;
                let schedule = match failure_probability {
                    FailureProbability::Constant(p) => FailureSchedule::Constant(*p),
                    FailureProbability::PerStep(ps) => FailureSchedule::PerStep(ps.clone()),
                };
                HkLinkFailure::new(LinkFailParams::new(base, schedule).map_err(cfg)?).into()
            }
            ModelConfig::HkRandomConfidence { confidence } => {
                let sampler = match *confidence {
                    ConfidenceLaw::Constant { value } => ConfidenceSampler::Constant(value),
                    ConfidenceLaw::Uniform { lo, hi } => ConfidenceSampler::Uniform { lo, hi },
                    ConfidenceLaw::TwoPoint { low, high, p_low } => ConfidenceSampler::TwoPoint { low, high, p_low },
                };
                HkRandomConfidence::new(RandConfParams::new(m, sampler).map_err(cfg)?).into()
            }
            ModelConfig::Gossip { epsilon, gamma_low, gamma_high, gamma } => {
                let sampler = gamma.map_or(GammaSampler::Uniform, GammaSampler::Constant);
                let params =
                    GossipParams::new(m, *epsilon, *gamma_low, *gamma_high, sampler, PairRule::EndogenousUniform)
                        .map_err(cfg)?;
                Gossip::new(params).into()
            }
            ModelConfig::Fixed { matrix } => {
                if matrix.len() != m {
                    return Err(CliError::config(format!("fixed matrix has {} rows but m = {m}", matrix.len())));
                }
                FixedMatrix::new(StochasticMatrix::from_rows(matrix, 1e-12).map_err(cfg)?).into()
            }
        };
        Ok(model)
    }

    /// Copy with the numeric model field `name` set to `value`.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<RunConfig> {
        let mut tree = serde_json::to_value(self).map_err(|e| CliError::config(e.to_string()))?;
        let slot =
            tree.get_mut("model").and_then(|m| m.get_mut(name)).filter(|v| v.is_number()).ok_or_else(|| {
                CliError::config(format!("sweep parameter `{name}` is not a scalar field of the model"))
            })?;
        *slot = serde_json::Value::from(value);
        let cfg: RunConfig = serde_json::from_value(tree).map_err(|e| CliError::config(e.to_string()))?;
        cfg.build_model()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str =
        r#"{"model": {"kind": "hk_sync", "epsilon": 0.5}, "m": 3, "x0": [0, 0.4, 1], "steps": 5, "master_seed": 1}"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let cfg = RunConfig::parse(BASE).unwrap();
        assert_eq!(cfg.replicas, 1);
        assert_eq!(cfg.flow_tail_fraction, 0.5);
        let d = cfg.diagnostics_or_default();
        assert_eq!((d.samples, d.probes, d.tau, d.tol_cluster), (10_000, 20, 1.0, 1e-6));
        assert_eq!(d.horizon(3), 150);
        assert_eq!(d.identity_horizons(5), vec![50, 250]);
    }

    #[test]
    fn rejects_unknown_fields() {
        let typo = BASE.replace("\"steps\"", "\"step\"");
        assert!(matches!(RunConfig::parse(&typo), Err(CliError::Config(_))));
        let inner = BASE.replace("\"epsilon\": 0.5", "\"epsilon\": 0.5, \"eps\": 1");
        assert!(matches!(RunConfig::parse(&inner), Err(CliError::Config(_))));
        let diag = BASE.replace("\"master_seed\": 1", "\"master_seed\": 1, \"diagnostics\": {\"sample\": 5}");
        assert!(matches!(RunConfig::parse(&diag), Err(CliError::Config(_))));
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("\"steps\": 5", "\"steps\": 0"),
            ("[0, 0.4, 1]", "[0, 0.4]"),
            ("[0, 0.4, 1]", "\"uniform(1,0)\""),
            ("[0, 0.4, 1]", "\"normal(0,1)\""),
            ("\"epsilon\": 0.5", "\"epsilon\": -1"),
        ] {
            assert!(matches!(RunConfig::parse(&BASE.replace(from, to)), Err(CliError::Config(_))), "{to}");
        }
    }

    #[test]
    fn initial_state_forms() {
        let cfg = RunConfig::parse(&BASE.replace("[0, 0.4, 1]", "\"equally-spaced(0, 1)\"")).unwrap();
        assert_eq!(cfg.initial_state(0).unwrap().as_slice(), &[0.0, 0.5, 1.0]);
        let cfg = RunConfig::parse(&BASE.replace("[0, 0.4, 1]", "\" uniform(2,3) \"")).unwrap();
        let a = cfg.initial_state(0).unwrap();
        assert!(a.as_slice().iter().all(|v| (2.0..3.0).contains(v)));
        assert_eq!(a, cfg.initial_state(0).unwrap());
        assert_ne!(a, cfg.initial_state(1).unwrap());
        let echo = serde_json::to_string(&cfg).unwrap();
        assert!(echo.contains("\"uniform(2,3)\""));
        assert_eq!(RunConfig::parse(&echo).unwrap(), cfg);
    }

    #[test]
    fn every_model_kind_parses() {
        for model in [
            r#"{"kind": "hk_async", "epsilon": 0.3, "probabilities": [0.2, 0.3, 0.5]}"#,
            r#"{"kind": "hk_link_failure", "epsilon": 0.3, "failure_probability": 0.25}"#,
            r#"{"kind": "hk_link_failure", "epsilon": 0.3, "failure_probability": [0.5, 0.1]}"#,
            r#"{"kind": "hk_random_confidence", "confidence": {"law": "two_point", "low": 0.1, "high": 0.5, "p_low": 0.5}}"#,
            r#"{"kind": "gossip", "epsilon": 0.4, "gamma_low": 0.2, "gamma_high": 0.8}"#,
            r#"{"kind": "fixed", "matrix": [[1, 0, 0], [0.5, 0.5, 0], [0, 0, 1]]}"#,
        ] {
            let text = BASE.replace(r#"{"kind": "hk_sync", "epsilon": 0.5}"#, model);
            RunConfig::parse(&text).unwrap_or_else(|e| panic!("{model}: {e}"));
        }
    }

    #[test]
    fn sweep_parameter_substitution() {
        let cfg = RunConfig::parse(BASE).unwrap();
        let next = cfg.with_parameter("epsilon", 0.25).unwrap();
        assert_eq!(next.model, ModelConfig::HkSync { epsilon: 0.25 });
        assert!(cfg.with_parameter("gamma", 0.3).is_err());
        assert!(cfg.with_parameter("epsilon", -0.3).is_err());
    }
}
