use alloc::vec::Vec;

use crate::engine::{resample_transitions, SeedSpec, Snapshot};
use crate::error::{Error, Result};
use crate::linalg::{ordering, StateVector, StochasticMatrix, SubsetMask};
use crate::models::ProcessModel;
use crate::stats::{MeanEstimate, PairedMoments, Ratio};

use super::Verdict;

/// Deterministic map from `(k, x(k))` to a subset of fixed size.
#[derive(Debug, Clone)]
pub enum AdaptedRule {
    /// Indices of the `ℓ` smallest entries (stable ordering).
    SortedPrefix(usize),
    /// Indices of the `ℓ` largest entries.
    SortedSuffix(usize),
    Constant(SubsetMask),
    Custom {
        size: usize,
        rule: fn(u64, &StateVector) -> SubsetMask,
    },
}

impl AdaptedRule {
    pub fn size(&self) -> usize {
        match self {
            AdaptedRule::SortedPrefix(l) | AdaptedRule::SortedSuffix(l) => *l,
            AdaptedRule::Constant(s) => s.len(),
            AdaptedRule::Custom { size, .. } => *size,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AdaptedRule::SortedPrefix(_) => "prefix",
            AdaptedRule::SortedSuffix(_) => "suffix",
            AdaptedRule::Constant(_) => "constant",
            AdaptedRule::Custom { .. } => "custom",
        }
    }

    /// Errors with `IrregularSequence` when the produced subset does not
    /// have the declared size.
    pub fn apply(&self, step: u64, x: &StateVector) -> Result<SubsetMask> {
        let s = match self {
            AdaptedRule::SortedPrefix(l) => ordering(x).lower_set(*l),
            AdaptedRule::SortedSuffix(l) => ordering(x).upper_set(*l),
            AdaptedRule::Constant(s) => s.clone(),
            AdaptedRule::Custom { rule, .. } => rule(step, x),
        };
        if s.len() != self.size() || s.agents() != x.len() {
            return Err(Error::IrregularSequence { expected: self.size(), found: s.len() });
        }
        Ok(s)
    }
}

/// `S(k)` from the current snapshot and `S(k+1)` from each post-step state.
#[derive(Debug, Clone)]
pub struct RulePair {
    pub current: AdaptedRule,
    pub next: AdaptedRule,
}

impl RulePair {
    pub fn new(current: AdaptedRule, next: AdaptedRule) -> Result<Self> {
        if current.size() != next.size() {
            return Err(Error::IrregularSequence { expected: current.size(), found: next.size() });
        }
        Ok(RulePair { current, next })
    }
}

/// Every combination of sorted prefix and suffix at `k` and `k+1` for
/// `ℓ = 1..m-1`.
pub fn prefix_suffix_rules(m: usize) -> Vec<RulePair> {
    let mut out = Vec::new();
    for l in 1..m {
        let kinds = [AdaptedRule::SortedPrefix(l), AdaptedRule::SortedSuffix(l)];
        for a in &kinds {
            for b in &kinds {
                out.push(RulePair { current: a.clone(), next: b.clone() });
            }
        }
    }
    out
}

/// `γa / (4m)`: the reciprocity coefficient implied by a diagonal bound `γ`
/// and a balancedness coefficient `a`.
pub fn predicted_reciprocity_coefficient(gamma: f64, a: f64, m: usize) -> f64 {
    gamma * a / (4.0 * m as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReciprocityRecord {
    pub rule: usize,
    pub size: usize,
    pub current: &'static str,
    pub next: &'static str,
    /// `Ê[W_{S̄(k+1)S(k)}]`.
    pub inflow: MeanEstimate,
    /// `Ê[W_{S(k+1)S̄(k)}]`.
    pub outflow: MeanEstimate,
    pub ratio: Ratio,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReciprocityReport {
    pub step: u64,
    pub samples: usize,
    pub z: f64,
    pub gamma: Option<f64>,
    pub a: f64,
    /// `γa/(4m)`, or `None` when the model declares no diagonal bound.
    pub predicted: Option<f64>,
    pub records: Vec<ReciprocityRecord>,
    pub alpha_hat: Ratio,
    pub alpha_lower: f64,
    /// Only the listed rule pairs were tested.
    pub partial: bool,
    pub verdict: Verdict,
}

fn cross_flow(w: &StochasticMatrix, rows_out_of: &SubsetMask, cols_in: &SubsetMask) -> f64 {
    let mut total = 0.0;
    for i in 0..w.agents() {
        if rows_out_of.contains(i) {
            continue;
        }
        let row = w.row(i);
        total += cols_in.iter().map(|j| row[j]).sum::<f64>();
    }
    total
}

/// Weak reciprocity along the given rule pairs:
/// `E[W_{S̄(k+1)S(k)} | F_k] >= α E[W_{S(k+1)S̄(k)} | F_k]`, checked against
/// `α = γa/(4m)` with `γ` from the model's declared diagonal bound.
pub fn check_weak_reciprocity<M: ProcessModel>(
    model: &M,
    snap: &Snapshot<M::State>,
    rules: &[RulePair],
    n: usize,
    seeds: &SeedSpec,
    a: f64,
    z: f64,
) -> Result<ReciprocityReport> {
    let m = model.agents();
    let gamma = model.diagonal_bound();
    let predicted = gamma.map(|g| predicted_reciprocity_coefficient(g, a, m));
    let current: Vec<SubsetMask> =
        rules.iter().map(|r| r.current.apply(snap.step, &snap.state)).collect::<Result<_>>()?;
    let draws = resample_transitions(model, snap, n, seeds)?;
    let mut moments = alloc::vec![PairedMoments::default(); rules.len()];
    for t in &draws {
        for (r, rule) in rules.iter().enumerate() {
            let s_now = &current[r];
            let s_next = rule.next.apply(snap.step + 1, &t.next_state)?;
            let s_now_c = s_now.complement();
            // rows in S̄(k+1), columns in S(k)
            let inflow = cross_flow(&t.matrix, &s_next, s_now);
            // rows in S(k+1), columns in S̄(k)
            let outflow = cross_flow(&t.matrix, &s_next.complement(), &s_now_c);
            moments[r].push(inflow, outflow);
        }
    }
    let mut records = Vec::with_capacity(rules.len());
    let mut alpha_hat = Ratio::Vacuous;
    let mut alpha_lower = f64::INFINITY;
    for (r, (rule, pm)) in rules.iter().zip(&moments).enumerate() {
        let ratio = pm.ratio(z);
        alpha_hat = alpha_hat.min(ratio);
        alpha_lower = alpha_lower.min(ratio.lower(z));
        records.push(ReciprocityRecord {
            rule: r,
            size: rule.current.size(),
            current: rule.current.name(),
            next: rule.next.name(),
            inflow: pm.first(),
            outflow: pm.second(),
            ratio,
            consistent: predicted.is_none_or(|c| ratio.consistent_with_bound(c, z)),
        });
    }
    let all = records.iter().all(|r| r.consistent);
    Ok(ReciprocityReport {
        step: snap.step,
        samples: n,
        z,
        gamma,
        a,
        predicted,
        records,
        alpha_hat,
        alpha_lower,
        partial: true,
        verdict: Verdict::from_ok(all),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn predicted_coefficient() {
        let c = predicted_reciprocity_coefficient(1.0 / 3.0, 1.0, 3);
        assert!((c - 1.0 / 36.0).abs() < 1e-15);
        assert!((c - 0.0278).abs() < 1e-4);
    }

    #[test]
    fn rules_keep_cardinality() {
        let x = StateVector::new(vec![0.5, 0.1, 0.9, 0.1]).unwrap();
        let p = AdaptedRule::SortedPrefix(2).apply(0, &x).unwrap();
        assert_eq!(p.iter().collect::<Vec<_>>(), vec![1, 3]);
        let s = AdaptedRule::SortedSuffix(1).apply(0, &x).unwrap();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![2]);
        fn bad(_: u64, x: &StateVector) -> SubsetMask {
            SubsetMask::full(x.len())
        }
        let custom = AdaptedRule::Custom { size: 2, rule: bad };
        assert!(matches!(custom.apply(0, &x), Err(Error::IrregularSequence { .. })));
        assert!(RulePair::new(AdaptedRule::SortedPrefix(1), AdaptedRule::SortedPrefix(2)).is_err());
        assert_eq!(prefix_suffix_rules(4).len(), 12);
    }
}
