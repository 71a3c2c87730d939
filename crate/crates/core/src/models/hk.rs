//! Hegselmann-Krause dynamics and its random variants.
//!
//! All four variants build rows of the form "average over a neighbourhood",
//! so every emitted matrix has `W_ii = 1/|N_i| >= 1/m`.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::ProcessModel;
use crate::engine::RandomStream;
use crate::error::{Error, Result};
use crate::linalg::{StateVector, StochasticMatrix, SubsetMask};
use crate::math;

/// `N_i(x, ε) = { j : |x_i - x_j| <= ε }`. Always contains `i`.
pub fn neighborhood(x: &StateVector, i: usize, epsilon: f64) -> Result<SubsetMask> {
    let m = x.len();
    if i >= m {
        return Err(Error::IndexOutOfRange { index: i, len: m });
    }
    if !(epsilon >= 0.0) {
        return Err(Error::param("epsilon", "must be nonnegative"));
    }
    let xi = x[i];
    SubsetMask::from_indices(m, (0..m).filter(|&j| math::abs(xi - x[j]) <= epsilon))
}

/// Fills `row` with the uniform average over `{ j : |x_i - x_j| <= ε }`.
pub fn averaging_row(x: &[f64], i: usize, epsilon: f64, row: &mut [f64]) {
    let xi = x[i];
    let mut count = 0usize;
    for (r, &xj) in row.iter_mut().zip(x) {
        if math::abs(xi - xj) <= epsilon {
            *r = 1.0;
            count += 1;
        } else {
            *r = 0.0;
        }
    }
    let w = 1.0 / count as f64;
    row.iter_mut().filter(|r| **r != 0.0).for_each(|r| *r = w);
}

fn check_len(x: &StateVector, m: usize) -> Result<()> {
    if x.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: x.len() });
    }
    Ok(())
}

/// Agent count and common confidence level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HkParams {
    m: usize,
    epsilon: f64,
}

impl HkParams {
    pub fn new(m: usize, epsilon: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidAgentCount(m));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::param("epsilon", "must be a positive finite number"));
        }
        Ok(HkParams { m, epsilon })
    }

    pub fn agents(&self) -> usize {
        self.m
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Synchronous update: every agent averages over its neighbourhood.
pub fn hk_sync_matrix(x: &StateVector, params: &HkParams) -> Result<StochasticMatrix> {
    check_len(x, params.m)?;
    let m = params.m;
    let mut data = vec![0.0; m * m];
    for (i, row) in data.chunks_exact_mut(m).enumerate() {
        averaging_row(x.as_slice(), i, params.epsilon, row);
    }
    Ok(StochasticMatrix::from_raw(m, data))
}

#[derive(Debug, Clone)]
enum Picks {
    Uniform,
    Weighted(WeightedIndex<f64>),
}

/// Asynchronous HK: one agent, drawn from `pick_probabilities`, updates.
#[derive(Debug, Clone)]
pub struct AsyncHkParams {
    base: HkParams,
    probabilities: Vec<f64>,
    picks: Picks,
}

impl AsyncHkParams {
    pub fn uniform(base: HkParams) -> Self {
        let p = 1.0 / base.m as f64;
        AsyncHkParams { base, probabilities: vec![p; base.m], picks: Picks::Uniform }
    }

    /// Arbitrary pick law; every entry must be positive and the vector must
    /// sum to one within `1e-12`.
    pub fn with_probabilities(base: HkParams, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != base.m {
            return Err(Error::DimensionMismatch { expected: base.m, found: probabilities.len() });
        }
        if probabilities.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::param("pick_probabilities", "every entry must be positive"));
        }
        let sum: f64 = probabilities.iter().sum();
        if math::abs(sum - 1.0) > 1e-12 {
            return Err(Error::param("pick_probabilities", "must sum to 1"));
        }
        let dist = WeightedIndex::new(&probabilities)
            .map_err(|_| Error::param("pick_probabilities", "not a valid weight vector"))?;
        Ok(AsyncHkParams { base, probabilities, picks: Picks::Weighted(dist) })
    }

    pub fn base(&self) -> &HkParams {
        &self.base
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Smallest pick probability `p̲`.
    pub fn p_lower(&self) -> f64 {
        self.probabilities.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sample_agent(&self, rng: &mut RandomStream) -> usize {
        match &self.picks {
            Picks::Uniform => rng.random_range(0..self.base.m),
            Picks::Weighted(d) => d.sample(rng),
        }
    }
}

/// Identity except row `agent`, which averages over `N_agent(x, ε)`.
pub fn hk_async_matrix_for_agent(x: &StateVector, epsilon: f64, agent: usize) -> Result<StochasticMatrix> {
    let m = x.len();
    if agent >= m {
        return Err(Error::IndexOutOfRange { index: agent, len: m });
    }
    let mut data = vec![0.0; m * m];
    for i in 0..m {
        if i == agent {
            averaging_row(x.as_slice(), i, epsilon, &mut data[i * m..(i + 1) * m]);
        } else {
            data[i * m + i] = 1.0;
        }
    }
    Ok(StochasticMatrix::from_raw(m, data))
}

pub fn hk_async_matrix(x: &StateVector, params: &AsyncHkParams, rng: &mut RandomStream) -> Result<StochasticMatrix> {
    check_len(x, params.base.m)?;
    let agent = params.sample_agent(rng);
    hk_async_matrix_for_agent(x, params.base.epsilon, agent)
}

/// Time-varying link failure probability `p_k`.
#[derive(Debug, Clone)]
pub enum FailureSchedule {
    Constant(f64),
    /// `p_k` for `k < len`; later steps reuse the last entry.
    PerStep(Vec<f64>),
    Custom(fn(u64) -> f64),
}

impl FailureSchedule {
    pub fn probability(&self, step: u64) -> Result<f64> {
        let p = match self {
            FailureSchedule::Constant(p) => *p,
            FailureSchedule::PerStep(ps) => match ps.get(step as usize).or_else(|| ps.last()) {
                Some(p) => *p,
                None => return Err(Error::param("failure_prob", "schedule is empty")),
            },
            FailureSchedule::Custom(f) => f(step),
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("failure_prob", "p_k must lie in [0, 1]"));
        }
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        match self {
            FailureSchedule::Constant(_) => self.probability(0).map(|_| ()),
            FailureSchedule::PerStep(ps) => {
                if ps.is_empty() {
                    return Err(Error::param("failure_prob", "schedule is empty"));
                }
                (0..ps.len() as u64).try_for_each(|k| self.probability(k).map(|_| ()))
            }
            FailureSchedule::Custom(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinkFailParams {
    base: HkParams,
    schedule: FailureSchedule,
}

impl LinkFailParams {
    pub fn new(base: HkParams, schedule: FailureSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(LinkFailParams { base, schedule })
    }

    pub fn base(&self) -> &HkParams {
        &self.base
    }

    pub fn schedule(&self) -> &FailureSchedule {
        &self.schedule
    }
}

/// HK where each ordered link `(i, j)`, `j ≠ i`, inside `N_i` fails
/// independently with probability `p_k`. Agents never drop themselves.
pub fn hk_linkfail_matrix(
    x: &StateVector,
    params: &LinkFailParams,
    step: u64,
    rng: &mut RandomStream,
) -> Result<StochasticMatrix> {
    check_len(x, params.base.m)?;
    let m = params.base.m;
    let eps = params.base.epsilon;
    let p = params.schedule.probability(step)?;
    let xs = x.as_slice();
    let mut data = vec![0.0; m * m];
    for (i, row) in data.chunks_exact_mut(m).enumerate() {
        let mut count = 0usize;
        for (j, r) in row.iter_mut().enumerate() {
            if math::abs(xs[i] - xs[j]) > eps {
                continue;
            }
            if j == i || !rng.random_bool(p) {
                *r = 1.0;
                count += 1;
            }
        }
        let w = 1.0 / count as f64;
        row.iter_mut().filter(|r| **r != 0.0).for_each(|r| *r = w);
    }
    Ok(StochasticMatrix::from_raw(m, data))
}

/// Law `E(k)` of the per-agent confidence levels.
#[derive(Debug, Clone)]
pub enum ConfidenceSampler {
    Constant(f64),
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// `low` with probability `p_low`, otherwise `high`.
    TwoPoint {
        low: f64,
        high: f64,
        p_low: f64,
    },
    Custom(fn(u64, &mut RandomStream) -> f64),
}

impl ConfidenceSampler {
    pub fn sample(&self, step: u64, rng: &mut RandomStream) -> Result<f64> {
        let e = match *self {
            ConfidenceSampler::Constant(e) => e,
            ConfidenceSampler::Uniform { lo, hi } => rng.random_range(lo..=hi),
            ConfidenceSampler::TwoPoint { low, high, p_low } => {
                if rng.random_bool(p_low) {
                    low
                } else {
                    high
                }
            }
            ConfidenceSampler::Custom(f) => f(step, rng),
        };
        if !(e >= 0.0 && e.is_finite()) {
            return Err(Error::param("confidence", "sampled confidence must be finite and nonnegative"));
        }
        Ok(e)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ConfidenceSampler::Constant(e) => e >= 0.0 && e.is_finite(),
            ConfidenceSampler::Uniform { lo, hi } => lo >= 0.0 && lo <= hi && hi.is_finite(),
            ConfidenceSampler::TwoPoint { low, high, p_low } => {
                low >= 0.0 && high >= 0.0 && high.is_finite() && low.is_finite() && (0.0..=1.0).contains(&p_low)
            }
            ConfidenceSampler::Custom(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("confidence", "sampler parameters out of range"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandConfParams {
    m: usize,
    sampler: ConfidenceSampler,
}

impl RandConfParams {
    pub fn new(m: usize, sampler: ConfidenceSampler) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidAgentCount(m));
        }
        sampler.validate()?;
        Ok(RandConfParams { m, sampler })
    }

    pub fn agents(&self) -> usize {
        self.m
    }

    pub fn sampler(&self) -> &ConfidenceSampler {
        &self.sampler
    }
}

/// HK where agent `i` uses its own confidence `ε_i(k)`, drawn i.i.d. per
/// agent (in agent order) from the sampler.
pub fn hk_randconf_matrix(
    x: &StateVector,
    params: &RandConfParams,
    step: u64,
    rng: &mut RandomStream,
) -> Result<StochasticMatrix> {
    check_len(x, params.m)?;
    let m = params.m;
    let mut data = vec![0.0; m * m];
    for (i, row) in data.chunks_exact_mut(m).enumerate() {
        let eps = params.sampler.sample(step, rng)?;
        averaging_row(x.as_slice(), i, eps, row);
    }
    Ok(StochasticMatrix::from_raw(m, data))
}

#[derive(Debug, Clone)]
pub struct HkSync {
    pub params: HkParams,
}

impl HkSync {
    pub fn new(params: HkParams) -> Self {
        HkSync { params }
    }
}

impl ProcessModel for HkSync {
    type State = ();

    fn agents(&self) -> usize {
        self.params.m
    }

    fn name(&self) -> &'static str {
        "hk_sync"
    }

    fn sample_next(&mut self, _: u64, x: &StateVector, _: &mut RandomStream) -> Result<StochasticMatrix> {
        hk_sync_matrix(x, &self.params)
    }

    fn clone_state(&self) {}

    fn restore_state(&mut self, _: &()) {}

    fn diagonal_bound(&self) -> Option<f64> {
        Some(1.0 / self.params.m as f64)
    }

    fn claims_balanced(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub struct HkAsync {
    pub params: AsyncHkParams,
}

impl HkAsync {
    pub fn new(params: AsyncHkParams) -> Self {
        HkAsync { params }
    }
}

impl ProcessModel for HkAsync {
    type State = ();

    fn agents(&self) -> usize {
        self.params.base.m
    }

    fn name(&self) -> &'static str {
        "hk_async"
    }

    fn sample_next(&mut self, _: u64, x: &StateVector, rng: &mut RandomStream) -> Result<StochasticMatrix> {
        hk_async_matrix(x, &self.params, rng)
    }

    fn clone_state(&self) {}

    fn restore_state(&mut self, _: &()) {}

    fn diagonal_bound(&self) -> Option<f64> {
        Some(1.0 / self.params.base.m as f64)
    }

    fn claims_balanced(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub struct HkLinkFailure {
    pub params: LinkFailParams,
}

impl HkLinkFailure {
    pub fn new(params: LinkFailParams) -> Self {
        HkLinkFailure { params }
    }
}

impl ProcessModel for HkLinkFailure {
    type State = ();

    fn agents(&self) -> usize {
        self.params.base.m
    }

    fn name(&self) -> &'static str {
        "hk_link_failure"
    }

    fn sample_next(&mut self, step: u64, x: &StateVector, rng: &mut RandomStream) -> Result<StochasticMatrix> {
        hk_linkfail_matrix(x, &self.params, step, rng)
    }

    fn clone_state(&self) {}

    fn restore_state(&mut self, _: &()) {}

    fn diagonal_bound(&self) -> Option<f64> {
        Some(1.0 / self.params.base.m as f64)
    }

    fn claims_balanced(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub struct HkRandomConfidence {
    pub params: RandConfParams,
}

impl HkRandomConfidence {
    pub fn new(params: RandConfParams) -> Self {
        HkRandomConfidence { params }
    }
}

impl ProcessModel for HkRandomConfidence {
    type State = ();

    fn agents(&self) -> usize {
        self.params.m
    }

    fn name(&self) -> &'static str {
        "hk_random_confidence"
    }

    fn sample_next(&mut self, step: u64, x: &StateVector, rng: &mut RandomStream) -> Result<StochasticMatrix> {
        hk_randconf_matrix(x, &self.params, step, rng)
    }

    fn clone_state(&self) {}

    fn restore_state(&mut self, _: &()) {}

    fn diagonal_bound(&self) -> Option<f64> {
        Some(1.0 / self.params.m as f64)
    }

    fn claims_balanced(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SeedSpec;
    use alloc::vec;

    fn x3() -> StateVector {
        StateVector::new(vec![0.0, 0.4, 1.0]).unwrap()
    }

    fn rows(w: &StochasticMatrix) -> Vec<Vec<f64>> {
        w.rows().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn neighborhood_examples() {
        let n = neighborhood(&x3(), 0, 0.5).unwrap();
        assert_eq!(n.iter().collect::<Vec<_>>(), vec![0, 1]);
        let distinct = StateVector::new(vec![0.1, 0.7, 0.3, 0.9]).unwrap();
        for i in 0..4 {
            assert_eq!(neighborhood(&distinct, i, 0.0).unwrap().iter().collect::<Vec<_>>(), vec![i]);
        }
        let c = StateVector::constant(4, 2.0);
        assert_eq!(neighborhood(&c, 2, 0.0).unwrap().len(), 4);
        assert!(matches!(neighborhood(&c, 4, 0.1), Err(Error::IndexOutOfRange { .. })));
        // closed ball: boundary ties are neighbours
        let edge = StateVector::new(vec![0.0, 0.5]).unwrap();
        assert_eq!(neighborhood(&edge, 0, 0.5).unwrap().len(), 2);
    }

    #[test]
    fn sync_examples() {
        let p = HkParams::new(3, 0.5).unwrap();
        assert_eq!(
            rows(&hk_sync_matrix(&x3(), &p).unwrap()),
            vec![vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0]]
        );
        let all = hk_sync_matrix(&StateVector::constant(3, 0.2), &p).unwrap();
        assert!(all.as_slice().iter().all(|v| *v == 1.0 / 3.0));
        let far = StateVector::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(hk_sync_matrix(&far, &p).unwrap(), StochasticMatrix::identity(3));
        assert!(HkParams::new(3, 0.0).is_err());
        assert!(HkParams::new(1, 0.1).is_err());
    }

    #[test]
    fn async_examples() {
        assert_eq!(
            rows(&hk_async_matrix_for_agent(&x3(), 0.5, 0).unwrap()),
            vec![vec![0.5, 0.5, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]
        );
        assert_eq!(hk_async_matrix_for_agent(&x3(), 0.5, 2).unwrap(), StochasticMatrix::identity(3));
        let c = hk_async_matrix_for_agent(&StateVector::constant(3, 1.0), 0.5, 1).unwrap();
        assert_eq!(rows(&c)[1], vec![1.0 / 3.0; 3]);
        assert!(c.is_identity_row(0) && c.is_identity_row(2));
    }

    #[test]
    fn async_pick_law_is_validated() {
        let base = HkParams::new(3, 0.5).unwrap();
        assert!(AsyncHkParams::with_probabilities(base, vec![0.5, 0.5, 0.0]).is_err());
        assert!(AsyncHkParams::with_probabilities(base, vec![0.5, 0.25, 0.3]).is_err());
        let p = AsyncHkParams::with_probabilities(base, vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(p.p_lower(), 0.25);
    }

    #[test]
    fn linkfail_extremes() {
        let base = HkParams::new(3, 0.5).unwrap();
        let mut rng = SeedSpec::new(1).child_stream("t");
        let none = LinkFailParams::new(base, FailureSchedule::Constant(0.0)).unwrap();
        assert_eq!(hk_linkfail_matrix(&x3(), &none, 0, &mut rng).unwrap(), hk_sync_matrix(&x3(), &base).unwrap());
        let all = LinkFailParams::new(base, FailureSchedule::Constant(1.0)).unwrap();
        assert_eq!(hk_linkfail_matrix(&x3(), &all, 0, &mut rng).unwrap(), StochasticMatrix::identity(3));
        assert!(LinkFailParams::new(base, FailureSchedule::PerStep(vec![0.1, 1.5])).is_err());
        let sched = FailureSchedule::PerStep(vec![0.0, 1.0]);
        assert_eq!(sched.probability(7).unwrap(), 1.0);
    }

    #[test]
    fn randconf_collapses_to_sync() {
        let base = HkParams::new(3, 0.5).unwrap();
        let mut rng = SeedSpec::new(2).child_stream("t");
        let same = RandConfParams::new(3, ConfidenceSampler::Constant(0.5)).unwrap();
        assert_eq!(hk_randconf_matrix(&x3(), &same, 0, &mut rng).unwrap(), hk_sync_matrix(&x3(), &base).unwrap());
        let zero = RandConfParams::new(3, ConfidenceSampler::Constant(0.0)).unwrap();
        assert_eq!(hk_randconf_matrix(&x3(), &zero, 0, &mut rng).unwrap(), StochasticMatrix::identity(3));
        assert!(RandConfParams::new(3, ConfidenceSampler::Uniform { lo: 0.5, hi: 0.1 }).is_err());
    }
}
