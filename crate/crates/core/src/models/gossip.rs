//! Asymmetric gossip: a sender `i` and a receiver `j` are drawn, and only
//! the receiver moves, by a random fraction `γ` toward the sender.

use alloc::vec;

use rand::Rng;

use super::ProcessModel;
use crate::engine::RandomStream;
use crate::error::{Error, Result};
use crate::linalg::{StateVector, StochasticMatrix};
use crate::math;

/// Law of the mixing weight `γ(k)`; every draw must land in `[l, h]`.
#[derive(Debug, Clone)]
pub enum GammaSampler {
    Uniform,
    Constant(f64),
    Custom(fn(&mut RandomStream) -> f64),
}

/// Conditional law of the ordered pair `(sender, receiver)` given `x(k)`.
#[derive(Debug, Clone)]
pub enum PairRule {
    /// Sender uniform on all agents, receiver uniform on the sender's other
    /// neighbours. `None` when the sender has no neighbours.
    EndogenousUniform,
    Custom(fn(&StateVector, f64, &mut RandomStream) -> Option<(usize, usize)>),
}

#[derive(Debug, Clone)]
pub struct GossipParams {
    m: usize,
    epsilon: f64,
    gamma_low: f64,
    gamma_high: f64,
    gamma: GammaSampler,
    pair_rule: PairRule,
}

impl GossipParams {
    pub fn new(
        m: usize,
        epsilon: f64,
        gamma_low: f64,
        gamma_high: f64,
        gamma: GammaSampler,
        pair_rule: PairRule,
    ) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidAgentCount(m));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::param("epsilon", "must be finite and nonnegative"));
        }
        if !(0.0 < gamma_low && gamma_low <= gamma_high && gamma_high < 1.0) {
            return Err(Error::param("gamma", "bounds must satisfy 0 < l <= h < 1"));
        }
        if let GammaSampler::Constant(g) = gamma {
            if !(gamma_low..=gamma_high).contains(&g) {
                return Err(Error::param("gamma", "constant value outside [l, h]"));
            }
        }
        Ok(GossipParams { m, epsilon, gamma_low, gamma_high, gamma, pair_rule })
    }

    /// Endogenous-uniform pairs with `γ ~ U[l, h]`.
    pub fn endogenous_uniform(m: usize, epsilon: f64, gamma_low: f64, gamma_high: f64) -> Result<Self> {
        Self::new(m, epsilon, gamma_low, gamma_high, GammaSampler::Uniform, PairRule::EndogenousUniform)
    }

    pub fn agents(&self) -> usize {
        self.m
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gamma_bounds(&self) -> (f64, f64) {
        (self.gamma_low, self.gamma_high)
    }

    pub fn gamma_sampler(&self) -> &GammaSampler {
        &self.gamma
    }

    pub fn pair_rule(&self) -> &PairRule {
        &self.pair_rule
    }

    pub fn sample_gamma(&self, rng: &mut RandomStream) -> Result<f64> {
        let g = match self.gamma {
            GammaSampler::Uniform => {
                if self.gamma_low == self.gamma_high {
                    self.gamma_low
                } else {
                    rng.random_range(self.gamma_low..=self.gamma_high)
                }
            }
            GammaSampler::Constant(g) => g,
            GammaSampler::Custom(f) => f(rng),
        };
        if !(self.gamma_low..=self.gamma_high).contains(&g) {
            return Err(Error::param("gamma", "sampled value outside [l, h]"));
        }
        Ok(g)
    }
}

/// Identity except row `receiver`, which is `(1-γ)` on the diagonal and `γ`
/// in the sender's column.
pub fn gossip_matrix(m: usize, sender: usize, receiver: usize, gamma: f64) -> Result<StochasticMatrix> {
    if m < 2 {
        return Err(Error::InvalidAgentCount(m));
    }
    for idx in [sender, receiver] {
        if idx >= m {
            return Err(Error::IndexOutOfRange { index: idx, len: m });
        }
    }
    if sender == receiver {
        return Err(Error::SelfGossip(sender));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param("gamma", "must lie in (0, 1)"));
    }
    let mut data = vec![0.0; m * m];
    for i in 0..m {
        data[i * m + i] = 1.0;
    }
    data[receiver * m + receiver] = 1.0 - gamma;
    data[receiver * m + sender] = gamma;
    Ok(StochasticMatrix::from_raw(m, data))
}

/// Draws `(sender, receiver)`; `None` means a no-op step.
pub fn gossip_sample_pair(
    x: &StateVector,
    params: &GossipParams,
    rng: &mut RandomStream,
) -> Result<Option<(usize, usize)>> {
    let m = params.m;
    if x.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: x.len() });
    }
    let pair = match params.pair_rule {
        PairRule::EndogenousUniform => {
            let i = rng.random_range(0..m);
            let xi = x[i];
            let near = |j: &usize| *j != i && math::abs(xi - x[*j]) <= params.epsilon;
            let count = (0..m).filter(near).count();
            if count == 0 {
                None
            } else {
                let pick = rng.random_range(0..count);
                (0..m).filter(near).nth(pick).map(|j| (i, j))
            }
        }
        PairRule::Custom(f) => f(x, params.epsilon, rng),
    };
    if let Some((i, j)) = pair {
        if i >= m || j >= m {
            return Err(Error::IndexOutOfRange { index: i.max(j), len: m });
        }
        if i == j {
            return Err(Error::SelfGossip(i));
        }
    }
    Ok(pair)
}

#[derive(Debug, Clone)]
pub struct Gossip {
    pub params: GossipParams,
}

impl Gossip {
    pub fn new(params: GossipParams) -> Self {
        Gossip { params }
    }
}

impl ProcessModel for Gossip {
    type State = ();

    fn agents(&self) -> usize {
        self.params.m
    }

    fn name(&self) -> &'static str {
        "gossip"
    }

    fn sample_next(&mut self, _: u64, x: &StateVector, rng: &mut RandomStream) -> Result<StochasticMatrix> {
        match gossip_sample_pair(x, &self.params, rng)? {
            None => Ok(StochasticMatrix::identity(self.params.m)),
            Some((i, j)) => {
                let g = self.params.sample_gamma(rng)?;
                gossip_matrix(self.params.m, i, j, g)
            }
        }
    }

    fn clone_state(&self) {}

    fn restore_state(&mut self, _: &()) {}

    fn diagonal_bound(&self) -> Option<f64> {
        Some(1.0 - self.params.gamma_high)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SeedSpec;
    use alloc::vec::Vec;

    #[test]
    fn matrix_structure() {
        let w = gossip_matrix(3, 0, 1, 0.3).unwrap();
        assert_eq!(w.row(1), &[0.3, 0.7, 0.0]);
        assert!(w.is_identity_row(0) && w.is_identity_row(2));
        assert_eq!(gossip_matrix(3, 1, 1, 0.3), Err(Error::SelfGossip(1)));
        assert!(gossip_matrix(3, 0, 1, 1.0).is_err());
        let half = gossip_matrix(3, 0, 1, 0.5).unwrap();
        let x = StateVector::new(vec![0.0, 1.0, 5.0]).unwrap();
        assert_eq!(half.apply(&x).unwrap().as_slice(), &[0.0, 0.5, 5.0]);
        let c = StateVector::constant(3, 0.7);
        assert_eq!(half.apply(&c).unwrap(), c);
    }

    #[test]
    fn params_validated() {
        assert!(GossipParams::endogenous_uniform(3, 0.4, 0.0, 0.5).is_err());
        assert!(GossipParams::endogenous_uniform(3, 0.4, 0.6, 0.5).is_err());
        assert!(GossipParams::endogenous_uniform(3, 0.4, 0.2, 1.0).is_err());
        assert!(GossipParams::new(3, 0.4, 0.2, 0.4, GammaSampler::Constant(0.5), PairRule::EndogenousUniform).is_err());
    }

    #[test]
    fn isolated_sender_is_noop() {
        let p = GossipParams::endogenous_uniform(3, 0.1, 0.2, 0.8).unwrap();
        let x = StateVector::new(vec![0.0, 1.0, 2.0]).unwrap();
        let mut rng = SeedSpec::new(3).child_stream("t");
        let mut model = Gossip::new(p);
        for k in 0..20 {
            assert_eq!(model.sample_next(k, &x, &mut rng).unwrap(), StochasticMatrix::identity(3));
        }
    }

    #[test]
    fn consensus_pairs_equiprobable() {
        let p = GossipParams::endogenous_uniform(3, 0.1, 0.2, 0.8).unwrap();
        let x = StateVector::constant(3, 1.0);
        let mut rng = SeedSpec::new(4).child_stream("t");
        let n = 60_000;
        let mut counts = [[0usize; 3]; 3];
        for _ in 0..n {
            let (i, j) = gossip_sample_pair(&x, &p, &mut rng).unwrap().unwrap();
            counts[i][j] += 1;
        }
        let q = 1.0 / 6.0;
        let sd = (q * (1.0 - q) / n as f64).sqrt();
        let freqs: Vec<f64> = (0..3)
            .flat_map(|i| (0..3).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| counts[i][j] as f64 / n as f64)
            .collect();
        assert!(freqs.iter().all(|f| (f - q).abs() <= 4.0 * sd), "{freqs:?}");
        assert!((0..3).all(|i| counts[i][i] == 0));
    }
}
