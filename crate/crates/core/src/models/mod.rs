//! Random stochastic matrix processes.
//!
//! Every model implements [`ProcessModel`]: given the current profile `x(k)`
//! and a random stream it emits `W(k+1)`. The law of `W(k+1)` may depend on
//! `x(k)` and on the model's own internal state, which is what makes these
//! dynamics endogenous. `clone_state` / `restore_state` let the engine freeze
//! a model at step `k` and resample the next transition from the same
//! conditional law.

use core::fmt::Debug;

use crate::engine::RandomStream;
use crate::error::Result;
use crate::linalg::{StateVector, StochasticMatrix};

mod fixed;
mod gossip;
mod hk;

pub use fixed::FixedMatrix;
pub use gossip::{gossip_matrix, gossip_sample_pair, GammaSampler, Gossip, GossipParams, PairRule};
pub use hk::{
    averaging_row, hk_async_matrix, hk_async_matrix_for_agent, hk_linkfail_matrix, hk_randconf_matrix, hk_sync_matrix,
    neighborhood, AsyncHkParams, ConfidenceSampler, FailureSchedule, HkAsync, HkLinkFailure, HkParams,
    HkRandomConfidence, HkSync, LinkFailParams, RandConfParams,
};

/// Contract for sampling `W(k+1)` from the history up to step `k`.
///
/// Implementations must return a valid stochastic matrix for every reachable
/// state, and must be deterministic given `(x, model state, stream position)`.
pub trait ProcessModel: Clone + Send + Sync {
    /// Internal state beyond the fixed parameters. Stateless models use `()`.
    type State: Clone + Debug + PartialEq + Send + Sync;

    fn agents(&self) -> usize;

    /// Short identifier used in reports.
    fn name(&self) -> &'static str;

    fn sample_next(&mut self, step: u64, x: &StateVector, rng: &mut RandomStream) -> Result<StochasticMatrix>;

    fn clone_state(&self) -> Self::State;

    fn restore_state(&mut self, state: &Self::State);

    /// Declared almost-sure lower bound `γ` on every diagonal entry.
    fn diagonal_bound(&self) -> Option<f64> {
        None
    }

    /// Whether the model claims to be balanced. Diagnostics never rely on it.
    fn claims_balanced(&self) -> bool {
        false
    }
}

/// Closed set of the built-in models, for configuration-driven runs.
#[derive(Debug, Clone)]
pub enum AnyModel {
    HkSync(HkSync),
    HkAsync(HkAsync),
    HkLinkFailure(HkLinkFailure),
    HkRandomConfidence(HkRandomConfidence),
    Gossip(Gossip),
    Fixed(FixedMatrix),
}

macro_rules! delegate {
    ($self:ident, $inner:ident => $body:expr) => {
        match $self {
            AnyModel::HkSync($inner) => $body,
            AnyModel::HkAsync($inner) => $body,
            AnyModel::HkLinkFailure($inner) => $body,
            AnyModel::HkRandomConfidence($inner) => $body,
            AnyModel::Gossip($inner) => $body,
            AnyModel::Fixed($inner) => $body,
        }
    };
}

impl ProcessModel for AnyModel {
    type State = ();

    fn agents(&self) -> usize {
        delegate!(self, m => m.agents())
    }

    fn name(&self) -> &'static str {
        delegate!(self, m => m.name())
    }

    fn sample_next(&mut self, step: u64, x: &StateVector, rng: &mut RandomStream) -> Result<StochasticMatrix> {
        delegate!(self, m => m.sample_next(step, x, rng))
    }

    fn clone_state(&self) {}

    fn restore_state(&mut self, _: &()) {}

    fn diagonal_bound(&self) -> Option<f64> {
        delegate!(self, m => m.diagonal_bound())
    }

    fn claims_balanced(&self) -> bool {
        delegate!(self, m => m.claims_balanced())
    }
}

impl From<HkSync> for AnyModel {
    fn from(m: HkSync) -> Self {
        AnyModel::HkSync(m)
    }
}

impl From<HkAsync> for AnyModel {
    fn from(m: HkAsync) -> Self {
        AnyModel::HkAsync(m)
    }
}

impl From<HkLinkFailure> for AnyModel {
    fn from(m: HkLinkFailure) -> Self {
        AnyModel::HkLinkFailure(m)
    }
}

impl From<HkRandomConfidence> for AnyModel {
    fn from(m: HkRandomConfidence) -> Self {
        AnyModel::HkRandomConfidence(m)
    }
}

impl From<Gossip> for AnyModel {
    fn from(m: Gossip) -> Self {
        AnyModel::Gossip(m)
    }
}

impl From<FixedMatrix> for AnyModel {
    fn from(m: FixedMatrix) -> Self {
        AnyModel::Fixed(m)
    }
}
