use super::ProcessModel;
use crate::engine::RandomStream;
use crate::error::{Error, Result};
use crate::linalg::{StateVector, StochasticMatrix};

/// Emits the same matrix at every step. Useful for identity, permutation and
/// other doubly stochastic reference processes.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedMatrix {
    w: StochasticMatrix,
}

impl FixedMatrix {
    pub fn new(w: StochasticMatrix) -> Self {
        FixedMatrix { w }
    }

    pub fn matrix(&self) -> &StochasticMatrix {
        &self.w
    }
}

impl ProcessModel for FixedMatrix {
    type State = ();

    fn agents(&self) -> usize {
        self.w.agents()
    }

    fn name(&self) -> &'static str {
        "fixed"
    }

    fn sample_next(&mut self, _: u64, x: &StateVector, _: &mut RandomStream) -> Result<StochasticMatrix> {
        if x.len() != self.w.agents() {
            return Err(Error::DimensionMismatch { expected: self.w.agents(), found: x.len() });
        }
        Ok(self.w.clone())
    }

    fn clone_state(&self) {}

    fn restore_state(&mut self, _: &()) {}

    fn diagonal_bound(&self) -> Option<f64> {
        let d = self.w.min_diagonal();
        (d > 0.0).then_some(d)
    }

    fn claims_balanced(&self) -> bool {
        self.w.is_doubly_stochastic(1e-12)
    }
}
