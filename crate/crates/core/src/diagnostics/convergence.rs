use alloc::vec::Vec;

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{ordering, StateVector};
use crate::math;

/// Sup-norm step drifts of the sorted profile `z(k)` and of `x(k)` itself.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingConvergence {
    /// `‖z(k+1) - z(k)‖∞` for each recorded transition.
    pub ordering_drift: Vec<f64>,
    /// `‖x(k+1) - x(k)‖∞`.
    pub state_drift: Vec<f64>,
    pub window: usize,
    pub tol: f64,
    pub trailing_ordering_drift: f64,
    pub trailing_state_drift: f64,
    /// First step after which every ordering drift stays below `tol`, if the
    /// trailing window is below `tol`.
    pub ordering_converged_at: Option<u64>,
    pub state_converged_at: Option<u64>,
    pub final_ordering: Vec<f64>,
}

impl OrderingConvergence {
    pub fn converged(&self) -> bool {
        self.ordering_converged_at.is_some()
    }
}

fn settle_point(drift: &[f64], start: u64, window: usize, tol: f64) -> (f64, Option<u64>) {
    let w = window.min(drift.len());
    let trailing = drift[drift.len() - w..].iter().copied().fold(0.0, f64::max);
    if drift.is_empty() || !(trailing < tol) {
        return (trailing, if drift.is_empty() { Some(start) } else { None });
    }
    let last_big = drift.iter().rposition(|d| !(*d < tol));
    let k = match last_big {
        Some(p) => start + p as u64 + 1,
        None => start,
    };
    (trailing, Some(k))
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| math::abs(x - y)).fold(0.0, f64::max)
}

/// Ordering convergence: the trailing `window` drifts are all below `tol`.
pub fn ordering_convergence<S>(traj: &Trajectory<S>, window: usize, tol: f64) -> Result<OrderingConvergence> {
    if window == 0 {
        return Err(Error::param("window", "must be at least 1"));
    }
    let states = traj.states();
    let sorted: Vec<Vec<f64>> = states.iter().map(|x| ordering(x).sorted).collect();
    let ordering_drift: Vec<f64> = sorted.windows(2).map(|w| sup(&w[0], &w[1])).collect();
    let state_drift: Vec<f64> = states.windows(2).map(|w| sup(w[0].as_slice(), w[1].as_slice())).collect();
    let (trailing_ordering_drift, ordering_converged_at) =
        settle_point(&ordering_drift, traj.start_step(), window, tol);
    let (trailing_state_drift, state_converged_at) = settle_point(&state_drift, traj.start_step(), window, tol);
    Ok(OrderingConvergence {
        ordering_drift,
        state_drift,
        window,
        tol,
        trailing_ordering_drift,
        trailing_state_drift,
        ordering_converged_at,
        state_converged_at,
        final_ordering: sorted.last().cloned().unwrap_or_default(),
    })
}

/// Symmetric continuous functionals of the profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymmetricFn {
    Sum,
    /// `‖x‖_p` for `p >= 1`; `f64::INFINITY` gives the max norm.
    PNorm(f64),
    /// `max - min`.
    Spread,
}

impl SymmetricFn {
    pub fn eval(&self, x: &StateVector) -> Result<f64> {
        Ok(match *self {
            SymmetricFn::Sum => x.as_slice().iter().sum(),
            SymmetricFn::PNorm(p) => {
                if !(p >= 1.0) {
                    return Err(Error::param("p", "p-norms need p >= 1"));
                }
                if p == f64::INFINITY {
                    x.as_slice().iter().map(|v| math::abs(*v)).fold(0.0, f64::max)
                } else {
                    math::pow(x.as_slice().iter().map(|v| math::pow(math::abs(*v), p)).sum(), 1.0 / p)
                }
            }
            SymmetricFn::Spread => x.spread(),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SymmetricFn::Sum => "sum",
            SymmetricFn::PNorm(_) => "p_norm",
            SymmetricFn::Spread => "spread",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesReport {
    pub function: SymmetricFn,
    pub values: Vec<f64>,
    /// `max_k |V(x(k)) - V(x(0))|`.
    pub max_deviation: f64,
    pub trailing_drift: f64,
    pub converged_at: Option<u64>,
    pub nonincreasing: bool,
}

pub fn symmetric_function_series<S>(
    traj: &Trajectory<S>,
    v: SymmetricFn,
    window: usize,
    tol: f64,
) -> Result<SeriesReport> {
    if window == 0 {
        return Err(Error::param("window", "must be at least 1"));
    }
    let values = traj.states().iter().map(|x| v.eval(x)).collect::<Result<Vec<f64>>>()?;
    let drift: Vec<f64> = values.windows(2).map(|w| math::abs(w[1] - w[0])).collect();
    let (trailing_drift, converged_at) = settle_point(&drift, traj.start_step(), window, tol);
    let max_deviation = values.iter().map(|y| math::abs(y - values[0])).fold(0.0, f64::max);
    let nonincreasing = values.windows(2).all(|w| w[1] <= w[0]);
    Ok(SeriesReport { function: v, values, max_deviation, trailing_drift, converged_at, nonincreasing })
}
