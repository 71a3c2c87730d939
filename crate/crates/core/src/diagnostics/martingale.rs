use alloc::string::String;
use alloc::vec::Vec;

use crate::engine::{resample_with, SeedSpec, Snapshot};
use crate::error::{Error, Result};
use crate::linalg::{ordering, v_ell};
use crate::math;
use crate::models::ProcessModel;
use crate::stats::{MeanEstimate, FLOAT_FLOOR};

use super::abs_prob::{absolute_probability_study, StudyOptions};
use super::{probe_name, probe_seeds, Verdict};

/// Convex scalar functions for the Jensen-gap Lyapunov family.
#[derive(Debug, Clone, Copy)]
pub enum ConvexFn {
    Square,
    Abs,
    Exp,
    Linear,
    /// Accepted without a convexity check.
    Custom(fn(f64) -> f64),
}

impl ConvexFn {
    /// Catalog lookup by name: `square`, `abs`, `exp`, `linear`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "square" => Ok(ConvexFn::Square),
            "abs" => Ok(ConvexFn::Abs),
            "exp" => Ok(ConvexFn::Exp),
            "linear" => Ok(ConvexFn::Linear),
            other => Err(Error::NonConvexCatalog(String::from(other))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConvexFn::Square => "square",
            ConvexFn::Abs => "abs",
            ConvexFn::Exp => "exp",
            ConvexFn::Linear => "linear",
            ConvexFn::Custom(_) => "custom",
        }
    }

    /// False for user-supplied functions.
    pub fn is_verified(&self) -> bool {
        !matches!(self, ConvexFn::Custom(_))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ConvexFn::Square => t * t,
            ConvexFn::Abs => math::abs(t),
            ConvexFn::Exp => math::exp(t),
            ConvexFn::Linear => t,
            ConvexFn::Custom(f) => f(t),
        }
    }

    /// Derivative (a subgradient at kinks).
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            ConvexFn::Square => 2.0 * t,
            ConvexFn::Abs => {
                if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            ConvexFn::Exp => math::exp(t),
            ConvexFn::Linear => 1.0,
            ConvexFn::Custom(f) => {
                let h = 1e-6 * math::abs(t).max(1.0);
                (f(t + h) - f(t - h)) / (2.0 * h)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `E[V(k+1) | F_k] >= V(k)`.
    Sub,
    /// `E[V(k+1) | F_k] <= V(k)`.
    Super,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Sub => "submartingale",
            Direction::Super => "supermartingale",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleRecord {
    pub probe: usize,
    pub step: u64,
    pub label: String,
    pub ell: Option<usize>,
    /// `V(k)`, with SE when it is itself estimated.
    pub current: MeanEstimate,
    /// `Ê[V(k+1) | F_k]`.
    pub next: MeanEstimate,
    pub increment: f64,
    /// Combined SE of the increment.
    pub increment_se: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub direction: Direction,
    pub z: f64,
    pub samples: usize,
    pub records: Vec<MartingaleRecord>,
    pub violations: usize,
    /// Smallest `V` value seen at any probe or post-step outcome.
    pub min_value: f64,
    pub verdict: Verdict,
}

impl MartingaleReport {
    pub(crate) fn new(
        direction: Direction,
        z: f64,
        samples: usize,
        records: Vec<MartingaleRecord>,
        min_value: f64,
    ) -> Self {
        let violations = records.iter().filter(|r| !r.consistent).count();
        MartingaleReport {
            direction,
            z,
            samples,
            records,
            violations,
            min_value,
            verdict: Verdict::from_ok(violations == 0),
        }
    }

    pub fn violation_rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.violations as f64 / self.records.len() as f64
        }
    }
}

pub(crate) fn increment_ok(direction: Direction, increment: f64, se: f64, z: f64) -> bool {
    match direction {
        Direction::Sub => increment >= -z * se - FLOAT_FLOOR,
        Direction::Super => increment <= z * se + FLOAT_FLOOR,
    }
}

/// Conditional increments of `V_ℓ = Σ_{i≤ℓ} β^i z_i` at each probe, one
/// record per `(probe, ℓ)`. Expected to be nonnegative when `β` is at most
/// half the weak-reciprocity coefficient.
pub fn martingale_test_v_ell<M: ProcessModel>(
    model: &M,
    probes: &[Snapshot<M::State>],
    ells: &[usize],
    beta: f64,
    n: usize,
    seeds: &SeedSpec,
    z: f64,
) -> Result<MartingaleReport> {
    let mut records = Vec::new();
    let mut min_value = f64::INFINITY;
    for (p, snap) in probes.iter().enumerate() {
        let zk = ordering(&snap.state);
        let now = ells.iter().map(|&l| v_ell(&zk, l, beta)).collect::<Result<Vec<f64>>>()?;
        let after = resample_with(model, snap, n, &probe_seeds(seeds, p), |_, m, x, rng| {
            let w = m.sample_next(snap.step, x, rng)?;
            let z1 = ordering(&w.apply(x)?);
            ells.iter().map(|&l| v_ell(&z1, l, beta)).collect::<Result<Vec<f64>>>()
        })?;
        for (e, &l) in ells.iter().enumerate() {
            let next: Vec<f64> = after.iter().map(|v| v[e]).collect();
            let diffs: Vec<f64> = next.iter().map(|v| v - now[e]).collect();
            let inc = MeanEstimate::from_samples(&diffs);
            min_value = next.iter().copied().fold(min_value.min(now[e]), f64::min);
            records.push(MartingaleRecord {
                probe: p,
                step: snap.step,
                label: probe_name(&snap.stream.label, snap.step),
                ell: Some(l),
                current: MeanEstimate::exact(now[e]),
                next: MeanEstimate::from_samples(&next),
                increment: inc.mean,
                increment_se: inc.se,
                consistent: increment_ok(Direction::Sub, inc.mean, inc.se, z),
            });
        }
    }
    Ok(MartingaleReport::new(Direction::Sub, z, n, records, min_value))
}

/// Jensen-gap Lyapunov test `V_k = Σ π̄_i g(x_i) - g(π̄ᵀx)` with `π̄`
/// truncated at `horizon`.
pub fn lyapunov_test<M: ProcessModel>(
    model: &M,
    probes: &[Snapshot<M::State>],
    g: ConvexFn,
    horizon: u64,
    n: usize,
    seeds: &SeedSpec,
    z: f64,
) -> Result<MartingaleReport> {
    let opts = StudyOptions { horizons: alloc::vec![horizon], samples: n, outer_samples: n, inner_samples: n, z, g };
    let mut study = absolute_probability_study(model, probes, &opts, seeds)?;
    Ok(study.lyapunov.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog() {
        assert!(matches!(ConvexFn::from_name("square"), Ok(ConvexFn::Square)));
        assert!(matches!(ConvexFn::from_name("sin"), Err(Error::NonConvexCatalog(_))));
        fn quartic(t: f64) -> f64 {
            t * t * t * t
        }
        let c = ConvexFn::Custom(quartic);
        assert!(!c.is_verified());
        assert!((c.derivative(1.0) - 4.0).abs() < 1e-6);
        assert_eq!(ConvexFn::Abs.derivative(-2.0), -1.0);
    }

    #[test]
    fn direction_tolerance() {
        assert!(increment_ok(Direction::Sub, -0.29, 0.1, 3.0));
        assert!(!increment_ok(Direction::Sub, -0.31, 0.1, 3.0));
        assert!(increment_ok(Direction::Super, 0.0, 0.0, 3.0));
        assert!(!increment_ok(Direction::Super, 1e-9, 0.0, 3.0));
    }
}
