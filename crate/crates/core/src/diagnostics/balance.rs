use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{resample_next, SeedSpec, Snapshot};
use crate::error::{Error, Result};
use crate::linalg::{SubsetMask, MAX_ENUMERATED_AGENTS};
use crate::models::ProcessModel;
use crate::stats::{MeanEstimate, PairedMoments, Ratio};

use super::Verdict;

const MIN_SAMPLES: usize = 100;

/// One nontrivial subset `S`: expected flow into `S` from `S̄`, out of `S`,
/// and their ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRecord {
    pub subset: SubsetMask,
    /// `Ê[W_S̄S]`.
    pub inflow: MeanEstimate,
    /// `Ê[W_SS̄]`.
    pub outflow: MeanEstimate,
    pub ratio: Ratio,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancednessReport {
    pub step: u64,
    pub samples: usize,
    pub z: f64,
    pub records: Vec<SubsetRecord>,
    /// Smallest subset ratio; `+∞` when every ratio is vacuous.
    pub alpha_hat: Ratio,
    /// Smallest `ratio - z·SE` over the subsets.
    pub alpha_lower: f64,
    pub bound: Option<f64>,
    pub verdict: Verdict,
}

impl BalancednessReport {
    pub fn violations(&self) -> usize {
        self.records.iter().filter(|r| !r.consistent).count()
    }
}

fn check_samples(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::param("n_samples", "at least 100 resamples are required"));
    }
    Ok(())
}

fn verdict_for(alpha_hat: &Ratio, bound: Option<f64>, all_consistent: bool) -> Verdict {
    match bound {
        Some(_) => Verdict::from_ok(all_consistent),
        None => Verdict::from_ok(alpha_hat.value() > 0.0),
    }
}

/// Estimates `E[W_S̄S(k+1) | F_k]` and `E[W_SS̄(k+1) | F_k]` for all `2^m - 2`
/// nontrivial subsets from one shared batch of `n` resampled matrices.
///
/// With `bound = Some(c)` each subset is checked against `ratio >= c - z·SE`.
pub fn check_balancedness<M: ProcessModel>(
    model: &M,
    snap: &Snapshot<M::State>,
    n: usize,
    seeds: &SeedSpec,
    z: f64,
    bound: Option<f64>,
) -> Result<BalancednessReport> {
    let m = model.agents();
    if m > MAX_ENUMERATED_AGENTS {
        return Err(Error::TooLarge { m, max: MAX_ENUMERATED_AGENTS });
    }
    check_samples(n)?;
    let matrices = resample_next(model, snap, n, seeds)?;
    let subsets = (1u64 << m) - 2;
    let mut moments = vec![PairedMoments::default(); subsets as usize];
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(m * m);
    let mut inflow = vec![0.0; subsets as usize];
    let mut outflow = vec![0.0; subsets as usize];
    for w in &matrices {
        entries.clear();
        entries.extend(w.off_diagonal());
        for bits in 1..=subsets {
            let (mut a, mut b) = (0.0, 0.0);
            for &(i, j, v) in &entries {
                let (si, sj) = (bits >> i & 1 == 1, bits >> j & 1 == 1);
                if !si && sj {
                    a += v;
                } else if si && !sj {
                    b += v;
                }
            }
            inflow[bits as usize - 1] = a;
            outflow[bits as usize - 1] = b;
        }
        for s in 0..subsets as usize {
            moments[s].push(inflow[s], outflow[s]);
        }
    }
    let mut records = Vec::with_capacity(subsets as usize);
    let mut alpha_hat = Ratio::Vacuous;
    let mut alpha_lower = f64::INFINITY;
    for (s, pm) in moments.iter().enumerate() {
        let ratio = pm.ratio(z);
        let consistent = bound.is_none_or(|c| ratio.consistent_with_bound(c, z));
        alpha_hat = alpha_hat.min(ratio);
        alpha_lower = alpha_lower.min(ratio.lower(z));
        records.push(SubsetRecord {
            subset: SubsetMask::from_bits(m, s as u64 + 1),
            inflow: pm.first(),
            outflow: pm.second(),
            ratio,
            consistent,
        });
    }
    let all = records.iter().all(|r| r.consistent);
    Ok(BalancednessReport {
        step: snap.step,
        samples: n,
        z,
        verdict: verdict_for(&alpha_hat, bound, all),
        records,
        alpha_hat,
        alpha_lower,
        bound,
    })
}

/// Ordered pair `(i, j)` with `Ê[a_ij]`, `Ê[a_ji]` and their ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub forward: MeanEstimate,
    pub backward: MeanEstimate,
    pub ratio: Ratio,
    pub consistent: bool,
}

/// Entrywise comparison `E[a_ij] >= η E[a_ji]` over all ordered pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EntrywiseReport {
    pub step: u64,
    pub samples: usize,
    pub z: f64,
    pub records: Vec<PairRecord>,
    pub eta_hat: Ratio,
    pub eta_lower: f64,
    pub bound: Option<f64>,
    pub verdict: Verdict,
}

impl EntrywiseReport {
    pub fn violations(&self) -> usize {
        self.records.iter().filter(|r| !r.consistent).count()
    }
}

/// Sub-symmetry implies balancedness with the same coefficient.
pub const SUBSYMMETRY_NOTE: &str = "sub-symmetry with coefficient eta implies balancedness with coefficient eta";

fn entrywise<M, F>(
    model: &M,
    snap: &Snapshot<M::State>,
    n: usize,
    seeds: &SeedSpec,
    z: f64,
    bound: Option<f64>,
    value: F,
) -> Result<EntrywiseReport>
where
    M: ProcessModel,
    F: Fn(usize, usize, f64) -> f64,
{
    check_samples(n)?;
    let m = model.agents();
    let matrices = resample_next(model, snap, n, seeds)?;
    let mut moments = vec![PairedMoments::default(); m * m];
    for w in &matrices {
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let a = value(i, j, w.get(i, j));
                    let b = value(j, i, w.get(j, i));
                    moments[i * m + j].push(a, b);
                }
            }
        }
    }
    let mut records = Vec::with_capacity(m * (m - 1));
    let mut eta_hat = Ratio::Vacuous;
    let mut eta_lower = f64::INFINITY;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let pm = &moments[i * m + j];
            let ratio = pm.ratio(z);
            eta_hat = eta_hat.min(ratio);
            eta_lower = eta_lower.min(ratio.lower(z));
            records.push(PairRecord {
                i,
                j,
                forward: pm.first(),
                backward: pm.second(),
                ratio,
                consistent: bound.is_none_or(|c| ratio.consistent_with_bound(c, z)),
            });
        }
    }
    let all = records.iter().all(|r| r.consistent);
    Ok(EntrywiseReport {
        step: snap.step,
        samples: n,
        z,
        verdict: verdict_for(&eta_hat, bound, all),
        records,
        eta_hat,
        eta_lower,
        bound,
    })
}

/// `E[W_ij(k+1) | F_k] >= η E[W_ji(k+1) | F_k]` for every ordered pair.
pub fn check_subsymmetry<M: ProcessModel>(
    model: &M,
    snap: &Snapshot<M::State>,
    n: usize,
    seeds: &SeedSpec,
    z: f64,
    bound: Option<f64>,
) -> Result<EntrywiseReport> {
    entrywise(model, snap, n, seeds, z, bound, |_, _, w| w)
}

/// Pair-selection reciprocity for gossip-type models:
/// `P(pair = (i, j) | F_k) >= α P(pair = (j, i) | F_k)`.
///
/// A draw in which sender `i` updates receiver `j` shows up as `W_ji > 0`,
/// so record `(i, j)` compares the frequencies of `W_ji > 0` and `W_ij > 0`.
pub fn check_pair_reciprocity<M: ProcessModel>(
    model: &M,
    snap: &Snapshot<M::State>,
    n: usize,
    seeds: &SeedSpec,
    z: f64,
    bound: Option<f64>,
) -> Result<EntrywiseReport> {
    // entry (i, j) of W marks the pair (sender j, receiver i); swap so that
    // record (i, j) is about sender i
    let mut report = entrywise(model, snap, n, seeds, z, bound, |_, _, w| if w > 0.0 { 1.0 } else { 0.0 })?;
    for r in &mut report.records {
        core::mem::swap(&mut r.i, &mut r.j);
    }
    report.records.sort_by_key(|r| (r.i, r.j));
    Ok(report)
}
