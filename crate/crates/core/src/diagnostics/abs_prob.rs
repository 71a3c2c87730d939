//! Absolute probability estimates `π̄(k)` from truncated backward products.
//!
//! `π̄ᵀ(k) ≈ E[(1/m) 1ᵀ W(k+T)⋯W(k+1) | F_k]`. If the products converge,
//! the tower property gives `E[π̄ᵀ(k+1) W(k+1) | F_k] = π̄ᵀ(k)` up to the
//! truncation error, which is what [`IdentityReport`] measures.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{resample_transitions, resample_with, FlowAccumulator, SeedSpec, Snapshot, StreamPosition};
use crate::error::{Error, Result};
use crate::linalg::StateVector;
use crate::math;
use crate::models::ProcessModel;
use crate::stats::MeanEstimate;

use super::martingale::{increment_ok, ConvexFn, Direction, MartingaleRecord, MartingaleReport};
use super::{probe_name, probe_seeds, scope};

/// Floor on the futures run from each distinct one-step outcome.
pub const MIN_INNER_SAMPLES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct AbsProbEstimate {
    pub step: u64,
    pub horizon: u64,
    pub samples: usize,
    pub pi_bar: Vec<f64>,
    pub se: Vec<f64>,
    /// Mean max column spread of the backward product at `⌊T/2⌋`.
    pub spread_half: f64,
    /// Same at `T`. Much smaller than `spread_half` suggests the truncation
    /// has settled.
    pub spread_full: f64,
}

impl AbsProbEstimate {
    pub fn sum(&self) -> f64 {
        self.pi_bar.iter().sum()
    }
}

/// Column averages and column spread of one backward product per recorded
/// horizon.
struct Future {
    pis: Vec<Vec<f64>>,
    spreads: Vec<f64>,
}

fn column_stats(p: &[f64], m: usize) -> (Vec<f64>, f64) {
    let mut avg = vec![0.0; m];
    let mut spread: f64 = 0.0;
    for j in 0..m {
        let (mut lo, mut hi, mut s) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for i in 0..m {
            let v = p[i * m + j];
            s += v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        avg[j] = s / m as f64;
        spread = spread.max(hi - lo);
    }
    (avg, spread)
}

/// `n` futures from `snap`, each recording at every horizon in `marks`
/// (ascending, may include 0).
fn run_futures<M: ProcessModel>(
    model: &M,
    snap: &Snapshot<M::State>,
    marks: &[u64],
    n: usize,
    seeds: &SeedSpec,
) -> Result<Vec<Future>> {
    let m = snap.state.len();
    let t_max = marks.last().copied().unwrap_or(0);
    resample_with(model, snap, n, seeds, |_, model, x0, rng| {
        let mut p = vec![0.0; m * m];
        (0..m).for_each(|i| p[i * m + i] = 1.0);
        let mut scratch = vec![0.0; m * m];
        let mut x = x0.as_slice().to_vec();
        let mut xbuf = vec![0.0; m];
        let mut out = Future { pis: Vec::with_capacity(marks.len()), spreads: Vec::with_capacity(marks.len()) };
        let mut next_mark = 0;
        let record = |p: &[f64], out: &mut Future, next_mark: &mut usize, t: u64| {
            while *next_mark < marks.len() && marks[*next_mark] == t {
                let (avg, spread) = column_stats(p, m);
                out.pis.push(avg);
                out.spreads.push(spread);
                *next_mark += 1;
            }
        };
        record(&p, &mut out, &mut next_mark, 0);
        let mut state = StateVector::from_trusted(x.clone());
        for t in 1..=t_max {
            let w = model.sample_next(snap.step + t - 1, &state, rng)?;
            w.apply_into(&x, &mut xbuf);
            core::mem::swap(&mut x, &mut xbuf);
            w.left_mul_into(&p, &mut scratch);
            core::mem::swap(&mut p, &mut scratch);
            record(&p, &mut out, &mut next_mark, t);
            if t < t_max {
                state = StateVector::from_trusted(x.clone());
            }
        }
        Ok(out)
    })
}

fn marks_for(horizons: &[u64]) -> Vec<u64> {
    let mut marks: Vec<u64> = horizons.iter().flat_map(|&h| [h / 2, h]).collect();
    marks.sort_unstable();
    marks.dedup();
    marks
}

fn mark_index(marks: &[u64], h: u64) -> usize {
    marks.binary_search(&h).expect("horizon is among the marks")
}

fn summarize(step: u64, futures: &[Future], marks: &[u64], h: u64, m: usize) -> AbsProbEstimate {
    let (ih, ihalf) = (mark_index(marks, h), mark_index(marks, h / 2));
    let mut pi_bar = vec![0.0; m];
    let mut se = vec![0.0; m];
    for j in 0..m {
        let col: Vec<f64> = futures.iter().map(|f| f.pis[ih][j]).collect();
        let e = MeanEstimate::from_samples(&col);
        pi_bar[j] = e.mean;
        se[j] = e.se;
    }
    let n = futures.len() as f64;
    AbsProbEstimate {
        step,
        horizon: h,
        samples: futures.len(),
        pi_bar,
        se,
        spread_half: futures.iter().map(|f| f.spreads[ihalf]).sum::<f64>() / n,
        spread_full: futures.iter().map(|f| f.spreads[ih]).sum::<f64>() / n,
    }
}

fn check_horizons(horizons: &[u64], n: usize) -> Result<()> {
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::param("horizon", "every horizon must be at least 1"));
    }
    if n == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    Ok(())
}

/// `π̄(k)` at horizon `T` from `n` resampled futures.
pub fn estimate_abs_prob<M: ProcessModel>(
    model: &M,
    snap: &Snapshot<M::State>,
    horizon: u64,
    n: usize,
    seeds: &SeedSpec,
) -> Result<AbsProbEstimate> {
    Ok(estimate_abs_prob_horizons(model, snap, &[horizon], n, seeds)?.remove(0))
}

/// Several horizons read off the same futures.
pub fn estimate_abs_prob_horizons<M: ProcessModel>(
    model: &M,
    snap: &Snapshot<M::State>,
    horizons: &[u64],
    n: usize,
    seeds: &SeedSpec,
) -> Result<Vec<AbsProbEstimate>> {
    check_horizons(horizons, n)?;
    let marks = marks_for(horizons);
    let futures = run_futures(model, snap, &marks, n, seeds)?;
    Ok(horizons.iter().map(|&h| summarize(snap.step, &futures, &marks, h, snap.state.len())).collect())
}

/// Jensen gap `Σ π_i (g(x_i) - g(x̄))` with `x̄ = Σ π_i x_i` kept inside the
/// envelope of `x`, so a consensus state gives exactly zero.
fn jensen_gap(g: ConvexFn, pi: &[f64], x: &[f64]) -> f64 {
    let total: f64 = pi.iter().sum();
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mean = (pi.iter().zip(x).map(|(p, v)| p * v).sum::<f64>() / total).clamp(lo, hi);
    let gm = g.eval(mean);
    pi.iter().zip(x).map(|(p, v)| p / total * (g.eval(*v) - gm)).sum()
}

/// Delta-method SE of the plug-in Jensen gap at the mean of `samples`.
fn jensen_se(g: ConvexFn, pi_bar: &[f64], x: &[f64], samples: impl Iterator<Item = Vec<f64>> + Clone) -> f64 {
    let mean: f64 = pi_bar.iter().zip(x).map(|(p, v)| p * v).sum();
    let d = g.derivative(mean);
    let grad: Vec<f64> = x.iter().map(|v| g.eval(*v) - d * v).collect();
    let proj: Vec<f64> = samples.map(|pi| pi.iter().zip(&grad).map(|(p, q)| p * q).sum()).collect();
    MeanEstimate::from_samples(&proj).se
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub horizons: Vec<u64>,
    /// Futures used for `π̄(k)`.
    pub samples: usize,
    /// One-step draws of `W(k+1)`.
    pub outer_samples: usize,
    /// Futures for `π̄(k+1)`, shared among the distinct post-step outcomes
    /// in proportion to their frequency, with at least
    /// [`MIN_INNER_SAMPLES`] per outcome.
    pub inner_samples: usize,
    pub z: f64,
    pub g: ConvexFn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRecord {
    pub probe: usize,
    pub step: u64,
    pub horizon: u64,
    /// `‖Ê[π̄ᵀ(k+1) W(k+1) | F_k] - π̄ᵀ(k)‖∞`.
    pub residual: f64,
    /// Combined SE of the entry attaining the max.
    pub residual_se: f64,
    pub argmax: usize,
    pub pi_bar: AbsProbEstimate,
    /// Distinct post-step outcomes among the one-step draws.
    pub outcomes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub horizon: u64,
    pub records: Vec<IdentityRecord>,
    pub max_residual: f64,
    pub max_residual_se: f64,
}

/// One Lyapunov report and one identity report per horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsProbStudy {
    pub lyapunov: Vec<MartingaleReport>,
    pub identity: Vec<IdentityReport>,
    pub g_verified: bool,
}

struct Outcome<S> {
    matrix: crate::linalg::StochasticMatrix,
    state: StateVector,
    model_state: S,
    count: usize,
}

fn outcome_key(w: &crate::linalg::StochasticMatrix, x: &StateVector) -> Vec<u64> {
    w.as_slice().iter().chain(x.as_slice()).map(|v| v.to_bits()).collect()
}

/// Estimates `π̄(k)`, the conditional mean of the Jensen-gap Lyapunov value
/// one step ahead, and the absolute-probability identity residual at every
/// probe and horizon.
///
/// The one-step draws are grouped into distinct outcomes
/// `(W(k+1), x(k+1), model state)`; `π̄(k+1)` is estimated once per outcome.
/// The combined SE of an increment adds the outer one-step variance, the
/// inner `π̄(k+1)` SEs weighted by outcome frequency, and the SE of `V_k`.
pub fn absolute_probability_study<M: ProcessModel>(
    model: &M,
    probes: &[Snapshot<M::State>],
    opts: &StudyOptions,
    seeds: &SeedSpec,
) -> Result<AbsProbStudy> {
    check_horizons(&opts.horizons, opts.samples.min(opts.outer_samples).min(opts.inner_samples))?;
    let marks = marks_for(&opts.horizons);
    let nh = opts.horizons.len();
    let mut lyap: Vec<Vec<MartingaleRecord>> = vec![Vec::new(); nh];
    let mut min_value = vec![f64::INFINITY; nh];
    let mut identity: Vec<Vec<IdentityRecord>> = vec![Vec::new(); nh];
    let g = opts.g;
    for (p, snap) in probes.iter().enumerate() {
        let m = snap.state.len();
        let ps = probe_seeds(seeds, p);
        let now = run_futures(model, snap, &marks, opts.samples, &scope(&ps, "now"))?;
        let draws = resample_transitions(model, snap, opts.outer_samples, &scope(&ps, "step"))?;

        let mut outcomes: Vec<Outcome<M::State>> = Vec::new();
        let mut index: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
        let mut which = Vec::with_capacity(draws.len());
        for d in draws {
            let bucket = index.entry(outcome_key(&d.matrix, &d.next_state)).or_default();
            match bucket.iter().copied().find(|&o| outcomes[o].model_state == d.next_model_state) {
                Some(o) => {
                    outcomes[o].count += 1;
                    which.push(o);
                }
                None => {
                    bucket.push(outcomes.len());
                    which.push(outcomes.len());
                    outcomes.push(Outcome {
                        matrix: d.matrix,
                        state: d.next_state,
                        model_state: d.next_model_state,
                        count: 1,
                    });
                }
            }
        }
        let nout = opts.outer_samples as f64;
        let mut after: Vec<Vec<Future>> = Vec::with_capacity(outcomes.len());
        for (o, out) in outcomes.iter().enumerate() {
            let snap_o = Snapshot {
                step: snap.step + 1,
                state: out.state.clone(),
                model_state: out.model_state.clone(),
                stream: StreamPosition { label: snap.stream.label.clone(), word_pos: 0 },
                flow: FlowAccumulator::new(m, 0),
            };
            // the inner budget is shared in proportion to outcome frequency
            let share = (opts.inner_samples * out.count).div_ceil(opts.outer_samples);
            let n_o = share.max(opts.inner_samples.min(MIN_INNER_SAMPLES));
            after.push(run_futures(model, &snap_o, &marks, n_o, &scope(&ps, &format!("next/{o}")))?);
        }

        for (hi, &h) in opts.horizons.iter().enumerate() {
            let ih = mark_index(&marks, h);
            let est = summarize(snap.step, &now, &marks, h, m);
            let x = snap.state.as_slice();
            let v_now = jensen_gap(g, &est.pi_bar, x);
            let v_now_se = jensen_se(g, &est.pi_bar, x, now.iter().map(|f| f.pis[ih].clone()));

            // per outcome: π̄(k+1), V(k+1), π̄ᵀ(k+1) W(k+1)
            let mut v_next = Vec::with_capacity(outcomes.len());
            let mut v_next_se2 = 0.0;
            let mut pushed = Vec::with_capacity(outcomes.len());
            let mut pushed_var = vec![0.0; m];
            for (out, fut) in outcomes.iter().zip(&after) {
                let e = summarize(snap.step + 1, fut, &marks, h, m);
                let xo = out.state.as_slice();
                let v = jensen_gap(g, &e.pi_bar, xo);
                let f = out.count as f64 / nout;
                let se = jensen_se(g, &e.pi_bar, xo, fut.iter().map(|f| f.pis[ih].clone()));
                v_next_se2 += f * f * se * se;
                min_value[hi] = min_value[hi].min(v);
                v_next.push(v);
                let w = &out.matrix;
                let row_times =
                    |pi: &[f64]| -> Vec<f64> { (0..m).map(|j| (0..m).map(|i| pi[i] * w.get(i, j)).sum()).collect() };
                let per_future: Vec<Vec<f64>> = fut.iter().map(|f| row_times(&f.pis[ih])).collect();
                for j in 0..m {
                    let col: Vec<f64> = per_future.iter().map(|v| v[j]).collect();
                    let s = MeanEstimate::from_samples(&col).se;
                    pushed_var[j] += f * f * s * s;
                }
                pushed.push(row_times(&e.pi_bar));
            }
            let outer_v: Vec<f64> = which.iter().map(|&o| v_next[o]).collect();
            let outer = MeanEstimate::from_samples(&outer_v);
            let next_se = math::sqrt(outer.se * outer.se + v_next_se2);
            let inc = outer.mean - v_now;
            let inc_se = math::sqrt(next_se * next_se + v_now_se * v_now_se);
            min_value[hi] = min_value[hi].min(v_now);
            lyap[hi].push(MartingaleRecord {
                probe: p,
                step: snap.step,
                label: probe_name(&snap.stream.label, snap.step),
                ell: None,
                current: MeanEstimate { mean: v_now, se: v_now_se, n: opts.samples },
                next: MeanEstimate { mean: outer.mean, se: next_se, n: opts.outer_samples },
                increment: inc,
                increment_se: inc_se,
                consistent: increment_ok(Direction::Super, inc, inc_se, opts.z),
            });

            let (mut residual, mut residual_se, mut argmax) = (-1.0, 0.0, 0);
            for j in 0..m {
                let col: Vec<f64> = which.iter().map(|&o| pushed[o][j]).collect();
                let e = MeanEstimate::from_samples(&col);
                let r = math::abs(e.mean - est.pi_bar[j]);
                if r > residual {
                    residual = r;
                    argmax = j;
                    residual_se = math::sqrt(e.se * e.se + pushed_var[j] + est.se[j] * est.se[j]);
                }
            }
            identity[hi].push(IdentityRecord {
                probe: p,
                step: snap.step,
                horizon: h,
                residual,
                residual_se,
                argmax,
                pi_bar: est,
                outcomes: outcomes.len(),
            });
        }
    }
    let lyapunov = lyap
        .into_iter()
        .zip(&min_value)
        .map(|(records, &mv)| MartingaleReport::new(Direction::Super, opts.z, opts.samples, records, mv))
        .collect();
    let identity = identity
        .into_iter()
        .zip(&opts.horizons)
        .map(|(records, &h)| {
            let worst = records.iter().fold(None::<&IdentityRecord>, |acc, r| match acc {
                Some(a) if a.residual >= r.residual => Some(a),
                _ => Some(r),
            });
            let (max_residual, max_residual_se) = worst.map_or((0.0, 0.0), |r| (r.residual, r.residual_se));
            IdentityReport { horizon: h, records, max_residual, max_residual_se }
        })
        .collect();
    Ok(AbsProbStudy { lyapunov, identity, g_verified: g.is_verified() })
}
