//! Trajectory simulation, seeded random streams and snapshot resampling.
//!
//! # Stream derivation
//!
//! A stream label `L` under master seed `s` gets the 32-byte ChaCha8 seed
//!
//! ```text
//! SHA-256( "endodyn/v1" || 0x00 || s as 8 little-endian bytes || L as UTF-8 )
//! ```
//!
//! and `child_seed(L)` is the first 8 bytes of that digest read as a
//! little-endian `u64`. A trajectory for replica `r` draws everything from
//! `traj/<r>`; the `n`-th resampled transition at step `k` uses
//! `resample/<k>/<n>`. A [`SeedSpec`] can carry a namespace, in which case
//! every label is prefixed with `<namespace>/`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{StateVector, StochasticMatrix};
use crate::models::ProcessModel;
use crate::par;
use crate::stats::MeanEstimate;

pub type RandomStream = rand_chacha::ChaCha8Rng;

const DOMAIN: &[u8] = b"endodyn/v1\0";

/// Default cap on `m` for keeping every `W(k)` in a [`Trajectory`].
pub const DEFAULT_RETAIN_THRESHOLD: usize = 64;

/// Master seed plus an optional label namespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    master_seed: u64,
    namespace: Option<String>,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec { master_seed, namespace: None }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn namespace(&self) -> Option<&str> {
        self.namespace.as_deref()
    }

    /// Same master seed, labels prefixed with `ns/` (nested scopes stack).
    pub fn scoped(&self, ns: &str) -> SeedSpec {
        let namespace = match &self.namespace {
            Some(outer) => format!("{outer}/{ns}"),
            None => String::from(ns),
        };
        SeedSpec { master_seed: self.master_seed, namespace: Some(namespace) }
    }

    fn digest(&self, label: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(DOMAIN);
        h.update(self.master_seed.to_le_bytes());
        if let Some(ns) = &self.namespace {
            h.update(ns.as_bytes());
            h.update(b"/");
        }
        h.update(label.as_bytes());
        h.finalize().into()
    }

    pub fn child_seed(&self, label: &str) -> u64 {
        let d = self.digest(label);
        let mut b = [0u8; 8];
        b.copy_from_slice(&d[..8]);
        u64::from_le_bytes(b)
    }

    pub fn child_stream(&self, label: &str) -> RandomStream {
        RandomStream::from_seed(self.digest(label))
    }
}

pub fn child_stream(seeds: &SeedSpec, label: &str) -> RandomStream {
    seeds.child_stream(label)
}

pub fn trajectory_label(replica: usize) -> String {
    format!("traj/{replica}")
}

pub fn resample_label(step: u64, sample: usize) -> String {
    format!("resample/{step}/{sample}")
}

/// Which steps feed the windowed flow accumulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowWindow {
    Full,
    /// `W(k)` for `k > start`.
    After(u64),
    /// The last `fraction` of the run, i.e. `W(k)` for `k > ⌊(1-fraction)·K⌋`.
    TrailingFraction(f64),
}

impl FlowWindow {
    fn start(&self, steps: u64) -> Result<u64> {
        match *self {
            FlowWindow::Full => Ok(0),
            FlowWindow::After(s) => Ok(s),
            FlowWindow::TrailingFraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::param("flow_window", "fraction must lie in (0, 1]"));
                }
                Ok(((1.0 - f) * steps as f64) as u64)
            }
        }
    }
}

/// Running `Σ_k (W_ij(k) + W_ji(k))`, over the whole run and over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAccumulator {
    m: usize,
    total: Vec<f64>,
    window: Vec<f64>,
    window_start: u64,
}

impl FlowAccumulator {
    pub fn new(m: usize, window_start: u64) -> Self {
        FlowAccumulator { m, total: vec![0.0; m * m], window: vec![0.0; m * m], window_start }
    }

    /// Adds `W(step)`.
    pub fn record(&mut self, step: u64, w: &StochasticMatrix) {
        let m = self.m;
        let in_window = step > self.window_start;
        for (i, j, v) in w.off_diagonal() {
            self.total[i * m + j] += v;
            self.total[j * m + i] += v;
            if in_window {
                self.window[i * m + j] += v;
                self.window[j * m + i] += v;
            }
        }
    }

    pub fn agents(&self) -> usize {
        self.m
    }

    /// Row-major `m×m`, symmetric, zero diagonal.
    pub fn total(&self) -> &[f64] {
        &self.total
    }

    pub fn windowed(&self) -> &[f64] {
        &self.window
    }

    pub fn window_start(&self) -> u64 {
        self.window_start
    }
}

/// Position inside a named stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamPosition {
    pub label: String,
    pub word_pos: u128,
}

/// Everything needed to resume a run at step `k`: `x(k)`, the model's
/// internals, the stream position and the flow history.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<S> {
    pub step: u64,
    pub state: StateVector,
    pub model_state: S,
    pub stream: StreamPosition,
    pub flow: FlowAccumulator,
}

impl<S: Clone> Snapshot<S> {
    /// Snapshot of an arbitrary state, with a fresh stream `label` and an
    /// empty flow history. Used for probes at hand-picked states.
    pub fn at<M>(model: &M, step: u64, state: StateVector, label: &str) -> Result<Self>
    where
        M: ProcessModel<State = S>,
    {
        if state.len() != model.agents() {
            return Err(Error::DimensionMismatch { expected: model.agents(), found: state.len() });
        }
        Ok(Snapshot {
            step,
            flow: FlowAccumulator::new(state.len(), 0),
            state,
            model_state: model.clone_state(),
            stream: StreamPosition { label: String::from(label), word_pos: 0 },
        })
    }

    /// Restores `model` and returns the stream positioned as at capture.
    pub fn restore<M>(&self, model: &mut M, seeds: &SeedSpec) -> RandomStream
    where
        M: ProcessModel<State = S>,
    {
        model.restore_state(&self.model_state);
        let mut rng = seeds.child_stream(&self.stream.label);
        rng.set_word_pos(self.stream.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoints {
    None,
    Every(u64),
    At(Vec<u64>),
}

impl Checkpoints {
    fn wants(&self, k: u64) -> bool {
        match self {
            Checkpoints::None => false,
            Checkpoints::Every(p) => *p > 0 && k.is_multiple_of(*p),
            Checkpoints::At(ks) => ks.contains(&k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub replica: usize,
    /// Keep every `W(k)` when `m <= retain_threshold`.
    pub retain_threshold: usize,
    pub checkpoints: Checkpoints,
    pub flow_window: FlowWindow,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            replica: 0,
            retain_threshold: DEFAULT_RETAIN_THRESHOLD,
            checkpoints: Checkpoints::None,
            flow_window: FlowWindow::TrailingFraction(0.5),
        }
    }
}

/// Recorded run `x(0), …, x(K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    start_step: u64,
    states: Vec<StateVector>,
    matrices: Option<Vec<StochasticMatrix>>,
    snapshots: Vec<Snapshot<S>>,
    flow: FlowAccumulator,
}

impl<S> Trajectory<S> {
    /// Step index of the first recorded state (0 unless resumed).
    pub fn start_step(&self) -> u64 {
        self.start_step
    }

    /// Number of transitions recorded.
    pub fn steps(&self) -> u64 {
        self.states.len() as u64 - 1
    }

    pub fn agents(&self) -> usize {
        self.flow.m
    }

    /// `x(start_step + i)` for `i = 0..=steps`.
    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn state(&self, k: u64) -> Option<&StateVector> {
        k.checked_sub(self.start_step).and_then(|i| self.states.get(i as usize))
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.states[0]
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory holds at least one state")
    }

    /// `W(start_step + 1), …` when retained.
    pub fn matrices(&self) -> Option<&[StochasticMatrix]> {
        self.matrices.as_deref()
    }

    pub fn snapshots(&self) -> &[Snapshot<S>] {
        &self.snapshots
    }

    pub fn snapshot_at(&self, k: u64) -> Option<&Snapshot<S>> {
        self.snapshots.iter().find(|s| s.step == k)
    }

    pub fn flow(&self) -> &FlowAccumulator {
        &self.flow
    }

    pub fn into_states(self) -> Vec<StateVector> {
        self.states
    }
}

/// `K` steps from `x0` with default options (replica 0).
pub fn simulate<M: ProcessModel>(
    model: &M,
    x0: &StateVector,
    steps: u64,
    seeds: &SeedSpec,
) -> Result<Trajectory<M::State>> {
    simulate_with(model, x0, steps, seeds, &SimulateOptions::default())
}

pub fn simulate_with<M: ProcessModel>(
    model: &M,
    x0: &StateVector,
    steps: u64,
    seeds: &SeedSpec,
    options: &SimulateOptions,
) -> Result<Trajectory<M::State>> {
    if x0.len() != model.agents() {
        return Err(Error::DimensionMismatch { expected: model.agents(), found: x0.len() });
    }
    let label = trajectory_label(options.replica);
    let window_start = options.flow_window.start(steps)?;
    let start = Snapshot {
        step: 0,
        state: x0.clone(),
        model_state: model.clone_state(),
        stream: StreamPosition { label, word_pos: 0 },
        flow: FlowAccumulator::new(x0.len(), window_start),
    };
    run(model.clone(), &start, steps, seeds, options)
}

/// Resumes from `snap` with its original stream for `steps` more steps.
/// Replaying a snapshot taken from a run reproduces that run bit-for-bit.
pub fn simulate_from<M: ProcessModel>(
    model: &M,
    snap: &Snapshot<M::State>,
    steps: u64,
    seeds: &SeedSpec,
    options: &SimulateOptions,
) -> Result<Trajectory<M::State>> {
    run(model.clone(), snap, steps, seeds, options)
}

fn run<M: ProcessModel>(
    mut model: M,
    start: &Snapshot<M::State>,
    steps: u64,
    seeds: &SeedSpec,
    options: &SimulateOptions,
) -> Result<Trajectory<M::State>> {
    if steps == 0 {
        return Err(Error::param("steps", "must be at least 1"));
    }
    let m = start.state.len();
    let mut rng = start.restore(&mut model, seeds);
    let mut flow = start.flow.clone();
    let mut states = Vec::with_capacity(steps as usize + 1);
    let mut matrices = (m <= options.retain_threshold).then(|| Vec::with_capacity(steps as usize));
    let mut snapshots = Vec::new();
    let mut x = start.state.clone();
    let mut buf = vec![0.0; m];
    for k in start.step..start.step + steps {
        if options.checkpoints.wants(k) {
            snapshots.push(Snapshot {
                step: k,
                state: x.clone(),
                model_state: model.clone_state(),
                stream: StreamPosition { label: start.stream.label.clone(), word_pos: rng.get_word_pos() },
                flow: flow.clone(),
            });
        }
        let w = model.sample_next(k, &x, &mut rng)?;
        if w.agents() != m {
            return Err(Error::DimensionMismatch { expected: m, found: w.agents() });
        }
        w.apply_into(x.as_slice(), &mut buf);
        flow.record(k + 1, &w);
        states.push(core::mem::replace(&mut x, StateVector::from_trusted(buf.clone())));
        if let Some(ms) = matrices.as_mut() {
            ms.push(w);
        }
    }
    let end = start.step + steps;
    if options.checkpoints.wants(end) {
        snapshots.push(Snapshot {
            step: end,
            state: x.clone(),
            model_state: model.clone_state(),
            stream: StreamPosition { label: start.stream.label.clone(), word_pos: rng.get_word_pos() },
            flow: flow.clone(),
        });
    }
    states.push(x);
    Ok(Trajectory { start_step: start.step, states, matrices, snapshots, flow })
}

/// Independent replicas `0..x0s.len()`, each with its own stream.
pub fn simulate_replicas<M: ProcessModel>(
    model: &M,
    x0s: &[StateVector],
    steps: u64,
    seeds: &SeedSpec,
    options: &SimulateOptions,
) -> Result<Vec<Trajectory<M::State>>> {
    par::try_map_indexed(x0s.len(), |r| {
        let opts = SimulateOptions { replica: r, ..options.clone() };
        simulate_with(model, &x0s[r], steps, seeds, &opts)
    })
}

/// Runs `f` on `n` fresh restores of `snap`; sample `i` gets its own model
/// clone and the stream `resample/<k>/<i>`. Results come back in sample
/// order and `snap` is untouched.
pub fn resample_with<M, T, F>(model: &M, snap: &Snapshot<M::State>, n: usize, seeds: &SeedSpec, f: F) -> Result<Vec<T>>
where
    M: ProcessModel,
    T: Send,
    F: Fn(usize, &mut M, &StateVector, &mut RandomStream) -> Result<T> + Sync + Send,
{
    if n == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    par::try_map_indexed(n, |i| {
        let mut local = model.clone();
        local.restore_state(&snap.model_state);
        let mut rng = seeds.child_stream(&resample_label(snap.step, i));
        f(i, &mut local, &snap.state, &mut rng)
    })
}

/// `N` independent draws of `W(k+1)` given `snap`.
pub fn resample_next<M: ProcessModel>(
    model: &M,
    snap: &Snapshot<M::State>,
    n: usize,
    seeds: &SeedSpec,
) -> Result<Vec<StochasticMatrix>> {
    resample_with(model, snap, n, seeds, |_, m, x, rng| m.sample_next(snap.step, x, rng))
}

/// One resampled transition together with the post-step snapshot data.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub matrix: StochasticMatrix,
    pub next_state: StateVector,
    pub next_model_state: S,
}

pub fn resample_transitions<M: ProcessModel>(
    model: &M,
    snap: &Snapshot<M::State>,
    n: usize,
    seeds: &SeedSpec,
) -> Result<Vec<Transition<M::State>>> {
    resample_with(model, snap, n, seeds, |_, m, x, rng| {
        let w = m.sample_next(snap.step, x, rng)?;
        let next_state = w.apply(x)?;
        Ok(Transition { matrix: w, next_state, next_model_state: m.clone_state() })
    })
}

/// Monte-Carlo `E[f(W(k+1)) | snap]` with standard error `s/√N`.
pub fn conditional_mean<M, F>(
    model: &M,
    snap: &Snapshot<M::State>,
    n: usize,
    seeds: &SeedSpec,
    f: F,
) -> Result<MeanEstimate>
where
    M: ProcessModel,
    F: Fn(&StochasticMatrix) -> f64 + Sync + Send,
{
    let values = resample_with(model, snap, n, seeds, |_, m, x, rng| Ok(f(&m.sample_next(snap.step, x, rng)?)))?;
    Ok(MeanEstimate::from_samples(&values))
}
