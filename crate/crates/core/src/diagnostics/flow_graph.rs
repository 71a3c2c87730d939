use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{FlowAccumulator, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{ordering, StateVector};

use super::convergence::ordering_convergence;

/// Which flow sum a graph is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowSource {
    /// Every step of the run.
    Total,
    /// Only the accumulator's trailing window.
    Window,
}

/// Finite-horizon stand-in for the infinite flow graph: `{i, j}` is an edge
/// when the accumulated symmetric flow reaches `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    m: usize,
    accumulated: Vec<f64>,
    horizon: u64,
    tau: f64,
}

impl FlowGraph {
    pub fn new(m: usize, accumulated: Vec<f64>, horizon: u64, tau: f64) -> Result<Self> {
        if accumulated.len() != m * m {
            return Err(Error::DimensionMismatch { expected: m * m, found: accumulated.len() });
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::param("tau", "must be positive and finite"));
        }
        for i in 0..m {
            for j in 0..m {
                let v = accumulated[i * m + j];
                if !(v >= 0.0) || v != accumulated[j * m + i] {
                    return Err(Error::param("accumulated", "must be symmetric and nonnegative"));
                }
            }
        }
        Ok(FlowGraph { m, accumulated, horizon, tau })
    }

    pub fn from_accumulator(acc: &FlowAccumulator, source: FlowSource, horizon: u64, tau: f64) -> Result<Self> {
        let data = match source {
            FlowSource::Total => acc.total(),
            FlowSource::Window => acc.windowed(),
        };
        FlowGraph::new(acc.agents(), data.to_vec(), horizon, tau)
    }

    pub fn agents(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn accumulated(&self, i: usize, j: usize) -> f64 {
        self.accumulated[i * self.m + j]
    }

    /// Same accumulator, different threshold.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        FlowGraph::new(self.m, self.accumulated.clone(), self.horizon, tau)
    }

    /// Edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.m;
        (0..m)
            .flat_map(move |i| (i + 1..m).map(move |j| (i, j)))
            .filter(move |&(i, j)| self.accumulated(i, j) >= self.tau)
    }
}

/// Graph over the trajectory's windowed accumulator at threshold `τ`.
pub fn flow_graph<S>(traj: &Trajectory<S>, tau: f64) -> Result<FlowGraph> {
    FlowGraph::from_accumulator(traj.flow(), FlowSource::Window, traj.start_step() + traj.steps(), tau)
}

/// Partition of the agents into disjoint blocks, kept in canonical form:
/// each block ascending, blocks ordered by their smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    blocks: Vec<Vec<usize>>,
}

impl ClusterPartition {
    /// Builds from per-agent labels; agents sharing a label share a block.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut seen: Vec<(usize, usize)> = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            match seen.iter().find(|(lab, _)| *lab == l) {
                Some(&(_, b)) => blocks[b].push(i),
                None => {
                    seen.push((l, blocks.len()));
                    blocks.push(vec![i]);
                }
            }
        }
        ClusterPartition { blocks }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn agents(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Block index of every agent.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.agents()];
        for (b, block) in self.blocks.iter().enumerate() {
            block.iter().for_each(|&i| out[i] = b);
        }
        out
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            core::cmp::Ordering::Less => self.parent[ra] = rb,
            core::cmp::Ordering::Greater => self.parent[rb] = ra,
            core::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Connected components of the thresholded graph.
pub fn components(graph: &FlowGraph) -> ClusterPartition {
    let mut uf = UnionFind::new(graph.m);
    graph.edges().for_each(|(i, j)| uf.union(i, j));
    let labels: Vec<usize> = (0..graph.m).map(|i| uf.find(i)).collect();
    ClusterPartition::from_labels(&labels)
}

/// Single-linkage clusters at `tol`: neighbours in sorted order whose gap is
/// at most `tol` share a block.
pub fn consensus_clusters(x: &StateVector, tol: f64) -> Result<ClusterPartition> {
    if !(tol >= 0.0) {
        return Err(Error::param("tol_cluster", "must be nonnegative"));
    }
    let z = ordering(x);
    let mut labels = vec![0; x.len()];
    let mut block = 0;
    for p in 0..z.len() {
        if p > 0 && z.sorted[p] - z.sorted[p - 1] > tol {
            block += 1;
        }
        labels[z.permutation[p]] = block;
    }
    Ok(ClusterPartition::from_labels(&labels))
}

/// Clusters of the final state, provided the ordering has settled.
pub fn converged_clusters<S>(
    traj: &Trajectory<S>,
    window: usize,
    drift_tol: f64,
    tol_cluster: f64,
) -> Result<ClusterPartition> {
    let conv = ordering_convergence(traj, window, drift_tol)?;
    if conv.ordering_converged_at.is_none() {
        return Err(Error::NotConverged { drift: conv.trailing_ordering_drift, tol: drift_tol });
    }
    consensus_clusters(traj.final_state(), tol_cluster)
}

/// Pairwise comparison of two partitions of the same agent set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionComparison {
    Equal,
    /// The first partition splits blocks of the second.
    FirstRefinesSecond,
    SecondRefinesFirst,
    Mismatch {
        /// Pairs together in the first partition only.
        only_first: Vec<(usize, usize)>,
        /// Pairs together in the second partition only.
        only_second: Vec<(usize, usize)>,
    },
}

impl PartitionComparison {
    pub fn is_equal(&self) -> bool {
        matches!(self, PartitionComparison::Equal)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PartitionComparison::Equal => "equal",
            PartitionComparison::FirstRefinesSecond => "first_refines_second",
            PartitionComparison::SecondRefinesFirst => "second_refines_first",
            PartitionComparison::Mismatch { .. } => "mismatch",
        }
    }
}

pub fn compare_partitions(a: &ClusterPartition, b: &ClusterPartition) -> Result<PartitionComparison> {
    let (la, lb) = (a.labels(), b.labels());
    if la.len() != lb.len() {
        return Err(Error::DimensionMismatch { expected: la.len(), found: lb.len() });
    }
    let mut only_first = Vec::new();
    let mut only_second = Vec::new();
    for i in 0..la.len() {
        for j in i + 1..la.len() {
            match (la[i] == la[j], lb[i] == lb[j]) {
                (true, false) => only_first.push((i, j)),
                (false, true) => only_second.push((i, j)),
                _ => {}
            }
        }
    }
    Ok(match (only_first.is_empty(), only_second.is_empty()) {
        (true, true) => PartitionComparison::Equal,
        (true, false) => PartitionComparison::FirstRefinesSecond,
        (false, true) => PartitionComparison::SecondRefinesFirst,
        (false, false) => PartitionComparison::Mismatch { only_first, only_second },
    })
}
