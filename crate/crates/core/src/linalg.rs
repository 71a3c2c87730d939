//! Deterministic primitives: stochastic matrices, opinion profiles, agent
//! subsets, orderings and the subset-flow / `V_ℓ` functionals.
//!
//! Indices are 0-based throughout the library. Reports produced by the CLI
//! shift them to 1-based.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp;
use core::ops::Index;

use crate::error::{Error, Result};
use crate::math;

/// Absolute tolerance on row sums used by every model.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Largest agent count for which nontrivial subsets are enumerated.
pub const MAX_ENUMERATED_AGENTS: usize = 20;

/// A validated `m×m` row-stochastic matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    m: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    /// Validates a matrix given as rows. See [`validate_stochastic`].
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], tol: f64) -> Result<Self> {
        let m = rows.len();
        let mut data = Vec::with_capacity(m * m);
        for row in rows {
            let row = row.as_ref();
            if row.len() != m {
                return Err(Error::NotSquare { rows: m, cols: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(m, data, tol)
    }

    /// Validates a row-major buffer of length `m*m`.
    ///
    /// Entries in `[-tol, 0)` are clamped to zero and each row is divided by
    /// its sum, which is only accepted when it lies within `tol` of one.
    pub fn from_flat(m: usize, mut data: Vec<f64>, tol: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidAgentCount(m));
        }
        if data.len() != m * m {
            return Err(Error::DimensionMismatch { expected: m * m, found: data.len() });
        }
        if !(tol >= 0.0) {
            return Err(Error::param("tol", "must be a nonnegative number"));
        }
        for (row, chunk) in data.chunks_exact_mut(m).enumerate() {
            let mut sum = 0.0;
            for (col, v) in chunk.iter_mut().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite);
                }
                if *v < -tol {
                    return Err(Error::NegativeEntry { row, col, value: *v });
                }
                if *v < 0.0 {
                    *v = 0.0;
                }
                sum += *v;
            }
            if math::abs(sum - 1.0) > tol {
                return Err(Error::RowSumViolation { row, sum });
            }
            if sum != 1.0 {
                chunk.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Ok(StochasticMatrix { m, data })
    }

    /// Builds a matrix that is stochastic by construction. Debug builds still
    /// check it.
    pub(crate) fn from_raw(m: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), m * m);
        debug_assert!(data
            .chunks_exact(m)
            .all(|r| { r.iter().all(|v| *v >= 0.0) && math::abs(r.iter().sum::<f64>() - 1.0) <= ROW_SUM_TOL }));
        StochasticMatrix { m, data }
    }

    pub fn identity(m: usize) -> Self {
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            data[i * m + i] = 1.0;
        }
        StochasticMatrix { m, data }
    }

    /// Every entry equal to `1/m`.
    pub fn uniform(m: usize) -> Self {
        StochasticMatrix { m, data: vec![1.0 / m as f64; m * m] }
    }

    pub fn agents(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.m)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.m).map(|i| self.get(i, i)).fold(f64::INFINITY, f64::min)
    }

    /// True when row `i` is exactly the unit row `e_i`.
    pub fn is_identity_row(&self, i: usize) -> bool {
        let row = self.row(i);
        row[i] == 1.0 && row.iter().enumerate().all(|(j, v)| j == i || *v == 0.0)
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        (0..self.m).all(|j| {
            let col: f64 = (0..self.m).map(|i| self.get(i, j)).sum();
            math::abs(col - 1.0) <= tol
        })
    }

    /// Nonzero off-diagonal entries as `(row, col, weight)`.
    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.data.iter().enumerate().filter_map(move |(idx, &w)| {
            let (i, j) = (idx / self.m, idx % self.m);
            (i != j && w != 0.0).then_some((i, j, w))
        })
    }

    /// Writes `W x` into `out`.
    ///
    /// Each coordinate is computed as `x_i + Σ_j W_ij (x_j - x_i)` and clamped
    /// to `[min x, max x]`, so consensus vectors and identity rows are fixed
    /// points bit-for-bit.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert!(x.len() == self.m && out.len() == self.m);
        let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        for (i, o) in out.iter_mut().enumerate() {
            let xi = x[i];
            let row = self.row(i);
            let mut acc = 0.0;
            for (j, &w) in row.iter().enumerate() {
                if j != i && w != 0.0 {
                    acc += w * (x[j] - xi);
                }
            }
            *o = (xi + acc).clamp(lo, hi);
        }
    }

    pub fn apply(&self, x: &StateVector) -> Result<StateVector> {
        apply(self, x)
    }

    /// Writes the row-major product `self · p` into `out`, copying rows of `p`
    /// where `self` has identity rows.
    pub fn left_mul_into(&self, p: &[f64], out: &mut [f64]) {
        let m = self.m;
        debug_assert!(p.len() == m * m && out.len() == m * m);
        for i in 0..m {
            let dst = &mut out[i * m..(i + 1) * m];
            if self.is_identity_row(i) {
                dst.copy_from_slice(&p[i * m..(i + 1) * m]);
                continue;
            }
            dst.iter_mut().for_each(|v| *v = 0.0);
            for (l, &w) in self.row(i).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (d, &pv) in dst.iter_mut().zip(&p[l * m..(l + 1) * m]) {
                    *d += w * pv;
                }
            }
        }
    }

    /// `self · p`, the product applied after `p`.
    pub fn compose(&self, p: &StochasticMatrix) -> Result<StochasticMatrix> {
        if p.m != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, found: p.m });
        }
        let mut out = vec![0.0; self.m * self.m];
        self.left_mul_into(&p.data, &mut out);
        Ok(StochasticMatrix { m: self.m, data: out })
    }
}

/// Validates a square array as a row-stochastic matrix within `tol`.
pub fn validate_stochastic<R: AsRef<[f64]>>(raw: &[R], tol: f64) -> Result<StochasticMatrix> {
    StochasticMatrix::from_rows(raw, tol)
}

/// An opinion profile with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(StateVector(values))
    }

    pub fn constant(m: usize, c: f64) -> Self {
        assert!(c.is_finite());
        StateVector(vec![c; m])
    }

    /// `m` points evenly spaced on `[lo, hi]`, endpoints included.
    pub fn equally_spaced(m: usize, lo: f64, hi: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidAgentCount(m));
        }
        let step = (hi - lo) / (m - 1) as f64;
        Self::new((0..m).map(|i| if i + 1 == m { hi } else { lo + step * i as f64 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spread(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn sup_distance(&self, other: &StateVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| math::abs(a - b)).fold(0.0, f64::max)
    }

    pub(crate) fn from_trusted(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        StateVector(values)
    }
}

impl Index<usize> for StateVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Averaging step `W x`.
pub fn apply(w: &StochasticMatrix, x: &StateVector) -> Result<StateVector> {
    if x.len() != w.m {
        return Err(Error::DimensionMismatch { expected: w.m, found: x.len() });
    }
    let mut out = vec![0.0; w.m];
    w.apply_into(x.as_slice(), &mut out);
    Ok(StateVector(out))
}

/// A subset of the agents `{0, …, m-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubsetMask {
    m: usize,
    words: Vec<u64>,
}

impl SubsetMask {
    pub fn empty(m: usize) -> Self {
        SubsetMask { m, words: vec![0; m.div_ceil(64)] }
    }

    pub fn full(m: usize) -> Self {
        let mut s = Self::empty(m);
        (0..m).for_each(|i| s.insert(i));
        s
    }

    pub fn from_indices(m: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut s = Self::empty(m);
        for i in indices {
            if i >= m {
                return Err(Error::IndexOutOfRange { index: i, len: m });
            }
            s.insert(i);
        }
        Ok(s)
    }

    /// Subset whose members are the set bits of `bits`; requires `m <= 64`.
    pub fn from_bits(m: usize, bits: u64) -> Self {
        assert!(m <= 64, "bit constructor supports at most 64 agents");
        let mask = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
        SubsetMask { m, words: vec![bits & mask] }
    }

    /// Bit pattern for `m <= 64`.
    pub fn bits(&self) -> Option<u64> {
        (self.m <= 64).then(|| self.words.first().copied().unwrap_or(0))
    }

    pub fn agents(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.m && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.m);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.m);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    /// `1 <= |S| <= m-1`.
    pub fn is_nontrivial(&self) -> bool {
        let n = self.len();
        n >= 1 && n < self.m
    }

    pub fn complement(&self) -> SubsetMask {
        let mut c = SubsetMask::empty(self.m);
        for i in 0..self.m {
            if !self.contains(i) {
                c.insert(i);
            }
        }
        c
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.m).filter(move |&i| self.contains(i))
    }
}

/// `W_ST = Σ_{i∈S} Σ_{j∈T} W_ij`.
pub fn flow(w: &StochasticMatrix, s: &SubsetMask, t: &SubsetMask) -> Result<f64> {
    for mask in [s, t] {
        if mask.m != w.m {
            return Err(Error::DimensionMismatch { expected: w.m, found: mask.m });
        }
    }
    let mut total = 0.0;
    for i in s.iter() {
        let row = w.row(i);
        for j in t.iter() {
            total += row[j];
        }
    }
    Ok(total)
}

/// Ascending rearrangement of a profile together with the permutation that
/// produced it: `sorted[p] = original[permutation[p]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ordering {
    pub sorted: Vec<f64>,
    pub permutation: Vec<usize>,
}

impl Ordering {
    /// Stable ascending sort; equal values keep ascending original index.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut permutation: Vec<usize> = (0..values.len()).collect();
        permutation.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(cmp::Ordering::Equal));
        let sorted = permutation.iter().map(|&i| values[i]).collect();
        Ok(Ordering { sorted, permutation })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Indices of the `ell` smallest entries (the sorted prefix `S_ℓ`).
    pub fn lower_set(&self, ell: usize) -> SubsetMask {
        let m = self.len();
        let mut s = SubsetMask::empty(m);
        self.permutation[..ell.min(m)].iter().for_each(|&i| s.insert(i));
        s
    }

    /// Indices of the `ell` largest entries.
    pub fn upper_set(&self, ell: usize) -> SubsetMask {
        let m = self.len();
        let mut s = SubsetMask::empty(m);
        self.permutation[m - ell.min(m)..].iter().for_each(|&i| s.insert(i));
        s
    }

    /// Gaps `z_{p+1} - z_p` for `p = 0..m-1`.
    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.sorted.windows(2).map(|w| w[1] - w[0])
    }
}

pub fn ordering(x: &StateVector) -> Ordering {
    Ordering::from_values(x.as_slice()).expect("state vectors are finite")
}

/// `V_ℓ = Σ_{i=1}^{ℓ} β^i z_i` over the sorted profile.
pub fn v_ell(z: &Ordering, ell: usize, beta: f64) -> Result<f64> {
    if ell == 0 || ell > z.len() {
        return Err(Error::IndexOutOfRange { index: ell, len: z.len() });
    }
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(Error::param("beta", "must lie in (0, 1/2]"));
    }
    let mut weight = 1.0;
    let mut total = 0.0;
    for &zi in &z.sorted[..ell] {
        weight *= beta;
        total += weight * zi;
    }
    Ok(total)
}

/// Every subset `S` with `1 <= |S| <= m-1`, in ascending bitmask order.
pub fn enumerate_nontrivial_subsets(m: usize) -> Result<NontrivialSubsets> {
    if m < 2 {
        return Err(Error::InvalidAgentCount(m));
    }
    if m > MAX_ENUMERATED_AGENTS {
        return Err(Error::TooLarge { m, max: MAX_ENUMERATED_AGENTS });
    }
    Ok(NontrivialSubsets { m, next: 1, end: (1u64 << m) - 1 })
}

#[derive(Debug, Clone)]
pub struct NontrivialSubsets {
    m: usize,
    next: u64,
    end: u64,
}

impl Iterator for NontrivialSubsets {
    type Item = SubsetMask;

    fn next(&mut self) -> Option<SubsetMask> {
        if self.next >= self.end {
            return None;
        }
        let s = SubsetMask::from_bits(self.m, self.next);
        self.next += 1;
        Some(s)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for NontrivialSubsets {}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn halves() -> StochasticMatrix {
        validate_stochastic(&[[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]], 1e-12).unwrap()
    }

    #[test]
    fn validates_identity_and_block_matrix() {
        let id = validate_stochastic(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], 1e-12).unwrap();
        assert_eq!(id, StochasticMatrix::identity(3));
        let w = halves();
        for r in w.rows() {
            assert_eq!(r.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn rejects_bad_matrices() {
        let neg = validate_stochastic(&[[1.1, -0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], 1e-12);
        assert!(matches!(neg, Err(Error::NegativeEntry { row: 0, col: 1, .. })));
        let sum = validate_stochastic(&[[0.5, 0.4], [0.0, 1.0]], 1e-12);
        assert!(matches!(sum, Err(Error::RowSumViolation { row: 0, .. })));
        let nan = validate_stochastic(&[[f64::NAN, 1.0], [0.0, 1.0]], 1e-12);
        assert_eq!(nan, Err(Error::NonFinite));
        let ragged = StochasticMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0]], 1e-12);
        assert!(matches!(ragged, Err(Error::NotSquare { .. })));
        assert_eq!(StochasticMatrix::from_flat(1, vec![1.0], 1e-12), Err(Error::InvalidAgentCount(1)));
    }

    #[test]
    fn renormalizes_only_inside_tolerance() {
        let w = validate_stochastic(&[[0.5 + 4e-13, 0.5], [-5e-13, 1.0]], 1e-12).unwrap();
        assert!((w.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w.get(1, 0), 0.0);
        assert!(validate_stochastic(&[[0.5 + 4e-12, 0.5], [0.0, 1.0]], 1e-12).is_err());
    }

    #[test]
    fn apply_examples() {
        let x = StateVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(apply(&StochasticMatrix::identity(3), &x).unwrap(), x);
        let y = apply(&halves(), &StateVector::new(vec![0.0, 1.0, 5.0]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[0.5, 0.5, 5.0]);
        let c = StateVector::constant(3, 0.7);
        let third = StochasticMatrix::uniform(3);
        assert_eq!(apply(&third, &c).unwrap(), c);
        assert!(matches!(apply(&third, &StateVector::constant(2, 0.0)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn flow_examples() {
        let id = StochasticMatrix::identity(3);
        let s0 = SubsetMask::from_indices(3, [0]).unwrap();
        let t12 = SubsetMask::from_indices(3, [1, 2]).unwrap();
        assert_eq!(flow(&id, &s0, &t12).unwrap(), 0.0);
        let third = StochasticMatrix::uniform(3);
        let s01 = SubsetMask::from_indices(3, [0, 1]).unwrap();
        let t2 = SubsetMask::from_indices(3, [2]).unwrap();
        // brute-force: rows 0 and 1 each contribute 1/3 to column 2
        let oracle: f64 = [0usize, 1].iter().map(|&i| third.as_slice()[i * 3 + 2]).sum();
        assert_eq!(flow(&third, &s01, &t2).unwrap(), oracle);
        assert!((oracle - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(flow(&halves(), &s0, &SubsetMask::full(3)).unwrap(), 1.0);
        assert!(flow(&id, &SubsetMask::empty(2), &t12).is_err());
    }

    #[test]
    fn ordering_examples() {
        let o = Ordering::from_values(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(o.sorted, vec![1.0, 2.0, 3.0]);
        assert_eq!(o.permutation, vec![1, 2, 0]);
        let o = Ordering::from_values(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(o.permutation, vec![0, 1, 2]);
        let o = Ordering::from_values(&[0.4, 0.4, 0.1]).unwrap();
        assert_eq!(o.sorted, vec![0.1, 0.4, 0.4]);
        assert_eq!(o.permutation, vec![2, 0, 1]);
        assert_eq!(Ordering::from_values(&[0.0, f64::INFINITY]), Err(Error::NonFinite));
        assert_eq!(o.lower_set(1), SubsetMask::from_indices(3, [2]).unwrap());
        assert_eq!(o.upper_set(1), SubsetMask::from_indices(3, [1]).unwrap());
    }

    #[test]
    fn v_ell_examples() {
        let z = Ordering::from_values(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(v_ell(&z, 2, 0.5).unwrap(), 1.0);
        let zero = Ordering::from_values(&[0.0; 4]).unwrap();
        assert_eq!(v_ell(&zero, 3, 0.2).unwrap(), 0.0);
        let c = Ordering::from_values(&[2.5; 4]).unwrap();
        let geometric: f64 = (1..=4).map(|i| 0.3f64.powi(i)).sum();
        assert!((v_ell(&c, 4, 0.3).unwrap() - 2.5 * geometric).abs() < 1e-15);
        assert!(matches!(v_ell(&z, 0, 0.5), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(v_ell(&z, 4, 0.5), Err(Error::IndexOutOfRange { .. })));
        assert!(v_ell(&z, 1, 0.6).is_err());
    }

    #[test]
    fn subset_enumeration() {
        let two: Vec<_> = enumerate_nontrivial_subsets(2).unwrap().collect();
        assert_eq!(two, vec![SubsetMask::from_indices(2, [0]).unwrap(), SubsetMask::from_indices(2, [1]).unwrap()]);
        // oracle: count masks strictly between empty and full
        let oracle = (0u32..8).filter(|b| *b != 0 && *b != 7).count();
        assert_eq!(enumerate_nontrivial_subsets(3).unwrap().count(), oracle);
        assert_eq!(enumerate_nontrivial_subsets(1).unwrap_err(), Error::InvalidAgentCount(1));
        assert!(matches!(enumerate_nontrivial_subsets(21), Err(Error::TooLarge { .. })));
        assert!(enumerate_nontrivial_subsets(5).unwrap().all(|s| s.is_nontrivial()));
    }

    #[test]
    fn subset_mask_large_m() {
        let mut s = SubsetMask::empty(130);
        s.insert(0);
        s.insert(129);
        assert_eq!(s.len(), 2);
        assert_eq!(s.complement().len(), 128);
        assert!(s.bits().is_none());
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 129]);
    }

    fn arb_matrix() -> impl Strategy<Value = StochasticMatrix> {
        (2usize..7).prop_flat_map(|m| {
            proptest::collection::vec(0.0f64..1.0, m * m).prop_map(move |raw| {
                let mut data = raw;
                for r in data.chunks_exact_mut(m) {
                    r[0] += 1e-3;
                    let s: f64 = r.iter().sum();
                    r.iter_mut().for_each(|v| *v /= s);
                }
                StochasticMatrix::from_flat(m, data, 1e-12).unwrap()
            })
        })
    }

    fn arb_pair() -> impl Strategy<Value = (StochasticMatrix, Vec<f64>)> {
        arb_matrix().prop_flat_map(|w| {
            let m = w.agents();
            (Just(w), proptest::collection::vec(-10.0f64..10.0, m))
        })
    }

    proptest! {
        #[test]
        fn apply_stays_in_envelope((w, x) in arb_pair()) {
            let x = StateVector::new(x).unwrap();
            let y = apply(&w, &x).unwrap();
            for &v in y.as_slice() {
                prop_assert!(v >= x.min() && v <= x.max());
            }
            let (z0, z1) = (ordering(&x), ordering(&y));
            let m = x.len();
            prop_assert!(z1.sorted[0] >= z0.sorted[0]);
            prop_assert!(z1.sorted[m - 1] <= z0.sorted[m - 1]);
        }

        #[test]
        fn flow_partitions_row_mass((w, x) in arb_pair(), sbits in 1u64..64, tbits in 0u64..64) {
            let m = x.len();
            let s = SubsetMask::from_bits(m, sbits);
            let t = SubsetMask::from_bits(m, tbits);
            let total = flow(&w, &s, &t).unwrap() + flow(&w, &s, &t.complement()).unwrap();
            prop_assert!((total - s.len() as f64).abs() <= 1e-12 * s.len().max(1) as f64);
        }

        #[test]
        fn ordering_is_idempotent(x in proptest::collection::vec(-5.0f64..5.0, 1..12)) {
            let o = Ordering::from_values(&x).unwrap();
            let again = Ordering::from_values(&o.sorted).unwrap();
            prop_assert_eq!(&again.sorted, &o.sorted);
            for w in o.sorted.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            let mut seen = vec![false; x.len()];
            for (p, &i) in o.permutation.iter().enumerate() {
                prop_assert_eq!(o.sorted[p], x[i]);
                seen[i] = true;
            }
            prop_assert!(seen.iter().all(|s| *s));
        }

        #[test]
        fn doubly_stochastic_conserves_sum(x in proptest::collection::vec(-5.0f64..5.0, 4), a in 0.0f64..1.0) {
            // convex combination of identity and a cyclic shift is doubly stochastic
            let m = 4;
            let mut data = vec![0.0; m * m];
            for i in 0..m {
                data[i * m + i] += a;
                data[i * m + (i + 1) % m] += 1.0 - a;
            }
            let w = StochasticMatrix::from_flat(m, data, 1e-12).unwrap();
            prop_assert!(w.is_doubly_stochastic(1e-12));
            let x = StateVector::new(x).unwrap();
            let y = apply(&w, &x).unwrap();
            let scale = x.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let diff = y.as_slice().iter().sum::<f64>() - x.as_slice().iter().sum::<f64>();
            prop_assert!(diff.abs() <= 1e-12 * m as f64 * scale.max(1e-300) + 1e-300);
        }

        #[test]
        fn left_mul_matches_naive_product(a in arb_matrix(), seed in 0u64..1000) {
            let m = a.agents();
            let mut data = vec![0.0; m * m];
            for i in 0..m {
                data[i * m + ((i as u64 + seed) as usize % m)] = 1.0;
            }
            let b = StochasticMatrix::from_flat(m, data, 1e-12).unwrap();
            let prod = a.compose(&b).unwrap();
            for i in 0..m {
                for j in 0..m {
                    let naive: f64 = (0..m).map(|l| a.get(i, l) * b.get(l, j)).sum();
                    prop_assert!((prod.get(i, j) - naive).abs() < 1e-15);
                }
            }
        }
    }
}
