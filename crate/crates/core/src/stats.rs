//! Sample means, standard errors and ratio estimates.
//!
//! Every statistical verdict in the crate uses a one-sided `z`-standard-error
//! tolerance ([`DEFAULT_Z`] = 3) plus an absolute floor of [`FLOAT_FLOOR`] that
//! absorbs rounding in zero-variance (deterministic) cases.

use crate::math;

pub const DEFAULT_Z: f64 = 3.0;

/// Absolute slack added to every inequality check.
pub const FLOAT_FLOOR: f64 = 1e-12;

/// Sample mean with its standard error `s / √n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// Two-pass mean and standard error. With fewer than two samples the
    /// standard error is reported as zero.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return MeanEstimate { mean: 0.0, se: 0.0, n };
        }
        // summation error must not invent variance for a degenerate sample
        if samples.iter().all(|v| v.to_bits() == samples[0].to_bits()) {
            return MeanEstimate { mean: samples[0], se: 0.0, n };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return MeanEstimate { mean, se: 0.0, n };
        }
        let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
        let var = ss / (n - 1) as f64;
        MeanEstimate { mean, se: math::sqrt(var / n as f64), n }
    }

    pub fn exact(value: f64) -> Self {
        MeanEstimate { mean: value, se: 0.0, n: 1 }
    }

    /// True when the mean is within `z` standard errors of zero.
    pub fn indistinguishable_from_zero(&self, z: f64) -> bool {
        math::abs(self.mean) <= z * self.se
    }
}

/// Estimate of `E[a] / E[b]`; vacuous when the denominator cannot be told
/// apart from zero, in which case the constraint `E[a] >= c E[b]` holds for
/// every `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite { value: f64, se: f64 },
    Vacuous,
}

impl Ratio {
    /// Paired ratio estimate with a delta-method standard error computed from
    /// the per-sample residuals `a_n - r b_n`.
    pub fn from_paired(numerator: &[f64], denominator: &[f64], z: f64) -> Ratio {
        debug_assert_eq!(numerator.len(), denominator.len());
        let num = MeanEstimate::from_samples(numerator);
        let den = MeanEstimate::from_samples(denominator);
        if den.mean <= z * den.se || den.mean <= 0.0 {
            return Ratio::Vacuous;
        }
        let r = num.mean / den.mean;
        let n = numerator.len();
        let se = if n < 2 {
            0.0
        } else {
            let ss: f64 = numerator
                .iter()
                .zip(denominator)
                .map(|(a, b)| {
                    let d = a - r * b;
                    d * d
                })
                .sum();
            math::sqrt(ss / (n - 1) as f64 / n as f64) / den.mean
        };
        Ratio::Finite { value: r, se }
    }

    /// Ratio of two independent estimates.
    pub fn from_independent(num: MeanEstimate, den: MeanEstimate, z: f64) -> Ratio {
        if den.mean <= z * den.se || den.mean <= 0.0 {
            return Ratio::Vacuous;
        }
        let r = num.mean / den.mean;
        let rel = math::sqrt(num.se * num.se + r * r * den.se * den.se);
        Ratio::Finite { value: r, se: rel / den.mean }
    }

    /// `+∞` for vacuous ratios.
    pub fn value(&self) -> f64 {
        match self {
            Ratio::Finite { value, .. } => *value,
            Ratio::Vacuous => f64::INFINITY,
        }
    }

    pub fn se(&self) -> f64 {
        match self {
            Ratio::Finite { se, .. } => *se,
            Ratio::Vacuous => 0.0,
        }
    }

    /// Lower confidence value `r - z·se` (`+∞` when vacuous).
    pub fn lower(&self, z: f64) -> f64 {
        match self {
            Ratio::Finite { value, se } => value - z * se,
            Ratio::Vacuous => f64::INFINITY,
        }
    }

    /// `r >= bound - z·se`, with the absolute floor.
    pub fn consistent_with_bound(&self, bound: f64, z: f64) -> bool {
        match self {
            Ratio::Finite { value, se } => *value >= bound - z * se - FLOAT_FLOOR,
            Ratio::Vacuous => true,
        }
    }

    pub fn is_vacuous(&self) -> bool {
        matches!(self, Ratio::Vacuous)
    }

    /// The smaller of two ratios by point value; vacuous ratios lose to any
    /// finite one.
    pub fn min(self, other: Ratio) -> Ratio {
        if other.value() < self.value() {
            other
        } else {
            self
        }
    }
}

/// Streaming means, variances and covariance of a paired sample `(a, b)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairedMoments {
    n: usize,
    mean_a: f64,
    mean_b: f64,
    m2a: f64,
    m2b: f64,
    cab: f64,
}

impl PairedMoments {
    pub fn push(&mut self, a: f64, b: f64) {
        self.n += 1;
        let n = self.n as f64;
        let da = a - self.mean_a;
        let db = b - self.mean_b;
        self.mean_a += da / n;
        self.mean_b += db / n;
        self.m2a += da * (a - self.mean_a);
        self.m2b += db * (b - self.mean_b);
        self.cab += da * (b - self.mean_b);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    fn estimate(&self, mean: f64, m2: f64) -> MeanEstimate {
        let se = if self.n < 2 { 0.0 } else { math::sqrt(m2.max(0.0) / (self.n - 1) as f64 / self.n as f64) };
        MeanEstimate { mean, se, n: self.n }
    }

    pub fn first(&self) -> MeanEstimate {
        self.estimate(self.mean_a, self.m2a)
    }

    pub fn second(&self) -> MeanEstimate {
        self.estimate(self.mean_b, self.m2b)
    }

    /// `E[a] / E[b]` with the same conventions as [`Ratio::from_paired`].
    pub fn ratio(&self, z: f64) -> Ratio {
        let den = self.second();
        if den.mean <= z * den.se || den.mean <= 0.0 {
            return Ratio::Vacuous;
        }
        let r = self.mean_a / self.mean_b;
        let se = if self.n < 2 {
            0.0
        } else {
            let ss = (self.m2a - 2.0 * r * self.cab + r * r * self.m2b).max(0.0);
            math::sqrt(ss / (self.n - 1) as f64 / self.n as f64) / self.mean_b
        };
        Ratio::Finite { value: r, se }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_moments_match_two_pass() {
        let a = [0.3, 0.1, 0.7, 0.2, 0.9, 0.4];
        let b = [0.5, 0.2, 0.8, 0.1, 0.6, 0.9];
        let mut pm = PairedMoments::default();
        a.iter().zip(&b).for_each(|(x, y)| pm.push(*x, *y));
        let (ea, eb) = (MeanEstimate::from_samples(&a), MeanEstimate::from_samples(&b));
        assert!((pm.first().mean - ea.mean).abs() < 1e-15 && (pm.first().se - ea.se).abs() < 1e-15);
        assert!((pm.second().se - eb.se).abs() < 1e-15);
        let (r1, r2) = (pm.ratio(3.0), Ratio::from_paired(&a, &b, 3.0));
        assert!((r1.value() - r2.value()).abs() < 1e-14);
        assert!((r1.se() - r2.se()).abs() < 1e-14);
        let mut c = PairedMoments::default();
        (0..5).for_each(|_| c.push(0.25, 0.5));
        assert_eq!(c.ratio(3.0), Ratio::Finite { value: 0.5, se: 0.0 });
    }

    #[test]
    fn mean_and_se() {
        let e = MeanEstimate::from_samples(&[1.0, 1.0, 1.0]);
        assert_eq!((e.mean, e.se), (1.0, 0.0));
        let e = MeanEstimate::from_samples(&[0.0, 2.0]);
        assert_eq!(e.mean, 1.0);
        // sd = sqrt(2), se = sqrt(2)/sqrt(2)
        assert!((e.se - 1.0).abs() < 1e-15);
        assert_eq!(MeanEstimate::from_samples(&[4.0]).se, 0.0);
    }

    #[test]
    fn vacuous_when_denominator_is_zero() {
        assert_eq!(Ratio::from_paired(&[0.0, 0.0], &[0.0, 0.0], 3.0), Ratio::Vacuous);
        assert_eq!(Ratio::from_paired(&[1.0, 0.0], &[0.0, 0.0], 3.0), Ratio::Vacuous);
        // noisy denominator within 3 SE of zero
        assert!(Ratio::from_paired(&[1.0; 4], &[0.0, 0.0, 0.0, 0.1], 3.0).is_vacuous());
    }

    #[test]
    fn deterministic_ratio() {
        let r = Ratio::from_paired(&[1.0, 1.0], &[2.0, 2.0], 3.0);
        assert_eq!(r, Ratio::Finite { value: 0.5, se: 0.0 });
        assert!(r.consistent_with_bound(0.5, 3.0));
        assert!(!r.consistent_with_bound(0.6, 3.0));
        assert_eq!(r.min(Ratio::Vacuous), r);
        assert_eq!(Ratio::Vacuous.min(r), r);
    }
}
