// Independent reference implementations used as oracles. Nothing here calls
// the crate's model constructors.
#![allow(dead_code)]

use endodyn_core::engine::RandomStream;
use endodyn_core::{ProcessModel, Result, StateVector, StochasticMatrix};
use rand::Rng;

/// HK averaging row built by direct enumeration.
pub fn hk_row(x: &[f64], i: usize, eps: f64) -> Vec<f64> {
    let members: Vec<usize> = (0..x.len()).filter(|&j| (x[i] - x[j]).abs() <= eps).collect();
    let mut row = vec![0.0; x.len()];
    for j in &members {
        row[*j] = 1.0 / members.len() as f64;
    }
    row
}

/// The `m` equiprobable asynchronous HK outcomes.
pub fn async_outcomes(x: &[f64], eps: f64) -> Vec<Vec<Vec<f64>>> {
    let m = x.len();
    (0..m)
        .map(|a| {
            (0..m)
                .map(|i| {
                    if i == a {
                        hk_row(x, i, eps)
                    } else {
                        let mut r = vec![0.0; m];
                        r[i] = 1.0;
                        r
                    }
                })
                .collect()
        })
        .collect()
}

pub fn brute_flow(w: &[Vec<f64>], s: &[bool], t: &[bool]) -> f64 {
    let mut total = 0.0;
    for i in 0..w.len() {
        for j in 0..w.len() {
            if s[i] && t[j] {
                total += w[i][j];
            }
        }
    }
    total
}

pub fn mat_vec(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    w.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn to_rows(w: &StochasticMatrix) -> Vec<Vec<f64>> {
    w.rows().map(|r| r.to_vec()).collect()
}

pub fn sv(v: &[f64]) -> StateVector {
    StateVector::new(v.to_vec()).unwrap()
}

/// Two fixed matrices; each step flips between them with probability 1/2.
/// The phase is internal state that a snapshot must capture.
#[derive(Debug, Clone)]
pub struct Flipper {
    pub phase: u8,
    pub a: StochasticMatrix,
    pub b: StochasticMatrix,
}

impl Flipper {
    pub fn new(m: usize) -> Self {
        let mut rows_a = vec![vec![0.0; m]; m];
        let mut rows_b = vec![vec![0.0; m]; m];
        for i in 0..m {
            rows_a[i][i] = 0.5;
            rows_a[i][(i + 1) % m] = 0.5;
            rows_b[i][i] = 0.75;
            rows_b[i][(i + m - 1) % m] = 0.25;
        }
        Flipper {
            phase: 0,
            a: StochasticMatrix::from_rows(&rows_a, 1e-12).unwrap(),
            b: StochasticMatrix::from_rows(&rows_b, 1e-12).unwrap(),
        }
    }
}

impl ProcessModel for Flipper {
    type State = u8;

    fn agents(&self) -> usize {
        self.a.agents()
    }

    fn name(&self) -> &'static str {
        "flipper"
    }

    fn sample_next(&mut self, _: u64, _: &StateVector, rng: &mut RandomStream) -> Result<StochasticMatrix> {
        if rng.random_bool(0.5) {
            self.phase ^= 1;
        }
        Ok(if self.phase == 0 { self.a.clone() } else { self.b.clone() })
    }

    fn clone_state(&self) -> u8 {
        self.phase
    }

    fn restore_state(&mut self, state: &u8) {
        self.phase = *state;
    }
}
