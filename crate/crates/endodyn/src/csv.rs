//! Trajectory and sweep CSV. Reals are written as `{:.16e}` (17 significant
//! digits), which round-trips every `f64` exactly.

use std::fmt::Write as _;

use endodyn_core::StateVector;

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

/// `step,agent_0,…,agent_{m-1}` followed by one row per state.
pub fn trajectory(start_step: u64, states: &[StateVector]) -> String {
    let m = states.first().map_or(0, |x| x.len());
    let mut out = String::from("step");
    for i in 0..m {
        let _ = write!(out, ",agent_{i}");
    }
    out.push('\n');
    for (k, x) in states.iter().enumerate() {
        let _ = write!(out, "{}", start_step + k as u64);
        for v in x.as_slice() {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrajectory {
    pub steps: Vec<u64>,
    pub states: Vec<Vec<f64>>,
}

pub fn parse_trajectory(text: &str) -> Result<ParsedTrajectory, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"step") || cols[1..].iter().enumerate().any(|(i, c)| *c != format!("agent_{i}")) {
        return Err(format!("bad header `{header}`"));
    }
    let m = cols.len() - 1;
    let mut steps = Vec::new();
    let mut states = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != m + 1 {
            return Err(format!("row {n}: expected {} fields, found {}", m + 1, fields.len()));
        }
        let step: u64 = fields[0].parse().map_err(|e| format!("row {n}: {e}"))?;
        if steps.last().is_some_and(|&s| step <= s) {
            return Err(format!("row {n}: step column not strictly increasing"));
        }
        steps.push(step);
        states.push(
            fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| format!("row {n}: {e}")))
                .collect::<Result<_, _>>()?,
        );
    }
    Ok(ParsedTrajectory { steps, states })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub seed: u64,
    pub converged_step: Option<u64>,
    pub n_clusters: usize,
    pub final_spread: f64,
}

/// `param,seed,converged_step,n_clusters,final_spread`; a run that never
/// settles leaves `converged_step` empty. The parameter is written in its
/// shortest round-trip form.
pub fn sweep(rows: &[SweepRow]) -> String {
    let mut out = String::from("param,seed,converged_step,n_clusters,final_spread\n");
    for r in rows {
        let step = r.converged_step.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.param, r.seed, step, r.n_clusters, real(r.final_spread));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_round_trip_is_bit_exact() {
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 5e-324, f64::MAX, -0.0, 123456789.12345679];
        let states: Vec<StateVector> = vals.windows(2).map(|w| StateVector::new(w.to_vec()).unwrap()).collect();
        let text = trajectory(0, &states);
        assert!(text.starts_with("step,agent_0,agent_1\n0,"));
        let parsed = parse_trajectory(&text).unwrap();
        assert_eq!(parsed.steps, (0..states.len() as u64).collect::<Vec<_>>());
        for (x, y) in states.iter().zip(&parsed.states) {
            assert!(x.as_slice().iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_trajectory("time,agent_0\n0,1\n").is_err());
        assert!(parse_trajectory("step,agent_0\n1,1\n1,2\n").is_err());
        assert!(parse_trajectory("step,agent_0\n0,1,2\n").is_err());
    }

    #[test]
    fn sweep_rows() {
        let rows = [SweepRow { param: 0.1, seed: 3, converged_step: None, n_clusters: 2, final_spread: 0.25 }];
        assert_eq!(sweep(&rows), "param,seed,converged_step,n_clusters,final_spread\n0.1,3,,2,2.5000000000000000e-1\n");
    }
}
