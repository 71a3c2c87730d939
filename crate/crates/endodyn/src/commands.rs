use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use endodyn_core::diagnostics::{
    absolute_probability_study, check_balancedness, check_pair_reciprocity, check_subsymmetry, check_weak_reciprocity,
    compare_partitions, components, consensus_clusters, converged_clusters, flow_graph, martingale_test_v_ell,
    ordering_convergence, prefix_suffix_rules, symmetric_function_series, ClusterPartition, StudyOptions, Verdict,
    SUBSYMMETRY_NOTE,
};
use endodyn_core::engine::{simulate_replicas, simulate_with, Checkpoints, SimulateOptions, Trajectory};
use endodyn_core::linalg::MAX_ENUMERATED_AGENTS;
use endodyn_core::models::AnyModel;
use endodyn_core::{Error, ProcessModel};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Check, DiagnosticsConfig, RunConfig};
use crate::csv::{self, SweepRow};
use crate::error::{CliError, Result};
use crate::report::*;

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn options(cfg: &RunConfig, replica: usize, checkpoints: Checkpoints) -> SimulateOptions {
    SimulateOptions { replica, retain_threshold: cfg.retain_threshold, checkpoints, flow_window: cfg.flow_window() }
}

/// Clusters of a settled run, or `None` with the reason.
fn settled_clusters<S>(traj: &Trajectory<S>, d: &DiagnosticsConfig) -> Result<Option<ClusterPartition>> {
    match converged_clusters(traj, d.ordering_window, d.ordering_tol, d.tol_cluster) {
        Ok(p) => Ok(Some(p)),
        Err(Error::NotConverged { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn replica_summary<S>(replica: usize, traj: &Trajectory<S>, d: &DiagnosticsConfig) -> Result<ReplicaSummary> {
    let ordering = ordering_convergence(traj, d.ordering_window, d.ordering_tol)?;
    let graph = flow_graph(traj, d.tau)?;
    let comps = components(&graph);
    let clusters = settled_clusters(traj, d)?;
    let comparison =
        clusters.as_ref().map(|c| compare_partitions(c, &comps).map(|v| v.as_str().to_string())).transpose()?;
    let last = traj.final_state();
    Ok(ReplicaSummary {
        replica,
        initial_state: traj.initial_state().as_slice().to_vec(),
        final_state: last.as_slice().to_vec(),
        final_spread: last.spread(),
        ordering: (&ordering).into(),
        cluster_status: if clusters.is_some() { "converged" } else { "not_converged" }.into(),
        clusters: clusters.as_ref().map(blocks),
        n_clusters: consensus_clusters(last, d.tol_cluster)?.len(),
        flow_components: blocks(&comps),
        flow_edges: graph.edges().count(),
        comparison,
    })
}

/// Runs every replica, writes `trajectory_r<r>.csv` and `summary.json`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    let model = cfg.build_model()?;
    let x0s = (0..cfg.replicas).map(|r| cfg.initial_state(r)).collect::<Result<Vec<_>>>()?;
    let trajs = simulate_replicas(&model, &x0s, cfg.steps, &cfg.seeds(), &options(cfg, 0, Checkpoints::None))?;
    let d = cfg.diagnostics_or_default();
    let mut replicas = Vec::with_capacity(trajs.len());
    for (r, traj) in trajs.iter().enumerate() {
        write_atomic(&out.join(format!("trajectory_r{r}.csv")), csv::trajectory(0, traj.states()).as_bytes())?;
        replicas.push(replica_summary(r, traj, &d)?);
    }
    let summary = SimulateSummary {
        version: SUMMARY_VERSION,
        seed: cfg.master_seed,
        config: cfg.clone(),
        tau: d.tau,
        tol_cluster: d.tol_cluster,
        flow_window_start: trajs[0].flow().window_start(),
        replicas,
    };
    write_atomic(&out.join("summary.json"), to_json(&summary).as_bytes())?;
    Ok(summary)
}

/// One row per `(value, seed)`, in value-major order; writes `sweep.csv`.
pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<Vec<SweepRow>> {
    let axis = cfg.sweep.as_ref().ok_or_else(|| CliError::config("sweep needs a `sweep` block"))?;
    let d = cfg.diagnostics_or_default();
    let jobs: Vec<(f64, u64)> = axis.values.iter().flat_map(|&v| axis.seeds.iter().map(move |&s| (v, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(value, seed)| {
            let mut point = cfg.with_parameter(&axis.parameter, value)?;
            point.master_seed = seed;
            let model = point.build_model()?;
            let traj = simulate_with(
                &model,
                &point.initial_state(0)?,
                point.steps,
                &point.seeds(),
                &options(&point, 0, Checkpoints::None),
            )?;
            let ordering = ordering_convergence(&traj, d.ordering_window, d.ordering_tol)?;
            Ok(SweepRow {
                param: value,
                seed,
                converged_step: ordering.ordering_converged_at,
                n_clusters: consensus_clusters(traj.final_state(), d.tol_cluster)?.len(),
                final_spread: traj.final_state().spread(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_atomic(&out.join("sweep.csv"), csv::sweep(&rows).as_bytes())?;
    Ok(rows)
}

fn min_finite(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.filter(|v| v.is_finite()).reduce(f64::min)
}

fn verdict_word(v: Verdict) -> &'static str {
    v.as_str()
}

fn combine(mut verdicts: impl Iterator<Item = Verdict>) -> Verdict {
    Verdict::from_ok(verdicts.all(|v| !v.is_violation()))
}

/// Default balancedness bound: `p̲/m` for asynchronous HK.
fn default_balance_bound(model: &AnyModel) -> Option<f64> {
    match model {
        AnyModel::HkAsync(h) => Some(h.params.p_lower() / h.params.base().agents() as f64),
        _ => None,
    }
}

/// Runs the requested checks on replica 0 and writes `diagnostics.json`.
/// Returns [`CliError::Violation`] after writing when a certified condition
/// fails.
pub fn diagnose(cfg: &RunConfig, out: &Path) -> Result<DiagnosticsReport> {
    let d = cfg.diagnostics_or_default();
    let model = cfg.build_model()?;
    let m = cfg.m;
    let seeds = cfg.seeds();
    let dseeds = seeds.scoped("diagnose");
    let probe_steps = d.probe_steps(cfg.steps);
    let traj = simulate_with(
        &model,
        &cfg.initial_state(0)?,
        cfg.steps,
        &seeds,
        &options(cfg, 0, Checkpoints::At(probe_steps.clone())),
    )?;
    let probes = traj.snapshots();
    let wants = |c: Check| d.checks.contains(&c);
    let mut verdicts = BTreeMap::new();
    let mut hard = Vec::new();
    let mut warnings = Vec::new();
    let mut record = |name: &str, v: &str, certified: bool, hard: &mut Vec<String>| {
        verdicts.insert(name.to_string(), v.to_string());
        if certified && v == "violation" {
            hard.push(name.to_string());
        }
    };
    let mut report = DiagnosticsReport {
        version: DIAGNOSTICS_VERSION,
        seed: cfg.master_seed,
        config: cfg.clone(),
        probe_steps: probe_steps.clone(),
        ordering: None,
        flow_graph: None,
        symmetric: None,
        balancedness: None,
        subsymmetry: None,
        pair_reciprocity: None,
        weak_reciprocity: None,
        v_ell: None,
        lyapunov: None,
        identity: None,
        verdicts: BTreeMap::new(),
        hard_violations: Vec::new(),
        warnings: Vec::new(),
    };

    if wants(Check::Ordering) {
        let o = ordering_convergence(&traj, d.ordering_window, d.ordering_tol)?;
        record("ordering", if o.converged() { "consistent" } else { "warning" }, false, &mut hard);
        if !o.converged() {
            warnings.push(format!("ordering has not settled: trailing drift {:e}", o.trailing_ordering_drift));
        }
        report.ordering = Some((&o).into());
    }

    if wants(Check::FlowGraph) {
        let graph = flow_graph(&traj, d.tau)?;
        let comps = components(&graph);
        let clusters = settled_clusters(&traj, &d)?;
        let compare = |tau: f64| -> Result<Option<String>> {
            let c = components(&graph.with_tau(tau)?);
            Ok(match &clusters {
                Some(k) => Some(compare_partitions(k, &c)?.as_str().to_string()),
                None => None,
            })
        };
        let comparison = compare(d.tau)?;
        let robustness = d
            .tau_robustness
            .iter()
            .map(|&t| {
                let c = compare(t)?;
                Ok(TauCheck { tau: t, stable: c == comparison, comparison: c })
            })
            .collect::<Result<Vec<_>>>()?;
        let word = match comparison.as_deref() {
            None => {
                warnings.push("flow graph: run has not converged, clusters not compared".into());
                "warning"
            }
            Some("equal") => "consistent",
            Some(_) => "reported",
        };
        record("flow_graph", word, false, &mut hard);
        report.flow_graph = Some(FlowGraphOut {
            tau: d.tau,
            horizon: graph.horizon(),
            window_start: traj.flow().window_start(),
            edges: graph.edges().collect(),
            components: blocks(&comps),
            cluster_status: if clusters.is_some() { "converged" } else { "not_converged" }.into(),
            clusters: clusters.as_ref().map(blocks),
            comparison,
            robustness,
        });
    }

    if wants(Check::Symmetric) {
        let series = d
            .symmetric_functions
            .iter()
            .map(|f| {
                symmetric_function_series(&traj, (*f).into(), d.ordering_window, d.ordering_tol).map(|s| (&s).into())
            })
            .collect::<std::result::Result<Vec<SeriesOut>, _>>()?;
        let all = series.iter().all(|s| s.converged_at.is_some());
        record("symmetric", if all { "consistent" } else { "warning" }, false, &mut hard);
        report.symmetric = Some(series);
    }

    let enumerable = m <= MAX_ENUMERATED_AGENTS;
    let need_a = d.a.is_none() && (wants(Check::WeakReciprocity) || (wants(Check::VEll) && d.beta.is_none()));
    let mut certified_a = None;
    if enumerable && (wants(Check::Balancedness) || need_a) {
        let bound = d.balance_bound.or_else(|| default_balance_bound(&model));
        let s = dseeds.scoped("balancedness");
        let reps = probes
            .iter()
            .map(|p| check_balancedness(&model, p, d.samples, &s, d.z, bound))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let verdict = combine(reps.iter().map(|r| r.verdict));
        // α̂ ≤ 1 whenever it is finite, so an all-vacuous run certifies 1
        let lower = min_finite(reps.iter().map(|r| r.alpha_lower));
        certified_a = Some(lower.unwrap_or(1.0).min(1.0));
        if wants(Check::Balancedness) {
            record("balancedness", verdict_word(verdict), bound.is_some(), &mut hard);
            report.balancedness = Some(BalanceSection {
                bound,
                z: d.z,
                alpha_lower_min: lower,
                verdict: verdict.as_str(),
                probes: reps.iter().map(Into::into).collect(),
            });
        }
    } else if wants(Check::Balancedness) {
        record("balancedness", "skipped", false, &mut hard);
        warnings.push(format!("balancedness needs m <= {MAX_ENUMERATED_AGENTS}"));
    }

    for (check, name) in [(Check::Subsymmetry, "subsymmetry"), (Check::PairReciprocity, "pair_reciprocity")] {
        if !wants(check) {
            continue;
        }
        let s = dseeds.scoped(name);
        let reps = probes
            .iter()
            .map(|p| match check {
                Check::Subsymmetry => check_subsymmetry(&model, p, d.samples, &s, d.z, None),
                _ => check_pair_reciprocity(&model, p, d.samples, &s, d.z, None),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let verdict = combine(reps.iter().map(|r| r.verdict));
        record(name, if verdict.is_violation() { "warning" } else { "reported" }, false, &mut hard);
        let section = EntrywiseSection {
            bound: None,
            z: d.z,
            eta_lower_min: min_finite(reps.iter().map(|r| r.eta_lower)),
            note: if check == Check::Subsymmetry { SUBSYMMETRY_NOTE } else { "pair (i, j): sender i, receiver j" },
            verdict: verdict.as_str(),
            probes: reps.iter().map(Into::into).collect(),
        };
        match check {
            Check::Subsymmetry => report.subsymmetry = Some(section),
            _ => report.pair_reciprocity = Some(section),
        }
    }

    let (a, a_source) = match (d.a, certified_a) {
        (Some(a), _) => (Some(a), "config"),
        (None, Some(a)) => (Some(a), "balancedness"),
        (None, None) => (None, "unavailable"),
    };
    let mut certified_alpha = None;
    let mut predicted = None;
    if wants(Check::WeakReciprocity) || (wants(Check::VEll) && d.beta.is_none()) {
        if let Some(a) = a {
            let rules = prefix_suffix_rules(m);
            let s = dseeds.scoped("weak_reciprocity");
            let reps = probes
                .iter()
                .map(|p| check_weak_reciprocity(&model, p, &rules, d.samples, &s, a, d.z))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let verdict = combine(reps.iter().map(|r| r.verdict));
            predicted = reps.first().and_then(|r| r.predicted);
            let lower = min_finite(reps.iter().map(|r| r.alpha_lower));
            certified_alpha = Some(lower.unwrap_or(1.0).min(1.0));
            if wants(Check::WeakReciprocity) {
                let certified = predicted.is_some_and(|p| p > 0.0);
                record("weak_reciprocity", verdict_word(verdict), certified, &mut hard);
                report.weak_reciprocity = Some(ReciprocitySection {
                    a,
                    a_source,
                    gamma: model.diagonal_bound(),
                    predicted,
                    z: d.z,
                    partial: true,
                    alpha_lower_min: lower,
                    verdict: verdict.as_str(),
                    probes: reps.iter().map(Into::into).collect(),
                });
            }
        } else if wants(Check::WeakReciprocity) {
            record("weak_reciprocity", "skipped", false, &mut hard);
            warnings.push("weak reciprocity: no balancedness coefficient available".into());
        }
    }

    if wants(Check::VEll) {
        let beta = d.beta.map(|b| (b, "config")).or_else(|| {
            let from = |x: f64| (x > 0.0).then(|| ((x / 2.0).min(0.5), "weak_reciprocity"));
            certified_alpha.and_then(from).or_else(|| predicted.and_then(from).map(|(b, _)| (b, "predicted")))
        });
        match beta {
            Some((beta, source)) => {
                let ells = d.ells.clone().unwrap_or_else(|| (1..=m).collect());
                let rep = martingale_test_v_ell(&model, probes, &ells, beta, d.samples, &dseeds.scoped("v_ell"), d.z)?;
                record("v_ell", verdict_word(rep.verdict), true, &mut hard);
                let params =
                    BTreeMap::from([("beta", json!(beta)), ("beta_source", json!(source)), ("ells", json!(ells))]);
                report.v_ell = Some(MartingaleSection::new(&rep, params));
            }
            None => {
                record("v_ell", "skipped", false, &mut hard);
                warnings.push("V_ell: no positive reciprocity coefficient to derive beta from".into());
            }
        }
    }

    if wants(Check::Lyapunov) || wants(Check::Identity) {
        let horizon = d.horizon(m);
        let mut horizons = d.identity_horizons(m);
        if !horizons.contains(&horizon) {
            horizons.push(horizon);
            horizons.sort_unstable();
        }
        let g = d.convex_fn()?;
        let opts = StudyOptions {
            horizons: horizons.clone(),
            samples: d.samples,
            outer_samples: d.samples,
            inner_samples: d.samples,
            z: d.z,
            g,
        };
        let study = absolute_probability_study(&model, probes, &opts, &dseeds.scoped("lyapunov"))?;
        if !study.g_verified {
            warnings.push(format!("convex function `{}` is not from the verified catalog", d.g));
        }
        let at = horizons.iter().position(|h| *h == horizon).expect("horizon was inserted");
        if wants(Check::Lyapunov) {
            let rep = &study.lyapunov[at];
            record("lyapunov", verdict_word(rep.verdict), study.g_verified, &mut hard);
            let params = BTreeMap::from([("g", json!(d.g)), ("horizon", json!(horizon))]);
            report.lyapunov = Some(MartingaleSection::new(rep, params));
        }
        if wants(Check::Identity) {
            let wanted = d.identity_horizons(m);
            let sections: Vec<IdentitySection> =
                study.identity.iter().filter(|r| wanted.contains(&r.horizon)).map(Into::into).collect();
            record("identity", "reported", false, &mut hard);
            report.identity = Some(sections);
        }
    }

    report.verdicts = verdicts;
    report.hard_violations = hard;
    report.warnings = warnings;
    write_atomic(&out.join("diagnostics.json"), to_json(&report).as_bytes())?;
    if !report.hard_violations.is_empty() {
        return Err(CliError::Violation(format!("certified checks failed: {}", report.hard_violations.join(", "))));
    }
    Ok(report)
}

/// `--out` when given, otherwise the configured output directory.
pub fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir))
}

pub fn with_seed(mut cfg: RunConfig, seed: Option<u64>) -> RunConfig {
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg
}
