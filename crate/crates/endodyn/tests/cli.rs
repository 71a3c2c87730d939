use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use endodyn::csv::parse_trajectory;
use endodyn::RunConfig;
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn endodyn(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_endodyn"));
    cmd.args(args).env_remove("ENDODYN_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = endodyn(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const SYNC: &str =
    r#"{"model": {"kind": "hk_sync", "epsilon": 0.5}, "m": 3, "x0": [0.0, 0.4, 1.0], "steps": 50, "master_seed": 1}"#;

#[test]
fn simulate_sync_example_final_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SYNC);
    let out = dir.path().join("out");
    run_ok(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let traj = parse_trajectory(&std::fs::read_to_string(out.join("trajectory_r0.csv")).unwrap()).unwrap();
    assert_eq!(traj.steps, (0..=50).collect::<Vec<u64>>());
    let last = traj.states.last().unwrap();
    for (v, e) in last.iter().zip([0.2, 0.2, 1.0]) {
        assert!((v - e).abs() < 1e-9);
    }
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["version"], "endodyn-summary/1");
    // 50 steps is exactly one ordering window, too short to certify settling
    assert_eq!(summary["replicas"][0]["cluster_status"], "not_converged");
    assert_eq!(summary["replicas"][0]["n_clusters"], 2);

    let cfg = write_config(dir.path(), "long.json", &SYNC.replace("\"steps\": 50", "\"steps\": 200"));
    let out = dir.path().join("long");
    run_ok(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["replicas"][0]["comparison"], "equal");
    assert_eq!(summary["replicas"][0]["clusters"], serde_json::json!([[0, 1], [2]]));
}

#[test]
fn csv_round_trips_engine_states() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: RunConfig = RunConfig::load(&configs().join("hk_async_m5.json")).unwrap();
    let out = dir.path();
    endodyn::commands::simulate(&cfg, out).unwrap();
    let model = cfg.build_model().unwrap();
    let traj = endodyn_core::engine::simulate_with(
        &model,
        &cfg.initial_state(1).unwrap(),
        cfg.steps,
        &cfg.seeds(),
        &endodyn_core::engine::SimulateOptions { replica: 1, ..Default::default() },
    )
    .unwrap();
    let parsed = parse_trajectory(&std::fs::read_to_string(out.join("trajectory_r1.csv")).unwrap()).unwrap();
    assert_eq!(parsed.states.len(), traj.states().len());
    for (x, y) in traj.states().iter().zip(&parsed.states) {
        assert!(x.as_slice().iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("k0.json", SYNC.replace("\"steps\": 50", "\"steps\": 0")),
        ("typo.json", SYNC.replace("\"master_seed\"", "\"master_sed\"")),
        ("syntax.json", "{".to_string()),
        ("nosweep.json", SYNC.to_string()),
        (
            "emptyseeds.json",
            SYNC.replace(
                "\"master_seed\": 1",
                "\"master_seed\": 1, \"sweep\": {\"parameter\": \"epsilon\", \"values\": [0.3], \"seeds\": []}",
            ),
        ),
    ] {
        let cfg = write_config(dir.path(), name, &text);
        let cmd = if name == "nosweep.json" || name == "emptyseeds.json" { "sweep" } else { "simulate" };
        let out = endodyn(&[cmd, "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()], &[]);
        assert_eq!(out.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let missing = endodyn(&["simulate", "--config", "/nonexistent/c.json"], &[]);
    assert_eq!(missing.status.code(), Some(2));
    let cfg = write_config(dir.path(), "ok.json", SYNC);
    let bad_threads =
        endodyn(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &[("ENDODYN_THREADS", "zero")]);
    assert_eq!(bad_threads.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SYNC);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = endodyn(&["simulate", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn hard_violation_exits_4_after_writing() {
    let dir = tempfile::tempdir().unwrap();
    // ratios are at most 1, so a bound of 1.5 must fail
    let text = r#"{"model": {"kind": "hk_async", "epsilon": 0.5}, "m": 3, "x0": [0.0, 0.3, 0.6], "steps": 20, "master_seed": 3,
        "diagnostics": {"checks": ["balancedness"], "samples": 500, "probe_steps": [0], "balance_bound": 1.5}}"#;
    let cfg = write_config(dir.path(), "c.json", text);
    let out = endodyn(&["diagnose", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(4));
    let report = read_json(&dir.path().join("diagnostics.json"));
    assert_eq!(report["hard_violations"], serde_json::json!(["balancedness"]));
}

#[test]
fn replicas_differ_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &std::fs::read_to_string(configs().join("hk_async_m5.json")).unwrap());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap()]);
    let threads = endodyn(&["simulate", "--config", &cfg, "--out", b.to_str().unwrap()], &[("ENDODYN_THREADS", "2")]);
    assert!(threads.status.success());
    for f in ["trajectory_r0.csv", "trajectory_r1.csv", "trajectory_r2.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        std::fs::read(a.join("trajectory_r0.csv")).unwrap(),
        std::fs::read(a.join("trajectory_r1.csv")).unwrap()
    );

    // --seed overrides master_seed
    let c = dir.path().join("c");
    run_ok(&["simulate", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "99"]);
    assert_ne!(
        std::fs::read(a.join("trajectory_r0.csv")).unwrap(),
        std::fs::read(c.join("trajectory_r0.csv")).unwrap()
    );
    assert_eq!(read_json(&c.join("summary.json"))["seed"], 99);
}

#[test]
fn diagnose_sync_example() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("hk_sync_example.json");
    run_ok(&["diagnose", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let r = read_json(&dir.path().join("diagnostics.json"));
    assert_eq!(r["version"], "endodyn-diagnostics/1");
    for probe in r["balancedness"]["probes"].as_array().unwrap() {
        let a = &probe["alpha_hat"];
        assert!(a["vacuous"] == true || (a["value"] == 1.0 && a["se"] == 0.0), "{a}");
        for s in probe["subsets"].as_array().unwrap() {
            assert_eq!(s["inflow"]["se"], 0.0);
            assert!(s["inflow"]["n"].as_u64().unwrap() > 0);
        }
    }
    assert_eq!(r["flow_graph"]["comparison"], "equal");
    assert_eq!(r["hard_violations"], serde_json::json!([]));
}

#[test]
fn lyapunov_on_consensus_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"model": {"kind": "hk_async", "epsilon": 0.2}, "m": 4, "x0": [0.3, 0.3, 0.3, 0.3], "steps": 10, "master_seed": 5,
        "diagnostics": {"checks": ["lyapunov"], "samples": 100, "probes": 3, "horizon": 20}}"#;
    let cfg = write_config(dir.path(), "c.json", text);
    run_ok(&["diagnose", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    let r = read_json(&dir.path().join("diagnostics.json"));
    let recs = r["lyapunov"]["records"].as_array().unwrap();
    assert_eq!(recs.len(), 3);
    for rec in recs {
        assert_eq!((rec["current"]["mean"].as_f64(), rec["next"]["mean"].as_f64()), (Some(0.0), Some(0.0)));
    }
}

#[test]
fn epsilon_sweep_median_clusters_nonincreasing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&configs().join("sweep_epsilon.json")).unwrap();
    let rows = endodyn::commands::sweep(&cfg, dir.path()).unwrap();
    let axis = cfg.sweep.as_ref().unwrap();
    assert_eq!(rows.len(), axis.values.len() * axis.seeds.len());
    let medians: Vec<usize> = axis
        .values
        .iter()
        .map(|v| {
            let mut n: Vec<usize> = rows.iter().filter(|r| r.param == *v).map(|r| r.n_clusters).collect();
            n.sort_unstable();
            n[n.len() / 2]
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
    assert_eq!(*medians.last().unwrap(), 1);
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), rows.len() + 1);
}

#[test]
fn single_point_sweep_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&configs().join("sweep_epsilon.json")).unwrap();
    cfg.sweep = Some(endodyn::config::SweepConfig { parameter: "epsilon".into(), values: vec![0.3], seeds: vec![4] });
    let rows = endodyn::commands::sweep(&cfg, dir.path()).unwrap();
    let mut point = cfg.with_parameter("epsilon", 0.3).unwrap();
    point.master_seed = 4;
    let summary = endodyn::commands::simulate(&point, dir.path()).unwrap();
    let rep = &summary.replicas[0];
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].n_clusters, rep.n_clusters);
    assert_eq!(rows[0].final_spread, rep.final_spread);
    assert_eq!(rows[0].converged_step, rep.ordering.ordering_converged_at);
}
