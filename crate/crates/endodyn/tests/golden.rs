//! The committed example configs must reproduce the committed output hashes.
//! Regenerate with `ENDODYN_BLESS=1 cargo test -p endodyn --test golden`
//! after an intentional output change.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use endodyn::{commands, RunConfig};
use sha2::{Digest, Sha256};

const CONFIGS: &[&str] =
    &["acceptance", "gossip_m6", "hk_async_m5", "hk_sync_example", "link_failure", "sweep_epsilon"];

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn current_hashes() -> String {
    let mut lines = String::new();
    for name in CONFIGS {
        let cfg = RunConfig::load(&root().join("configs").join(format!("{name}.json"))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        commands::simulate(&cfg, dir.path()).unwrap();
        if cfg.diagnostics.is_some() {
            commands::diagnose(&cfg, dir.path()).unwrap();
        }
        if cfg.sweep.is_some() {
            commands::sweep(&cfg, dir.path()).unwrap();
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        for f in files {
            let file = f.file_name().unwrap().to_string_lossy();
            let _ = writeln!(lines, "{name}/{file} {}", digest(&std::fs::read(&f).unwrap()));
        }
    }
    lines
}

#[test]
fn example_outputs_match_committed_hashes() {
    let path = root().join("tests/golden/hashes.txt");
    let actual = current_hashes();
    if std::env::var_os("ENDODYN_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).expect("committed hashes; run with ENDODYN_BLESS=1 to create");
    let diff: Vec<(&str, &str)> = expected.lines().zip(actual.lines()).filter(|(a, b)| a != b).collect();
    assert!(diff.is_empty() && expected.lines().count() == actual.lines().count(), "golden mismatch: {diff:#?}");
}
