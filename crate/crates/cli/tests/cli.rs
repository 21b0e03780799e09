use std::path::Path;
use std::process::Command;

use kqd::krylov::{KrylovPair, Provenance, Structure};
use kqd_cli::compare::{compare, load_run};
use kqd_cli::config::{preset, ExperimentConfig, PRESETS};
use kqd_cli::run::{pair_document, prepare, run};
use kqd_cli::CliError;
use nalgebra::DMatrix;
use num_complex::Complex64;

const CHAIN: &str = r#"
name = "chain"
seed = 3

[lattice]
chain = 7
control = 0

[particles]
k = 2

[evolution]
dt = 0.4
steps = 2

[krylov]
d = 5
"#;

fn kqd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kqd"))
}

fn validation_message(text: &str) -> String {
    match ExperimentConfig::from_toml(text) {
        Err(CliError::Validation(m)) => m,
        other => panic!("expected a validation error, got {:?}", other.map(|c| c.name)),
    }
}

#[test]
fn every_preset_parses_and_validates() {
    for (name, _) in PRESETS {
        let cfg = preset(name).unwrap();
        cfg.validate().unwrap();
        assert_eq!(&cfg.name, name);
    }
    assert!(preset("no-such-preset").is_err());
}

#[test]
fn validation_names_the_field() {
    assert!(validation_message(&CHAIN.replace("dt = 0.4", "dt = -1.0")).contains("evolution.dt"));
    assert!(validation_message(&CHAIN.replace("d = 5", "d = 0")).contains("krylov.d"));
    assert!(validation_message(&CHAIN.replace("k = 2", "k = 0")).contains("particles.k"));
    assert!(validation_message(&CHAIN.replace("control = 0\n", "")).contains("lattice.control"));
    // Unknown keys are rejected rather than ignored.
    assert!(!validation_message(&CHAIN.replace("steps = 2", "steps = 2\nstep = 3")).is_empty());
}

#[test]
fn hash_tracks_content() {
    let a = ExperimentConfig::from_toml(CHAIN).unwrap();
    let b = ExperimentConfig::from_toml(&format!("# comment\n{CHAIN}")).unwrap();
    let c = ExperimentConfig::from_toml(&CHAIN.replace("seed = 3", "seed = 4")).unwrap();
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    assert_ne!(a.hash().unwrap(), c.hash().unwrap());
}

#[test]
fn zero_timestep_gives_a_flat_curve_at_the_reference_state_energy() {
    let cfg = ExperimentConfig::from_toml(&CHAIN.replace("dt = 0.4", "dt = 0.0")).unwrap();
    let bundle = run(&cfg).unwrap();
    let p = prepare(&cfg).unwrap();
    let e_ref = p.layout.system().basis_state_energy(p.target.bits);
    for point in &bundle.curve.points {
        assert!((point.energy.unwrap() - e_ref).abs() < 1e-10, "{point:?}");
    }
}

#[test]
fn run_vs_itself_compares_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(CHAIN).unwrap();
    run(&cfg).unwrap().write(dir.path()).unwrap();
    let r = load_run(dir.path()).unwrap();
    let rows = compare(&r, &r).unwrap();
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert_eq!(row.energy_diff, Some(0.0));
        assert_eq!(row.max_dh_per_site, 0.0);
        assert_eq!(row.max_ds, 0.0);
    }
}

#[test]
fn outputs_carry_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(CHAIN).unwrap();
    let bundle = run(&cfg).unwrap();
    bundle.write(dir.path()).unwrap();
    let curve = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(curve.lines().next().unwrap(), format!("# config_hash={}", bundle.config_hash));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], bundle.config_hash.as_str());
    assert_eq!(manifest["seed"], 3);
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn binary_runs_and_compares() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CHAIN);
    let out = dir.path().join("run");
    let status = kqd().args(["run", "--config"]).arg(&config).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let report = dir.path().join("compare.csv");
    let status = kqd().arg("compare").arg(&out).arg(&out).arg("--out").arg(&report).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(report).unwrap();
    assert_eq!(text.lines().count(), 2 + 5);
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &CHAIN.replace("d = 5", "d = 0"));
    let out = kqd().args(["run", "--config"]).arg(&config).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("krylov.d"));
    let out = kqd().args(["run", "--preset", "missing", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // A vanishing overlap matrix leaves nothing to project onto.
    let zero = DMatrix::<Complex64>::zeros(3, 3);
    let pair = KrylovPair { h: zero.clone(), s: zero, structure: Structure::Hermitian, dt: 0.1, provenance: Provenance::Exact };
    let path = dir.path().join("pair.json");
    std::fs::write(&path, pair_document("none", &pair)).unwrap();
    let out = kqd().args(["solve", "--pair"]).arg(&path).arg("--out").arg(dir.path().join("c.csv")).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn lattice_and_circuit_commands_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let layout = dir.path().join("ring.json");
    let out = kqd().args(["lattice", "--layout", "ring-9", "--out"]).arg(&layout).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("sites 9"));
    let config = write_config(
        dir.path(),
        &CHAIN.replace("chain = 7\ncontrol = 0", &format!("file = {:?}", layout.to_str().unwrap())),
    );
    let circuits = dir.path().join("circuits");
    let status = kqd().args(["circuit", "--config"]).arg(&config).arg("--out").arg(&circuits).status().unwrap();
    assert!(status.success());
    let bases = std::fs::read_to_string(circuits.join("bases.csv")).unwrap();
    // Header comment, column names and 2 (k + 2) bases.
    assert_eq!(bases.lines().count(), 2 + 8);
    assert!(circuits.join("prep.json").exists() && circuits.join("step.json").exists());
}
