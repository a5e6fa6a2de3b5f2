use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jc_core::{Channel, Complexity, ControlSet, TimeGrid, C64};
use jc_oct::formats::write_pulse;

const BIN: &str = env!("CARGO_BIN_EXE_jc-oct");

const SHORT_SUP02: &str = r#"
seed = 5

[system]
n_max = 8

[grid]
duration_us = 12.0
dt_us = 0.02

[initial]
atom = "g+ie"

[target]
name = "sup0n:2"

[channels]
preset = "sup02"

[weights]
lambda_atom = 0.2

[stopping]
max_iterations = 15
stop_infidelity = 1e-4
stop_delta_j = 1e-12
"#;

fn jc(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("JC_OCT_OUT").output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn trivial_superposition_target_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &SHORT_SUP02.replace("sup0n:2", "sup0n:1"));
    let o = jc(&["optimize", s(&cfg), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n > 1"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_missing_files_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        &SHORT_SUP02.replace("n_max = 8", "n_max = 8\nnmax = 8"),
    );
    assert_eq!(jc(&["optimize", "--config", s(&cfg)]).status.code(), Some(2));
    assert_eq!(
        jc(&["optimize", s(&tmp.path().join("missing.toml"))]).status.code(),
        Some(2)
    );
    assert_eq!(jc(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sup.toml", SHORT_SUP02);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let oa = jc(&["optimize", s(&cfg), "--out", s(&a)]);
    let ob = jc(&["optimize", s(&cfg), "--out", s(&b)]);
    // 15 iterations do not reach 1e-4
    assert_eq!(oa.status.code(), Some(3), "{}", stderr(&oa));
    assert_eq!(ob.status.code(), Some(3));
    for f in ["pulse.csv", "final_state.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(p.join("log.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
            .collect()
    };
    assert_eq!(strip(&a), strip(&b));
    let log = fs::read_to_string(a.join("log.csv")).unwrap();
    assert!(log.lines().nth(1).unwrap() == "iter,J,J_tau,J_t,wall_ms");
    assert_eq!(log.lines().count(), 2 + 16);
}

#[test]
fn every_artifact_carries_version_and_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sup.toml", SHORT_SUP02);
    let out = tmp.path().join("o");
    jc(&["optimize", s(&cfg), "--out", s(&out)]);
    let sum = summary(&out);
    let hash = sum["config_sha256"].as_str().unwrap().to_string();
    assert_eq!(sum["tool"], "jc-oct 0.1.0");
    for f in ["pulse.csv", "final_state.csv", "log.csv"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert!(text.contains(&format!("# jc-oct 0.1.0; config_sha256={hash}")), "{f}");
    }
    let other = tmp.path().join("seeded");
    jc(&["optimize", s(&cfg), "--out", s(&other), "--seed", "6"]);
    assert_ne!(summary(&other)["config_sha256"], sum["config_sha256"]);
}

#[test]
fn output_root_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "envrun.toml", SHORT_SUP02);
    let root = tmp.path().join("root");
    let o = Command::new(BIN)
        .args(["optimize", s(&cfg)])
        .env("JC_OCT_OUT", &root)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(root.join("envrun").join("pulse.csv").exists());
}

const HALF_RABI: &str = r#"
[system]
n_max = 4

[grid]
duration_us = 10.0
dt_us = 0.01

[initial]
atom = "e"

[target]
name = "fock:1"
"#;

fn zero_pulse(dir: &Path, n: usize, duration: f64) -> PathBuf {
    let grid = TimeGrid::new(duration, n).unwrap();
    let p = dir.join(format!("zero_{n}.csv"));
    fs::write(&p, write_pulse(&ControlSet::zeros(n), &grid, "test")).unwrap();
    p
}

#[test]
fn zero_pulse_half_rabi_cycle_makes_one_photon() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rabi.toml", HALF_RABI);
    let pulse = zero_pulse(tmp.path(), 1000, 10.0);
    let out = tmp.path().join("o");
    let o = jc(&["propagate", s(&cfg), "--pulse", s(&pulse), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let j = summary(&out)["final_infidelity"].as_f64().unwrap();
    assert!(j < 1e-9, "{j}");
    let pops = fs::read_to_string(out.join("populations.csv")).unwrap();
    let rows: Vec<Vec<f64>> = pops
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 1001);
    for r in &rows {
        assert!((r[1] + r[2] - 1.0).abs() < 1e-10);
    }
    assert!(
        fs::read_to_string(out.join("photons.csv"))
            .unwrap()
            .lines()
            .nth(1)
            .unwrap()
            == "t_us,mean_n,delta_n"
    );
}

#[test]
fn pulse_of_wrong_length_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rabi.toml", HALF_RABI);
    let pulse = zero_pulse(tmp.path(), 999, 9.99);
    let o = jc(&[
        "propagate",
        s(&cfg),
        "--pulse",
        s(&pulse),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not match"), "{}", stderr(&o));
}

fn real_pulse(dir: &Path) -> PathBuf {
    let grid = TimeGrid::new(20.0, 2000).unwrap();
    let samples = (0..2000)
        .map(|j| {
            let t = grid.control_time(j);
            C64::new(20.0 * (-(t - 10.0).powi(2) / 8.0).exp() * (0.5 * t).cos(), 0.0)
        })
        .collect();
    let c = ControlSet::zeros(2000)
        .with_channel(Channel::Atom, Complexity::Real, samples)
        .unwrap();
    let p = dir.join("real.csv");
    fs::write(&p, write_pulse(&c, &grid, "test")).unwrap();
    p
}

#[test]
fn analyze_real_pulse_gives_symmetric_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let pulse = real_pulse(tmp.path());
    let out = tmp.path().join("o");
    let o = jc(&["analyze", s(&pulse), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("spectrum_atom.csv")).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(2)
        .map(|l| {
            let (f, i) = l.split_once(',').unwrap();
            (f.parse().unwrap(), i.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 16000);
    let zero = rows.iter().position(|r| r.0 == 0.0).unwrap();
    let peak = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    for k in 1..zero {
        assert!((rows[zero + k].1 - rows[zero - k].1).abs() <= 1e-12 * peak);
    }
    assert!(out.join("peaks_atom.csv").exists());
    assert!(!out.join("spectrum_cavity.csv").exists());
}

#[test]
fn analyze_rejects_empty_file() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = jc(&["analyze", s(&empty), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_copy_ensemble_matches_optimize() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "one.toml",
        &format!("{SHORT_SUP02}\n[ensemble]\neffects = []\n"),
    );
    let (a, b) = (tmp.path().join("opt"), tmp.path().join("ens"));
    jc(&["optimize", s(&cfg), "--out", s(&a)]);
    let o = jc(&["ensemble", s(&cfg), "--out", s(&b)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(
        fs::read(a.join("pulse.csv")).unwrap(),
        fs::read(b.join("pulse.csv")).unwrap()
    );
    assert_eq!(summary(&a)["final_infidelity"], summary(&b)["final_infidelity"]);
    assert_eq!(summary(&b)["copies"], 1);
}

#[test]
fn evaluate_reports_per_copy_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "ens.toml",
        &format!("{SHORT_SUP02}\n[ensemble]\neffects = [\"frequency\", \"crosstalk\"]\ncrosstalk_n_max = 60\n"),
    );
    let opt = tmp.path().join("opt");
    jc(&["optimize", s(&cfg), "--out", s(&opt)]);
    let out = tmp.path().join("eval");
    let o = jc(&[
        "ensemble",
        s(&cfg),
        "--evaluate",
        s(&opt.join("pulse.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let sum = summary(&out);
    assert_eq!(sum["copies"], 6);
    let mean = sum["ensemble_mean_infidelity"].as_f64().unwrap();
    let per_copy = fs::read_to_string(out.join("per_copy.csv")).unwrap();
    let values: Vec<f64> = per_copy
        .lines()
        .skip(2)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 6);
    assert!((values.iter().sum::<f64>() / 6.0 - mean).abs() < 1e-15);
    assert!(String::from_utf8_lossy(&o.stdout).contains("ensemble mean J_tau over 6 copies"));
}

#[test]
fn ensemble_without_section_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "noens.toml", SHORT_SUP02);
    assert_eq!(
        jc(&["ensemble", s(&cfg), "--out", s(&tmp.path().join("o"))])
            .status
            .code(),
        Some(2)
    );
}
