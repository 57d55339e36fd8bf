//! End-to-end tests of the `emel` binary: exit-code contract, artifact
//! layout, zero-data sanity, config-echo reproducibility, and the
//! reconstruct synthesis.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn emel() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emel"))
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path
}

fn zero_config() -> &'static str {
    r#"{
      "problem": {
        "p": 1.0,
        "r": {"breakpoints": [0.3, 0.7], "pieces": [[0.6], [1.8], [1.1]]},
        "nu": {"breakpoints": [], "pieces": [[1.0]]},
        "T": 0.25
      },
      "discretization": {"n_modes": 8},
      "outputs": {"sample_times": [0.1], "jump_delta": 0.02}
    }"#
}

fn heat_config() -> &'static str {
    r#"{
      "problem": {
        "p": 0.0,
        "allow_zero_p": true,
        "r": {"pieces": [[1.0]]},
        "nu": {"pieces": [[1.0]]},
        "h0_1": {"trig": [[1.0, 1, "cos"]]},
        "T": 0.1
      },
      "discretization": {"n_modes": 8},
      "integrator": {"rel_tol": 1e-10, "abs_tol": 1e-12}
    }"#
}

fn run_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

#[test]
fn run_zero_data_produces_zero_series() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "config.json", zero_config());
    let out_dir = tmp.path().join("runs");
    let out = emel().args(["run", "--config"]).arg(&config).arg("--out").arg(&out_dir).output().unwrap();
    let run_dir = PathBuf::from(run_ok(&out));

    for artifact in ["trajectory.csv", "energy.csv", "diagnostics.json", "report.json"] {
        assert!(run_dir.join(artifact).exists(), "missing {artifact}");
    }
    let csv = fs::read_to_string(run_dir.join("trajectory.csv")).unwrap();
    for line in csv.lines().skip(1) {
        for cell in line.split(',').skip(1) {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(v, 0.0, "nonzero entry {cell}");
        }
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "ok");
}

#[test]
fn negative_p_exits_2_citing_positivity() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = zero_config().replace("\"p\": 1.0", "\"p\": -1.0");
    let config = write(tmp.path(), "config.json", &bad);
    let out_dir = tmp.path().join("runs");
    let out = emel().args(["run", "--config"]).arg(&config).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("positive"), "stderr should cite positivity: {stderr}");
    // validation failures never produce partial trajectory files
    assert!(!out_dir.exists() || fs::read_dir(&out_dir).unwrap().next().is_none());
}

#[test]
fn unparseable_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "config.json", "{not json");
    let out = emel().args(["run", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rerun_from_echoed_config_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "config.json", heat_config());
    let out_dir = tmp.path().join("runs");
    let out = emel().args(["run", "--config"]).arg(&config).arg("--out").arg(&out_dir).output().unwrap();
    let run_dir = PathBuf::from(run_ok(&out));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    let echoed = serde_json::to_string_pretty(&report["config"]).unwrap();
    let config2 = write(tmp.path(), "echoed.json", &echoed);
    let out_dir2 = tmp.path().join("runs2");
    let out2 =
        emel().args(["run", "--config"]).arg(&config2).arg("--out").arg(&out_dir2).output().unwrap();
    let run_dir2 = PathBuf::from(run_ok(&out2));

    for artifact in ["trajectory.csv", "energy.csv"] {
        let a = fs::read(run_dir.join(artifact)).unwrap();
        let b = fs::read(run_dir2.join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between original and echoed config");
    }
    // content addressing: same canonical config, same directory name
    assert_eq!(run_dir.file_name(), run_dir2.file_name());
}

#[test]
fn reconstruct_single_mode_and_heat_decay() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "config.json", heat_config());
    let out_dir = tmp.path().join("runs");
    let out = emel().args(["run", "--config"]).arg(&config).arg("--out").arg(&out_dir).output().unwrap();
    let run_dir = PathBuf::from(run_ok(&out));

    let field_csv = tmp.path().join("field.csv");
    let out = emel()
        .args(["reconstruct", "--trajectory"])
        .arg(run_dir.join("trajectory.csv"))
        .args(["--times", "0.0,0.1", "--resolution", "4", "--out"])
        .arg(&field_csv)
        .output()
        .unwrap();
    run_ok(&out);

    let text = fs::read_to_string(&field_csv).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 8);
    // at t = 0: h1 = cos(2 pi z) on z = {0, .25, .5, .75}
    let expect0 = [1.0, 0.0, -1.0, 0.0];
    for (row, &e) in rows[..4].iter().zip(&expect0) {
        assert!((row[2] - e).abs() < 1e-10, "h1({}) = {} vs {e}", row[1], row[2]);
    }
    // at t = 0.1: decayed by exp(-4 pi^2 / 10)
    let decay = (-4.0 * std::f64::consts::PI.powi(2) * 0.1).exp();
    for (row, &e) in rows[4..].iter().zip(&expect0) {
        assert!((row[2] - e * decay).abs() < 1e-6, "h1({}) = {} vs {}", row[1], row[2], e * decay);
    }
}

#[test]
fn reconstruct_rejects_out_of_range_time() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "config.json", heat_config());
    let out_dir = tmp.path().join("runs");
    let out = emel().args(["run", "--config"]).arg(&config).arg("--out").arg(&out_dir).output().unwrap();
    let run_dir = PathBuf::from(run_ok(&out));
    let out = emel()
        .args(["reconstruct", "--trajectory"])
        .arg(run_dir.join("trajectory.csv"))
        .args(["--times", "0.5", "--resolution", "4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_3_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = heat_config().replace(
        r#""integrator": {"rel_tol": 1e-10, "abs_tol": 1e-12}"#,
        r#""integrator": {"rel_tol": 1e-10, "abs_tol": 1e-12, "max_steps": 3}"#,
    );
    let config = write(tmp.path(), "config.json", &cfg);
    let out_dir = tmp.path().join("runs");
    let out = emel().args(["run", "--config"]).arg(&config).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    // the report records the failure; no trajectory artifacts appear
    let run_dir = fs::read_dir(&out_dir).unwrap().next().unwrap().unwrap().path();
    assert!(run_dir.join("report.json").exists());
    assert!(!run_dir.join("trajectory.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "solver-error");
}

#[test]
fn reconstruct_rejects_malformed_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let bad =
        write(tmp.path(), "traj.csv", "t,a1_0,a2_0,b_0,bdot_0\n0.0,not-a-number,0.0,0.0,0.0\n");
    let out = emel()
        .args(["reconstruct", "--trajectory"])
        .arg(&bad)
        .args(["--times", "0.0", "--resolution", "4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn study_unknown_kind_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write(tmp.path(), "manifest.json", r#"{"kind": "mystery"}"#);
    let out = emel().args(["study", "--manifest"]).arg(&manifest).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn study_convergence_steady_state_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write(
        tmp.path(),
        "manifest.json",
        r#"{
          "kind": "convergence",
          "problem": {
            "p": 1.0,
            "r": {"pieces": [[1.0]]},
            "nu": {"pieces": [[1.0]]},
            "h0_1": {"trig": [[0.4, 1, "cos"], [0.15, 3, "sin"]]},
            "u1": {"trig": [[0.2, 1, "sin"]]},
            "T": 0.25
          },
          "n_list": [4, 8, 16]
        }"#,
    );
    let out_dir = tmp.path().join("studies");
    let out =
        emel().args(["study", "--manifest"]).arg(&manifest).arg("--out").arg(&out_dir).output().unwrap();
    let study_dir = PathBuf::from(run_ok(&out).lines().next().unwrap().to_string());
    assert!(study_dir.join("rungs.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(study_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
}

#[test]
fn study_stability_ladder_rows_and_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write(
        tmp.path(),
        "manifest.json",
        r#"{
          "kind": "stability",
          "problem": {
            "p": 1.0,
            "r": {"breakpoints": [0.5], "pieces": [[0.9], [1.5]]},
            "nu": {"pieces": [[1.0]]},
            "h0_1": {"trig": [[0.4, 1, "cos"]]},
            "u1": {"trig": [[0.2, 1, "sin"]]},
            "T": 0.25
          },
          "targets": ["h0", "u1"],
          "amplitude": 0.2,
          "rungs": 3,
          "ratio": 0.5,
          "n_modes": 8
        }"#,
    );
    let out_dir = tmp.path().join("studies");
    let out = emel()
        .args(["study", "--manifest"])
        .arg(&manifest)
        .arg("--out")
        .arg(&out_dir)
        .args(["--threads", "2"])
        .output()
        .unwrap();
    let study_dir = PathBuf::from(run_ok(&out).lines().next().unwrap().to_string());
    let rungs = fs::read_to_string(study_dir.join("rungs.csv")).unwrap();
    assert_eq!(rungs.lines().count(), 1 + 2 * 3, "two targets, three rungs each");
}
