use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qlab::experiments::{execute_run, exact_oracle};
use qlab::hard::build_hard_mdp;
use qlab::io::{self, ExperimentFile};
use qlab::learners::RunRecord;
use qlab::mdp::random::random_mdp;
use serde_json::Value;

fn qlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlab"))
        .args(args)
        .env_remove("QLAB_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn hard_oracle_values() {
    let o = qlab(&["hard-mdp", "--gamma", "0.8", "--oracle"]);
    assert_eq!(code(&o), 0);
    let v: Vec<f64> = serde_json::from_value(stdout_json(&o)["v_star"].clone()).unwrap();
    let want = [0.0, 3.75, 3.75, 5.0];
    assert!(v.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12), "{v:?}");
}

#[test]
fn hard_instance_emits_a_valid_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("hard.json");
    assert_eq!(code(&qlab(&["hard-mdp", "--gamma", "0.9", "--out", s(&p)])), 0);
    assert_eq!(io::load_mdp(&p).unwrap(), build_hard_mdp(0.9).unwrap());
    let o = qlab(&["validate", s(&p)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok"));

    let o = qlab(&["hard-mdp", "--gamma", "0.9", "--matched-mrp"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["num_actions"], 1);
    // below the admissible discount range
    assert_eq!(code(&qlab(&["hard-mdp", "--gamma", "0.5"])), 2);
}

#[test]
fn output_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qlab"))
        .args(["hard-mdp", "--gamma", "0.8", "--out", "h.json"])
        .env("QLAB_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("h.json").exists());
}

#[test]
fn validation_failures_list_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(
        &p,
        r#"{"version":1,"num_states":2,"num_actions":1,"discount":0.9,
            "rewards":[[0.5],[2.0]],"transitions":[[[0.5,0.6]],[[1.0,0.0]]]}"#,
    )
    .unwrap();
    let o = qlab(&["validate", s(&p)]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row-sum") && err.contains("reward-range"), "{err}");
}

#[test]
fn schema_and_version_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    fs::write(&p, r#"{"num_states":1,"num_actions":1,"rewards":[[0]],"transitions":[[[1]]]}"#).unwrap();
    let o = qlab(&["validate", s(&p)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/discount"));

    fs::write(&p, r#"{"version":7,"num_states":1,"num_actions":1,"discount":0.5,"rewards":[[0]],"transitions":[[[1]]]}"#)
        .unwrap();
    let o = qlab(&["validate", s(&p)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("version 7"));

    let o = qlab(&["validate", s(&dir.path().join("missing.json"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_one() {
    let o = qlab(&["solve", "--no-such-flag"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&qlab(&["frobnicate"])), 1);
    assert_eq!(code(&qlab(&[])), 1);
    let o = qlab(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("hard-mdp"));
}

#[test]
fn non_convergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    io::save_mdp(&random_mdp(4, 2, 0.99, 1).unwrap(), &p).unwrap();
    let o = qlab(&["solve", "--mdp", s(&p), "--max-iters", "3"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("did not converge"));
}

fn write_run_config(dir: &Path, model: &str, algorithm: &str) -> std::path::PathBuf {
    let p = dir.join(format!("{algorithm}.json"));
    fs::write(
        &p,
        format!(
            r#"{{"version":1,"run":{{"algorithm":"{algorithm}","instance":{{"kind":"file","path":"{model}"}},
                "schedule":{{"kind":"rescaled_linear","c":1.0}},"iterations":2000,"seed":42,"checkpoint_every":500}}}}"#
        ),
    )
    .unwrap();
    p
}

#[test]
fn train_against_solve_output_matches_in_process_run() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    io::save_mdp(&random_mdp(5, 2, 0.9, 3).unwrap(), &model).unwrap();
    let solved = dir.path().join("solve.json");
    assert_eq!(code(&qlab(&["solve", "--mdp", s(&model), "--out", s(&solved)])), 0);

    let cfg = write_run_config(dir.path(), "m.json", "sync_q");
    let rec_path = dir.path().join("rec.json");
    let csv = dir.path().join("ck.csv");
    let o = qlab(&[
        "train",
        "--config",
        s(&cfg),
        "--oracle-from-solve",
        s(&solved),
        "--out",
        s(&rec_path),
        "--checkpoints-csv",
        s(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let from_cli: RunRecord = io::load_run_record(&rec_path).unwrap();

    let ExperimentFile::Run(spec) = io::load_experiment(&cfg).unwrap() else { panic!() };
    let oracle = io::load_solve_output(&solved).unwrap().oracle_for(spec.algorithm).unwrap();
    let in_process = execute_run(&spec, Some(&oracle)).unwrap();
    assert!(from_cli.same_outcome(&in_process));
    assert_eq!(from_cli.checkpoints.len(), 4);
    assert!(from_cli.checkpoints.iter().all(|c| c.sup_error.is_some()));

    // the default in-process oracle agrees with the solve file
    let exact = execute_run(&spec, Some(&exact_oracle(&spec.problem().unwrap()).unwrap())).unwrap();
    for (a, b) in from_cli.checkpoints.iter().zip(&exact.checkpoints) {
        assert!((a.sup_error.unwrap() - b.sup_error.unwrap()).abs() < 1e-9);
    }
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,sup_error\n500,"));

    // a Q solve cannot score TD
    let td = write_run_config(dir.path(), "m.json", "sync_td");
    let o = qlab(&["train", "--config", s(&td), "--oracle-from-solve", s(&solved)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn solve_finite_horizon_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.json");
    io::save_finite_horizon(&qlab::mdp::random::random_finite_horizon(2, 2, 3, false, 4).unwrap(), &p).unwrap();
    let o = qlab(&["solve", "--mdp", s(&p)]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["kind"], "finite_horizon");
    assert_eq!(v["q"].as_array().unwrap().len(), 3);
}

#[test]
fn diagnose_reports_the_behavior_chain() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    io::save_mdp(&random_mdp(4, 2, 0.9, 8).unwrap(), &p).unwrap();
    let o = qlab(&["diagnose", "--mdp", s(&p)]);
    assert_eq!(code(&o), 0);
    let d = stdout_json(&o);
    assert_eq!(d["ergodic"], true);
    let pi: Vec<f64> = serde_json::from_value(d["stationary"].clone()).unwrap();
    assert_eq!(pi.len(), 8);
    assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(d["t_mix"].as_u64().unwrap() >= 1);
}

#[test]
fn sweep_writes_runs_summary_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"version":1,"sweep":{"algorithm":"sync_td","instance":{"kind":"hard_mrp"},
            "gamma_grid":[0.8,0.85,0.9],"t_grid":[200,400],"schedule":{"kind":"rescaled_linear","c":1.0},
            "runs_per_cell":3,"seed":5,"metric":{"kind":"state_error","state":1},"aggregate":"rms"}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let plot = dir.path().join("plot.csv");
    let o = qlab(&[
        "sweep",
        "--config",
        s(&cfg),
        "--out-dir",
        s(&out),
        "--plot-data",
        s(&plot),
        "--fit",
        "iterations",
        "--thresholds",
        "0.5,0.01",
        "--quiet",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    let mut lines = runs.lines();
    assert_eq!(lines.next(), Some("algorithm,gamma,T,seed,error,walltime"));
    assert_eq!(lines.count(), 3 * 2 * 3);
    let summary = io::load_sweep_summary(&out.join("summary.json")).unwrap();
    assert_eq!(summary.cells.len(), 6);
    assert_eq!(summary.thresholds.len(), 6);
    // a two-point T grid cannot be fitted; the reason is recorded instead
    assert!(summary.fits.is_empty() && !summary.notes.is_empty());
    let plot = fs::read_to_string(&plot).unwrap();
    assert_eq!(plot.lines().count(), 1 + 6 * 4);
}
