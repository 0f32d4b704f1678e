use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ccwgd() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ccwgd"));
    cmd.env("CCWGD_LOG", "error");
    cmd
}

fn run(args: &[&str]) -> Output {
    ccwgd().args(args).output().expect("spawn ccwgd")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_CAPACITY: &str = r#"{
  "channel": { "kind": "awgn" },
  "cost": { "kind": "power" },
  "dual": { "mode": "dual-ascent", "lambda0": 0.25, "budget": 1.0 },
  "solver": { "num_particles": 16, "max_iters": 30, "schedule": { "kind": "constant", "tau0": 0.2 }, "seed": 3 },
  "importance": { "samples": 32 }
}"#;

fn small_capacity(dir: &Path) -> PathBuf {
    write(dir, "cap.json", SMALL_CAPACITY)
}

#[test]
fn capacity_writes_trace_particles_and_result() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_capacity(tmp.path());
    let out = tmp.path().join("out");
    let o = run(&[
        "capacity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "iter,lambda,L_hat,R_hat,B_hat,grad_norm,w2_step");
    assert_eq!(lines.count(), 30);

    let particles = fs::read_to_string(out.join("particles.csv")).unwrap();
    assert_eq!(particles.lines().next().unwrap(), "# n=1 N=16 seed=3");
    assert_eq!(particles.lines().filter(|l| !l.starts_with('#')).count(), 16);

    let result = json(&out.join("result.json"));
    for key in [
        "rate_nats",
        "cost",
        "lambda",
        "iterations",
        "stop_reason",
        "seed",
        "config",
    ] {
        assert!(result.get(key).is_some(), "missing {key}");
    }
    assert_eq!(result["seed"], 3);
    assert_eq!(result["iterations"], 30);
    assert_eq!(result["stop_reason"], "max_iters");
    // Defaults are written out in the echo.
    assert!(result["config"]["solver"]["grad_tol"].is_f64());
    assert!(result["config"]["importance"]["proposal"].is_object());
}

#[test]
fn csv_numbers_round_trip_exactly() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_capacity(tmp.path());
    let out = tmp.path().join("out");
    assert!(run(&[
        "capacity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let result = json(&out.join("result.json"));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    for line in trace.lines().skip(1) {
        for field in line.split(',') {
            let v: f64 = field.parse().unwrap();
            assert_eq!(format!("{v:?}").parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
    let text = fs::read_to_string(out.join("particles.csv")).unwrap();
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        let v: f64 = line.parse().unwrap();
        assert!(v.is_finite());
        assert_eq!(format!("{v:?}"), line);
    }
    assert!(result["rate_nats"].as_f64().unwrap().is_finite());
}

#[test]
fn rerun_from_config_echo_is_bit_exact() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_capacity(tmp.path());
    let first = tmp.path().join("first");
    assert!(run(&[
        "capacity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        first.to_str().unwrap()
    ])
    .status
    .success());
    let echo = json(&first.join("result.json"))["config"].clone();
    let echo_path = write(tmp.path(), "echo.json", &serde_json::to_string_pretty(&echo).unwrap());
    let second = tmp.path().join("second");
    let o = run(&[
        "capacity",
        "--config",
        echo_path.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["trace.csv", "particles.csv", "result.json"] {
        assert_eq!(
            fs::read(first.join(f)).unwrap(),
            fs::read(second.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_capacity(tmp.path());
    let mut outs = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(format!("t{threads}"));
        let o = run(&[
            "--threads",
            threads,
            "capacity",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outs.push(out);
    }
    for f in ["trace.csv", "particles.csv", "result.json"] {
        assert_eq!(
            fs::read(outs[0].join(f)).unwrap(),
            fs::read(outs[1].join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_capacity(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&[
        "capacity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap()
    ])
    .status
    .success());
    assert!(run(&[
        "capacity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--seed",
        "99"
    ])
    .status
    .success());
    let rb = json(&b.join("result.json"));
    assert_eq!(rb["seed"], 99);
    assert_eq!(rb["config"]["solver"]["seed"], 99);
    assert!(fs::read_to_string(b.join("particles.csv"))
        .unwrap()
        .starts_with("# n=1 N=16 seed=99"));
    assert_ne!(
        fs::read(a.join("particles.csv")).unwrap(),
        fs::read(b.join("particles.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_2_with_location() {
    let tmp = TempDir::new().unwrap();
    let bad_key = write(
        tmp.path(),
        "bad.json",
        "{\n  \"channel\": { \"kind\": \"awgn\" },\n  \"solver\": { \"num_partcles\": 4 }\n}\n",
    );
    let o = run(&[
        "capacity",
        "--config",
        bad_key.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("solver"), "{msg}");
    assert!(msg.contains(":3:"), "{msg}");

    let bad_value = write(
        tmp.path(),
        "neg.json",
        r#"{ "channel": { "kind": "awgn" }, "solver": { "num_particles": 0 } }"#,
    );
    let o = run(&[
        "capacity",
        "--config",
        bad_value.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("solver.num_particles"), "{}", stderr(&o));

    let no_budget = write(
        tmp.path(),
        "nobudget.json",
        r#"{ "channel": { "kind": "awgn" }, "dual": { "mode": "dual-ascent" } }"#,
    );
    let o = run(&[
        "capacity",
        "--config",
        no_budget.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dual.budget"));

    let o = run(&["capacity", "--preset", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergent_run_exits_1_and_keeps_partial_trace() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "diverge.json",
        r#"{
  "channel": { "kind": "awgn" },
  "cost": { "kind": "power" },
  "dual": { "mode": "fixed", "lambda0": 100.0 },
  "solver": { "num_particles": 8, "max_iters": 1000, "schedule": { "kind": "constant", "tau0": 1.0 }, "grad_tol": 0.0 },
  "importance": { "samples": 8 }
}"#,
    );
    let out = tmp.path().join("out");
    let o = run(&[
        "capacity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let rows = trace.lines().count() - 1;
    assert!((1..1000).contains(&rows), "{rows} rows");
    assert!(!out.join("result.json").exists());
}

#[test]
fn rd_writes_trace_with_expected_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "rd.json",
        r#"{
  "source": { "kind": "gaussian", "dim": 1, "mean": 0.0, "variance": 1.0, "count": 256, "seed": 1 },
  "distortion": { "kind": "squared-error" },
  "lambda": 2.0,
  "solver": { "num_particles": 16, "max_iters": 20 }
}"#,
    );
    let out = tmp.path().join("out");
    let o = run(&["rd", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "iter,lambda,R_hat,D_hat,grad_norm");
    assert!(trace.lines().count() > 1);
    let r = json(&out.join("result.json"));
    assert!(r["rate_nats"].as_f64().unwrap() >= 0.0);
    assert!(r["distortion"].as_f64().unwrap() > 0.0);
}

#[test]
fn rd_rejects_unknown_distortion() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "rd.json",
        r#"{
  "source": { "kind": "gaussian", "dim": 1, "count": 64 },
  "distortion": { "kind": "hamming" },
  "lambda": 2.0
}"#,
    );
    let o = run(&[
        "rd",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("distortion"), "{}", stderr(&o));
}

#[test]
fn ba_on_bsc_matrix_gives_known_capacity() {
    let tmp = TempDir::new().unwrap();
    let m = write(tmp.path(), "bsc.csv", "0.9,0.1\n0.1,0.9\n");
    let out = tmp.path().join("out");
    let o = run(&["ba", "--matrix", m.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&out.join("result.json"));
    let c = r["points"][0]["rate_nats"].as_f64().unwrap();
    let h = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
    assert!((c - (2f64.ln() - h)).abs() < 1e-9, "{c}");
    assert!((c - 0.3681).abs() < 5e-5);
}

#[test]
fn ba_rejects_non_stochastic_row() {
    let tmp = TempDir::new().unwrap();
    let m = write(tmp.path(), "bad.csv", "0.9,0.1\n0.2,0.9\n");
    let o = run(&[
        "ba",
        "--matrix",
        m.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ba_lambda_sweep_writes_one_row_per_lambda() {
    let tmp = TempDir::new().unwrap();
    let m = write(tmp.path(), "ch.csv", "0.8,0.2,0.0\n0.1,0.8,0.1\n0.0,0.2,0.8\n");
    let costs = write(tmp.path(), "costs.csv", "0,1,4\n");
    let out = tmp.path().join("out");
    let o = run(&[
        "ba",
        "--matrix",
        m.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
        "--lambdas",
        "0,0.1,0.5,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("ba_sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let costs: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(costs.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{costs:?}");
}

const SMALL_SWEEP: &str = r#"{
  "base": {
    "channel": { "kind": "awgn" },
    "cost": { "kind": "power" },
    "dual": { "mode": "fixed" },
    "solver": { "num_particles": 8, "max_iters": 200, "schedule": { "kind": "constant", "tau0": 1.0 }, "grad_tol": 0.0 },
    "importance": { "samples": 8 }
  },
  "param": "lambda",
  "values": VALUES
}"#;

#[test]
fn sweep_writes_one_row_per_grid_point() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "sweep.json",
        &SMALL_SWEEP.replace("VALUES", "[0.2, 0.3, 0.4]"),
    );
    let out = tmp.path().join("out");
    let o = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "param,rate_nats,cost,lambda,iterations");
    let params: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(params, vec![0.2, 0.3, 0.4]);
}

#[test]
fn sweep_with_divergent_point_exits_1_and_keeps_other_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "sweep.json",
        &SMALL_SWEEP.replace("VALUES", "[0.3, 100.0, 0.4]"),
    );
    let out = tmp.path().join("out");
    let o = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let params: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(params, vec![0.3, 0.4]);
}

#[test]
fn check_passes_on_all_channels() {
    let o = run(&["check"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["awgn", "mimo-awgn", "fading-csir", "fading-nocsir"] {
        assert!(text.lines().any(|l| l.starts_with(name) && l.ends_with("ok")), "{text}");
    }
}

#[test]
fn log_level_follows_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_capacity(tmp.path());
    let args = [
        "capacity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ];
    let quiet = ccwgd().args(args).output().unwrap();
    let loud = ccwgd().env("CCWGD_LOG", "debug").args(args).output().unwrap();
    assert!(quiet.stderr.is_empty(), "{}", stderr(&quiet));
    assert!(stderr(&loud).contains("DEBUG"), "{}", stderr(&loud));
    assert!(stderr(&loud).contains("INFO"), "{}", stderr(&loud));
}
