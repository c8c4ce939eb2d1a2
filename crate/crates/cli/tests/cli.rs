use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use alignlab::syndata::read_dataset;
use alignlab_cli::results::{read_results, summarize_rows};
use serde_json::Value;

fn alignlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alignlab"))
        .args(args)
        .env_remove(alignlab_cli::WORKERS_ENV)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_dataset(dir: &Path, r: usize) -> String {
    let out = dir.join(format!("d{r}.bin"));
    let o = alignlab(&[
        "gen",
        "--r",
        &r.to_string(),
        "--seed",
        "2",
        "--n-total",
        "1500",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    s(&out).to_string()
}

const QUICK: [&str; 6] = ["--epochs", "3", "--batch-size", "128", "--lr", "0.01"];

#[test]
fn gen_full_recipe_and_regenerates_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    for p in [&a, &b] {
        let v = stdout_json(&alignlab(&[
            "gen",
            "--r",
            "8",
            "--tau",
            "1.0",
            "--seed",
            "1",
            "--out",
            s(p),
        ]));
        assert_eq!(v["splits"]["train"], 45_920);
        assert_eq!(v["splits"]["val"], 9_828);
        assert_eq!(v["splits"]["test"], 9_828);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let ds = read_dataset(&a).unwrap();
    assert_eq!(ds.spec.r, 8);
    ds.validate().unwrap();
}

#[test]
fn gen_rejects_out_of_range_redundancy() {
    let dir = tempfile::tempdir().unwrap();
    let o = alignlab(&[
        "gen",
        "--r",
        "9",
        "--tau",
        "1.0",
        "--seed",
        "1",
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("x").exists());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&alignlab(&[])), 2);
    assert_eq!(code(&alignlab(&["frobnicate"])), 2);
    assert_eq!(code(&alignlab(&["gen", "--r", "x", "--out", "y"])), 2);
}

#[test]
fn unknown_manifest_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[train]\nlearnin_rate = 0.1\n").unwrap();
    let o = alignlab(&["gen", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("learnin_rate"));
}

#[test]
fn manifest_values_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[data]\nr = 3\nseed = 5\nn_total = 800\n").unwrap();
    let v = stdout_json(&alignlab(&[
        "gen",
        "--config",
        s(&cfg),
        "--seed",
        "6",
        "--out",
        s(&dir.path().join("d")),
    ]));
    assert_eq!(v["spec"]["r"], 3);
    assert_eq!(v["spec"]["seed"], 6);
    assert_eq!(v["spec"]["n_total"], 800);
}

#[test]
fn train_is_repeatable_and_writes_record_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), 4);
    let mut outs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let mut args = vec![
            "train",
            "--data",
            &data,
            "--lambda",
            "0",
            "--seed",
            "1",
            "--out-dir",
            s(&out),
        ];
        args.extend(QUICK);
        let o = alignlab(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("checkpoint.bin").exists());
        outs.push((o.stdout, out));
    }
    assert_eq!(outs[0].0, outs[1].0);

    let rec: Value = serde_json::from_str(&fs::read_to_string(outs[0].1.join("run.json")).unwrap()).unwrap();
    assert_eq!(rec["checkpoint"], "checkpoint.bin");
    for e in rec["epochs"].as_array().unwrap() {
        // With λ = 0 the alignment term is logged but adds nothing; the epoch
        // values are weighted batch means, so only rounding separates them.
        let t = &e["train"];
        assert!(t["align"].as_f64().unwrap() > 0.0);
        let task = t["task_a"].as_f64().unwrap() + t["task_b"].as_f64().unwrap();
        assert!((t["total"].as_f64().unwrap() - task).abs() <= 1e-12 * task);
    }
}

#[test]
fn train_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.bin");
    assert_eq!(code(&alignlab(&["train", "--data", s(&missing), "--lambda", "-1"])), 2);
    let o = alignlab(&["train", "--data", s(&missing), "--lambda", "0.5"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("none.bin"));
}

fn run_sweep(dir: &Path, name: &str, workers: Option<&str>, env_workers: Option<&str>) -> (String, String) {
    let out = dir.join(name);
    let mut args = vec![
        "sweep",
        "--r-levels",
        "0,8",
        "--lambdas",
        "0,1",
        "--seeds",
        "3,4",
        "--n-total",
        "900",
        "--out-dir",
        s(&out),
    ];
    args.extend(QUICK);
    if let Some(w) = workers {
        args.extend(["--workers", w]);
    }
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_alignlab"));
    cmd.args(&args).env_remove(alignlab_cli::WORKERS_ENV);
    if let Some(w) = env_workers {
        cmd.env(alignlab_cli::WORKERS_ENV, w);
    }
    let o = cmd.output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (
        fs::read_to_string(out.join("results.csv")).unwrap(),
        fs::read_to_string(out.join("summary.csv")).unwrap(),
    )
}

#[test]
fn sweep_output_is_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let one = run_sweep(dir.path(), "w1", Some("1"), None);
    let four = run_sweep(dir.path(), "w4", Some("4"), None);
    let env = run_sweep(dir.path(), "env", None, Some("3"));
    assert_eq!(one, four);
    assert_eq!(one, env);

    let rows = read_results(one.0.as_bytes()).unwrap();
    assert_eq!(rows.len(), 8);
    let keys: Vec<(usize, f64, u64)> = rows.iter().map(|r| (r.r, r.lambda, r.seed)).collect();
    assert_eq!(keys[..4], [(0, 0.0, 3), (0, 0.0, 4), (0, 1.0, 3), (0, 1.0, 4)]);
    assert!(rows.iter().all(|r| r.is_ok()));
    assert!(one.0.starts_with("# schema_version=1\n"));
    assert!(one
        .1
        .starts_with("# schema_version=1\nR,lambda,runs,acc_A,acc_B,acc_mean,cka,svcca,mknn\n"));

    // Summary lines equal means recomputed from the results rows.
    let cells = summarize_rows(&rows);
    let line = one.1.lines().nth(3).unwrap();
    let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
    let by_hand = (rows[2].acc_a + rows[3].acc_a) / 2.0;
    assert_eq!((fields[0], fields[1], fields[2]), (0.0, 1.0, 2.0));
    assert_eq!(fields[3], by_hand);
    assert_eq!(cells[1].acc_a, by_hand);
    assert!(dir.path().join("w1/runs/R8_lambda1_seed4.json").exists());
    assert!(dir.path().join("w1/config.toml").exists());
}

#[test]
fn sweep_flags_failed_runs_in_status_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    let o = alignlab(&[
        "sweep",
        "--r-levels",
        "2",
        "--lambdas",
        "0",
        "--seeds",
        "0",
        "--n-total",
        "20",
        "--out-dir",
        s(&out),
        "--workers",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_results(fs::File::open(out.join("results.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].status, "failed");
    assert!(rows[0].acc_a.is_nan());
}

#[test]
fn sweep_rejects_bad_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(
        code(&alignlab(&["sweep", "--lambdas", "-0.5", "--out-dir", s(&out)])),
        2
    );
    assert_eq!(code(&alignlab(&["sweep", "--r-levels", "12", "--out-dir", s(&out)])), 2);
    assert_eq!(code(&alignlab(&["sweep", "--workers", "0", "--out-dir", s(&out)])), 2);
}

fn write_csv(path: &Path, rows: &[Vec<f64>]) {
    let text: String = rows
        .iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(path, format!("f0,f1,f2\n{text}")).unwrap();
}

fn random_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = alignlab::numcore::Rng::new(seed);
    (0..n).map(|_| (0..3).map(|_| rng.normal()).collect()).collect()
}

#[test]
fn metrics_identity_mismatch_and_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a.csv"),
        dir.path().join("b.csv"),
        dir.path().join("c.csv"),
    );
    write_csv(&a, &random_rows(40, 1));
    write_csv(&b, &random_rows(40, 2));
    write_csv(&c, &random_rows(30, 3));

    let v = stdout_json(&alignlab(&["metrics", "--a", s(&a), "--b", s(&a), "--k", "5"]));
    assert!((v["cka"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["svcca"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(v["mknn"].as_f64().unwrap(), 1.0);
    assert_eq!(v["k_used"], 5);

    let out = dir.path().join("r.json");
    let v = stdout_json(&alignlab(&["metrics", "--a", s(&a), "--b", s(&b), "--out", s(&out)]));
    for key in ["cka", "svcca", "mknn"] {
        assert!(v[key].as_f64().unwrap().is_finite(), "{key}");
    }
    assert!(v["svcca_k"].as_u64().unwrap() >= 1);
    assert_eq!(
        serde_json::from_str::<Value>(&fs::read_to_string(out).unwrap()).unwrap(),
        v
    );

    let o = alignlab(&["metrics", "--a", s(&a), "--b", s(&c)]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("40") && err.contains("30"), "{err}");
}

fn gate_file(dir: &Path, name: &str, f: impl Fn(usize, usize, usize) -> f64) -> String {
    let p: Vec<f64> = (0..8).map(|i| f(i >> 2, (i >> 1) & 1, i & 1)).collect();
    let path = dir.join(name);
    fs::write(&path, serde_json::json!({"sizes": [2, 2, 2], "p": p}).to_string()).unwrap();
    s(&path).to_string()
}

#[test]
fn pid_on_gate_files() {
    let dir = tempfile::tempdir().unwrap();
    let xor = gate_file(dir.path(), "xor.json", |a, b, y| if a ^ b == y { 0.25 } else { 0.0 });
    let v = stdout_json(&alignlab(&["pid", "--pmf", &xor]));
    assert!((v["S"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert!(v["residuals"]["sum_rule"].as_f64().unwrap() <= 1e-6);

    let copy = gate_file(
        dir.path(),
        "copy.json",
        |a, b, y| if a == b && b == y { 0.5 } else { 0.0 },
    );
    let v = stdout_json(&alignlab(&["pid", "--pmf", &copy]));
    assert!((v["R"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert!(v["U1"].as_f64().unwrap().abs() < 1e-3);

    let short = gate_file(dir.path(), "short.json", |a, b, y| if a ^ b == y { 0.225 } else { 0.0 });
    let o = alignlab(&["pid", "--pmf", &short]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("0.9"));
}

fn results_csv(dir: &Path, accs: &[f64]) -> String {
    let lambdas = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0];
    let mut text =
        String::from("# schema_version=1\nR,lambda,seed,acc_A,acc_B,cka,svcca,mknn,task_loss,align_loss,status\n");
    for (l, a) in lambdas.iter().zip(accs) {
        for seed in 0..2 {
            text.push_str(&format!("4,{l},{seed},{a},{a},{l},{l},{l},1.0,NaN,ok\n"));
        }
    }
    let path = dir.join("results.csv");
    fs::write(&path, text).unwrap();
    s(&path).to_string()
}

fn report_line(dir: &Path, accs: &[f64]) -> String {
    let path = results_csv(dir, accs);
    let o = alignlab(&["report", "--results", &path]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn report_classifies_constructed_results() {
    let dir = tempfile::tempdir().unwrap();
    let up = report_line(dir.path(), &[0.60, 0.61, 0.62, 0.63, 0.64, 0.65, 0.66]);
    assert!(up.contains("MONOTONE_UP"), "{up}");
    assert!(up.contains("1.000 / 1.000 / 1.000"), "{up}");
    let down = report_line(dir.path(), &[0.66, 0.65, 0.64, 0.63, 0.62, 0.61, 0.60]);
    assert!(down.contains("MONOTONE_DOWN"), "{down}");
    let peak = report_line(dir.path(), &[0.60, 0.63, 0.66, 0.64, 0.62, 0.61, 0.58]);
    assert!(
        peak.contains("INTERIOR_PEAK") && peak.contains("peak lambda 0.4"),
        "{peak}"
    );

    let out = dir.path().join("t.json");
    let path = results_csv(dir.path(), &[0.60, 0.63, 0.66, 0.64, 0.62, 0.61, 0.58]);
    assert_eq!(code(&alignlab(&["report", "--results", &path, "--out", s(&out)])), 0);
    let v: Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v[0]["trend"], "INTERIOR_PEAK");
}

#[test]
fn report_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("e.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&alignlab(&["report", "--results", s(&empty)])), 1);
    let header_only = dir.path().join("h.csv");
    fs::write(
        &header_only,
        "# schema_version=1\nR,lambda,seed,acc_A,acc_B,cka,svcca,mknn,task_loss,align_loss,status\n",
    )
    .unwrap();
    assert_eq!(code(&alignlab(&["report", "--results", s(&header_only)])), 1);
    assert_eq!(
        code(&alignlab(&["report", "--results", s(&dir.path().join("missing.csv"))])),
        1
    );
}
