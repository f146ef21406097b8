use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msc_occ::adapter::load_checkpoint;
use msc_occ::data::{save_feature_set, Format};
use msc_occ::synthetic::CapBenchmark;
use tempfile::TempDir;

fn msc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msc"))
        .args(args)
        .env_remove("MSC_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
    train: PathBuf,
    test: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let bench = CapBenchmark { n_train: 96, n_test_normal: 24, n_test_anomalous: 24, ..Default::default() };
        let (train, test) = bench.generate().unwrap();
        let train_p = dir.path().join("train.mscf");
        let test_p = dir.path().join("test.mscf");
        save_feature_set(&train, &train_p, Format::Binary).unwrap();
        save_feature_set(&test, &test_p, Format::Binary).unwrap();
        Self { dir, train: train_p, test: test_p }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn subdir(&self, name: &str) -> PathBuf {
        let p = self.path(name);
        fs::create_dir_all(&p).unwrap();
        p
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_ckpt(fx: &Fixture, name: &str, extra: &[&str]) -> PathBuf {
    let ckpt = fx.path(name);
    let mut args = vec![
        "train", "--features", s(&fx.train), "--objective", "msc", "--tau", "0.25", "--epochs", "3", "--batch",
        "32", "--wd", "5e-5", "--lr", "0.01", "--seed", "7", "--out", s(&ckpt),
    ];
    args.extend_from_slice(extra);
    let o = msc(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    ckpt
}

#[test]
fn train_happy_path_writes_checkpoint_history_and_manifest() {
    let fx = Fixture::new();
    let ckpt = fx.path("ckpt.msca");
    let o = msc(&[
        "train", "--features", s(&fx.train), "--objective", "msc", "--tau", "0.25", "--epochs", "25", "--batch", "64",
        "--wd", "5e-5", "--lr", "0.01", "--seed", "7", "--out", s(&ckpt),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let params = load_checkpoint(&ckpt).unwrap();
    assert_eq!(params.dim(), 16);
    let history: serde_json::Value = serde_json::from_slice(&fs::read(fx.path("ckpt.history.json")).unwrap()).unwrap();
    assert_eq!(history["epochs"].as_array().unwrap().len(), 25);
    for e in [5, 10, 15, 20, 25] {
        assert!(fx.path(&format!("ckpt.epoch{e}.msca")).is_file());
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(fx.path("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["seed"], 7);
    assert_eq!(manifest["resolved"]["train_config"]["loss"]["tau"], 0.25);
}

#[test]
fn eval_without_gallery_is_a_usage_error() {
    let fx = Fixture::new();
    let out = fx.subdir("eval");
    let o = msc(&["eval", "--features", s(&fx.test), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--gallery"), "{}", stderr(&o));
    assert!(!out.join("scores.csv").exists());
}

#[test]
fn grad_check_passes_and_prints_error() {
    let o = msc(&["grad-check", "--objective", "msc", "--trials", "20", "--tol", "1e-4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let err: f64 = text
        .split("max rel err ")
        .nth(1)
        .and_then(|t| t.split_whitespace().next())
        .and_then(|t| t.parse().ok())
        .expect("error printed");
    assert!(err < 1e-4, "{text}");
}

#[test]
fn grad_check_failure_exits_one() {
    // An impossible tolerance turns the same check into a failure.
    let o = msc(&["grad-check", "--objective", "center", "--trials", "2", "--tol", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["train", "--features", "x.mscf", "--out", "y.msca"],
        vec!["train", "--objective", "nope", "--seed", "1"],
        vec!["frobnicate"],
        vec!["grad-check", "--trials", "many"],
    ] {
        let o = msc(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn domain_errors_exit_one_and_name_the_problem() {
    let fx = Fixture::new();
    // Labeled anomalies in a training split.
    let o = msc(&["train", "--features", s(&fx.test), "--seed", "1", "--out", s(&fx.path("x.msca"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("anomalous"), "{}", stderr(&o));
    // Missing input is caught before any compute.
    let o = msc(&["train", "--features", s(&fx.path("missing.mscf")), "--seed", "1", "--out", s(&fx.path("x.msca"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not exist"));
    // Output naming an input.
    let o = msc(&["train", "--features", s(&fx.train), "--seed", "1", "--out", s(&fx.train)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("overwrite"));
    // k larger than the gallery.
    let out = fx.subdir("eval");
    let o = msc(&["eval", "--features", s(&fx.test), "--gallery", s(&fx.train), "--k", "1000", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("out of range"));
}

#[test]
fn eval_writes_scores_and_summary() {
    let fx = Fixture::new();
    let ckpt = train_ckpt(&fx, "ckpt.msca", &[]);
    let out = fx.subdir("eval");
    let o = msc(&[
        "eval", "--features", s(&fx.test), "--gallery", s(&fx.train), "--checkpoint", s(&ckpt), "--k", "2", "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert!(csv.starts_with("query_id,score,label\n"));
    assert_eq!(csv.lines().count(), 49);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["k"], 2);
    assert_eq!(summary["gallery_kind"], "full_train");
    assert_eq!(summary["gallery_size"], 96);
    assert!(summary["auc"].as_f64().unwrap() > 0.9);
    assert!(out.join("run_manifest.json").is_file());
}

#[test]
fn compress_then_eval_on_exemplars_matches_inline_kmeans() {
    let fx = Fixture::new();
    let gallery = fx.path("centroids.mscf");
    let o = msc(&["compress", "--features", s(&fx.train), "--kmeans", "8", "--seed", "3", "--out", s(&gallery)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = fx.subdir("a");
    let b = fx.subdir("b");
    let o = msc(&["eval", "--features", s(&fx.test), "--gallery", s(&gallery), "--gallery-mode", "exemplars", "--out", s(&a)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = msc(&[
        "eval", "--features", s(&fx.test), "--gallery", s(&fx.train), "--kmeans", "8", "--seed", "3", "--out", s(&b),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ja: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    let jb: serde_json::Value = serde_json::from_slice(&fs::read(b.join("summary.json")).unwrap()).unwrap();
    assert_eq!(ja["gallery_kind"], "kmeans_centroids");
    assert_eq!(ja["gallery_size"], 8);
    // Centroids went through f32 storage, so compare loosely.
    let (x, y) = (ja["auc"].as_f64().unwrap(), jb["auc"].as_f64().unwrap());
    assert!((x - y).abs() < 1e-3, "{x} vs {y}");
}

#[test]
fn score_thresholds_queries() {
    let fx = Fixture::new();
    let out = fx.subdir("score");
    let o = msc(&["score", "--features", s(&fx.test), "--gallery", s(&fx.train), "--threshold", "0.5", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("scores.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("query_id,score,decision"));
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let score: f64 = cells[1].parse().unwrap();
        assert_eq!(cells[2], if score > 0.5 { "1" } else { "0" });
    }
}

#[test]
fn diagnose_exports_histograms_and_curves() {
    let fx = Fixture::new();
    let ckpt = train_ckpt(&fx, "ckpt.msca", &["--val", s(&fx.test)]);
    let out = fx.subdir("diag");
    let o = msc(&[
        "diagnose", "--features", s(&fx.test), "--train", s(&fx.train), "--checkpoint", s(&ckpt), "--frame",
        "mean-shifted", "--history", s(&fx.path("ckpt.history.json")), "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "diag_uniformity_mean-shifted.csv",
        "diag_angle_mean-shifted.json",
        "diag_confidence_none.json",
        "diag_uniformity_origin.csv",
        "diag_aug_similarity_origin.csv",
        "diag_loss_none.csv",
        "diag_auc_none.csv",
        "collapse.csv",
        "run_manifest.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let h: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("diag_angle_mean-shifted.json")).unwrap()).unwrap();
    let total: u64 = ["normal", "anomalous"]
        .iter()
        .flat_map(|k| h[k].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()))
        .sum();
    assert_eq!(total, 48);
    assert_eq!(h["unit"], "radians");
    let auc_csv = fs::read_to_string(out.join("diag_auc_none.csv")).unwrap();
    assert_eq!(auc_csv.lines().next(), Some("epoch,metric,frame,value"));
    assert_eq!(auc_csv.lines().count(), 1 + 4);
}

#[test]
fn manifest_rerun_reproduces_checkpoint_bytes() {
    let fx = Fixture::new();
    let first = train_ckpt(&fx, "ckpt.msca", &[]);
    let bytes = fs::read(&first).unwrap();
    let manifest = fx.path("manifest_copy.json");
    fs::copy(fx.path("run_manifest.json"), &manifest).unwrap();
    fs::remove_file(&first).unwrap();
    let o = msc(&["train", "--config", s(&manifest)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(&first).unwrap(), bytes);
}

#[test]
fn config_file_values_yield_to_flags() {
    let fx = Fixture::new();
    let cfg = fx.path("cfg.json");
    fs::write(&cfg, format!(r#"{{"features": "{}", "seed": 7, "epochs": 1, "batch": 32}}"#, s(&fx.train))).unwrap();
    let o = msc(&["train", "--config", s(&cfg), "--epochs", "2", "--out", s(&fx.path("c.msca"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(fx.path("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["resolved"]["train_config"]["epochs"], 2);
    assert_eq!(m["resolved"]["train_config"]["batch_size"], 32);
    assert_eq!(m["resolved"]["train_config"]["learning_rate"], 0.01);
}

#[test]
fn inputs_are_not_modified() {
    let fx = Fixture::new();
    let before = (fs::read(&fx.train).unwrap(), fs::read(&fx.test).unwrap());
    let ckpt = train_ckpt(&fx, "ckpt.msca", &["--val", s(&fx.test)]);
    let ckpt_bytes = fs::read(&ckpt).unwrap();
    let out = fx.subdir("eval");
    let o = msc(&["eval", "--features", s(&fx.test), "--gallery", s(&fx.train), "--checkpoint", s(&ckpt), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!((fs::read(&fx.train).unwrap(), fs::read(&fx.test).unwrap()), before);
    assert_eq!(fs::read(&ckpt).unwrap(), ckpt_bytes);
}

#[test]
fn scores_do_not_depend_on_thread_count() {
    let fx = Fixture::new();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = fx.subdir(&format!("t{threads}"));
        let o = msc(&[
            "eval", "--threads", threads, "--features", s(&fx.test), "--gallery", s(&fx.train), "--kmeans", "5",
            "--out", s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(fs::read(out.join("scores.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn csv_inputs_are_accepted() {
    let fx = Fixture::new();
    let bench = CapBenchmark { n_train: 40, n_test_normal: 10, n_test_anomalous: 10, ..Default::default() };
    let (train, test) = bench.generate().unwrap();
    let (tp, qp) = (fx.path("train.csv"), fx.path("test.csv"));
    save_feature_set(&train, &tp, Format::Csv).unwrap();
    save_feature_set(&test, &qp, Format::Csv).unwrap();
    let out = fx.subdir("csv");
    let o = msc(&["eval", "--features", s(&qp), "--gallery", s(&tp), "--format", "csv", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn dispatch_runs_in_process() {
    assert_eq!(msc_occ::cli::dispatch(["msc", "grad-check", "--objective", "contrastive", "--trials", "3"]), 0);
    assert_eq!(msc_occ::cli::dispatch(["msc", "eval"]), 2);
}
