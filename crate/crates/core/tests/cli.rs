use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kafcm::baselines::ScaledFcm;
use kafcm::datagen::{Dataset, DatasetMeta, Provenance};
use kafcm::model_file::Model;
use kafcm::symbolic::{CandidateFit, Form};
use kafcm::{BoundingOp, StandardFcm};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kafcm"))
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

const QUICK: &str = r#""train": {"epochs": 40}, "mlp": {"epochs": 20}, "pso": {"iterations": 10}"#;

fn quick(experiment: &str) -> String {
    format!(r#"{{"experiment": "{experiment}", {QUICK}}}"#)
}

/// An active edge of each experiment's map: input 0 into the first output.
fn active_edge(experiment: &str) -> &'static str {
    if experiment == "mackey" {
        "4"
    } else {
        "1"
    }
}

fn pipeline(config: &Path, out: &Path, target: &str) {
    ok(&run(config, out, &["generate"]));
    ok(&run(config, out, &["train"]));
    ok(&run(config, out, &["evaluate"]));
    ok(&run(config, out, &["extract", "--edge", target, "0", "--samples", "50"]));
}

#[test]
fn pipelines_are_byte_deterministic() {
    let tmp = TempDir::new().unwrap();
    for exp in ["yerkes", "sine", "mackey"] {
        let cfg = write_config(tmp.path(), &format!("{exp}.json"), &quick(exp));
        let a = tmp.path().join(format!("{exp}_a"));
        let b = tmp.path().join(format!("{exp}_b"));
        let target = active_edge(exp);
        pipeline(&cfg, &a, target);
        pipeline(&cfg, &b, target);
        let curve = format!("edge_{target}_0.csv");
        let fits = format!("edge_{target}_0_fits.json");
        for f in [
            "dataset.csv",
            "dataset.json",
            "model.json",
            "history.csv",
            "metrics.json",
            &curve,
            &fits,
        ] {
            let x = fs::read(a.join(f)).unwrap();
            assert!(!x.is_empty(), "{exp}/{f} empty");
            assert_eq!(x, fs::read(b.join(f)).unwrap(), "{exp}/{f} differs");
        }
    }
}

#[test]
fn generated_dataset_shape_and_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sine.json", r#"{"experiment": "sine", "data": {"n": 1000}}"#);
    ok(&run(&cfg, tmp.path(), &["generate"]));
    let csv = fs::read_to_string(tmp.path().join("dataset.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1001);
    assert!(lines.iter().all(|l| l.split(',').count() == 2));
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(tmp.path().join("dataset.json")).unwrap()).unwrap();
    let loaded = Dataset::from_csv(&csv, meta.provenance.clone()).unwrap();
    assert_eq!(meta.provenance.regenerate().unwrap(), loaded);
}

#[test]
fn seed_override_changes_data() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "y.json", r#"{"experiment": "yerkes"}"#);
    ok(&run(&cfg, &tmp.path().join("a"), &["generate"]));
    ok(&bin()
        .args(["generate", "--seed", "7", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("b"))
        .output()
        .unwrap());
    assert_ne!(
        fs::read(tmp.path().join("a/dataset.csv")).unwrap(),
        fs::read(tmp.path().join("b/dataset.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let bad_dt = write_config(tmp.path(), "m.json", r#"{"experiment": "mackey", "data": {"mackey": {"dt": 0.3}}}"#);
    assert_eq!(run(&bad_dt, tmp.path(), &["generate"]).status.code(), Some(2));
    let unknown = write_config(tmp.path(), "u.json", r#"{"experiment": "sine", "epochs": 10}"#);
    assert_eq!(run(&unknown, tmp.path(), &["generate"]).status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_four() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "y.json", r#"{"experiment": "yerkes"}"#);
    let o = run(&cfg, &tmp.path().join("empty"), &["train"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dataset.csv"));
    let o = bin().args(["generate", "--config", "/nonexistent/cfg.json"]).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn divergence_exits_with_three_and_keeps_history() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "d.json",
        r#"{"experiment": "yerkes", "train": {"learning_rate": 1e200, "optimizer": "gd", "epochs": 50}}"#,
    );
    ok(&run(&cfg, tmp.path(), &["generate"]));
    let o = run(&cfg, tmp.path(), &["train"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let hist = fs::read_to_string(tmp.path().join("history.csv")).unwrap();
    assert!(hist.starts_with("epoch,loss\n"));
    assert!(hist.lines().count() < 51);
    assert!(!tmp.path().join("model.json").exists());
}

#[test]
fn yerkes_best_config_has_one_edge_and_fits_its_training_set() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "y.json", r#"{"experiment": "yerkes"}"#);
    ok(&run(&cfg, tmp.path(), &["generate"]));
    ok(&run(&cfg, tmp.path(), &["train"]));
    let Model::Kafcm(m) = Model::from_json(&fs::read_to_string(tmp.path().join("model.json")).unwrap()).unwrap() else {
        panic!("expected a spline map");
    };
    assert_eq!(m.active_edge_count(), 1);
    assert_eq!(
        fs::read_to_string(tmp.path().join("history.csv")).unwrap().lines().count(),
        611
    );
    ok(&run(&cfg, tmp.path(), &["evaluate", "--part", "trainval"]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("metrics.json")).unwrap()).unwrap();
    assert!(report["mse"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn evaluate_rejects_shape_mismatch_and_appends_tables() {
    let tmp = TempDir::new().unwrap();
    let mackey = write_config(tmp.path(), "m.json", &quick("mackey"));
    let yerkes = write_config(tmp.path(), "y.json", &quick("yerkes"));
    let md = tmp.path().join("m");
    let yd = tmp.path().join("y");
    ok(&run(&mackey, &md, &["generate"]));
    ok(&run(&mackey, &md, &["train"]));
    ok(&run(&yerkes, &yd, &["generate"]));
    let model = md.join("model.json");
    let o = run(&yerkes, &yd, &["evaluate", "--model", model.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("4 inputs") && err.contains("1 inputs"), "{err}");

    let table = tmp.path().join("table.csv");
    for label in ["first", "second"] {
        ok(&run(&mackey, &md, &["evaluate", "--table", table.to_str().unwrap(), "--label", label]));
    }
    let t = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines[0], kafcm::metrics::TABLE_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("first,") && lines[2].starts_with("second,"));
}

#[test]
fn perfect_copy_model_scores_zero() {
    let tmp = TempDir::new().unwrap();
    let xs: Vec<f64> = (0..20).map(|i| 0.05 * i as f64 - 0.4).collect();
    let data = Dataset::new(
        xs.iter().map(|x| vec![*x]).collect(),
        xs.iter().map(|x| vec![*x]).collect(),
        Provenance::External { name: "copy".into() },
    )
    .unwrap();
    fs::write(tmp.path().join("dataset.csv"), data.to_csv()).unwrap();
    fs::write(
        tmp.path().join("dataset.json"),
        serde_json::to_string(&DatasetMeta::of(&data)).unwrap(),
    )
    .unwrap();
    let mut fcm = StandardFcm::feed_forward(1, 1, BoundingOp::Identity);
    fcm.set_weight(1, 0, 1.0);
    let model = Model::Fcm(ScaledFcm { fcm, input_range: None });
    fs::write(tmp.path().join("model.json"), model.to_json()).unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"experiment": "sine"}"#);
    ok(&run(&cfg, tmp.path(), &["evaluate", "--part", "all"]));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("metrics.json")).unwrap()).unwrap();
    for k in ["mse", "max_abs_error", "std_dev_error"] {
        assert_eq!(r[k].as_f64(), Some(0.0), "{k}");
    }
}

fn grid_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "g.json",
        r#"{"experiment": "sine", "search": {"grid_sizes": [3, 6], "learning_rates": [0.1], "epoch_values": [20, 40]}}"#,
    )
}

#[test]
fn gridsearch_single_cell_gives_one_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "g1.json",
        r#"{"experiment": "yerkes", "search": {"grid_sizes": [4], "learning_rates": [0.1], "epoch_values": [30]}}"#,
    );
    ok(&run(&cfg, tmp.path(), &["gridsearch"]));
    let csv = fs::read_to_string(tmp.path().join("gridsearch.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("gridsearch.json")).unwrap()).unwrap();
    assert_eq!(summary["rows"], 1);
    assert_eq!(summary["best"]["cell"]["grid_size"], 4);
}

#[test]
fn gridsearch_resumes_to_the_same_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = grid_config(tmp.path());
    let full = tmp.path().join("full");
    ok(&run(&cfg, &full, &["gridsearch", "--jobs", "2"]));
    let reference = fs::read_to_string(full.join("gridsearch.csv")).unwrap();
    assert_eq!(reference.lines().count(), 5);

    // Simulate an interruption after two rows, plus a torn final line.
    let resumed = tmp.path().join("resumed");
    fs::create_dir_all(&resumed).unwrap();
    let partial: Vec<&str> = reference.lines().take(3).collect();
    fs::write(resumed.join("gridsearch.csv"), format!("{}\n6,0.1,4", partial.join("\n"))).unwrap();
    ok(&run(&cfg, &resumed, &["gridsearch"]));
    assert_eq!(fs::read_to_string(resumed.join("gridsearch.csv")).unwrap(), reference);
    assert_eq!(
        fs::read(resumed.join("gridsearch.json")).unwrap(),
        fs::read(full.join("gridsearch.json")).unwrap()
    );
}

#[test]
fn extract_recovers_the_sine_law_and_rejects_masked_edges() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "s.json", r#"{"experiment": "sine"}"#);
    ok(&run(&cfg, tmp.path(), &["generate"]));
    ok(&run(&cfg, tmp.path(), &["train"]));
    ok(&run(&cfg, tmp.path(), &["extract", "--edge", "1", "0"]));
    let fits: Vec<CandidateFit> =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("edge_1_0_fits.json")).unwrap()).unwrap();
    assert_eq!(fits[0].form, Form::Sinusoid);
    assert!((fits[0].coefficients[1] - 3.0).abs() <= 0.05);
    let curve = fs::read_to_string(tmp.path().join("edge_1_0.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("x,phi"));
    assert_eq!(curve.lines().count(), 1001);

    let o = run(&cfg, tmp.path(), &["extract", "--edge", "0", "1"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("masked"));
}

#[test]
fn extract_on_untrained_model_still_returns_fits() {
    let tmp = TempDir::new().unwrap();
    let m = kafcm::KaFcm::feed_forward(
        1,
        1,
        kafcm::KnotGrid::uniform(-1.0, 1.0, 5, 3).unwrap(),
        kafcm::BaseKind::Silu,
        BoundingOp::Identity,
        3,
    );
    fs::write(tmp.path().join("model.json"), Model::Kafcm(m).to_json()).unwrap();
    let cfg = write_config(tmp.path(), "s.json", r#"{"experiment": "sine"}"#);
    ok(&run(&cfg, tmp.path(), &["extract", "--edge", "1", "0"]));
    let fits: Vec<CandidateFit> =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("edge_1_0_fits.json")).unwrap()).unwrap();
    assert_eq!(fits.len(), 4);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for exp in ["yerkes", "sine", "mackey"] {
        let text = fs::read_to_string(root.join(format!("{exp}.json"))).unwrap();
        let cfg = kafcm::experiment::ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(kafcm::experiment::experiment_name(cfg.experiment), exp);
    }
}
