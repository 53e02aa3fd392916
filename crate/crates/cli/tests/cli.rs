use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use flashover_core::synthetic::{fixture_u50, generate, ScenarioConfig};
use flashover_core::Condition;
use tempfile::TempDir;

fn flashover(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flashover"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = flashover(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Pipeline {
    dir: TempDir,
}

impl Pipeline {
    fn p(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

/// Corpus, matrix and three models shared by the tests below.
fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let pl = Pipeline {
            dir: tempfile::tempdir().unwrap(),
        };
        ok(&pl.p("data"), &["generate", "--n", "40"]);
        ok(
            &pl.p("ex"),
            &[
                "extract",
                s(&pl.p("data")),
                "--labels",
                s(&pl.p("data/manifest.csv")),
            ],
        );
        let m = pl.p("ex/features.csv");
        ok(
            &pl.p("models"),
            &[
                "train",
                "--matrix",
                s(&m),
                "--task",
                "classification",
                "--top-k",
                "20",
                "--preset",
                "table2",
            ],
        );
        ok(
            &pl.p("models"),
            &[
                "train",
                "--matrix",
                s(&m),
                "--task",
                "regression-wet",
                "--top-k",
                "10",
                "--preset",
                "table4-wet",
            ],
        );
        ok(
            &pl.p("models"),
            &[
                "train",
                "--matrix",
                s(&m),
                "--task",
                "regression-dry",
                "--top-k",
                "10",
                "--preset",
                "table4-dry",
            ],
        );
        pl
    })
}

fn model_flags(pl: &Pipeline) -> Vec<String> {
    [
        "--classifier",
        "models/model-classification.json",
        "--wet-model",
        "models/model-regression-wet.json",
        "--dry-model",
        "models/model-regression-dry.json",
    ]
    .iter()
    .map(|a| {
        if a.starts_with("--") {
            a.to_string()
        } else {
            s(&pl.p(a)).to_string()
        }
    })
    .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_and_extract_counts() {
    let pl = pipeline();
    let csvs = fs::read_dir(pl.p("data"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "csv")
        .count();
    assert_eq!(csvs, 81);
    assert_eq!(
        fs::read_to_string(pl.p("ex/features.csv"))
            .unwrap()
            .lines()
            .count(),
        81
    );
    assert_eq!(json(&pl.p("ex/extract_errors.json")), serde_json::json!([]));
    assert_eq!(json(&pl.p("ex/catalog.json")).as_array().unwrap().len(), 72);
    assert!(pl.p("ex/run_manifest.json").exists());
}

#[test]
fn extract_lists_malformed_files() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "# sample_rate=10000 mains_freq=50\n0.1\n0.2\n").unwrap();
    let good = pl.p("data/dry_0000.csv");
    let out = dir.path().join("out");
    let o = flashover(&out, &["extract", s(&good), s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let errors = json(&out.join("extract_errors.json"));
    assert_eq!(errors.as_array().unwrap().len(), 1);
    assert!(errors[0]["file"].as_str().unwrap().ends_with("bad.csv"));
    assert!(errors[0]["error"]
        .as_str()
        .unwrap()
        .contains("applied_voltage"));
    assert_eq!(
        fs::read_to_string(out.join("features.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn presets_are_echoed_in_models() {
    let pl = pipeline();
    for (file, n, depth, lr, sub, col) in [
        ("model-classification.json", 422, 4, 0.157, 0.837, 0.603),
        ("model-regression-wet.json", 732, 7, 0.008, 0.5, 1.0),
        ("model-regression-dry.json", 810, 7, 0.016, 0.5, 1.0),
    ] {
        let m = json(&pl.p("models").join(file));
        let hp = &m["hyperparameters"];
        assert_eq!(hp["n_estimators"], n);
        assert_eq!(hp["max_depth"], depth);
        assert_eq!(hp["learning_rate"], lr);
        assert_eq!(hp["subsample"], sub);
        assert_eq!(hp["colsample_bytree"], col);
        assert_eq!(m["trees"].as_array().unwrap().len(), n);
    }
    let wet = json(&pl.p("models/model-regression-wet.json"));
    assert!(wet["metrics"]["validation_rmse_pct"].as_f64().unwrap() > 0.0);
    assert_eq!(wet["selected_feature_ids"].as_array().unwrap().len(), 10);
}

#[test]
fn train_rejects_bad_requests() {
    let pl = pipeline();
    let out = tempfile::tempdir().unwrap();
    let m = pl.p("ex/features.csv");
    let o = flashover(
        out.path(),
        &[
            "train",
            "--matrix",
            s(&m),
            "--task",
            "regression-wet",
            "--top-k",
            "100",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let o = flashover(
        out.path(),
        &[
            "train",
            "--matrix",
            s(&m),
            "--task",
            "classification",
            "--top-k",
            "5",
            "--preset",
            "table4-dry",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let unlabeled = tempfile::tempdir().unwrap();
    ok(
        unlabeled.path(),
        &[
            "extract",
            s(&pl.p("data/wet_0000.csv")),
            s(&pl.p("data/dry_0000.csv")),
        ],
    );
    let o = flashover(
        out.path(),
        &[
            "train",
            "--matrix",
            s(&unlabeled.path().join("features.csv")),
            "--task",
            "classification",
            "--top-k",
            "3",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let out = tempfile::tempdir().unwrap();
    let o = flashover(
        out.path(),
        &[
            "predict",
            "--matrix",
            "/nonexistent/features.csv",
            "--model",
            "/nonexistent/m.json",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(
        flashover(out.path(), &["train", "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(
        flashover(
            out.path(),
            &["sweep", "--matrix", "x.csv", "--mode", "sideways"]
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn sweeps_and_reports() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let m = pl.p("ex/features.csv");
    let cls = dir.path().join("cls");
    ok(
        &cls,
        &["sweep", "--matrix", s(&m), "--mode", "classification"],
    );
    let csv = fs::read_to_string(cls.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
    assert!(csv
        .lines()
        .nth(8)
        .unwrap()
        .starts_with("all,72,classifier,n/a,f1,"));

    let full = dir.path().join("full");
    ok(
        &full,
        &[
            "sweep",
            "--matrix",
            s(&m),
            "--mode",
            "full",
            "--counts",
            "1,10",
        ],
    );
    let report = json(&full.join("sweep.json"));
    let rows = report["rows"].as_array().unwrap();
    for cond in ["wet", "dry"] {
        for count in ["1", "10"] {
            assert!(rows.iter().any(|r| r["model"] == "full-method"
                && r["condition"] == cond
                && r["feature_count"] == count));
        }
    }
    let rep = dir.path().join("rep");
    ok(
        &rep,
        &[
            "report",
            "--sweep",
            s(&full.join("sweep.json")),
            "--ranking",
            s(&pl.p("models/ranking-classification.json")),
        ],
    );
    let table = fs::read_to_string(rep.join("report_sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with(
        "feature_count,classifier,regressor-wet:wet,regressor-dry:dry,full-method:wet"
    ));
    assert_eq!(
        fs::read_to_string(rep.join("report_ranking.csv"))
            .unwrap()
            .lines()
            .count(),
        21
    );
}

#[test]
fn waveform_and_prediction_plots() {
    let pl = pipeline();
    let out = tempfile::tempdir().unwrap();
    ok(
        out.path(),
        &[
            "report",
            "--waveform",
            s(&pl.p("data/wet_0003.csv")),
            "--matrix",
            s(&pl.p("ex/features.csv")),
            "--model",
            s(&pl.p("models/model-classification.json")),
        ],
    );
    let plot = fs::read_to_string(out.path().join("plot_waveform.csv")).unwrap();
    assert_eq!(plot.lines().count(), 1 + 2000);
    let preds = fs::read_to_string(out.path().join("plot_predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 81);
    ok(
        out.path(),
        &[
            "predict",
            "--matrix",
            s(&pl.p("ex/features.csv")),
            "--model",
            s(&pl.p("models/model-regression-dry.json")),
        ],
    );
    assert_eq!(
        fs::read_to_string(out.path().join("predictions.csv"))
            .unwrap()
            .lines()
            .count(),
        81
    );
}

fn write_scenario(dir: &Path, name: &str, condition: Condition, g: f64, pct: f64) -> PathBuf {
    let true_u50 = fixture_u50(condition, g);
    let cfg = ScenarioConfig {
        condition,
        contamination_conductance: g,
        applied_voltage: pct * true_u50 / 100.0,
        true_u50,
        sample_rate: 10_000.0,
        duration: 0.2,
        mains_freq: 50.0,
        noise_ma: 0.01,
        seed: 11,
    };
    let path = dir.join(name);
    generate(&cfg).unwrap().0.save(&path).unwrap();
    path
}

fn assess(pl: &Pipeline, out: &Path, waveform: &Path, extra: &[&str]) -> serde_json::Value {
    let mut args = vec![
        "assess".to_string(),
        "--waveform".into(),
        s(waveform).into(),
    ];
    args.extend(model_flags(pl));
    args.extend(extra.iter().map(|a| a.to_string()));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(out, &args);
    json(&out.join("assessment.json"))
}

#[test]
fn assessment_verdicts() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let clean = write_scenario(dir.path(), "clean.csv", Condition::Dry, 1.58, 15.0);
    let a = assess(pl, &dir.path().join("a1"), &clean, &[]);
    assert_eq!(a["state"], "Operational", "{a}");
    assert_eq!(a["provenance"]["condition"], "dry");

    let again = assess(pl, &dir.path().join("a2"), &clean, &[]);
    assert_eq!(a, again);
    assert_eq!(
        fs::read(dir.path().join("a1/assessment.json")).unwrap(),
        fs::read(dir.path().join("a2/assessment.json")).unwrap()
    );

    let dirty = write_scenario(dir.path(), "dirty.csv", Condition::Wet, 18.33, 95.0);
    let b = assess(pl, &dir.path().join("b"), &dirty, &[]);
    assert_eq!(b["state"], "ExtremelyHazardous", "{b}");
    assert_eq!(b["provenance"]["condition"], "wet");

    let record: flashover_core::assessment::AssessmentRecord = serde_json::from_value(b).unwrap();
    assert!(record.revalidate());
}

#[test]
fn assessment_log_tracks_worst_case() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let clean = write_scenario(dir.path(), "clean.csv", Condition::Dry, 1.58, 15.0);
    let dirty = write_scenario(dir.path(), "dirty.csv", Condition::Wet, 18.33, 95.0);
    let out = dir.path().join("out");
    assess(
        pl,
        &out,
        &dirty,
        &["--log", s(&log), "--timestamp", "2024-01-01T00:00:00Z"],
    );
    assess(
        pl,
        &out,
        &clean,
        &["--log", s(&log), "--timestamp", "2024-02-01T00:00:00Z"],
    );
    assert_eq!(
        json(&out.join("worst_case.json"))["assessment"]["state"],
        "ExtremelyHazardous"
    );
    assess(
        pl,
        &out,
        &clean,
        &["--log", s(&log), "--timestamp", "2024-05-01T00:00:00Z"],
    );
    assert_eq!(
        json(&out.join("worst_case.json"))["assessment"]["state"],
        "Operational"
    );
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 3);
}

#[test]
fn catalog_mismatch_is_rejected() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.json");
    fs::write(
        &manifest,
        r#"{"catalog": {"exclude_groups": ["harmonic"]}}"#,
    )
    .unwrap();
    let mut args = vec![
        "--manifest".to_string(),
        s(&manifest).into(),
        "assess".into(),
        "--waveform".into(),
        s(&pl.p("data/dry_0001.csv")).into(),
    ];
    args.extend(model_flags(pl));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = flashover(&dir.path().join("out"), &args);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("incompatible input"));
}
