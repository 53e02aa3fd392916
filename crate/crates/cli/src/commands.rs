use std::collections::HashMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::Serialize;

use flashover_core::assessment::{self, AssessmentRecord, Provenance};
use flashover_core::boosting::{BoostedModel, Hyperparameters};
use flashover_core::evaluation::{self, FeatureCount, SweepConfig, SweepMode, Task};
use flashover_core::features::{
    build_catalog, extract as extract_features, FeatureCatalog, FeatureVector,
};
use flashover_core::manifest::RunManifest;
use flashover_core::matrix::{FeatureMatrix, Labels};
use flashover_core::synthetic::{generate_dataset, read_manifest, MANIFEST_FILE};
use flashover_core::{Condition, Error, Result, Waveform};

use crate::{AssessArgs, ExtractArgs, GenerateArgs, PredictArgs, RankArgs, SweepArgs, TrainArgs};

pub const RUN_MANIFEST: &str = "run_manifest.json";

pub struct Context {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
    pub catalog: FeatureCatalog,
}

impl Context {
    pub fn new(manifest: Option<&Path>, seed: Option<u64>, out_dir: PathBuf) -> Result<Context> {
        let m = match manifest {
            Some(p) => RunManifest::load(p)?,
            None => RunManifest::default(),
        }
        .resolve(seed)?;
        fs::create_dir_all(&out_dir)?;
        m.save(out_dir.join(RUN_MANIFEST))?;
        let catalog = build_catalog(&m.catalog);
        Ok(Context {
            manifest: m,
            out_dir,
            catalog,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, text)?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub fn generate(ctx: &Context, a: &GenerateArgs) -> Result<()> {
    let mut cfg = ctx.manifest.dataset.clone();
    if let Some(n) = a.n {
        cfg.n_per_condition = n;
    }
    let rows = generate_dataset(&cfg, &ctx.out_dir)?;
    eprintln!(
        "wrote {} waveforms and {MANIFEST_FILE} to {}",
        rows.len(),
        ctx.out_dir.display()
    );
    Ok(())
}

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|f| {
                f.extension().is_some_and(|x| x == "csv")
                    && f.file_name().is_some_and(|n| n != MANIFEST_FILE)
            });
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(
        || p.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

#[derive(Serialize)]
struct FileError {
    file: String,
    error: String,
}

pub const FEATURES_CSV: &str = "features.csv";
pub const FEATURES_INDEX: &str = "features_index.csv";
pub const CATALOG_JSON: &str = "catalog.json";
pub const EXTRACT_ERRORS: &str = "extract_errors.json";

pub fn extract(ctx: &Context, a: &ExtractArgs) -> Result<()> {
    let files = expand_inputs(&a.inputs)?;
    if files.is_empty() {
        return Err(invalid("no waveform files found"));
    }
    let labels: HashMap<String, Labels> = match &a.labels {
        Some(p) => read_manifest(BufReader::new(fs::File::open(p)?))?
            .into_iter()
            .map(|r| (r.file, Labels::new(Some(r.condition), Some(r.pct_u50))))
            .collect(),
        None => HashMap::new(),
    };
    let results: Vec<(PathBuf, Result<FeatureVector>)> = files
        .par_iter()
        .map(|f| {
            (
                f.clone(),
                Waveform::load(f)
                    .and_then(|w| extract_features(&w, &ctx.catalog, &ctx.manifest.dsp)),
            )
        })
        .collect();

    let mut vectors = Vec::new();
    let mut row_labels = Vec::new();
    let mut index = String::from("row,file\n");
    let mut errors = Vec::new();
    let mut worst = 0u8;
    for (f, r) in results {
        match r {
            Ok(v) => {
                index.push_str(&format!("{},{}\n", vectors.len(), f.display()));
                row_labels.push(labels.get(&file_name(&f)).cloned().unwrap_or_default());
                vectors.push(v);
            }
            Err(e) => {
                worst = worst.max(if matches!(e, Error::Io(_)) { 2 } else { 1 });
                errors.push(FileError {
                    file: f.display().to_string(),
                    error: e.to_string(),
                });
            }
        }
    }
    ctx.write_json(EXTRACT_ERRORS, &errors)?;
    ctx.write(CATALOG_JSON, &(ctx.catalog.to_json()? + "\n"))?;
    ctx.write(FEATURES_INDEX, &index)?;
    let m = FeatureMatrix::from_vectors(ctx.catalog.ids(), &vectors, row_labels)?;
    m.save(ctx.path(FEATURES_CSV))?;
    eprintln!(
        "extracted {} of {} files ({} features)",
        vectors.len(),
        files.len(),
        m.n_features()
    );
    for e in &errors {
        eprintln!("  {}: {}", e.file, e.error);
    }
    match worst {
        0 => Ok(()),
        2 => Err(Error::Io(std::io::Error::other(format!(
            "{} files failed",
            errors.len()
        )))),
        _ => Err(invalid(format!(
            "{} of {} files failed; see {EXTRACT_ERRORS}",
            errors.len(),
            files.len()
        ))),
    }
}

/// Load a matrix and drop rows recorded below the manifest's voltage floor.
fn load_matrix(ctx: &Context, path: &Path) -> Result<FeatureMatrix> {
    let m = FeatureMatrix::load(path)?;
    let Some(floor) = ctx.manifest.min_voltage_kv else {
        return Ok(m);
    };
    let j = m.index_of("applied_voltage").ok_or_else(|| {
        invalid("min_voltage_kv is set but the matrix has no applied_voltage column")
    })?;
    let keep: Vec<usize> = (0..m.n_rows())
        .filter(|&i| m.rows()[i][j] >= floor)
        .collect();
    eprintln!("dropped {} rows below {floor} kV", m.n_rows() - keep.len());
    Ok(m.subset_rows(&keep))
}

fn parse_task(s: &str) -> Result<Task> {
    s.parse()
}

pub fn rank(ctx: &Context, a: &RankArgs) -> Result<()> {
    let task = parse_task(&a.task)?;
    let m = load_matrix(ctx, &a.matrix)?;
    let k = a.k.unwrap_or(m.n_features());
    if k == 0 || k > m.n_features() {
        return Err(invalid(format!("k must lie in 1..={}", m.n_features())));
    }
    let (train, _) = evaluation::split(&m, &ctx.manifest.split())?;
    let report = evaluation::rank_for_task(&train, task, k, &ctx.manifest.mrmr)?;
    let p = ctx.write_json(&format!("ranking-{task}.json"), &report)?;
    eprintln!(
        "ranked {} features for {task} -> {}",
        report.ranked.len(),
        p.display()
    );
    Ok(())
}

fn hyperparameters(
    ctx: &Context,
    task: Task,
    preset: Option<&str>,
    params: Option<&Path>,
) -> Result<Hyperparameters> {
    let mut hp = match (preset, params) {
        (_, Some(p)) => serde_json::from_str(&fs::read_to_string(p)?)?,
        (Some("default"), None) => Hyperparameters {
            objective: task.objective(),
            ..Default::default()
        },
        (Some(name), None) => Hyperparameters::preset(name)?,
        (None, None) => task.default_hyperparameters(),
    };
    hp.seed = ctx.manifest.seed;
    Ok(hp)
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let task = parse_task(&a.task)?;
    let m = load_matrix(ctx, &a.matrix)?;
    let hp = hyperparameters(ctx, task, a.preset.as_deref(), a.params.as_deref())?;
    let out = evaluation::train_task(
        &m,
        task,
        a.top_k,
        &hp,
        &ctx.manifest.split(),
        &ctx.manifest.mrmr,
    )?;
    let name = a
        .output
        .clone()
        .unwrap_or_else(|| format!("model-{task}.json"));
    out.model.save(ctx.path(&name))?;
    ctx.write_json(&format!("ranking-{task}.json"), &out.ranking)?;
    let metric = if task == Task::Classification {
        "F1"
    } else {
        "RMSE %U50"
    };
    eprintln!(
        "{task}: {} trees on top {} features; held-out {metric} {:.4} ({} train / {} test rows) -> {}",
        out.model.trees.len(),
        a.top_k,
        out.metric,
        out.n_train,
        out.n_test,
        ctx.path(&name).display()
    );
    Ok(())
}

pub const PREDICTIONS_CSV: &str = "predictions.csv";

pub fn predict(ctx: &Context, a: &PredictArgs) -> Result<()> {
    let m = FeatureMatrix::load(&a.matrix)?;
    let model = BoostedModel::load(&a.model)?;
    let p = model.predict_matrix(&m)?;
    let mut text = String::from("row,prediction\n");
    for (i, v) in p.iter().enumerate() {
        text.push_str(&format!("{i},{v}\n"));
    }
    ctx.write(PREDICTIONS_CSV, &text)?;
    eprintln!("predicted {} rows", p.len());
    Ok(())
}

pub const ASSESSMENT_JSON: &str = "assessment.json";
pub const WORST_CASE_JSON: &str = "worst_case.json";

fn model_path(flag: &Option<PathBuf>, fallback: &Option<String>, what: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| fallback.as_ref().map(PathBuf::from))
        .ok_or_else(|| invalid(format!("no {what} model given (flag or manifest.models)")))
}

pub fn assess(ctx: &Context, a: &AssessArgs) -> Result<()> {
    let man = &ctx.manifest;
    let (vector, ids, source) = match (&a.waveform, &a.matrix, a.row) {
        (Some(w), _, _) => {
            let v = extract_features(&Waveform::load(w)?, &ctx.catalog, &man.dsp)?;
            (v, ctx.catalog.ids(), w.display().to_string())
        }
        (None, Some(m), Some(row)) => {
            let m = FeatureMatrix::load(m)?;
            if row >= m.n_rows() {
                return Err(invalid(format!(
                    "row {row} out of range for {} rows",
                    m.n_rows()
                )));
            }
            (
                m.row_vector(row),
                m.ids().to_vec(),
                format!("{}#{row}", a.matrix.as_ref().unwrap().display()),
            )
        }
        _ => return Err(invalid("give --waveform or --matrix with --row")),
    };
    let classifier_path = model_path(&a.classifier, &man.models.classifier, "classifier")?;
    let classifier = BoostedModel::load(&classifier_path)?;
    let p_wet = classifier.predict(&vector, &ids)?;
    let condition = if p_wet >= 0.5 {
        Condition::Wet
    } else {
        Condition::Dry
    };
    let regressor_path = match condition {
        Condition::Wet => model_path(&a.wet_model, &man.models.wet, "wet")?,
        Condition::Dry => model_path(&a.dry_model, &man.models.dry, "dry")?,
    };
    let regressor = BoostedModel::load(&regressor_path)?;
    let pct = regressor.predict(&vector, &ids)?;
    let pct_sigma_m = regressor.metrics.validation_rmse_pct.ok_or_else(|| {
        Error::IncompatibleInput(format!(
            "{} has no recorded validation RMSE",
            regressor_path.display()
        ))
    })?;
    let timestamp = a
        .timestamp
        .as_deref()
        .map(|t| {
            DateTime::parse_from_rfc3339(t)
                .map(|d| d.with_timezone(&Utc))
                .map_err(|e| invalid(format!("timestamp `{t}`: {e}")))
        })
        .transpose()?;
    let measured = ids
        .iter()
        .position(|id| id == "applied_voltage")
        .map(|j| vector.values[j]);
    let u_ph = a
        .u_ph
        .or(man.u_ph_kv)
        .or(measured)
        .ok_or_else(|| invalid("no --u-ph given and the features carry no applied_voltage"))?;
    let mut record = AssessmentRecord::compute(
        a.string_id.clone(),
        timestamp,
        pct,
        pct_sigma_m,
        a.sigma_kv.unwrap_or(man.sigma_default_kv),
        u_ph,
        a.r.unwrap_or(man.r),
    )?;
    record.provenance = Some(Provenance {
        source,
        condition,
        wet_probability: p_wet,
        catalog_version: vector.catalog_version.clone(),
        classifier_model: classifier_path.display().to_string(),
        regressor_model: regressor_path.display().to_string(),
    });
    ctx.write_json(ASSESSMENT_JSON, &record)?;
    println!("{}", serde_json::to_string_pretty(&record)?);

    if let Some(log) = &a.log {
        assessment::append_jsonl(log, &record)?;
        let history = assessment::read_jsonl(BufReader::new(fs::File::open(log)?))?;
        let timed: Vec<_> = history
            .iter()
            .filter(|r| r.string_id == record.string_id)
            .filter_map(|r| r.timed())
            .collect();
        if !timed.is_empty() {
            let worst = assessment::worst_case_over_window(&timed, man.window_days)?;
            ctx.write_json(WORST_CASE_JSON, worst)?;
            eprintln!(
                "worst state over the last {} days: {}",
                man.window_days, worst.assessment.state
            );
        }
    }
    Ok(())
}

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";

pub fn sweep(ctx: &Context, a: &SweepArgs) -> Result<()> {
    let mode: SweepMode = a.mode.parse()?;
    let m = load_matrix(ctx, &a.matrix)?;
    let feature_counts = match &a.counts {
        Some(c) => c
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<FeatureCount>>>()?,
        None => ctx.manifest.feature_counts.clone(),
    };
    let seed = ctx.manifest.seed;
    let with_seed = |hp: Hyperparameters| Hyperparameters { seed, ..hp };
    let config = SweepConfig {
        feature_counts,
        split: ctx.manifest.split(),
        mrmr: ctx.manifest.mrmr,
        classifier: with_seed(Hyperparameters::classifier_preset()),
        wet_regressor: with_seed(Hyperparameters::wet_regressor_preset()),
        dry_regressor: with_seed(Hyperparameters::dry_regressor_preset()),
        seed,
    };
    let report = evaluation::run_sweep(&m, mode, &config)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    fs::write(ctx.path(SWEEP_CSV), csv)?;
    ctx.write(SWEEP_JSON, &(report.to_json()? + "\n"))?;
    eprintln!(
        "{} sweep rows -> {}",
        report.rows.len(),
        ctx.path(SWEEP_CSV).display()
    );
    Ok(())
}
