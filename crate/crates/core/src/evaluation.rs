//! Metrics, train/test splitting and the feature-count sweep harness.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{self, BoostedModel, Hyperparameters, Objective};
use crate::error::{insufficient, invalid, Error, Result};
use crate::matrix::FeatureMatrix;
use crate::mrmr::{mrmr_rank, MrmrConfig, RankingReport, Target};
use crate::{derive_seed, Condition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1 {
    pub value: f64,
    /// Set when precision or recall is undefined; `value` is then 0.
    pub degenerate: bool,
}

pub fn f1_score(tp: i64, fp: i64, fn_: i64) -> Result<F1> {
    if tp < 0 || fp < 0 || fn_ < 0 {
        return Err(invalid(format!(
            "negative confusion counts {tp}, {fp}, {fn_}"
        )));
    }
    if tp + fp == 0 || tp + fn_ == 0 {
        return Ok(F1 {
            value: 0.0,
            degenerate: true,
        });
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    let value = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1 {
        value,
        degenerate: false,
    })
}

/// Counts with `true` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: i64,
    pub fp: i64,
    pub fn_: i64,
    pub tn: i64,
}

impl Confusion {
    pub fn from_pairs(actual: &[bool], predicted: &[bool]) -> Result<Confusion> {
        if actual.len() != predicted.len() {
            return Err(invalid(format!(
                "{} labels vs {} predictions",
                actual.len(),
                predicted.len()
            )));
        }
        let mut c = Confusion::default();
        for (&a, &p) in actual.iter().zip(predicted) {
            match (a, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn f1(&self) -> F1 {
        f1_score(self.tp, self.fp, self.fn_).expect("counts are non-negative")
    }
}

/// Root mean squared difference, in the units of the inputs (percentage points
/// for `%U50`).
pub fn rmse_percent(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(invalid(format!(
            "{} actual vs {} predicted values",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(invalid("rmse of empty vectors"));
    }
    let sse: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).powi(2))
        .sum();
    Ok((sse / actual.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Seeded shuffle of `0..n`, cut into sorted train and test index lists.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(invalid(format!(
            "train_fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    if n < 2 {
        return Err(insufficient(format!("cannot split {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut test = idx.split_off(n_train);
    idx.sort_unstable();
    test.sort_unstable();
    Ok((idx, test))
}

pub fn split(m: &FeatureMatrix, spec: &SplitSpec) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let (a, b) = split_indices(m.n_rows(), spec)?;
    Ok((m.subset_rows(&a), m.subset_rows(&b)))
}

/// A single learning problem over a labeled feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classification,
    RegressionWet,
    RegressionDry,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::RegressionWet => "regression-wet",
            Task::RegressionDry => "regression-dry",
        }
    }

    /// Name used for the model in sweep reports.
    pub fn model_name(self) -> &'static str {
        match self {
            Task::Classification => "classifier",
            Task::RegressionWet => "regressor-wet",
            Task::RegressionDry => "regressor-dry",
        }
    }

    pub fn condition(self) -> Option<Condition> {
        match self {
            Task::Classification => None,
            Task::RegressionWet => Some(Condition::Wet),
            Task::RegressionDry => Some(Condition::Dry),
        }
    }

    pub fn objective(self) -> Objective {
        match self {
            Task::Classification => Objective::Logistic,
            _ => Objective::Squared,
        }
    }

    pub fn default_hyperparameters(self) -> Hyperparameters {
        match self {
            Task::Classification => Hyperparameters::classifier_preset(),
            Task::RegressionWet => Hyperparameters::wet_regressor_preset(),
            Task::RegressionDry => Hyperparameters::dry_regressor_preset(),
        }
    }

    /// Rows of `m` this task trains on.
    pub fn rows(self, m: &FeatureMatrix) -> Vec<usize> {
        match self.condition() {
            None => (0..m.n_rows()).collect(),
            Some(c) => m.rows_with_condition(c),
        }
    }

    /// Numeric targets for the given rows.
    pub fn targets(self, m: &FeatureMatrix, rows: &[usize]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|&i| {
                let l = &m.labels()[i];
                match self {
                    Task::Classification => l.condition.map(Condition::as_label),
                    _ => l.pct_u50,
                }
                .ok_or_else(|| {
                    invalid(format!(
                        "row {i} lacks the label needed for {}",
                        self.as_str()
                    ))
                })
            })
            .collect()
    }

    fn mrmr_target(self, y: &[f64]) -> Target {
        match self {
            Task::Classification => Target::Categorical(y.iter().map(|&v| v as usize).collect()),
            _ => Target::Continuous(y.to_vec()),
        }
    }

    fn cell_index(self) -> u64 {
        match self {
            Task::Classification => 0,
            Task::RegressionWet => 1,
            Task::RegressionDry => 2,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression-wet" => Ok(Task::RegressionWet),
            "regression-dry" => Ok(Task::RegressionDry),
            _ => Err(invalid(format!("unknown task `{s}`"))),
        }
    }
}

/// Labeled rows of one task, split into train and test parts.
struct TaskData {
    train: FeatureMatrix,
    y_train: Vec<f64>,
    test: FeatureMatrix,
    y_test: Vec<f64>,
}

fn task_data(
    m: &FeatureMatrix,
    task: Task,
    train_rows: &[usize],
    test_rows: &[usize],
) -> Result<TaskData> {
    let keep: Vec<usize> = task.rows(m);
    let pick = |rows: &[usize]| -> Vec<usize> {
        rows.iter()
            .copied()
            .filter(|i| keep.binary_search(i).is_ok())
            .collect()
    };
    let (tr, te) = (pick(train_rows), pick(test_rows));
    if tr.len() < 4 || te.is_empty() {
        return Err(insufficient(format!(
            "{}: {} training and {} test rows; need at least 4 and 1",
            task,
            tr.len(),
            te.len()
        )));
    }
    Ok(TaskData {
        y_train: task.targets(m, &tr)?,
        y_test: task.targets(m, &te)?,
        train: m.subset_rows(&tr),
        test: m.subset_rows(&te),
    })
}

/// MRMR ranking computed on a task's training rows only.
pub fn rank_for_task(
    train: &FeatureMatrix,
    task: Task,
    k: usize,
    mrmr: &MrmrConfig,
) -> Result<RankingReport> {
    let rows = task.rows(train);
    let y = task.targets(train, &rows)?;
    let sub = train.subset_rows(&rows);
    Ok(mrmr_rank(&sub, &task.mrmr_target(&y), k.min(sub.n_features()), mrmr)?.report())
}

/// Train on the named columns and bind the model to `m`'s catalog.
pub fn fit(
    train: &FeatureMatrix,
    y: &[f64],
    features: &[String],
    hp: &Hyperparameters,
    catalog_version: &str,
) -> Result<BoostedModel> {
    let mut model = boosting::train(&train.select_columns(features)?, y, hp)?;
    model.catalog_version = catalog_version.to_string();
    Ok(model)
}

/// Held-out score of a model: F1 for classifiers, RMSE for regressors.
pub fn score(model: &BoostedModel, task: Task, test: &FeatureMatrix, y: &[f64]) -> Result<f64> {
    let p = model.predict_matrix(test)?;
    match task {
        Task::Classification => {
            let actual: Vec<bool> = y.iter().map(|&v| v >= 0.5).collect();
            let predicted: Vec<bool> = p.iter().map(|&v| v >= 0.5).collect();
            Ok(Confusion::from_pairs(&actual, &predicted)?.f1().value)
        }
        _ => rmse_percent(y, &p),
    }
}

/// Model plus the ranking and held-out metric from one train/test run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: BoostedModel,
    pub ranking: RankingReport,
    pub n_train: usize,
    pub n_test: usize,
    /// F1 or RMSE on the test split.
    pub metric: f64,
}

/// Rank on the training split, keep the top `k`, train, and score on the
/// test split. The held-out metric is stored in the model.
pub fn train_task(
    m: &FeatureMatrix,
    task: Task,
    k: usize,
    hp: &Hyperparameters,
    split: &SplitSpec,
    mrmr: &MrmrConfig,
) -> Result<TrainOutcome> {
    if k == 0 || k > m.n_features() {
        return Err(invalid(format!("top_k {k} outside 1..={}", m.n_features())));
    }
    if hp.objective != task.objective() {
        return Err(invalid(format!(
            "{task} needs the {:?} objective",
            task.objective()
        )));
    }
    let (tr, te) = split_indices(m.n_rows(), split)?;
    let d = task_data(m, task, &tr, &te)?;
    let ranking = rank_for_task(&d.train, task, k, mrmr)?;
    let ids = ranking.top(k);
    let mut model = fit(&d.train, &d.y_train, &ids, hp, &m.catalog_version())?;
    let metric = score(&model, task, &d.test, &d.y_test)?;
    model.metrics.condition = task.condition();
    model.metrics.n_train = d.train.n_rows();
    model.metrics.n_validation = d.test.n_rows();
    match task {
        Task::Classification => model.metrics.validation_f1 = Some(metric),
        _ => model.metrics.validation_rmse_pct = Some(metric),
    }
    Ok(TrainOutcome {
        model,
        ranking,
        n_train: d.train.n_rows(),
        n_test: d.test.n_rows(),
        metric,
    })
}

/// A requested feature count; `All` means every column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureCount {
    Top(usize),
    All,
}

impl FeatureCount {
    pub fn resolve(self, available: usize) -> usize {
        match self {
            FeatureCount::Top(k) => k.min(available),
            FeatureCount::All => available,
        }
    }

    pub fn standard() -> Vec<FeatureCount> {
        let mut v: Vec<FeatureCount> = [1, 5, 10, 15, 20, 30, 40]
            .into_iter()
            .map(FeatureCount::Top)
            .collect();
        v.push(FeatureCount::All);
        v
    }
}

impl fmt::Display for FeatureCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureCount::Top(k) => write!(f, "{k}"),
            FeatureCount::All => f.write_str("all"),
        }
    }
}

impl FromStr for FeatureCount {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(FeatureCount::All),
            n => match n.parse::<usize>() {
                Ok(k) if k > 0 => Ok(FeatureCount::Top(k)),
                _ => Err(invalid(format!("bad feature count `{s}`"))),
            },
        }
    }
}

impl Serialize for FeatureCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    Classification,
    RegressionWet,
    RegressionDry,
    /// Classify, route to the condition's regressor, and compare with
    /// routing by the true condition.
    Full,
}

impl SweepMode {
    fn tasks(self) -> Vec<Task> {
        match self {
            SweepMode::Classification => vec![Task::Classification],
            SweepMode::RegressionWet => vec![Task::RegressionWet],
            SweepMode::RegressionDry => vec![Task::RegressionDry],
            SweepMode::Full => vec![
                Task::Classification,
                Task::RegressionWet,
                Task::RegressionDry,
            ],
        }
    }
}

impl FromStr for SweepMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(SweepMode::Classification),
            "regression-wet" => Ok(SweepMode::RegressionWet),
            "regression-dry" => Ok(SweepMode::RegressionDry),
            "full" => Ok(SweepMode::Full),
            _ => Err(invalid(format!("unknown sweep mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub feature_counts: Vec<FeatureCount>,
    pub split: SplitSpec,
    pub mrmr: MrmrConfig,
    pub classifier: Hyperparameters,
    pub wet_regressor: Hyperparameters,
    pub dry_regressor: Hyperparameters,
    /// Base of the per-cell training seeds.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            feature_counts: FeatureCount::standard(),
            split: SplitSpec::default(),
            mrmr: MrmrConfig::default(),
            classifier: Task::Classification.default_hyperparameters(),
            wet_regressor: Task::RegressionWet.default_hyperparameters(),
            dry_regressor: Task::RegressionDry.default_hyperparameters(),
            seed: 0,
        }
    }
}

impl SweepConfig {
    fn hyperparameters(&self, task: Task) -> &Hyperparameters {
        match task {
            Task::Classification => &self.classifier,
            Task::RegressionWet => &self.wet_regressor,
            Task::RegressionDry => &self.dry_regressor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub feature_count: FeatureCount,
    /// Columns actually used after clamping to what is available.
    pub n_features: usize,
    /// `classifier`, `regressor-wet`, `regressor-dry`, `full-method` or
    /// `oracle-routed`.
    pub model: String,
    pub condition: Option<Condition>,
    /// `f1` or `rmse_pct`.
    pub metric: String,
    pub value: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub mode: SweepMode,
    pub catalog_version: String,
    pub n_train: usize,
    pub n_test: usize,
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "feature_count,n_features,model,condition,metric,value,n_test";

impl SweepReport {
    pub fn find(
        &self,
        count: FeatureCount,
        model: &str,
        condition: Option<Condition>,
    ) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.feature_count == count && r.model == model && r.condition == condition)
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{SWEEP_CSV_HEADER}")?;
        for r in &self.rows {
            let cond = r.condition.map_or("n/a", Condition::as_str);
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.feature_count, r.n_features, r.model, cond, r.metric, r.value, r.n_test
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<SweepReport> {
        Ok(serde_json::from_str(text)?)
    }
}

fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Classification => "f1",
        _ => "rmse_pct",
    }
}

/// Feature-count sweep: one fixed split, MRMR on the training part, one model
/// per (count, task) cell, evaluated on the test part.
pub fn run_sweep(m: &FeatureMatrix, mode: SweepMode, config: &SweepConfig) -> Result<SweepReport> {
    if config.feature_counts.is_empty() {
        return Err(invalid("no feature counts requested"));
    }
    let catalog_version = m.catalog_version();
    let (train_rows, test_rows) = split_indices(m.n_rows(), &config.split)?;
    let tasks = mode.tasks();
    for &t in &tasks {
        if config.hyperparameters(t).objective != t.objective() {
            return Err(invalid(format!(
                "{t} needs the {:?} objective",
                t.objective()
            )));
        }
    }
    let data: Vec<TaskData> = tasks
        .iter()
        .map(|&t| task_data(m, t, &train_rows, &test_rows))
        .collect::<Result<_>>()?;
    let available = m.n_features();
    let max_k = config
        .feature_counts
        .iter()
        .map(|c| c.resolve(available))
        .max()
        .unwrap_or(1);
    let rankings: Vec<RankingReport> = tasks
        .par_iter()
        .zip(&data)
        .map(|(&t, d)| rank_for_task(&d.train, t, max_k, &config.mrmr))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..config.feature_counts.len())
        .flat_map(|c| (0..tasks.len()).map(move |t| (c, t)))
        .collect();
    let models: Vec<BoostedModel> = cells
        .par_iter()
        .map(|&(c, t)| {
            let task = tasks[t];
            let k = config.feature_counts[c].resolve(available);
            let hp = Hyperparameters {
                seed: derive_seed(config.seed, c as u64 * 3 + task.cell_index()),
                ..config.hyperparameters(task).clone()
            };
            fit(
                &data[t].train,
                &data[t].y_train,
                &rankings[t].top(k),
                &hp,
                &catalog_version,
            )
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (cell, &(c, t)) in cells.iter().enumerate() {
        let task = tasks[t];
        let count = config.feature_counts[c];
        rows.push(SweepRow {
            feature_count: count,
            n_features: count.resolve(available),
            model: task.model_name().to_string(),
            condition: task.condition(),
            metric: metric_name(task).to_string(),
            value: score(&models[cell], task, &data[t].test, &data[t].y_test)?,
            n_test: data[t].test.n_rows(),
        });
        if mode == SweepMode::Full && t == tasks.len() - 1 {
            let base = cell + 1 - tasks.len();
            rows.extend(full_method_rows(
                m,
                &test_rows,
                count,
                available,
                &models[base..=cell],
            )?);
        }
    }

    Ok(SweepReport {
        mode,
        catalog_version,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        config: config.clone(),
        rows,
    })
}

/// RMSE of one routing strategy over the test rows of one true condition
/// (`None` for all rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedScore {
    /// `full-method` routes by the classifier, `oracle-routed` by the label.
    pub routing: String,
    pub condition: Option<Condition>,
    pub rmse_pct: f64,
    pub n: usize,
}

/// Classify each row of `test`, route it to the matching regressor and score
/// `%U50`, alongside routing by the true condition.
pub fn route_and_score(
    test: &FeatureMatrix,
    classifier: &BoostedModel,
    wet: &BoostedModel,
    dry: &BoostedModel,
) -> Result<Vec<RoutedScore>> {
    let truth: Vec<Condition> = test
        .labels()
        .iter()
        .map(|l| {
            l.condition
                .ok_or_else(|| invalid("routing needs condition labels"))
        })
        .collect::<Result<_>>()?;
    let actual = Task::RegressionWet.targets(test, &(0..test.n_rows()).collect::<Vec<_>>())?;
    let p_wet = classifier.predict_matrix(test)?;
    let wet_pred = wet.predict_matrix(test)?;
    let dry_pred = dry.predict_matrix(test)?;
    let pick = |c: Condition, i: usize| {
        if c == Condition::Wet {
            wet_pred[i]
        } else {
            dry_pred[i]
        }
    };
    let routed: Vec<f64> = (0..test.n_rows())
        .map(|i| {
            pick(
                if p_wet[i] >= 0.5 {
                    Condition::Wet
                } else {
                    Condition::Dry
                },
                i,
            )
        })
        .collect();
    let oracle: Vec<f64> = (0..test.n_rows()).map(|i| pick(truth[i], i)).collect();

    let mut out = Vec::new();
    for (name, pred) in [("full-method", &routed), ("oracle-routed", &oracle)] {
        for cond in [Some(Condition::Wet), Some(Condition::Dry), None] {
            let idx: Vec<usize> = (0..test.n_rows())
                .filter(|&i| cond.is_none_or(|c| truth[i] == c))
                .collect();
            if idx.is_empty() {
                continue;
            }
            let a: Vec<f64> = idx.iter().map(|&i| actual[i]).collect();
            let p: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
            out.push(RoutedScore {
                routing: name.to_string(),
                condition: cond,
                rmse_pct: rmse_percent(&a, &p)?,
                n: idx.len(),
            });
        }
    }
    Ok(out)
}

fn full_method_rows(
    m: &FeatureMatrix,
    test_rows: &[usize],
    count: FeatureCount,
    available: usize,
    models: &[BoostedModel],
) -> Result<Vec<SweepRow>> {
    let test = m.subset_rows(test_rows);
    Ok(route_and_score(&test, &models[0], &models[1], &models[2])?
        .into_iter()
        .map(|r| SweepRow {
            feature_count: count,
            n_features: count.resolve(available),
            model: r.routing,
            condition: r.condition,
            metric: "rmse_pct".to_string(),
            value: r.rmse_pct,
            n_test: r.n,
        })
        .collect())
}

/// Bounds for [`random_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub n_estimators: (usize, usize),
    pub max_depth: (usize, usize),
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub subsample: (f64, f64),
    pub colsample_bytree: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            n_estimators: (50, 1000),
            max_depth: (2, 10),
            learning_rate: (0.005, 0.3),
            subsample: (0.5, 1.0),
            colsample_bytree: (0.5, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub hyperparameters: Hyperparameters,
    pub loss: f64,
}

/// Seeded random search minimizing `loss`. Trials are returned in draw order;
/// the best is the first with the lowest loss.
pub fn random_search(
    base: &Hyperparameters,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
    mut loss: impl FnMut(&Hyperparameters) -> Result<f64>,
) -> Result<(Trial, Vec<Trial>)> {
    if n_trials == 0 {
        return Err(invalid("n_trials must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let (lr0, lr1) = space.learning_rate;
        let hp = Hyperparameters {
            n_estimators: rng.random_range(space.n_estimators.0..=space.n_estimators.1),
            max_depth: rng.random_range(space.max_depth.0..=space.max_depth.1),
            learning_rate: rng.random_range(lr0.ln()..=lr1.ln()).exp(),
            subsample: rng.random_range(space.subsample.0..=space.subsample.1),
            colsample_bytree: rng.random_range(space.colsample_bytree.0..=space.colsample_bytree.1),
            ..base.clone()
        };
        let l = loss(&hp)?;
        trials.push(Trial {
            hyperparameters: hp,
            loss: l,
        });
    }
    let best = trials
        .iter()
        .fold(None::<&Trial>, |b, t| {
            if b.is_none_or(|b| t.loss < b.loss) {
                Some(t)
            } else {
                b
            }
        })
        .cloned()
        .expect("at least one trial");
    Ok((best, trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Labels;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(10, 0, 0).unwrap().value, 1.0);
        let z = f1_score(0, 5, 5).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(!z.degenerate);
        let v = f1_score(50, 10, 5).unwrap().value;
        let (p, r) = (5.0 / 6.0, 10.0 / 11.0);
        assert!((v - 2.0 * p * r / (p + r)).abs() < 1e-12);
        assert!((v - 0.86957).abs() < 1e-5);
        assert!(f1_score(0, 0, 3).unwrap().degenerate);
        assert!(f1_score(-1, 0, 0).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse_percent(&[50.0, 60.0], &[50.0, 60.0]).unwrap(), 0.0);
        assert_eq!(rmse_percent(&[50.0, 60.0], &[51.0, 59.0]).unwrap(), 1.0);
        assert_eq!(rmse_percent(&[50.0], &[54.0]).unwrap(), 4.0);
        assert!(rmse_percent(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse_percent(&[], &[]).is_err());
    }

    #[test]
    fn split_examples() {
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        };
        let (a, b) = split_indices(10, &spec).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        assert_eq!(split_indices(10, &spec).unwrap(), (a, b));
        let s0 = split_indices(100, &spec).unwrap();
        let s1 = split_indices(100, &SplitSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(s0, s1);
        assert!(matches!(
            split_indices(1, &spec),
            Err(Error::InsufficientData(_))
        ));
        assert!(split_indices(
            10,
            &SplitSpec {
                train_fraction: 1.0,
                seed: 0
            }
        )
        .is_err());
        assert_eq!(
            split_indices(
                2,
                &SplitSpec {
                    train_fraction: 0.99,
                    seed: 0
                }
            )
            .unwrap()
            .1
            .len(),
            1
        );
    }

    fn separable(n: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let wet = i % 2 == 0;
            let a: f64 = rng.random_range(0.0..1.0);
            let b: f64 = rng.random_range(0.0..1.0);
            let c: f64 = rng.random_range(0.0..1.0);
            let key = if wet { 5.0 + a } else { a };
            let pct = 20.0 + 30.0 * a + 20.0 * b + 10.0 * c;
            rows.push(vec![key, b, c, rng.random_range(0.0..1.0), a]);
            labels.push(Labels::new(
                Some(if wet { Condition::Wet } else { Condition::Dry }),
                Some(pct),
            ));
        }
        let ids = ["key", "b", "c", "noise", "a"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        FeatureMatrix::new(ids, rows, labels).unwrap()
    }

    fn quick(task: Task) -> Hyperparameters {
        Hyperparameters {
            n_estimators: 60,
            max_depth: 3,
            learning_rate: 0.3,
            ..task.default_hyperparameters()
        }
    }

    fn quick_config() -> SweepConfig {
        SweepConfig {
            feature_counts: vec![
                FeatureCount::Top(1),
                FeatureCount::Top(3),
                FeatureCount::All,
            ],
            classifier: quick(Task::Classification),
            wet_regressor: quick(Task::RegressionWet),
            dry_regressor: quick(Task::RegressionDry),
            ..Default::default()
        }
    }

    #[test]
    fn separable_classification_is_perfect() {
        let m = separable(200, 1);
        let r = run_sweep(&m, SweepMode::Classification, &quick_config()).unwrap();
        assert_eq!(r.rows.len(), 3);
        for row in &r.rows {
            assert_eq!(row.value, 1.0, "{row:?}");
        }
    }

    #[test]
    fn more_features_help_a_linear_target() {
        let m = separable(300, 2);
        let r = run_sweep(&m, SweepMode::RegressionWet, &quick_config()).unwrap();
        let one = r
            .find(FeatureCount::Top(1), "regressor-wet", Some(Condition::Wet))
            .unwrap()
            .value;
        let three = r
            .find(FeatureCount::Top(3), "regressor-wet", Some(Condition::Wet))
            .unwrap()
            .value;
        assert!(three < one, "{three} >= {one}");
    }

    #[test]
    fn full_method_decomposes() {
        let m = separable(240, 3);
        let r = run_sweep(&m, SweepMode::Full, &quick_config()).unwrap();
        assert_eq!(r.rows.len(), 3 * (3 + 6));
        for &count in &quick_config().feature_counts {
            let get = |model: &str, c| r.find(count, model, c).unwrap();
            let (w, d, all) = (
                get("full-method", Some(Condition::Wet)),
                get("full-method", Some(Condition::Dry)),
                get("full-method", None),
            );
            let weighted = ((w.n_test as f64 * w.value.powi(2)
                + d.n_test as f64 * d.value.powi(2))
                / all.n_test as f64)
                .sqrt();
            assert!((weighted - all.value).abs() < 1e-9 * all.value.max(1.0));
            if get("classifier", None).value == 1.0 {
                assert_eq!(all.value, get("oracle-routed", None).value);
            }
        }
        let back = SweepReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap().lines().count(),
            r.rows.len() + 1
        );
    }

    #[test]
    fn sweep_is_deterministic() {
        let m = separable(120, 4);
        let cfg = SweepConfig {
            seed: 9,
            ..quick_config()
        };
        let a = run_sweep(&m, SweepMode::Full, &cfg)
            .unwrap()
            .to_json()
            .unwrap();
        let b = run_sweep(&m, SweepMode::Full, &cfg)
            .unwrap()
            .to_json()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_labels_are_rejected() {
        let m = separable(50, 5);
        let unlabeled = FeatureMatrix::new(
            m.ids().to_vec(),
            m.rows().to_vec(),
            vec![Labels::default(); 50],
        )
        .unwrap();
        assert!(run_sweep(&unlabeled, SweepMode::Classification, &quick_config()).is_err());
        assert!(train_task(
            &unlabeled,
            Task::RegressionDry,
            2,
            &quick(Task::RegressionDry),
            &SplitSpec::default(),
            &MrmrConfig::default()
        )
        .is_err());
    }

    #[test]
    fn train_task_records_metrics() {
        let m = separable(200, 6);
        let out = train_task(
            &m,
            Task::RegressionDry,
            3,
            &quick(Task::RegressionDry),
            &SplitSpec::default(),
            &MrmrConfig::default(),
        )
        .unwrap();
        assert_eq!(out.model.selected_feature_ids.len(), 3);
        assert_eq!(out.model.metrics.validation_rmse_pct, Some(out.metric));
        assert_eq!(out.model.metrics.condition, Some(Condition::Dry));
        assert_eq!(out.model.catalog_version, m.catalog_version());
        assert!(train_task(
            &m,
            Task::RegressionDry,
            6,
            &quick(Task::RegressionDry),
            &SplitSpec::default(),
            &MrmrConfig::default()
        )
        .is_err());
        assert!(train_task(
            &m,
            Task::Classification,
            2,
            &quick(Task::RegressionDry),
            &SplitSpec::default(),
            &MrmrConfig::default()
        )
        .is_err());
    }

    #[test]
    fn random_search_is_seeded() {
        let loss = |hp: &Hyperparameters| Ok((hp.learning_rate - 0.1).abs());
        let (best, trials) = random_search(
            &Hyperparameters::default(),
            &SearchSpace::default(),
            20,
            3,
            loss,
        )
        .unwrap();
        let (again, _) = random_search(
            &Hyperparameters::default(),
            &SearchSpace::default(),
            20,
            3,
            loss,
        )
        .unwrap();
        assert_eq!(best, again);
        assert_eq!(trials.len(), 20);
        assert!(trials.iter().all(|t| t.loss >= best.loss));
        assert!(trials
            .iter()
            .all(|t| (0.005..=0.3).contains(&t.hyperparameters.learning_rate)));
    }

    #[test]
    fn feature_count_text() {
        assert_eq!("all".parse::<FeatureCount>().unwrap(), FeatureCount::All);
        assert_eq!("15".parse::<FeatureCount>().unwrap(), FeatureCount::Top(15));
        assert!("0".parse::<FeatureCount>().is_err());
        assert_eq!(
            serde_json::to_string(&FeatureCount::Top(5)).unwrap(),
            "\"5\""
        );
        assert_eq!(FeatureCount::Top(40).resolve(12), 12);
    }

    proptest! {
        #[test]
        fn f1_symmetric_in_errors(tp in 0i64..100, fp in 0i64..100, fn_ in 0i64..100) {
            prop_assert_eq!(f1_score(tp, fp, fn_).unwrap(), f1_score(tp, fn_, fp).unwrap());
        }

        #[test]
        fn rmse_scales(a in prop::collection::vec(-100.0f64..100.0, 1..20), k in -5.0f64..5.0, shift in -3.0f64..3.0) {
            let p: Vec<f64> = a.iter().map(|v| v + shift).collect();
            let base = rmse_percent(&a, &p).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert_eq!(rmse_percent(&a, &a).unwrap(), 0.0);
            let ka: Vec<f64> = a.iter().map(|v| k * v).collect();
            let kp: Vec<f64> = p.iter().map(|v| k * v).collect();
            prop_assert!((rmse_percent(&ka, &kp).unwrap() - k.abs() * base).abs() <= 1e-9 * (1.0 + base * k.abs()));
        }

        #[test]
        fn split_partitions(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let (a, b) = split_indices(n, &SplitSpec { train_fraction: frac, seed }).unwrap();
            prop_assert!(!a.is_empty() && !b.is_empty());
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
