//! Second-order gradient-boosted decision trees.
//!
//! Each round computes per-sample gradients `g` and hessians `h` of the loss
//! at the current raw scores, draws a row subsample and a per-tree column
//! subsample from the run's seeded RNG, and grows a tree that greedily
//! maximizes
//!
//! ```text
//! gain = ½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)] − γ
//! ```
//!
//! Leaves get `−G/(H+λ)` scaled by the learning rate, so a model's raw score is
//! simply `base_score + Σ tree(x)`.

mod objective;
mod params;
mod tree;

pub use objective::{gradients, sigmoid, Objective};
pub use params::{Hyperparameters, PRESETS};
pub use tree::{leaf_weight, split_gain, TreeNode};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::FeatureVector;
use crate::matrix::FeatureMatrix;
use crate::Condition;
use tree::{GrowParams, Grower};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Held-out metrics recorded at training time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelMetrics {
    /// Surface condition a regressor was trained for.
    pub condition: Option<Condition>,
    /// Validation RMSE in `%U50` points; used as `%σ̂m` at assessment time.
    pub validation_rmse_pct: Option<f64>,
    pub validation_f1: Option<f64>,
    pub n_train: usize,
    pub n_validation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub format_version: u32,
    pub objective: Objective,
    pub base_score: f64,
    pub hyperparameters: Hyperparameters,
    pub selected_feature_ids: Vec<String>,
    /// Catalog whose columns `selected_feature_ids` are drawn from.
    pub catalog_version: String,
    pub trees: Vec<TreeNode>,
    #[serde(default)]
    pub metrics: ModelMetrics,
}

fn check_inputs(x: &FeatureMatrix, y: &[f64]) -> Result<()> {
    if x.n_rows() == 0 || y.is_empty() {
        return Err(invalid("empty training data"));
    }
    if x.n_rows() != y.len() {
        return Err(invalid(format!(
            "{} rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if x.n_rows() < 2 {
        return Err(invalid("need at least 2 training rows"));
    }
    if x.n_features() == 0 {
        return Err(invalid("no features to train on"));
    }
    if x.rows().iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("feature matrix contains NaN or infinite values"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("targets contain NaN or infinite values"));
    }
    Ok(())
}

fn sample_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n)
}

/// Train a boosted ensemble on every column of `x`.
pub fn train(x: &FeatureMatrix, y: &[f64], hp: &Hyperparameters) -> Result<BoostedModel> {
    hp.validate()?;
    check_inputs(x, y)?;
    hp.objective.check_labels(y)?;

    let n = x.n_rows();
    let n_features = x.n_features();
    let columns = x.columns();
    let presorted: Vec<Vec<usize>> = columns
        .iter()
        .map(|c| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
            order
        })
        .collect();

    let base_score = match hp.base_score {
        Some(b) => b,
        None => hp.objective.base_score(y)?,
    };
    let mut raw = vec![base_score; n];
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut trees = Vec::with_capacity(hp.n_estimators);
    let mut in_sample = vec![false; n];

    for _ in 0..hp.n_estimators {
        let (grad, hess) = gradients(hp.objective, y, &raw)?;

        in_sample.iter_mut().for_each(|m| *m = hp.subsample >= 1.0);
        if hp.subsample < 1.0 {
            for i in index::sample(&mut rng, n, sample_count(hp.subsample, n)) {
                in_sample[i] = true;
            }
        }
        let features: Vec<usize> = if hp.colsample_bytree < 1.0 {
            let mut f = index::sample(
                &mut rng,
                n_features,
                sample_count(hp.colsample_bytree, n_features),
            )
            .into_vec();
            f.sort_unstable();
            f
        } else {
            (0..n_features).collect()
        };
        let sorted: Vec<Vec<usize>> = features
            .iter()
            .map(|&f| {
                presorted[f]
                    .iter()
                    .copied()
                    .filter(|&i| in_sample[i])
                    .collect()
            })
            .collect();

        let grower = Grower {
            columns: &columns,
            ids: x.ids(),
            grad: &grad,
            hess: &hess,
            params: GrowParams {
                max_depth: hp.max_depth,
                learning_rate: hp.learning_rate,
                lambda: hp.lambda,
                alpha: hp.alpha,
                gamma: hp.gamma,
                min_child_hessian: hp.min_child_hessian,
            },
        };
        let tree = grower.grow(&features, sorted, 0);
        for (i, r) in raw.iter_mut().enumerate() {
            *r += tree.predict(&x.rows()[i]);
        }
        trees.push(tree);
    }

    Ok(BoostedModel {
        format_version: MODEL_FORMAT_VERSION,
        objective: hp.objective,
        base_score,
        hyperparameters: hp.clone(),
        selected_feature_ids: x.ids().to_vec(),
        catalog_version: x.catalog_version(),
        trees,
        metrics: ModelMetrics::default(),
    })
}

impl BoostedModel {
    /// A model with no trees.
    pub fn constant(
        objective: Objective,
        base_score: f64,
        ids: Vec<String>,
        catalog_version: String,
    ) -> Self {
        BoostedModel {
            format_version: MODEL_FORMAT_VERSION,
            objective,
            base_score,
            hyperparameters: Hyperparameters {
                objective,
                ..Default::default()
            },
            selected_feature_ids: ids,
            catalog_version,
            trees: Vec::new(),
            metrics: ModelMetrics::default(),
        }
    }

    /// The same model restricted to its first `rounds` trees.
    pub fn truncated(&self, rounds: usize) -> BoostedModel {
        let mut m = self.clone();
        m.trees.truncate(rounds);
        m
    }

    /// Raw score for a row aligned with `selected_feature_ids`.
    pub fn predict_raw_selected(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    /// Regression value, or class-1 probability for logistic models.
    pub fn predict_selected(&self, row: &[f64]) -> f64 {
        self.objective.transform(self.predict_raw_selected(row))
    }

    fn column_positions(&self, ids: &[String]) -> Result<Vec<usize>> {
        self.selected_feature_ids
            .iter()
            .map(|id| {
                ids.iter()
                    .position(|c| c == id)
                    .ok_or_else(|| Error::IncompatibleInput(format!("input lacks feature `{id}`")))
            })
            .collect()
    }

    fn check_catalog(&self, version: &str) -> Result<()> {
        if version != self.catalog_version {
            return Err(Error::IncompatibleInput(format!(
                "model expects catalog {}, input is {version}",
                self.catalog_version
            )));
        }
        Ok(())
    }

    /// Predict one feature vector whose values are aligned with `ids`.
    pub fn predict(&self, x: &FeatureVector, ids: &[String]) -> Result<f64> {
        self.check_catalog(&x.catalog_version)?;
        if x.values.len() != ids.len() {
            return Err(Error::IncompatibleInput(format!(
                "{} values for {} ids",
                x.values.len(),
                ids.len()
            )));
        }
        let pos = self.column_positions(ids)?;
        let row: Vec<f64> = pos.iter().map(|&j| x.values[j]).collect();
        Ok(self.predict_selected(&row))
    }

    pub fn predict_matrix(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_catalog(&m.catalog_version())?;
        let pos = self.column_positions(m.ids())?;
        Ok(m.rows()
            .iter()
            .map(|r| {
                let row: Vec<f64> = pos.iter().map(|&j| r[j]).collect();
                self.predict_selected(&row)
            })
            .collect())
    }

    /// Training objective `Σ l(y, ŷ) + Σ_trees (γ T + ½ λ Σ w²)` on the given
    /// rows (aligned with `selected_feature_ids`), using the stored
    /// learning-rate-scaled leaf weights.
    pub fn regularized_objective(&self, rows: &[Vec<f64>], y: &[f64]) -> f64 {
        let hp = &self.hyperparameters;
        let data: f64 = rows
            .iter()
            .zip(y)
            .map(|(r, &t)| self.objective.loss(t, self.predict_raw_selected(r)))
            .sum();
        let penalty: f64 = self
            .trees
            .iter()
            .map(|t| {
                let leaves = t.leaves();
                hp.gamma * leaves.len() as f64
                    + 0.5 * hp.lambda * leaves.iter().map(|w| w * w).sum::<f64>()
            })
            .sum();
        data + penalty
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<BoostedModel> {
        let mut m: BoostedModel = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::IncompatibleInput(format!(
                "unsupported model format {}",
                m.format_version
            )));
        }
        for t in &mut m.trees {
            t.resolve(&m.selected_feature_ids).map_err(Error::Parse)?;
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<BoostedModel> {
        BoostedModel::from_json(&std::fs::read_to_string(path)?)
    }
}
