use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub n_estimators: usize,
    /// 0 grows single-leaf trees.
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// L1 penalty on leaf weights (soft threshold on the gradient sum).
    pub alpha: f64,
    /// Penalty per leaf; the minimum gain a split must exceed.
    pub gamma: f64,
    pub min_child_hessian: f64,
    pub objective: Objective,
    /// Initial raw score; derived from the targets when absent.
    pub base_score: Option<f64>,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            n_estimators: 100,
            max_depth: 6,
            learning_rate: 0.3,
            subsample: 1.0,
            colsample_bytree: 1.0,
            lambda: 1.0,
            alpha: 0.0,
            gamma: 0.0,
            min_child_hessian: 1e-3,
            objective: Objective::Squared,
            base_score: None,
            seed: 0,
        }
    }
}

/// Named hyperparameter sets shipped with the tool.
pub const PRESETS: [&str; 4] = ["default", "table2", "table4-wet", "table4-dry"];

impl Hyperparameters {
    /// Wet/dry classifier tuned for the top-20 feature set.
    pub fn classifier_preset() -> Self {
        Hyperparameters {
            n_estimators: 422,
            max_depth: 4,
            learning_rate: 0.157,
            subsample: 0.837,
            colsample_bytree: 0.603,
            objective: Objective::Logistic,
            ..Default::default()
        }
    }

    /// Wet-condition `%U50` regressor tuned for the top-10 feature set.
    pub fn wet_regressor_preset() -> Self {
        Hyperparameters {
            n_estimators: 732,
            max_depth: 7,
            learning_rate: 0.008,
            subsample: 0.5,
            colsample_bytree: 1.0,
            objective: Objective::Squared,
            ..Default::default()
        }
    }

    /// Dry-condition `%U50` regressor tuned for the top-10 feature set.
    pub fn dry_regressor_preset() -> Self {
        Hyperparameters {
            n_estimators: 810,
            max_depth: 7,
            learning_rate: 0.016,
            subsample: 0.5,
            colsample_bytree: 1.0,
            objective: Objective::Squared,
            ..Default::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Hyperparameters::default()),
            "table2" => Ok(Hyperparameters::classifier_preset()),
            "table4-wet" => Ok(Hyperparameters::wet_regressor_preset()),
            "table4-dry" => Ok(Hyperparameters::dry_regressor_preset()),
            other => Err(invalid(format!(
                "unknown preset `{other}`; expected one of {PRESETS:?}"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fraction = |v: f64| v > 0.0 && v <= 1.0;
        if self.n_estimators == 0 {
            return Err(invalid("n_estimators must be at least 1"));
        }
        if !fraction(self.learning_rate) {
            return Err(invalid(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if !fraction(self.subsample) || !fraction(self.colsample_bytree) {
            return Err(invalid("subsample and colsample_bytree must lie in (0, 1]"));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("min_child_hessian", self.min_child_hessian),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        if let Some(b) = self.base_score {
            if !b.is_finite() {
                return Err(invalid("base_score must be finite"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_tuned_values() {
        let c = Hyperparameters::preset("table2").unwrap();
        assert_eq!((c.n_estimators, c.max_depth), (422, 4));
        assert_eq!(
            (c.learning_rate, c.subsample, c.colsample_bytree),
            (0.157, 0.837, 0.603)
        );
        assert_eq!(c.objective, Objective::Logistic);
        let w = Hyperparameters::preset("table4-wet").unwrap();
        assert_eq!(
            (
                w.n_estimators,
                w.max_depth,
                w.learning_rate,
                w.subsample,
                w.colsample_bytree
            ),
            (732, 7, 0.008, 0.5, 1.0)
        );
        let d = Hyperparameters::preset("table4-dry").unwrap();
        assert_eq!(
            (
                d.n_estimators,
                d.max_depth,
                d.learning_rate,
                d.subsample,
                d.colsample_bytree
            ),
            (810, 7, 0.016, 0.5, 1.0)
        );
        assert!(Hyperparameters::preset("table9").is_err());
        for p in PRESETS {
            Hyperparameters::preset(p).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn validation() {
        let bad = [
            Hyperparameters {
                n_estimators: 0,
                ..Default::default()
            },
            Hyperparameters {
                learning_rate: 0.0,
                ..Default::default()
            },
            Hyperparameters {
                subsample: 1.2,
                ..Default::default()
            },
            Hyperparameters {
                colsample_bytree: 0.0,
                ..Default::default()
            },
            Hyperparameters {
                lambda: -1.0,
                ..Default::default()
            },
            Hyperparameters {
                gamma: f64::NAN,
                ..Default::default()
            },
        ];
        for hp in bad {
            assert!(hp.validate().is_err(), "{hp:?}");
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let hp: Hyperparameters =
            serde_json::from_str(r#"{"n_estimators": 7, "objective": "logistic"}"#).unwrap();
        assert_eq!(hp.n_estimators, 7);
        assert_eq!(hp.objective, Objective::Logistic);
        assert_eq!(hp.lambda, 1.0);
    }
}
