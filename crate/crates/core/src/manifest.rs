//! Run manifest: every setting that determines a run's outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assessment::{SigmaMode, DEFAULT_SAFETY_FACTOR, DEFAULT_SIGMA_KV};
use crate::dsp::DspConfig;
use crate::error::{invalid, Error, Result};
use crate::evaluation::{FeatureCount, SplitSpec};
use crate::features::{build_catalog, CatalogConfig};
use crate::mrmr::MrmrConfig;
use crate::synthetic::DatasetConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelPaths {
    pub classifier: Option<String>,
    pub wet: Option<String>,
    pub dry: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunManifest {
    pub seed: u64,
    pub dsp: DspConfig,
    pub catalog: CatalogConfig,
    /// Filled in from `catalog`; a stored value must agree with it.
    pub catalog_version: Option<String>,
    pub models: ModelPaths,
    /// Operating voltage for assessment; when absent, the measurement's own
    /// applied voltage is used.
    pub u_ph_kv: Option<f64>,
    pub r: f64,
    pub sigma_default_kv: f64,
    pub eq11_sigma: SigmaMode,
    pub window_days: f64,
    /// Rows recorded below this applied voltage are dropped before training.
    pub min_voltage_kv: Option<f64>,
    pub train_fraction: f64,
    pub mrmr: MrmrConfig,
    pub feature_counts: Vec<FeatureCount>,
    pub dataset: DatasetConfig,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            seed: 0,
            dsp: DspConfig::default(),
            catalog: CatalogConfig::default(),
            catalog_version: None,
            models: ModelPaths::default(),
            u_ph_kv: None,
            r: DEFAULT_SAFETY_FACTOR,
            sigma_default_kv: DEFAULT_SIGMA_KV,
            eq11_sigma: SigmaMode::default(),
            window_days: 90.0,
            min_voltage_kv: None,
            train_fraction: 0.8,
            mrmr: MrmrConfig::default(),
            feature_counts: FeatureCount::standard(),
            dataset: DatasetConfig::default(),
        }
    }
}

impl RunManifest {
    /// Validate, fill in the catalog version and apply a seed override.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<RunManifest> {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.dataset.seed = self.seed;
        self.dsp.validate()?;
        let version = build_catalog(&self.catalog).version().to_string();
        match &self.catalog_version {
            Some(v) if *v != version => {
                return Err(Error::IncompatibleInput(format!(
                    "manifest catalog_version {v} but catalog builds {version}"
                )));
            }
            _ => self.catalog_version = Some(version),
        }
        if self.u_ph_kv.is_some_and(|u| !(u > 0.0))
            || !(self.r > 0.0)
            || !(self.sigma_default_kv >= 0.0)
            || !(self.window_days > 0.0)
        {
            return Err(invalid(
                "u_ph_kv, r and window_days must be positive and sigma_default_kv non-negative",
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid("train_fraction must lie in (0, 1)"));
        }
        Ok(self)
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<RunManifest> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunManifest> {
        RunManifest::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let m = RunManifest::from_json(r#"{"u_ph_kv": 127.0, "dsp": {"ma_window": 9}}"#).unwrap();
        assert_eq!(m.u_ph_kv, Some(127.0));
        assert_eq!(m.dsp.ma_window, 9);
        assert_eq!(m.dsp.es_alpha, 0.3);
        assert_eq!(m.r, 1.6);
        assert_eq!(m.sigma_default_kv, 14.0);
    }

    #[test]
    fn resolve_fills_version_and_seed() {
        let m = RunManifest::default().resolve(Some(5)).unwrap();
        assert_eq!(m.seed, 5);
        assert_eq!(m.dataset.seed, 5);
        assert_eq!(
            m.catalog_version.as_deref(),
            Some(build_catalog(&CatalogConfig::default()).version())
        );
        let back = RunManifest::from_json(&m.to_json().unwrap())
            .unwrap()
            .resolve(None)
            .unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn resolve_rejects_inconsistent_settings() {
        let stale = RunManifest {
            catalog_version: Some("lc-v1-3-000000".into()),
            ..Default::default()
        };
        assert!(matches!(
            stale.resolve(None),
            Err(Error::IncompatibleInput(_))
        ));
        assert!(RunManifest {
            r: 0.0,
            ..Default::default()
        }
        .resolve(None)
        .is_err());
        assert!(RunManifest {
            u_ph_kv: Some(-1.0),
            ..Default::default()
        }
        .resolve(None)
        .is_err());
        assert!(RunManifest {
            train_fraction: 1.0,
            ..Default::default()
        }
        .resolve(None)
        .is_err());
    }
}
