//! Condition monitoring of overhead-line insulator strings from leakage-current
//! (LC) waveforms.
//!
//! The pipeline runs in stages:
//!
//! 1. [`dsp`] filters the raw waveform, extracts the mains-frequency
//!    fundamental, the residual, pulses and the harmonic spectrum.
//! 2. [`features`] turns those signals into a fixed, named feature vector.
//! 3. [`mrmr`] ranks features by mutual-information relevance over
//!    Spearman redundancy.
//! 4. [`boosting`] trains second-order gradient-boosted trees: a wet/dry
//!    classifier and one `%U50` regressor per surface condition.
//! 5. [`assessment`] converts the regression output into an estimated
//!    critical flashover voltage and an operational / hazardous /
//!    extremely-hazardous verdict.
//!
//! [`synthetic`] generates labeled waveforms for desk-scale experiments and
//! [`evaluation`] holds metrics, splits and the feature-count sweep harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assessment;
pub mod boosting;
pub mod dsp;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod manifest;
pub mod matrix;
pub mod mrmr;
pub mod stats;
pub mod synthetic;
pub mod waveform;

pub use error::{Error, Result};
pub use waveform::Waveform;

/// Surface condition of the insulator string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Wet,
    Dry,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Wet => "wet",
            Condition::Dry => "dry",
        }
    }

    /// Binary label used by the classifier; wet is the positive class.
    pub fn as_label(self) -> f64 {
        match self {
            Condition::Wet => 1.0,
            Condition::Dry => 0.0,
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wet" => Ok(Condition::Wet),
            "dry" => Ok(Condition::Dry),
            other => Err(Error::Parse(format!("unknown condition `{other}`"))),
        }
    }
}

/// Child seed for the `index`-th independent unit of work under `base`
/// (splitmix64 over both inputs), so parallel work gets stable streams.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
