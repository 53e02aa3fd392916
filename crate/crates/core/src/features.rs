//! The named leakage-current feature catalog and per-waveform extraction.
//!
//! For each low-pass filter (moving average, exponential smoothing) the
//! fundamental of the *filtered* signal is subtracted from the *raw* signal
//! and descriptive statistics of that residual are taken. On top of those
//! come the MA fundamental amplitude and its transforms, pulse-count
//! histograms in mA and in percent of the fundamental, harmonics 1..10 and the
//! applied voltage. The full catalog has 72 entries.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{self, DspConfig, Fundamental, HarmonicSpectrum, Pulse, HARMONIC_COUNT};
use crate::error::{Error, Result};
use crate::stats;
use crate::waveform::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureGroup {
    #[serde(rename = "residual-stat-MA")]
    ResidualStatMa,
    #[serde(rename = "residual-stat-ES")]
    ResidualStatEs,
    #[serde(rename = "fundamental-amplitude")]
    FundamentalAmplitude,
    #[serde(rename = "pulse-bin-mA")]
    PulseBinMa,
    #[serde(rename = "pulse-bin-percent")]
    PulseBinPercent,
    #[serde(rename = "harmonic")]
    Harmonic,
    #[serde(rename = "applied-voltage")]
    AppliedVoltage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub description: String,
    pub group: FeatureGroup,
}

/// Lower edges (mA) of the pulse peak-amplitude bins; the last bin is open.
pub const PULSE_BINS_MA: [f64; 12] = [
    0.0, 0.2, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 7.5, 10.0, 15.0, 20.0,
];
/// Lower edges (% of fundamental amplitude) of the relative pulse bins.
pub const PULSE_BINS_PERCENT: [f64; 7] = [0.0, 50.0, 100.0, 200.0, 300.0, 400.0, 500.0];

/// Floor applied to arguments of `ln`, `log10` and `1/x`.
pub const TRANSFORM_EPS: f64 = 1e-9;
/// Ceiling applied to outputs of `e^x` and `10^x`.
pub const TRANSFORM_CAP: f64 = 1e12;

const CATALOG_SCHEMA: &str = "lc-v1";

#[derive(Debug, Clone, Copy)]
enum Transform {
    Square,
    Sqrt,
    Ln,
    Log10,
    Exp,
    Inverse,
    Pow10,
}

const TRANSFORMS: [(Transform, &str, &str); 7] = [
    (Transform::Square, "sq", "square"),
    (Transform::Sqrt, "sqrt", "square root"),
    (Transform::Ln, "ln", "natural log"),
    (Transform::Log10, "log10", "common log"),
    (Transform::Exp, "exp", "exponential"),
    (Transform::Inverse, "inv", "inverse"),
    (Transform::Pow10, "pow10", "power of ten"),
];

impl Transform {
    fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Square => x * x,
            Transform::Sqrt => x.max(0.0).sqrt(),
            Transform::Ln => x.max(TRANSFORM_EPS).ln(),
            Transform::Log10 => x.max(TRANSFORM_EPS).log10(),
            Transform::Exp => x.exp().min(TRANSFORM_CAP),
            Transform::Inverse => 1.0 / x.max(TRANSFORM_EPS),
            Transform::Pow10 => 10f64.powf(x).min(TRANSFORM_CAP),
        }
    }
}

fn bin_label(edges: &[f64], i: usize) -> String {
    match edges.get(i + 1) {
        Some(hi) => format!("{}_{}", edges[i], hi),
        None => format!("{}_inf", edges[i]),
    }
}

/// Index of the half-open bin `[edges[i], edges[i+1])` containing `x`.
fn bin_index(edges: &[f64], x: f64) -> usize {
    edges.iter().rposition(|&lo| x >= lo).unwrap_or(0)
}

fn full_entries() -> Vec<CatalogEntry> {
    let mut out = Vec::with_capacity(72);
    let mut push = |id: String, description: String, group| {
        out.push(CatalogEntry {
            id,
            description,
            group,
        })
    };

    for (tag, name, group) in [
        ("ma", "moving-average", FeatureGroup::ResidualStatMa),
        ("es", "exponential-smoothing", FeatureGroup::ResidualStatEs),
    ] {
        let base = format!("residual vs {name} fundamental");
        push(format!("res_{tag}_mean"), format!("mean of {base}"), group);
        push(
            format!("res_{tag}_std"),
            format!("standard deviation of {base}"),
            group,
        );
        push(
            format!("res_{tag}_min"),
            format!("minimum of {base}"),
            group,
        );
        push(
            format!("res_{tag}_max"),
            format!("maximum of {base}"),
            group,
        );
        push(
            format!("res_{tag}_absmax"),
            format!("max(|min|, |max|) of {base}"),
            group,
        );
        for (_, suffix, label) in TRANSFORMS {
            push(
                format!("res_{tag}_absmax_{suffix}"),
                format!("{label} of absolute maximum of {base}"),
                group,
            );
        }
        for p in [25, 50, 75] {
            push(
                format!("res_{tag}_p{p}"),
                format!("{p}th percentile of {base}"),
                group,
            );
        }
        push(
            format!("res_{tag}_pulse_mean"),
            format!("mean peak amplitude of pulses in {base}"),
            group,
        );
        push(
            format!("res_{tag}_pulse_count"),
            format!("number of pulses in {base}"),
            group,
        );
    }

    let group = FeatureGroup::FundamentalAmplitude;
    push(
        "fund_amp".into(),
        "amplitude of the moving-average fundamental (mA)".into(),
        group,
    );
    for (_, suffix, label) in TRANSFORMS {
        push(
            format!("fund_amp_{suffix}"),
            format!("{label} of the fundamental amplitude"),
            group,
        );
    }

    for i in 0..PULSE_BINS_MA.len() {
        let label = bin_label(&PULSE_BINS_MA, i);
        push(
            format!("pulse_mA_{label}"),
            format!("pulses with peak in [{}) mA", label.replace('_', ", ")),
            FeatureGroup::PulseBinMa,
        );
    }
    for i in 0..PULSE_BINS_PERCENT.len() {
        let label = bin_label(&PULSE_BINS_PERCENT, i);
        push(
            format!("pulse_pct_{label}"),
            format!(
                "pulses with peak in [{}) % of fundamental amplitude",
                label.replace('_', ", ")
            ),
            FeatureGroup::PulseBinPercent,
        );
    }
    for k in 1..=HARMONIC_COUNT {
        push(
            format!("harm_{k:02}"),
            format!("amplitude of harmonic {k} (mA)"),
            FeatureGroup::Harmonic,
        );
    }
    push(
        "applied_voltage".into(),
        "applied phase-to-ground voltage (kV)".into(),
        FeatureGroup::AppliedVoltage,
    );
    out
}

/// Which feature groups to keep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogConfig {
    pub exclude_groups: Vec<FeatureGroup>,
}

/// Ordered feature definitions; immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureCatalog {
    entries: Vec<CatalogEntry>,
    version: String,
}

/// Version stamp derived from the ordered id list, so any matrix header can be
/// checked against a catalog without side files.
pub fn catalog_version_for<S: AsRef<str>>(ids: &[S]) -> String {
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update(id.as_ref().as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("{CATALOG_SCHEMA}-{}-{hex}", ids.len())
}

impl FeatureCatalog {
    pub fn build(config: &CatalogConfig) -> FeatureCatalog {
        let entries: Vec<_> = full_entries()
            .into_iter()
            .filter(|e| !config.exclude_groups.contains(&e.group))
            .collect();
        let ids: Vec<&str> = entries.iter().map(|e| e.id.as_str()).collect();
        let version = catalog_version_for(&ids);
        FeatureCatalog { entries, version }
    }

    pub fn from_entries(entries: Vec<CatalogEntry>) -> Result<FeatureCatalog> {
        let known: HashMap<String, CatalogEntry> = full_entries()
            .into_iter()
            .map(|e| (e.id.clone(), e))
            .collect();
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !known.contains_key(&e.id) {
                return Err(Error::IncompatibleInput(format!(
                    "unknown feature id `{}`",
                    e.id
                )));
            }
            if !seen.insert(e.id.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate feature id `{}`",
                    e.id
                )));
            }
        }
        let ids: Vec<&str> = entries.iter().map(|e| e.id.as_str()).collect();
        let version = catalog_version_for(&ids);
        Ok(FeatureCatalog { entries, version })
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries)?)
    }

    pub fn from_json(text: &str) -> Result<FeatureCatalog> {
        FeatureCatalog::from_entries(serde_json::from_str(text)?)
    }
}

pub fn build_catalog(config: &CatalogConfig) -> FeatureCatalog {
    FeatureCatalog::build(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub catalog_version: String,
}

/// Intermediate signals for one waveform under one filter.
#[derive(Debug, Clone)]
pub struct FilterBranch {
    pub filtered: Waveform,
    pub fundamental: Fundamental,
    pub residual: Waveform,
    pub threshold: f64,
    pub pulses: Vec<Pulse>,
}

/// Everything the extractor derives from a waveform.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub ma: FilterBranch,
    pub es: FilterBranch,
    pub spectrum: HarmonicSpectrum,
    pub applied_voltage: f64,
}

fn branch(raw: &Waveform, filtered: Waveform, dsp_config: &DspConfig) -> Result<FilterBranch> {
    let fundamental = dsp::extract_fundamental(&filtered)?;
    let residual = dsp::residual(raw, &fundamental)?;
    let threshold = dsp_config.pulse_threshold.resolve(residual.samples());
    let pulses = dsp::detect_pulses(&residual, threshold)?;
    Ok(FilterBranch {
        filtered,
        fundamental,
        residual,
        threshold,
        pulses,
    })
}

pub fn analyze(w: &Waveform, dsp_config: &DspConfig) -> Result<Analysis> {
    dsp_config.validate()?;
    let window = dsp_config.ma_window.min(w.len());
    let ma = branch(w, dsp::moving_average(w, window)?, dsp_config)?;
    let es = branch(
        w,
        dsp::exponential_smoothing(w, dsp_config.es_alpha)?,
        dsp_config,
    )?;
    let spectrum = dsp::harmonic_spectrum(w)?;
    Ok(Analysis {
        ma,
        es,
        spectrum,
        applied_voltage: w.applied_voltage(),
    })
}

fn residual_stats(b: &FilterBranch, out: &mut Vec<f64>) {
    let r = b.residual.samples();
    let mut sorted = r.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let absmax = min.abs().max(max.abs());
    out.extend([stats::mean(r), stats::std_dev(r), min, max, absmax]);
    out.extend(TRANSFORMS.iter().map(|(t, _, _)| t.apply(absmax)));
    out.extend([25.0, 50.0, 75.0].map(|p| stats::percentile_sorted(&sorted, p)));
    let peaks: Vec<f64> = b.pulses.iter().map(|p| p.peak_amplitude).collect();
    out.extend([stats::mean(&peaks), peaks.len() as f64]);
}

fn full_values(a: &Analysis) -> Vec<f64> {
    let mut out = Vec::with_capacity(72);
    residual_stats(&a.ma, &mut out);
    residual_stats(&a.es, &mut out);

    let fund = a.ma.fundamental.amplitude;
    out.push(fund);
    out.extend(TRANSFORMS.iter().map(|(t, _, _)| t.apply(fund)));

    let mut ma_bins = [0.0; PULSE_BINS_MA.len()];
    let mut pct_bins = [0.0; PULSE_BINS_PERCENT.len()];
    for p in &a.ma.pulses {
        ma_bins[bin_index(&PULSE_BINS_MA, p.peak_amplitude)] += 1.0;
        let idx = if fund > 0.0 {
            bin_index(&PULSE_BINS_PERCENT, 100.0 * p.peak_amplitude / fund)
        } else {
            PULSE_BINS_PERCENT.len() - 1
        };
        pct_bins[idx] += 1.0;
    }
    out.extend(ma_bins);
    out.extend(pct_bins);
    out.extend(a.spectrum.amplitudes);
    out.push(a.applied_voltage);
    out
}

/// Extract a catalog-aligned feature vector from one waveform.
pub fn extract(
    w: &Waveform,
    catalog: &FeatureCatalog,
    dsp_config: &DspConfig,
) -> Result<FeatureVector> {
    let analysis = analyze(w, dsp_config)?;
    Ok(vector_from_analysis(&analysis, catalog))
}

pub fn vector_from_analysis(analysis: &Analysis, catalog: &FeatureCatalog) -> FeatureVector {
    let values = full_values(analysis);
    let index: HashMap<String, usize> = full_entries()
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e.id, i))
        .collect();
    let values = catalog
        .entries()
        .iter()
        .map(|e| values[index[&e.id]])
        .collect();
    FeatureVector {
        values,
        catalog_version: catalog.version().to_string(),
    }
}
