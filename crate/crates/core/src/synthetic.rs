//! Labeled synthetic LC waveforms.
//!
//! This is a test fixture, not a physical model. It only guarantees the
//! monotonicities the pipeline relies on: the fundamental grows with surface
//! conductance, applied voltage and wetness; pulse activity grows with
//! `%U50`; wet strings carry stronger low-order harmonics.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Labels;
use crate::{derive_seed, Condition, Waveform};

/// Conductance of the cleanest reference string, µS.
pub const REFERENCE_CONDUCTANCE_US: f64 = 1.58;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub condition: Condition,
    /// Surface conductance, µS.
    pub contamination_conductance: f64,
    /// kV
    pub applied_voltage: f64,
    /// kV
    pub true_u50: f64,
    pub sample_rate: f64,
    /// Seconds.
    pub duration: f64,
    pub mains_freq: f64,
    /// Standard deviation of additive white noise, mA.
    pub noise_ma: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contamination_conductance > 0.0) {
            return Err(invalid("contamination_conductance must be positive"));
        }
        if !(self.applied_voltage > 0.0) || !(self.true_u50 > self.applied_voltage) {
            return Err(invalid(format!(
                "need 0 < applied_voltage < true_u50, got {} and {}",
                self.applied_voltage, self.true_u50
            )));
        }
        if !(self.duration > 0.0) || !(self.sample_rate > 0.0) || !(self.mains_freq > 0.0) {
            return Err(invalid(
                "sample_rate, duration and mains_freq must be positive",
            ));
        }
        if !(self.noise_ma >= 0.0) {
            return Err(invalid("noise_ma must be non-negative"));
        }
        Ok(())
    }

    pub fn pct_u50(&self) -> f64 {
        100.0 * self.applied_voltage / self.true_u50
    }

    fn wet(&self) -> bool {
        self.condition == Condition::Wet
    }
}

/// Critical flashover voltage of the fixture string, kV: falls with
/// contamination and is lower when wet.
pub fn fixture_u50(condition: Condition, conductance_us: f64) -> f64 {
    let wet = if condition == Condition::Wet {
        0.75
    } else {
        1.0
    };
    160.0 * (conductance_us / REFERENCE_CONDUCTANCE_US).powf(-0.3) * wet
}

/// Fundamental amplitude in mA before per-record scatter.
pub fn nominal_fundamental_ma(
    condition: Condition,
    conductance_us: f64,
    applied_voltage: f64,
) -> f64 {
    let wet = if condition == Condition::Wet {
        4.0
    } else {
        1.0
    };
    0.01 * conductance_us.sqrt() * applied_voltage * wet
}

/// Expected pulses per second.
fn pulse_rate(cfg: &ScenarioConfig) -> f64 {
    let wet = if cfg.wet() { 3.0 } else { 1.0 };
    200.0
        * (cfg.pct_u50() / 100.0).powi(4)
        * (cfg.contamination_conductance / REFERENCE_CONDUCTANCE_US).sqrt()
        * wet
}

/// Median pulse amplitude, mA.
fn pulse_median_ma(cfg: &ScenarioConfig) -> f64 {
    let wet = if cfg.wet() { 2.0 } else { 1.0 };
    0.6 * (cfg.pct_u50() / 100.0)
        * (cfg.contamination_conductance / REFERENCE_CONDUCTANCE_US).powf(0.3)
        * wet
}

/// One waveform and its labels. Deterministic in `cfg.seed`.
pub fn generate(cfg: &ScenarioConfig) -> Result<(Waveform, Labels)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = (cfg.duration * cfg.sample_rate).round() as usize;
    let omega = 2.0 * std::f64::consts::PI * cfg.mains_freq;

    let amp = nominal_fundamental_ma(
        cfg.condition,
        cfg.contamination_conductance,
        cfg.applied_voltage,
    ) * rng.random_range(0.9..1.1);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let (h3, h5) = if cfg.wet() {
        (0.08, 0.01)
    } else {
        (0.02, 0.01)
    };
    let p3 = rng.random_range(0.0..std::f64::consts::TAU);
    let p5 = rng.random_range(0.0..std::f64::consts::TAU);

    let noise = Normal::new(0.0, cfg.noise_ma).map_err(|e| invalid(e.to_string()))?;
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / cfg.sample_rate;
            amp * ((omega * t + phase).sin()
                + h3 * (3.0 * omega * t + p3).sin()
                + h5 * (5.0 * omega * t + p5).sin())
                + noise.sample(&mut rng)
        })
        .collect();

    let expected = pulse_rate(cfg) * cfg.duration;
    let count = if expected > 0.0 {
        Poisson::new(expected)
            .map_err(|e| invalid(e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let heights =
        LogNormal::new(pulse_median_ma(cfg).ln(), 0.8).map_err(|e| invalid(e.to_string()))?;
    // decay constant of a spike, in samples
    let tau = 2.0e-4 * cfg.sample_rate;
    let span = (6.0 * tau).ceil() as usize;
    for _ in 0..count {
        let at = rng.random_range(0..n);
        let height = heights.sample(&mut rng);
        // discharges follow the polarity of the half-cycle they occur in
        let sign = if (omega * at as f64 / cfg.sample_rate + phase).sin() >= 0.0 {
            1.0
        } else {
            -1.0
        };
        for (k, s) in samples[at..(at + span).min(n)].iter_mut().enumerate() {
            *s += sign * height * (-(k as f64) / tau).exp();
        }
    }

    let w = Waveform::new(
        samples,
        cfg.sample_rate,
        cfg.mains_freq,
        cfg.applied_voltage,
    )?;
    Ok((w, Labels::new(Some(cfg.condition), Some(cfg.pct_u50()))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_per_condition: usize,
    /// Log-uniform conductance range, µS.
    pub conductance_us: (f64, f64),
    /// Uniform `%U50` range.
    pub pct_u50: (f64, f64),
    pub sample_rate: f64,
    pub duration: f64,
    pub mains_freq: f64,
    pub noise_ma: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_per_condition: 200,
            conductance_us: (REFERENCE_CONDUCTANCE_US, 18.33),
            pct_u50: (15.0, 99.0),
            sample_rate: 10_000.0,
            duration: 0.2,
            mains_freq: 50.0,
            noise_ma: 0.01,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_condition == 0 {
            return Err(invalid("n_per_condition must be at least 1"));
        }
        let (g0, g1) = self.conductance_us;
        if !(g0 > 0.0 && g1 >= g0) {
            return Err(invalid(format!("bad conductance range {g0}..{g1}")));
        }
        let (p0, p1) = self.pct_u50;
        if !(p0 > 0.0 && p1 >= p0 && p1 < 100.0) {
            return Err(invalid(format!(
                "pct_u50 range {p0}..{p1} must lie in (0, 100)"
            )));
        }
        Ok(())
    }

    /// Scenario `index`: the first `n_per_condition` are wet, the rest dry.
    pub fn scenario(&self, index: usize) -> ScenarioConfig {
        let condition = if index < self.n_per_condition {
            Condition::Wet
        } else {
            Condition::Dry
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, index as u64));
        let (g0, g1) = self.conductance_us;
        let g = if g1 > g0 {
            (rng.random_range(g0.ln()..g1.ln())).exp()
        } else {
            g0
        };
        let (p0, p1) = self.pct_u50;
        let pct = if p1 > p0 {
            rng.random_range(p0..p1)
        } else {
            p0
        };
        let true_u50 = fixture_u50(condition, g);
        ScenarioConfig {
            condition,
            contamination_conductance: g,
            applied_voltage: pct * true_u50 / 100.0,
            true_u50,
            sample_rate: self.sample_rate,
            duration: self.duration,
            mains_freq: self.mains_freq,
            noise_ma: self.noise_ma,
            seed: rng.random(),
        }
    }

    pub fn scenarios(&self) -> Vec<ScenarioConfig> {
        (0..2 * self.n_per_condition)
            .map(|i| self.scenario(i))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub scenario: ScenarioConfig,
    pub waveform: Waveform,
    pub labels: Labels,
}

/// The whole corpus in memory, wet scenarios first.
pub fn generate_corpus(cfg: &DatasetConfig) -> Result<Vec<Sample>> {
    cfg.validate()?;
    cfg.scenarios()
        .into_par_iter()
        .map(|scenario| {
            let (waveform, labels) = generate(&scenario)?;
            Ok(Sample {
                scenario,
                waveform,
                labels,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub file: String,
    pub condition: Condition,
    pub conductance_us: f64,
    pub applied_voltage_kv: f64,
    pub true_u50_kv: f64,
    pub pct_u50: f64,
}

pub const MANIFEST_HEADER: &str =
    "file,condition,conductance_us,applied_voltage_kv,true_u50_kv,pct_u50";

pub fn write_manifest(mut out: impl Write, rows: &[ManifestRow]) -> Result<()> {
    writeln!(out, "{MANIFEST_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.file, r.condition, r.conductance_us, r.applied_voltage_kv, r.true_u50_kv, r.pct_u50
        )?;
    }
    Ok(())
}

pub fn read_manifest(reader: impl BufRead) -> Result<Vec<ManifestRow>> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(MANIFEST_HEADER) {
        return Err(Error::Parse("manifest header missing".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Parse(format!(
                "manifest line {}: expected 6 fields",
                i + 2
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("manifest line {}: {e}", i + 2)))
        };
        rows.push(ManifestRow {
            file: f[0].to_string(),
            condition: f[1].parse()?,
            conductance_us: num(f[2])?,
            applied_voltage_kv: num(f[3])?,
            true_u50_kv: num(f[4])?,
            pct_u50: num(f[5])?,
        });
    }
    Ok(rows)
}

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Write `2·n` waveform CSVs and `manifest.csv` into `dir`.
pub fn generate_dataset(cfg: &DatasetConfig, dir: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let corpus = generate_corpus(cfg)?;
    let mut counters = [0usize; 2];
    let named: Vec<(PathBuf, &Sample, ManifestRow)> = corpus
        .iter()
        .map(|s| {
            let slot = &mut counters[(s.scenario.condition == Condition::Dry) as usize];
            let file = format!("{}_{:04}.csv", s.scenario.condition, *slot);
            *slot += 1;
            let row = ManifestRow {
                file: file.clone(),
                condition: s.scenario.condition,
                conductance_us: s.scenario.contamination_conductance,
                applied_voltage_kv: s.scenario.applied_voltage,
                true_u50_kv: s.scenario.true_u50,
                pct_u50: s.scenario.pct_u50(),
            };
            (dir.join(file), s, row)
        })
        .collect();
    named
        .par_iter()
        .try_for_each(|(path, s, _)| s.waveform.save(path))?;
    let rows: Vec<ManifestRow> = named.into_iter().map(|(_, _, r)| r).collect();
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(MANIFEST_FILE))?);
    write_manifest(&mut f, &rows)?;
    f.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{self, DspConfig};
    use crate::features::{build_catalog, extract, CatalogConfig};
    use crate::mrmr::spearman;

    fn scenario(condition: Condition, g: f64, v: f64) -> ScenarioConfig {
        ScenarioConfig {
            condition,
            contamination_conductance: g,
            applied_voltage: v,
            true_u50: fixture_u50(condition, g),
            sample_rate: 10_000.0,
            duration: 0.2,
            mains_freq: 50.0,
            noise_ma: 0.01,
            seed: 42,
        }
    }

    #[test]
    fn clean_dry_low_voltage_is_quiet() {
        let cfg = scenario(Condition::Dry, 1.58, 15.0);
        let (w, labels) = generate(&cfg).unwrap();
        assert_eq!(labels.condition, Some(Condition::Dry));
        let a = crate::features::analyze(&w, &DspConfig::default()).unwrap();
        assert!(a.ma.pulses.len() <= 1, "{} pulses", a.ma.pulses.len());
        let h = a.spectrum.amplitudes;
        let distortion: f64 = h[1..].iter().map(|x| x * x).sum();
        assert!(distortion < 0.05 * h[0] * h[0]);
    }

    #[test]
    fn same_seed_same_waveform() {
        let cfg = scenario(Condition::Wet, 5.0, 40.0);
        assert_eq!(generate(&cfg).unwrap().0, generate(&cfg).unwrap().0);
        let other = ScenarioConfig {
            seed: 43,
            ..cfg.clone()
        };
        assert_ne!(generate(&cfg).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn wet_fundamental_exceeds_dry() {
        for (g, v) in [(1.58, 10.0), (4.86, 30.0), (18.33, 20.0)] {
            let wet = generate(&scenario(Condition::Wet, g, v)).unwrap().0;
            let dry = generate(&scenario(Condition::Dry, g, v)).unwrap().0;
            let fw = dsp::extract_fundamental(&wet).unwrap().amplitude;
            let fd = dsp::extract_fundamental(&dry).unwrap().amplitude;
            assert!(fw > fd, "g={g}: {fw} <= {fd}");
        }
    }

    #[test]
    fn invalid_scenarios() {
        let mut cfg = scenario(Condition::Dry, 1.58, 15.0);
        cfg.applied_voltage = cfg.true_u50 + 1.0;
        assert!(generate(&cfg).is_err());
        cfg = scenario(Condition::Dry, 1.58, 15.0);
        cfg.contamination_conductance = 0.0;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn dataset_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            n_per_condition: 50,
            seed: 7,
            ..Default::default()
        };
        let rows = generate_dataset(&cfg, dir.path()).unwrap();
        assert_eq!(rows.len(), 100);
        let csvs = std::fs::read_dir(dir.path()).unwrap().filter(|e| {
            let n = e.as_ref().unwrap().file_name();
            n.to_str().unwrap().ends_with(".csv") && n != MANIFEST_FILE
        });
        assert_eq!(csvs.count(), 100);
        let text = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(read_manifest(&text[..]).unwrap(), rows);
        for r in &rows {
            assert!(r.pct_u50 > 0.0 && r.pct_u50 <= 100.0);
            assert!((r.pct_u50 - 100.0 * r.applied_voltage_kv / r.true_u50_kv).abs() < 1e-9);
        }
        let w = Waveform::load(dir.path().join(&rows[0].file)).unwrap();
        assert_eq!(w.applied_voltage(), rows[0].applied_voltage_kv);

        let again = tempfile::tempdir().unwrap();
        generate_dataset(&cfg, again.path()).unwrap();
        for r in &rows {
            assert_eq!(
                std::fs::read(dir.path().join(&r.file)).unwrap(),
                std::fs::read(again.path().join(&r.file)).unwrap()
            );
        }
        assert_eq!(
            text,
            std::fs::read(again.path().join(MANIFEST_FILE)).unwrap()
        );
    }

    #[test]
    fn fundamental_tracks_target_within_condition() {
        let cfg = DatasetConfig {
            n_per_condition: 60,
            seed: 3,
            ..Default::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let cat = build_catalog(&CatalogConfig::default());
        let j = cat.index_of("fund_amp").unwrap();
        for cond in [Condition::Wet, Condition::Dry] {
            let (amp, pct): (Vec<f64>, Vec<f64>) = corpus
                .iter()
                .filter(|s| s.scenario.condition == cond)
                .map(|s| {
                    let v = extract(&s.waveform, &cat, &DspConfig::default()).unwrap();
                    (v.values[j], s.labels.pct_u50.unwrap())
                })
                .unzip();
            let rho = spearman(&amp, &pct).unwrap().rho;
            assert!(rho > 0.5, "{cond}: rho = {rho}");
        }
    }
}
