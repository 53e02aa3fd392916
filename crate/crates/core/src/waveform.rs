//! The leakage-current waveform and its CSV file format.
//!
//! ```text
//! # sample_rate=10000 mains_freq=50 applied_voltage=63.5
//! 0.0213
//! 0.0427
//! ...
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniformly sampled leakage current (mA) with its acquisition metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    /// Samples per second (Hz).
    sample_rate: f64,
    /// Mains (fundamental) frequency (Hz).
    mains_freq: f64,
    /// Phase-to-ground voltage at measurement time (kV).
    applied_voltage: f64,
}

pub const DEFAULT_MAINS_FREQ: f64 = 50.0;

impl Waveform {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: f64,
        mains_freq: f64,
        applied_voltage: f64,
    ) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid(format!(
                "sample_rate must be positive, got {sample_rate}"
            )));
        }
        if !(mains_freq.is_finite() && mains_freq > 0.0) {
            return Err(invalid(format!(
                "mains_freq must be positive, got {mains_freq}"
            )));
        }
        if sample_rate < 20.0 * mains_freq {
            return Err(invalid(format!(
                "sample_rate {sample_rate} Hz cannot resolve 10 harmonics of {mains_freq} Hz"
            )));
        }
        if !(applied_voltage.is_finite() && applied_voltage > 0.0) {
            return Err(invalid(format!(
                "applied_voltage must be positive, got {applied_voltage}"
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(invalid("waveform contains non-finite samples"));
        }
        let w = Waveform {
            samples,
            sample_rate,
            mains_freq,
            applied_voltage,
        };
        if w.full_periods() == 0 {
            return Err(Error::InsufficientData(format!(
                "{} samples do not cover one {} Hz period at {} Hz",
                w.samples.len(),
                mains_freq,
                sample_rate
            )));
        }
        Ok(w)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn mains_freq(&self) -> f64 {
        self.mains_freq
    }

    pub fn applied_voltage(&self) -> f64 {
        self.applied_voltage
    }

    /// Samples per mains period (not necessarily an integer).
    pub fn samples_per_period(&self) -> f64 {
        self.sample_rate / self.mains_freq
    }

    /// Number of complete mains periods contained in the record.
    pub fn full_periods(&self) -> usize {
        // small slack so that e.g. 2000 samples at 10 kHz count as exactly 10 periods
        (self.samples.len() as f64 / self.samples_per_period() + 1e-9).floor() as usize
    }

    /// Same metadata, different samples. Lengths need not match.
    pub fn with_samples(&self, samples: Vec<f64>) -> Waveform {
        Waveform {
            samples,
            ..self.clone()
        }
    }

    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 / self.sample_rate
    }

    pub fn read_csv(reader: impl BufRead) -> Result<Waveform> {
        let mut lines = reader.lines();
        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(Error::Parse("empty waveform file".into())),
            }
        };
        let header = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("missing `#` metadata header line".into()))?;
        let (mut fs, mut f0, mut volts) = (None, None, None);
        for token in header.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("malformed header token `{token}`")))?;
            let value: f64 = value.parse().map_err(|_| {
                Error::Parse(format!(
                    "header value `{value}` for `{key}` is not a number"
                ))
            })?;
            match key {
                "sample_rate" => fs = Some(value),
                "mains_freq" => f0 = Some(value),
                "applied_voltage" => volts = Some(value),
                _ => {}
            }
        }
        let missing = |k: &str| Error::Parse(format!("header is missing `{k}`"));
        let fs = fs.ok_or_else(|| missing("sample_rate"))?;
        let f0 = f0.ok_or_else(|| missing("mains_freq"))?;
        let volts = volts.ok_or_else(|| missing("applied_voltage"))?;

        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: `{t}` is not a number", lineno + 2)))?;
            samples.push(v);
        }
        Waveform::new(samples, fs, f0, volts)
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(
            out,
            "# sample_rate={} mains_freq={} applied_voltage={}",
            self.sample_rate, self.mains_freq, self.applied_voltage
        )?;
        for s in &self.samples {
            writeln!(out, "{s}")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Waveform> {
        let file = std::fs::File::open(path)?;
        Waveform::read_csv(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }
}
