//! Signal conditioning for leakage-current waveforms: low-pass filters,
//! fundamental extraction by Fourier projection, residual, pulse detection
//! and the 1st..10th harmonic spectrum.
//!
//! All projections run over the largest whole number of mains periods that
//! fits the record, so a periodic signal is recovered exactly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{insufficient, invalid, Result};
use crate::stats;
use crate::waveform::Waveform;

pub const HARMONIC_COUNT: usize = 10;

/// Mains-frequency component of a waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fundamental {
    /// Peak amplitude (mA).
    pub amplitude: f64,
    /// Phase (rad) of `amplitude * sin(2π f t + phase)`.
    pub phase: f64,
    pub freq: f64,
    /// The sinusoid evaluated at every sample of the source.
    pub reconstructed: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// A maximal run of residual samples whose magnitude exceeds the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub start_index: usize,
    /// Inclusive.
    pub end_index: usize,
    /// Largest |residual| inside the run (mA).
    pub peak_amplitude: f64,
    pub polarity: Polarity,
}

/// Amplitudes of harmonics 1..=10 of the mains frequency (mA).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpectrum {
    pub amplitudes: [f64; HARMONIC_COUNT],
}

impl HarmonicSpectrum {
    /// Amplitude of the `k`-th harmonic, `k` in `1..=10`.
    pub fn harmonic(&self, k: usize) -> f64 {
        assert!(
            (1..=HARMONIC_COUNT).contains(&k),
            "harmonic order {k} out of range"
        );
        self.amplitudes[k - 1]
    }
}

/// How the pulse detection threshold is chosen for a residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PulseThreshold {
    /// `max(floor_ma, mad_multiplier * MAD(residual))`.
    Robust {
        floor_ma: f64,
        mad_multiplier: f64,
    },
    Fixed {
        ma: f64,
    },
}

impl Default for PulseThreshold {
    fn default() -> Self {
        PulseThreshold::Robust {
            floor_ma: 0.1,
            mad_multiplier: 3.0,
        }
    }
}

impl PulseThreshold {
    pub fn resolve(&self, residual: &[f64]) -> f64 {
        match *self {
            PulseThreshold::Robust {
                floor_ma,
                mad_multiplier,
            } => floor_ma.max(mad_multiplier * stats::median_abs_deviation(residual)),
            PulseThreshold::Fixed { ma } => ma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PulseThreshold::Robust {
                floor_ma,
                mad_multiplier,
            } => floor_ma > 0.0 && mad_multiplier >= 0.0,
            PulseThreshold::Fixed { ma } => ma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!(
                "pulse threshold {self:?} must be positive"
            )))
        }
    }
}

/// Filter and detection parameters for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub ma_window: usize,
    pub es_alpha: f64,
    pub pulse_threshold: PulseThreshold,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            ma_window: 5,
            es_alpha: 0.3,
            pulse_threshold: PulseThreshold::default(),
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ma_window == 0 {
            return Err(invalid("ma_window must be at least 1"));
        }
        if !(self.es_alpha > 0.0 && self.es_alpha <= 1.0) {
            return Err(invalid(format!(
                "es_alpha {} outside (0, 1]",
                self.es_alpha
            )));
        }
        self.pulse_threshold.validate()
    }
}

/// Centered moving average; the window is truncated at the edges rather than
/// zero-padded. Even windows extend one sample further to the right.
pub fn moving_average(w: &Waveform, window: usize) -> Result<Waveform> {
    let x = w.samples();
    if window == 0 || window > x.len() {
        return Err(invalid(format!(
            "window {window} must be in 1..={}",
            x.len()
        )));
    }
    let left = (window - 1) / 2;
    let right = window / 2;
    let out = (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(x.len() - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    Ok(w.with_samples(out))
}

/// First-order exponential smoothing seeded with the first sample.
pub fn exponential_smoothing(w: &Waveform, alpha: f64) -> Result<Waveform> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha {alpha} outside (0, 1]")));
    }
    let mut out = Vec::with_capacity(w.len());
    let mut prev = 0.0;
    for (i, &x) in w.samples().iter().enumerate() {
        prev = if i == 0 {
            x
        } else {
            alpha * x + (1.0 - alpha) * prev
        };
        out.push(prev);
    }
    Ok(w.with_samples(out))
}

/// Number of samples spanning the largest whole number of mains periods.
fn projection_len(w: &Waveform) -> Result<usize> {
    let periods = w.full_periods();
    if periods == 0 {
        return Err(insufficient("record shorter than one mains period"));
    }
    Ok(((periods as f64 * w.samples_per_period()).round() as usize).min(w.len()))
}

/// In-phase (sine) and quadrature (cosine) coefficients at `freq`.
fn project(x: &[f64], sample_rate: f64, freq: f64) -> (f64, f64) {
    let omega = 2.0 * PI * freq / sample_rate;
    let (mut s, mut c) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let (sin, cos) = (omega * i as f64).sin_cos();
        s += v * sin;
        c += v * cos;
    }
    let scale = 2.0 / x.len() as f64;
    (s * scale, c * scale)
}

pub fn extract_fundamental(w: &Waveform) -> Result<Fundamental> {
    let n = projection_len(w)?;
    let freq = w.mains_freq();
    let (a, b) = project(&w.samples()[..n], w.sample_rate(), freq);
    let amplitude = a.hypot(b);
    let phase = if amplitude == 0.0 { 0.0 } else { b.atan2(a) };
    let omega = 2.0 * PI * freq / w.sample_rate();
    let reconstructed = (0..w.len())
        .map(|i| amplitude * (omega * i as f64 + phase).sin())
        .collect();
    Ok(Fundamental {
        amplitude,
        phase,
        freq,
        reconstructed,
    })
}

pub fn residual(w: &Waveform, f: &Fundamental) -> Result<Waveform> {
    if w.len() != f.reconstructed.len() {
        return Err(invalid(format!(
            "waveform has {} samples but fundamental has {}",
            w.len(),
            f.reconstructed.len()
        )));
    }
    let out = w
        .samples()
        .iter()
        .zip(&f.reconstructed)
        .map(|(x, y)| x - y)
        .collect();
    Ok(w.with_samples(out))
}

pub fn detect_pulses(r: &Waveform, threshold: f64) -> Result<Vec<Pulse>> {
    if !(threshold > 0.0) {
        return Err(invalid(format!(
            "pulse threshold must be positive, got {threshold}"
        )));
    }
    let x = r.samples();
    let mut pulses = Vec::new();
    let mut i = 0;
    while i < x.len() {
        if x[i].abs() <= threshold {
            i += 1;
            continue;
        }
        let start = i;
        let mut peak = i;
        while i < x.len() && x[i].abs() > threshold {
            if x[i].abs() > x[peak].abs() {
                peak = i;
            }
            i += 1;
        }
        pulses.push(Pulse {
            start_index: start,
            end_index: i - 1,
            peak_amplitude: x[peak].abs(),
            polarity: if x[peak] >= 0.0 {
                Polarity::Positive
            } else {
                Polarity::Negative
            },
        });
    }
    Ok(pulses)
}

pub fn harmonic_spectrum(w: &Waveform) -> Result<HarmonicSpectrum> {
    if HARMONIC_COUNT as f64 * w.mains_freq() >= w.sample_rate() / 2.0 {
        return Err(invalid(format!(
            "harmonic {} of {} Hz is not below Nyquist at {} Hz",
            HARMONIC_COUNT,
            w.mains_freq(),
            w.sample_rate()
        )));
    }
    let n = projection_len(w)?;
    let x = &w.samples()[..n];
    let mut amplitudes = [0.0; HARMONIC_COUNT];
    for (k, amp) in amplitudes.iter_mut().enumerate() {
        let (a, b) = project(x, w.sample_rate(), (k + 1) as f64 * w.mains_freq());
        *amp = a.hypot(b);
    }
    Ok(HarmonicSpectrum { amplitudes })
}
