//! Flashover-test statistics, `%U50` conversion and the three-state verdict.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{insufficient, invalid, Error, Result};
use crate::Condition;

/// Default safety factor for lines shorter than 100 km.
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.6;
/// Fleet-average flashover-test scatter, used when a string has no lab tests.
pub const DEFAULT_SIGMA_KV: f64 = 14.0;

/// Which σ enters `U50 = Ū'av (1 − 1.3 σ)`.
///
/// `Relative` uses the dimensionless `σ' = 1.64 σ / Ūav`. `AbsoluteAsWritten`
/// plugs in σ in kV, which is only meaningful for reproducing the formula
/// literally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    #[default]
    Relative,
    AbsoluteAsWritten,
}

impl FromStr for SigmaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(SigmaMode::Relative),
            "absolute_as_written" | "absolute" => Ok(SigmaMode::AbsoluteAsWritten),
            _ => Err(invalid(format!("unknown sigma mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlashoverTestResult {
    pub flashover_voltages: Vec<f64>,
    pub u_avg: f64,
    pub sigma: f64,
    pub u_avg_low: f64,
    pub sigma_rel: f64,
    pub sigma_used: f64,
    pub u50: f64,
    pub eq11_sigma: SigmaMode,
}

/// Derived quantities from the mean and sample standard deviation of a
/// flashover series: `(u_avg_low, sigma_rel, sigma_used, u50)`.
pub fn flashover_corrections(
    u_avg: f64,
    sigma: f64,
    mode: SigmaMode,
) -> Result<(f64, f64, f64, f64)> {
    if !(u_avg > 0.0) || !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!(
            "need u_avg > 0 and sigma >= 0, got {u_avg}, {sigma}"
        )));
    }
    let u_avg_low = u_avg - 0.572 * sigma;
    let sigma_rel = 1.64 * sigma / u_avg;
    let sigma_used = match mode {
        SigmaMode::Relative => sigma_rel,
        SigmaMode::AbsoluteAsWritten => sigma,
    };
    Ok((
        u_avg_low,
        sigma_rel,
        sigma_used,
        u_avg_low * (1.0 - 1.3 * sigma_used),
    ))
}

pub fn flashover_statistics(u_f: &[f64], mode: SigmaMode) -> Result<FlashoverTestResult> {
    if u_f.len() < 2 {
        return Err(insufficient(format!(
            "need at least 2 flashover voltages, got {}",
            u_f.len()
        )));
    }
    if let Some(v) = u_f.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(invalid(format!("flashover voltage {v} is not positive")));
    }
    let n = u_f.len() as f64;
    let u_avg = u_f.iter().sum::<f64>() / n;
    let sigma = (u_f.iter().map(|v| (v - u_avg).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let (u_avg_low, sigma_rel, sigma_used, u50) = flashover_corrections(u_avg, sigma, mode)?;
    Ok(FlashoverTestResult {
        flashover_voltages: u_f.to_vec(),
        u_avg,
        sigma,
        u_avg_low,
        sigma_rel,
        sigma_used,
        u50,
        eq11_sigma: mode,
    })
}

/// Estimated critical flashover voltage from the applied voltage's share of it.
pub fn u50_from_percent(u_ph: f64, pct_u50: f64) -> Result<f64> {
    if !(pct_u50 > 0.0) || !(u_ph > 0.0) {
        return Err(invalid(format!(
            "need u_ph > 0 and pct_u50 > 0, got {u_ph}, {pct_u50}"
        )));
    }
    Ok(100.0 * u_ph / pct_u50)
}

/// `%U50` of an applied voltage; inverse of [`u50_from_percent`].
pub fn percent_of_u50(u_ph: f64, u50: f64) -> Result<f64> {
    if !(u50 > 0.0) || !(u_ph > 0.0) {
        return Err(invalid(format!(
            "need u_ph > 0 and u50 > 0, got {u_ph}, {u50}"
        )));
    }
    Ok(100.0 * u_ph / u50)
}

pub fn sigma_m_from_percent(pct_sigma_m: f64, u50_hat: f64) -> Result<f64> {
    if !(pct_sigma_m >= 0.0) || !pct_sigma_m.is_finite() {
        return Err(invalid(format!(
            "model error {pct_sigma_m}% must be non-negative"
        )));
    }
    if !(u50_hat > 0.0) {
        return Err(invalid(format!("u50_hat {u50_hat} must be positive")));
    }
    Ok(pct_sigma_m * u50_hat / 100.0)
}

/// Ordered by severity, so `max` picks the worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum State {
    Operational,
    Hazardous,
    ExtremelyHazardous,
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            State::Operational => "Operational",
            State::Hazardous => "Hazardous",
            State::ExtremelyHazardous => "ExtremelyHazardous",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// `Û50 − 3 σt`
    pub lower_3sigma: f64,
    /// `Û50 − 1.28 σt`
    pub lower_1p28sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAssessment {
    pub state: State,
    pub u50_hat: f64,
    pub sigma: f64,
    pub sigma_m_hat: f64,
    pub sigma_total: f64,
    pub u_ph: f64,
    pub r: f64,
    pub thresholds: Thresholds,
}

fn state_for(withstand: f64, t: &Thresholds) -> State {
    if withstand < t.lower_3sigma {
        State::Operational
    } else if withstand < t.lower_1p28sigma {
        State::Hazardous
    } else {
        State::ExtremelyHazardous
    }
}

pub fn classify_state(
    u50_hat: f64,
    sigma: f64,
    sigma_m_hat: f64,
    u_ph: f64,
    r: f64,
) -> Result<StateAssessment> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    let non_negative = |v: f64| v >= 0.0 && v.is_finite();
    if !positive(u50_hat) || !positive(u_ph) || !positive(r) {
        return Err(invalid(format!(
            "voltages and r must be positive: u50={u50_hat}, u_ph={u_ph}, r={r}"
        )));
    }
    if !non_negative(sigma) || !non_negative(sigma_m_hat) {
        return Err(invalid(format!(
            "sigmas must be non-negative: {sigma}, {sigma_m_hat}"
        )));
    }
    let sigma_total = sigma + sigma_m_hat;
    let thresholds = Thresholds {
        lower_3sigma: u50_hat - 3.0 * sigma_total,
        lower_1p28sigma: u50_hat - 1.28 * sigma_total,
    };
    Ok(StateAssessment {
        state: state_for(r * u_ph, &thresholds),
        u50_hat,
        sigma,
        sigma_m_hat,
        sigma_total,
        u_ph,
        r,
        thresholds,
    })
}

impl StateAssessment {
    /// Recompute the verdict from the stored inputs.
    pub fn rederive(&self) -> Result<StateAssessment> {
        classify_state(
            self.u50_hat,
            self.sigma,
            self.sigma_m_hat,
            self.u_ph,
            self.r,
        )
    }

    pub fn is_consistent(&self) -> bool {
        self.rederive().is_ok_and(|a| &a == self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedAssessment {
    pub timestamp: DateTime<Utc>,
    pub assessment: StateAssessment,
}

/// Worst state within `window_days` of `now`, inclusive; ties go to the most
/// recent record (and, at equal timestamps, to the later one in the slice).
pub fn worst_case_at(
    records: &[TimedAssessment],
    now: DateTime<Utc>,
    window_days: f64,
) -> Result<&TimedAssessment> {
    if !(window_days > 0.0) {
        return Err(invalid(format!(
            "window {window_days} days must be positive"
        )));
    }
    let window_ms = window_days * 86_400_000.0;
    records
        .iter()
        .filter(|t| {
            let age = (now - t.timestamp).num_milliseconds() as f64;
            age >= 0.0 && age <= window_ms
        })
        .max_by(|a, b| {
            a.assessment
                .state
                .cmp(&b.assessment.state)
                .then(a.timestamp.cmp(&b.timestamp))
        })
        .ok_or_else(|| insufficient("no assessments inside the window"))
}

/// [`worst_case_at`] anchored at the latest record's timestamp.
pub fn worst_case_over_window(
    records: &[TimedAssessment],
    window_days: f64,
) -> Result<&TimedAssessment> {
    let now = records
        .iter()
        .map(|t| t.timestamp)
        .max()
        .ok_or_else(|| insufficient("no assessments"))?;
    worst_case_at(records, now, window_days)
}

/// Where an assessment's inputs came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub condition: Condition,
    pub wet_probability: f64,
    pub catalog_version: String,
    pub classifier_model: String,
    pub regressor_model: String,
}

/// One line of the assessment log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub timestamp: Option<DateTime<Utc>>,
    pub string_id: String,
    pub u_ph_kv: f64,
    pub r: f64,
    pub pct_u50: f64,
    pub pct_sigma_m: f64,
    pub u50_hat_kv: f64,
    pub sigma_kv: f64,
    pub sigma_m_kv: f64,
    pub sigma_t_kv: f64,
    pub state: State,
    pub thresholds: Thresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl AssessmentRecord {
    /// Run the whole conversion chain from a predicted `%U50` and the
    /// regressor's error in percent.
    pub fn compute(
        string_id: impl Into<String>,
        timestamp: Option<DateTime<Utc>>,
        pct_u50: f64,
        pct_sigma_m: f64,
        sigma_kv: f64,
        u_ph: f64,
        r: f64,
    ) -> Result<AssessmentRecord> {
        let u50_hat = u50_from_percent(u_ph, pct_u50)?;
        let sigma_m = sigma_m_from_percent(pct_sigma_m, u50_hat)?;
        let a = classify_state(u50_hat, sigma_kv, sigma_m, u_ph, r)?;
        Ok(AssessmentRecord {
            timestamp,
            string_id: string_id.into(),
            u_ph_kv: u_ph,
            r,
            pct_u50,
            pct_sigma_m,
            u50_hat_kv: a.u50_hat,
            sigma_kv: a.sigma,
            sigma_m_kv: a.sigma_m_hat,
            sigma_t_kv: a.sigma_total,
            state: a.state,
            thresholds: a.thresholds,
            provenance: None,
        })
    }

    pub fn assessment(&self) -> StateAssessment {
        StateAssessment {
            state: self.state,
            u50_hat: self.u50_hat_kv,
            sigma: self.sigma_kv,
            sigma_m_hat: self.sigma_m_kv,
            sigma_total: self.sigma_t_kv,
            u_ph: self.u_ph_kv,
            r: self.r,
            thresholds: self.thresholds,
        }
    }

    /// True when recomputing from `pct_u50`, `pct_sigma_m`, `sigma_kv`,
    /// `u_ph_kv` and `r` reproduces every stored derived field.
    pub fn revalidate(&self) -> bool {
        AssessmentRecord::compute(
            self.string_id.clone(),
            self.timestamp,
            self.pct_u50,
            self.pct_sigma_m,
            self.sigma_kv,
            self.u_ph_kv,
            self.r,
        )
        .is_ok_and(|mut r| {
            r.provenance = self.provenance.clone();
            &r == self
        })
    }

    pub fn timed(&self) -> Option<TimedAssessment> {
        self.timestamp.map(|timestamp| TimedAssessment {
            timestamp,
            assessment: self.assessment(),
        })
    }
}

pub fn write_jsonl(mut out: impl Write, records: &[AssessmentRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<AssessmentRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

/// Append one record to a JSON-lines log, creating it if needed.
pub fn append_jsonl(path: impl AsRef<Path>, record: &AssessmentRecord) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    write_jsonl(&mut f, std::slice::from_ref(record))
}

/// Append-only in-memory history for one or more strings.
#[derive(Debug, Default)]
pub struct AssessmentStore {
    records: RwLock<Vec<TimedAssessment>>,
}

impl AssessmentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, record: TimedAssessment) {
        self.records
            .write()
            .expect("store lock poisoned")
            .push(record);
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<TimedAssessment> {
        self.records.read().expect("store lock poisoned").clone()
    }

    pub fn worst_case(&self, window_days: f64) -> Result<TimedAssessment> {
        let guard = self.records.read().expect("store lock poisoned");
        worst_case_over_window(&guard, window_days).cloned()
    }
}
