use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Binary cross-entropy on a log-odds raw score, labels in {0, 1}.
    Logistic,
    /// `½(ŷ − y)²`.
    Squared,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" | "binary:logistic" => Ok(Objective::Logistic),
            "squared" | "reg:squarederror" => Ok(Objective::Squared),
            other => Err(invalid(format!("unknown objective `{other}`"))),
        }
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

impl Objective {
    /// Loss of one sample at raw score `s`.
    pub fn loss(self, y: f64, s: f64) -> f64 {
        match self {
            Objective::Squared => 0.5 * (s - y) * (s - y),
            // log(1 + e^s) - y s, stable for large |s|
            Objective::Logistic => s.max(0.0) + (-s.abs()).exp().ln_1p() - y * s,
        }
    }

    /// First and second derivative of [`Objective::loss`] in the raw score.
    pub fn grad_hess(self, y: f64, s: f64) -> (f64, f64) {
        match self {
            Objective::Squared => (s - y, 1.0),
            Objective::Logistic => {
                let p = sigmoid(s);
                (p - y, p * (1.0 - p))
            }
        }
    }

    /// Raw score to prediction space.
    pub fn transform(self, s: f64) -> f64 {
        match self {
            Objective::Squared => s,
            Objective::Logistic => sigmoid(s),
        }
    }

    /// Mean of `y` for squared loss, log-odds of the positive rate for logistic.
    pub fn base_score(self, y: &[f64]) -> Result<f64> {
        if y.is_empty() {
            return Err(invalid("empty target"));
        }
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        match self {
            Objective::Squared => Ok(mean),
            Objective::Logistic => {
                self.check_labels(y)?;
                Ok((mean / (1.0 - mean)).ln())
            }
        }
    }

    pub(crate) fn check_labels(self, y: &[f64]) -> Result<()> {
        if self != Objective::Logistic {
            return Ok(());
        }
        if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(invalid(format!(
                "logistic labels must be 0 or 1, got {bad}"
            )));
        }
        let positives = y.iter().filter(|&&v| v == 1.0).count();
        if positives == 0 || positives == y.len() {
            return Err(Error::DegenerateTarget(
                "logistic target contains a single class".into(),
            ));
        }
        Ok(())
    }
}

/// Per-sample gradients and hessians at the current raw predictions.
pub fn gradients(objective: Objective, y: &[f64], raw: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if y.len() != raw.len() {
        return Err(invalid(format!(
            "{} targets but {} predictions",
            y.len(),
            raw.len()
        )));
    }
    Ok(y.iter()
        .zip(raw)
        .map(|(&t, &s)| objective.grad_hess(t, s))
        .unzip())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(Objective::Squared.grad_hess(3.0, 5.0), (2.0, 1.0));
        assert_eq!(Objective::Logistic.grad_hess(1.0, 0.0), (-0.5, 0.25));
        assert!("hinge".parse::<Objective>().is_err());
        assert!(gradients(Objective::Squared, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-4;
        for obj in [Objective::Logistic, Objective::Squared] {
            for y in [0.0, 1.0] {
                for s in [-2.0, 0.0, 2.0] {
                    let (g, hs) = obj.grad_hess(y, s);
                    let fd_g = (obj.loss(y, s + h) - obj.loss(y, s - h)) / (2.0 * h);
                    let fd_h =
                        (obj.loss(y, s + h) - 2.0 * obj.loss(y, s) + obj.loss(y, s - h)) / (h * h);
                    assert!(
                        (g - fd_g).abs() < 1e-6,
                        "{obj:?} y={y} s={s}: {g} vs {fd_g}"
                    );
                    assert!(
                        (hs - fd_h).abs() < 1e-5 * hs.abs().max(1.0),
                        "{obj:?}: {hs} vs {fd_h}"
                    );
                }
            }
        }
    }

    #[test]
    fn logistic_loss_is_stable() {
        assert!(Objective::Logistic.loss(1.0, 800.0).abs() < 1e-12);
        assert!((Objective::Logistic.loss(0.0, 800.0) - 800.0).abs() < 1e-9);
        assert!(Objective::Logistic.loss(1.0, -800.0).is_finite());
    }

    #[test]
    fn base_scores() {
        assert_eq!(
            Objective::Squared.base_score(&[1.0, 2.0, 6.0]).unwrap(),
            3.0
        );
        let b = Objective::Logistic
            .base_score(&[1.0, 0.0, 0.0, 0.0])
            .unwrap();
        assert!((b - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!(matches!(
            Objective::Logistic.base_score(&[1.0, 1.0]),
            Err(Error::DegenerateTarget(_))
        ));
        assert!(Objective::Logistic.base_score(&[0.5, 1.0]).is_err());
    }
}
