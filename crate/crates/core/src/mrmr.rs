//! Maximum-relevance minimum-redundancy feature ranking.
//!
//! Relevance is the plug-in mutual information between an equal-frequency
//! discretization of the feature and the target; redundancy is the mean
//! absolute Spearman correlation against the features already chosen. Both
//! are rank based, so the selection is invariant to monotone rescaling of any
//! column.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::FeatureMatrix;
use crate::stats::average_ranks;

/// Selection target: class labels are used as-is, continuous values are
/// discretized like the features.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Categorical(Vec<usize>),
    Continuous(Vec<f64>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Categorical(v) => v.len(),
            Target::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> TargetKind {
        match self {
            Target::Categorical(_) => TargetKind::Categorical,
            Target::Continuous(_) => TargetKind::Continuous,
        }
    }

    fn codes(&self, bins: usize) -> Vec<usize> {
        match self {
            Target::Categorical(labels) => dense_codes(labels),
            Target::Continuous(values) => equal_frequency_bins(values, bins),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MrmrConfig {
    pub bins: usize,
    /// Lower bound on the redundancy denominator.
    pub redundancy_floor: f64,
}

impl Default for MrmrConfig {
    fn default() -> Self {
        MrmrConfig {
            bins: 10,
            redundancy_floor: 0.01,
        }
    }
}

/// Equal-frequency bin index per sample, computed from mid-ranks so that tied
/// values always share a bin.
pub fn equal_frequency_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len() as f64;
    average_ranks(x)
        .into_iter()
        .map(|r| (((r - 1.0) * bins as f64 / n).floor() as usize).min(bins - 1))
        .collect()
}

fn dense_codes(labels: &[usize]) -> Vec<usize> {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label present"))
        .collect()
}

/// Plug-in mutual information (nats) of two discrete code sequences.
pub fn discrete_mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let na = a.iter().max().map_or(0, |m| m + 1);
    let nb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; na * nb];
    let mut ca = vec![0usize; na];
    let mut cb = vec![0usize; nb];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * nb + j] += 1;
        ca[i] += 1;
        cb[j] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for i in 0..na {
        for j in 0..nb {
            let c = joint[i * nb + j];
            if c > 0 {
                let c = c as f64;
                mi += c / nf * (c * nf / (ca[i] as f64 * cb[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

fn check_lengths(nx: usize, ny: usize, bins: usize) -> Result<()> {
    if nx != ny {
        return Err(invalid(format!("length mismatch: {nx} vs {ny}")));
    }
    if nx < 4 {
        return Err(invalid(format!(
            "mutual information needs at least 4 samples, got {nx}"
        )));
    }
    if bins < 2 {
        return Err(invalid(format!("need at least 2 bins, got {bins}")));
    }
    Ok(())
}

/// MI between a continuous feature and a target.
pub fn mutual_information(x: &[f64], y: &Target, bins: usize) -> Result<f64> {
    check_lengths(x.len(), y.len(), bins)?;
    Ok(discrete_mutual_information(
        &equal_frequency_bins(x, bins),
        &y.codes(bins),
    ))
}

/// Spearman rank correlation; `degenerate` marks a side with no rank variance,
/// in which case `rho` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    pub degenerate: bool,
}

fn pearson(a: &[f64], b: &[f64]) -> Spearman {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Spearman {
            rho: 0.0,
            degenerate: true,
        };
    }
    Spearman {
        rho: (cov / (va * vb).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman> {
    if x.len() != y.len() {
        return Err(invalid(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(invalid("spearman needs at least 2 samples"));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub target_kind: TargetKind,
    /// Feature ids in the order they were selected.
    pub ranked_ids: Vec<String>,
    /// Score of the chosen feature at each iteration.
    pub scores: Vec<f64>,
    /// MI with the target for every input feature, in input order.
    pub relevance: Vec<(String, f64)>,
    pub config: MrmrConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub id: String,
    pub score: f64,
    pub relevance: f64,
}

/// JSON ranking report consumed by the training command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub target_kind: TargetKind,
    pub ranked: Vec<RankedFeature>,
    pub config: MrmrConfig,
}

impl SelectionResult {
    pub fn report(&self) -> RankingReport {
        let relevance_of = |id: &str| {
            self.relevance
                .iter()
                .find(|(r, _)| r == id)
                .map_or(0.0, |(_, v)| *v)
        };
        RankingReport {
            target_kind: self.target_kind,
            ranked: self
                .ranked_ids
                .iter()
                .zip(&self.scores)
                .map(|(id, &score)| RankedFeature {
                    id: id.clone(),
                    score,
                    relevance: relevance_of(id),
                })
                .collect(),
            config: self.config,
        }
    }

    pub fn top(&self, k: usize) -> Vec<String> {
        self.ranked_ids.iter().take(k).cloned().collect()
    }
}

impl RankingReport {
    pub fn top(&self, k: usize) -> Vec<String> {
        self.ranked.iter().take(k).map(|r| r.id.clone()).collect()
    }
}

/// Greedy MRMR ranking of the first `k` features.
pub fn mrmr_rank(
    features: &FeatureMatrix,
    target: &Target,
    k: usize,
    config: &MrmrConfig,
) -> Result<SelectionResult> {
    let n_features = features.n_features();
    if k > n_features {
        return Err(invalid(format!(
            "cannot select {k} of {n_features} features"
        )));
    }
    if !(config.redundancy_floor > 0.0) {
        return Err(invalid("redundancy_floor must be positive"));
    }
    check_lengths(features.n_rows(), target.len(), config.bins)?;

    let target_codes = target.codes(config.bins);
    let columns = features.columns();
    let relevance: Vec<f64> = columns
        .par_iter()
        .map(|c| discrete_mutual_information(&equal_frequency_bins(c, config.bins), &target_codes))
        .collect();
    let ranks: Vec<Vec<f64>> = columns.par_iter().map(|c| average_ranks(c)).collect();

    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);
    let mut chosen = vec![false; n_features];
    let mut redundancy_sum = vec![0.0; n_features];

    for iteration in 0..k {
        if let Some(&last) = selected.last() {
            let updates: Vec<(usize, f64)> = (0..n_features)
                .into_par_iter()
                .filter(|&f| !chosen[f])
                .map(|f| (f, pearson(&ranks[f], &ranks[last]).rho.abs()))
                .collect();
            for (f, r) in updates {
                redundancy_sum[f] += r;
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for f in (0..n_features).filter(|&f| !chosen[f]) {
            let score = if iteration == 0 {
                relevance[f]
            } else {
                relevance[f] / (redundancy_sum[f] / iteration as f64).max(config.redundancy_floor)
            };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((f, score));
            }
        }
        let (f, score) = best.expect("at least one candidate remains");
        chosen[f] = true;
        selected.push(f);
        scores.push(score);
    }

    Ok(SelectionResult {
        target_kind: target.kind(),
        ranked_ids: selected
            .iter()
            .map(|&f| features.ids()[f].clone())
            .collect(),
        scores,
        relevance: features.ids().iter().cloned().zip(relevance).collect(),
        config: *config,
    })
}
