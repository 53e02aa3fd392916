//! Exact greedy growth of a single Newton tree from gradient statistics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature_id: String,
        /// Column position within the model's selected features; resolved on load.
        #[serde(skip)]
        feature: usize,
        /// Samples with `x < threshold` go left.
        threshold: f64,
        /// Direction taken by a missing (NaN) value.
        default_left: bool,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        weight: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let v = row[*feature];
                    let go_left = if v.is_nan() {
                        *default_left
                    } else {
                        v < *threshold
                    };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn leaves(&self) -> Vec<f64> {
        match self {
            TreeNode::Leaf { weight } => vec![*weight],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Map stored feature ids back to column positions.
    pub(crate) fn resolve(&mut self, ids: &[String]) -> Result<(), String> {
        match self {
            TreeNode::Leaf { weight } if weight.is_finite() => Ok(()),
            TreeNode::Leaf { weight } => Err(format!("non-finite leaf weight {weight}")),
            TreeNode::Split {
                feature_id,
                feature,
                left,
                right,
                ..
            } => {
                *feature = ids
                    .iter()
                    .position(|id| id == feature_id)
                    .ok_or_else(|| format!("split on unknown feature `{feature_id}`"))?;
                left.resolve(ids)?;
                right.resolve(ids)
            }
        }
    }
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

/// Optimal (unshrunk) leaf weight `−soft(G, α) / (H + λ)`.
pub fn leaf_weight(g_sum: f64, h_sum: f64, lambda: f64, alpha: f64) -> f64 {
    let denom = h_sum + lambda;
    if denom <= 0.0 {
        return 0.0;
    }
    -soft_threshold(g_sum, alpha) / denom
}

fn structure_score(g: f64, h: f64, lambda: f64, alpha: f64) -> f64 {
    let denom = h + lambda;
    if denom <= 0.0 {
        return 0.0;
    }
    let g = soft_threshold(g, alpha);
    g * g / denom
}

/// Loss reduction of splitting a node into (L, R), net of the leaf penalty.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64, alpha: f64) -> f64 {
    0.5 * (structure_score(gl, hl, lambda, alpha) + structure_score(gr, hr, lambda, alpha)
        - structure_score(gl + gr, hl + hr, lambda, alpha))
        - gamma
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub min_child_hessian: f64,
}

pub(crate) struct Grower<'a> {
    /// Column-major feature values.
    pub columns: &'a [Vec<f64>],
    pub ids: &'a [String],
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub params: GrowParams,
}

struct BestSplit {
    gain: f64,
    slot: usize,
    threshold: f64,
    h_left: f64,
    h_right: f64,
}

impl Grower<'_> {
    /// `sorted[s]` lists the node's rows ordered by candidate feature
    /// `features[s]`; every list holds the same row set.
    pub fn grow(&self, features: &[usize], sorted: Vec<Vec<usize>>, depth: usize) -> TreeNode {
        let rows = &sorted[0];
        // sum in row order so a lone leaf reproduces the plain mean bit for bit
        let mut in_order = rows.clone();
        in_order.sort_unstable();
        let g: f64 = in_order.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = in_order.iter().map(|&i| self.hess[i]).sum();
        let p = &self.params;
        let leaf = || TreeNode::Leaf {
            weight: p.learning_rate * leaf_weight(g, h, p.lambda, p.alpha),
        };

        if depth >= p.max_depth || rows.len() < 2 {
            return leaf();
        }
        let Some(best) = self.best_split(features, &sorted, g, h) else {
            return leaf();
        };

        let column = &self.columns[features[best.slot]];
        let (left_lists, right_lists): (Vec<Vec<usize>>, Vec<Vec<usize>>) = sorted
            .into_iter()
            .map(|list| list.into_iter().partition(|&i| column[i] < best.threshold))
            .unzip();
        TreeNode::Split {
            feature_id: self.ids[features[best.slot]].clone(),
            feature: features[best.slot],
            threshold: best.threshold,
            default_left: best.h_left >= best.h_right,
            left: Box::new(self.grow(features, left_lists, depth + 1)),
            right: Box::new(self.grow(features, right_lists, depth + 1)),
        }
    }

    fn best_split(
        &self,
        features: &[usize],
        sorted: &[Vec<usize>],
        g: f64,
        h: f64,
    ) -> Option<BestSplit> {
        let p = &self.params;
        let mut best: Option<BestSplit> = None;
        for (slot, list) in sorted.iter().enumerate() {
            let column = &self.columns[features[slot]];
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..list.len() - 1 {
                let i = list[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let (lo, hi) = (column[i], column[list[w + 1]]);
                if lo == hi {
                    continue;
                }
                let hr = h - hl;
                if hl < p.min_child_hessian || hr < p.min_child_hessian {
                    continue;
                }
                let gain = split_gain(gl, hl, g - gl, hr, p.lambda, p.gamma, p.alpha);
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold <= lo {
                        threshold = hi;
                    }
                    best = Some(BestSplit {
                        gain,
                        slot,
                        threshold,
                        h_left: hl,
                        h_right: hr,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_weight_arithmetic() {
        assert_eq!(leaf_weight(-10.0, 5.0, 0.0, 0.0), 2.0);
        assert_eq!(leaf_weight(-10.0, 4.0, 1.0, 0.0), 2.0);
        assert_eq!(leaf_weight(-10.0, 5.0, 0.0, 4.0), 1.2);
        assert_eq!(leaf_weight(3.0, 5.0, 0.0, 4.0), 0.0);
        assert_eq!(leaf_weight(1.0, 0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn gain_arithmetic() {
        // 0.5 * (4/2 + 4/2 - 0/4) - 0.5
        assert_eq!(split_gain(-2.0, 2.0, 2.0, 2.0, 0.0, 0.5, 0.0), 1.5);
        assert!(split_gain(1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0).abs() < 1e-15);
    }

    #[test]
    fn hand_built_tree_walk() {
        let tree = TreeNode::Split {
            feature_id: "x1".into(),
            feature: 0,
            threshold: 0.5,
            default_left: true,
            left: Box::new(TreeNode::Leaf { weight: -1.0 }),
            right: Box::new(TreeNode::Leaf { weight: 1.0 }),
        };
        assert_eq!(tree.predict(&[0.2]), -1.0);
        assert_eq!(tree.predict(&[0.9]), 1.0);
        assert_eq!(tree.predict(&[0.5]), 1.0);
        assert_eq!(tree.predict(&[f64::NAN]), -1.0);
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn grows_the_obvious_split() {
        let columns = vec![vec![0.0, 1.0, 2.0, 3.0]];
        let ids = vec!["x".to_string()];
        // squared loss at prediction 0 with y = [0, 0, 10, 10]
        let grad = [0.0, 0.0, -10.0, -10.0];
        let hess = [1.0; 4];
        let grower = Grower {
            columns: &columns,
            ids: &ids,
            grad: &grad,
            hess: &hess,
            params: GrowParams {
                max_depth: 3,
                learning_rate: 1.0,
                lambda: 0.0,
                alpha: 0.0,
                gamma: 0.0,
                min_child_hessian: 0.0,
            },
        };
        let tree = grower.grow(&[0], vec![vec![0, 1, 2, 3]], 0);
        match &tree {
            TreeNode::Split { threshold, .. } => assert_eq!(*threshold, 1.5),
            leaf => panic!("expected a split, got {leaf:?}"),
        }
        assert_eq!(tree.leaves(), vec![0.0, 10.0]);
    }
}
