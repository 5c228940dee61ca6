use serde::{Deserialize, Serialize};

use crate::nn::softmax;

pub const LAMBDA: f64 = 1.0;
pub const MIN_CHILD_WEIGHT: f64 = 1.0;
const MIN_GAIN: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
}

/// Regression tree; node 0 is the root. Rows with `x[feature] <= threshold`
/// go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Multiclass softmax boosting: one tree per class per round, raw scores
/// start at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// `rounds[r][k]` is the tree for class `k` in round `r`.
    pub rounds: Vec<Vec<Tree>>,
}

impl GbdtModel {
    pub fn raw(&self, x: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.n_classes];
        for round in &self.rounds {
            for (fk, t) in f.iter_mut().zip(round) {
                *fk += t.predict(x);
            }
        }
        f
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.raw(x))
    }

    /// Total split gain per feature over all trees.
    pub fn gains(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_features];
        for t in self.rounds.iter().flatten() {
            for n in &t.nodes {
                if let TreeNode::Split { feature, gain, .. } = n {
                    g[*feature] += gain;
                }
            }
        }
        g
    }

    pub fn truncated(&self, rounds: usize) -> GbdtModel {
        GbdtModel {
            rounds: self.rounds[..rounds.min(self.rounds.len())].to_vec(),
            ..self.clone()
        }
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    g: &'a [f64],
    h: &'a [f64],
    max_depth: usize,
    lr: f64,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    /// `sorted[f]` holds this node's rows ordered by feature `f`.
    fn grow(&mut self, sorted: Vec<Vec<u32>>, rows: &[u32], depth: usize) -> usize {
        let id = self.nodes.len();
        let (gs, hs) = rows
            .iter()
            .fold((0.0, 0.0), |(a, b), &i| (a + self.g[i as usize], b + self.h[i as usize]));
        self.nodes.push(TreeNode::Leaf {
            value: -gs / (hs + LAMBDA) * self.lr,
        });
        if depth >= self.max_depth || rows.len() < 2 {
            return id;
        }
        let parent = gs * gs / (hs + LAMBDA);
        let mut best: Option<(f64, usize, f64)> = None;
        for (f, order) in sorted.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in order.windows(2) {
                let (i, j) = (w[0] as usize, w[1] as usize);
                gl += self.g[i];
                hl += self.h[i];
                let (a, b) = (self.x[i][f], self.x[j][f]);
                if b <= a {
                    continue;
                }
                let (gr, hr) = (gs - gl, hs - hl);
                if hl < MIN_CHILD_WEIGHT || hr < MIN_CHILD_WEIGHT {
                    continue;
                }
                let gain = 0.5 * (gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA) - parent);
                if gain > MIN_GAIN && best.is_none_or(|(bg, _, _)| gain > bg) {
                    let mid = a + (b - a) / 2.0;
                    best = Some((gain, f, if mid < b { mid } else { a }));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return id;
        };
        let goes_left = |i: u32| self.x[i as usize][feature] <= threshold;
        let (mut ls, mut rs) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for order in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = order.into_iter().partition(|&i| goes_left(i));
            ls.push(l);
            rs.push(r);
        }
        let (lrows, rrows): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&i| goes_left(i));
        let left = self.grow(ls, &lrows, depth + 1);
        let right = self.grow(rs, &rrows, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            gain,
            left,
            right,
        };
        id
    }
}

pub fn fit_tree(x: &[Vec<f64>], g: &[f64], h: &[f64], presorted: &[Vec<u32>], max_depth: usize, lr: f64) -> Tree {
    let mut b = Builder {
        x,
        g,
        h,
        max_depth,
        lr,
        nodes: Vec::new(),
    };
    let rows: Vec<u32> = (0..x.len() as u32).collect();
    b.grow(presorted.to_vec(), &rows, 0);
    Tree { nodes: b.nodes }
}

pub fn presort(x: &[Vec<f64>], n_features: usize) -> Vec<Vec<u32>> {
    (0..n_features)
        .map(|f| {
            let mut idx: Vec<u32> = (0..x.len() as u32).collect();
            idx.sort_by(|&a, &b| x[a as usize][f].total_cmp(&x[b as usize][f]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

/// Trains `rounds` boosting rounds. `on_round(r, model_so_far)` is called
/// after every round, which lets callers score prefixes without refitting.
pub fn fit_gbdt_with(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    rounds: usize,
    max_depth: usize,
    lr: f64,
    mut on_round: impl FnMut(usize, &GbdtModel),
) -> GbdtModel {
    let n_features = x.first().map_or(0, Vec::len);
    let sorted = presort(x, n_features);
    let mut model = GbdtModel {
        n_classes,
        n_features,
        max_depth,
        learning_rate: lr,
        rounds: Vec::with_capacity(rounds),
    };
    let mut raw = vec![vec![0.0; n_classes]; x.len()];
    let mut g = vec![0.0; x.len()];
    let mut h = vec![0.0; x.len()];
    for r in 0..rounds {
        let probs: Vec<Vec<f64>> = raw.iter().map(|f| softmax(f)).collect();
        let mut round = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            for i in 0..x.len() {
                let p = probs[i][k];
                g[i] = p - (y[i] == k) as u8 as f64;
                h[i] = (p * (1.0 - p)).max(1e-16);
            }
            round.push(fit_tree(x, &g, &h, &sorted, max_depth, lr));
        }
        for (xi, fi) in x.iter().zip(raw.iter_mut()) {
            for (fk, t) in fi.iter_mut().zip(&round) {
                *fk += t.predict(xi);
            }
        }
        model.rounds.push(round);
        on_round(r + 1, &model);
    }
    model
}

pub fn fit_gbdt(x: &[Vec<f64>], y: &[usize], n_classes: usize, rounds: usize, max_depth: usize, lr: f64) -> GbdtModel {
    fit_gbdt_with(x, y, n_classes, rounds, max_depth, lr, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::argmax;

    #[test]
    fn stump_on_one_feature() {
        // only feature 3 separates the classes
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![1.0, (i % 3) as f64 * 0.0, 2.0, if i < 20 { -1.0 } else { 1.0 }])
            .collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let m = fit_gbdt(&x, &y, 2, 1, 1, 0.1);
        let gains = m.gains();
        assert!(gains[3] > 0.0);
        assert_eq!(gains[0] + gains[1] + gains[2], 0.0);
        for t in &m.rounds[0] {
            match &t.nodes[0] {
                TreeNode::Split { feature, threshold, .. } => {
                    assert_eq!(*feature, 3);
                    assert_eq!(*threshold, 0.0);
                }
                other => panic!("expected a split, got {other:?}"),
            }
        }
    }

    #[test]
    fn split_gain_matches_formula() {
        // 2 classes, first round: p = 0.5, g = ±0.5, h = 0.25
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let y = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let m = fit_gbdt(&x, &y, 2, 1, 1, 1.0);
        let (gl, hl, gr, hr) = (-2.0, 1.0, 2.0, 1.0);
        let expect = 0.5 * (gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA) - 0.0);
        match m.rounds[0][0].nodes[0] {
            TreeNode::Split { gain, threshold, .. } => {
                assert!((gain - expect).abs() < 1e-12);
                assert_eq!(threshold, 3.5);
            }
            _ => panic!("no split"),
        }
        assert_eq!(m.rounds[0][0].predict(&[0.0]), 2.0 / (1.0 + LAMBDA));
    }

    #[test]
    fn learns_three_axis_separable_classes() {
        let x: Vec<Vec<f64>> = (0..150).map(|i| vec![(i * 7 % 150) as f64, (i % 5) as f64]).collect();
        let y: Vec<usize> = x.iter().map(|r| (r[0] / 50.0) as usize).collect();
        let m = fit_gbdt(&x, &y, 3, 30, 2, 0.3);
        let acc = x.iter().zip(&y).filter(|(xi, yi)| argmax(&m.predict_proba(xi)) == **yi).count();
        assert_eq!(acc, 150);
        assert_eq!(m, fit_gbdt(&x, &y, 3, 30, 2, 0.3));
        let mut seen = Vec::new();
        fit_gbdt_with(&x, &y, 3, 5, 2, 0.3, |r, prefix| seen.push((r, prefix.rounds.len())));
        assert_eq!(seen, (1..=5).map(|r| (r, r)).collect::<Vec<_>>());
        assert_eq!(m.truncated(5), fit_gbdt(&x, &y, 3, 5, 2, 0.3));
    }
}
