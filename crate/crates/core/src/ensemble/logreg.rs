use serde::{Deserialize, Serialize};

use crate::nn::softmax;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

/// Multinomial logistic regression on standardized inputs. `weights` is
/// row-major `n_classes × (n_features + 1)`, the last column being the
/// unpenalized intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let w = self.n_features + 1;
        (0..self.n_classes)
            .map(|k| {
                let row = &self.weights[k * w..(k + 1) * w];
                row[self.n_features] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }
}

const MAX_ITER: usize = 1000;
const TOL: f64 = 1e-7;

/// Minimizes mean cross-entropy + R(W) / (c·n), where R is ‖W‖₁ or ½‖W‖²
/// over the non-intercept weights, by accelerated proximal gradient.
pub fn fit_logreg(x: &[Vec<f64>], y: &[usize], n_classes: usize, penalty: Penalty, c: f64) -> LinearModel {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    let w = d + 1;
    let mut model = LinearModel {
        n_classes,
        n_features: d,
        weights: vec![0.0; n_classes * w],
    };
    if n == 0 {
        return model;
    }
    let reg = 1.0 / (c * n as f64);
    let mean_sq = x.iter().map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n as f64;
    let lipschitz = 0.5 * mean_sq + if penalty == Penalty::L2 { reg } else { 0.0 };
    let step = 1.0 / lipschitz;

    let gradient = |m: &LinearModel, grad: &mut [f64]| {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (xi, &yi) in x.iter().zip(y) {
            let mut p = m.predict_proba(xi);
            p[yi] -= 1.0;
            for (k, pk) in p.iter().enumerate() {
                let row = &mut grad[k * w..(k + 1) * w];
                for (g, v) in row.iter_mut().zip(xi) {
                    *g += pk * v;
                }
                row[d] += pk;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n as f64);
        if penalty == Penalty::L2 {
            for k in 0..n_classes {
                for j in 0..d {
                    grad[k * w + j] += reg * m.weights[k * w + j];
                }
            }
        }
    };

    let mut momentum = model.clone();
    let mut grad = vec![0.0; model.weights.len()];
    let mut t = 1.0f64;
    for _ in 0..MAX_ITER {
        gradient(&momentum, &mut grad);
        let mut next: Vec<f64> = momentum.weights.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
        if penalty == Penalty::L1 {
            let thresh = step * reg;
            for k in 0..n_classes {
                for v in &mut next[k * w..k * w + d] {
                    *v = v.signum() * (v.abs() - thresh).max(0.0);
                }
            }
        }
        let change = next
            .iter()
            .zip(&model.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        momentum.weights = next
            .iter()
            .zip(&model.weights)
            .map(|(a, b)| a + beta * (a - b))
            .collect();
        model.weights = next;
        t = t_next;
        if change < TOL {
            break;
        }
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::argmax;

    fn separable() -> (Vec<Vec<f64>>, Vec<usize>) {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let a = (i as f64 * 0.37).sin();
                let b = (i as f64 * 1.3).cos();
                vec![a, b]
            })
            .collect();
        let y = x.iter().map(|r| usize::from(r[0] + 0.5 * r[1] > 0.1)).collect();
        (x, y)
    }

    #[test]
    fn weak_regularization_separates() {
        let (x, y) = separable();
        for p in [Penalty::L1, Penalty::L2] {
            let m = fit_logreg(&x, &y, 2, p, 1e3);
            let acc = x.iter().zip(&y).filter(|(xi, yi)| argmax(&m.predict_proba(xi)) == **yi).count();
            assert_eq!(acc, x.len(), "{p:?}");
        }
    }

    #[test]
    fn strong_l1_zeroes_all_weights() {
        let (x, y) = separable();
        let m = fit_logreg(&x, &y, 2, Penalty::L1, 1e-5);
        for k in 0..2 {
            assert_eq!(&m.weights[k * 3..k * 3 + 2], &[0.0, 0.0]);
        }
    }

    #[test]
    fn stationary_point_of_l2_objective() {
        let (x, y) = separable();
        let c = 0.1;
        let m = fit_logreg(&x, &y, 2, Penalty::L2, c);
        // numeric gradient of the full objective is ~0 at the solution
        let obj = |w: &[f64]| {
            let lm = LinearModel {
                n_classes: 2,
                n_features: 2,
                weights: w.to_vec(),
            };
            let ce: f64 = x.iter().zip(&y).map(|(xi, &yi)| -lm.predict_proba(xi)[yi].ln()).sum::<f64>() / 40.0;
            let r: f64 = [0, 1, 3, 4].iter().map(|&i| w[i] * w[i]).sum::<f64>() * 0.5;
            ce + r / (c * 40.0)
        };
        for i in 0..m.weights.len() {
            let mut w = m.weights.clone();
            w[i] += 1e-6;
            let up = obj(&w);
            w[i] -= 2e-6;
            let fd = (up - obj(&w)) / 2e-6;
            assert!(fd.abs() < 1e-4, "coordinate {i}: {fd}");
        }
    }
}
