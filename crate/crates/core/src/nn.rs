//! Small dense feed-forward networks with ReLU hidden layers, shared by the
//! MLP router and the input-dependent weighter.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::optim::Adam;
use crate::rng;

/// Per-feature z-scoring; zero-variance features are only centred.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let scale = var.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    pub fn identity(d: usize) -> Standardizer {
        Standardizer {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Layer `l` maps `sizes[l]` inputs to `sizes[l + 1]` outputs. Parameters
/// live in one flat buffer: for each layer the row-major weight matrix
/// (`out × in`) followed by the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

pub struct Trace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`
    /// (after ReLU except for the last layer).
    pub acts: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Uniform ±sqrt(6 / fan_in) weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut rng::Rng) -> Mlp {
        assert!(sizes.len() >= 2, "an MLP needs at least an input and an output layer");
        let mut params = Vec::with_capacity(Mlp::param_count(sizes));
        for w in sizes.windows(2) {
            let bound = (6.0 / w[0].max(1) as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.gen_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Mlp {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Mlp> {
        (params.len() == Mlp::param_count(sizes) && sizes.len() >= 2).then(|| Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let o = off;
            off += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        debug_assert_eq!(x.len(), self.input_dim());
        let last = self.sizes.len() - 2;
        let mut acts = vec![x.to_vec()];
        for (l, (off, n_in, n_out)) in self.layers().enumerate() {
            let input = &acts[l];
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let out: Vec<f64> = (0..n_out)
                .map(|j| {
                    let row = &w[j * n_in..(j + 1) * n_in];
                    let z = b[j] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if l < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        Trace { acts }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).acts.pop().unwrap()
    }

    /// Adds d(loss)/d(params) to `grad` given d(loss)/d(output).
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grad: &mut [f64]) {
        let layers: Vec<_> = self.layers().collect();
        let mut delta = d_out.to_vec();
        for (l, &(off, n_in, n_out)) in layers.iter().enumerate().rev() {
            let input = &trace.acts[l];
            let w = &self.params[off..off + n_in * n_out];
            for j in 0..n_out {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                let g = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += dj * xi;
                }
                grad[off + n_in * n_out + j] += dj;
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; n_in];
            for j in 0..n_out {
                let dj = delta[j];
                if dj != 0.0 {
                    for (p, wji) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *p += dj * wji;
                    }
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpTraining {
    pub hidden_layers: usize,
    pub width: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl MlpTraining {
    pub fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(std::iter::repeat_n(self.width, self.hidden_layers));
        s.push(output);
        s
    }
}

/// Minibatch Adam over `n` examples. `batch_loss(model, indices, grad)`
/// returns the summed loss of the batch and accumulates its summed
/// gradient. Training stops after `max_epochs` or once the epoch loss has
/// not improved for `patience` epochs, and returns the parameters of the
/// best epoch. A non-finite loss ends training early.
pub fn train_minibatch(
    mut model: Mlp,
    n: usize,
    cfg: &MlpTraining,
    rng: &mut rng::Rng,
    mut batch_loss: impl FnMut(&Mlp, &[usize], &mut [f64]) -> f64,
) -> (Mlp, f64) {
    let mut opt = Adam::new(model.params.len(), cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; model.params.len()];
    let mut best = (model.params.clone(), f64::INFINITY);
    let mut stale = 0;
    for _ in 0..cfg.max_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            epoch_loss += batch_loss(&model, batch, &mut grad);
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.step(&mut model.params, &grad);
        }
        epoch_loss /= n.max(1) as f64;
        if !epoch_loss.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            break;
        }
        if epoch_loss < best.1 {
            best = (model.params.clone(), epoch_loss);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if best.1.is_finite() {
        model.params = best.0;
    }
    (model, best.1)
}

/// Softmax classifier trained with cross-entropy on already standardized
/// inputs.
pub fn fit_classifier(x: &[Vec<f64>], y: &[usize], n_classes: usize, cfg: &MlpTraining, seed: u64) -> Mlp {
    let mut rng = rng::substream(seed, &[0xC1A5]);
    let sizes = cfg.sizes(x.first().map_or(0, Vec::len), n_classes);
    let model = Mlp::new(&sizes, &mut rng);
    train_minibatch(model, x.len(), cfg, &mut rng, |m, batch, grad| {
        let mut loss = 0.0;
        for &i in batch {
            let trace = m.forward_trace(&x[i]);
            let mut p = softmax(trace.acts.last().unwrap());
            loss -= p[y[i]].max(1e-300).ln();
            p[y[i]] -= 1.0;
            m.backward(&trace, &p, grad);
        }
        loss
    })
    .0
}
