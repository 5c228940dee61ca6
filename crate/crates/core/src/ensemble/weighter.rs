use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::average::{check_all_aligned, combine_query};
use super::router::{check_features, read_weights, weights_path};
use crate::error::{Error, Result};
use crate::evaluate::{rank_of_positive, Metrics};
use crate::features::FeatureMatrix;
use crate::io;
use crate::nn::{softmax, train_minibatch, Mlp, MlpTraining, Standardizer};
use crate::rng;
use crate::scores::ScoreSet;

pub const HOLDOUT_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeighterHyper {
    pub mlp: MlpTraining,
    /// Negatives sampled per query and epoch.
    pub negatives: usize,
}

pub fn default_weighter_grid() -> Vec<WeighterHyper> {
    let mut grid = Vec::new();
    for hidden_layers in [1, 2] {
        for width in [128, 256] {
            for batch_size in [64, 128, 256] {
                for lr in [1e-1, 1e-2, 1e-4] {
                    for negatives in [16, 32] {
                        grid.push(WeighterHyper {
                            mlp: MlpTraining {
                                hidden_layers,
                                width,
                                batch_size,
                                lr,
                                max_epochs: 200,
                                patience: 10,
                            },
                            negatives,
                        });
                    }
                }
            }
        }
    }
    grid
}

/// Maps a feature vector to simplex weights over the integrated models.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightModel {
    pub model_names: Vec<String>,
    pub schema_version: String,
    pub feature_names: Vec<String>,
    pub hyper: Option<WeighterHyper>,
    pub holdout_mrr: f64,
    pub standardizer: Standardizer,
    pub mlp: Mlp,
}

impl WeightModel {
    pub fn alpha(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.mlp.forward(&self.standardizer.apply(x)))
    }
}

fn fit_one(
    x: &[Vec<f64>],
    sets: &[ScoreSet],
    rows: &[usize],
    margin: f64,
    hyper: &WeighterHyper,
    seed: u64,
) -> Result<(Standardizer, Mlp)> {
    let train_x: Vec<Vec<f64>> = rows.iter().map(|&i| x[i].clone()).collect();
    let standardizer = Standardizer::fit(&train_x);
    let z = standardizer.apply_all(&train_x);
    let k = sets.len();
    let mut rng = rng::substream(seed, &[0x3E16]);
    let model = Mlp::new(&hyper.mlp.sizes(z.first().map_or(0, Vec::len), k), &mut rng);
    let mut sample_rng = rng::substream(seed, &[0x3E16, 1]);
    let (mlp, loss) = train_minibatch(model, rows.len(), &hyper.mlp, &mut rng, |m, batch, grad| {
        let mut total = 0.0;
        for &b in batch {
            let q = rows[b];
            let trace = m.forward_trace(&z[b]);
            let alpha = softmax(trace.acts.last().unwrap());
            let n_neg = sets[0].queries[q].negatives.len();
            let take = hyper.negatives.min(n_neg);
            if take == 0 {
                continue;
            }
            let picks = index::sample(&mut sample_rng, n_neg, take);
            let pos: Vec<f64> = sets.iter().map(|s| s.queries[q].positive).collect();
            let pos_mix: f64 = alpha.iter().zip(&pos).map(|(a, s)| a * s).sum();
            let mut d_alpha = vec![0.0; k];
            for j in picks.iter() {
                let neg: Vec<f64> = sets.iter().map(|s| s.queries[q].negatives[j]).collect();
                let neg_mix: f64 = alpha.iter().zip(&neg).map(|(a, s)| a * s).sum();
                let l = margin - pos_mix + neg_mix;
                if l > 0.0 {
                    total += l / take as f64;
                    for i in 0..k {
                        d_alpha[i] += (neg[i] - pos[i]) / take as f64;
                    }
                }
            }
            let dot: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            let d_logits: Vec<f64> = alpha.iter().zip(&d_alpha).map(|(a, d)| a * (d - dot)).collect();
            m.backward(&trace, &d_logits, grad);
        }
        total
    });
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { step: 0 });
    }
    let mut mlp = mlp;
    mlp.params.iter_mut().for_each(|p| *p = *p as f32 as f64);
    Ok((standardizer, mlp))
}

fn mrr_on(x: &[Vec<f64>], sets: &[ScoreSet], rows: &[usize], st: &Standardizer, mlp: &Mlp) -> f64 {
    let ranks: Vec<usize> = rows
        .iter()
        .map(|&q| {
            let alpha = softmax(&mlp.forward(&st.apply(&x[q])));
            let c = combine_query(&alpha, sets, q);
            rank_of_positive(c.positive, &c.negatives)
        })
        .collect();
    Metrics::from_ranks(&ranks, 0).mrr
}

/// Picks hyperparameters by MRR on a seeded 20% hold-out of the validation
/// queries, then refits the chosen configuration on every query.
pub fn train_weighter(
    features: &FeatureMatrix,
    score_sets: &[ScoreSet],
    margin: f64,
    grid: &[WeighterHyper],
    seed: u64,
) -> Result<WeightModel> {
    if score_sets.is_empty() {
        return Err(Error::Invalid("no score sets to weight".into()));
    }
    if grid.is_empty() {
        return Err(Error::Invalid("empty hyperparameter grid".into()));
    }
    check_all_aligned(score_sets)?;
    check_features(features, score_sets)?;
    let x = &features.rows;
    let n = x.len();
    if n == 0 {
        return Err(Error::Invalid("no validation queries for the weighter".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, &[0x4011]));
    let n_hold = ((n as f64 * HOLDOUT_FRACTION).floor() as usize).clamp(usize::from(n >= 2), n - 1);
    let (hold, fit_rows) = order.split_at(n_hold);
    let (mut hold, mut fit_rows) = (hold.to_vec(), fit_rows.to_vec());
    hold.sort_unstable();
    fit_rows.sort_unstable();

    let (best_hyper, holdout_mrr) = if grid.len() == 1 || hold.is_empty() {
        (grid[0], f64::NAN)
    } else {
        let run = |h: &WeighterHyper| -> f64 {
            match fit_one(x, score_sets, &fit_rows, margin, h, seed) {
                Ok((st, mlp)) => mrr_on(x, score_sets, &hold, &st, &mlp),
                Err(_) => f64::NEG_INFINITY,
            }
        };
        #[cfg(feature = "parallel")]
        let scores: Vec<f64> = {
            use rayon::prelude::*;
            grid.par_iter().map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let scores: Vec<f64> = grid.iter().map(run).collect();
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        (grid[best], scores[best])
    };
    let all: Vec<usize> = (0..n).collect();
    let (standardizer, mlp) = fit_one(x, score_sets, &all, margin, &best_hyper, seed)?;
    Ok(WeightModel {
        model_names: score_sets.iter().map(|s| s.model_name.clone()).collect(),
        schema_version: features.schema.version.clone(),
        feature_names: features.schema.names().into_iter().map(String::from).collect(),
        hyper: Some(best_hyper),
        holdout_mrr: if holdout_mrr.is_finite() { holdout_mrr } else { 0.0 },
        standardizer,
        mlp,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct WeighterFile {
    model_names: Vec<String>,
    schema_version: String,
    feature_names: Vec<String>,
    hyper: Option<WeighterHyper>,
    holdout_mrr: f64,
    standardizer: Standardizer,
    sizes: Vec<usize>,
    weights_file: Option<String>,
    weights_len: usize,
    weights_sha256: Option<String>,
}

pub fn save_weighter(m: &WeightModel, path: &Path) -> Result<()> {
    let (wp, name) = weights_path(path);
    let bytes = io::encode_f32(&m.mlp.params);
    io::write_bytes(&wp, &bytes)?;
    io::write_json(
        path,
        &WeighterFile {
            model_names: m.model_names.clone(),
            schema_version: m.schema_version.clone(),
            feature_names: m.feature_names.clone(),
            hyper: m.hyper,
            holdout_mrr: m.holdout_mrr,
            standardizer: m.standardizer.clone(),
            sizes: m.mlp.sizes.clone(),
            weights_file: Some(name),
            weights_len: m.mlp.params.len(),
            weights_sha256: Some(io::sha256_hex(&bytes)),
        },
    )
}

pub fn load_weighter(path: &Path) -> Result<WeightModel> {
    let f: WeighterFile = io::read_json(path)?;
    let w = read_weights(path, &f.weights_file, &f.weights_sha256, f.weights_len)?;
    let mlp = Mlp::from_params(&f.sizes, w)
        .ok_or_else(|| Error::Invalid(format!("{}: weight block has the wrong size", path.display())))?;
    Ok(WeightModel {
        model_names: f.model_names,
        schema_version: f.schema_version,
        feature_names: f.feature_names,
        hyper: f.hyper,
        holdout_mrr: f.holdout_mrr,
        standardizer: f.standardizer,
        mlp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureColumn, FeatureKind, FeatureSchema};
    use crate::scores::QueryScores;
    use crate::splits::Side;

    pub(crate) fn toy(n: usize, k: usize) -> (FeatureMatrix, Vec<ScoreSet>) {
        let keys: Vec<(usize, Side)> = (0..n).map(|i| (i, Side::Tail)).collect();
        let mut sets = Vec::new();
        for m in 0..k {
            sets.push(ScoreSet {
                model_name: format!("m{m}"),
                keys: keys.clone(),
                queries: (0..n)
                    .map(|q| {
                        // model 0 ranks the positive first, the others last
                        let pos = if m == 0 { 2.0 } else { -1.0 };
                        QueryScores {
                            positive: pos + (q % 3) as f64 * 0.01,
                            negatives: (0..20).map(|j| ((q * 7 + j * 3 + m) % 11) as f64 / 11.0).collect(),
                        }
                    })
                    .collect(),
            });
        }
        let schema = FeatureSchema {
            version: "t".into(),
            columns: ["a", "b"]
                .iter()
                .map(|n| FeatureColumn {
                    name: n.to_string(),
                    kind: FeatureKind::Numeric,
                })
                .collect(),
            model_names: sets.iter().map(|s| s.model_name.clone()).collect(),
        };
        let rows = (0..n).map(|q| vec![(q as f64 * 0.3).sin(), (q % 4) as f64]).collect();
        (FeatureMatrix { schema, keys, rows }, sets)
    }

    fn small_grid() -> Vec<WeighterHyper> {
        vec![WeighterHyper {
            mlp: MlpTraining {
                hidden_layers: 1,
                width: 16,
                batch_size: 16,
                lr: 1e-2,
                max_epochs: 60,
                patience: 10,
            },
            negatives: 16,
        }]
    }

    #[test]
    fn dominant_model_gets_most_weight() {
        let (f, sets) = toy(80, 2);
        let w = train_weighter(&f, &sets, 1.0, &small_grid(), 0).unwrap();
        let mean_a: f64 = f.rows.iter().map(|r| w.alpha(r)[0]).sum::<f64>() / f.rows.len() as f64;
        assert!(mean_a >= 0.9, "{mean_a}");
    }

    #[test]
    fn single_model_weight_is_one() {
        let (f, sets) = toy(10, 1);
        let w = train_weighter(&f, &sets, 1.0, &small_grid(), 0).unwrap();
        for r in &f.rows {
            assert_eq!(w.alpha(r), vec![1.0]);
        }
    }

    #[test]
    fn weights_are_a_distribution_and_persist() {
        let (f, sets) = toy(30, 3);
        let w = train_weighter(&f, &sets, 1.0, &small_grid(), 1).unwrap();
        for i in 0..50 {
            let x = vec![(i as f64).cos() * 10.0, i as f64 - 25.0];
            let a = w.alpha(&x);
            assert!(a.iter().all(|&v| v >= 0.0));
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("weighter.json");
        save_weighter(&w, &p).unwrap();
        assert_eq!(load_weighter(&p).unwrap(), w);
    }

    #[test]
    fn holdout_selection_is_seeded() {
        let (f, sets) = toy(40, 2);
        let mut grid = small_grid();
        grid.push(WeighterHyper {
            negatives: 8,
            ..grid[0]
        });
        let a = train_weighter(&f, &sets, 1.0, &grid, 5).unwrap();
        let b = train_weighter(&f, &sets, 1.0, &grid, 5).unwrap();
        assert_eq!(a, b);
    }
}
