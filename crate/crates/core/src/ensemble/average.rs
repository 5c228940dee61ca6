use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{rank_of_positive, Metrics};
use crate::scores::{QueryScores, ScoreSet};

/// Grid resolution: every weight is a whole number of `1/GRID_UNITS` steps.
pub const GRID_UNITS: u32 = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalWeights {
    pub model_names: Vec<String>,
    pub alpha: Vec<f64>,
    pub valid_mrr: f64,
}

/// All ways of writing `GRID_UNITS` as an ordered sum of `k` positive
/// parts, in lexicographic order.
pub fn grid_points(k: usize) -> Vec<Vec<u32>> {
    fn rec(k: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for u in 1..=left.saturating_sub(k as u32 - 1) {
            prefix.push(u);
            rec(k - 1, left - u, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k >= 1 && k as u32 <= GRID_UNITS {
        rec(k, GRID_UNITS, &mut Vec::new(), &mut out);
    }
    out
}

pub fn units_to_alpha(units: &[u32]) -> Vec<f64> {
    units.iter().map(|&u| u as f64 / GRID_UNITS as f64).collect()
}

pub fn check_all_aligned(sets: &[ScoreSet]) -> Result<()> {
    if let Some(first) = sets.first() {
        for s in &sets[1..] {
            first.check_aligned(s)?;
        }
    }
    Ok(())
}

/// Σ αᵢ·sᵢ, accumulated in model order.
pub fn mix(alpha: &[f64], scores: impl Iterator<Item = f64>) -> f64 {
    alpha.iter().zip(scores).fold(0.0, |acc, (a, s)| acc + a * s)
}

pub fn combine_query(alpha: &[f64], sets: &[ScoreSet], q: usize) -> QueryScores {
    let n = sets[0].queries[q].negatives.len();
    QueryScores {
        positive: mix(alpha, sets.iter().map(|s| s.queries[q].positive)),
        negatives: (0..n)
            .map(|j| mix(alpha, sets.iter().map(|s| s.queries[q].negatives[j])))
            .collect(),
    }
}

pub fn combined_ranks(alpha: &[f64], sets: &[ScoreSet]) -> Vec<usize> {
    (0..sets[0].len())
        .map(|q| {
            let c = combine_query(alpha, sets, q);
            rank_of_positive(c.positive, &c.negatives)
        })
        .collect()
}

/// Exhaustive search of the step-0.05 simplex grid for the weights with the
/// best MRR; the lexicographically smallest α wins ties.
pub fn fit_global_average(sets: &[ScoreSet]) -> Result<GlobalWeights> {
    if sets.len() < 2 {
        return Err(Error::Invalid(format!(
            "global averaging needs at least 2 models, got {}",
            sets.len()
        )));
    }
    check_all_aligned(sets)?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for units in grid_points(sets.len()) {
        let alpha = units_to_alpha(&units);
        let mrr = Metrics::from_ranks(&combined_ranks(&alpha, sets), 0).mrr;
        if best.as_ref().is_none_or(|(_, b)| mrr > *b) {
            best = Some((alpha, mrr));
        }
    }
    let (alpha, valid_mrr) = best.ok_or_else(|| Error::Invalid("empty weight grid".into()))?;
    Ok(GlobalWeights {
        model_names: sets.iter().map(|s| s.model_name.clone()).collect(),
        alpha,
        valid_mrr,
    })
}
