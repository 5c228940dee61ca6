//! Integration of several scoring models: one global weighted average, a
//! per-query router that picks a single model, and an input-dependent
//! weighted average.
//!
//! Every integrator produces a weight vector α per query from the
//! positive's features only, and the same α scores the positive and every
//! negative of that query.

mod average;
pub mod gbdt;
pub mod logreg;
mod router;
mod weighter;

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use average::{
    check_all_aligned, combine_query, combined_ranks, fit_global_average, grid_points, mix, units_to_alpha,
    GlobalWeights, GRID_UNITS,
};
pub use logreg::Penalty;
pub use router::{
    best_model_index, class_names, cv_accuracies, cv_folds, default_grid, feature_importance, fit_router,
    label_router_targets, load_router, save_router, train_router, RouterHyper, RouterKind, RouterModel, RouterParams,
    ALL_SAME, CV_FOLDS,
};
pub use weighter::{
    default_weighter_grid, load_weighter, save_weighter, train_weighter, WeightModel, WeighterHyper, HOLDOUT_FRACTION,
};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::io;
use crate::scores::ScoreSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegrationMethod {
    GlobalAverage,
    Router,
    WeightedAverage,
}

impl FromStr for IntegrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global-average" => Ok(IntegrationMethod::GlobalAverage),
            "router" => Ok(IntegrationMethod::Router),
            "weighted-average" => Ok(IntegrationMethod::WeightedAverage),
            _ => Err(Error::Invalid(format!("unknown integration method `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Integrator {
    Global(GlobalWeights),
    Router(RouterModel),
    Weighted(WeightModel),
}

impl Integrator {
    pub fn method(&self) -> IntegrationMethod {
        match self {
            Integrator::Global(_) => IntegrationMethod::GlobalAverage,
            Integrator::Router(_) => IntegrationMethod::Router,
            Integrator::Weighted(_) => IntegrationMethod::WeightedAverage,
        }
    }

    pub fn model_names(&self) -> &[String] {
        match self {
            Integrator::Global(g) => &g.model_names,
            Integrator::Router(r) => &r.classes[..r.classes.len() - 1],
            Integrator::Weighted(w) => &w.model_names,
        }
    }

    fn feature_names(&self) -> Option<&[String]> {
        match self {
            Integrator::Global(_) => None,
            Integrator::Router(r) => Some(&r.feature_names),
            Integrator::Weighted(w) => Some(&w.feature_names),
        }
    }

    pub fn alpha(&self, features: Option<&[f64]>) -> Vec<f64> {
        match (self, features) {
            (Integrator::Global(g), _) => g.alpha.clone(),
            (Integrator::Router(r), Some(x)) => r.alpha(x),
            (Integrator::Weighted(w), Some(x)) => w.alpha(x),
            _ => unreachable!("feature presence is checked by integrate"),
        }
    }
}

/// Combined scores and the α used for each query.
#[derive(Clone, Debug, PartialEq)]
pub struct Integrated {
    pub scores: ScoreSet,
    pub alphas: Vec<Vec<f64>>,
}

pub fn integrate(
    integrator: &Integrator,
    score_sets: &[ScoreSet],
    features: Option<&FeatureMatrix>,
    name: &str,
) -> Result<Integrated> {
    if score_sets.is_empty() {
        return Err(Error::Invalid("nothing to integrate".into()));
    }
    check_all_aligned(score_sets)?;
    let names: Vec<&str> = score_sets.iter().map(|s| s.model_name.as_str()).collect();
    let expected: Vec<&str> = integrator.model_names().iter().map(String::as_str).collect();
    if names != expected {
        return Err(Error::SchemaMismatch(format!(
            "integrator was fitted on {expected:?}, got score sets {names:?}"
        )));
    }
    let rows = match integrator.feature_names() {
        None => None,
        Some(fnames) => {
            let f = features.ok_or_else(|| Error::SchemaMismatch("this integrator needs a feature matrix".into()))?;
            let have: Vec<&str> = f.schema.names();
            if have.len() != fnames.len() || have.iter().zip(fnames).any(|(a, b)| a != b) {
                return Err(Error::SchemaMismatch("feature columns differ from the ones the integrator was fitted on".into()));
            }
            if f.keys != score_sets[0].keys {
                return Err(Error::MisalignedScoreSets("feature rows and score sets cover different queries".into()));
            }
            Some(&f.rows)
        }
    };
    let n = score_sets[0].len();
    let mut alphas = Vec::with_capacity(n);
    let mut queries = Vec::with_capacity(n);
    for q in 0..n {
        let alpha = integrator.alpha(rows.map(|r| r[q].as_slice()));
        queries.push(combine_query(&alpha, score_sets, q));
        alphas.push(alpha);
    }
    Ok(Integrated {
        scores: ScoreSet {
            model_name: name.to_string(),
            keys: score_sets[0].keys.clone(),
            queries,
        },
        alphas,
    })
}

/// One row per query: `query_index \t side \t α₁ \t … \t α_k`, with a
/// header naming the models.
pub fn format_alphas(names: &[String], keys: &[(usize, crate::splits::Side)], alphas: &[Vec<f64>]) -> String {
    let mut s = String::from("query_index\tside");
    for n in names {
        s.push('\t');
        s.push_str(n);
    }
    s.push('\n');
    for ((ti, side), a) in keys.iter().zip(alphas) {
        s.push_str(&format!("{ti}\t{side}"));
        for v in a {
            s.push_str(&format!("\t{v}"));
        }
        s.push('\n');
    }
    s
}

pub fn save_global_weights(w: &GlobalWeights, path: &Path) -> Result<()> {
    io::write_json(path, w)
}

pub fn load_global_weights(path: &Path) -> Result<GlobalWeights> {
    io::read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{ranks, Metrics};
    use crate::scores::QueryScores;
    use crate::splits::Side;
    use proptest::prelude::*;

    fn random_set(name: &str, raw: &[(f64, Vec<f64>)]) -> ScoreSet {
        ScoreSet {
            model_name: name.into(),
            keys: (0..raw.len()).map(|i| (i, Side::Head)).collect(),
            queries: raw
                .iter()
                .map(|(p, n)| QueryScores {
                    positive: *p,
                    negatives: n.clone(),
                })
                .collect(),
        }
    }

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn no_features() -> FeatureMatrix {
        FeatureMatrix {
            schema: crate::features::FeatureSchema {
                version: String::new(),
                columns: vec![],
                model_names: names(),
            },
            keys: Vec::new(),
            rows: Vec::new(),
        }
    }

    fn features_for(set: &ScoreSet) -> FeatureMatrix {
        FeatureMatrix {
            keys: set.keys.clone(),
            rows: vec![Vec::new(); set.len()],
            ..no_features()
        }
    }

    fn scores() -> impl Strategy<Value = Vec<(f64, Vec<f64>)>> {
        prop::collection::vec((-5.0..5.0f64, prop::collection::vec(-5.0..5.0f64, 6)), 1..20)
    }

    proptest! {
        #[test]
        fn constant_router_equals_the_routed_model(a in scores(), b_shift in -1.0..1.0f64, c in 0usize..2) {
            let sa = random_set("a", &a);
            let b: Vec<(f64, Vec<f64>)> = a.iter().rev().map(|(p, n)| (p * 0.5 + b_shift, n.iter().map(|x| -x).collect())).collect();
            let sb = random_set("b", &b);
            let router = Integrator::Router(RouterModel::constant(&names(), c, 0));
            let sets = [sa.clone(), sb.clone()];
            let out = integrate(&router, &sets, Some(&features_for(&sa)), "r").unwrap();
            prop_assert_eq!(ranks(&out.scores), ranks(&sets[c]));
            for a in &out.alphas {
                prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12 && a.iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn affine_rescaling_of_the_routed_model_keeps_ranks(a in scores(), scale in 0.1..10.0f64, shift in -3.0..3.0f64) {
            let sa = random_set("a", &a);
            let scaled: Vec<(f64, Vec<f64>)> = a.iter().map(|(p, n)| (p * scale + shift, n.iter().map(|x| x * scale + shift).collect())).collect();
            let router = Integrator::Router(RouterModel::constant(&names(), 0, 0));
            let sb = ScoreSet { model_name: "b".into(), ..sa.clone() };
            let r1 = integrate(&router, &[sa.clone(), sb.clone()], Some(&features_for(&sa)), "r").unwrap();
            let sa2 = random_set("a", &scaled);
            let r2 = integrate(&router, &[sa2, sb], Some(&features_for(&sa)), "r").unwrap();
            prop_assert_eq!(ranks(&r1.scores), ranks(&r2.scores));
        }

        #[test]
        fn global_average_weights_lie_on_the_simplex(a in scores(), b in scores()) {
            let n = a.len().min(b.len());
            let sets = [random_set("a", &a[..n]), random_set("b", &b[..n])];
            let w = fit_global_average(&sets).unwrap();
            prop_assert!((w.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.alpha.iter().all(|&x| x >= 0.05 - 1e-12));
            let out = integrate(&Integrator::Global(w.clone()), &sets, None, "g").unwrap();
            prop_assert!((Metrics::from_ranks(&ranks(&out.scores), 0).mrr - w.valid_mrr).abs() < 1e-12);
        }
    }

    #[test]
    fn same_alpha_for_every_candidate() {
        let sa = random_set("a", &[(1.0, vec![2.0, 3.0])]);
        let sb = random_set("b", &[(4.0, vec![0.0, 5.0])]);
        let g = Integrator::Global(GlobalWeights {
            model_names: names(),
            alpha: vec![0.5, 0.5],
            valid_mrr: 0.0,
        });
        let out = integrate(&g, &[sa, sb], None, "g").unwrap();
        assert_eq!(out.scores.queries[0].positive, 2.5);
        assert_eq!(out.scores.queries[0].negatives, vec![1.0, 4.0]);
    }

    #[test]
    fn refuses_mismatched_inputs() {
        let sa = random_set("a", &[(1.0, vec![2.0])]);
        let sb = random_set("b", &[(1.0, vec![2.0])]);
        let g = Integrator::Global(GlobalWeights {
            model_names: names(),
            alpha: vec![0.5, 0.5],
            valid_mrr: 0.0,
        });
        assert!(matches!(integrate(&g, &[sb.clone(), sa.clone()], None, "g"), Err(Error::SchemaMismatch(_))));
        let r = Integrator::Router(RouterModel::constant(&names(), 0, 0));
        assert!(matches!(integrate(&r, &[sa.clone(), sb.clone()], None, "r"), Err(Error::SchemaMismatch(_))));
        assert!(integrate(&r, &[sa, sb], Some(&no_features()), "r").is_err());
    }

    #[test]
    fn alpha_file_layout() {
        let s = format_alphas(&names(), &[(3, Side::Head)], &[vec![0.25, 0.75]]);
        assert_eq!(s, "query_index\tside\ta\tb\n3\thead\t0.25\t0.75\n");
    }
}
