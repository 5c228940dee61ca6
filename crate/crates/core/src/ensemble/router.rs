use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::gbdt::{fit_gbdt_with, GbdtModel};
use super::logreg::{fit_logreg, LinearModel, Penalty};
use crate::error::{Error, Result};
use crate::evaluate::{ranks, Metrics};
use crate::features::FeatureMatrix;
use crate::io;
use crate::nn::{argmax, fit_classifier, Mlp, MlpTraining, Standardizer};
use crate::rng;
use crate::scores::ScoreSet;

pub const ALL_SAME: &str = "all-same";
pub const CV_FOLDS: usize = 5;

/// Per query: the model with the best (lowest) rank, the lowest index among
/// tied winners, or `k` ("all-same") when every model has the same rank.
pub fn label_router_targets(per_model_ranks: &[Vec<usize>]) -> Vec<usize> {
    let k = per_model_ranks.len();
    let n = per_model_ranks.first().map_or(0, Vec::len);
    (0..n)
        .map(|q| {
            let r: Vec<usize> = per_model_ranks.iter().map(|m| m[q]).collect();
            if r.iter().all(|&x| x == r[0]) {
                return k;
            }
            (0..k).min_by_key(|&i| (r[i], i)).unwrap()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouterKind {
    LogisticRegression,
    DecisionTree,
    Gbdt,
    Mlp,
}

impl RouterKind {
    pub const ALL: [RouterKind; 4] = [
        RouterKind::LogisticRegression,
        RouterKind::DecisionTree,
        RouterKind::Gbdt,
        RouterKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RouterKind::LogisticRegression => "logistic-regression",
            RouterKind::DecisionTree => "decision-tree",
            RouterKind::Gbdt => "gbdt",
            RouterKind::Mlp => "mlp",
        }
    }
}

impl FromStr for RouterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic-regression" | "logreg" => Ok(RouterKind::LogisticRegression),
            "decision-tree" | "tree" => Ok(RouterKind::DecisionTree),
            "gbdt" => Ok(RouterKind::Gbdt),
            "mlp" => Ok(RouterKind::Mlp),
            _ => Err(Error::UnsupportedRouterKind(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RouterHyper {
    LogisticRegression { penalty: Penalty, c: f64 },
    DecisionTree { depth: usize, lr: f64 },
    Gbdt { rounds: usize, depth: usize, lr: f64 },
    Mlp(MlpTraining),
}

impl RouterHyper {
    pub fn kind(&self) -> RouterKind {
        match self {
            RouterHyper::LogisticRegression { .. } => RouterKind::LogisticRegression,
            RouterHyper::DecisionTree { .. } => RouterKind::DecisionTree,
            RouterHyper::Gbdt { .. } => RouterKind::Gbdt,
            RouterHyper::Mlp(_) => RouterKind::Mlp,
        }
    }
}

pub const MLP_MAX_EPOCHS: usize = 200;
pub const MLP_PATIENCE: usize = 10;

/// The full hyperparameter grid for one router family.
pub fn default_grid(kind: RouterKind) -> Vec<RouterHyper> {
    let lrs = [1e-1, 1e-2, 1e-3];
    match kind {
        RouterKind::LogisticRegression => [Penalty::L1, Penalty::L2]
            .into_iter()
            .flat_map(|penalty| (0..9).map(move |i| RouterHyper::LogisticRegression { penalty, c: 10f64.powi(i - 5) }))
            .collect(),
        RouterKind::DecisionTree => [2, 4, 8]
            .into_iter()
            .flat_map(|depth| lrs.map(|lr| RouterHyper::DecisionTree { depth, lr }))
            .collect(),
        RouterKind::Gbdt => [100, 500, 1000]
            .into_iter()
            .flat_map(|rounds| [2, 4, 8].into_iter().flat_map(move |depth| lrs.map(|lr| RouterHyper::Gbdt { rounds, depth, lr })))
            .collect(),
        RouterKind::Mlp => [1, 2]
            .into_iter()
            .flat_map(|hidden_layers| {
                [128, 256].into_iter().flat_map(move |width| {
                    [64, 128, 256].into_iter().flat_map(move |batch_size| {
                        lrs.map(|lr| {
                            RouterHyper::Mlp(MlpTraining {
                                hidden_layers,
                                width,
                                batch_size,
                                lr,
                                max_epochs: MLP_MAX_EPOCHS,
                                patience: MLP_PATIENCE,
                            })
                        })
                    })
                })
            })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RouterParams {
    Constant { class: usize },
    Linear { standardizer: Standardizer, model: LinearModel },
    Trees(GbdtModel),
    Mlp { standardizer: Standardizer, model: Mlp },
}

impl RouterParams {
    fn predict_proba(&self, x: &[f64], n_classes: usize) -> Vec<f64> {
        match self {
            RouterParams::Constant { class } => (0..n_classes).map(|k| (k == *class) as u8 as f64).collect(),
            RouterParams::Linear { standardizer, model } => model.predict_proba(&standardizer.apply(x)),
            RouterParams::Trees(m) => m.predict_proba(x),
            RouterParams::Mlp { standardizer, model } => crate::nn::softmax(&model.forward(&standardizer.apply(x))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RouterModel {
    pub kind: RouterKind,
    /// Model names followed by [`ALL_SAME`].
    pub classes: Vec<String>,
    pub schema_version: String,
    pub feature_names: Vec<String>,
    /// Model used when the router predicts "all-same".
    pub all_same_model: usize,
    pub hyper: Option<RouterHyper>,
    pub cv_accuracy: f64,
    pub params: RouterParams,
}

impl RouterModel {
    pub fn n_models(&self) -> usize {
        self.classes.len() - 1
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.params.predict_proba(x, self.classes.len())
    }

    /// Most probable class; earlier classes win ties, so "all-same" is
    /// chosen only when strictly more probable than every model.
    pub fn predict_class(&self, x: &[f64]) -> usize {
        argmax(&self.predict_proba(x))
    }

    pub fn predict_model(&self, x: &[f64]) -> usize {
        match self.predict_class(x) {
            c if c == self.n_models() => self.all_same_model,
            c => c,
        }
    }

    pub fn alpha(&self, x: &[f64]) -> Vec<f64> {
        let m = self.predict_model(x);
        (0..self.n_models()).map(|i| (i == m) as u8 as f64).collect()
    }

    /// A router that always predicts `class`.
    pub fn constant(model_names: &[String], class: usize, all_same_model: usize) -> RouterModel {
        RouterModel {
            kind: RouterKind::Gbdt,
            classes: class_names(model_names),
            schema_version: String::new(),
            feature_names: Vec::new(),
            all_same_model,
            hyper: None,
            cv_accuracy: 1.0,
            params: RouterParams::Constant { class },
        }
    }
}

pub fn class_names(model_names: &[String]) -> Vec<String> {
    let mut c = model_names.to_vec();
    c.push(ALL_SAME.to_string());
    c
}

fn round_f32(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = *x as f32 as f64);
}

fn fit_params(hyper: &RouterHyper, x: &[Vec<f64>], y: &[usize], n_classes: usize, seed: u64) -> RouterParams {
    match *hyper {
        RouterHyper::LogisticRegression { penalty, c } => {
            let standardizer = Standardizer::fit(x);
            let mut model = fit_logreg(&standardizer.apply_all(x), y, n_classes, penalty, c);
            round_f32(&mut model.weights);
            RouterParams::Linear { standardizer, model }
        }
        RouterHyper::DecisionTree { depth, lr } => {
            RouterParams::Trees(fit_gbdt_with(x, y, n_classes, 1, depth, lr, |_, _| {}))
        }
        RouterHyper::Gbdt { rounds, depth, lr } => {
            RouterParams::Trees(fit_gbdt_with(x, y, n_classes, rounds, depth, lr, |_, _| {}))
        }
        RouterHyper::Mlp(cfg) => {
            let standardizer = Standardizer::fit(x);
            let mut model = fit_classifier(&standardizer.apply_all(x), y, n_classes, &cfg, seed);
            round_f32(&mut model.params);
            RouterParams::Mlp { standardizer, model }
        }
    }
}

/// Seeded assignment of rows to `min(CV_FOLDS, n)` folds of near-equal size.
pub fn cv_folds(n: usize, seed: u64) -> Vec<usize> {
    let k = CV_FOLDS.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, &[0xF01D]));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

fn subset<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Cross-validated accuracy of each configuration in `grid`, in grid order.
/// Boosting configurations sharing depth and learning rate are trained once
/// and scored at every requested round count.
pub fn cv_accuracies(x: &[Vec<f64>], y: &[usize], n_classes: usize, grid: &[RouterHyper], seed: u64) -> Vec<f64> {
    let folds = cv_folds(x.len(), seed);
    let k = folds.iter().copied().max().map_or(0, |m| m + 1);
    // one job per (grid entry or boosting family, fold)
    let mut jobs: Vec<(Vec<usize>, usize)> = Vec::new();
    let mut claimed = vec![false; grid.len()];
    for i in 0..grid.len() {
        if claimed[i] {
            continue;
        }
        let members: Vec<usize> = match grid[i] {
            RouterHyper::Gbdt { depth, lr, .. } => (i..grid.len())
                .filter(|&j| matches!(grid[j], RouterHyper::Gbdt { depth: d, lr: l, .. } if d == depth && l == lr))
                .collect(),
            _ => vec![i],
        };
        for &m in &members {
            claimed[m] = true;
        }
        for f in 0..k {
            jobs.push((members.clone(), f));
        }
    }
    let run = |(members, f): &(Vec<usize>, usize)| -> Vec<(usize, usize)> {
        let train: Vec<usize> = (0..x.len()).filter(|&i| folds[i] != *f).collect();
        let test: Vec<usize> = (0..x.len()).filter(|&i| folds[i] == *f).collect();
        let (xt, yt) = (subset(x, &train), subset(y, &train));
        let correct = |p: &dyn Fn(&[f64]) -> Vec<f64>| test.iter().filter(|&&i| argmax(&p(&x[i])) == y[i]).count();
        match grid[members[0]] {
            RouterHyper::Gbdt { depth, lr, .. } => {
                let rounds: Vec<(usize, usize)> = members
                    .iter()
                    .map(|&m| match grid[m] {
                        RouterHyper::Gbdt { rounds, .. } => (m, rounds),
                        _ => unreachable!(),
                    })
                    .collect();
                let max_rounds = rounds.iter().map(|r| r.1).max().unwrap_or(0);
                let mut out = Vec::new();
                let mut check = |r: usize, model: &GbdtModel| {
                    for &(m, want) in &rounds {
                        if want == r {
                            out.push((m, correct(&|v| model.predict_proba(v))));
                        }
                    }
                };
                if rounds.iter().any(|r| r.1 == 0) {
                    check(0, &fit_gbdt_with(&xt, &yt, n_classes, 0, depth, lr, |_, _| {}));
                }
                fit_gbdt_with(&xt, &yt, n_classes, max_rounds, depth, lr, &mut check);
                out
            }
            ref h => {
                let params = fit_params(h, &xt, &yt, n_classes, seed);
                vec![(members[0], correct(&|v| params.predict_proba(v, n_classes)))]
            }
        }
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Vec<(usize, usize)>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Vec<(usize, usize)>> = jobs.iter().map(run).collect();
    let mut correct = vec![0usize; grid.len()];
    for (m, c) in results.into_iter().flatten() {
        correct[m] += c;
    }
    correct.into_iter().map(|c| c as f64 / x.len().max(1) as f64).collect()
}

/// Selects the configuration with the best cross-validated accuracy (first
/// in grid order on ties) and refits it on all rows. Labels index
/// `model_names`, with `model_names.len()` meaning "all-same". A single
/// distinct label yields a constant router.
#[allow(clippy::too_many_arguments)]
pub fn train_router(
    x: &[Vec<f64>],
    labels: &[usize],
    model_names: &[String],
    feature_names: &[String],
    schema_version: &str,
    kind: RouterKind,
    grid: &[RouterHyper],
    seed: u64,
) -> Result<RouterModel> {
    let n_classes = model_names.len() + 1;
    if x.len() != labels.len() {
        return Err(Error::Invalid(format!("{} feature rows but {} labels", x.len(), labels.len())));
    }
    if x.is_empty() {
        return Err(Error::Invalid("no training rows for the router".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Invalid(format!("label {bad} outside {n_classes} classes")));
    }
    if x.iter().any(|r| r.len() != feature_names.len()) {
        return Err(Error::SchemaMismatch(format!(
            "feature rows do not have {} columns",
            feature_names.len()
        )));
    }
    if let Some(h) = grid.iter().find(|h| h.kind() != kind) {
        return Err(Error::Invalid(format!("grid entry {h:?} does not belong to {}", kind.name())));
    }
    if grid.is_empty() {
        return Err(Error::Invalid("empty hyperparameter grid".into()));
    }
    let mut model = RouterModel {
        kind,
        classes: class_names(model_names),
        schema_version: schema_version.to_string(),
        feature_names: feature_names.to_vec(),
        all_same_model: 0,
        hyper: None,
        cv_accuracy: 1.0,
        params: RouterParams::Constant { class: labels[0] },
    };
    if labels.iter().all(|&l| l == labels[0]) {
        log::warn!("router labels are all `{}`; using a constant router", model.classes[labels[0]]);
        return Ok(model);
    }
    let acc = cv_accuracies(x, labels, n_classes, grid, seed);
    let mut best = 0;
    for (i, a) in acc.iter().enumerate() {
        if *a > acc[best] {
            best = i;
        }
    }
    log::info!("{} router: best CV accuracy {:.4} with {:?}", kind.name(), acc[best], grid[best]);
    model.hyper = Some(grid[best]);
    model.cv_accuracy = acc[best];
    model.params = fit_params(&grid[best], x, labels, n_classes, seed);
    Ok(model)
}

/// Index of the model with the highest MRR, first on ties.
pub fn best_model_index(sets: &[ScoreSet]) -> usize {
    let mrr: Vec<f64> = sets.iter().map(|s| Metrics::from_ranks(&ranks(s), 0).mrr).collect();
    let mut best = 0;
    for (i, m) in mrr.iter().enumerate() {
        if *m > mrr[best] {
            best = i;
        }
    }
    best
}

/// Labels validation queries from the models' ranks, trains the router on
/// the validation features and maps "all-same" to the model with the best
/// validation MRR.
pub fn fit_router(
    features: &FeatureMatrix,
    score_sets: &[ScoreSet],
    kind: RouterKind,
    grid: &[RouterHyper],
    seed: u64,
) -> Result<RouterModel> {
    super::average::check_all_aligned(score_sets)?;
    check_features(features, score_sets)?;
    let labels = label_router_targets(&score_sets.iter().map(ranks).collect::<Vec<_>>());
    let names: Vec<String> = score_sets.iter().map(|s| s.model_name.clone()).collect();
    let feature_names: Vec<String> = features.schema.names().into_iter().map(String::from).collect();
    let mut router = train_router(
        &features.rows,
        &labels,
        &names,
        &feature_names,
        &features.schema.version,
        kind,
        grid,
        seed,
    )?;
    router.all_same_model = best_model_index(score_sets);
    Ok(router)
}

pub(crate) fn check_features(features: &FeatureMatrix, score_sets: &[ScoreSet]) -> Result<()> {
    let names: Vec<&str> = score_sets.iter().map(|s| s.model_name.as_str()).collect();
    let schema_models: Vec<&str> = features.schema.model_names.iter().map(String::as_str).collect();
    if names != schema_models {
        return Err(Error::SchemaMismatch(format!(
            "features were built for models {schema_models:?}, got {names:?}"
        )));
    }
    if let Some(s) = score_sets.first() {
        if s.keys != features.keys {
            return Err(Error::MisalignedScoreSets(
                "feature rows and score sets cover different queries".into(),
            ));
        }
    }
    Ok(())
}

/// Total split gain per feature over every tree, largest first (names break
/// ties).
pub fn feature_importance(router: &RouterModel) -> Result<Vec<(String, f64)>> {
    let RouterParams::Trees(m) = &router.params else {
        return Err(Error::UnsupportedRouterKind(router.kind.name().to_string()));
    };
    if router.kind != RouterKind::Gbdt {
        return Err(Error::UnsupportedRouterKind(router.kind.name().to_string()));
    }
    let mut out: Vec<(String, f64)> = router.feature_names.iter().cloned().zip(m.gains()).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum StoredParams {
    Constant {
        class: usize,
    },
    Linear {
        standardizer: Standardizer,
        n_classes: usize,
        n_features: usize,
    },
    Trees {
        model: GbdtModel,
    },
    Mlp {
        standardizer: Standardizer,
        sizes: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RouterFile {
    kind: RouterKind,
    classes: Vec<String>,
    schema_version: String,
    feature_names: Vec<String>,
    all_same_model: usize,
    hyper: Option<RouterHyper>,
    cv_accuracy: f64,
    params: StoredParams,
    weights_file: Option<String>,
    weights_len: usize,
    weights_sha256: Option<String>,
}

pub(crate) fn weights_path(path: &Path) -> (std::path::PathBuf, String) {
    let stem = path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".json"))
        .unwrap_or("model");
    let name = format!("{stem}.f32");
    (path.parent().unwrap_or(Path::new(".")).join(&name), name)
}

/// Structure as JSON at `path`; linear and MLP weights as a little-endian
/// f32 block next to it.
pub fn save_router(router: &RouterModel, path: &Path) -> Result<()> {
    let (params, weights): (StoredParams, Option<&[f64]>) = match &router.params {
        RouterParams::Constant { class } => (StoredParams::Constant { class: *class }, None),
        RouterParams::Trees(m) => (StoredParams::Trees { model: m.clone() }, None),
        RouterParams::Linear { standardizer, model } => (
            StoredParams::Linear {
                standardizer: standardizer.clone(),
                n_classes: model.n_classes,
                n_features: model.n_features,
            },
            Some(&model.weights),
        ),
        RouterParams::Mlp { standardizer, model } => (
            StoredParams::Mlp {
                standardizer: standardizer.clone(),
                sizes: model.sizes.clone(),
            },
            Some(&model.params),
        ),
    };
    let (weights_file, weights_sha256) = match weights {
        Some(w) => {
            let (wp, name) = weights_path(path);
            let bytes = io::encode_f32(w);
            io::write_bytes(&wp, &bytes)?;
            (Some(name), Some(io::sha256_hex(&bytes)))
        }
        None => (None, None),
    };
    let file = RouterFile {
        kind: router.kind,
        classes: router.classes.clone(),
        schema_version: router.schema_version.clone(),
        feature_names: router.feature_names.clone(),
        all_same_model: router.all_same_model,
        hyper: router.hyper,
        cv_accuracy: router.cv_accuracy,
        params,
        weights_len: weights.map_or(0, <[f64]>::len),
        weights_file,
        weights_sha256,
    };
    io::write_json(path, &file)
}

pub(crate) fn read_weights(path: &Path, file: &Option<String>, sha: &Option<String>, len: usize) -> Result<Vec<f64>> {
    let Some(name) = file else {
        return Ok(Vec::new());
    };
    let wp = path.parent().unwrap_or(Path::new(".")).join(name);
    let bytes = std::fs::read(&wp).map_err(|e| Error::io(&wp, e))?;
    let found = io::sha256_hex(&bytes);
    if let Some(expected) = sha {
        if *expected != found {
            return Err(Error::HashMismatch {
                artifact: wp.display().to_string(),
                expected: expected.clone(),
                found,
            });
        }
    }
    io::read_f32_block(&wp, len)
}

pub fn load_router(path: &Path) -> Result<RouterModel> {
    let file: RouterFile = io::read_json(path)?;
    let weights = read_weights(path, &file.weights_file, &file.weights_sha256, file.weights_len)?;
    let params = match file.params {
        StoredParams::Constant { class } => RouterParams::Constant { class },
        StoredParams::Trees { model } => RouterParams::Trees(model),
        StoredParams::Linear {
            standardizer,
            n_classes,
            n_features,
        } => {
            if weights.len() != n_classes * (n_features + 1) {
                return Err(Error::Invalid(format!("{}: weight block has the wrong size", path.display())));
            }
            RouterParams::Linear {
                standardizer,
                model: LinearModel {
                    n_classes,
                    n_features,
                    weights,
                },
            }
        }
        StoredParams::Mlp { standardizer, sizes } => RouterParams::Mlp {
            standardizer,
            model: Mlp::from_params(&sizes, weights)
                .ok_or_else(|| Error::Invalid(format!("{}: weight block has the wrong size", path.display())))?,
        },
    };
    Ok(RouterModel {
        kind: file.kind,
        classes: file.classes,
        schema_version: file.schema_version,
        feature_names: file.feature_names,
        all_same_model: file.all_same_model,
        hyper: file.hyper,
        cv_accuracy: file.cv_accuracy,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("m{i}")).collect()
    }

    fn axis_data(n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let u = (i * 37 % n) as f64 / n as f64;
                vec![u, ((i * 13) % 7) as f64, (i as f64 * 0.71).sin()]
            })
            .collect();
        let y = x.iter().map(|r| (r[0] * 3.0) as usize).collect();
        (x, y)
    }

    #[test]
    fn labels_follow_the_tie_policy() {
        assert_eq!(label_router_targets(&[vec![3], vec![1]]), vec![1]);
        assert_eq!(label_router_targets(&[vec![2], vec![2]]), vec![2]);
        // every arrangement of ranks {1, 1, 4}
        for perm in [[1, 1, 4], [1, 4, 1], [4, 1, 1]] {
            let ranks: Vec<Vec<usize>> = perm.iter().map(|&r| vec![r]).collect();
            let expected = perm.iter().position(|&r| r == 1).unwrap();
            assert_eq!(label_router_targets(&ranks), vec![expected]);
        }
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(default_grid(RouterKind::LogisticRegression).len(), 18);
        assert_eq!(default_grid(RouterKind::DecisionTree).len(), 9);
        assert_eq!(default_grid(RouterKind::Gbdt).len(), 27);
        assert_eq!(default_grid(RouterKind::Mlp).len(), 36);
        match default_grid(RouterKind::LogisticRegression)[8] {
            RouterHyper::LogisticRegression { c, .. } => assert_eq!(c, 1e3),
            _ => unreachable!(),
        }
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let f = cv_folds(23, 4);
        assert_eq!(f, cv_folds(23, 4));
        assert_ne!(f, cv_folds(23, 5));
        for k in 0..5 {
            let c = f.iter().filter(|&&x| x == k).count();
            assert!(c == 4 || c == 5);
        }
    }

    #[test]
    fn gbdt_router_learns_axis_separable_classes() {
        let (x, y) = axis_data(200);
        let fnames: Vec<String> = (0..3).map(|i| format!("f{i}")).collect();
        let grid = vec![RouterHyper::Gbdt {
            rounds: 20,
            depth: 2,
            lr: 0.1,
        }];
        let r = train_router(&x, &y, &names(2), &fnames, "v", RouterKind::Gbdt, &grid, 0).unwrap();
        assert!(r.cv_accuracy >= 0.95, "{}", r.cv_accuracy);
        let imp = feature_importance(&r).unwrap();
        assert_eq!(imp[0].0, "f0");
        assert!(imp.iter().all(|(_, g)| *g >= 0.0));
    }

    #[test]
    fn shared_boosting_runs_match_separate_fits() {
        let (x, y) = axis_data(60);
        let grid = [5, 2, 9].map(|rounds| RouterHyper::Gbdt { rounds, depth: 2, lr: 0.3 });
        let shared = cv_accuracies(&x, &y, 3, &grid, 1);
        for (i, h) in grid.iter().enumerate() {
            assert_eq!(cv_accuracies(&x, &y, 3, std::slice::from_ref(h), 1)[0], shared[i]);
        }
    }

    #[test]
    fn constant_labels_give_a_constant_router() {
        let (x, _) = axis_data(20);
        let fnames: Vec<String> = (0..3).map(|i| format!("f{i}")).collect();
        let r = train_router(&x, &[1; 20], &names(2), &fnames, "v", RouterKind::Mlp, &default_grid(RouterKind::Mlp), 0)
            .unwrap();
        assert_eq!(r.params, RouterParams::Constant { class: 1 });
        assert!(x.iter().all(|xi| r.predict_model(xi) == 1));
    }

    #[test]
    fn importance_requires_gbdt() {
        let r = RouterModel {
            kind: RouterKind::DecisionTree,
            ..RouterModel::constant(&names(2), 0, 0)
        };
        assert!(matches!(feature_importance(&r), Err(Error::UnsupportedRouterKind(_))));
    }

    #[test]
    fn all_same_maps_to_best_model() {
        let r = RouterModel::constant(&names(3), 3, 2);
        assert_eq!(r.predict_model(&[]), 2);
        assert_eq!(r.alpha(&[]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn persistence_round_trips_every_kind() {
        let (x, y) = axis_data(40);
        let fnames: Vec<String> = (0..3).map(|i| format!("f{i}")).collect();
        let dir = tempfile::tempdir().unwrap();
        let grids = [
            vec![RouterHyper::LogisticRegression { penalty: Penalty::L2, c: 1.0 }],
            vec![RouterHyper::DecisionTree { depth: 2, lr: 0.1 }],
            vec![RouterHyper::Gbdt { rounds: 3, depth: 2, lr: 0.1 }],
            vec![RouterHyper::Mlp(MlpTraining {
                hidden_layers: 1,
                width: 8,
                batch_size: 16,
                lr: 0.01,
                max_epochs: 5,
                patience: 10,
            })],
        ];
        for grid in grids {
            let kind = grid[0].kind();
            let r = train_router(&x, &y, &names(2), &fnames, "v", kind, &grid, 3).unwrap();
            let p = dir.path().join(format!("{}.json", kind.name()));
            save_router(&r, &p).unwrap();
            let back = load_router(&p).unwrap();
            assert_eq!(back, r, "{kind:?}");
        }
    }
}
