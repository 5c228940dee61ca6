//! Browser demo over kgc-core: planted-graph training curves, the
//! global-average blend curve, and entity text features.

use std::cell::RefCell;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use kgc_core::ensemble::{combined_ranks, fit_global_average, grid_points, units_to_alpha};
use kgc_core::evaluate::Metrics;
use kgc_core::features::{edit_distance, text_features};
use kgc_core::graph::{EntityId, EntityRecord};
use kgc_core::kge::{score_queries, train_kge, KgeConfig, ModelKind};
use kgc_core::scores::ScoreSet;
use kgc_core::splits::{generate_negatives, make_transductive_split};
use kgc_core::synth::{planted_complex, PlantedConfig};

#[derive(Serialize)]
pub struct Curve {
    pub model: String,
    /// `(step, validation MRR)`
    pub points: Vec<(usize, f64)>,
    pub best_mrr: f64,
}

#[derive(Serialize)]
pub struct TrainingRun {
    pub entities: usize,
    pub triples: usize,
    pub valid_queries: usize,
    pub curves: Vec<Curve>,
}

#[derive(Serialize)]
pub struct BlendPoint {
    pub alpha: f64,
    pub mrr: f64,
}

#[derive(Serialize)]
pub struct BlendCurve {
    pub models: Vec<String>,
    pub points: Vec<BlendPoint>,
    pub chosen_alpha: f64,
    pub chosen_mrr: f64,
}

#[derive(Serialize)]
pub struct TextProfile {
    pub features: Vec<(String, f64)>,
    pub other_features: Vec<(String, f64)>,
    pub edit_distance: usize,
}

/// Validation scores of the last `(seed, steps)` run.
type Cached = Option<((u64, usize), Vec<ScoreSet>)>;

thread_local! {
    static LAST: RefCell<Cached> = const { RefCell::new(None) };
}

fn config(kind: ModelKind, seed: u64, steps: usize) -> KgeConfig {
    let mut c = KgeConfig::new(kind);
    c.dim = 16;
    c.lr = 3e-3;
    c.batch_size = 128;
    c.negatives = 32;
    c.l3_coeff = 1e-2;
    c.max_steps = steps.max(1);
    c.eval_every = (steps / 10).max(1);
    c.seed = seed;
    c
}

/// Trains ComplEx and TransE on a planted graph and keeps their validation
/// scores for [`blend`].
pub fn train(seed: u64, steps: usize) -> Result<TrainingRun, String> {
    let kg = planted_complex(&PlantedConfig {
        seed,
        ..Default::default()
    });
    let split = make_transductive_split(&kg, 0.1, 0.1, seed).map_err(|e| e.to_string())?;
    let negs = generate_negatives(&kg, &split, 500, seed).map_err(|e| e.to_string())?;
    let valid = negs.valid.queries();
    let train = kg.with_triples(split.train.iter().copied());
    let mut curves = Vec::new();
    let mut sets = Vec::new();
    for kind in [ModelKind::ComplEx, ModelKind::TransE] {
        let o = train_kge(&train, Some(&valid), &config(kind, seed, steps)).map_err(|e| e.to_string())?;
        curves.push(Curve {
            model: kind.name().to_string(),
            points: o.history.clone(),
            best_mrr: o.best_valid_mrr.unwrap_or(0.0),
        });
        sets.push(score_queries(&o.model, &valid, kind.name()));
    }
    LAST.with(|l| *l.borrow_mut() = Some(((seed, steps), sets)));
    Ok(TrainingRun {
        entities: kg.num_entities(),
        triples: kg.triples().len(),
        valid_queries: valid.queries.len(),
        curves,
    })
}

/// MRR of `α·ComplEx + (1 − α)·TransE` over the weight grid, training first
/// when the cached run does not match.
pub fn blend(seed: u64, steps: usize) -> Result<BlendCurve, String> {
    let cached = LAST.with(|l| l.borrow().as_ref().filter(|(k, _)| *k == (seed, steps)).map(|(_, s)| s.clone()));
    let sets = match cached {
        Some(s) => s,
        None => {
            train(seed, steps)?;
            LAST.with(|l| l.borrow().as_ref().map(|(_, s)| s.clone())).expect("just trained")
        }
    };
    let points = grid_points(2)
        .into_iter()
        .map(|u| {
            let alpha = units_to_alpha(&u);
            let r = combined_ranks(&alpha, &sets);
            BlendPoint {
                alpha: alpha[0],
                mrr: Metrics::from_ranks(&r, 0).mrr,
            }
        })
        .collect();
    let fit = fit_global_average(&sets).map_err(|e| e.to_string())?;
    Ok(BlendCurve {
        models: sets.iter().map(|s| s.model_name.clone()).collect(),
        points,
        chosen_alpha: fit.alpha[0],
        chosen_mrr: fit.valid_mrr,
    })
}

fn record(name: &str, description: &str) -> EntityRecord {
    let d = Some(description).filter(|d| !d.trim().is_empty());
    EntityRecord::new(EntityId(0), name, "entity", name, d)
}

fn owned(f: Vec<(&'static str, f64)>) -> Vec<(String, f64)> {
    f.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn profile(name: &str, description: &str, other: &str) -> TextProfile {
    TextProfile {
        features: owned(text_features(&record(name, description), None)),
        other_features: owned(text_features(&record(other, ""), None)),
        edit_distance: edit_distance(name, other),
    }
}

fn json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn train_planted(seed: u32, steps: u32) -> Result<String, JsError> {
    json(train(seed as u64, steps as usize))
}

#[wasm_bindgen]
pub fn blend_curve(seed: u32, steps: u32) -> Result<String, JsError> {
    json(blend(seed as u64, steps as usize))
}

#[wasm_bindgen]
pub fn text_profile(name: &str, description: &str, other: &str) -> Result<String, JsError> {
    json(Ok(profile(name, description, other)))
}
