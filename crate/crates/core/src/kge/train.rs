use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::model::{accumulate_score_grad, KgeConfig, KgeModel, ModelKind};
use crate::error::{Error, Result};
use crate::evaluate::{self, Metrics};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::optim::Adam;
use crate::rng;
use crate::scores::ScoreSet;
use crate::splits::{QuerySet, Side};

/// Max-margin ranking loss of one positive against its negatives:
/// `mean_i max(0, margin − pos + neg_i)`.
pub fn rank_loss(pos_score: f64, neg_scores: &[f64], margin: f64) -> f64 {
    assert!(!neg_scores.is_empty(), "rank_loss needs at least one negative");
    neg_scores
        .iter()
        .map(|&n| (margin - pos_score + n).max(0.0))
        .sum::<f64>()
        / neg_scores.len() as f64
}

/// Σ |x|³ over a block of embedding entries.
pub fn l3_penalty(values: &[f64]) -> f64 {
    values.iter().map(|x| x.abs().powi(3)).sum()
}

const CORRUPTION_RETRIES: usize = 10;

/// `n` corruptions of `t`, each replacing the head or the tail (chosen
/// uniformly) by a different entity of the same type. Corruptions that hit a
/// known training positive are redrawn up to ten times, then kept.
pub fn sample_corruptions(kg_train: &KnowledgeGraph, t: Triple, n: usize, rng: &mut rng::Rng) -> Result<Vec<Triple>> {
    let pool = |e: EntityId| kg_train.entities_of_type(kg_train.type_index(e));
    let head_pool = pool(t.head);
    let tail_pool = pool(t.tail);
    if head_pool.len() < 2 && tail_pool.len() < 2 {
        let ty = &kg_train.types()[kg_train.type_index(t.head)];
        return Err(Error::NoCandidates(ty.clone()));
    }
    let draw = |rng: &mut rng::Rng| {
        let side = match (head_pool.len() >= 2, tail_pool.len() >= 2) {
            (true, true) => {
                if rng.gen_bool(0.5) {
                    Side::Head
                } else {
                    Side::Tail
                }
            }
            (true, false) => Side::Head,
            _ => Side::Tail,
        };
        let (pool, original) = match side {
            Side::Head => (head_pool, t.head),
            Side::Tail => (tail_pool, t.tail),
        };
        // uniform over the pool minus the original entity
        let mut e = pool[rng.gen_range(0..pool.len() - 1)];
        if e == original {
            e = pool[pool.len() - 1];
        }
        side.replace(t, e)
    };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut c = draw(rng);
        let mut tries = 0;
        while kg_train.contains(&c) && tries < CORRUPTION_RETRIES {
            c = draw(rng);
            tries += 1;
        }
        out.push(c);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub positive: Triple,
    pub corruptions: Vec<Triple>,
}

/// Gradient buffers shaped like a model's embedding tables.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub entity: Vec<f64>,
    pub relation: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &KgeModel) -> Self {
        Gradients {
            entity: vec![0.0; model.entity_emb.len()],
            relation: vec![0.0; model.relation_emb.len()],
        }
    }

    fn clear(&mut self) {
        self.entity.iter_mut().for_each(|g| *g = 0.0);
        self.relation.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Batch objective: mean ranking loss over the batch plus `l3_coeff` times
/// the L3 penalty of every entity and relation row the batch touches
/// (RotatE phases are not regularized). Adds the gradient into `grad` when
/// given.
pub fn batch_objective(model: &KgeModel, batch: &[TrainingExample], mut grad: Option<&mut Gradients>) -> f64 {
    let cfg = &model.config;
    let kind = cfg.model_kind;
    let ew = model.entity_width();
    let rw = model.relation_width();
    let mut loss = 0.0;
    let mut touched_e: BTreeSet<EntityId> = BTreeSet::new();
    let mut touched_r: BTreeSet<RelationId> = BTreeSet::new();

    for ex in batch {
        let n = ex.corruptions.len() as f64;
        let w = 1.0 / (n * batch.len() as f64);
        let pos = model.score(ex.positive);
        touched_e.extend([ex.positive.head, ex.positive.tail]);
        touched_r.insert(ex.positive.rel);
        let mut pos_weight = 0.0;
        for c in &ex.corruptions {
            touched_e.extend([c.head, c.tail]);
            let hinge = cfg.margin - pos + model.score(*c);
            if hinge > 0.0 {
                loss += w * hinge;
                pos_weight -= w;
                if let Some(g) = grad.as_deref_mut() {
                    add_triple_grad(model, *c, w, g);
                }
            }
        }
        if pos_weight != 0.0 {
            if let Some(g) = grad.as_deref_mut() {
                add_triple_grad(model, ex.positive, pos_weight, g);
            }
        }
    }

    if cfg.l3_coeff > 0.0 {
        for &e in &touched_e {
            let row = model.entity(e);
            loss += cfg.l3_coeff * l3_penalty(row);
            if let Some(g) = grad.as_deref_mut() {
                let gr = &mut g.entity[e.index() * ew..(e.index() + 1) * ew];
                for (gx, x) in gr.iter_mut().zip(row) {
                    *gx += cfg.l3_coeff * 3.0 * x * x.abs();
                }
            }
        }
        if kind != ModelKind::RotatE {
            for &r in &touched_r {
                let row = model.relation(r);
                loss += cfg.l3_coeff * l3_penalty(row);
                if let Some(g) = grad.as_deref_mut() {
                    let gr = &mut g.relation[r.index() * rw..(r.index() + 1) * rw];
                    for (gx, x) in gr.iter_mut().zip(row) {
                        *gx += cfg.l3_coeff * 3.0 * x * x.abs();
                    }
                }
            }
        }
    }
    loss
}

fn add_triple_grad(model: &KgeModel, t: Triple, w: f64, g: &mut Gradients) {
    let ew = model.entity_width();
    let rw = model.relation_width();
    let (h, r, tl) = (t.head.index(), t.rel.index(), t.tail.index());
    let mut gh = vec![0.0; ew];
    let mut gt = vec![0.0; ew];
    let gr = &mut g.relation[r * rw..(r + 1) * rw];
    accumulate_score_grad(
        model.kind(),
        model.entity(t.head),
        model.relation(t.rel),
        model.entity(t.tail),
        w,
        &mut gh,
        gr,
        &mut gt,
    );
    for (dst, src) in g.entity[h * ew..(h + 1) * ew].iter_mut().zip(&gh) {
        *dst += src;
    }
    for (dst, src) in g.entity[tl * ew..(tl + 1) * ew].iter_mut().zip(&gt) {
        *dst += src;
    }
}

/// Scores every candidate of every query.
pub fn score_queries(model: &KgeModel, queries: &QuerySet, model_name: &str) -> ScoreSet {
    let one = |q: &crate::splits::RankingQuery| crate::scores::QueryScores {
        positive: model.score(q.positive),
        negatives: q.candidates.iter().map(|&e| model.score(q.candidate_triple(e))).collect(),
    };
    #[cfg(feature = "parallel")]
    let scored = {
        use rayon::prelude::*;
        queries.queries.par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let scored = queries.queries.iter().map(one).collect();
    ScoreSet {
        model_name: model_name.to_string(),
        keys: queries.queries.iter().map(|q| (q.triple_index, q.side)).collect(),
        queries: scored,
    }
}

pub fn evaluate_model(model: &KgeModel, queries: &QuerySet) -> Metrics {
    let set = score_queries(model, queries, "eval");
    Metrics::from_ranks(&evaluate::ranks(&set), queries.excluded)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Checkpoint with the best validation MRR (the final model when no
    /// validation queries are given).
    pub model: KgeModel,
    pub best_valid_mrr: Option<f64>,
    pub best_step: usize,
    /// `(step, validation MRR)` at every evaluation.
    pub history: Vec<(usize, f64)>,
    pub final_loss: Option<f64>,
}

/// Mini-batch Adam on the ranking loss plus L3 regularization. Validation
/// MRR on the fixed negatives is computed at step 0, every `eval_every`
/// steps and at the last step; the best checkpoint is returned.
pub fn train_kge(kg_train: &KnowledgeGraph, valid: Option<&QuerySet>, config: &KgeConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut model = KgeModel::init(config.clone(), kg_train.num_entities(), kg_train.num_relations());
    let train = kg_train.triples();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, KgeModel)> = None;

    let mut record = |step: usize, model: &KgeModel, best: &mut Option<(f64, usize, KgeModel)>| {
        if let Some(q) = valid {
            let mrr = evaluate_model(model, q).mrr;
            history.push((step, mrr));
            log::debug!("step {step}: validation MRR {mrr:.4}");
            if best.as_ref().is_none_or(|(b, _, _)| mrr > *b) {
                *best = Some((mrr, step, model.clone()));
            }
        }
    };
    record(0, &model, &mut best);
    if config.max_steps == 0 || train.is_empty() {
        return Ok(finish(model, best, history, 0, None));
    }

    let mut rng = rng::substream(config.seed, &[0x7_4a1]);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut ent_opt = Adam::new(model.entity_emb.len(), config.lr);
    let mut rel_opt = Adam::new(model.relation_emb.len(), config.lr);
    let mut grads = Gradients::zeros_like(&model);
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut last_loss = None;

    for step in 1..=config.max_steps {
        batch.clear();
        for _ in 0..config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let positive = train[order[cursor]];
            cursor += 1;
            let corruptions = sample_corruptions(kg_train, positive, config.negatives, &mut rng)?;
            batch.push(TrainingExample { positive, corruptions });
        }
        grads.clear();
        let loss = batch_objective(&model, &batch, Some(&mut grads));
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        last_loss = Some(loss);
        ent_opt.step(&mut model.entity_emb, &grads.entity);
        rel_opt.step(&mut model.relation_emb, &grads.relation);
        if model.entity_emb.iter().chain(&model.relation_emb).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        if step % config.eval_every == 0 || step == config.max_steps {
            record(step, &model, &mut best);
        }
    }
    Ok(finish(model, best, history, config.max_steps, last_loss))
}

fn finish(
    last: KgeModel,
    best: Option<(f64, usize, KgeModel)>,
    history: Vec<(usize, f64)>,
    last_step: usize,
    final_loss: Option<f64>,
) -> TrainOutcome {
    match best {
        Some((mrr, step, model)) => TrainOutcome {
            model,
            best_valid_mrr: Some(mrr),
            best_step: step,
            history,
            final_loss,
        },
        None => TrainOutcome {
            model: last,
            best_valid_mrr: None,
            best_step: last_step,
            history,
            final_loss,
        },
    }
}
