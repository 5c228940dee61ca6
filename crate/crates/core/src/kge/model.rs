use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, RelationId, Triple};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    DistMult,
    ComplEx,
    RotatE,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::TransE, ModelKind::DistMult, ModelKind::ComplEx, ModelKind::RotatE];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
            ModelKind::RotatE => "rotate",
        }
    }

    /// Real numbers stored per entity.
    pub fn entity_width(self, dim: usize) -> usize {
        match self {
            ModelKind::TransE | ModelKind::DistMult => dim,
            ModelKind::ComplEx | ModelKind::RotatE => 2 * dim,
        }
    }

    /// Real numbers stored per relation (RotatE stores one phase per
    /// complex coordinate).
    pub fn relation_width(self, dim: usize) -> usize {
        match self {
            ModelKind::ComplEx => 2 * dim,
            _ => dim,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelKind::TransE),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            "rotate" => Ok(ModelKind::RotatE),
            other => Err(Error::Invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KgeConfig {
    pub model_kind: ModelKind,
    /// Embedding width in (complex) coordinates.
    pub dim: usize,
    pub margin: f64,
    pub lr: f64,
    /// Corruptions per positive.
    pub negatives: usize,
    pub l3_coeff: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl KgeConfig {
    pub fn new(model_kind: ModelKind) -> Self {
        KgeConfig {
            model_kind,
            dim: 1000,
            margin: 1.0,
            lr: 1e-3,
            negatives: 128,
            l3_coeff: 1e-5,
            batch_size: 512,
            max_steps: 10_000,
            eval_every: 500,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Invalid(format!("KGE config: {what}")));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.negatives == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return bad("negatives, batch size and eval interval must be positive");
        }
        if !(self.l3_coeff >= 0.0 && self.l3_coeff.is_finite()) {
            return bad("l3 coefficient must be non-negative");
        }
        Ok(())
    }

    /// The 48-point search grid used for every model kind.
    pub fn search_grid(model_kind: ModelKind) -> Vec<KgeConfig> {
        let mut out = Vec::new();
        for dim in [500, 1000, 2000] {
            for margin in [0.1, 1.0] {
                for lr in [1e-3, 1e-4] {
                    for negatives in [128, 256] {
                        for l3_coeff in [1e-5, 1e-6] {
                            out.push(KgeConfig {
                                dim,
                                margin,
                                lr,
                                negatives,
                                l3_coeff,
                                ..KgeConfig::new(model_kind)
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KgeModel {
    pub config: KgeConfig,
    pub num_entities: usize,
    pub num_relations: usize,
    /// Row-major `num_entities × entity_width`. Complex rows hold the real
    /// parts followed by the imaginary parts.
    pub entity_emb: Vec<f64>,
    /// Row-major `num_relations × relation_width`.
    pub relation_emb: Vec<f64>,
}

impl KgeModel {
    /// Uniform(−0.5/dim, 0.5/dim) entries; RotatE phases uniform in [0, 2π).
    pub fn init(config: KgeConfig, num_entities: usize, num_relations: usize) -> Self {
        let kind = config.model_kind;
        let mut rng = rng::substream(config.seed, &[0x1_417]);
        let ew = kind.entity_width(config.dim);
        let rw = kind.relation_width(config.dim);
        let bound = 0.5 / config.dim as f64;
        let entity_emb = (0..num_entities * ew).map(|_| rng.gen_range(-bound..bound)).collect();
        let relation_emb = (0..num_relations * rw)
            .map(|_| match kind {
                ModelKind::RotatE => rng.gen_range(0.0..TAU),
                _ => rng.gen_range(-bound..bound),
            })
            .collect();
        KgeModel {
            config,
            num_entities,
            num_relations,
            entity_emb,
            relation_emb,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.config.model_kind
    }

    pub fn entity_width(&self) -> usize {
        self.kind().entity_width(self.config.dim)
    }

    pub fn relation_width(&self) -> usize {
        self.kind().relation_width(self.config.dim)
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        let w = self.entity_width();
        &self.entity_emb[e.index() * w..(e.index() + 1) * w]
    }

    pub fn entity_mut(&mut self, e: EntityId) -> &mut [f64] {
        let w = self.entity_width();
        &mut self.entity_emb[e.index() * w..(e.index() + 1) * w]
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        let w = self.relation_width();
        &self.relation_emb[r.index() * w..(r.index() + 1) * w]
    }

    pub fn score(&self, t: Triple) -> f64 {
        score(self.kind(), self.entity(t.head), self.relation(t.rel), self.entity(t.tail))
    }

    /// Overwrites an entity row with a fresh draw from the initialization
    /// distribution.
    pub fn redraw_entity(&mut self, e: EntityId, rng: &mut rng::Rng) {
        let bound = 0.5 / self.config.dim as f64;
        for x in self.entity_mut(e) {
            *x = rng.gen_range(-bound..bound);
        }
    }
}

/// Score of one triple; higher means more plausible.
///
/// - TransE: −‖h + r − t‖₂
/// - DistMult: Σ hᵢ rᵢ tᵢ
/// - ComplEx: Re(Σ hᵢ rᵢ conj(tᵢ))
/// - RotatE: −‖h ∘ e^{iθ} − t‖₂
pub fn score(kind: ModelKind, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match kind {
        ModelKind::TransE => -h
            .iter()
            .zip(r)
            .zip(t)
            .map(|((h, r), t)| (h + r - t).powi(2))
            .sum::<f64>()
            .sqrt(),
        ModelKind::DistMult => h.iter().zip(r).zip(t).map(|((h, r), t)| h * r * t).sum(),
        ModelKind::ComplEx => {
            let d = h.len() / 2;
            let (hr, hi) = h.split_at(d);
            let (rr, ri) = r.split_at(d);
            let (tr, ti) = t.split_at(d);
            (0..d)
                .map(|k| {
                    let re = hr[k] * rr[k] - hi[k] * ri[k];
                    let im = hr[k] * ri[k] + hi[k] * rr[k];
                    re * tr[k] + im * ti[k]
                })
                .sum()
        }
        ModelKind::RotatE => {
            let d = h.len() / 2;
            let (hr, hi) = h.split_at(d);
            let (tr, ti) = t.split_at(d);
            -(0..d)
                .map(|k| {
                    let (s, c) = r[k].sin_cos();
                    let dr = hr[k] * c - hi[k] * s - tr[k];
                    let di = hr[k] * s + hi[k] * c - ti[k];
                    dr * dr + di * di
                })
                .sum::<f64>()
                .sqrt()
        }
    }
}

/// Adds `w · ∂score/∂(h, r, t)` into the gradient buffers.
///
/// The norm-based scores use a zero subgradient where the residual vanishes.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_score_grad(
    kind: ModelKind,
    h: &[f64],
    r: &[f64],
    t: &[f64],
    w: f64,
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) {
    match kind {
        ModelKind::TransE => {
            let norm = h
                .iter()
                .zip(r)
                .zip(t)
                .map(|((h, r), t)| (h + r - t).powi(2))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return;
            }
            for k in 0..h.len() {
                let g = w * (h[k] + r[k] - t[k]) / norm;
                gh[k] -= g;
                gr[k] -= g;
                gt[k] += g;
            }
        }
        ModelKind::DistMult => {
            for k in 0..h.len() {
                gh[k] += w * r[k] * t[k];
                gr[k] += w * h[k] * t[k];
                gt[k] += w * h[k] * r[k];
            }
        }
        ModelKind::ComplEx => {
            let d = h.len() / 2;
            for k in 0..d {
                let (a, b) = (h[k], h[d + k]);
                let (c, e) = (r[k], r[d + k]);
                let (f, g) = (t[k], t[d + k]);
                // score_k = (ac − be)f + (ae + bc)g
                gh[k] += w * (c * f + e * g);
                gh[d + k] += w * (c * g - e * f);
                gr[k] += w * (a * f + b * g);
                gr[d + k] += w * (a * g - b * f);
                gt[k] += w * (a * c - b * e);
                gt[d + k] += w * (a * e + b * c);
            }
        }
        ModelKind::RotatE => {
            let d = h.len() / 2;
            let mut res = vec![0.0; 2 * d];
            let mut sq = 0.0;
            for k in 0..d {
                let (s, c) = r[k].sin_cos();
                res[k] = h[k] * c - h[d + k] * s - t[k];
                res[d + k] = h[k] * s + h[d + k] * c - t[d + k];
                sq += res[k] * res[k] + res[d + k] * res[d + k];
            }
            let norm = sq.sqrt();
            if norm == 0.0 {
                return;
            }
            let scale = -w / norm;
            for k in 0..d {
                let (s, c) = r[k].sin_cos();
                let (dr, di) = (res[k], res[d + k]);
                let (a, b) = (h[k], h[d + k]);
                gh[k] += scale * (dr * c + di * s);
                gh[d + k] += scale * (-dr * s + di * c);
                gr[k] += scale * (dr * (-a * s - b * c) + di * (a * c - b * s));
                gt[k] -= scale * dr;
                gt[d + k] -= scale * di;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distmult_scores_zero() {
        assert_eq!(score(ModelKind::DistMult, &[0.0; 4], &[0.0; 4], &[0.0; 4]), 0.0);
    }

    #[test]
    fn exact_translation_is_the_maximum() {
        let h = [0.5, -1.0, 2.0];
        let r = [0.25, 1.0, -3.0];
        let t: Vec<f64> = h.iter().zip(&r).map(|(a, b)| a + b).collect();
        assert_eq!(score(ModelKind::TransE, &h, &r, &t), 0.0);
        assert!(score(ModelKind::TransE, &h, &r, &[0.0; 3]) < 0.0);
    }

    #[test]
    fn complex_unit_example() {
        // dim 1: h = r = t = 1 + 0i
        assert_eq!(score(ModelKind::ComplEx, &[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]), 1.0);
        // h = i, r = i, t = -1: i·i·conj(-1) = 1
        assert_eq!(score(ModelKind::ComplEx, &[0.0, 1.0], &[0.0, 1.0], &[-1.0, 0.0]), 1.0);
    }

    #[test]
    fn rotate_by_zero_phase_is_translation_free_distance() {
        let h = [1.0, 2.0, 0.0, 0.0];
        let t = [1.0, 2.0, 0.0, 0.0];
        assert_eq!(score(ModelKind::RotatE, &h, &[0.0, 0.0], &t), 0.0);
        // rotating (1, 0) by π/2 lands on (0, 1)
        let s = score(ModelKind::RotatE, &[1.0, 0.0], &[std::f64::consts::FRAC_PI_2], &[0.0, 1.0]);
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn init_respects_bounds_and_widths() {
        let mut cfg = KgeConfig::new(ModelKind::RotatE);
        cfg.dim = 8;
        let m = KgeModel::init(cfg, 5, 2);
        assert_eq!(m.entity_emb.len(), 5 * 16);
        assert_eq!(m.relation_emb.len(), 2 * 8);
        assert!(m.entity_emb.iter().all(|x| x.abs() <= 0.5 / 8.0));
        assert!(m.relation_emb.iter().all(|x| (0.0..TAU).contains(x)));
    }

    #[test]
    fn grid_has_every_combination() {
        let g = KgeConfig::search_grid(ModelKind::ComplEx);
        assert_eq!(g.len(), 48);
        assert!(g.iter().all(|c| c.batch_size == 512));
    }

    #[test]
    fn kind_parsing() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("conve".parse::<ModelKind>().is_err());
    }
}
