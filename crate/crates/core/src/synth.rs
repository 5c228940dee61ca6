//! Synthetic knowledge graphs with a known generating model.
//!
//! Triples are the highest-scoring ordered pairs under a randomly drawn
//! ComplEx model, so a learner of matching capacity can recover held-out
//! edges. Also builds the bundled demo dataset and a noisy-copy inductive
//! fixture in which every unseen entity mirrors one seen entity.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::graph::{EntityId, GraphBuilder, KnowledgeGraph, Triple};
use crate::inductive::TextEmbeddings;
use crate::kge::{score, ModelKind};
use crate::rng;
use crate::splits::{Split, SplitMode};

#[derive(Clone, Debug)]
pub struct PlantedConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    pub dim: usize,
    /// Fraction of ordered pairs (h ≠ t) kept as triples per relation.
    pub density: f64,
    /// Entities are drawn around this many shared centres (0: independent
    /// draws).
    pub clusters: usize,
    /// Standard deviation of each entity around its centre.
    pub spread: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_entities: 50,
            n_relations: 2,
            dim: 16,
            density: 0.08,
            clusters: 5,
            spread: 0.1,
            seed: 0,
        }
    }
}

fn gaussian(r: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

/// Planted ComplEx parameters: entity rows `[re…, im…]` of width `2·dim`.
pub struct Planted {
    pub dim: usize,
    pub entities: Vec<Vec<f64>>,
    pub relations: Vec<Vec<f64>>,
}

impl Planted {
    pub fn draw(n_entities: usize, n_relations: usize, dim: usize, r: &mut rng::Rng) -> Planted {
        Planted {
            dim,
            entities: (0..n_entities).map(|_| gaussian(r, 2 * dim)).collect(),
            relations: (0..n_relations).map(|_| gaussian(r, 2 * dim)).collect(),
        }
    }

    /// Entity `i` is centre `i mod clusters` plus Gaussian noise of width
    /// `spread`.
    pub fn draw_clustered(
        n_entities: usize,
        n_relations: usize,
        dim: usize,
        clusters: usize,
        spread: f64,
        r: &mut rng::Rng,
    ) -> Planted {
        if clusters == 0 {
            return Planted::draw(n_entities, n_relations, dim, r);
        }
        let centres: Vec<Vec<f64>> = (0..clusters).map(|_| gaussian(r, 2 * dim)).collect();
        let entities = (0..n_entities)
            .map(|i| {
                centres[i % clusters]
                    .iter()
                    .zip(gaussian(r, 2 * dim))
                    .map(|(c, e)| c + spread * e)
                    .collect()
            })
            .collect();
        Planted {
            dim,
            entities,
            relations: (0..n_relations).map(|_| gaussian(r, 2 * dim)).collect(),
        }
    }

    pub fn score(&self, h: usize, rel: usize, t: usize) -> f64 {
        score(ModelKind::ComplEx, &self.entities[h], &self.relations[rel], &self.entities[t])
    }
}

/// Midpoint of the widest gap between consecutive sorted scores, looking at
/// cuts that keep between `k / 2` and `2k` pairs.
fn gap_threshold(p: &Planted, rel: usize, n: usize, k: usize) -> f64 {
    let mut s: Vec<f64> = (0..n)
        .flat_map(|h| (0..n).map(move |t| p.score(h, rel, t)))
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let lo = (k / 2).max(1);
    let hi = (2 * k).min(s.len() - 1);
    let cut = (lo..=hi)
        .max_by(|&a, &b| (s[a - 1] - s[a]).total_cmp(&(s[b - 1] - s[b])).then(b.cmp(&a)))
        .unwrap_or(lo);
    0.5 * (s[cut - 1] + s[cut])
}

/// Single-typed planted graph with entity keys `e0…` and relations `r0…`.
pub fn planted_complex(cfg: &PlantedConfig) -> KnowledgeGraph {
    planted_complex_with_model(cfg).0
}

/// The planted graph together with the ComplEx model that generated it.
pub fn planted_complex_with_model(cfg: &PlantedConfig) -> (KnowledgeGraph, crate::kge::KgeModel) {
    let mut r = rng::substream(cfg.seed, &[0x91A7]);
    let p = Planted::draw_clustered(cfg.n_entities, cfg.n_relations, cfg.dim, cfg.clusters, cfg.spread, &mut r);
    let mut b = GraphBuilder::new();
    for i in 0..cfg.n_entities {
        b.add_entity(&format!("e{i}"), "node", &format!("entity {i}"), None)
            .expect("fresh keys");
    }
    let k = (cfg.density * (cfg.n_entities * cfg.n_entities) as f64).round() as usize;
    for rel in 0..cfg.n_relations {
        let label = format!("r{rel}");
        b.relation(&label);
        let th = gap_threshold(&p, rel, cfg.n_entities, k);
        for h in 0..cfg.n_entities {
            for t in 0..cfg.n_entities {
                if p.score(h, rel, t) >= th {
                    b.add_triple(&format!("e{h}"), &label, &format!("e{t}")).expect("known keys");
                }
            }
        }
    }
    let mut config = crate::kge::KgeConfig::new(crate::kge::ModelKind::ComplEx);
    config.dim = cfg.dim;
    let model = crate::kge::KgeModel {
        config,
        num_entities: cfg.n_entities,
        num_relations: cfg.n_relations,
        entity_emb: p.entities.concat(),
        relation_emb: p.relations.concat(),
    };
    (b.build(), model)
}

const SYLLABLES: [&str; 16] = [
    "ra", "vo", "zen", "mi", "tal", "dor", "qui", "fen", "lo", "bra", "ste", "nix", "pe", "ux", "cor", "al",
];
const DISEASE_SUFFIX: [&str; 5] = ["syndrome", "disease", "carcinoma", "deficiency", "fever"];
const DESC_WORDS: [&str; 12] = [
    "chronic", "inhibitor", "receptor", "agonist", "inflammatory", "kinase", "binding", "protein", "acute",
    "metabolic", "pathway", "disorder",
];

fn word(r: &mut rng::Rng, syllables: usize) -> String {
    (0..syllables).map(|_| *SYLLABLES.choose(r).unwrap()).collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
}

fn description(r: &mut rng::Rng) -> Option<String> {
    if r.gen_bool(0.4) {
        return None;
    }
    let n = r.gen_range(3..9);
    let mut words: Vec<String> = (0..n).map(|_| DESC_WORDS.choose(r).unwrap().to_string()).collect();
    if r.gen_bool(0.1) {
        words.insert(r.gen_range(0..words.len()), "unknown".into());
    }
    if r.gen_bool(0.3) {
        words.push(format!("(type {})", r.gen_range(1..40)));
    }
    let mut s = capitalize(&words.join(" "));
    s.push('.');
    Some(s)
}

/// Writes `triples.tsv` and `entities.tsv` into `dir`.
pub fn write_dataset(kg: &KnowledgeGraph, dir: &std::path::Path) -> crate::Result<()> {
    crate::io::write_bytes(&dir.join("triples.tsv"), kg.format_triples(kg.triples()).as_bytes())?;
    crate::io::write_bytes(&dir.join("entities.tsv"), kg.format_metadata().as_bytes())
}

/// The bundled demo graph: 20 drugs, 20 diseases and 20 genes joined by
/// 200 triples over three relations drawn from a planted ComplEx model,
/// with generated names and partially missing descriptions.
pub fn synthetic_dataset(seed: u64) -> KnowledgeGraph {
    let mut r = rng::substream(seed, &[0xDA7A]);
    let per_type = 20;
    let p = Planted::draw(3 * per_type, 3, 8, &mut r);
    let mut b = GraphBuilder::new();
    let mut used = std::collections::HashSet::new();
    for i in 0..3 * per_type {
        let ty = ["drug", "disease", "gene"][i / per_type];
        let key = dataset_key(i, per_type);
        let name = loop {
            let candidate = match ty {
                "drug" => capitalize(&(word(&mut r, 3) + ["mab", "pril", "vir", "ine"].choose(&mut r).unwrap())),
                "disease" => format!("{} {}", capitalize(&word(&mut r, 2)), DISEASE_SUFFIX.choose(&mut r).unwrap()),
                _ => format!("{}{}", word(&mut r, 2).to_uppercase(), r.gen_range(1..30)),
            };
            if used.insert(candidate.clone()) {
                break candidate;
            }
        };
        let desc = description(&mut r);
        b.add_entity(&key, ty, &name, desc.as_deref()).expect("fresh keys");
    }
    let keys: Vec<String> = (0..3 * per_type).map(|i| dataset_key(i, per_type)).collect();
    let range = |ty: usize| (ty * per_type..(ty + 1) * per_type).collect::<Vec<_>>();
    let (drugs, diseases, genes) = (range(0), range(1), range(2));
    for (rel, label, heads, tails, k) in [
        (0, "treats", &drugs, &diseases, 80),
        (1, "targets", &drugs, &genes, 60),
        (2, "associated_with", &genes, &diseases, 60),
    ] {
        let mut scored: Vec<(f64, usize, usize)> = heads
            .iter()
            .flat_map(|&h| tails.iter().map(move |&t| (h, t)))
            .map(|(h, t)| (p.score(h, rel, t), h, t))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        for &(_, h, t) in &scored[..k] {
            b.add_triple(&keys[h], label, &keys[t]).expect("known keys");
        }
    }
    b.build()
}

fn dataset_key(i: usize, per_type: usize) -> String {
    match i / per_type {
        0 => format!("DB{:05}", 100 + i),
        1 => format!("D{:06}", 4000 + i * 7),
        _ => format!("G{}", 1000 + i * 13),
    }
}

#[derive(Clone, Debug)]
pub struct NoisyCopyConfig {
    pub planted: PlantedConfig,
    /// Number of seen entities that receive an unseen twin.
    pub n_twins: usize,
    pub text_dim: usize,
    /// Standard deviation of the Gaussian noise added to a twin's text vector.
    pub noise: f64,
}

impl Default for NoisyCopyConfig {
    fn default() -> Self {
        NoisyCopyConfig {
            planted: PlantedConfig::default(),
            n_twins: 10,
            text_dim: 32,
            noise: 0.0,
        }
    }
}

pub struct InductiveFixture {
    pub kg: KnowledgeGraph,
    pub split: Split,
    pub text: TextEmbeddings,
    /// `(twin, original)` pairs; twins are the unseen entities.
    pub twins: Vec<(EntityId, EntityId)>,
}

/// Planted graph in which the last `n_twins` entities copy the planted
/// embedding of a distinct original. Training triples are those among
/// originals; every triple touching a twin is held out and split evenly
/// into validation and test. Each twin's text vector is its original's plus
/// Gaussian noise.
pub fn noisy_copy_inductive(cfg: &NoisyCopyConfig) -> InductiveFixture {
    let pc = &cfg.planted;
    let n = pc.n_entities;
    let mut r = rng::substream(pc.seed, &[0x7717]);
    let base = Planted::draw_clustered(n, pc.n_relations, pc.dim, pc.clusters, pc.spread, &mut r);
    let k = (pc.density * (n * n) as f64).round() as usize;
    let thresholds: Vec<f64> = (0..pc.n_relations).map(|rel| gap_threshold(&base, rel, n, k)).collect();
    let mut connected = vec![false; n];
    for (rel, &th) in thresholds.iter().enumerate() {
        for h in 0..n {
            for t in 0..n {
                if base.score(h, rel, t) >= th {
                    connected[h] = true;
                    connected[t] = true;
                }
            }
        }
    }
    let mut originals: Vec<usize> = (0..n).filter(|&i| connected[i]).collect();
    originals.shuffle(&mut r);
    originals.truncate(cfg.n_twins);
    let mut entities = base.entities.clone();
    entities.extend(originals.iter().map(|&o| base.entities[o].clone()));
    let p = Planted {
        dim: pc.dim,
        entities,
        relations: base.relations,
    };
    let total = n + originals.len();

    let mut b = GraphBuilder::new();
    let key = |i: usize| if i < n { format!("e{i}") } else { format!("u{}", i - n) };
    for i in 0..total {
        b.add_entity(&key(i), "node", &key(i), None).expect("fresh keys");
    }
    let (mut train, mut held) = (Vec::new(), Vec::new());
    let admissible = |i: usize| i >= n || connected[i];
    for (rel, &th) in thresholds.iter().enumerate() {
        let label = format!("r{rel}");
        b.relation(&label);
        for h in 0..total {
            for t in 0..total {
                if admissible(h) && admissible(t) && p.score(h, rel, t) >= th {
                    let tr = b.add_triple(&key(h), &label, &key(t)).expect("known keys");
                    if h < n && t < n {
                        train.push(tr);
                    } else {
                        held.push(tr);
                    }
                }
            }
        }
    }
    let kg = b.build();
    held.shuffle(&mut r);
    let test = held.split_off(held.len() / 2);

    let mut vectors = gaussian(&mut r, n * cfg.text_dim);
    for &o in &originals {
        let noise = gaussian(&mut r, cfg.text_dim);
        let row: Vec<f64> = vectors[o * cfg.text_dim..(o + 1) * cfg.text_dim]
            .iter()
            .zip(noise)
            .map(|(v, e)| v + cfg.noise * e)
            .collect();
        vectors.extend(row);
    }
    let text = TextEmbeddings::new(
        "synthetic",
        "noisy-copy",
        "none",
        cfg.text_dim,
        (0..total).map(key).collect(),
        vectors,
    )
    .expect("consistent sizes");
    let twins = originals
        .iter()
        .enumerate()
        .map(|(i, &o)| (EntityId((n + i) as u32), EntityId(o as u32)))
        .collect();
    let held_frac = (held.len() + test.len()) as f64 / kg.triples().len().max(1) as f64;
    InductiveFixture {
        split: Split {
            train,
            valid: held,
            test,
            mode: SplitMode::Inductive,
            seed: pc.seed,
            valid_frac: held_frac / 2.0,
            test_frac: held_frac / 2.0,
        },
        kg,
        text,
        twins,
    }
}

/// Random triples over typed entities, for property tests of splits and
/// negatives.
pub fn random_kg(n_entities: usize, n_types: usize, n_relations: usize, n_triples: usize, seed: u64) -> KnowledgeGraph {
    let mut r = rng::substream(seed, &[0x4A4D]);
    let mut b = GraphBuilder::new();
    for i in 0..n_entities {
        b.add_entity(&format!("n{i}"), &format!("t{}", i % n_types.max(1)), &format!("node {i}"), None)
            .expect("fresh keys");
    }
    for _ in 0..n_triples {
        let h = r.gen_range(0..n_entities);
        let t = r.gen_range(0..n_entities);
        let rel = r.gen_range(0..n_relations.max(1));
        b.add_triple(&format!("n{h}"), &format!("r{rel}"), &format!("n{t}")).expect("known keys");
    }
    b.build()
}

/// Every triple of `kg` whose head and tail are both in `keep`.
pub fn restrict(kg: &KnowledgeGraph, keep: &[bool]) -> Vec<Triple> {
    kg.triples()
        .iter()
        .copied()
        .filter(|t| keep[t.head.index()] && keep[t.tail.index()])
        .collect()
}
