//! Train/valid/test splits and fixed negative candidate sets.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::io;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Transductive,
    Inductive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub mode: SplitMode,
    pub seed: u64,
    pub valid_frac: f64,
    pub test_frac: f64,
}

impl Split {
    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    /// Undirected training degree of every entity.
    pub fn train_degrees(&self, num_entities: usize) -> Vec<usize> {
        let mut deg = vec![0usize; num_entities];
        for t in &self.train {
            deg[t.head.index()] += 1;
            deg[t.tail.index()] += 1;
        }
        deg
    }
}

fn check_fractions(valid_frac: f64, test_frac: f64) -> Result<()> {
    let ok = |f: f64| f.is_finite() && (0.0..1.0).contains(&f);
    if !ok(valid_frac) || !ok(test_frac) || valid_frac + test_frac >= 1.0 || valid_frac + test_frac <= 0.0 {
        return Err(Error::Invalid(format!(
            "split fractions must be non-negative with 0 < valid + test < 1 (got {valid_frac} + {test_frac})"
        )));
    }
    Ok(())
}

/// Number of held-out edges and the valid share of them.
fn held_out_sizes(n: usize, valid_frac: f64, test_frac: f64) -> (usize, usize) {
    // Floor on the held-out count; 6,677 RepoDB edges at 80/10/10 give 5,342/667/668.
    let total = ((valid_frac + test_frac) * n as f64 + 1e-9).floor() as usize;
    let valid = (total as f64 * valid_frac / (valid_frac + test_frac) + 1e-9).floor() as usize;
    (total, valid)
}

/// Holds out edges one at a time, only when both endpoints keep at least one
/// training edge, so every entity stays in the training graph.
pub fn make_transductive_split(kg: &KnowledgeGraph, valid_frac: f64, test_frac: f64, seed: u64) -> Result<Split> {
    check_fractions(valid_frac, test_frac)?;
    let triples = kg.triples();
    let n = triples.len();
    let (target, n_valid) = held_out_sizes(n, valid_frac, test_frac);
    let mut rng = rng::seeded(seed);

    let mut degree = vec![0usize; kg.num_entities()];
    for t in triples {
        degree[t.head.index()] += 1;
        degree[t.tail.index()] += 1;
    }
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut removed_flag = vec![false; n];
    let mut removed = Vec::with_capacity(target);
    let max_rejections = 100 * n.max(1);
    let mut rejections = 0usize;

    while removed.len() < target {
        let pos = rng.gen_range(0..remaining.len());
        let idx = remaining[pos];
        let t = triples[idx];
        let (h, tl) = (t.head.index(), t.tail.index());
        let removable = if h == tl { degree[h] > 2 } else { degree[h] > 1 && degree[tl] > 1 };
        if removable {
            degree[h] -= 1;
            degree[tl] -= 1;
            remaining.swap_remove(pos);
            removed_flag[idx] = true;
            removed.push(t);
            rejections = 0;
        } else {
            rejections += 1;
            if rejections >= max_rejections {
                return Err(Error::SplitInfeasible(format!(
                    "{rejections} consecutive rejected edges after removing {} of {target}",
                    removed.len()
                )));
            }
        }
    }

    removed.shuffle(&mut rng);
    let test = removed.split_off(n_valid);
    let train = triples
        .iter()
        .zip(&removed_flag)
        .filter(|(_, &r)| !r)
        .map(|(t, _)| *t)
        .collect();
    Ok(Split {
        train,
        valid: removed,
        test,
        mode: SplitMode::Transductive,
        seed,
        valid_frac,
        test_frac,
    })
}

/// Entity-holdout split: a seeded random prefix of entities becomes unseen
/// and every triple touching an unseen entity leaves the training set.
///
/// The prefix length is the one whose held-out edge count is closest to the
/// requested valid + test size.
pub fn make_inductive_split(kg: &KnowledgeGraph, valid_frac: f64, test_frac: f64, seed: u64) -> Result<Split> {
    check_fractions(valid_frac, test_frac)?;
    let triples = kg.triples();
    let n = triples.len();
    let (target, _) = held_out_sizes(n, valid_frac, test_frac);
    let mut rng = rng::seeded(seed);

    let mut order: Vec<EntityId> = kg.entities().iter().map(|e| e.id).collect();
    order.shuffle(&mut rng);

    // held-out count after each prefix of `order`
    let mut counted = vec![false; n];
    let mut held = 0usize;
    let mut best = (usize::MAX, 0usize);
    for (k, &e) in order.iter().enumerate() {
        for i in kg.incident(e) {
            if !counted[i] {
                counted[i] = true;
                held += 1;
            }
        }
        let gap = held.abs_diff(target);
        if gap < best.0 {
            best = (gap, k + 1);
        }
        if held >= target {
            break;
        }
    }
    let prefix = best.1;
    if prefix == 0 || best.0 == usize::MAX {
        return Err(Error::SplitInfeasible("no entity holdout reaches the requested size".into()));
    }
    let unseen: HashSet<EntityId> = order[..prefix].iter().copied().collect();

    let mut train = Vec::new();
    let mut removed = Vec::new();
    for t in triples {
        if unseen.contains(&t.head) || unseen.contains(&t.tail) {
            removed.push(*t);
        } else {
            train.push(*t);
        }
    }
    if removed.is_empty() || train.is_empty() {
        return Err(Error::SplitInfeasible(format!(
            "entity holdout left {} training and {} held-out triples",
            train.len(),
            removed.len()
        )));
    }
    removed.shuffle(&mut rng);
    let n_valid = (removed.len() as f64 * valid_frac / (valid_frac + test_frac) + 1e-9).floor() as usize;
    let test = removed.split_off(n_valid);
    Ok(Split {
        train,
        valid: removed,
        test,
        mode: SplitMode::Inductive,
        seed,
        valid_frac,
        test_frac,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Head,
    Tail,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Head => "head",
            Side::Tail => "tail",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s {
            "head" => Some(Side::Head),
            "tail" => Some(Side::Tail),
            _ => None,
        }
    }

    /// The triple with the entity on this side replaced.
    pub fn replace(self, t: Triple, e: EntityId) -> Triple {
        match self {
            Side::Head => Triple { head: e, ..t },
            Side::Tail => Triple { tail: e, ..t },
        }
    }

    pub fn entity(self, t: Triple) -> EntityId {
        match self {
            Side::Head => t.head,
            Side::Tail => t.tail,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripleNegatives {
    pub head: Vec<EntityId>,
    pub tail: Vec<EntityId>,
}

impl TripleNegatives {
    pub fn side(&self, side: Side) -> &[EntityId] {
        match side {
            Side::Head => &self.head,
            Side::Tail => &self.tail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub query_index: usize,
    pub side: Side,
    pub available: usize,
}

/// Fixed negatives for one list of evaluation positives.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeSets {
    pub m_eval: usize,
    pub seed: u64,
    pub positives: Vec<Triple>,
    pub entries: Vec<TripleNegatives>,
}

/// One side of one evaluation positive with its candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingQuery {
    pub triple_index: usize,
    pub positive: Triple,
    pub side: Side,
    pub candidates: Vec<EntityId>,
}

impl RankingQuery {
    pub fn candidate_triple(&self, e: EntityId) -> Triple {
        self.side.replace(self.positive, e)
    }
}

/// Queries in canonical order (triple index, then head before tail), with
/// empty-pool sides excluded.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct QuerySet {
    pub queries: Vec<RankingQuery>,
    pub excluded: usize,
}

impl NegativeSets {
    /// Sides with fewer than `m_eval` candidates, including empty ones.
    pub fn shortfalls(&self) -> Vec<Shortfall> {
        let mut out = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            for side in [Side::Head, Side::Tail] {
                let n = e.side(side).len();
                if n < self.m_eval {
                    out.push(Shortfall {
                        query_index: i,
                        side,
                        available: n,
                    });
                }
            }
        }
        out
    }

    pub fn queries(&self) -> QuerySet {
        let mut set = QuerySet::default();
        for (i, (t, e)) in self.positives.iter().zip(&self.entries).enumerate() {
            for side in [Side::Head, Side::Tail] {
                let c = e.side(side);
                if c.is_empty() {
                    set.excluded += 1;
                } else {
                    set.queries.push(RankingQuery {
                        triple_index: i,
                        positive: *t,
                        side,
                        candidates: c.to_vec(),
                    });
                }
            }
        }
        set
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalNegatives {
    pub valid: NegativeSets,
    pub test: NegativeSets,
}

/// Lookup of known positives used to filter candidates.
pub struct PositiveIndex {
    tails: HashMap<(EntityId, RelationId), HashSet<EntityId>>,
    heads: HashMap<(RelationId, EntityId), HashSet<EntityId>>,
}

impl PositiveIndex {
    pub fn new<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut tails: HashMap<_, HashSet<_>> = HashMap::new();
        let mut heads: HashMap<_, HashSet<_>> = HashMap::new();
        for t in triples {
            tails.entry((t.head, t.rel)).or_default().insert(t.tail);
            heads.entry((t.rel, t.tail)).or_default().insert(t.head);
        }
        PositiveIndex { tails, heads }
    }

    pub fn is_positive(&self, t: &Triple) -> bool {
        self.tails
            .get(&(t.head, t.rel))
            .is_some_and(|s| s.contains(&t.tail))
    }

    fn known(&self, t: Triple, side: Side) -> Option<&HashSet<EntityId>> {
        match side {
            Side::Head => self.heads.get(&(t.rel, t.tail)),
            Side::Tail => self.tails.get(&(t.head, t.rel)),
        }
    }
}

/// Same-type, positive-filtered candidate pool for one side of a positive.
pub fn candidate_pool(kg: &KnowledgeGraph, index: &PositiveIndex, positive: Triple, side: Side) -> Vec<EntityId> {
    let original = side.entity(positive);
    let known = index.known(positive, side);
    kg.entities_of_type(kg.type_index(original))
        .iter()
        .copied()
        .filter(|&e| e != original && !known.is_some_and(|k| k.contains(&e)))
        .collect()
}

/// Draws `min(m_eval, |pool|)` negatives without replacement; the order is
/// the order of the seeded draw.
pub fn sample_side(
    kg: &KnowledgeGraph,
    index: &PositiveIndex,
    positive: Triple,
    side: Side,
    m_eval: usize,
    rng: &mut rng::Rng,
    query: usize,
) -> Result<Vec<EntityId>> {
    let pool = candidate_pool(kg, index, positive, side);
    if pool.is_empty() {
        return Err(Error::EmptyPool {
            query,
            side: side.as_str(),
        });
    }
    let take = m_eval.min(pool.len());
    Ok(rand::seq::index::sample(rng, pool.len(), take)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

const STREAM_VALID: u64 = 1;
const STREAM_TEST: u64 = 2;

/// Negatives for an arbitrary list of positives, filtered against `index`.
pub fn negatives_for(
    kg: &KnowledgeGraph,
    index: &PositiveIndex,
    positives: &[Triple],
    m_eval: usize,
    seed: u64,
    stream: u64,
) -> NegativeSets {
    let one = |(i, t): (usize, &Triple)| {
        let mut entry = TripleNegatives::default();
        for (k, side) in [Side::Head, Side::Tail].into_iter().enumerate() {
            let mut r = rng::substream(seed, &[stream, i as u64, k as u64]);
            let drawn = match sample_side(kg, index, *t, side, m_eval, &mut r, i) {
                Ok(v) => v,
                Err(e) => {
                    log::debug!("{e}");
                    Vec::new()
                }
            };
            match side {
                Side::Head => entry.head = drawn,
                Side::Tail => entry.tail = drawn,
            }
        }
        entry
    };
    #[cfg(feature = "parallel")]
    let entries = {
        use rayon::prelude::*;
        positives.par_iter().enumerate().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let entries = positives.iter().enumerate().map(one).collect();
    NegativeSets {
        m_eval,
        seed,
        positives: positives.to_vec(),
        entries,
    }
}

/// Fixed negatives for the valid and test positives of a split, filtered
/// against every positive in train, valid and test.
pub fn generate_negatives(kg: &KnowledgeGraph, split: &Split, m_eval: usize, seed: u64) -> Result<EvalNegatives> {
    if m_eval == 0 {
        return Err(Error::Invalid("m_eval must be positive".into()));
    }
    let index = PositiveIndex::new(split.all_triples());
    let valid = negatives_for(kg, &index, &split.valid, m_eval, seed, STREAM_VALID);
    let test = negatives_for(kg, &index, &split.test, m_eval, seed, STREAM_TEST);
    for (name, set) in [("valid", &valid), ("test", &test)] {
        let q = set.queries();
        if q.excluded > 0 {
            log::warn!("{name}: {} queries have an empty negative pool and are excluded", q.excluded);
        }
    }
    Ok(EvalNegatives { valid, test })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub mode: SplitMode,
    pub seed: u64,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

pub const SPLIT_PARTS: [&str; 3] = ["train", "valid", "test"];

pub fn write_split(kg: &KnowledgeGraph, split: &Split, dir: &Path) -> Result<()> {
    kg.write_triples(&split.train, &dir.join("train.tsv"))?;
    kg.write_triples(&split.valid, &dir.join("valid.tsv"))?;
    kg.write_triples(&split.test, &dir.join("test.tsv"))?;
    io::write_json(
        &dir.join("manifest.json"),
        &SplitManifest {
            mode: split.mode,
            seed: split.seed,
            valid_frac: split.valid_frac,
            test_frac: split.test_frac,
            train: split.train.len(),
            valid: split.valid.len(),
            test: split.test.len(),
        },
    )
}

pub fn read_split(kg: &KnowledgeGraph, dir: &Path) -> Result<Split> {
    let m: SplitManifest = io::read_json(&dir.join("manifest.json"))?;
    let split = Split {
        train: kg.parse_triples(&dir.join("train.tsv"))?,
        valid: kg.parse_triples(&dir.join("valid.tsv"))?,
        test: kg.parse_triples(&dir.join("test.tsv"))?,
        mode: m.mode,
        seed: m.seed,
        valid_frac: m.valid_frac,
        test_frac: m.test_frac,
    };
    if (split.train.len(), split.valid.len(), split.test.len()) != (m.train, m.valid, m.test) {
        return Err(Error::Invalid(format!("{}: split sizes disagree with manifest", dir.display())));
    }
    Ok(split)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativesManifest {
    pub m_eval: usize,
    pub seed: u64,
    pub n_triples: usize,
    /// Positives file, relative to the manifest's directory.
    pub positives_file: String,
    pub positives_sha256: String,
    /// Candidate TSV, relative to the manifest's directory.
    pub candidates_file: String,
    pub candidates_sha256: String,
    pub shortfalls: Vec<Shortfall>,
}

pub fn format_negatives(kg: &KnowledgeGraph, negs: &NegativeSets) -> String {
    let mut s = String::new();
    for (i, e) in negs.entries.iter().enumerate() {
        for side in [Side::Head, Side::Tail] {
            for c in e.side(side) {
                s.push_str(&format!("{i}\t{side}\t{}\n", kg.entities()[c.index()].key));
            }
        }
    }
    s
}

/// Writes the candidate TSV next to `manifest_path` and returns the manifest.
/// `positives_file` must already exist relative to the manifest directory.
pub fn write_negatives(
    kg: &KnowledgeGraph,
    negs: &NegativeSets,
    manifest_path: &Path,
    positives_file: &str,
    candidates_file: &str,
) -> Result<NegativesManifest> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let tsv = format_negatives(kg, negs);
    io::write_bytes(&dir.join(candidates_file), tsv.as_bytes())?;
    let manifest = NegativesManifest {
        m_eval: negs.m_eval,
        seed: negs.seed,
        n_triples: negs.positives.len(),
        positives_file: positives_file.to_string(),
        positives_sha256: io::sha256_file(&dir.join(positives_file))?,
        candidates_file: candidates_file.to_string(),
        candidates_sha256: io::sha256_hex(tsv.as_bytes()),
        shortfalls: negs.shortfalls(),
    };
    io::write_json(manifest_path, &manifest)?;
    Ok(manifest)
}

/// A negatives file loaded together with the hash of its manifest, which
/// score files bind to.
pub struct LoadedNegatives {
    pub sets: NegativeSets,
    pub manifest: NegativesManifest,
    pub manifest_sha256: String,
}

pub fn read_negatives(kg: &KnowledgeGraph, manifest_path: &Path) -> Result<LoadedNegatives> {
    let manifest_bytes = std::fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: NegativesManifest = serde_json::from_slice(&manifest_bytes).map_err(|source| Error::Json {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let positives_path = dir.join(&manifest.positives_file);
    let found = io::sha256_file(&positives_path)?;
    if found != manifest.positives_sha256 {
        return Err(Error::HashMismatch {
            artifact: positives_path.display().to_string(),
            expected: manifest.positives_sha256.clone(),
            found,
        });
    }
    let cand_path = dir.join(&manifest.candidates_file);
    let text = io::read_to_string(&cand_path)?;
    let found = io::sha256_hex(text.as_bytes());
    if found != manifest.candidates_sha256 {
        return Err(Error::HashMismatch {
            artifact: cand_path.display().to_string(),
            expected: manifest.candidates_sha256.clone(),
            found,
        });
    }
    let positives = kg.parse_triples(&positives_path)?;
    let sets = parse_negatives(kg, &text, &cand_path, positives, manifest.m_eval, manifest.seed)?;
    Ok(LoadedNegatives {
        sets,
        manifest,
        manifest_sha256: io::sha256_hex(&manifest_bytes),
    })
}

pub fn parse_negatives(
    kg: &KnowledgeGraph,
    text: &str,
    path: &Path,
    positives: Vec<Triple>,
    m_eval: usize,
    seed: u64,
) -> Result<NegativeSets> {
    let mut entries = vec![TripleNegatives::default(); positives.len()];
    for (line, cols) in io::tsv_rows(text) {
        if cols.len() != 3 {
            return Err(Error::malformed(path, line, format!("expected 3 columns, found {}", cols.len())));
        }
        let qi: usize = cols[0]
            .parse()
            .map_err(|_| Error::malformed(path, line, "bad query index"))?;
        let side = Side::parse(cols[1]).ok_or_else(|| Error::malformed(path, line, "side must be head|tail"))?;
        let e = kg.entity_by_key(cols[2]).ok_or_else(|| Error::MissingEntityMetadata {
            path: path.to_path_buf(),
            line,
            key: cols[2].to_string(),
        })?;
        let entry = entries
            .get_mut(qi)
            .ok_or_else(|| Error::malformed(path, line, format!("query index {qi} out of range")))?;
        match side {
            Side::Head => entry.head.push(e),
            Side::Tail => entry.tail.push(e),
        }
    }
    Ok(NegativeSets {
        m_eval,
        seed,
        positives,
        entries,
    })
}
