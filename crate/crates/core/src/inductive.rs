//! Inductive completion: entities with no training edges receive the
//! trained embedding of their most text-similar seen entity of the same
//! type.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph};
use crate::io;
use crate::kge::KgeModel;
use crate::rng;
use crate::splits::Split;

/// External text vectors keyed by entity key, all of one width.
#[derive(Clone, Debug, PartialEq)]
pub struct TextEmbeddings {
    pub encoder: String,
    pub mode: String,
    pub pooling: String,
    pub width: usize,
    pub keys: Vec<String>,
    /// Row-major `keys.len() × width`, held at f32 precision.
    pub vectors: Vec<f64>,
    index: HashMap<String, usize>,
}

impl TextEmbeddings {
    pub fn new(
        encoder: &str,
        mode: &str,
        pooling: &str,
        width: usize,
        keys: Vec<String>,
        vectors: Vec<f64>,
    ) -> Result<TextEmbeddings> {
        if vectors.len() != keys.len() * width {
            return Err(Error::Invalid(format!(
                "{} values for {} keys of width {width}",
                vectors.len(),
                keys.len()
            )));
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate text-embedding key `{k}`")));
            }
        }
        Ok(TextEmbeddings {
            encoder: encoder.to_string(),
            mode: mode.to_string(),
            pooling: pooling.to_string(),
            width,
            keys,
            vectors: vectors.into_iter().map(|v| v as f32 as f64).collect(),
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.index
            .get(key)
            .map(|&i| &self.vectors[i * self.width..(i + 1) * self.width])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextEmbeddingManifest {
    pub encoder: String,
    pub mode: String,
    pub pooling: String,
    pub width: usize,
    pub n_entities: usize,
    pub keys: Vec<String>,
    pub vectors_file: String,
    pub vectors_sha256: String,
}

/// Writes the manifest to `manifest_path` and the vectors as a
/// little-endian f32 block named `<stem>.f32` beside it.
pub fn write_text_embeddings(emb: &TextEmbeddings, manifest_path: &Path) -> Result<TextEmbeddingManifest> {
    let stem = manifest_path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".json"))
        .unwrap_or("text_emb");
    let vectors_file = format!("{stem}.f32");
    let bytes = io::encode_f32(&emb.vectors);
    io::write_bytes(&manifest_path.parent().unwrap_or(Path::new(".")).join(&vectors_file), &bytes)?;
    let manifest = TextEmbeddingManifest {
        encoder: emb.encoder.clone(),
        mode: emb.mode.clone(),
        pooling: emb.pooling.clone(),
        width: emb.width,
        n_entities: emb.len(),
        keys: emb.keys.clone(),
        vectors_file,
        vectors_sha256: io::sha256_hex(&bytes),
    };
    io::write_json(manifest_path, &manifest)?;
    Ok(manifest)
}

pub fn read_text_embeddings(manifest_path: &Path) -> Result<TextEmbeddings> {
    let m: TextEmbeddingManifest = io::read_json(manifest_path)?;
    if m.keys.len() != m.n_entities {
        return Err(Error::Invalid(format!(
            "{}: {} keys but n_entities = {}",
            manifest_path.display(),
            m.keys.len(),
            m.n_entities
        )));
    }
    let path = manifest_path.parent().unwrap_or(Path::new(".")).join(&m.vectors_file);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let found = io::sha256_hex(&bytes);
    if found != m.vectors_sha256 {
        return Err(Error::HashMismatch {
            artifact: path.display().to_string(),
            expected: m.vectors_sha256,
            found,
        });
    }
    let vectors = io::read_f32_block(&path, m.n_entities * m.width)?;
    TextEmbeddings::new(&m.encoder, &m.mode, &m.pooling, m.width, m.keys, vectors)
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!("vector widths differ: {} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub entity: String,
    pub neighbor: String,
    pub similarity: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub imputed: Vec<Imputation>,
}

/// Entities that occur in a training triple, and the rest, both in id order.
pub fn seen_unseen(kg: &KnowledgeGraph, split: &Split) -> (Vec<EntityId>, Vec<EntityId>) {
    let mut seen = vec![false; kg.num_entities()];
    for t in &split.train {
        seen[t.head.index()] = true;
        seen[t.tail.index()] = true;
    }
    kg.entities().iter().map(|e| e.id).partition(|e| seen[e.index()])
}

fn vector_of<'a>(kg: &KnowledgeGraph, text: &'a TextEmbeddings, e: EntityId) -> Result<&'a [f64]> {
    let key = &kg.entity(e)?.key;
    text.get(key).ok_or_else(|| Error::MissingVector(key.clone()))
}

/// Copies into every unseen entity's row the row of the seen entity of the
/// same type with the most similar text vector (lowest id on ties). Seen
/// rows are left as they are.
pub fn impute_embeddings(
    model: &KgeModel,
    kg: &KnowledgeGraph,
    text: &TextEmbeddings,
    seen: &[EntityId],
    unseen: &[EntityId],
) -> Result<(KgeModel, ImputationReport)> {
    let mut by_type: Vec<Vec<(EntityId, &[f64], f64)>> = vec![Vec::new(); kg.types().len()];
    let mut seen_sorted = seen.to_vec();
    seen_sorted.sort_unstable();
    seen_sorted.dedup();
    for &e in &seen_sorted {
        let v = vector_of(kg, text, e)?;
        let n = norm(v);
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        by_type[kg.type_index(e)].push((e, v, n));
    }
    let pick = |u: EntityId| -> Result<(EntityId, f64)> {
        let v = vector_of(kg, text, u)?;
        let nu = norm(v);
        if nu == 0.0 {
            return Err(Error::ZeroVector);
        }
        let ty = kg.type_index(u);
        let mut best: Option<(EntityId, f64)> = None;
        for &(e, w, ne) in &by_type[ty] {
            let sim = (v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / (nu * ne)).clamp(-1.0, 1.0);
            if best.is_none_or(|(_, s)| sim > s) {
                best = Some((e, sim));
            }
        }
        best.ok_or_else(|| Error::NoSameTypeNeighbor(format!("{} (type {})", kg.entity(u).map_or("?", |r| &r.key), kg.types()[ty])))
    };
    #[cfg(feature = "parallel")]
    let picks: Vec<Result<(EntityId, f64)>> = {
        use rayon::prelude::*;
        unseen.par_iter().map(|&u| pick(u)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let picks: Vec<Result<(EntityId, f64)>> = unseen.iter().map(|&u| pick(u)).collect();

    let mut out = model.clone();
    let mut report = ImputationReport::default();
    for (&u, p) in unseen.iter().zip(picks) {
        let (n, sim) = p?;
        let row = model.entity(n).to_vec();
        out.entity_mut(u).copy_from_slice(&row);
        report.imputed.push(Imputation {
            entity: kg.entity(u)?.key.clone(),
            neighbor: kg.entity(n)?.key.clone(),
            similarity: sim,
        });
    }
    Ok((out, report))
}

/// Fills unseen rows with fresh draws from the initialization distribution.
pub fn random_baseline(model: &KgeModel, unseen: &[EntityId], seed: u64) -> KgeModel {
    let mut out = model.clone();
    let mut r = rng::substream(seed, &[0xBA5E]);
    for &u in unseen {
        out.redraw_entity(u, &mut r);
    }
    out
}
