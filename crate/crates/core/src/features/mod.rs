//! Per-triple feature vectors for integrators: entity and relation types,
//! training-graph structure, entity text statistics and the positive's
//! score under each integrated model.

mod adamic_adar;
mod edit_distance;
mod pagerank;
mod text;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adamic_adar::{adamic_adar, adamic_adar_with, undirected_neighbors};
pub use edit_distance::edit_distance;
pub use pagerank::{pagerank, DEFAULT_DAMPING, DEFAULT_MAX_ITER, DEFAULT_TOL};
pub use text::{
    has_unknown_word, is_numeric, is_punctuation, text_feature_values, text_features, text_stats, TextStats, Vocab,
    TEXT_FEATURES,
};

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triple};
use crate::io;
use crate::scores::ScoreSet;
use crate::splits::{QuerySet, Side};

pub const SCHEMA_VERSION: &str = "kgc-features/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Numeric,
    OneHot,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: FeatureKind,
}

/// Column layout:
///
/// 1. `head_type=<T>` for every entity type in first-seen order, then
///    `tail_type=<T>`, then `relation=<R>` in relation id order;
/// 2. head/tail in- and out-degree, head/tail PageRank, Adamic-Adar,
///    edit distance between the two names;
/// 3. [`TEXT_FEATURES`] for the head (`head_` prefix) and the tail (`tail_`);
/// 4. `score:<model>` for each model in declared order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: String,
    pub columns: Vec<FeatureColumn>,
    pub model_names: Vec<String>,
}

impl FeatureSchema {
    pub fn new(kg: &KnowledgeGraph, model_names: &[String]) -> FeatureSchema {
        let mut columns = Vec::new();
        let mut push = |name: String, kind| columns.push(FeatureColumn { name, kind });
        for side in ["head", "tail"] {
            for ty in kg.types() {
                push(format!("{side}_type={ty}"), FeatureKind::OneHot);
            }
        }
        for r in kg.relations() {
            push(format!("relation={}", r.label), FeatureKind::OneHot);
        }
        for name in [
            "head_in_degree",
            "head_out_degree",
            "tail_in_degree",
            "tail_out_degree",
            "head_pagerank",
            "tail_pagerank",
            "adamic_adar",
            "name_edit_distance",
        ] {
            push(name.to_string(), FeatureKind::Numeric);
        }
        for side in ["head", "tail"] {
            for f in TEXT_FEATURES {
                push(format!("{side}_{f}"), FeatureKind::Numeric);
            }
        }
        for m in model_names {
            push(format!("score:{m}"), FeatureKind::Numeric);
        }
        FeatureSchema {
            version: SCHEMA_VERSION.to_string(),
            columns,
            model_names: model_names.to_vec(),
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Index of the first model-score column.
    pub fn score_offset(&self) -> usize {
        self.width() - self.model_names.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub triple: Triple,
}

/// Structural statistics of a training graph plus everything else the
/// featurizer needs. Build it from the training graph only.
pub struct FeatureContext<'a> {
    kg: &'a KnowledgeGraph,
    vocab: Option<&'a Vocab>,
    schema: FeatureSchema,
    in_degree: Vec<f64>,
    out_degree: Vec<f64>,
    pagerank: Vec<f64>,
    neighbors: Vec<Vec<u32>>,
}

impl<'a> FeatureContext<'a> {
    pub fn new(kg_train: &'a KnowledgeGraph, vocab: Option<&'a Vocab>, model_names: &[String]) -> Self {
        FeatureContext {
            kg: kg_train,
            vocab,
            schema: FeatureSchema::new(kg_train, model_names),
            in_degree: kg_train.entities().iter().map(|e| kg_train.in_degree(e.id) as f64).collect(),
            out_degree: kg_train.entities().iter().map(|e| kg_train.out_degree(e.id) as f64).collect(),
            pagerank: pagerank(kg_train, DEFAULT_DAMPING, DEFAULT_TOL, DEFAULT_MAX_ITER),
            neighbors: undirected_neighbors(kg_train),
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn pagerank(&self) -> &[f64] {
        &self.pagerank
    }

    pub fn featurize(&self, t: Triple, model_scores: &[f64]) -> Result<FeatureVector> {
        if model_scores.len() != self.schema.model_names.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} model scores for a schema with {} models",
                model_scores.len(),
                self.schema.model_names.len()
            )));
        }
        let head = self.kg.entity(t.head)?;
        let tail = self.kg.entity(t.tail)?;
        if t.rel.index() >= self.kg.num_relations() {
            return Err(Error::Invalid(format!("unknown relation id {}", t.rel.0)));
        }
        let n_types = self.kg.types().len();
        let mut v = vec![0.0; 2 * n_types + self.kg.num_relations()];
        v[self.kg.type_index(t.head)] = 1.0;
        v[n_types + self.kg.type_index(t.tail)] = 1.0;
        v[2 * n_types + t.rel.index()] = 1.0;
        let (h, ta) = (t.head.index(), t.tail.index());
        v.extend([
            self.in_degree[h],
            self.out_degree[h],
            self.in_degree[ta],
            self.out_degree[ta],
            self.pagerank[h],
            self.pagerank[ta],
            adamic_adar_with(&self.neighbors, t.head, t.tail),
            edit_distance(&head.name, &tail.name) as f64,
        ]);
        v.extend(text_feature_values(head, self.vocab));
        v.extend(text_feature_values(tail, self.vocab));
        v.extend_from_slice(model_scores);
        debug_assert_eq!(v.len(), self.schema.width());
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Invalid(format!(
                "feature `{}` is not finite for {:?}",
                self.schema.columns[i].name, t
            )));
        }
        Ok(FeatureVector { values: v, triple: t })
    }
}

pub fn featurize(ctx: &FeatureContext<'_>, t: Triple, model_scores: &[f64]) -> Result<FeatureVector> {
    ctx.featurize(t, model_scores)
}

/// One feature row per ranking query, built from the query's positive
/// triple and the positive's score under each model.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub schema: FeatureSchema,
    pub keys: Vec<(usize, Side)>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn build(ctx: &FeatureContext<'_>, queries: &QuerySet, score_sets: &[ScoreSet]) -> Result<FeatureMatrix> {
        for s in score_sets {
            s.check_queries(queries)?;
        }
        let names: Vec<&str> = score_sets.iter().map(|s| s.model_name.as_str()).collect();
        if names != ctx.schema.model_names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::SchemaMismatch(format!(
                "score sets {:?} do not match schema models {:?}",
                names, ctx.schema.model_names
            )));
        }
        let mut keys = Vec::with_capacity(queries.queries.len());
        let mut rows = Vec::with_capacity(queries.queries.len());
        let mut scores = vec![0.0; score_sets.len()];
        for (qi, q) in queries.queries.iter().enumerate() {
            for (s, set) in scores.iter_mut().zip(score_sets) {
                *s = set.queries[qi].positive;
            }
            keys.push((q.triple_index, q.side));
            rows.push(ctx.featurize(q.positive, &scores)?.values);
        }
        Ok(FeatureMatrix {
            schema: ctx.schema.clone(),
            keys,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("query_index\tside");
        for c in &self.schema.columns {
            s.push('\t');
            s.push_str(&c.name);
        }
        s.push('\n');
        for ((ti, side), row) in self.keys.iter().zip(&self.rows) {
            s.push_str(&format!("{ti}\t{side}"));
            for v in row {
                s.push_str(&format!("\t{v}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_tsv(schema: FeatureSchema, text: &str, path: &Path) -> Result<FeatureMatrix> {
        let mut rows_iter = io::tsv_rows(text);
        let (line, header) = rows_iter
            .next()
            .ok_or_else(|| Error::malformed(path, 1, "missing header row"))?;
        let expected: Vec<&str> = ["query_index", "side"].into_iter().chain(schema.names()).collect();
        if header != expected {
            return Err(Error::SchemaMismatch(format!(
                "{}:{line}: header does not match schema {}",
                path.display(),
                schema.version
            )));
        }
        let width = expected.len();
        let mut m = FeatureMatrix {
            schema,
            keys: Vec::new(),
            rows: Vec::new(),
        };
        for (line, cols) in rows_iter {
            if cols.len() != width {
                return Err(Error::malformed(path, line, format!("expected {width} columns, found {}", cols.len())));
            }
            let ti = cols[0].parse().map_err(|_| Error::malformed(path, line, "bad query index"))?;
            let side = Side::parse(cols[1]).ok_or_else(|| Error::malformed(path, line, "bad side"))?;
            let row = cols[2..]
                .iter()
                .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::malformed(path, line, "bad feature value"))?;
            m.keys.push((ti, side));
            m.rows.push(row);
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub schema: FeatureSchema,
    pub n_rows: usize,
    pub features_file: String,
    pub features_sha256: String,
}

/// Writes `<stem>.tsv` next to `manifest_path`.
pub fn write_features(m: &FeatureMatrix, manifest_path: &Path) -> Result<FeatureManifest> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let stem = manifest_path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".json").trim_end_matches(".manifest"))
        .unwrap_or("features");
    let features_file = format!("{stem}.tsv");
    let tsv = m.to_tsv();
    io::write_bytes(&dir.join(&features_file), tsv.as_bytes())?;
    let manifest = FeatureManifest {
        schema: m.schema.clone(),
        n_rows: m.len(),
        features_sha256: io::sha256_hex(tsv.as_bytes()),
        features_file,
    };
    io::write_json(manifest_path, &manifest)?;
    Ok(manifest)
}

pub fn read_features(manifest_path: &Path) -> Result<FeatureMatrix> {
    let manifest: FeatureManifest = io::read_json(manifest_path)?;
    if manifest.schema.version != SCHEMA_VERSION {
        return Err(Error::SchemaMismatch(format!(
            "feature schema {} is not {SCHEMA_VERSION}",
            manifest.schema.version
        )));
    }
    let path = manifest_path.parent().unwrap_or(Path::new(".")).join(&manifest.features_file);
    let text = io::read_to_string(&path)?;
    let found = io::sha256_hex(text.as_bytes());
    if found != manifest.features_sha256 {
        return Err(Error::HashMismatch {
            artifact: path.display().to_string(),
            expected: manifest.features_sha256,
            found,
        });
    }
    FeatureMatrix::from_tsv(manifest.schema, &text, &path)
}
