use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{KgeConfig, KgeModel};
use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;
use crate::io;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub config: KgeConfig,
    pub entity_keys: Vec<String>,
    pub relation_labels: Vec<String>,
    pub entity_width: usize,
    pub relation_width: usize,
    pub best_valid_mrr: Option<f64>,
    pub step: usize,
    pub entity_file: String,
    pub relation_file: String,
}

/// Writes `manifest.json`, `entities.f32` and `relations.f32` into `dir`.
pub fn save_model(
    model: &KgeModel,
    kg: &KnowledgeGraph,
    dir: &Path,
    best_valid_mrr: Option<f64>,
    step: usize,
) -> Result<ModelManifest> {
    let manifest = ModelManifest {
        config: model.config.clone(),
        entity_keys: kg.entities().iter().map(|e| e.key.clone()).collect(),
        relation_labels: kg.relations().iter().map(|r| r.label.clone()).collect(),
        entity_width: model.entity_width(),
        relation_width: model.relation_width(),
        best_valid_mrr,
        step,
        entity_file: "entities.f32".into(),
        relation_file: "relations.f32".into(),
    };
    io::write_f32_block(&dir.join(&manifest.entity_file), &model.entity_emb)?;
    io::write_f32_block(&dir.join(&manifest.relation_file), &model.relation_emb)?;
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Loads a model saved by [`save_model`], checking that its key order
/// matches `kg`.
pub fn load_model(dir: &Path, kg: &KnowledgeGraph) -> Result<(KgeModel, ModelManifest)> {
    let manifest: ModelManifest = io::read_json(&dir.join("manifest.json"))?;
    let keys_match = manifest.entity_keys.len() == kg.num_entities()
        && manifest.entity_keys.iter().zip(kg.entities()).all(|(k, e)| *k == e.key);
    let rels_match = manifest.relation_labels.len() == kg.num_relations()
        && manifest.relation_labels.iter().zip(kg.relations()).all(|(l, r)| *l == r.label);
    if !keys_match || !rels_match {
        return Err(Error::Invalid(format!(
            "{}: entity/relation order does not match the loaded graph",
            dir.display()
        )));
    }
    let kind = manifest.config.model_kind;
    let ew = kind.entity_width(manifest.config.dim);
    let rw = kind.relation_width(manifest.config.dim);
    if (ew, rw) != (manifest.entity_width, manifest.relation_width) {
        return Err(Error::Invalid(format!("{}: widths disagree with config", dir.display())));
    }
    let entity_emb = io::read_f32_block(&dir.join(&manifest.entity_file), ew * kg.num_entities())?;
    let relation_emb = io::read_f32_block(&dir.join(&manifest.relation_file), rw * kg.num_relations())?;
    let model = KgeModel {
        config: manifest.config.clone(),
        num_entities: kg.num_entities(),
        num_relations: kg.num_relations(),
        entity_emb,
        relation_emb,
    };
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::kge::ModelKind;

    #[test]
    fn save_and_load_round_trip_at_f32_precision() {
        let mut b = GraphBuilder::new();
        for k in ["a", "b", "c"] {
            b.add_entity(k, "n", k, None).unwrap();
        }
        b.add_triple("a", "r", "b").unwrap();
        let kg = b.build();
        let mut cfg = KgeConfig::new(ModelKind::ComplEx);
        cfg.dim = 3;
        let m = KgeModel::init(cfg, 3, 1);
        let dir = tempfile::tempdir().unwrap();
        save_model(&m, &kg, dir.path(), Some(0.5), 7).unwrap();
        let (back, man) = load_model(dir.path(), &kg).unwrap();
        assert_eq!(man.step, 7);
        for (x, y) in m.entity_emb.iter().zip(&back.entity_emb) {
            assert_eq!(*x as f32, *y as f32);
        }
        let bytes = std::fs::read(dir.path().join("entities.f32")).unwrap();
        assert_eq!(bytes.len(), 3 * 6 * 4);
        assert_eq!(&bytes[..4], &(m.entity_emb[0] as f32).to_le_bytes());

        let other = kg.with_triples(vec![]);
        assert!(load_model(dir.path(), &other).is_ok());
        let mut b = GraphBuilder::new();
        b.add_entity("z", "n", "z", None).unwrap();
        assert!(load_model(dir.path(), &b.build()).is_err());
    }
}
