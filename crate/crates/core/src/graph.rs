//! Typed knowledge graphs with entity text.
//!
//! Entities get dense ids in the order they appear in the metadata file and
//! relations in the order they first appear in the triples file. The graph is
//! immutable once built; derived graphs (e.g. the training graph of a split)
//! share the entity and relation tables through [`KnowledgeGraph::with_triples`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityRecord {
    pub id: EntityId,
    /// Identifier in the source dataset.
    pub key: String,
    pub etype: String,
    pub name: String,
    pub description: Option<String>,
}

impl EntityRecord {
    pub fn new(
        id: EntityId,
        key: impl Into<String>,
        etype: impl Into<String>,
        name: &str,
        description: Option<&str>,
    ) -> Self {
        EntityRecord {
            id,
            key: key.into(),
            etype: etype.into(),
            name: name.trim().to_string(),
            description: description
                .map(str::trim)
                .filter(|d| !d.is_empty())
                .map(str::to_string),
        }
    }

    pub fn has_description(&self) -> bool {
        self.description.is_some()
    }
}

/// Text used for an entity: its name, followed by a single space and the
/// description when one is available.
pub fn entity_text(rec: &EntityRecord) -> String {
    let name = rec.name.trim();
    match rec.description.as_deref().map(str::trim) {
        Some(desc) if !desc.is_empty() => format!("{name} {desc}"),
        _ => name.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub id: RelationId,
    pub label: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub rel: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: u32, rel: u32, tail: u32) -> Self {
        Triple {
            head: EntityId(head),
            rel: RelationId(rel),
            tail: EntityId(tail),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Both,
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vec<EntityRecord>,
    relations: Vec<Relation>,
    types: Vec<String>,
    entity_type: Vec<u32>,
    by_type: Vec<Vec<EntityId>>,
    key_index: HashMap<String, EntityId>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    // Triple indices incident to each entity.
    out_adj: Vec<Vec<u32>>,
    in_adj: Vec<Vec<u32>>,
    duplicates_dropped: usize,
}

/// Incremental construction of a graph from in-memory records.
#[derive(Default)]
pub struct GraphBuilder {
    entities: Vec<EntityRecord>,
    key_index: HashMap<String, EntityId>,
    relations: Vec<Relation>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(
        &mut self,
        key: &str,
        etype: &str,
        name: &str,
        description: Option<&str>,
    ) -> Result<EntityId> {
        if self.key_index.contains_key(key) {
            return Err(Error::Invalid(format!("duplicate entity key `{key}`")));
        }
        if name.trim().is_empty() {
            return Err(Error::Invalid(format!("entity `{key}` has an empty name")));
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities
            .push(EntityRecord::new(id, key, etype.trim(), name, description));
        self.key_index.insert(key.to_string(), id);
        Ok(id)
    }

    pub fn relation(&mut self, label: &str) -> RelationId {
        if let Some(&r) = self.relation_index.get(label) {
            return r;
        }
        let id = RelationId(self.relations.len() as u32);
        self.relations.push(Relation {
            id,
            label: label.to_string(),
        });
        self.relation_index.insert(label.to_string(), id);
        id
    }

    pub fn entity(&self, key: &str) -> Option<EntityId> {
        self.key_index.get(key).copied()
    }

    pub fn add_triple(&mut self, head: &str, rel: &str, tail: &str) -> Result<Triple> {
        let h = self
            .entity(head)
            .ok_or_else(|| Error::UnknownEntityKey(head.to_string()))?;
        let t = self
            .entity(tail)
            .ok_or_else(|| Error::UnknownEntityKey(tail.to_string()))?;
        let r = self.relation(rel);
        let triple = Triple { head: h, rel: r, tail: t };
        self.triples.push(triple);
        Ok(triple)
    }

    pub fn build(self) -> KnowledgeGraph {
        KnowledgeGraph::assemble(self.entities, self.relations, self.triples)
    }
}

impl KnowledgeGraph {
    fn assemble(entities: Vec<EntityRecord>, relations: Vec<Relation>, raw: Vec<Triple>) -> Self {
        let mut types: Vec<String> = Vec::new();
        let mut type_index: HashMap<String, u32> = HashMap::new();
        let mut entity_type = Vec::with_capacity(entities.len());
        let mut by_type: Vec<Vec<EntityId>> = Vec::new();
        for rec in &entities {
            let ti = *type_index.entry(rec.etype.clone()).or_insert_with(|| {
                types.push(rec.etype.clone());
                by_type.push(Vec::new());
                (types.len() - 1) as u32
            });
            entity_type.push(ti);
            by_type[ti as usize].push(rec.id);
        }
        let key_index = entities.iter().map(|e| (e.key.clone(), e.id)).collect();
        let relation_index = relations.iter().map(|r| (r.label.clone(), r.id)).collect();

        let mut kg = KnowledgeGraph {
            out_adj: vec![Vec::new(); entities.len()],
            in_adj: vec![Vec::new(); entities.len()],
            entities,
            relations,
            types,
            entity_type,
            by_type,
            key_index,
            relation_index,
            triples: Vec::new(),
            triple_set: HashSet::new(),
            duplicates_dropped: 0,
        };
        kg.set_triples(raw);
        kg
    }

    fn set_triples(&mut self, raw: Vec<Triple>) {
        self.triples.clear();
        self.triple_set.clear();
        self.duplicates_dropped = 0;
        for adj in self.out_adj.iter_mut().chain(self.in_adj.iter_mut()) {
            adj.clear();
        }
        for t in raw {
            if !self.triple_set.insert(t) {
                self.duplicates_dropped += 1;
                continue;
            }
            let idx = self.triples.len() as u32;
            self.out_adj[t.head.index()].push(idx);
            self.in_adj[t.tail.index()].push(idx);
            self.triples.push(t);
        }
    }

    /// A graph over the same entities and relations with a different triple
    /// list (duplicates dropped).
    pub fn with_triples(&self, triples: impl IntoIterator<Item = Triple>) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph {
            entities: self.entities.clone(),
            relations: self.relations.clone(),
            types: self.types.clone(),
            entity_type: self.entity_type.clone(),
            by_type: self.by_type.clone(),
            key_index: self.key_index.clone(),
            relation_index: self.relation_index.clone(),
            triples: Vec::new(),
            triple_set: HashSet::new(),
            out_adj: vec![Vec::new(); self.entities.len()],
            in_adj: vec![Vec::new(); self.entities.len()],
            duplicates_dropped: 0,
        };
        kg.set_triples(triples.into_iter().collect());
        kg
    }

    pub fn entities(&self) -> &[EntityRecord] {
        &self.entities
    }

    pub fn entity(&self, e: EntityId) -> Result<&EntityRecord> {
        self.entities.get(e.index()).ok_or(Error::UnknownEntity(e.0))
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    /// Entity types in first-seen order.
    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn type_index(&self, e: EntityId) -> usize {
        self.entity_type[e.index()] as usize
    }

    pub fn entities_of_type(&self, type_index: usize) -> &[EntityId] {
        &self.by_type[type_index]
    }

    pub fn entity_by_key(&self, key: &str) -> Option<EntityId> {
        self.key_index.get(key).copied()
    }

    pub fn relation_by_label(&self, label: &str) -> Option<RelationId> {
        self.relation_index.get(label).copied()
    }

    pub fn out_triples(&self, e: EntityId) -> impl Iterator<Item = &Triple> + '_ {
        self.out_adj[e.index()].iter().map(|&i| &self.triples[i as usize])
    }

    pub fn in_triples(&self, e: EntityId) -> impl Iterator<Item = &Triple> + '_ {
        self.in_adj[e.index()].iter().map(|&i| &self.triples[i as usize])
    }

    /// Indices into [`Self::triples`] of triples with `e` as head or tail
    /// (self-loops appear twice).
    pub fn incident(&self, e: EntityId) -> impl Iterator<Item = usize> + '_ {
        self.out_adj[e.index()]
            .iter()
            .chain(&self.in_adj[e.index()])
            .map(|&i| i as usize)
    }

    pub fn out_degree(&self, e: EntityId) -> usize {
        self.out_adj[e.index()].len()
    }

    pub fn in_degree(&self, e: EntityId) -> usize {
        self.in_adj[e.index()].len()
    }

    /// Distinct neighbours in the requested direction.
    pub fn neighbors(&self, e: EntityId, direction: Direction) -> Result<BTreeSet<EntityId>> {
        if e.index() >= self.entities.len() {
            return Err(Error::UnknownEntity(e.0));
        }
        let mut out = BTreeSet::new();
        if matches!(direction, Direction::Out | Direction::Both) {
            out.extend(self.out_triples(e).map(|t| t.tail));
        }
        if matches!(direction, Direction::In | Direction::Both) {
            out.extend(self.in_triples(e).map(|t| t.head));
        }
        Ok(out)
    }

    /// Parses `head_key \t relation \t tail_key` lines against this graph's
    /// entity and relation tables.
    pub fn parse_triples(&self, path: &Path) -> Result<Vec<Triple>> {
        let text = io::read_to_string(path)?;
        let mut out = Vec::new();
        for (line, cols) in io::tsv_rows(&text) {
            if cols.len() != 3 {
                return Err(Error::malformed(path, line, format!("expected 3 columns, found {}", cols.len())));
            }
            let resolve = |key: &str| {
                self.entity_by_key(key).ok_or_else(|| Error::MissingEntityMetadata {
                    path: path.to_path_buf(),
                    line,
                    key: key.to_string(),
                })
            };
            let head = resolve(cols[0])?;
            let tail = resolve(cols[2])?;
            let rel = self
                .relation_by_label(cols[1])
                .ok_or_else(|| Error::malformed(path, line, format!("unknown relation `{}`", cols[1])))?;
            out.push(Triple { head, rel, tail });
        }
        Ok(out)
    }

    pub fn format_triples(&self, triples: &[Triple]) -> String {
        let mut s = String::new();
        for t in triples {
            s.push_str(&self.entities[t.head.index()].key);
            s.push('\t');
            s.push_str(&self.relations[t.rel.index()].label);
            s.push('\t');
            s.push_str(&self.entities[t.tail.index()].key);
            s.push('\n');
        }
        s
    }

    pub fn write_triples(&self, triples: &[Triple], path: &Path) -> Result<()> {
        io::write_bytes(path, self.format_triples(triples).as_bytes())
    }

    pub fn format_metadata(&self) -> String {
        let mut s = String::new();
        for e in &self.entities {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.key,
                e.etype,
                e.name,
                e.description.as_deref().unwrap_or("")
            ));
        }
        s
    }
}

/// Loads a graph from a triples TSV (`head \t relation \t tail`) and an
/// entity metadata TSV (`key \t type \t name \t description`).
pub fn load_graph(triples_path: &Path, metadata_path: &Path) -> Result<KnowledgeGraph> {
    let meta = io::read_to_string(metadata_path)?;
    let mut builder = GraphBuilder::new();
    for (line, cols) in io::tsv_rows(&meta) {
        if cols.len() != 4 {
            return Err(Error::malformed(
                metadata_path,
                line,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let key = cols[0].trim();
        if key.is_empty() {
            return Err(Error::malformed(metadata_path, line, "empty entity key"));
        }
        if cols[1].trim().is_empty() {
            return Err(Error::malformed(metadata_path, line, "empty entity type"));
        }
        builder
            .add_entity(key, cols[1], cols[2], Some(cols[3]))
            .map_err(|e| Error::malformed(metadata_path, line, e.to_string()))?;
    }

    let text = io::read_to_string(triples_path)?;
    for (line, cols) in io::tsv_rows(&text) {
        if cols.len() != 3 {
            return Err(Error::malformed(
                triples_path,
                line,
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        for key in [cols[0], cols[2]] {
            if builder.entity(key).is_none() {
                return Err(Error::MissingEntityMetadata {
                    path: triples_path.to_path_buf(),
                    line,
                    key: key.to_string(),
                });
            }
        }
        if cols[1].is_empty() {
            return Err(Error::malformed(triples_path, line, "empty relation label"));
        }
        builder.add_triple(cols[0], cols[1], cols[2])?;
    }
    let kg = builder.build();
    if kg.duplicates_dropped() > 0 {
        log::warn!(
            "{}: dropped {} duplicate triples",
            triples_path.display(),
            kg.duplicates_dropped()
        );
    }
    Ok(kg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        for k in ["a", "b", "c", "d"] {
            b.add_entity(k, "node", k, None).unwrap();
        }
        b.add_triple("a", "r", "b").unwrap();
        b.add_triple("b", "r", "c").unwrap();
        b.build()
    }

    #[test]
    fn entity_text_rules() {
        let id = EntityId(0);
        assert_eq!(entity_text(&EntityRecord::new(id, "k", "t", "aspirin", None)), "aspirin");
        assert_eq!(
            entity_text(&EntityRecord::new(id, "k", "t", "aspirin", Some("analgesic drug"))),
            "aspirin analgesic drug"
        );
        assert_eq!(entity_text(&EntityRecord::new(id, "k", "t", "  x ", None)), "x");
        assert_eq!(entity_text(&EntityRecord::new(id, "k", "t", "x", Some("  "))), "x");
        assert_eq!(
            entity_text(&EntityRecord::new(id, "k", "t", "a  b", Some(" c  d "))),
            "a  b c  d"
        );
    }

    #[test]
    fn neighbors_by_direction() {
        let kg = chain();
        let b = kg.entity_by_key("b").unwrap();
        let a = kg.entity_by_key("a").unwrap();
        let c = kg.entity_by_key("c").unwrap();
        let d = kg.entity_by_key("d").unwrap();
        assert_eq!(kg.neighbors(b, Direction::Out).unwrap(), BTreeSet::from([c]));
        assert_eq!(kg.neighbors(b, Direction::In).unwrap(), BTreeSet::from([a]));
        assert_eq!(kg.neighbors(b, Direction::Both).unwrap(), BTreeSet::from([a, c]));
        assert!(kg.neighbors(d, Direction::Both).unwrap().is_empty());
        assert!(matches!(kg.neighbors(EntityId(9), Direction::Out), Err(Error::UnknownEntity(9))));
    }

    #[test]
    fn parallel_edges_give_a_single_neighbor() {
        let mut b = GraphBuilder::new();
        b.add_entity("a", "n", "a", None).unwrap();
        b.add_entity("b", "n", "b", None).unwrap();
        b.add_triple("a", "r1", "b").unwrap();
        b.add_triple("a", "r2", "b").unwrap();
        let kg = b.build();
        assert_eq!(kg.out_degree(EntityId(0)), 2);
        assert_eq!(kg.neighbors(EntityId(0), Direction::Out).unwrap().len(), 1);
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let mut b = GraphBuilder::new();
        b.add_entity("a", "n", "a", None).unwrap();
        b.add_entity("b", "n", "b", None).unwrap();
        for _ in 0..3 {
            b.add_triple("a", "r", "b").unwrap();
        }
        let kg = b.build();
        assert_eq!(kg.triples().len(), 1);
        assert_eq!(kg.duplicates_dropped(), 2);
    }

    #[test]
    fn with_triples_keeps_entity_table() {
        let kg = chain();
        let sub = kg.with_triples(vec![kg.triples()[1]]);
        assert_eq!(sub.num_entities(), 4);
        assert_eq!(sub.triples().len(), 1);
        assert_eq!(sub.out_degree(EntityId(0)), 0);
        assert_eq!(sub.out_degree(EntityId(1)), 1);
    }

    #[test]
    fn builder_rejects_duplicate_keys_and_empty_names() {
        let mut b = GraphBuilder::new();
        b.add_entity("a", "n", "a", None).unwrap();
        assert!(b.add_entity("a", "n", "a2", None).is_err());
        assert!(b.add_entity("z", "n", "   ", None).is_err());
    }
}
