//! Knowledge graph completion toolkit.
//!
//! The crate covers the whole experiment graph for ranking-based link
//! prediction over typed, text-annotated knowledge graphs:
//!
//! - [`graph`]: entities, relations, triples and adjacency, loaded from TSV.
//! - [`splits`]: transductive and inductive splits plus fixed, type-matched,
//!   positive-filtered negative candidate sets.
//! - [`kge`]: TransE, DistMult, ComplEx and RotatE trained with a max-margin
//!   ranking loss and L3 regularization.
//! - [`features`]: per-triple graph and text features used by integrators.
//! - [`ensemble`]: global weighted averages, per-example routers and
//!   input-dependent weighted averages over several scoring models.
//! - [`evaluate`]: MRR / Hits@k with pessimistic ties and the usual breakdowns.
//! - [`inductive`]: nearest-neighbour imputation of unseen-entity embeddings.
//! - [`pipeline`]: artifact layout, stage caching and the end-to-end run.

pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod graph;
pub mod inductive;
pub mod io;
pub mod kge;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod scores;
pub mod splits;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{EntityId, EntityRecord, KnowledgeGraph, RelationId, Triple};
