//! Knowledge graph embedding models.
//!
//! Four scoring functions share one training procedure: mini-batches of
//! positives, same-type head/tail corruptions, the max-margin ranking loss,
//! L3 regularization of the touched rows and Adam. The checkpoint with the
//! best validation MRR on the fixed negatives is kept.

mod model;
mod persist;
mod train;

pub use model::{accumulate_score_grad, score, KgeConfig, KgeModel, ModelKind};
pub use persist::{load_model, save_model, ModelManifest};
pub use train::{
    batch_objective, evaluate_model, l3_penalty, rank_loss, sample_corruptions, score_queries, train_kge, Gradients,
    TrainOutcome, TrainingExample,
};
