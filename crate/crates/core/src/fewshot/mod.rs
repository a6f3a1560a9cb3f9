//! Episode-level model: prototypes, distance-softmax classification,
//! cross-entropy, the episodic trainer and the multi-episode evaluator.

mod eval;
mod model;
mod optim;
mod train;

pub use eval::{episode_accuracies, evaluate, AccuracyReport, EvalSpec};
pub use model::{
    build_prototypes, classify, episode_loss, episode_loss_grad, ClassifierConfig, EpisodeBatch, Model,
    ModelVariant, PrototypeMode, PrototypeSet,
};
pub use optim::AdamW;
pub use train::{train, train_observed, AttributePolicy, TrainConfig, TrainOutcome};
