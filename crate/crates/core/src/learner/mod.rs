//! Feed-forward classifier, its losses, training loop and evaluation.

pub mod loss;
pub mod metrics;
pub mod mlp;
pub mod persist;
pub mod train;

pub use loss::{
    assimilation, bce_loss, cross_entropy_loss, joint_loss, multisupcon_loss, supcon_loss,
};
pub use metrics::{evaluate, kfold, KfoldReport, Metrics, Scores};
pub use mlp::{DenseLayer, Gradients, Head, LabelDict, MlpModel};
pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use train::{
    batch_loss_and_gradients, train, LabeledDataset, LossMode, Optimizer, Target, TrainConfig,
    TrainReport,
};
