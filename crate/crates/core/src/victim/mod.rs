//! Victim classifiers: fully-connected networks, augmented labels, and the
//! exact single-example gradients a federated client would upload.

mod capture;
mod label;
mod model;
mod train;

pub use capture::{max_l1_row, GradientCapture, Instance};
pub(crate) use capture::{read_json, write_json};
pub use label::{make_label, mix_inputs, AugmentedLabel, Augmentation, LabelKind};
pub use model::{cross_entropy, Activation, ForwardPass, LayerSpec, MlpModel, MODEL_MANIFEST};
pub use train::{
    accuracy, mean_loss, sample_dataset, synth_dataset, train, train_with_history, BlobSource, Dataset,
    TrainHistory, DEFAULT_BLOB_SPREAD,
};
