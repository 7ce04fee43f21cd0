//! A small convolutional network toolkit for leaf-disease image classification:
//! tensors and layer kernels, a sequential model built from a text config,
//! Adam training with early stopping, dataset splitting, checkpoints and
//! parameter accounting.

pub mod checkpoint;
pub mod config;
pub mod curves;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod objective;
pub mod optim;
pub mod preprocess;
pub mod rng;
pub mod solver;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{bundled, parse_config, render_report, ModelConfig};
pub use curves::emit_curves;
pub use data::{scan_dataset, stratified_split, Dataset, Sample, Split, SplitManifest};
pub use error::{Error, Result};
pub use layers::{Activation, LayerSpec, Padding, ParamCount, ParamReport};
pub use model::Sequential;
pub use optim::{adam_step, AdamConfig, AdamState, EarlyStopping, StopDecision};
pub use preprocess::{AugmentPolicy, ImageTensor};
pub use rng::Rng;
pub use solver::{solve_config, Family, Member, SearchOutcome};
pub use tensor::{Element, Tensor};
pub use train::{
    evaluate, fit, predict, run_training, EpochRecord, EvalResult, InMemorySplit, TrainJob,
    TrainOutcome, TrainReport, TrainingConfig,
};
