//! Optimizer, run configuration, persistence and the train/eval/predict loops.

mod adam;
mod checkpoint;
mod config;
mod curves;
mod evaluate;
mod predict;
mod source;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState, OptimizerKind};
pub use checkpoint::{BestRecord, Checkpoint, NamedTensor, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use config::{LossConfig, RunConfig, SplitConfig, SyntheticSpec};
pub use curves::{export_curves, format_curves, parse_curves, CURVES_HEADER};
pub use evaluate::{
    evaluate, EvalOptions, EvalReport, PublishedHeadline, PublishedReference, ReferenceRow, NOT_REPRODUCED,
    PUBLISHED_DICE, PUBLISHED_HEADLINE,
};
pub use predict::{predict_case, write_prediction, Prediction};
pub use source::DataSource;
pub use trainer::{
    combined_loss, eval_batch, eval_pass, load_slices, train, train_step, train_with, TrainOutcome, BEST_CHECKPOINT,
    CONFIG_FILE, CURVES_FILE, LAST_CHECKPOINT,
};
