//! Segmentation scores, training losses and per-epoch aggregation.

mod loss;
mod record;
mod scores;

pub use loss::DICE_EPS;
pub use record::{EpochAccumulator, MetricRecord, Split};
pub use scores::{
    dice_coefficient, iou_score, logits_to_mask, mean_iou, pixel_accuracy, ClassSet, Confusion, LabelMap,
};
