use std::fmt;

use serde::{Deserialize, Serialize};

use super::scores::{ClassSet, Confusion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the training curves. `dice` and `iou` are whole-tumor scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub dice: f64,
    pub iou: f64,
    pub mean_iou: f64,
    pub accuracy: f64,
}

impl MetricRecord {
    pub fn from_confusion(epoch: usize, split: Split, loss: f64, cm: &Confusion) -> Self {
        Self {
            epoch,
            split,
            loss,
            dice: cm.dice(ClassSet::BinaryForeground),
            iou: cm.iou(ClassSet::BinaryForeground),
            mean_iou: cm.mean_iou(),
            accuracy: cm.accuracy(),
        }
    }

    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        self.loss.is_finite() && unit(self.dice) && unit(self.iou) && unit(self.mean_iou) && unit(self.accuracy)
    }
}

/// Running fold of batch losses and label counts over an epoch.
#[derive(Debug, Clone)]
pub struct EpochAccumulator {
    loss_sum: f64,
    batches: usize,
    confusion: Confusion,
}

impl EpochAccumulator {
    pub fn new(num_classes: usize) -> Self {
        Self {
            loss_sum: 0.0,
            batches: 0,
            confusion: Confusion::new(num_classes),
        }
    }

    pub fn add_loss(&mut self, loss: f64) {
        self.loss_sum += loss;
        self.batches += 1;
    }

    pub fn confusion_mut(&mut self) -> &mut Confusion {
        &mut self.confusion
    }

    pub fn confusion(&self) -> &Confusion {
        &self.confusion
    }

    pub fn mean_loss(&self) -> f64 {
        if self.batches == 0 {
            0.0
        } else {
            self.loss_sum / self.batches as f64
        }
    }

    pub fn finish(&self, epoch: usize, split: Split) -> MetricRecord {
        MetricRecord::from_confusion(epoch, split, self.mean_loss(), &self.confusion)
    }
}
