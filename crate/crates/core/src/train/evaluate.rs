use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use crate::data::{Slice, SliceConfig, Svol, SvolData, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::metrics::{ClassSet, Confusion};
use crate::model::SegModel;

use super::config::LossConfig;
use super::source::DataSource;
use super::trainer::{eval_pass, load_slices};

pub const NOT_REPRODUCED: &str = "published, not reproduced";

/// Published whole-dataset Dice scores, kept for side-by-side display only.
pub const PUBLISHED_DICE: [(&str, f64); 4] = [
    ("AMMGS", 0.8172),
    ("Enc-Dec VAE", 0.8154),
    ("SLIC", 0.8593),
    ("SE-ResNet152 U-Net", 0.8726),
];

/// Published headline scores of the SE-ResNet152 U-Net on full BraTS 2020.
pub const PUBLISHED_HEADLINE: PublishedHeadline = PublishedHeadline {
    dice: 0.87,
    accuracy: 0.8912,
    iou: 0.88,
    mean_iou: 0.82,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedHeadline {
    pub dice: f64,
    pub accuracy: f64,
    pub iou: f64,
    pub mean_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub method: &'static str,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishedReference {
    pub status: &'static str,
    pub comparison: Vec<ReferenceRow>,
    pub headline: PublishedHeadline,
}

impl Default for PublishedReference {
    fn default() -> Self {
        Self {
            status: NOT_REPRODUCED,
            comparison: PUBLISHED_DICE
                .iter()
                .map(|&(method, dice)| ReferenceRow { method, dice })
                .collect(),
            headline: PUBLISHED_HEADLINE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub cases: Vec<String>,
    pub slices: usize,
    pub loss: f64,
    /// Whole-tumor (label > 0) Dice.
    pub dice: f64,
    /// Per class `0..4`; `None` when a class is absent from both masks.
    pub dice_per_class: Vec<Option<f64>>,
    pub dice_class_mean: f64,
    /// Whole-tumor IoU.
    pub iou: f64,
    pub mean_iou: f64,
    pub accuracy: f64,
    /// `confusion[truth][pred]` pixel counts.
    pub confusion: Vec<Vec<u64>>,
    pub reference: PublishedReference,
}

impl EvalReport {
    pub fn from_confusion(cases: Vec<String>, slices: usize, loss: f64, cm: &Confusion) -> Self {
        let c = cm.num_classes();
        Self {
            cases,
            slices,
            loss,
            dice: cm.dice(ClassSet::BinaryForeground),
            dice_per_class: (0..c).map(|k| cm.class_dice(k)).collect(),
            dice_class_mean: cm.dice(ClassSet::PerClassMean),
            iou: cm.iou(ClassSet::BinaryForeground),
            mean_iou: cm.mean_iou(),
            accuracy: cm.accuracy(),
            confusion: (0..c).map(|t| (0..c).map(|p| cm.count(t, p)).collect()).collect(),
            reference: PublishedReference::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "cases {}  slices {}  loss {:.4}", self.cases.len(), self.slices, self.loss);
        let _ = writeln!(w, "{:<28}{:>10}", "metric", "value");
        for (name, v) in [
            ("dice (whole tumor)", self.dice),
            ("dice (class mean)", self.dice_class_mean),
            ("iou (whole tumor)", self.iou),
            ("mean iou", self.mean_iou),
            ("accuracy", self.accuracy),
        ] {
            let _ = writeln!(w, "{name:<28}{v:>10.4}");
        }
        for (k, d) in self.dice_per_class.iter().enumerate() {
            match d {
                Some(d) => writeln!(w, "{:<28}{d:>10.4}", format!("dice class {k}")),
                None => writeln!(w, "{:<28}{:>10}", format!("dice class {k}"), "absent"),
            }
            .expect("writing to a string");
        }
        let _ = writeln!(w, "\nreference dice ({})", self.reference.status);
        for r in &self.reference.comparison {
            let _ = writeln!(w, "{:<28}{:>10.4}", r.method, r.dice);
        }
        let h = self.reference.headline;
        let _ = writeln!(
            w,
            "reference headline ({}): dice {:.2}  accuracy {:.4}  iou {:.2}  mean iou {:.2}",
            self.reference.status, h.dice, h.accuracy, h.iou, h.mean_iou
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub slices: SliceConfig,
    pub batch_size: usize,
    pub loss: LossConfig,
    /// Writes `<case>_pred.svol` and `<case>_truth.svol` (`[slices, H, W]`).
    pub save_masks: Option<PathBuf>,
}

/// Eval-mode metrics over every selected slice of `case_ids`.
pub fn evaluate(model: &mut SegModel<f32>, source: &DataSource, case_ids: &[String], opts: &EvalOptions) -> Result<EvalReport> {
    if case_ids.is_empty() {
        return Err(Error::Data("evaluation selection is empty".into()));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let slices: Vec<Slice> = load_slices(source, case_ids, &opts.slices)?;
    if slices.is_empty() {
        return Err(Error::Data("no slices selected for evaluation".into()));
    }
    let mut masks: BTreeMap<String, (Vec<u8>, Vec<u8>, usize)> = BTreeMap::new();
    let keep = opts.save_masks.is_some();
    let acc = eval_pass(model, &slices, opts.batch_size, &opts.loss, |batch, pred| {
        if keep {
            let plane = batch.labels.dims()[1] * batch.labels.dims()[2];
            for (i, (case, _)) in batch.source.iter().enumerate() {
                let e = masks.entry(case.to_string()).or_default();
                e.0.extend_from_slice(pred.plane(i));
                e.1.extend_from_slice(batch.labels.plane(i));
                e.2 += 1;
                debug_assert_eq!(e.0.len(), e.2 * plane);
            }
        }
        Ok(())
    })?;
    if let Some(dir) = &opts.save_masks {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let [h, w] = opts.slices.crop;
        for (case, (pred, truth, n)) in masks {
            Svol::new(vec![n, h, w], SvolData::U8(pred))?.write(dir.join(format!("{case}_pred.svol")))?;
            Svol::new(vec![n, h, w], SvolData::U8(truth))?.write(dir.join(format!("{case}_truth.svol")))?;
        }
    }
    debug_assert_eq!(acc.confusion().num_classes(), NUM_CLASSES);
    Ok(EvalReport::from_confusion(
        case_ids.to_vec(),
        slices.len(),
        acc.mean_loss(),
        acc.confusion(),
    ))
}
