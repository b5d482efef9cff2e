use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{extract_slices, split_dataset, Slice, SliceBatch, SliceConfig, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::metrics::{logits_to_mask, EpochAccumulator, LabelMap, MetricRecord, Split, DICE_EPS};
use crate::model::SegModel;
use crate::nn::Mode;
use crate::tensor::{Tape, Tensor, Var};

use super::adam::{adam_step, AdamState};
use super::checkpoint::{BestRecord, Checkpoint};
use super::config::{LossConfig, RunConfig};
use super::curves::export_curves;
use super::source::DataSource;

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const CURVES_FILE: &str = "curves.csv";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug)]
pub struct TrainOutcome {
    pub records: Vec<MetricRecord>,
    pub best: Option<BestRecord>,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub model: SegModel<f32>,
}

impl TrainOutcome {
    pub fn last(&self, split: Split) -> Option<&MetricRecord> {
        self.records.iter().rev().find(|r| r.split == split)
    }
}

/// Weighted soft Dice plus cross-entropy on the tape.
pub fn combined_loss(tape: &mut Tape<f32>, logits: &Var<f32>, target: &Var<f32>, w: &LossConfig) -> Result<Var<f32>> {
    let mut total: Option<Var<f32>> = None;
    if w.dice_weight > 0.0 {
        let d = tape.soft_dice_loss(logits, target, DICE_EPS)?;
        total = Some(if w.dice_weight == 1.0 { d } else { tape.scale(&d, w.dice_weight as f32) });
    }
    if w.ce_weight > 0.0 {
        let ce = tape.cross_entropy_loss(logits, target)?;
        let ce = if w.ce_weight == 1.0 { ce } else { tape.scale(&ce, w.ce_weight as f32) };
        total = Some(match total {
            Some(d) => tape.add(&d, &ce)?,
            None => ce,
        });
    }
    total.ok_or_else(|| Error::Config("loss weights are both zero".into()))
}

/// Training slices (filtered) and validation slices (all) for a split.
pub fn load_slices(source: &DataSource, ids: &[String], cfg: &SliceConfig) -> Result<Vec<Slice>> {
    let mut out = Vec::new();
    for id in ids {
        out.extend(extract_slices(&source.load(id)?, cfg)?);
    }
    Ok(out)
}

fn check_finite(loss: f64, what: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} loss became {loss}")))
    }
}

/// Forward, backward and one optimizer update. Returns the batch loss and
/// the argmax predictions of the training-mode forward pass.
pub fn train_step(
    model: &mut SegModel<f32>,
    optimizer: &mut AdamState<f32>,
    batch: &SliceBatch,
    cfg: &RunConfig,
) -> Result<(f64, LabelMap)> {
    model.params.zero_grads();
    let (net, mut s) = model.session(Mode::Train, true);
    let x = s.input(&batch.images);
    let t = s.tape.constant(&batch.targets);
    let logits = net.forward(&mut s, &x)?;
    let loss = combined_loss(&mut s.tape, &logits, &t, &cfg.loss)?;
    let value = loss.item() as f64;
    check_finite(value, "training")?;
    let pred = logits_to_mask(&logits.to_tensor())?;
    s.backward(&loss)?;
    adam_step(&mut model.params, optimizer, &cfg.optimizer)?;
    model.params.zero_grads();
    Ok((value, pred))
}

/// Eval-mode loss and predictions for one batch.
pub fn eval_batch(model: &mut SegModel<f32>, batch: &SliceBatch, loss_cfg: &LossConfig) -> Result<(f64, LabelMap, Tensor<f32>)> {
    let (net, mut s) = model.session(Mode::Eval, false);
    let x = s.input(&batch.images);
    let t = s.tape.constant(&batch.targets);
    let logits = net.forward(&mut s, &x)?;
    let loss = combined_loss(&mut s.tape, &logits, &t, loss_cfg)?.item() as f64;
    let logits = logits.to_tensor();
    Ok((loss, logits_to_mask(&logits)?, logits))
}

/// Eval-mode pass over `slices` in order, `batch_size` at a time.
pub fn eval_pass(
    model: &mut SegModel<f32>,
    slices: &[Slice],
    batch_size: usize,
    loss_cfg: &LossConfig,
    mut on_batch: impl FnMut(&SliceBatch, &LabelMap) -> Result<()>,
) -> Result<EpochAccumulator> {
    let mut acc = EpochAccumulator::new(NUM_CLASSES);
    for chunk in slices.chunks(batch_size) {
        let refs: Vec<&Slice> = chunk.iter().collect();
        let batch = SliceBatch::new(&refs)?;
        let (loss, pred, _) = eval_batch(model, &batch, loss_cfg)?;
        check_finite(loss, "validation")?;
        acc.add_loss(loss);
        acc.confusion_mut().add(&pred, &batch.labels)?;
        on_batch(&batch, &pred)?;
    }
    Ok(acc)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x2545_f491_4f6c_dd1d)
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    train_with(cfg, |_| {})
}

/// Full training run writing `config.json`, `curves.csv`, `last.ckpt` and
/// `best.ckpt` into `cfg.output_dir`. `on_record` sees every metric row.
pub fn train_with(cfg: &RunConfig, mut on_record: impl FnMut(&MetricRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let source = DataSource::from_config(cfg)?;
    let ids = source.case_ids()?;
    if ids.len() < 2 {
        return Err(Error::Data(format!("need at least 2 cases, found {}", ids.len())));
    }
    let (train_ids, val_ids) = split_dataset(&ids, cfg.split.fraction, cfg.split.seed)?;
    let train_cfg = SliceConfig {
        crop: cfg.crop,
        min_foreground_fraction: cfg.min_foreground_fraction,
    };
    let train_slices = load_slices(&source, &train_ids, &train_cfg)?;
    if train_slices.is_empty() {
        return Err(Error::Data("no training slices pass the foreground filter".into()));
    }
    let val_slices = load_slices(&source, &val_ids, &SliceConfig::evaluation(cfg.crop))?;

    let out = cfg.output_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join(CONFIG_FILE), &cfg.to_json())?;

    let mut model = SegModel::<f32>::new(&cfg.model, cfg.seed)?;
    let mut optimizer = AdamState::new(&model.params);
    let mut records = Vec::with_capacity(2 * cfg.epochs);
    let mut best: Option<BestRecord> = None;
    let mut order: Vec<usize> = (0..train_slices.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch)));
        let mut acc = EpochAccumulator::new(NUM_CLASSES);
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Slice> = chunk.iter().map(|&i| &train_slices[i]).collect();
            let batch = SliceBatch::new(&refs)?;
            let (loss, pred) = train_step(&mut model, &mut optimizer, &batch, cfg)?;
            acc.add_loss(loss);
            acc.confusion_mut().add(&pred, &batch.labels)?;
        }
        let train_rec = acc.finish(epoch, Split::Train);
        let val_rec = if val_slices.is_empty() {
            None
        } else {
            Some(eval_pass(&mut model, &val_slices, cfg.batch_size, &cfg.loss, |_, _| Ok(()))?.finish(epoch, Split::Val))
        };
        for r in std::iter::once(&train_rec).chain(&val_rec) {
            on_record(r);
            records.push(*r);
        }
        export_curves(out.join(CURVES_FILE), &records)?;

        let score = val_rec.as_ref().unwrap_or(&train_rec).dice;
        let improved = best.is_none_or(|b| score > b.dice);
        if improved {
            best = Some(BestRecord { epoch, dice: score });
        }
        let ckpt = Checkpoint::capture(cfg, epoch, best, &model.params, &optimizer);
        ckpt.save(out.join(LAST_CHECKPOINT))?;
        if improved {
            ckpt.save(out.join(BEST_CHECKPOINT))?;
        }
    }
    Ok(TrainOutcome {
        records,
        best,
        train_ids,
        val_ids,
        model,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
