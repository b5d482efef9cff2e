use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Error, Result};
use crate::metrics::LabelMap;
use crate::model::DOWNSAMPLING;
use crate::tensor::Tensor;

use super::volume::{normalize_modality, remap_labels, VolumeSample};

pub const NUM_CLASSES: usize = 4;
pub const NUM_CHANNELS: usize = 3;
pub const DEFAULT_CROP: [usize; 2] = [128, 128];
pub const TRAIN_MIN_FOREGROUND: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    pub crop: [usize; 2],
    /// Slices whose cropped foreground fraction falls below this are dropped.
    pub min_foreground_fraction: f64,
}

impl SliceConfig {
    pub fn training(crop: [usize; 2]) -> Self {
        Self {
            crop,
            min_foreground_fraction: TRAIN_MIN_FOREGROUND,
        }
    }

    pub fn evaluation(crop: [usize; 2]) -> Self {
        Self {
            crop,
            min_foreground_fraction: 0.0,
        }
    }
}

/// One preprocessed, cropped axial slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub case_id: Arc<str>,
    pub index: usize,
    pub crop: [usize; 2],
    /// `[3, H, W]`, channels T1ce, T2, FLAIR.
    pub image: Vec<f32>,
    /// `[H, W]`, classes `0..4`.
    pub labels: Vec<u8>,
}

impl Slice {
    pub fn foreground_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&l| l > 0).count() as f64 / self.labels.len() as f64
    }
}

/// Row and column offsets of a centered `crop` window.
pub fn crop_origin(dims: [usize; 3], crop: [usize; 2]) -> Result<[usize; 2]> {
    let [_, h, w] = dims;
    if crop.iter().any(|&c| c == 0 || c % DOWNSAMPLING != 0) {
        return Err(Error::Config(format!("crop {crop:?} must be positive multiples of {DOWNSAMPLING}")));
    }
    if crop[0] > h || crop[1] > w {
        return Err(Error::Config(format!("crop {crop:?} exceeds slice size [{h}, {w}]")));
    }
    Ok([(h - crop[0]) / 2, (w - crop[1]) / 2])
}

fn crop_plane<T: Copy>(plane: &[T], w: usize, origin: [usize; 2], crop: [usize; 2], out: &mut Vec<T>) {
    for y in origin[0]..origin[0] + crop[0] {
        let row = y * w + origin[1];
        out.extend_from_slice(&plane[row..row + crop[1]]);
    }
}

/// Normalizes modalities, remaps labels and center-crops every axial slice.
pub fn extract_slices(sample: &VolumeSample, cfg: &SliceConfig) -> Result<Vec<Slice>> {
    let dims = sample.dims();
    let origin = crop_origin(dims, cfg.crop)?;
    let labels = remap_labels(&sample.label)
        .map_err(|e| Error::Data(format!("case {}: {e}", sample.case_id)))?;
    let normalized = sample.modalities.each_ref().map(normalize_modality);
    let case_id: Arc<str> = Arc::from(sample.case_id.as_str());
    let w = dims[2];
    let mut out = Vec::new();
    for z in 0..dims[0] {
        let mut lab = Vec::with_capacity(cfg.crop[0] * cfg.crop[1]);
        crop_plane(labels.plane(z), w, origin, cfg.crop, &mut lab);
        let fg = lab.iter().filter(|&&l| l > 0).count() as f64 / lab.len() as f64;
        if fg < cfg.min_foreground_fraction {
            continue;
        }
        let mut image = Vec::with_capacity(NUM_CHANNELS * lab.len());
        for v in &normalized {
            crop_plane(v.plane(z), w, origin, cfg.crop, &mut image);
        }
        out.push(Slice {
            case_id: Arc::clone(&case_id),
            index: z,
            crop: cfg.crop,
            image,
            labels: lab,
        });
    }
    Ok(out)
}

/// Stacked model inputs and one-hot targets for a group of slices.
#[derive(Debug, Clone)]
pub struct SliceBatch {
    pub images: Tensor<f32>,
    pub targets: Tensor<f32>,
    pub labels: LabelMap,
    pub source: Vec<(Arc<str>, usize)>,
}

impl SliceBatch {
    pub fn new(slices: &[&Slice]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| contract_err!("cannot batch zero slices"))?;
        let [h, w] = first.crop;
        if let Some(s) = slices.iter().find(|s| s.crop != first.crop) {
            return Err(contract_err!("slice crops differ: {:?} vs {:?}", first.crop, s.crop));
        }
        let n = slices.len();
        let plane = h * w;
        let mut images = Vec::with_capacity(n * NUM_CHANNELS * plane);
        let mut targets = vec![0.0f32; n * NUM_CLASSES * plane];
        let mut labels = Vec::with_capacity(n * plane);
        for (i, s) in slices.iter().enumerate() {
            images.extend_from_slice(&s.image);
            labels.extend_from_slice(&s.labels);
            for (p, &l) in s.labels.iter().enumerate() {
                targets[(i * NUM_CLASSES + l as usize) * plane + p] = 1.0;
            }
        }
        Ok(Self {
            images: Tensor::from_vec(&[n, NUM_CHANNELS, h, w], images)?,
            targets: Tensor::from_vec(&[n, NUM_CLASSES, h, w], targets)?,
            labels: LabelMap::new([n, h, w], labels)?,
            source: slices.iter().map(|s| (Arc::clone(&s.case_id), s.index)).collect(),
        })
    }
}
