use std::path::Path;

use crate::data::{
    crop_origin, extract_slices, load_inputs, NiftiHeader, NiftiPayload, Slice, SliceBatch, SliceConfig, Svol,
    VolumeSample,
};
use crate::error::{Error, Result};
use crate::metrics::{logits_to_mask, LabelMap};
use crate::model::SegModel;
use crate::nn::Mode;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Classes `0..4` at the input volume's dims; zero outside the crop.
    pub mask: LabelMap,
    /// Geometry of the input when it was NIfTI.
    pub header: Option<NiftiHeader>,
}

/// Per-slice argmax over the center crop, pasted back into a full volume.
pub fn predict_case(model: &mut SegModel<f32>, case_dir: &Path, case_id: &str, crop: [usize; 2], batch_size: usize) -> Result<Prediction> {
    let inputs = load_inputs(case_dir, case_id)?;
    let dims = inputs.dims();
    let origin = crop_origin(dims, crop).map_err(|e| Error::Data(format!("case {case_id}: {e}")))?;
    let header = inputs.header.clone();
    let sample = VolumeSample::new(case_id, inputs.modalities, LabelMap::zeros(dims)?, None)?;
    let slices = extract_slices(&sample, &SliceConfig::evaluation(crop))?;
    let [_, h, w] = dims;
    let mut mask = LabelMap::zeros(dims)?;
    for chunk in slices.chunks(batch_size.max(1)) {
        let refs: Vec<&Slice> = chunk.iter().collect();
        let batch = SliceBatch::new(&refs)?;
        let logits = model.infer(&batch.images, Mode::Eval)?;
        let pred = logits_to_mask(&logits)?;
        for (i, s) in chunk.iter().enumerate() {
            let plane = pred.plane(i);
            let out = mask.data_mut();
            for y in 0..crop[0] {
                let dst = (s.index * h + origin[0] + y) * w + origin[1];
                out[dst..dst + crop[1]].copy_from_slice(&plane[y * crop[1]..(y + 1) * crop[1]]);
            }
        }
    }
    Ok(Prediction { mask, header })
}

/// Writes `.nii` (reusing the input geometry when available) or `.svol`,
/// chosen by the extension of `out`.
pub fn write_prediction(pred: &Prediction, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    match out.extension().and_then(|e| e.to_str()) {
        Some("nii") => {
            let header = match &pred.header {
                Some(h) => h.clone(),
                None => NiftiHeader::new(pred.mask.dims(), [1.0; 3])?,
            };
            crate::data::nifti::write_nifti(out, &header, pred.mask.dims(), NiftiPayload::U8(pred.mask.data()))
        }
        Some("svol") => Svol::from_labels(&pred.mask).write(out),
        _ => Err(Error::Config(format!("output {} must end in .svol or .nii", out.display()))),
    }
}
