//! Volume I/O, preprocessing, synthetic phantoms, slicing and splits.

mod case;
pub mod nifti;
mod slices;
mod split;
pub mod svol;
mod synth;
mod volume;

pub use case::{
    case_files, list_cases, load_case, load_inputs, write_case_nifti, write_case_svol, CaseFile, CaseInputs, FileKind, LABEL_STEM,
};
pub use nifti::{parse_nifti, read_nifti, write_nifti, NiftiHeader, NiftiPayload, NiftiType, NiftiVolume};
pub use slices::{
    crop_origin, extract_slices, Slice, SliceBatch, SliceConfig, DEFAULT_CROP, NUM_CHANNELS, NUM_CLASSES,
    TRAIN_MIN_FOREGROUND,
};
pub use split::{split_dataset, DEFAULT_TRAIN_FRACTION};
pub use svol::{Svol, SvolData};
pub use synth::{case_name, case_seed, synth_case, synth_dataset, synth_dataset_case, LesionTruth, SynthCase, MIN_DIMS, NOISE_STD};
pub use volume::{normalize_modality, remap_labels, Modality, Volume, VolumeSample};
