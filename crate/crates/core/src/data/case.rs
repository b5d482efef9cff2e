use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::LabelMap;

use super::nifti::{read_nifti, to_labels, write_nifti, NiftiHeader, NiftiPayload};
use super::svol::Svol;
use super::volume::{Modality, Volume, VolumeSample};

pub const LABEL_STEM: &str = "seg";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Nifti,
    Svol,
}

/// Resolved on-disk location of one volume of a case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseFile {
    pub path: PathBuf,
    pub kind: FileKind,
}

fn locate(case_dir: &Path, case_id: &str, stem: &str) -> Result<CaseFile> {
    let nii = case_dir.join(format!("{case_id}_{stem}.nii"));
    if nii.is_file() {
        return Ok(CaseFile { path: nii, kind: FileKind::Nifti });
    }
    let svol = case_dir.join(format!("{stem}.svol"));
    if svol.is_file() {
        return Ok(CaseFile { path: svol, kind: FileKind::Svol });
    }
    Err(Error::Data(format!(
        "case {case_id}: missing {stem} volume (looked for {} and {})",
        nii.display(),
        svol.display()
    )))
}

/// Files for the three modalities in channel order, then the label volume.
pub fn case_files(case_dir: &Path, case_id: &str) -> Result<[CaseFile; 4]> {
    Ok([
        locate(case_dir, case_id, Modality::T1ce.file_stem())?,
        locate(case_dir, case_id, Modality::T2.file_stem())?,
        locate(case_dir, case_id, Modality::Flair.file_stem())?,
        locate(case_dir, case_id, LABEL_STEM)?,
    ])
}

fn name_file(f: &CaseFile) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Data(format!("{}: {e}", f.path.display()))
}

fn read_volume(f: &CaseFile) -> Result<(Volume, Option<NiftiHeader>)> {
    match f.kind {
        FileKind::Nifti => read_nifti(&f.path).map(|nv| (nv.volume, Some(nv.header))),
        FileKind::Svol => Svol::read(&f.path).and_then(|s| s.to_volume()).map(|v| (v, None)),
    }
    .map_err(name_file(f))
}

fn read_labels(f: &CaseFile) -> Result<LabelMap> {
    match f.kind {
        FileKind::Nifti => read_nifti(&f.path).and_then(|nv| to_labels(&nv.volume)),
        FileKind::Svol => Svol::read(&f.path).and_then(|s| s.to_labels()),
    }
    .map_err(name_file(f))
}

/// The three modality volumes of a case, without labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseInputs {
    /// Indexed in `Modality::ALL` order.
    pub modalities: [Volume; 3],
    /// Header of the first NIfTI modality, if any.
    pub header: Option<NiftiHeader>,
}

impl CaseInputs {
    pub fn dims(&self) -> [usize; 3] {
        self.modalities[0].dims()
    }

    /// Voxel spacing in `[D, H, W]` order.
    pub fn spacing(&self) -> Option<[f32; 3]> {
        self.header.as_ref().map(|h| {
            let [x, y, z] = h.pixdim;
            [z, y, x]
        })
    }
}

/// Reads the modality volumes only, so unlabeled cases can be predicted.
pub fn load_inputs(case_dir: impl AsRef<Path>, case_id: &str) -> Result<CaseInputs> {
    let dir = case_dir.as_ref();
    let mut header = None;
    let mut vols: Vec<Volume> = Vec::with_capacity(3);
    for m in Modality::ALL {
        let f = locate(dir, case_id, m.file_stem())?;
        let (v, h) = read_volume(&f)?;
        if let Some(first) = vols.first() {
            if v.dims() != first.dims() {
                return Err(Error::Data(format!(
                    "{}: dims {:?} differ from {} dims {:?}",
                    f.path.display(),
                    v.dims(),
                    Modality::T1ce,
                    first.dims()
                )));
            }
        }
        if header.is_none() {
            header = h;
        }
        vols.push(v);
    }
    let modalities: [Volume; 3] = vols.try_into().expect("three modalities");
    Ok(CaseInputs { modalities, header })
}

/// Loads `<case_dir>/<case_id>_{t1ce,t2,flair,seg}.nii`, falling back to
/// `<case_dir>/{t1ce,t2,flair,seg}.svol` per volume.
pub fn load_case(case_dir: impl AsRef<Path>, case_id: &str) -> Result<VolumeSample> {
    let dir = case_dir.as_ref();
    let seg = locate(dir, case_id, LABEL_STEM)?;
    let inputs = load_inputs(dir, case_id)?;
    let label = read_labels(&seg)?;
    if label.dims() != inputs.dims() {
        return Err(Error::Data(format!(
            "{}: dims {:?} differ from modality dims {:?}",
            seg.path.display(),
            label.dims(),
            inputs.dims()
        )));
    }
    let spacing = inputs.spacing();
    VolumeSample::new(case_id, inputs.modalities, label, spacing)
}

/// Writes a case as `.svol` files under `case_dir`.
pub fn write_case_svol(case_dir: impl AsRef<Path>, sample: &VolumeSample) -> Result<()> {
    let dir = case_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (m, v) in Modality::ALL.iter().zip(&sample.modalities) {
        Svol::from_volume(v).write(dir.join(format!("{}.svol", m.file_stem())))?;
    }
    Svol::from_labels(&sample.label).write(dir.join(format!("{LABEL_STEM}.svol")))
}

/// Writes a case as little-endian NIfTI-1 files named `<case_id>_<stem>.nii`.
pub fn write_case_nifti(case_dir: impl AsRef<Path>, sample: &VolumeSample) -> Result<()> {
    let dir = case_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dims = sample.dims();
    let [sz, sy, sx] = sample.spacing.unwrap_or([1.0; 3]);
    let header = NiftiHeader::new(dims, [sx, sy, sz])?;
    let id = &sample.case_id;
    for (m, v) in Modality::ALL.iter().zip(&sample.modalities) {
        let path = dir.join(format!("{id}_{}.nii", m.file_stem()));
        write_nifti(path, &header, dims, NiftiPayload::F32(v.data()))?;
    }
    write_nifti(dir.join(format!("{id}_{LABEL_STEM}.nii")), &header, dims, NiftiPayload::U8(sample.label.data()))
}

/// Sorted names of the subdirectories of `root`.
pub fn list_cases(root: impl AsRef<Path>) -> Result<Vec<String>> {
    let root = root.as_ref();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}
