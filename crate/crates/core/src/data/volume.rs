use std::fmt;

use crate::error::{shape_err, Error, Result};
use crate::metrics::LabelMap;

/// Dense 3D float volume in `[D, H, W]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.contains(&0) || n != data.len() {
            return Err(shape_err!("volume dims {dims:?} do not match {} voxels", data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, vec![0.0; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, z: usize) -> &[f32] {
        let p = self.dims[1] * self.dims[2];
        &self.data[z * p..(z + 1) * p]
    }
}

/// Input modalities in channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    T1ce,
    T2,
    Flair,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::T1ce, Modality::T2, Modality::Flair];

    pub fn file_stem(self) -> &'static str {
        match self {
            Modality::T1ce => "t1ce",
            Modality::T2 => "t2",
            Modality::Flair => "flair",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

/// One multi-modal case. Labels keep the raw `{0, 1, 2, 4}` convention.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSample {
    pub case_id: String,
    /// Indexed in `Modality::ALL` order.
    pub modalities: [Volume; 3],
    pub label: LabelMap,
    pub spacing: Option<[f32; 3]>,
}

impl VolumeSample {
    pub fn new(case_id: impl Into<String>, modalities: [Volume; 3], label: LabelMap, spacing: Option<[f32; 3]>) -> Result<Self> {
        let case_id = case_id.into();
        let dims = label.dims();
        for (m, v) in Modality::ALL.iter().zip(&modalities) {
            if v.dims() != dims {
                return Err(Error::Data(format!(
                    "case {case_id}: {m} dims {:?} differ from label dims {dims:?}",
                    v.dims()
                )));
            }
        }
        Ok(Self {
            case_id,
            modalities,
            label,
            spacing,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.label.dims()
    }

    pub fn modality(&self, m: Modality) -> &Volume {
        &self.modalities[m as usize]
    }
}

/// Z-score over nonzero voxels; zero voxels stay zero.
pub fn normalize_modality(v: &Volume) -> Volume {
    const SIGMA_FLOOR: f64 = 1e-8;
    let (mut n, mut sum) = (0usize, 0.0f64);
    for &x in v.data() {
        if x != 0.0 {
            n += 1;
            sum += x as f64;
        }
    }
    if n == 0 {
        return v.clone();
    }
    let mean = sum / n as f64;
    let var = v
        .data()
        .iter()
        .filter(|&&x| x != 0.0)
        .map(|&x| (x as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let sd = var.sqrt().max(SIGMA_FLOOR);
    let data = v
        .data()
        .iter()
        .map(|&x| if x == 0.0 { 0.0 } else { ((x as f64 - mean) / sd) as f32 })
        .collect();
    Volume {
        dims: v.dims,
        data,
    }
}

/// Maps raw labels `{0, 1, 2, 4}` to contiguous classes `{0, 1, 2, 3}`.
pub fn remap_labels(raw: &LabelMap) -> Result<LabelMap> {
    let mut out = raw.clone();
    for (i, l) in out.data_mut().iter_mut().enumerate() {
        *l = match *l {
            0..=2 => *l,
            4 => 3,
            other => {
                return Err(Error::Data(format!(
                    "unexpected raw label {other} at voxel {i}; expected one of 0, 1, 2, 4"
                )))
            }
        };
    }
    Ok(out)
}
