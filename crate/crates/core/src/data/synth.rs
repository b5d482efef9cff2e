use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{contract_err, Result};
use crate::metrics::LabelMap;

use super::volume::{Volume, VolumeSample};

pub const MIN_DIMS: [usize; 3] = [8, 64, 64];
pub const NOISE_STD: f64 = 0.05;

/// Relative radii of the middle (raw 1) and core (raw 4) shells.
const MIDDLE_SCALE: f64 = 0.65;
const CORE_SCALE: f64 = 0.35;

/// Per-modality intensity of healthy tissue and raw labels 1, 2, 4.
const INTENSITY: [[f32; 4]; 3] = [
    // T1ce
    [0.50, 0.30, 0.55, 1.00],
    // T2
    [0.40, 0.70, 0.90, 0.60],
    // FLAIR
    [0.35, 0.75, 1.00, 0.70],
];

/// Placement of one synthetic lesion, in voxel coordinates `[z, y, x]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LesionTruth {
    pub center: [usize; 3],
    /// Radii of the outer (edema) ellipsoid.
    pub radii: [f64; 3],
}

impl LesionTruth {
    /// Inclusive range of axial slices the lesion touches.
    pub fn slab(&self) -> (usize, usize) {
        let r = self.radii[0].floor() as usize;
        (self.center[0] - r, self.center[0] + r)
    }

    pub fn analytic_volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radii.iter().product::<f64>()
    }

    fn contains(&self, p: [usize; 3], scale: f64) -> bool {
        (0..3)
            .map(|a| {
                let d = p[a] as f64 - self.center[a] as f64;
                (d / (self.radii[a] * scale)).powi(2)
            })
            .sum::<f64>()
            <= 1.0
    }
}

#[derive(Debug, Clone)]
pub struct SynthCase {
    pub sample: VolumeSample,
    pub lesions: Vec<LesionTruth>,
}

fn raw_rank(label: u8) -> u8 {
    match label {
        2 => 1,
        1 => 2,
        4 => 3,
        _ => 0,
    }
}

/// Deterministic phantom: an ellipsoidal brain holding nested ellipsoidal
/// lesions (core 4 inside 1, surrounded by edema 2), with label-dependent
/// intensities plus Gaussian noise.
pub fn synth_case(case_id: &str, seed: u64, dims: [usize; 3], num_lesions: usize) -> Result<SynthCase> {
    if dims.iter().zip(MIN_DIMS).any(|(&d, m)| d < m) {
        return Err(contract_err!("synthetic dims {dims:?} must be at least {MIN_DIMS:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = dims.map(|d| d as f64);
    let brain_center = f.map(|d| (d - 1.0) / 2.0);
    let brain_radii = f.map(|d| d * rng.random_range(0.40..0.46));

    let mut lesions = Vec::with_capacity(num_lesions);
    for _ in 0..num_lesions {
        let radii = [
            (f[0] * rng.random_range(0.15..0.25)).max(3.0),
            (f[1] * rng.random_range(0.10..0.16)).max(3.0),
            (f[2] * rng.random_range(0.10..0.16)).max(3.0),
        ];
        let mut center = [0usize; 3];
        for a in 0..3 {
            let r = radii[a].floor() as i64;
            let span = (f[a] * 0.12) as i64;
            let c = brain_center[a].round() as i64 + rng.random_range(-span..=span);
            center[a] = c.clamp(r, dims[a] as i64 - 1 - r) as usize;
        }
        lesions.push(LesionTruth { center, radii });
    }

    let [d, h, w] = dims;
    let mut label = vec![0u8; d * h * w];
    let mut inside = vec![false; d * h * w];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (z * h + y) * w + x;
                let p = [z, y, x];
                inside[i] = (0..3)
                    .map(|a| ((p[a] as f64 - brain_center[a]) / brain_radii[a]).powi(2))
                    .sum::<f64>()
                    <= 1.0;
                for l in &lesions {
                    let here = if l.contains(p, CORE_SCALE) {
                        4
                    } else if l.contains(p, MIDDLE_SCALE) {
                        1
                    } else if l.contains(p, 1.0) {
                        2
                    } else {
                        0
                    };
                    if raw_rank(here) > raw_rank(label[i]) {
                        label[i] = here;
                    }
                }
                inside[i] |= label[i] != 0;
            }
        }
    }

    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    let modalities = INTENSITY.map(|levels| {
        let data = (0..d * h * w)
            .map(|i| {
                if !inside[i] {
                    return 0.0;
                }
                let base = match label[i] {
                    0 => levels[0],
                    1 => levels[1],
                    2 => levels[2],
                    _ => levels[3],
                };
                base + noise.sample(&mut rng) as f32
            })
            .collect();
        Volume::new(dims, data).expect("dims checked")
    });
    let sample = VolumeSample::new(case_id, modalities, LabelMap::new(dims, label)?, None)?;
    Ok(SynthCase { sample, lesions })
}

/// Seed of case `index` in a synthetic dataset.
pub fn case_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (index as u64 + 1).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

pub fn case_name(index: usize) -> String {
    format!("synth_{index:03}")
}

/// Case `index` of a synthetic dataset; it holds one or two lesions.
pub fn synth_dataset_case(seed: u64, index: usize, dims: [usize; 3]) -> Result<SynthCase> {
    let s = case_seed(seed, index);
    synth_case(&case_name(index), s, dims, 1 + (s % 2) as usize)
}

pub fn synth_dataset(seed: u64, cases: usize, dims: [usize; 3]) -> Result<Vec<SynthCase>> {
    (0..cases).map(|i| synth_dataset_case(seed, i, dims)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_degenerate_dims_rejected() {
        let a = synth_case("a", 7, [8, 64, 64], 2).unwrap();
        let b = synth_case("a", 7, [8, 64, 64], 2).unwrap();
        assert_eq!(a.sample, b.sample);
        assert!(synth_case("a", 7, [7, 64, 64], 1).is_err());
        assert!(synth_case("a", 7, [8, 63, 64], 1).is_err());
    }

    #[test]
    fn no_lesions_means_no_labels() {
        let c = synth_case("a", 3, [8, 64, 64], 0).unwrap();
        assert!(c.sample.label.data().iter().all(|&l| l == 0));
        assert!(c.lesions.is_empty());
    }

    #[test]
    fn labels_are_raw_brats_values() {
        let c = synth_case("a", 11, [16, 64, 64], 2).unwrap();
        let mut seen = [false; 5];
        for &l in c.sample.label.data() {
            seen[l as usize] = true;
        }
        assert!(!seen[3]);
        assert!(seen[0] && seen[1] && seen[2] && seen[4], "{seen:?}");
    }
}
