//! Fixtures shared by the benchmarks.

use segforge_core::data::{extract_slices, synth_case, Slice, SliceBatch, SliceConfig};
use segforge_core::{Fill, Tensor};

pub fn random(dims: &[usize], seed: u64) -> Tensor<f32> {
    Tensor::create(
        dims,
        Fill::Normal {
            mean: 0.0,
            std: 1.0,
            seed,
        },
        false,
    )
    .expect("valid dims")
}

/// A batch of `n` tumor-bearing synthetic slices at `size`×`size`.
pub fn synthetic_batch(n: usize, size: usize) -> SliceBatch {
    let case = synth_case("bench", 5, [16, size.max(64), size.max(64)], 2).expect("valid dims");
    let slices = extract_slices(&case.sample, &SliceConfig::training([size, size])).expect("valid crop");
    let refs: Vec<&Slice> = slices.iter().cycle().take(n).collect();
    SliceBatch::new(&refs).expect("nonempty batch")
}
