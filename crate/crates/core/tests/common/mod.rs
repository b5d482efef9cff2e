#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segforge_core::gradcheck::{check, GradCheckConfig, GradCheckReport};
use segforge_core::metrics::DICE_EPS;
use segforge_core::model::{Bottleneck, SeBlock};
use segforge_core::nn::{BatchNorm2d, Conv2d, Dense, Init, Mode, ParamId, ParamStore};
use segforge_core::Result;

pub const GRAD_TOL: f64 = 1e-4;

/// Registers a trainable input filled with `U(-1, 1)`.
pub fn input(store: &mut ParamStore<f64>, name: &str, dims: &[usize], rng: &mut ChaCha8Rng) -> ParamId {
    let id = store.register(name, dims, Init::Zeros, true).unwrap();
    store
        .tensor_mut(id)
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-1.0..1.0));
    id
}

/// Seeded init, then moves zero/one-initialized entries off their defaults
/// so biases and affine terms are exercised at generic values.
pub fn randomize(store: &mut ParamStore<f64>, seed: u64) {
    store.initialize(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    for (_, p) in store.iter_mut() {
        if p.trainable && !matches!(p.init, Init::HeUniform { .. }) {
            p.tensor
                .data_mut()
                .iter_mut()
                .for_each(|v| *v += rng.random_range(-0.5..0.5));
        }
    }
}

fn cfg(seed: u64, cap: Option<usize>) -> GradCheckConfig {
    GradCheckConfig {
        seed,
        max_elements_per_param: cap,
        ..GradCheckConfig::default()
    }
}

pub fn conv2d(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let stride = 1 + (seed % 2) as usize;
    let conv = Conv2d::new(&mut store, "conv", 3, 4, 3, stride, 1, true)?;
    randomize(&mut store, seed);
    let x = input(&mut store, "x", &[2, 3, 5, 5], &mut rng);
    check(&mut store, Mode::Train, &cfg(seed, None), |s| {
        let xv = s.param(x);
        conv.forward(s, &xv)
    })
}

pub fn batchnorm(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let bn = BatchNorm2d::new(&mut store, "bn", 4)?;
    randomize(&mut store, seed);
    let x = input(&mut store, "x", &[3, 4, 3, 3], &mut rng);
    check(&mut store, Mode::Train, &cfg(seed, None), |s| {
        let xv = s.param(x);
        bn.forward(s, &xv)
    })
}

pub fn maxpool(seed: u64) -> Result<GradCheckReport> {
    // Distinct, well separated values keep every window's argmax stable
    // under the finite-difference step.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [2, 3, 6, 6];
    let n: usize = dims.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 / n as f64 - 1.0).collect();
    values.shuffle(&mut rng);
    let mut store = ParamStore::new();
    let x = store.register("x", &dims, Init::Zeros, true)?;
    store.tensor_mut(x).data_mut().copy_from_slice(&values);
    let (k, stride, pad) = if seed % 2 == 0 { (3, 2, 1) } else { (2, 2, 0) };
    check(&mut store, Mode::Train, &cfg(seed, None), |s| {
        let xv = s.param(x);
        s.tape.max_pool2d(&xv, k, stride, pad)
    })
}

pub fn global_pool(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let x = input(&mut store, "x", &[2, 5, 4, 3], &mut rng);
    check(&mut store, Mode::Train, &cfg(seed, None), |s| {
        let xv = s.param(x);
        s.tape.global_avg_pool(&xv)
    })
}

pub fn upsample(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let x = input(&mut store, "x", &[2, 3, 3, 4], &mut rng);
    let factor = 2 + (seed % 2) as usize;
    check(&mut store, Mode::Train, &cfg(seed, None), |s| {
        let xv = s.param(x);
        s.tape.upsample_nearest(&xv, factor)
    })
}

pub fn dense(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, "fc", 6, 5)?;
    randomize(&mut store, seed);
    let x = input(&mut store, "x", &[4, 6], &mut rng);
    check(&mut store, Mode::Train, &cfg(seed, None), |s| {
        let xv = s.param(x);
        layer.forward(s, &xv)
    })
}

pub fn se_block(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let se = SeBlock::new(&mut store, "se", 8, 4)?;
    randomize(&mut store, seed);
    let x = input(&mut store, "x", &[2, 8, 3, 3], &mut rng);
    check(&mut store, Mode::Train, &cfg(seed, None), |s| {
        let xv = s.param(x);
        se.forward(s, &xv)
    })
}

pub fn bottleneck(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    // odd seeds take the strided, projected-shortcut path
    let (in_c, stride) = if seed % 2 == 0 { (16, 1) } else { (8, 2) };
    let block = Bottleneck::new(&mut store, "b", in_c, 4, stride, 4)?;
    randomize(&mut store, seed);
    let x = input(&mut store, "x", &[2, in_c, 4, 4], &mut rng);
    check(&mut store, Mode::Train, &cfg(seed, Some(12)), |s| {
        let xv = s.param(x);
        block.forward(s, &xv)
    })
}

pub fn soft_dice(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, c) = if seed % 2 == 0 { (1, 2) } else { (2, 4) };
    let (h, w) = (4, 4);
    let mut store = ParamStore::new();
    let z = store.register("logits", &[n, c, h, w], Init::Zeros, true)?;
    store
        .tensor_mut(z)
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-2.0..2.0));
    let mut onehot = vec![0.0; n * c * h * w];
    for ni in 0..n {
        for p in 0..h * w {
            let k = rng.random_range(0..c);
            onehot[(ni * c + k) * h * w + p] = 1.0;
        }
    }
    let target = segforge_core::Tensor::from_vec(&[n, c, h, w], onehot)?;
    check(&mut store, Mode::Train, &cfg(seed, None), |s| {
        let zv = s.param(z);
        let t = s.tape.constant(&target);
        s.tape.soft_dice_loss(&zv, &t, DICE_EPS)
    })
}

pub type Instance = fn(u64) -> Result<GradCheckReport>;

pub const LAYERS: [(&str, Instance); 9] = [
    ("conv2d", conv2d),
    ("batchnorm", batchnorm),
    ("maxpool", maxpool),
    ("global_avg_pool", global_pool),
    ("upsample", upsample),
    ("dense", dense),
    ("se_block", se_block),
    ("bottleneck", bottleneck),
    ("soft_dice_loss", soft_dice),
];

/// Builds a single-file NIfTI-1 image by hand from the header layout.
pub fn nifti_bytes(big: bool, dims: [i16; 3], datatype: i16, bitpix: i16, slope: f32, inter: f32, payload: &[u8]) -> Vec<u8> {
    let mut b = vec![0u8; 352];
    let put16 = |b: &mut Vec<u8>, off: usize, v: i16| {
        let bytes = if big { v.to_be_bytes() } else { v.to_le_bytes() };
        b[off..off + 2].copy_from_slice(&bytes);
    };
    let put32 = |b: &mut Vec<u8>, off: usize, v: [u8; 4]| b[off..off + 4].copy_from_slice(&v);
    let f = |v: f32| if big { v.to_be_bytes() } else { v.to_le_bytes() };
    put32(&mut b, 0, if big { 348i32.to_be_bytes() } else { 348i32.to_le_bytes() });
    put16(&mut b, 40, 3);
    for (i, d) in dims.iter().enumerate() {
        put16(&mut b, 42 + 2 * i, *d);
    }
    put16(&mut b, 70, datatype);
    put16(&mut b, 72, bitpix);
    for i in 0..4 {
        put32(&mut b, 76 + 4 * i, f(1.0));
    }
    put32(&mut b, 108, f(352.0));
    put32(&mut b, 112, f(slope));
    put32(&mut b, 116, f(inter));
    b[344..348].copy_from_slice(b"n+1\0");
    b.extend_from_slice(payload);
    b
}

pub fn f32_payload(values: &[f32], big: bool) -> Vec<u8> {
    values
        .iter()
        .flat_map(|v| if big { v.to_be_bytes() } else { v.to_le_bytes() })
        .collect()
}
