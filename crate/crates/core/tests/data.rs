
use proptest::prelude::*;

use segforge_core::data::{
    extract_slices, load_case, load_inputs, normalize_modality, parse_nifti, split_dataset, synth_case,
    synth_dataset, write_case_nifti, write_case_svol, Modality, SliceConfig, Svol, SvolData, Volume,
    DEFAULT_TRAIN_FRACTION,
};
use segforge_core::Error;

mod common;
use common::{f32_payload, nifti_bytes};

#[test]
fn nifti_float32_fixture_reads_exact_voxels() {
    // x fastest: voxel (x, y, z) holds 100 z + 10 y + x
    let values: Vec<f32> = (0..8).map(|i| (100 * (i / 4) + 10 * ((i / 2) % 2) + i % 2) as f32 + 0.25).collect();
    for big in [false, true] {
        let bytes = nifti_bytes(big, [2, 2, 2], 16, 32, 0.0, 0.0, &f32_payload(&values, big));
        let nv = parse_nifti(&bytes).unwrap();
        assert_eq!(nv.volume.dims(), [2, 2, 2]);
        assert_eq!(nv.volume.data(), values.as_slice());
        assert_eq!(nv.header.big_endian, big);
    }
}

#[test]
fn nifti_integer_types_and_scaling() {
    let bytes = nifti_bytes(false, [4, 1, 1], 2, 8, 2.0, 1.0, &[0, 1, 2, 3]);
    assert_eq!(parse_nifti(&bytes).unwrap().volume.data(), &[1.0, 3.0, 5.0, 7.0]);

    let i16s: Vec<u8> = [-3i16, 500].iter().flat_map(|v| v.to_be_bytes()).collect();
    let bytes = nifti_bytes(true, [2, 1, 1], 4, 16, 0.0, 9.0, &i16s);
    assert_eq!(parse_nifti(&bytes).unwrap().volume.data(), &[-3.0, 500.0]);

    let u16s: Vec<u8> = [65535u16, 7].iter().flat_map(|v| v.to_le_bytes()).collect();
    let bytes = nifti_bytes(false, [1, 2, 1], 512, 16, 1.0, 0.0, &u16s);
    let nv = parse_nifti(&bytes).unwrap();
    assert_eq!(nv.volume.dims(), [1, 2, 1]);
    assert_eq!(nv.volume.data(), &[65535.0, 7.0]);
}

fn format_offset(r: segforge_core::Result<segforge_core::data::NiftiVolume>) -> u64 {
    match r {
        Err(Error::Format { offset, .. }) => offset,
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn nifti_errors_carry_offsets() {
    let good = nifti_bytes(false, [2, 1, 1], 2, 8, 0.0, 0.0, &[1, 2]);
    let mut bad_magic = good.clone();
    bad_magic[345] = b'i';
    assert_eq!(format_offset(parse_nifti(&bad_magic)), 344);
    let bad_type = nifti_bytes(false, [2, 1, 1], 64, 64, 0.0, 0.0, &[0; 16]);
    assert_eq!(format_offset(parse_nifti(&bad_type)), 70);
    assert_eq!(format_offset(parse_nifti(&good[..353])), 353);
    assert_eq!(format_offset(parse_nifti(&good[..100])), 100);
    let mut bad_size = good;
    bad_size[0] = 0;
    assert_eq!(format_offset(parse_nifti(&bad_size)), 0);
}

fn same_arrays(a: &segforge_core::data::VolumeSample, b: &segforge_core::data::VolumeSample) {
    assert_eq!(a.case_id, b.case_id);
    assert_eq!(a.label, b.label);
    for m in Modality::ALL {
        let (x, y) = (a.modality(m).data(), b.modality(m).data());
        assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()), "{m}");
    }
}

#[test]
fn synthetic_case_round_trips_through_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let case = synth_case("c7", 7, [8, 64, 64], 2).unwrap();
    write_case_svol(dir.path().join("svol"), &case.sample).unwrap();
    same_arrays(&load_case(dir.path().join("svol"), "c7").unwrap(), &case.sample);
    write_case_nifti(dir.path().join("nii"), &case.sample).unwrap();
    let back = load_case(dir.path().join("nii"), "c7").unwrap();
    same_arrays(&back, &case.sample);
    assert_eq!(back.spacing, Some([1.0; 3]));
}

#[test]
fn missing_or_mismatched_files_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let case = synth_case("c", 1, [8, 64, 64], 1).unwrap();
    write_case_svol(dir.path(), &case.sample).unwrap();
    std::fs::remove_file(dir.path().join("seg.svol")).unwrap();
    let err = load_case(dir.path(), "c").unwrap_err();
    assert!(matches!(&err, Error::Data(m) if m.contains("seg")), "{err}");
    // predictions only need the modalities
    assert!(load_inputs(dir.path(), "c").is_ok());

    write_case_svol(dir.path(), &case.sample).unwrap();
    let small = Volume::zeros([8, 64, 32]).unwrap();
    Svol::from_volume(&small).write(dir.path().join("t2.svol")).unwrap();
    let err = load_case(dir.path(), "c").unwrap_err();
    assert!(matches!(&err, Error::Data(m) if m.contains("t2.svol")), "{err}");
}

#[test]
fn lesion_volume_near_analytic_ellipsoid() {
    for seed in 0..6 {
        let case = synth_case("c", seed, [32, 96, 96], 1).unwrap();
        let count = case.sample.label.data().iter().filter(|&&l| l > 0).count() as f64;
        let want = case.lesions[0].analytic_volume();
        assert!((count / want - 1.0).abs() <= 0.2, "seed {seed}: {count} vs {want}");
    }
}

#[test]
fn foreground_filter_keeps_exactly_the_lesion_slab() {
    for seed in 0..4 {
        let case = synth_case("c", seed, [24, 64, 64], 1).unwrap();
        let (z0, z1) = case.lesions[0].slab();
        let cfg = SliceConfig {
            crop: [64, 64],
            min_foreground_fraction: 1e-9,
        };
        let kept: Vec<usize> = extract_slices(&case.sample, &cfg).unwrap().iter().map(|s| s.index).collect();
        assert_eq!(kept, (z0..=z1).collect::<Vec<_>>(), "seed {seed}");
    }
    let empty = synth_case("c", 1, [8, 64, 64], 0).unwrap();
    let cfg = SliceConfig {
        crop: [64, 64],
        min_foreground_fraction: 0.01,
    };
    assert!(extract_slices(&empty.sample, &cfg).unwrap().is_empty());
}

#[test]
fn normalized_support_has_unit_moments_and_is_idempotent() {
    let case = synth_case("c", 3, [8, 64, 64], 1).unwrap();
    let v = case.sample.modality(Modality::Flair);
    let n1 = normalize_modality(v);
    let support: Vec<f64> = n1.data().iter().filter(|&&x| x != 0.0).map(|&x| x as f64).collect();
    let mean = support.iter().sum::<f64>() / support.len() as f64;
    let sd = (support.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / support.len() as f64).sqrt();
    assert!(mean.abs() < 1e-5 && (sd - 1.0).abs() < 1e-5, "{mean} {sd}");
    let n2 = normalize_modality(&n1);
    for (a, b) in n1.data().iter().zip(n2.data()) {
        assert!((a - b).abs() <= 1e-5);
    }
    assert!(v.data().iter().zip(n1.data()).all(|(a, b)| (*a == 0.0) == (*b == 0.0)));
}

#[test]
fn datasets_are_seed_deterministic() {
    let a = synth_dataset(4, 3, [8, 64, 64]).unwrap();
    let b = synth_dataset(4, 3, [8, 64, 64]).unwrap();
    let c = synth_dataset(5, 3, [8, 64, 64]).unwrap();
    for i in 0..3 {
        assert_eq!(a[i].sample, b[i].sample);
        assert_ne!(a[i].sample, c[i].sample);
    }
}

#[test]
fn default_split_of_494_cases() {
    let ids: Vec<String> = (0..494).map(|i| format!("case{i:03}")).collect();
    let (t, v) = split_dataset(&ids, DEFAULT_TRAIN_FRACTION, 0).unwrap();
    assert_eq!((t.len(), v.len()), (369, 125));
    assert_eq!(split_dataset(&ids, DEFAULT_TRAIN_FRACTION, 0).unwrap(), (t, v));
}

fn svol_data() -> impl Strategy<Value = (Vec<usize>, SvolData)> {
    prop::collection::vec(1usize..5, 1..4).prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        let data = prop_oneof![
            prop::collection::vec(any::<f32>(), n).prop_map(SvolData::F32),
            prop::collection::vec(any::<u8>(), n).prop_map(SvolData::U8),
            prop::collection::vec(any::<i16>(), n).prop_map(SvolData::I16),
        ];
        (Just(dims), data)
    })
}

fn bits(d: &SvolData) -> Vec<u32> {
    match d {
        SvolData::F32(v) => v.iter().map(|x| x.to_bits()).collect(),
        SvolData::U8(v) => v.iter().map(|&x| x as u32).collect(),
        SvolData::I16(v) => v.iter().map(|&x| x as u16 as u32).collect(),
    }
}

proptest! {
    #[test]
    fn svol_round_trip_is_bit_exact((dims, data) in svol_data()) {
        let s = Svol::new(dims, data).unwrap();
        let back = Svol::decode(&s.encode()).unwrap();
        prop_assert_eq!(&back.dims, &s.dims);
        prop_assert_eq!(back.data.code(), s.data.code());
        prop_assert_eq!(bits(&back.data), bits(&s.data));
    }

    #[test]
    fn split_partitions_ids(n in 2usize..60, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
        let (t, v) = split_dataset(&ids, frac, seed).unwrap();
        prop_assert!(!t.is_empty() && !v.is_empty());
        prop_assert!(t.iter().all(|x| !v.contains(x)));
        let mut all: Vec<String> = t.iter().chain(&v).cloned().collect();
        all.sort();
        let mut want = ids.clone();
        want.sort();
        prop_assert_eq!(all, want);
    }

    #[test]
    fn slice_targets_are_one_hot(seed in 0u64..1000) {
        let case = synth_case("c", seed, [8, 64, 64], 2).unwrap();
        let slices = extract_slices(&case.sample, &SliceConfig::evaluation([32, 64])).unwrap();
        let refs: Vec<_> = slices.iter().collect();
        let batch = segforge_core::data::SliceBatch::new(&refs).unwrap();
        let t = batch.targets.data();
        let plane = 32 * 64;
        for n in 0..slices.len() {
            for p in 0..plane {
                let s: f32 = (0..4).map(|c| t[(n * 4 + c) * plane + p]).sum();
                prop_assert_eq!(s, 1.0);
            }
        }
        prop_assert!(batch.images.is_finite());
    }
}

