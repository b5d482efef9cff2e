use std::path::Path;
use std::process::{Command, Output};

use segforge_core::data::{read_nifti, Svol};

fn segforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segforge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = segforge(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_train_eval_predict_convert() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    ok(&["synth", "--seed", "2", "--cases", "3", "--dims", "8,64,64", "--format", "nii", "--out", s(&data)]);
    assert!(data.join("synth_000").join("synth_000_seg.nii").exists());

    let root = format!("data_root={}", s(&data));
    let output = format!("output_dir={}", s(&run));
    let log = ok(&[
        "train", "--preset", "desk",
        "--override", "synthetic=null",
        "--override", &root,
        "--override", &output,
        "--override", "epochs=2",
        "--override", "crop=[32,32]",
        "--override", "model.stage_widths=[4,8,8,8]",
        "--override", "model.stem_channels=8",
        "--override", "model.decoder_channels=[16,8,8,8,8]",
        "--override", "model.input_size=[32,32]",
    ]);
    assert_eq!(log.lines().filter(|l| l.starts_with("epoch")).count(), 4, "{log}");
    let ckpt = run.join("last.ckpt");
    assert!(ckpt.exists() && run.join("curves.csv").exists() && run.join("config.json").exists());

    let masks = dir.path().join("masks");
    let report = dir.path().join("report.json");
    let table = ok(&["eval", "--ckpt", s(&ckpt), "--split", "all", "--save-masks", s(&masks), "--json", s(&report)]);
    assert!(table.contains("published, not reproduced"), "{table}");
    let json: String = std::fs::read_to_string(&report).unwrap();
    assert!(json.contains("\"dice\""));
    let pred = Svol::read(masks.join("synth_001_pred.svol")).unwrap();
    assert_eq!(pred.dims, [8, 32, 32]);

    let out = dir.path().join("pred.nii");
    ok(&["predict", "--ckpt", s(&ckpt), "--in", s(&data.join("synth_001")), "--out", s(&out)]);
    let mask = read_nifti(&out).unwrap();
    assert_eq!(mask.volume.dims(), [8, 64, 64]);
    assert!(mask.volume.data().iter().all(|&v| v == v.trunc() && (0.0..4.0).contains(&v)));

    let sv = dir.path().join("pred.svol");
    let back = dir.path().join("back.nii");
    ok(&["convert", "--in", s(&out), "--out", s(&sv)]);
    ok(&["convert", "--in", s(&sv), "--out", s(&back)]);
    assert_eq!(read_nifti(&back).unwrap().volume, mask.volume);
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(&bad_cfg, r#"{"epochs": 1, "no_such_field": true}"#).unwrap();
    assert_eq!(segforge(&["train", "--config", s(&bad_cfg)]).status.code(), Some(2));
    assert_eq!(segforge(&["train", "--preset", "desk", "--override", "batch_size=0"]).status.code(), Some(2));

    let empty = dir.path().join("empty_case");
    std::fs::create_dir_all(&empty).unwrap();
    let missing = segforge(&["convert", "--in", s(&dir.path().join("nope.nii")), "--out", s(&dir.path().join("x.svol"))]);
    assert_ne!(missing.status.code(), Some(0));
    let garbage = dir.path().join("garbage.ckpt");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    let out = segforge(&["predict", "--ckpt", s(&garbage), "--in", s(&empty), "--out", s(&dir.path().join("p.svol"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out.stderr.is_empty());
}
