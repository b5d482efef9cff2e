use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use segforge_core::data::{
    read_nifti, split_dataset, synth_dataset, write_case_nifti, write_case_svol, write_nifti, NiftiHeader,
    NiftiPayload, NiftiType, SliceConfig, Svol, SvolData,
};
use segforge_core::train::{
    evaluate, predict_case, train_with, write_prediction, Checkpoint, DataSource, EvalOptions, RunConfig,
};
use segforge_core::{Error, ErrorClass, Result};

#[derive(Parser)]
#[command(name = "segforge", version, about = "Glioma segmentation with an SE-ResNet U-Net")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Small model on four synthetic cases.
    Desk,
    /// Full-width network; needs `data_root` or `synthetic` via overrides.
    Full,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Svol,
    Nii,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write curves and checkpoints to the output directory.
    Train {
        /// Run configuration (JSON).
        #[arg(long, required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Start from a built-in configuration instead of a file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<Preset>,
        /// `dotted.key=value`, applied in order after loading.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Score a checkpoint on one side of its data split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Case directory root; defaults to the checkpoint's data source.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
        /// Write per-case predicted and true masks as .svol here.
        #[arg(long)]
        save_masks: Option<PathBuf>,
        /// Drop slices with a smaller foreground fraction.
        #[arg(long, default_value_t = 0.0)]
        min_foreground: f64,
        /// Run configuration whose model must match the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Segment one case directory into a label volume.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        /// Case directory holding the modality volumes.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output mask, `.svol` or `.nii`.
        #[arg(long)]
        out: PathBuf,
        /// Case id used in file names; defaults to the directory name.
        #[arg(long)]
        case_id: Option<String>,
    },
    /// Generate synthetic phantom cases.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        cases: usize,
        #[arg(long)]
        out: PathBuf,
        /// Volume size as D,H,W.
        #[arg(long, value_delimiter = ',', default_values_t = [16, 64, 64])]
        dims: Vec<usize>,
        #[arg(long, value_enum, default_value = "svol")]
        format: Format,
    },
    /// Convert a volume between .nii and .svol.
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Runtime => 4,
            })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train {
            config,
            preset,
            overrides,
        } => cmd_train(config.as_deref(), preset, &overrides),
        Command::Eval {
            ckpt,
            data,
            split,
            save_masks,
            min_foreground,
            config,
            json,
        } => cmd_eval(&ckpt, data, split, save_masks, min_foreground, config.as_deref(), json.as_deref()),
        Command::Predict {
            ckpt,
            input,
            out,
            case_id,
        } => cmd_predict(&ckpt, &input, &out, case_id),
        Command::Synth {
            seed,
            cases,
            out,
            dims,
            format,
        } => cmd_synth(seed, cases, &out, &dims, format),
        Command::Convert { input, out } => cmd_convert(&input, &out),
    }
}

fn cmd_train(config: Option<&Path>, preset: Option<Preset>, overrides: &[String]) -> Result<()> {
    let mut cfg = match (config, preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(Preset::Desk)) => RunConfig::desk(),
        (None, Some(Preset::Full)) | (None, None) => RunConfig::default(),
    };
    for o in overrides {
        cfg.apply_override(o)?;
    }
    let outcome = train_with(&cfg, |r| {
        println!(
            "epoch {:>4} {:<5} loss {:.4}  dice {:.4}  iou {:.4}  mean_iou {:.4}  acc {:.4}",
            r.epoch, r.split, r.loss, r.dice, r.iou, r.mean_iou, r.accuracy
        )
    })?;
    if let Some(b) = outcome.best {
        println!("best dice {:.4} at epoch {}", b.dice, b.epoch);
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_eval(
    ckpt: &Path,
    data: Option<PathBuf>,
    split: SplitArg,
    save_masks: Option<PathBuf>,
    min_foreground: f64,
    config: Option<&Path>,
    json: Option<&Path>,
) -> Result<()> {
    let ck = Checkpoint::load(ckpt)?;
    let expected = config.map(RunConfig::load).transpose()?;
    let mut model = ck.restore_model(expected.as_ref().map(|c| &c.model))?;
    let cfg = &ck.config;
    let source = match data {
        Some(root) => DataSource::Directory(root),
        None => DataSource::from_config(cfg)?,
    };
    let ids = source.case_ids()?;
    let selected = match split {
        SplitArg::All => ids,
        _ => {
            let (train, val) = split_dataset(&ids, cfg.split.fraction, cfg.split.seed)
                .map_err(|e| Error::Data(e.to_string()))?;
            if split == SplitArg::Train {
                train
            } else {
                val
            }
        }
    };
    let opts = EvalOptions {
        slices: SliceConfig {
            crop: cfg.crop,
            min_foreground_fraction: min_foreground,
        },
        batch_size: cfg.batch_size,
        loss: cfg.loss,
        save_masks,
    };
    let report = evaluate(&mut model, &source, &selected, &opts)?;
    print!("{}", report.render_table());
    if let Some(path) = json {
        std::fs::write(path, report.to_json()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn cmd_predict(ckpt: &Path, input: &Path, out: &Path, case_id: Option<String>) -> Result<()> {
    let ck = Checkpoint::load(ckpt)?;
    let mut model = ck.restore_model(None)?;
    let case_id = match case_id {
        Some(id) => id,
        None => input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Data(format!("cannot take a case id from {}", input.display())))?,
    };
    let pred = predict_case(&mut model, input, &case_id, ck.config.crop, ck.config.batch_size)?;
    write_prediction(&pred, out)?;
    let fg = pred.mask.data().iter().filter(|&&l| l > 0).count();
    println!("wrote {} ({:?}, {fg} foreground voxels)", out.display(), pred.mask.dims());
    Ok(())
}

fn cmd_synth(seed: u64, cases: usize, out: &Path, dims: &[usize], format: Format) -> Result<()> {
    let dims: [usize; 3] = dims
        .try_into()
        .map_err(|_| Error::Config(format!("dims must be D,H,W, got {dims:?}")))?;
    for case in synth_dataset(seed, cases, dims)? {
        let dir = out.join(&case.sample.case_id);
        match format {
            Format::Svol => write_case_svol(&dir, &case.sample)?,
            Format::Nii => write_case_nifti(&dir, &case.sample)?,
        }
        println!("{} ({} lesions)", dir.display(), case.lesions.len());
    }
    Ok(())
}

fn extension(p: &Path) -> Option<&str> {
    p.extension().and_then(|e| e.to_str())
}

fn cmd_convert(input: &Path, out: &Path) -> Result<()> {
    match (extension(input), extension(out)) {
        (Some("nii"), Some("svol")) => {
            let nv = read_nifti(input)?;
            let h = &nv.header;
            let unscaled = h.scl_slope == 0.0 || (h.scl_slope, h.scl_inter) == (1.0, 0.0);
            let svol = if h.datatype == NiftiType::U8 && unscaled {
                Svol::new(
                    nv.volume.dims().to_vec(),
                    SvolData::U8(nv.volume.data().iter().map(|&v| v as u8).collect()),
                )?
            } else {
                Svol::from_volume(&nv.volume)
            };
            svol.write(out)
        }
        (Some("svol"), Some("nii")) => {
            let svol = Svol::read(input)?;
            let vol = svol.to_volume()?;
            let header = NiftiHeader::new(vol.dims(), [1.0; 3])?;
            match &svol.data {
                SvolData::U8(v) => write_nifti(out, &header, vol.dims(), NiftiPayload::U8(v)),
                _ => write_nifti(out, &header, vol.dims(), NiftiPayload::F32(vol.data())),
            }
        }
        _ => Err(Error::Config(format!(
            "convert needs .nii -> .svol or .svol -> .nii, got {} -> {}",
            input.display(),
            out.display()
        ))),
    }
}
