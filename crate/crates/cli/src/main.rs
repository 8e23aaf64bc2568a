//! Command line front end for the robust-training toolkit: dataset
//! generation, training, evaluation, and small hyperparameter sweeps.
//!
//! Every command works inside a run directory (`--out`); paths given on
//! the command line resolve relative to it, and a `manifest.json` with the
//! fully resolved configuration is written next to the outputs.

mod config;
mod manifest;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use openloop_core::dataset::{
    self, generate_blobs, inject_closed_set_noise, inject_open_set_noise, Dataset, NoiseKind,
    NoiseSpec, OutlierGenerator,
};
use openloop_core::evaluation::{self, ConfusionCounts};
use openloop_core::model::{load_checkpoint, save_checkpoint};
use openloop_core::trainer::{self, TrainConfig};
use openloop_core::{Error, Result};

use config::{FileConfig, GenParams, NoiseChoice};

#[derive(Parser)]
#[command(
    name = "openloop",
    version,
    about = "Noise-robust classifier training: outlier-based label noise detection, \
             contrastive feature learning, reweighted softmax"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/test CSVs, optionally corrupted by label noise.
    Gen(GenArgs),
    /// Train a model on generated data; writes checkpoint, history, and
    /// detection snapshot.
    Train(TrainArgs),
    /// Evaluate a checkpoint: accuracy, detection quality, feature export.
    Eval(EvalArgs),
    /// Grid sweep over eta and noise rate; one run directory per cell.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// Run directory; output files and relative input paths live under it.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Plain-text `key = value` config file. Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Default)]
struct GenOpts {
    /// Number of classes (Gaussian blobs on a line, `separation` apart).
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    /// Clean test samples per class (defaults to --per-class).
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Within-class standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Distance between adjacent class centers.
    #[arg(long)]
    separation: Option<f64>,
    /// Label noise kind: none, open, closed.
    #[arg(long)]
    noise: Option<String>,
    /// Fraction of each class replaced/flipped, in [0, 1).
    #[arg(long)]
    rate: Option<f64>,
    /// Comma-separated center of the open-set outlier blob.
    #[arg(long)]
    outlier_center: Option<String>,
    #[arg(long)]
    outlier_sigma: Option<f64>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Generator seed (mandatory: runs must be reproducible).
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    opts: GenOpts,
}

#[derive(Args, Default)]
struct TrainOpts {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    /// Run detection every N epochs after warm-up.
    #[arg(long)]
    detect_every: Option<usize>,
    /// Weight of the contrastive term.
    #[arg(long)]
    eta: Option<f64>,
    /// Contrastive margin.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    squared_hinge: Option<bool>,
    /// Detection probability threshold (noisy above it).
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated epochs at which the learning rate drops.
    #[arg(long)]
    lr_drops: Option<String>,
    #[arg(long)]
    lr_factor: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Mined pairs per batch (half similar, half dissimilar).
    #[arg(long)]
    pair_budget: Option<usize>,
    /// Samples per batch entering pair mining.
    #[arg(long)]
    pool_size: Option<usize>,
    /// Comma-separated hidden layer widths.
    #[arg(long)]
    hidden: Option<String>,
    /// none | a1 | a2 | b1 | b2 | c1 | c2
    #[arg(long)]
    ablation: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Training CSV, relative to --out.
    #[arg(long, default_value = "train.csv")]
    train: PathBuf,
    /// Clean test CSV, relative to --out.
    #[arg(long, default_value = "test.csv")]
    test: PathBuf,
    /// Also save an intermediate checkpoint every N epochs.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "checkpoint.json")]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test.csv")]
    test: PathBuf,
    /// Training CSV with ground-truth noise flags; enables detection
    /// metrics together with --detection.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Detection snapshot CSV written by `train`.
    #[arg(long)]
    detection: Option<PathBuf>,
    /// Write pre-softmax features of the test set to this CSV.
    #[arg(long)]
    export_features: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated eta grid.
    #[arg(long)]
    etas: String,
    /// Comma-separated noise-rate grid.
    #[arg(long)]
    rates: String,
    #[command(flatten)]
    gen: GenOpts,
    #[command(flatten)]
    train: TrainOpts,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn in_out(out: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out.join(p)
    }
}

fn load_file_config(common: &Common) -> Result<FileConfig> {
    let path = common.config.as_ref().map(|p| in_out(&common.out, p));
    FileConfig::load(path.as_deref())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    std::fs::create_dir_all(&args.common.out)?;
    let file = load_file_config(&args.common)?;
    let params = config::resolve_gen(&file, &args.opts, args.seed)?;
    let (train, test) = generate(&params)?;

    dataset::save_csv(&train, args.common.out.join("train.csv"))?;
    dataset::save_csv(&test, args.common.out.join("test.csv"))?;
    let artifacts = BTreeMap::from([
        ("train", "train.csv".to_string()),
        ("test", "test.csv".to_string()),
    ]);
    manifest::record(&args.common.out, "gen", params.seed, &params, &artifacts)?;

    let noisy = train.samples.iter().filter(|s| s.truth_noisy).count();
    println!("train_samples={}", train.len());
    println!("test_samples={}", test.len());
    println!("noisy_samples={noisy}");
    Ok(())
}

/// Class centers sit on the first axis, `separation` apart.
fn generate(p: &GenParams) -> Result<(Dataset, Dataset)> {
    let centers: Vec<Vec<f64>> = (0..p.classes)
        .map(|i| {
            let mut c = vec![0.0; p.dim];
            c[0] = i as f64 * p.separation;
            c
        })
        .collect();
    let train = generate_blobs(p.classes, p.per_class, p.dim, &centers, p.sigma, p.seed)?;
    let test = generate_blobs(
        p.classes,
        p.test_per_class,
        p.dim,
        &centers,
        p.sigma,
        p.seed ^ 0x7e57,
    )?;

    let train = match p.noise {
        NoiseChoice::None => train,
        NoiseChoice::Open => {
            let center = p.outlier_center.clone().unwrap_or_else(|| {
                // default: above the midpoint of the line of centers, so
                // the outliers overlap every class without matching any
                let mut c = vec![0.0; p.dim];
                c[0] = (p.classes - 1) as f64 * p.separation / 2.0;
                if p.dim > 1 {
                    c[1] = p.separation / 3.0;
                }
                c
            });
            let spec = NoiseSpec {
                kind: NoiseKind::OpenSet,
                rate: p.rate,
                outlier_generator: Some(OutlierGenerator::Blob {
                    center,
                    sigma: p.outlier_sigma,
                }),
                seed: p.seed ^ 0xabcd,
            };
            inject_open_set_noise(&train, &spec)?
        }
        NoiseChoice::Closed => inject_closed_set_noise(&train, p.rate, p.seed ^ 0xabcd)?,
    };
    Ok((train, test))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    std::fs::create_dir_all(&args.common.out)?;
    let file = load_file_config(&args.common)?;
    let cfg = config::resolve_train(&file, &args.opts)?;
    run_train(&args.common.out, &args.train, &args.test, &cfg, args.checkpoint_every)?;
    Ok(())
}

/// Shared by `train` and each `sweep` cell. Returns final test accuracy.
fn run_train(
    out: &Path,
    train_path: &Path,
    test_path: &Path,
    cfg: &TrainConfig,
    checkpoint_every: Option<usize>,
) -> Result<f64> {
    let train_ds = dataset::load_csv(in_out(out, train_path))?;
    let test_ds = dataset::load_csv(in_out(out, test_path))?;

    let mut hook_error: Option<Error> = None;
    let result = trainer::train_with(cfg, &train_ds, &test_ds, |epoch, params| {
        if hook_error.is_none()
            && checkpoint_every.is_some_and(|n| epoch % n == 0 && epoch < cfg.epochs)
        {
            let path = out.join(format!("checkpoint_epoch{epoch}.json"));
            if let Err(e) = save_checkpoint(params, cfg.seed, epoch, path) {
                hook_error = Some(e);
            }
        }
    })?;
    if let Some(e) = hook_error {
        return Err(e);
    }

    save_checkpoint(&result.params, cfg.seed, cfg.epochs, out.join("checkpoint.json"))?;
    std::fs::write(out.join("history.log"), result.history.to_log_lines())?;
    result.state.save_csv(out.join("detection.csv"))?;

    let artifacts = BTreeMap::from([
        ("train", path_str(train_path)),
        ("test", path_str(test_path)),
        ("checkpoint", "checkpoint.json".to_string()),
        ("history", "history.log".to_string()),
        ("detection", "detection.csv".to_string()),
    ]);
    manifest::record(out, "train", cfg.seed, cfg, &artifacts)?;

    let accuracy = result
        .history
        .epochs
        .last()
        .map(|e| e.test_accuracy)
        .unwrap_or(0.0);
    let flagged = result
        .state
        .statuses()
        .iter()
        .filter(|&&s| s == openloop_core::detection::Status::Noisy)
        .count();
    println!("final_test_accuracy={accuracy}");
    println!("detection_iterations={}", result.state.iterations());
    println!("flagged_noisy={flagged}");
    Ok(accuracy)
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let out = &args.common.out;
    let ckpt = load_checkpoint(in_out(out, &args.checkpoint))?;
    let test_ds = dataset::load_csv(in_out(out, &args.test))?;
    if ckpt.params.input_dim() != test_ds.dim {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint expects {}-dim inputs, dataset has {}",
            ckpt.params.input_dim(),
            test_ds.dim
        )));
    }
    let acc = evaluation::accuracy(&ckpt.params, &test_ds)?;
    println!("accuracy={acc}");

    if let Some(det_path) = &args.detection {
        let train_path = args.train.as_ref().ok_or_else(|| {
            Error::InvalidArgument("--detection needs --train for the ground-truth flags".into())
        })?;
        let truth_ds = dataset::load_csv(in_out(out, train_path))?;
        let counts = detection_counts(&in_out(out, det_path), &truth_ds)?;
        println!("detection_tpr={}", counts.tpr());
        println!("detection_fpr={}", counts.fpr());
        println!("detection_precision={}", counts.precision());
    }

    let mut artifacts = BTreeMap::new();
    if let Some(path) = &args.export_features {
        evaluation::export_features(&ckpt.params, &test_ds, None, in_out(out, path))?;
        println!("exported_features={}", path_str(path));
        artifacts.insert("features", path_str(path));
    }
    manifest::record(
        out,
        "eval",
        ckpt.seed,
        serde_json::json!({
            "checkpoint": path_str(&args.checkpoint),
            "test": path_str(&args.test),
        }),
        &artifacts,
    )?;
    Ok(())
}

/// Join a detection snapshot (`id,...,status,...` CSV) with the ground
/// truth noise flags of the dataset it was computed on.
fn detection_counts(det_path: &Path, truth: &Dataset) -> Result<ConfusionCounts> {
    let truth_by_id: HashMap<usize, bool> = truth
        .samples
        .iter()
        .map(|s| (s.id, s.truth_noisy))
        .collect();
    let text = std::fs::read_to_string(det_path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Malformed("empty detection file".into()))?
        .split(',')
        .collect();
    let id_col = header.iter().position(|&h| h == "id");
    let status_col = header.iter().position(|&h| h == "status");
    let (Some(id_col), Some(status_col)) = (id_col, status_col) else {
        return Err(Error::Malformed(
            "detection file needs `id` and `status` columns".into(),
        ));
    };
    let mut counts = ConfusionCounts::default();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let id: usize = fields
            .get(id_col)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Malformed(format!("bad detection row `{line}`")))?;
        let detected = match fields.get(status_col).copied() {
            Some("noisy") => true,
            Some("clean") => false,
            _ => return Err(Error::Malformed(format!("bad status in row `{line}`"))),
        };
        let noisy = *truth_by_id
            .get(&id)
            .ok_or_else(|| Error::InvalidArgument(format!("no truth flag for sample id {id}")))?;
        match (detected, noisy) {
            (true, true) => counts.true_positive += 1,
            (true, false) => counts.false_positive += 1,
            (false, false) => counts.true_negative += 1,
            (false, true) => counts.false_negative += 1,
        }
    }
    Ok(counts)
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let file = load_file_config(&args.common)?;
    let etas: Vec<f64> = config::parse_list(&args.etas).map_err(Error::InvalidArgument)?;
    let rates: Vec<f64> = config::parse_list(&args.rates).map_err(Error::InvalidArgument)?;

    let eta_names: Vec<&str> = args.etas.split(',').map(str::trim).collect();
    let rate_names: Vec<&str> = args.rates.split(',').map(str::trim).collect();

    // one --seed drives both generation and training in a sweep
    let base_gen = config::resolve_gen(&file, &args.gen, args.train.seed)?;
    let base_cfg = config::resolve_train(&file, &args.train)?;

    for (rate, rate_name) in rates.iter().zip(&rate_names) {
        for (eta, eta_name) in etas.iter().zip(&eta_names) {
            let cell = args.common.out.join(format!("eta{eta_name}_rate{rate_name}"));
            std::fs::create_dir_all(&cell)?;

            let mut gen = base_gen.clone();
            gen.rate = *rate;
            if gen.noise == NoiseChoice::None && *rate > 0.0 {
                gen.noise = NoiseChoice::Open;
            }
            if !(0.0..1.0).contains(&gen.rate) {
                return Err(Error::InvalidArgument(format!(
                    "rate grid value {rate} outside [0, 1)"
                )));
            }
            let (train_ds, test_ds) = generate(&gen)?;
            dataset::save_csv(&train_ds, cell.join("train.csv"))?;
            dataset::save_csv(&test_ds, cell.join("test.csv"))?;
            let gen_artifacts = BTreeMap::from([
                ("train", "train.csv".to_string()),
                ("test", "test.csv".to_string()),
            ]);
            manifest::record(&cell, "gen", gen.seed, &gen, &gen_artifacts)?;

            let mut cfg = base_cfg.clone();
            cfg.eta = *eta;
            cfg.validate()?;
            let accuracy =
                run_train(&cell, Path::new("train.csv"), Path::new("test.csv"), &cfg, None)?;
            println!("cell=eta{eta_name}_rate{rate_name} eta={eta} rate={rate} accuracy={accuracy}");
        }
    }
    Ok(())
}
