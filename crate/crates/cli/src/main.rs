//! `mangocnn`: train, evaluate and inspect small CNN leaf-disease classifiers.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mangocnn::config::{bundled, render_report, thousands};
use mangocnn::data::{scan_dataset, stratified_split, Split, SplitManifest};
use mangocnn::solver::{solve_config, Family};
use mangocnn::train::{
    evaluate, predict, resolve_manifest, run_training, EpochRecord, ImageStore, TrainJob,
    TrainingConfig,
};
use mangocnn::{AugmentPolicy, Checkpoint, Error, ModelConfig, Sequential};

#[derive(Parser)]
#[command(
    name = "mangocnn",
    version,
    about = "From-scratch CNN training for leaf-disease images"
)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, history and curves.
    Train(TrainArgs),
    /// Loss and accuracy of a checkpoint on one split.
    Evaluate(EvaluateArgs),
    /// Ranked class probabilities for one image.
    Predict(PredictArgs),
    /// Layer-by-layer parameter audit of a config.
    Params(ParamsArgs),
    /// Search the conv/pool/dense family for configs with an exact parameter count.
    SolveConfig(SolveArgs),
    /// Write a stratified 80/10/10 split manifest.
    Split(SplitArgs),
}

#[derive(Args)]
struct ModelArg {
    /// Config file, or the name of a bundled config (e.g. gournet.cfg).
    #[arg(long)]
    config: String,
}

#[derive(Args)]
struct SeedArg {
    #[arg(long, env = "MANGOCNN_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset root with one subdirectory per class.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    #[command(flatten)]
    seed: SeedArg,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// History CSV output path.
    #[arg(long)]
    history: Option<PathBuf>,
    /// SVG accuracy/loss curves output path.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Split manifest: reused if it exists, written otherwise.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Disable flip/rotation augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Keep the final weights instead of the best validation epoch.
    #[arg(long)]
    no_restore_best: bool,
    /// Append every decoded image path to this file.
    #[arg(long)]
    access_log: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split manifest (created from `--seed` if missing).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    access_log: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Image file to classify.
    #[arg(long)]
    image: PathBuf,
    /// Take class names from this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Take class names from the subdirectories of this dataset root.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct ParamsArgs {
    #[command(flatten)]
    model: ModelArg,
}

#[derive(Args)]
struct SolveArgs {
    /// Exact total parameter count to search for.
    #[arg(long)]
    target: usize,
    /// Write the search log here as well as to stdout.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Directory to write every matching config into.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    /// Manifest CSV output path.
    #[arg(long)]
    manifest: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Config { .. } => 1,
        Error::Data(_) | Error::Io { .. } | Error::Checkpoint(_) | Error::Shape(_) => 2,
        Error::Numeric(_) | Error::Domain(_) => 3,
    }
}

fn load_config(spec: &str) -> mangocnn::Result<ModelConfig> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        return ModelConfig::from_text(&text);
    }
    let name = if spec.ends_with(".cfg") {
        spec.to_string()
    } else {
        format!("{spec}.cfg")
    };
    let text = bundled(&name).ok_or_else(|| {
        Error::Argument(format!(
            "config '{spec}' is neither a file nor a bundled config"
        ))
    })?;
    ModelConfig::from_text(text)
}

fn write_file(path: &Path, text: &str) -> mangocnn::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn append_access_log(path: Option<&Path>, paths: &[String]) -> mangocnn::Result<()> {
    let Some(path) = path else { return Ok(()) };
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io)?;
    for p in paths {
        writeln!(f, "{p}").map_err(io)?;
    }
    Ok(())
}

fn input_hw(config: &ModelConfig) -> mangocnn::Result<(usize, usize)> {
    match config.input_shape[..] {
        [h, w, 3] => Ok((h, w)),
        _ => Err(Error::Argument(format!(
            "model input must be HxWx3 for RGB images, got {:?}",
            config.input_shape
        ))),
    }
}

fn load_model(config: &ModelConfig, checkpoint: &Path) -> mangocnn::Result<Sequential<f32>> {
    let mut model = Sequential::zeros(config)?;
    Checkpoint::load(checkpoint)?.apply_to(&mut model)?;
    Ok(model)
}

fn cmd_train(a: TrainArgs) -> mangocnn::Result<()> {
    let job = TrainJob {
        data_root: a.data,
        model: load_config(&a.model.config)?,
        training: TrainingConfig {
            lr: a.lr,
            batch_size: a.batch_size,
            max_epochs: a.epochs,
            patience: a.patience,
            seed: a.seed.seed,
            augment: if a.no_augment {
                AugmentPolicy::none()
            } else {
                AugmentPolicy::default()
            },
            restore_best: !a.no_restore_best,
        },
        manifest: a.manifest,
        checkpoint_out: Some(a.out.clone()),
        history_out: a.history,
        curves_out: a.curves,
    };
    let report = run_training(&job, |r: &EpochRecord| {
        println!(
            "epoch {:>3}  loss {:.4}  accuracy {:.4}  val_loss {:.4}  val_accuracy {:.4}",
            r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
        );
    })?;
    append_access_log(a.access_log.as_deref(), &report.accessed)?;
    let o = &report.outcome;
    println!(
        "{} after {} epochs; best epoch {}; checkpoint {}",
        if o.stopped_early {
            "stopped early"
        } else {
            "finished"
        },
        o.history.len(),
        o.best_epoch,
        a.out.display()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> mangocnn::Result<()> {
    let config = load_config(&a.model.config)?;
    let manifest = resolve_manifest(&a.data, a.manifest.as_deref(), a.seed.seed)?;
    let mut model = load_model(&config, &a.checkpoint)?;
    let (h, w) = input_hw(&config)?;
    let store = ImageStore::new(&a.data, h, w);
    let split = store.load(&manifest.samples(a.split))?;
    append_access_log(a.access_log.as_deref(), &store.accessed())?;
    let r = evaluate(&mut model, &split, a.batch_size)?;
    println!(
        "{} split: {} samples  loss {:.6}  accuracy {:.6} ({}/{})",
        a.split, r.count, r.loss, r.accuracy, r.correct, r.count
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> mangocnn::Result<()> {
    let config = load_config(&a.model.config)?;
    let mut model = load_model(&config, &a.checkpoint)?;
    let class_names = match (&a.manifest, &a.data) {
        (Some(m), _) => SplitManifest::load(m)?.class_names,
        (None, Some(d)) => scan_dataset(d)?.0.class_names,
        (None, None) => (0..config.num_classes())
            .map(|i| format!("class_{i}"))
            .collect(),
    };
    for (name, p) in predict(&mut model, &a.image, &class_names)? {
        println!("{p:.6}  {name}");
    }
    Ok(())
}

fn cmd_params(a: ParamsArgs) -> mangocnn::Result<()> {
    let report = load_config(&a.model.config)?.audit()?;
    print!("{}", render_report(&report));
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> mangocnn::Result<()> {
    let family = Family::default();
    let out = solve_config(a.target, &family);
    print!("{}", out.log);
    if let Some(path) = &a.log {
        write_file(path, &out.log)?;
    }
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        for (i, cfg) in out.configs.iter().enumerate() {
            write_file(
                &dir.join(format!("solution-{:02}.cfg", i + 1)),
                &cfg.to_text(),
            )?;
        }
    }
    if let Some(first) = out.configs.first() {
        println!("first solution ({} parameters):", thousands(a.target));
        print!("{}", first.to_text());
    }
    Ok(())
}

fn cmd_split(a: SplitArgs) -> mangocnn::Result<()> {
    let (ds, report) = scan_dataset(&a.data)?;
    for (path, why) in &report.skipped {
        log::warn!("skipped {path}: {why}");
    }
    let manifest = stratified_split(&ds, a.seed.seed);
    manifest.save(&a.manifest)?;
    for (name, [train, val, test]) in manifest.class_names.iter().zip(manifest.per_class_counts()) {
        println!("{name}: train {train}  val {val}  test {test}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Params(a) => cmd_params(a),
        Command::SolveConfig(a) => cmd_solve(a),
        Command::Split(a) => cmd_split(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
