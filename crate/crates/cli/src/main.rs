//! cadx: train, evaluate and explain the volume classification pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 numeric failure.

mod commands;
mod config;
mod tables;

use clap::{Args, Parser, Subcommand};
use commands::ExplainMethod;
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cadx",
    version,
    about = "Volume classification pipeline: phantom data, CNN + SVM fusion, evaluation, explanations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic phantom dataset.
    Phantom(PhantomArgs),
    /// Preprocess a dataset into cached frames plus sidecars.
    Preprocess(PreprocessArgs),
    /// Train the feature extractor and fusion classifier on a full manifest.
    Train(TrainArgs),
    /// Grouped k-fold cross-validation with report, CSV and SVG outputs.
    Evaluate(EvaluateArgs),
    /// Classify one volume directory of PGM frames.
    Predict(PredictArgs),
    /// Write a guided-backprop or saliency attribution map for one frame.
    Explain(ExplainArgs),
    /// Project penultimate-layer features of a dataset with PCA.
    Pca(PcaArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// Output directory for frames and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// PhantomConfig JSON file; omitted means built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Patients per class (uniform override).
    #[arg(long)]
    patients: Option<usize>,
    /// Specimens per patient.
    #[arg(long)]
    specimens: Option<usize>,
    /// Volumes per specimen (uniform override).
    #[arg(long)]
    volumes: Option<usize>,
    /// Frames per volume.
    #[arg(long)]
    frames: Option<usize>,
    /// Square frame size in pixels.
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct PredictArgs {
    /// Model directory produced by `cadx train`.
    #[arg(long)]
    model: PathBuf,
    /// Directory holding the volume's frames as .pgm files.
    #[arg(long)]
    volume: PathBuf,
    #[arg(long)]
    age: u32,
    /// HPV result: 0 negative, 1 positive.
    #[arg(long)]
    hpv: u8,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input frame (.pgm).
    #[arg(long)]
    frame: PathBuf,
    /// gb (guided backpropagation) or saliency.
    #[arg(long)]
    method: String,
    /// auto (predicted class) or a class code 0..4.
    #[arg(long, default_value = "auto")]
    class: String,
    /// Output attribution map (.pgm).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PcaArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 3)]
    components: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("usage error: {message}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version on stdout with success; real usage
            // errors map to exit code 1.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Phantom(args) => run_phantom(args),
        Command::Preprocess(args) => {
            load_run_config(args.config.as_deref(), None, None, None)
                .and_then(|run| commands::preprocess(&args.manifest, &run, &args.out))
        }
        Command::Train(args) => load_run_config(args.config.as_deref(), args.seed, None, None)
            .and_then(|run| commands::train(&args.manifest, &run, &args.out)),
        Command::Evaluate(args) => {
            if let Some(t) = args.threshold {
                if !(0.0..=1.0).contains(&t) {
                    return usage_error("--threshold must lie in [0, 1]");
                }
            }
            if matches!(args.folds, Some(k) if k < 2) {
                return usage_error("--folds must be at least 2");
            }
            load_run_config(args.config.as_deref(), args.seed, args.folds, args.threshold)
                .and_then(|run| commands::evaluate(&args.manifest, &run, &args.out).map(|_| ()))
        }
        Command::Predict(args) => {
            if args.hpv > 1 {
                return usage_error("--hpv must be 0 or 1");
            }
            if let Some(t) = args.threshold {
                if !(0.0..=1.0).contains(&t) {
                    return usage_error("--threshold must lie in [0, 1]");
                }
            }
            commands::predict(
                &args.model,
                &args.volume,
                args.age,
                args.hpv == 1,
                args.threshold,
            )
        }
        Command::Explain(args) => {
            let method = match args.method.as_str() {
                "gb" => ExplainMethod::GuidedBackprop,
                "saliency" => ExplainMethod::Saliency,
                other => return usage_error(&format!("unknown method '{other}', expected gb|saliency")),
            };
            let class = match args.class.as_str() {
                "auto" => None,
                code => match code.parse::<u8>().ok().and_then(|c| {
                    cadx_core::dataset::FineClass::from_code(c).ok()
                }) {
                    Some(c) => Some(c),
                    None => return usage_error("--class must be auto or 0..4"),
                },
            };
            commands::explain(&args.model, &args.frame, method, class, &args.out)
        }
        Command::Pca(args) => {
            if args.components == 0 {
                return usage_error("--components must be at least 1");
            }
            commands::pca(&args.model, &args.manifest, args.components, &args.out)
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run_phantom(args: PhantomArgs) -> cadx_core::Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| cadx_core::CadxError::io(path, e))?;
            serde_json::from_str::<cadx_core::dataset::PhantomConfig>(&text)
                .map_err(|e| cadx_core::CadxError::parse(path, e.to_string()))?
        }
        None => cadx_core::dataset::PhantomConfig::default(),
    };
    if let Some(p) = args.patients {
        config.patients_per_class = [p; 5];
    }
    if let Some(s) = args.specimens {
        config.specimens_per_patient = s;
    }
    if let Some(v) = args.volumes {
        config.volumes_per_specimen = [v; 5];
    }
    if let Some(f) = args.frames {
        config.frames_per_volume = f;
    }
    if let Some(s) = args.size {
        config.frame_size = s;
    }
    commands::phantom(&config, args.seed, &args.out)
}

fn load_run_config(
    path: Option<&std::path::Path>,
    seed: Option<u64>,
    folds: Option<usize>,
    threshold: Option<f64>,
) -> cadx_core::Result<RunConfig> {
    let mut run = RunConfig::load_or_default(path)?;
    if let Some(seed) = seed {
        run.pipeline.seed = seed;
    }
    if let Some(folds) = folds {
        run.pipeline.folds = folds;
    }
    if let Some(threshold) = threshold {
        run.pipeline.decision.threshold = threshold;
    }
    run.pipeline.validate()?;
    Ok(run)
}
