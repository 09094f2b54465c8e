//! `hduva`: scenario generation, training, evaluation and figures.
//!
//! Exit codes: 0 ok, 2 argument error, 3 I/O error, 4 training divergence,
//! 5 missing artifact.

mod commands;
mod record;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hduva", version, about = "Hierarchical domain-unsupervised VAE toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioName {
    ColorHierarchical,
    ColorSequential,
    RotatedOverlap,
    VirtualHospitals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKind {
    Mnist,
    Synthetic,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Base images: MNIST idx files under $HDUVA_DATA_DIR/mnist, or procedural digits.
    #[arg(long, value_enum, default_value = "mnist")]
    pub source: SourceKind,
    /// Number of procedural base images.
    #[arg(long, default_value_t = 60_000)]
    pub synthetic_count: usize,
    /// Side length of procedural base images.
    #[arg(long, default_value_t = 28)]
    pub synthetic_side: usize,
}

#[derive(Debug, Args)]
pub struct GenScenarioArgs {
    #[arg(long, value_enum)]
    pub name: ScenarioName,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// vlag, red_diverging (sequential scenario)
    #[arg(long, default_value = "vlag")]
    pub palette: String,
    /// workshop or erratum (rotated scenario)
    #[arg(long, default_value = "workshop")]
    pub mode: String,
    /// Images per sub-domain (per angle for the rotated scenario).
    #[arg(long, default_value_t = 1000)]
    pub per_subdomain: usize,
    /// Keep only class labels below this bound.
    #[arg(long)]
    pub max_classes: Option<usize>,
    /// Resample images to this side length.
    #[arg(long)]
    pub side: Option<usize>,
    /// Unlabelled instances per domain (hierarchical scenario).
    #[arg(long, default_value_t = 0)]
    pub semi_per_domain: usize,
    /// Malaria corpus directory (defaults to $HDUVA_DATA_DIR/malaria/cell_images).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Key-value config file (`section.key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `section.key=value` override; dotted flags such as
    /// `--train.max_epochs 3` are accepted too.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by gen-scenario.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct LodoArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// hduva, lhduva, deep_all or constant:<class>
    #[arg(long, default_value = "hduva")]
    pub algorithm: String,
    /// Comma-separated seeds.
    #[arg(long, default_value = "0,1,2")]
    pub seeds: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct AucArgs {
    #[arg(long, required_unless_present = "constant")]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate a constant-class predictor instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    pub constant: Option<u32>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Domain whose sub-domains, in manifest order, form the shift sequence.
    #[arg(long, default_value = "test")]
    pub domain: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output SVG file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub per_domain: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ConditionalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Row of the manifest used as the seed image.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Comma-separated class labels to sweep.
    #[arg(long)]
    pub labels: String,
    /// Output PNG grid.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TwoSampleArgs {
    /// CSV of samples, one row per point.
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// Comma-separated kernel bandwidths.
    #[arg(long, default_value = "0.1,1,10")]
    pub bandwidths: String,
    /// Use the unbiased paired estimator (equal sample sizes).
    #[arg(long)]
    pub unbiased: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a benchmark scenario (images, manifest.csv, manifest.json).
    GenScenario(GenScenarioArgs),
    /// Train a model on a scenario's training split.
    Train(TrainArgs),
    /// Leave-one-domain-out evaluation table.
    EvalLodo(LodoArgs),
    /// Accuracy along a shift sequence and its normalized AUC.
    EvalAuc(AucArgs),
    /// Barycentric scatter of posterior topic means per domain.
    PlotTopics(PlotArgs),
    /// Decode one image per swept class from a seed image's domain code.
    GenConditional(ConditionalArgs),
    /// MMD² between two sample sets.
    TwoSample(TwoSampleArgs),
}

/// Move `--section.key value` and `--section.key=value` flags into `--set`.
fn rewrite_dotted(args: Vec<OsString>) -> Vec<OsString> {
    let mut out = Vec::with_capacity(args.len());
    let mut it = args.into_iter().peekable();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        let dotted = s
            .strip_prefix("--")
            .filter(|k| ["model.", "train.", "weak."].iter().any(|p| k.starts_with(p)));
        match dotted {
            Some(k) if k.contains('=') => {
                out.push("--set".into());
                out.push(k.into());
            }
            Some(k) => {
                let v = it.next().map(|v| v.to_string_lossy().into_owned()).unwrap_or_default();
                out.push("--set".into());
                out.push(format!("{k}={v}").into());
            }
            None => out.push(a),
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse_from(rewrite_dotted(std::env::args_os().collect()));
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let result = match cli.command {
        Command::GenScenario(a) => commands::gen_scenario(&a, &raw),
        Command::Train(a) => commands::train(&a, &raw),
        Command::EvalLodo(a) => commands::eval_lodo(&a, &raw),
        Command::EvalAuc(a) => commands::eval_auc(&a, &raw),
        Command::PlotTopics(a) => commands::plot_topics(&a, &raw),
        Command::GenConditional(a) => commands::gen_conditional(&a, &raw),
        Command::TwoSample(a) => commands::two_sample(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
