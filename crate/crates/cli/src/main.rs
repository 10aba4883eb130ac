//! `scoreforge` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "scoreforge", version, about = "Synthetic score pages and layout-detection metrics")]
struct Cli {
    /// TOML or JSON file with defaults; top-level keys apply to every
    /// command, a table named after the command applies to that command.
    #[arg(long, global = true, env = "SCOREFORGE_CONFIG")]
    config: Option<PathBuf>,

    /// Worker threads (default: one per core).
    #[arg(long, global = true, env = "SCOREFORGE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build semi-synthetic pages from an annotated corpus.
    Generate(GenerateArgs),
    /// Split a corpus into nested training subsets, validation and test.
    Split(SplitArgs),
    /// Full metric battery for a detection file.
    Eval(EvalArgs),
    /// Confidence x IoU threshold grid search.
    Sweep(SweepArgs),
    /// Turn per-class probability maps into detections.
    Postprocess(PostprocessArgs),
    /// Symbol-error-rate deltas between detected and ground-truth regions.
    GoalEval(GoalEvalArgs),
    /// Check an annotation file and its images.
    Validate(ValidateArgs),
    /// Write a procedural fixture corpus.
    MakeFixture(MakeFixtureArgs),
    /// Write noisy detections (and optionally transcriptions) derived from
    /// the ground truth.
    FakeDetect(FakeDetectArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[arg(long, env = "SCOREFORGE_CORPUS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_OUT")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Number of pages to generate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[arg(long, env = "SCOREFORGE_SEED")]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Maximum absolute rotation in degrees.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation_range: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_retries: Option<u32>,
}

#[derive(Debug, Args, Serialize)]
struct SplitArgs {
    #[arg(long, env = "SCOREFORGE_CORPUS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_OUT")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_SEED")]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long, env = "SCOREFORGE_CORPUS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_DETECTIONS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    detections: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_OUT")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Confidence threshold for P/R/F1; the sweep winner when omitted.
    #[arg(long, requires = "iou_thr")]
    #[serde(skip_serializing_if = "Option::is_none")]
    conf_thr: Option<f64>,
    /// IoU threshold for P/R/F1; the sweep winner when omitted.
    #[arg(long, requires = "conf_thr")]
    #[serde(skip_serializing_if = "Option::is_none")]
    iou_thr: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long, env = "SCOREFORGE_CORPUS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_DETECTIONS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    detections: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_OUT")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PostprocessArgs {
    /// Annotation file supplying category names and page sizes.
    #[arg(long, env = "SCOREFORGE_CORPUS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus: Option<PathBuf>,
    /// Directory of `<page_id>.<class>.png` probability maps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    probmaps: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_OUT")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Vertical shrink ratio the model was trained with.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    prob_thr: Option<f32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_area_frac: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct GoalEvalArgs {
    #[arg(long, env = "SCOREFORGE_CORPUS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_DETECTIONS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    detections: Option<PathBuf>,
    /// Reference transcriptions keyed by region id.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<PathBuf>,
    /// Recognizer output on ground-truth crops, keyed by region id.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    hyp_gt: Option<PathBuf>,
    /// Recognizer output on detected crops, keyed by detection id.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    hyp_det: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_OUT")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    iou_min: Option<f64>,
    /// Confidence splitting the summary into above/below groups.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    conf_thr: Option<f64>,
    /// Value of the `corpus` column in the scatter CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct ValidateArgs {
    #[arg(long, env = "SCOREFORGE_CORPUS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus: Option<PathBuf>,
    /// Directory for the JSON report; printed only when omitted.
    #[arg(long, env = "SCOREFORGE_OUT")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Skip opening the page images.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    no_images: bool,
}

#[derive(Debug, Args, Serialize)]
struct MakeFixtureArgs {
    #[arg(long, env = "SCOREFORGE_OUT")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pages: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    height: Option<u32>,
    #[arg(long, env = "SCOREFORGE_SEED")]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
struct FakeDetectArgs {
    #[arg(long, env = "SCOREFORGE_CORPUS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_OUT")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long, env = "SCOREFORGE_SEED")]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Maximum edge displacement as a fraction of box size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    jitter: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    miss_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_false_positives: Option<u32>,
    /// Also write reference and recognizer transcriptions.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    transcriptions: bool,
    /// Token error rate of the fake recognizer on perfect crops.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    base_error: Option<f64>,
}

fn run(cli: Cli) -> Result<()> {
    let file = cli
        .config
        .as_deref()
        .map(config::read_config_file)
        .transpose()?;
    let file = file.as_ref();
    let threads = match cli.threads {
        Some(n) => Some(n),
        None => file
            .and_then(|f| f.get("threads"))
            .map(|v| serde_json::from_value::<usize>(v.clone()))
            .transpose()
            .context("config key `threads`")?,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;

    use commands as c;
    use config::resolve;
    pool.install(|| match &cli.command {
        Command::Generate(a) => c::generate(resolve(file, "generate", a)?),
        Command::Split(a) => c::split(resolve(file, "split", a)?),
        Command::Eval(a) => c::eval(resolve(file, "eval", a)?),
        Command::Sweep(a) => c::sweep(resolve(file, "sweep", a)?),
        Command::Postprocess(a) => c::postprocess(resolve(file, "postprocess", a)?),
        Command::GoalEval(a) => c::goal_eval(resolve(file, "goal-eval", a)?),
        Command::Validate(a) => c::validate(resolve(file, "validate", a)?),
        Command::MakeFixture(a) => c::make_fixture(resolve(file, "make-fixture", a)?),
        Command::FakeDetect(a) => c::fake_detect(resolve(file, "fake-detect", a)?),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCOREFORGE_LOG", "warn"))
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
