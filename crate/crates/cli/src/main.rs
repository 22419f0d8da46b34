//! `vcod-bench`: dataset validation, statistics, evaluation, label fusion and
//! report data for video camouflaged object detection benchmarks.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use vcod_core::dataset::Layout;
use vcod_core::mask::Binarize;
use vcod_core::report::{Format, Grouping};

#[derive(Parser)]
#[command(name = "vcod-bench", version, about, propagate_version = true)]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(
        long,
        global = true,
        env = "VCOD_BENCH_THREADS",
        value_parser = clap::value_parser!(u32).range(1..)
    )]
    threads: Option<u32>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest and its files against the dataset guidelines.
    Validate(ValidateArgs),
    /// Clip, frame, split, scenario, category and motion counts.
    Stats(StatsArgs),
    /// Score prediction maps against ground truth.
    Eval(EvalArgs),
    /// Propagate anchor masks through a clip and fuse them into pseudo-labels.
    Fuse(FuseArgs),
    /// Object-to-image area ratios per clip and per frame, as CSV.
    ReportScatter(ScatterArgs),
    /// Build a manifest from a dataset folder layout.
    MakeManifest(MakeManifestArgs),
}

#[derive(Args)]
struct Input {
    /// Dataset manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,

    /// Resolve manifest paths against this directory instead of the manifest's own.
    #[arg(long)]
    dataset_root: Option<PathBuf>,
}

#[derive(Args)]
struct Output {
    /// Output file, written atomically; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Mode {
    /// Treat violations and missing predictions as failures (default).
    #[arg(long, overrides_with = "lenient")]
    strict: bool,

    /// Report violations and skip missing predictions without failing.
    #[arg(long, overrides_with = "strict")]
    lenient: bool,
}

impl Mode {
    fn strict(&self) -> bool {
        !self.lenient
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    #[value(alias = "markdown")]
    Md,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Md => Format::Markdown,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Msvcod,
    MocaMask,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Msvcod => Layout::Msvcod,
            LayoutArg::MocaMask => Layout::MocaMask,
        }
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    output: Output,
    /// json or md.
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
    #[command(flatten)]
    mode: Mode,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    output: Output,
    /// json or md.
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: Input,
    /// Prediction maps at `<pred-root>/<clip_id>/<frame stem>.png`.
    #[arg(long, visible_alias = "pred")]
    pred_root: PathBuf,
    #[command(flatten)]
    output: Output,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Thresholding for Dice and IoU: fixed:<t> or adaptive.
    #[arg(long, default_value = "fixed:0.5", value_parser = parse_binarize)]
    binarize: Binarize,
    /// Average every frame equally instead of averaging clip means.
    #[arg(long)]
    frame_weighted: bool,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Grouping rows to emit (repeatable); all groupings when absent.
    #[arg(long = "group", value_parser = parse_grouping)]
    groups: Vec<Grouping>,
    /// Leave frames whose ground truth is empty out of the averages.
    #[arg(long)]
    exclude_empty_gt: bool,
    /// S-measure balance between object and region terms.
    #[arg(long)]
    alpha: Option<f64>,
    /// Squared beta of the weighted F-measure.
    #[arg(long)]
    beta_sq: Option<f64>,
    #[command(flatten)]
    mode: Mode,
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    input: Input,
    /// Clip to process.
    #[arg(long)]
    clip: String,
    /// static, transform:<fixture.json> or exec:<program>.
    #[arg(long, default_value = "static")]
    propagator: String,
    /// Extra argument passed to an exec propagator before the protocol arguments (repeatable).
    #[arg(long = "propagator-arg", allow_hyphen_values = true)]
    propagator_args: Vec<String>,
    /// Run an exec propagator one span at a time.
    #[arg(long)]
    serial_propagator: bool,
    /// Reviewed correction rounds, applied in order (repeatable).
    #[arg(long)]
    corrections: Vec<PathBuf>,
    /// Frames whose forward/backward IoU falls below this are flagged.
    #[arg(long, default_value_t = 0.7)]
    flag_threshold: f64,
    /// Anchor spacing in frames; defaults to the clip's fps, else 6.
    #[arg(long)]
    cadence: Option<usize>,
    /// Polygon simplification tolerance in pixels; 0 keeps polygons exact.
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    /// Output directory for masks, polygons and round files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScatterArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct MakeManifestArgs {
    /// Dataset folder to scan.
    #[arg(long)]
    dataset_root: PathBuf,
    #[arg(long, value_enum, default_value = "msvcod")]
    layout: LayoutArg,
    /// Dataset name; defaults to the folder name.
    #[arg(long)]
    name: Option<String>,
    #[command(flatten)]
    output: Output,
}

fn parse_binarize(s: &str) -> Result<Binarize, String> {
    s.parse().map_err(|e: vcod_core::Error| e.to_string())
}

fn parse_grouping(s: &str) -> Result<Grouping, String> {
    s.parse().map_err(|e: vcod_core::Error| e.to_string())
}

/// How a run ended, mapped onto the exit status.
#[derive(Debug)]
enum Failure {
    /// Bad arguments or unreadable inputs: exit 2.
    Usage(String),
    /// Violations or errors during the run: exit 1.
    Failed(String),
}

impl From<vcod_core::Error> for Failure {
    fn from(e: vcod_core::Error) -> Self {
        Failure::Failed(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let threads = cli.threads.map(|t| t as usize).unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    };
    log::debug!("using {threads} worker threads");

    match pool.install(|| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
