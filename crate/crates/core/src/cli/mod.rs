//! The `splatlift` command line.

mod commands;
mod config;
pub mod verify;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::Config;

use crate::error::{Error, Result};
use crate::model::KernelKind;
use crate::solver::LiftMode;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SPLATLIFT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "splatlift", version, about = "Lift 2D features onto splat scenes in closed form")]
pub struct Cli {
    /// TOML config file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (overrides SPLATLIFT_THREADS and the config file).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct SceneArgs {
    /// Splat scene (binary PLY).
    #[arg(long)]
    pub scene: PathBuf,
    /// Camera list.
    #[arg(long)]
    pub cameras: PathBuf,
    /// Kernel kind, overriding the PLY header (gaussian3d or gaussian2d).
    #[arg(long)]
    pub kernel: Option<KernelKind>,
    /// Opacity polarization used to build the weights.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lift per-view features or labeled masks onto the primitives.
    Lift {
        #[command(flatten)]
        scene: SceneArgs,
        /// Directory of `<view_id>.flt` or `<view_id>.lbl` + `.lft` files.
        #[arg(long)]
        features: PathBuf,
        /// rowsum or rowsum2.
        #[arg(long)]
        mode: Option<LiftMode>,
        /// Accumulate during rasterization without storing the weights.
        #[arg(long, conflicts_with = "matrix")]
        streaming: bool,
        /// Build the sparse weight matrix first (default).
        #[arg(long)]
        matrix: bool,
        /// Output field file.
        #[arg(long)]
        out: PathBuf,
        /// Run report (JSON); defaults to `<out stem>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Cluster a lifted field and drop masks that disagree with the clusters.
    ClusterFilter {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        field: PathBuf,
        /// Directory of `<view_id>.lbl` + `.lft` files.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        /// Lift again from the retained masks.
        #[arg(long)]
        relift: bool,
        #[arg(long)]
        mode: Option<LiftMode>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render query attention and threshold it into masks.
    Segment {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        field: PathBuf,
        /// Query list (`name v1 ... vF` per line).
        #[arg(long)]
        query: PathBuf,
        /// `auto` for valley search, or a fixed raw score.
        #[arg(long, default_value = "auto")]
        threshold: String,
        /// Lambda the field was lifted with; a mismatch with --lambda is reported.
        #[arg(long)]
        lift_lambda: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score masks (mIoU) or rendered features (cosine) against ground truth.
    Eval {
        /// Directory of `<query>/<view_id>.pgm` masks (or a segment output directory).
        #[arg(long, conflicts_with = "rendered", required_unless_present = "rendered")]
        pred: Option<PathBuf>,
        /// Directory of rendered `<view_id>.flt` features.
        #[arg(long)]
        rendered: Option<PathBuf>,
        /// Ground-truth masks (with --pred) or observations (with --rendered).
        #[arg(long)]
        gt: PathBuf,
        /// CSV output; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic fixture directory.
    Synth {
        /// Scene spec (TOML).
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        /// Built-in spec: opaque-wall, two-blob or two-blob-noisy.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a lifted field into every view.
    Render {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        field: PathBuf,
        /// Also write a 3-channel principal-component visualization per view.
        #[arg(long)]
        pca: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a property suite; exits with status 2 on any violation.
    Verify {
        /// bounds, jensen, alpha or mc.
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output for suites that emit one (bounds).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn thread_count(flag: Option<usize>, config: &Config) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n = v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::invalid(format!("{THREADS_ENV}='{v}' is not a thread count")))?;
        return Ok(Some(n));
    }
    Ok(config.threads)
}

/// Parse arguments and run one command in a dedicated thread pool.
pub fn run<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::invalid(e.to_string()))?;
    execute(cli)
}

pub fn execute(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let threads = thread_count(cli.threads, &config)?;
    if threads == Some(0) {
        return Err(Error::invalid("thread count must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(cli.command, &config))
}

/// Entry point for the binary: maps errors to exit codes.
pub fn main() -> ! {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match execute(cli) {
        Ok(()) => std::process::exit(0),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
