//! Command-line pipeline over a file-backed store.
//!
//! `run` is the whole program minus logger setup, so tests can drive it
//! in-process.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;
pub mod store;

use config::ConfigFile;
use error::{CliError, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "vetri", version, about = "Container image scanner evaluation pipeline")]
pub struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "VETRI_STORE")]
    pub store: Option<PathBuf>,
    /// key = value configuration file.
    #[arg(long, global = true, env = "VETRI_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search the registry catalog for popular images.
    Crawl(CrawlArgs),
    /// Download an image's manifest and blobs into the store.
    Pull(PullArgs),
    /// Build the package inventory of a stored image.
    Extract(ExtractArgs),
    /// Match an inventory against vulnerability feeds.
    Scan(ScanArgs),
    /// Import a scanner or static-analysis report.
    Ingest(IngestArgs),
    /// Compute detection hit ratios across tools.
    Evaluate(EvaluateArgs),
    /// Split vulnerabilities by package class.
    Landscape(EvalOptions),
    /// Print an evaluation.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CrawlArgs {
    /// Number of catalog entries to keep.
    #[arg(long, default_value_t = 100)]
    pub limit: usize,
    /// community or official.
    #[arg(long, default_value = "community")]
    pub source: vetri_registry::SourceType,
    #[arg(long, default_value = "")]
    pub query: String,
    #[arg(long, default_value_t = 100)]
    pub page_size: usize,
    /// Output file; defaults to catalog.json in the store.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "VETRI_HUB_URL")]
    pub hub_url: Option<String>,
    /// Registry host recorded on catalog entries.
    #[arg(long, default_value = "docker.io")]
    pub registry: String,
    /// Look up each entry's source repository.
    #[arg(long)]
    pub resolve_sources: bool,
}

#[derive(Debug, Args)]
pub struct RegistryArgs {
    /// Distribution API base URL, overriding the one derived from the image.
    #[arg(long, env = "VETRI_REGISTRY_URL")]
    pub registry_url: Option<String>,
    /// os/arch[/variant] picked from manifest lists.
    #[arg(long, env = "VETRI_PLATFORM")]
    pub platform: Option<String>,
    #[arg(long, env = "VETRI_PARALLELISM")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PullArgs {
    pub image: String,
    #[command(flatten)]
    pub registry: RegistryArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub image: String,
    /// Read a docker-save or OCI tarball, or a layout directory, instead of
    /// the pulled copy.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// groupId:artifactId pattern (`*` wildcards) of application archives.
    #[arg(long = "app-selector")]
    pub app_selectors: Vec<String>,
    #[arg(long, env = "VETRI_PLATFORM")]
    pub platform: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    pub image: String,
    /// Canonical JSON feed.
    #[arg(long = "feed")]
    pub feeds: Vec<PathBuf>,
    /// NVD JSON feed.
    #[arg(long = "nvd-feed")]
    pub nvd_feeds: Vec<PathBuf>,
    /// Extra CPE vendor:product mappings for NVD feeds.
    #[arg(long)]
    pub cpe_map: Option<PathBuf>,
    #[arg(long, default_value = "builtin")]
    pub tool_id: String,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub image: String,
    pub report: PathBuf,
    /// generic, clair, anchore or spotbugs.
    #[arg(long)]
    pub format: String,
    /// Tool id; defaults to the format name except for generic reports.
    #[arg(long)]
    pub tool: Option<String>,
    /// Project id of a static-analysis report.
    #[arg(long)]
    pub project: Option<String>,
    /// Count bad records instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// Accepted static-analysis bug kinds (default: all security kinds).
    #[arg(long = "allow")]
    pub allow: Vec<String>,
}

#[derive(Debug, Args, Clone)]
pub struct EvalOptions {
    /// Tools to compare; defaults to every tool with a report.
    #[arg(long = "tool")]
    pub tools: Vec<String>,
    /// Images to include; defaults to every image in the store.
    #[arg(long = "image")]
    pub images: Vec<String>,
    /// cve_only or full_tuple.
    #[arg(long, env = "VETRI_JOIN_KEY")]
    pub join_key: Option<String>,
    #[arg(long, env = "VETRI_MIN_SEVERITY")]
    pub min_severity: Option<String>,
    /// Keep only detections with a fix available.
    #[arg(long, env = "VETRI_FIXED_ONLY")]
    pub fixed_only: Option<bool>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub options: EvalOptions,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation directory; defaults to the most recent one.
    pub evaluation: Option<PathBuf>,
}

/// Settings after flags, environment and config file are merged.
pub struct Context {
    pub store: store::Store,
    pub file: ConfigFile,
}

const DEFAULT_STORE: &str = "vetri-store";

/// Runs the program and returns its exit code. Output goes to `out`,
/// diagnostics to stderr.
pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("vetri: {e}");
            e.code
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let root = cli
        .store
        .clone()
        .or_else(|| file.get("store").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE));
    let ctx = Context {
        store: store::Store::new(root),
        file,
    };
    match cli.command {
        Command::Report(a) => commands::report(&ctx, &a, out),
        cmd => {
            let _lock = ctx.store.lock()?;
            match cmd {
                Command::Crawl(a) => commands::crawl(&ctx, &a, out),
                Command::Pull(a) => commands::pull(&ctx, &a, out),
                Command::Extract(a) => commands::extract(&ctx, &a, out),
                Command::Scan(a) => commands::scan(&ctx, &a, out),
                Command::Ingest(a) => commands::ingest(&ctx, &a, out),
                Command::Evaluate(a) => commands::evaluate(&ctx, &a.options, out),
                Command::Landscape(a) => commands::landscape(&ctx, &a, out),
                Command::Report(_) => unreachable!("handled above"),
            }
        }
    }
}
