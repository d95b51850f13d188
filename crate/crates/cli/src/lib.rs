//! `strata` command line. Exit codes: 0 ok, 1 validation, 2 I/O, 3 backend,
//! 64 usage.

mod bench;
mod dataset;
mod design;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use strata_core::protocol::{CanvasSize, Violation};
use strata_service::ops::OpError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "strata", version, about = "Layered graphic design: render, compose, validate, evaluate")]
pub struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// More logging on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a protocol to PNG.
    Render(design::RenderArgs),
    /// Generate a composition from a prompt (and optional assets).
    Compose(design::ComposeArgs),
    /// Generate text layers over an existing image.
    Overlay(design::OverlayArgs),
    /// Adapt a composition bundle to a new canvas size.
    Relayout(design::RelayoutArgs),
    /// Check a protocol against the schema rules.
    Validate(design::ValidateArgs),
    /// List font families available to the renderer.
    Fonts(design::FontsArgs),
    /// Corpus tooling.
    #[command(subcommand)]
    Dataset(dataset::DatasetCommand),
    /// Evaluation harness.
    #[command(subcommand)]
    Bench(bench::BenchCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Listen address, overrides the config.
    #[arg(long)]
    pub bind: Option<String>,
    /// Extra font directory, overrides the config.
    #[arg(long)]
    pub fonts: Option<PathBuf>,
}

/// Backend selection shared by the generating commands.
#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Backend config file (TOML); without URLs the mock backends are used.
    #[arg(long)]
    pub backends: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Validation { message: String, violations: Vec<Violation> },
    Io(String),
    Backend { stage: Option<String>, message: String },
    Usage(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
            CliError::Backend { .. } => EXIT_BACKEND,
            CliError::Usage(_) => EXIT_USAGE,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        CliError::Validation { message: message.into(), violations: Vec::new() }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation { message, .. } | CliError::Io(message) | CliError::Usage(message) => message,
            CliError::Backend { message, .. } => message,
        }
    }
}

impl From<OpError> for CliError {
    fn from(e: OpError) -> Self {
        match e {
            OpError::Invalid { message, violations } => CliError::Validation { message, violations },
            OpError::TooLarge(m) | OpError::Internal(m) => CliError::invalid(m),
            OpError::Backend { stage, message } => CliError::Backend { message: format!("{stage} stage failed: {message}"), stage: Some(stage) },
        }
    }
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub(crate) fn io_err(what: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::Io(format!("{what}: {e}"))
}

pub(crate) fn parse_size(s: &str) -> Result<CanvasSize, String> {
    s.parse::<CanvasSize>().map_err(|e| e.to_string())
}

/// What a command reports: a JSON value and the text shown without `--json`.
pub struct Outcome {
    pub json: Value,
    pub text: String,
}

impl Outcome {
    pub fn new(json: Value, text: impl Into<String>) -> Self {
        Outcome { json, text: text.into() }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Render(a) => design::render(a),
        Command::Compose(a) => design::compose(a),
        Command::Overlay(a) => design::overlay(a),
        Command::Relayout(a) => design::relayout(a),
        Command::Validate(a) => design::validate(a),
        Command::Fonts(a) => design::fonts(a),
        Command::Dataset(c) => dataset::run(c),
        Command::Bench(c) => bench::run(c),
        Command::Serve(a) => serve(a),
    }
}

fn serve(a: &ServeArgs) -> Result<Outcome, CliError> {
    let mut cfg = strata_service::ServiceConfig::load(a.config.as_deref()).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(b) = &a.bind {
        cfg.bind = b.clone();
    }
    if let Some(f) = &a.fonts {
        cfg.font_dir = Some(f.clone());
    }
    strata_service::serve_blocking(cfg).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(Outcome::new(json!({ "ok": true }), "stopped"))
}

/// Parses `args` (program name first), runs the command and prints its
/// result. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match dispatch(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", out.json);
            } else if !out.text.is_empty() {
                println!("{}", out.text);
            }
            EXIT_OK
        }
        Err(e) => {
            if cli.json {
                let mut v = json!({ "ok": false, "error": e.message(), "exit_code": e.code() });
                match &e {
                    CliError::Validation { violations, .. } => v["violations"] = json!(violations),
                    CliError::Backend { stage: Some(s), .. } => v["stage"] = json!(s),
                    _ => {}
                }
                println!("{v}");
            } else {
                if let CliError::Validation { violations, .. } = &e {
                    for v in violations {
                        println!("{v}");
                    }
                }
                eprintln!("error: {}", e.message());
            }
            e.code()
        }
    }
}
