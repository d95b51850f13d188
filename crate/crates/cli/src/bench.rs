//! `bench generate`, `bench run`, `bench report`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Subcommand, ValueEnum};
use serde_json::json;
use strata_core::benchmark::{
    aggregate, csv_report, generate_outputs, human_overall, markdown_report, read_human_csv, read_manifest, read_records,
    run_benchmark, write_records, write_test_suite, BenchError, HttpJudge, JudgeBackend, JudgeError, MockJudge, RunOptions,
    ScoreRecord, ScoreTable, SuiteSplit,
};
use strata_core::font::FontCatalog;
use strata_core::pipeline::RetryPolicy;
use strata_core::protocol::CanvasSize;

use crate::design::backend_config;
use crate::{parse_size, read, write, BackendArgs, CliError, Outcome};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Write a synthetic test suite (cases.jsonl and assets).
    Generate(GenerateArgs),
    /// Score method outputs with a judge and write records and reports.
    Run(RunArgs),
    /// Rebuild reports from existing records.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = SuiteSplit::default().prompt_only)]
    pub prompt_only: usize,
    #[arg(long, default_value_t = SuiteSplit::default().single_asset)]
    pub single_asset: usize,
    #[arg(long, default_value_t = SuiteSplit::default().multi_asset)]
    pub multi_asset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JudgeKind {
    /// Deterministic scores derived from the image bytes.
    Mock,
    /// Chat-completions endpoint; key from JUDGE_API_KEY.
    Http,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Case manifest (JSON lines).
    #[arg(long)]
    pub cases: PathBuf,
    /// Existing outputs, `<dir>/<method>/<case_id>.png`. Without it the
    /// pipeline generates them under `<out>/outputs`.
    #[arg(long)]
    pub outputs: Option<PathBuf>,
    /// Method to score (repeatable). Defaults to `strata`.
    #[arg(long = "method")]
    pub methods: Vec<String>,
    #[arg(long, value_enum, default_value_t = JudgeKind::Mock)]
    pub judge: JudgeKind,
    #[arg(long, env = "JUDGE_URL")]
    pub judge_url: Option<String>,
    #[arg(long, default_value = "gpt-4o")]
    pub judge_model: String,
    #[arg(long, default_value_t = 30_000)]
    pub judge_timeout_ms: u64,
    /// Judge samples per (case, method, dimension).
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    /// Canvas size for generated outputs.
    #[arg(long, value_parser = parse_size, default_value = "1000x1500")]
    pub size: CanvasSize,
    /// Human scores CSV (`case_id,method,score`).
    #[arg(long)]
    pub human: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backends: BackendArgs,
    #[arg(long)]
    pub fonts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub human: Option<PathBuf>,
    /// Row order (repeatable); unlisted methods follow alphabetically.
    #[arg(long = "order")]
    pub order: Vec<String>,
    /// Judge samples per record, noted in the report.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn bench_err(e: BenchError) -> CliError {
    match e {
        BenchError::Io(io) => CliError::Io(io.to_string()),
        BenchError::Options(m) => CliError::Usage(m),
        other => CliError::invalid(other.to_string()),
    }
}

pub fn run(c: &BenchCommand) -> Result<Outcome, CliError> {
    match c {
        BenchCommand::Generate(a) => generate(a),
        BenchCommand::Run(a) => run_cmd(a),
        BenchCommand::Report(a) => report_cmd(a),
    }
}

fn generate(a: &GenerateArgs) -> Result<Outcome, CliError> {
    let split = SuiteSplit { prompt_only: a.prompt_only, single_asset: a.single_asset, multi_asset: a.multi_asset };
    let cases = write_test_suite(&a.out, a.seed, split).map_err(bench_err)?;
    let manifest = a.out.join("cases.jsonl");
    Ok(Outcome::new(
        json!({ "ok": true, "cases": cases.len(), "manifest": manifest }),
        format!("wrote {} cases to {}", cases.len(), manifest.display()),
    ))
}

fn judge(a: &RunArgs) -> Result<Box<dyn JudgeBackend>, CliError> {
    match a.judge {
        JudgeKind::Mock => Ok(Box::new(MockJudge)),
        JudgeKind::Http => {
            let url = a.judge_url.clone().ok_or_else(|| CliError::Usage("--judge http needs --judge-url (or JUDGE_URL)".into()))?;
            let j = HttpJudge::from_env(url, &a.judge_model, Duration::from_millis(a.judge_timeout_ms), RetryPolicy::default())
                .map_err(|e| match e {
                    JudgeError::MissingKey => CliError::Usage("JUDGE_API_KEY is not set".into()),
                    other => CliError::Backend { stage: Some("judge".into()), message: other.to_string() },
                })?;
            Ok(Box::new(j))
        }
    }
}

fn human_table(path: Option<&Path>) -> Result<Option<ScoreTable>, CliError> {
    let Some(p) = path else { return Ok(None) };
    let bytes = read(p)?;
    let scores = read_human_csv(bytes.as_slice()).map_err(bench_err)?;
    Ok(Some(human_overall(&scores)))
}

/// Writes report.md and report.csv; returns the judge table.
fn write_reports(out: &Path, records: &[ScoreRecord], human: Option<&ScoreTable>, order: &[String], samples: Option<usize>) -> Result<ScoreTable, CliError> {
    let mut table = aggregate(records);
    table.reorder(order);
    let mut human = human.cloned();
    if let Some(h) = &mut human {
        h.reorder(order);
    }
    write(&out.join(REPORT_MD), markdown_report(&table, human.as_ref(), samples).as_bytes())?;
    write(&out.join(REPORT_CSV), csv_report(&table, human.as_ref()).as_bytes())?;
    Ok(table)
}

fn run_cmd(a: &RunArgs) -> Result<Outcome, CliError> {
    let cases = read_manifest(&a.cases).map_err(bench_err)?;
    let methods = if a.methods.is_empty() { vec!["strata".to_string()] } else { a.methods.clone() };
    let outputs = match &a.outputs {
        Some(o) => o.clone(),
        None => {
            let dir = a.out.join("outputs");
            let cfg = backend_config(&a.backends)?;
            let (pm, bm) = (cfg.pm(), cfg.bm());
            let fonts = match &a.fonts {
                Some(d) => FontCatalog::from_dir(d).map_err(|e| CliError::Io(format!("{}: {e}", d.display())))?,
                None => FontCatalog::embedded(),
            };
            for m in &methods {
                generate_outputs(&cases, m, &dir, a.size, pm.as_ref(), bm.as_ref(), &fonts).map_err(|e| match e {
                    BenchError::Case { id, msg } if cfg.pm_url.is_some() || cfg.bm_url.is_some() => {
                        CliError::Backend { stage: None, message: format!("case {id}: {msg}") }
                    }
                    other => bench_err(other),
                })?;
            }
            dir
        }
    };
    let judge = judge(a)?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    let opts = RunOptions { n_samples: a.samples, workers: a.workers, journal: Some(a.out.join(JOURNAL_FILE)) };
    let records = run_benchmark(&cases, &outputs, &methods, judge.as_ref(), &opts).map_err(bench_err)?;

    let mut buf = Vec::new();
    write_records(&records, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    write(&a.out.join(RECORDS_FILE), &buf)?;
    let human = human_table(a.human.as_deref())?;
    let table = write_reports(&a.out, &records, human.as_ref(), &methods, Some(a.samples))?;

    let missing = records.iter().filter(|r| r.is_missing()).count();
    let summary = json!({
        "ok": missing == 0,
        "out": a.out,
        "cases": cases.len(),
        "methods": methods,
        "records": records.len(),
        "missing": missing,
        "table": table,
    });
    if missing > 0 {
        return Err(CliError::Backend {
            stage: Some("judge".into()),
            message: format!("{missing} of {} records missing; reports written, rerun to fill them", records.len()),
        });
    }
    Ok(Outcome::new(summary, format!("{} records; reports in {}\n\n{}", records.len(), a.out.display(), table.to_markdown())))
}

fn report_cmd(a: &ReportArgs) -> Result<Outcome, CliError> {
    let records = read_records(&a.records).map_err(bench_err)?;
    let human = human_table(a.human.as_deref())?;
    let table = write_reports(&a.out, &records, human.as_ref(), &a.order, a.samples)?;
    Ok(Outcome::new(json!({ "ok": true, "out": a.out, "table": table }), table.to_markdown()))
}
