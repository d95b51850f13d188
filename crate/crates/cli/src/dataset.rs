//! `dataset ingest` and `dataset augment`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde_json::json;
use strata_core::dataset::{augment_protocol, ingest, stats, AugmentConfig};

use crate::{io_err, write, CliError, Outcome};

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Load and validate a corpus; rejected samples go to the report.
    Ingest(IngestArgs),
    /// Write canvas-mode training pairs (partial protocol, target) as JSON lines.
    Augment(AugmentArgs),
    /// Write a small synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub root: PathBuf,
    /// Rejection report (JSON lines).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pairs drawn per sample.
    #[arg(long, default_value_t = 1)]
    pub per_sample: u32,
    /// Probability that a layer is kept.
    #[arg(long, default_value_t = AugmentConfig::default().p_layer)]
    pub p_layer: f64,
    /// Probability that a droppable field of a kept layer is dropped.
    #[arg(long, default_value_t = AugmentConfig::default().p_field)]
    pub p_field: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(c: &DatasetCommand) -> Result<Outcome, CliError> {
    match c {
        DatasetCommand::Ingest(a) => ingest_cmd(a),
        DatasetCommand::Augment(a) => augment_cmd(a),
        DatasetCommand::Synth(a) => {
            strata_core::dataset::write_synthetic_corpus(&a.out, a.count, a.seed).map_err(io_err(a.out.display()))?;
            Ok(Outcome::new(json!({ "ok": true, "out": a.out, "samples": a.count }), format!("wrote {} samples to {}", a.count, a.out.display())))
        }
    }
}

fn ingest_cmd(a: &IngestArgs) -> Result<Outcome, CliError> {
    let result = ingest(&a.root).map_err(io_err(a.root.display()))?;
    if let Some(path) = &a.report {
        let mut buf = Vec::new();
        result.write_report(&mut buf).map_err(io_err(path.display()))?;
        write(path, &buf)?;
    }
    let s = stats(&result);
    let mut text = format!(
        "{} samples accepted, {} rejected; {} layers ({} text, {} asset), max {} per sample, mean {:.2}",
        s.samples, s.rejected, s.layers, s.text_layers, s.asset_layers, s.max_layers, s.mean_layers
    );
    for r in result.report.iter().take(20) {
        let why = r.error.clone().unwrap_or_else(|| r.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "));
        text.push_str(&format!("\n  rejected {}: {why}", r.id));
    }
    if result.report.len() > 20 {
        text.push_str(&format!("\n  ... {} more", result.report.len() - 20));
    }
    Ok(Outcome::new(json!({ "ok": true, "stats": s, "rejected": result.report }), text))
}

fn augment_cmd(a: &AugmentArgs) -> Result<Outcome, CliError> {
    for (name, p) in [("--p-layer", a.p_layer), ("--p-field", a.p_field)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::Usage(format!("{name} must be in [0, 1], got {p}")));
        }
    }
    let result = ingest(&a.root).map_err(io_err(a.root.display()))?;
    let cfg = AugmentConfig { p_layer: a.p_layer, p_field: a.p_field };
    let mut buf = Vec::new();
    let mut n = 0u64;
    for (i, sample) in result.samples.iter().enumerate() {
        for k in 0..a.per_sample {
            // one seed per (sample, draw), independent of corpus size
            let seed = a.seed ^ ((i as u64) << 20 | u64::from(k)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let pair = augment_protocol(&sample.protocol, seed, cfg);
            let line = json!({ "id": sample.id, "seed": seed, "partial": pair.partial, "target": pair.target });
            writeln!(buf, "{line}").expect("write to Vec");
            n += 1;
        }
    }
    write(&a.out, &buf)?;
    Ok(Outcome::new(
        json!({ "ok": true, "out": a.out, "pairs": n, "samples": result.samples.len(), "rejected": result.report.len() }),
        format!("wrote {n} pairs from {} samples to {}", result.samples.len(), a.out.display()),
    ))
}
