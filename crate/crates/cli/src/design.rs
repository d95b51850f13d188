//! render, compose, overlay, relayout, validate, fonts.

use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{json, Value};
use strata_core::font::FontCatalog;
use strata_core::pipeline::bundle::{entries_to_zip, PROTOCOL_FILE};
use strata_core::pipeline::{read_bundle, write_bundle_zip, BackendConfig, Mode};
use strata_core::protocol::{parse_protocol, validate as validate_full, validate_fields, CanvasSize};
use strata_service::ops::{self, ComposeInput, RenderInput};

use crate::{parse_size, read, write, BackendArgs, CliError, Outcome};

#[derive(Debug, Clone, Args)]
pub struct FontArgs {
    /// Directory of extra .ttf/.otf faces (the embedded fallback is always present).
    #[arg(long = "fonts")]
    pub dir: Option<PathBuf>,
}

impl FontArgs {
    fn catalog(&self) -> Result<FontCatalog, CliError> {
        match &self.dir {
            Some(d) => FontCatalog::from_dir(d).map_err(|e| CliError::Io(format!("{}: {e}", d.display()))),
            None => Ok(FontCatalog::embedded()),
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub protocol: PathBuf,
    /// Canvas size `WxH`; defaults to the background's size.
    #[arg(long, value_parser = parse_size)]
    pub size: Option<CanvasSize>,
    /// Asset PNG for the next asset index (repeatable, in order).
    #[arg(long = "asset")]
    pub assets: Vec<PathBuf>,
    /// Directory holding `0.png`, `1.png`, ... (used when no --asset is given).
    #[arg(long)]
    pub assets_dir: Option<PathBuf>,
    /// Background PNG; without it the layers are rendered over transparency.
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fonts: FontArgs,
}

fn asset_files(list: &[PathBuf], dir: Option<&Path>) -> Vec<PathBuf> {
    match dir {
        Some(d) if list.is_empty() => (0..).map(|i| d.join(format!("{i}.png"))).take_while(|p| p.is_file()).collect(),
        _ => list.to_vec(),
    }
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<Vec<u8>>, CliError> {
    paths.iter().map(|p| read(p)).collect()
}

pub fn render(a: &RenderArgs) -> Result<Outcome, CliError> {
    let protocol = read(&a.protocol)?;
    let assets = read_all(&asset_files(&a.assets, a.assets_dir.as_deref()))?;
    let background = a.background.as_deref().map(read).transpose()?;
    let size = match (a.size, &background) {
        (Some(s), _) => s,
        (None, Some(bg)) => {
            let img = ops::decode_png("background", bg)?;
            img.size().ok_or_else(|| CliError::invalid("background is too large"))?
        }
        (None, None) => return Err(CliError::Usage("--size is required without --background".into())),
    };
    let fonts = a.fonts.catalog()?;
    let input = RenderInput { protocol: &protocol, size, assets: &assets, background: background.as_deref() };
    let png = ops::render_png(&input, &fonts)?;
    write(&a.out, &png)?;
    let hash = ops::content_hash(&png);
    Ok(Outcome::new(
        json!({ "ok": true, "out": a.out, "size": size.to_string(), "sha256": hash }),
        format!("wrote {} ({size}, sha256 {hash})", a.out.display()),
    ))
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[arg(long, default_value = "")]
    pub prompt: String,
    #[arg(long, value_parser = parse_size)]
    pub size: CanvasSize,
    /// Asset PNG (repeatable, in order).
    #[arg(long = "asset")]
    pub assets: Vec<PathBuf>,
    /// Partial protocol with locks (`{"protocol": ..., "mask": ...}`); selects canvas mode.
    #[arg(long)]
    pub partial: Option<PathBuf>,
    /// Output bundle: a `.zip` file, or a directory otherwise.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backends: BackendArgs,
    #[command(flatten)]
    pub fonts: FontArgs,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    /// Image to place text on; it becomes the background unchanged.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value = "")]
    pub prompt: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backends: BackendArgs,
    #[command(flatten)]
    pub fonts: FontArgs,
}

#[derive(Debug, Args)]
pub struct RelayoutArgs {
    /// Source bundle (zip or directory).
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, value_parser = parse_size)]
    pub size: CanvasSize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backends: BackendArgs,
    #[command(flatten)]
    pub fonts: FontArgs,
}

pub(crate) fn backend_config(a: &BackendArgs) -> Result<BackendConfig, CliError> {
    BackendConfig::load(a.backends.as_deref()).map_err(|e| CliError::Usage(e.to_string()))
}

fn write_bundle(out: &Path, entries: &[(String, Vec<u8>)]) -> Result<Option<String>, CliError> {
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("zip")) {
        let zip = entries_to_zip(entries);
        write(out, &zip)?;
        Ok(Some(ops::content_hash(&zip)))
    } else {
        for (name, bytes) in entries {
            write(&out.join(name), bytes)?;
        }
        Ok(None)
    }
}

fn run_compose(input: &ComposeInput<'_>, backends: &BackendArgs, fonts: &FontArgs, out: &Path) -> Result<Outcome, CliError> {
    let cfg = backend_config(backends)?;
    let (pm, bm) = (cfg.pm(), cfg.bm());
    let entries = ops::compose_entries(input, pm.as_ref(), bm.as_ref(), &fonts.catalog()?)?;
    let hash = write_bundle(out, &entries)?;
    let protocol: Value = entries
        .iter()
        .find(|(n, _)| n == PROTOCOL_FILE)
        .and_then(|(_, b)| serde_json::from_slice(b).ok())
        .unwrap_or(Value::Null);
    Ok(Outcome::new(
        json!({ "ok": true, "mode": input.mode, "out": out, "sha256": hash, "protocol": protocol }),
        format!("wrote {} ({} mode, {} layers)", out.display(), input.mode, protocol["layers"].as_array().map_or(0, Vec::len)),
    ))
}

pub fn compose(a: &ComposeArgs) -> Result<Outcome, CliError> {
    let assets = read_all(&a.assets)?;
    let partial = a.partial.as_deref().map(read).transpose()?;
    let mode = match (&partial, assets.is_empty()) {
        (Some(_), _) => Mode::Canvas,
        (None, true) => Mode::PromptOnly,
        (None, false) => Mode::PromptAssets,
    };
    let input = ComposeInput { mode, prompt: &a.prompt, size: Some(a.size), assets: &assets, partial: partial.as_deref(), source_bundle: None };
    run_compose(&input, &a.backends, &a.fonts, &a.out)
}

pub fn overlay(a: &OverlayArgs) -> Result<Outcome, CliError> {
    let assets = vec![read(&a.image)?];
    let input = ComposeInput { mode: Mode::TextOverlay, prompt: &a.prompt, size: None, assets: &assets, partial: None, source_bundle: None };
    run_compose(&input, &a.backends, &a.fonts, &a.out)
}

pub fn relayout(a: &RelayoutArgs) -> Result<Outcome, CliError> {
    let src = read_bundle(&a.bundle).map_err(|e| match e {
        strata_core::pipeline::BundleError::Io(io) => CliError::Io(format!("{}: {io}", a.bundle.display())),
        other => CliError::invalid(format!("{}: {other}", a.bundle.display())),
    })?;
    let zip = write_bundle_zip(&src);
    let input = ComposeInput {
        mode: Mode::Relayout,
        prompt: &src.foreground_layers.caption,
        size: Some(a.size),
        assets: &[],
        partial: None,
        source_bundle: Some(&zip),
    };
    run_compose(&input, &a.backends, &a.fonts, &a.out)
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub protocol: PathBuf,
    /// Canvas size `WxH`; enables the canvas checks (off-canvas boxes).
    #[arg(long, value_parser = parse_size)]
    pub size: Option<CanvasSize>,
    /// Number of assets available; enables the asset reference check.
    #[arg(long)]
    pub asset_count: Option<usize>,
}

pub fn validate(a: &ValidateArgs) -> Result<Outcome, CliError> {
    let bytes = read(&a.protocol)?;
    let violations = match parse_protocol(&bytes) {
        Err(e) => vec![ops::parse_violation(&e)],
        Ok(p) => match a.size {
            Some(size) => validate_full(&p, size, a.asset_count.unwrap_or(usize::MAX)),
            None => {
                let mut v = validate_fields(&p);
                if let Some(n) = a.asset_count {
                    // the asset check needs no canvas; borrow it from a full run
                    let probe = validate_full(&p, CanvasSize::new(1, 1).expect("1x1"), n);
                    v.extend(probe.into_iter().filter(|x| x.rule == "asset_ref_range"));
                }
                v
            }
        },
    };
    if violations.is_empty() {
        Ok(Outcome::new(json!({ "valid": true, "violations": [] }), format!("{}: valid", a.protocol.display())))
    } else {
        Err(CliError::Validation { message: format!("{}: {} violation(s)", a.protocol.display(), violations.len()), violations })
    }
}

#[derive(Debug, Args)]
pub struct FontsArgs {
    #[command(flatten)]
    pub fonts: FontArgs,
}

pub fn fonts(a: &FontsArgs) -> Result<Outcome, CliError> {
    let names = a.fonts.catalog()?.family_names();
    Ok(Outcome::new(json!(names), names.join("\n")))
}
