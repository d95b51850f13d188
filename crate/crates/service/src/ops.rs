//! Request handling shared by the HTTP routes and the CLI. Inputs arrive as
//! raw bytes (protocol JSON, PNG uploads); outputs are response bytes.

use serde::Serialize;
use strata_core::blend::flatten;
use strata_core::font::FontCatalog;
use strata_core::image::{sha256_hex, ImageError};
use strata_core::pipeline::bundle::{bundle_entries, bundle_entries_with_background, entries_to_zip};
use strata_core::pipeline::{compose, read_bundle_zip, BmBackend, Mode, PipelineError, PipelineRequest, PmBackend};
use strata_core::protocol::{parse_protocol, validate, CanvasSize, ParseError, PartialProtocol, Protocol, SizeError, Violation};
use strata_core::render::composite;
use strata_core::RgbaImage;

#[derive(Debug, thiserror::Error)]
pub enum OpError {
    /// Bad input; `violations` is empty for errors outside the protocol.
    #[error("{message}")]
    Invalid { message: String, violations: Vec<Violation> },
    #[error("{0}")]
    TooLarge(String),
    #[error("{stage} stage failed: {message}")]
    Backend { stage: String, message: String },
    #[error("{0}")]
    Internal(String),
}

impl OpError {
    pub fn invalid(message: impl Into<String>) -> Self {
        OpError::Invalid { message: message.into(), violations: Vec::new() }
    }
}

impl From<SizeError> for OpError {
    fn from(e: SizeError) -> Self {
        match e {
            SizeError::TooLarge(..) => OpError::TooLarge(e.to_string()),
            _ => OpError::invalid(e.to_string()),
        }
    }
}

/// Parse errors reported in the same shape as validation violations.
pub fn parse_violation(e: &ParseError) -> Violation {
    Violation { layer_index: e.layer(), field: e.field().unwrap_or("").to_string(), rule: "parse".into(), message: e.to_string() }
}

pub fn parse(protocol: &[u8]) -> Result<Protocol, OpError> {
    parse_protocol(protocol).map_err(|e| OpError::Invalid { message: "protocol does not parse".into(), violations: vec![parse_violation(&e)] })
}

pub fn parse_size(s: &str) -> Result<CanvasSize, OpError> {
    Ok(s.trim().parse::<CanvasSize>()?)
}

pub fn decode_png(what: &str, bytes: &[u8]) -> Result<RgbaImage, OpError> {
    RgbaImage::decode_png(bytes).map_err(|e| match e {
        ImageError::TooLarge(..) => OpError::TooLarge(format!("{what}: {e}")),
        _ => OpError::invalid(format!("{what}: {e}")),
    })
}

pub fn decode_assets(assets: &[Vec<u8>]) -> Result<Vec<RgbaImage>, OpError> {
    assets.iter().enumerate().map(|(i, b)| decode_png(&format!("asset {i}"), b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

/// Parse and validate; parse failures become a single `parse` violation.
pub fn validate_doc(protocol: &[u8], size: CanvasSize, asset_count: usize) -> ValidateReport {
    let violations = match parse_protocol(protocol) {
        Ok(p) => validate(&p, size, asset_count),
        Err(e) => vec![parse_violation(&e)],
    };
    ValidateReport { valid: violations.is_empty(), violations }
}

pub struct RenderInput<'a> {
    pub protocol: &'a [u8],
    pub size: CanvasSize,
    pub assets: &'a [Vec<u8>],
    pub background: Option<&'a [u8]>,
}

/// Renders to PNG bytes: over the background when given, else over
/// transparency.
pub fn render_png(input: &RenderInput<'_>, fonts: &FontCatalog) -> Result<Vec<u8>, OpError> {
    let protocol = parse(input.protocol)?;
    let violations = validate(&protocol, input.size, input.assets.len());
    if !violations.is_empty() {
        return Err(OpError::Invalid { message: format!("protocol has {} violation(s)", violations.len()), violations });
    }
    let background = input.background.map(|b| decode_png("background", b)).transpose()?;
    if let Some(bg) = &background {
        if (bg.width(), bg.height()) != (input.size.width, input.size.height) {
            return Err(OpError::invalid(format!("background is {}x{}, canvas is {}", bg.width(), bg.height(), input.size)));
        }
    }
    let assets = decode_assets(input.assets)?;
    let fg = composite(input.size, &protocol.layers, &assets, fonts).map_err(|e| OpError::Internal(e.to_string()))?;
    Ok(match background {
        Some(bg) => flatten(&bg, &fg).encode_png(),
        None => fg.encode_png(),
    })
}

pub struct ComposeInput<'a> {
    pub mode: Mode,
    pub prompt: &'a str,
    /// Required except for `text_overlay`, where it defaults to the first
    /// asset's size.
    pub size: Option<CanvasSize>,
    pub assets: &'a [Vec<u8>],
    /// `PartialProtocol` JSON, canvas mode only.
    pub partial: Option<&'a [u8]>,
    /// Source bundle zip, relayout only.
    pub source_bundle: Option<&'a [u8]>,
}

/// Runs the pipeline and returns the zipped composition bundle.
pub fn compose_bundle(input: &ComposeInput<'_>, pm: &dyn PmBackend, bm: &dyn BmBackend, fonts: &FontCatalog) -> Result<Vec<u8>, OpError> {
    Ok(entries_to_zip(&compose_entries(input, pm, bm, fonts)?))
}

/// Bundle entries (name, bytes) in archive order.
pub fn compose_entries(input: &ComposeInput<'_>, pm: &dyn PmBackend, bm: &dyn BmBackend, fonts: &FontCatalog) -> Result<Vec<(String, Vec<u8>)>, OpError> {
    let assets = decode_assets(input.assets)?;
    let size = match (input.size, input.mode, assets.first()) {
        (Some(s), _, _) => s,
        (None, Mode::TextOverlay, Some(a)) => a.size().ok_or_else(|| OpError::TooLarge("asset 0 is too large".into()))?,
        _ => return Err(OpError::invalid("size is required")),
    };
    let mut req = PipelineRequest::new(input.prompt, size, input.mode).with_assets(assets);
    if let Some(p) = input.partial {
        let partial: PartialProtocol = serde_json::from_slice(p).map_err(|e| OpError::invalid(format!("partial: {e}")))?;
        req.partial = Some(partial);
    }
    if let Some(b) = input.source_bundle {
        req.relayout_source = Some(read_bundle_zip(b).map_err(|e| OpError::invalid(format!("bundle: {e}")))?);
    }
    let c = compose(&req, pm, bm, fonts).map_err(pipeline_error)?;
    Ok(match input.mode {
        Mode::TextOverlay => bundle_entries_with_background(&c, input.assets[0].clone()),
        _ => bundle_entries(&c),
    })
}

pub fn pipeline_error(e: PipelineError) -> OpError {
    let message = e.to_string();
    match e {
        PipelineError::Validation(violations) => OpError::Invalid { message, violations },
        PipelineError::InvalidRequest(_) | PipelineError::Merge(_) => OpError::invalid(message),
        PipelineError::Backend { stage, source } => OpError::Backend { stage: stage.to_string(), message: source.to_string() },
        PipelineError::Render(_) => OpError::Internal(message),
    }
}

pub fn content_hash(bytes: &[u8]) -> String {
    sha256_hex(bytes)
}
