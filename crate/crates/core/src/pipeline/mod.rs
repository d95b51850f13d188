//! Prompt → protocol → foreground → background → flattened poster.
//!
//! A protocol model (PM) predicts the layer protocol, the renderer rasterizes
//! it, and a background model (BM) paints a background for the rendered
//! foreground and the predicted caption. Both models are pluggable backends;
//! [`mock`] provides deterministic stand-ins and [`http`] talks to remote
//! services.

pub mod bundle;
pub mod config;
pub mod http;
pub mod mock;
pub(crate) mod retry;

pub use bundle::{read_bundle, read_bundle_dir, read_bundle_zip, write_bundle_dir, write_bundle_zip, BundleError};
pub use config::{BackendConfig, ConfigError};
pub use http::{HttpBm, HttpPm};
pub use mock::{mock_bm, mock_pm, MockBm, MockPm};
pub use retry::RetryPolicy;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::blend::flatten;
use crate::font::FontCatalog;
use crate::image::RgbaImage;
use crate::protocol::{merge_partial, validate, CanvasSize, Layer, MergeError, PartialProtocol, Protocol, Violation};
use crate::render::{composite, RenderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PromptOnly,
    PromptAssets,
    TextOverlay,
    Canvas,
    Relayout,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::PromptOnly => "prompt_only",
            Mode::PromptAssets => "prompt_assets",
            Mode::TextOverlay => "text_overlay",
            Mode::Canvas => "canvas",
            Mode::Relayout => "relayout",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The editable result: background plus the protocol that renders the
/// foreground, together with the assets the protocol references.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub background: RgbaImage,
    pub foreground_layers: Protocol,
    pub flattened: RgbaImage,
    pub assets: Vec<RgbaImage>,
}

impl Composition {
    pub fn size(&self) -> CanvasSize {
        self.background.size().expect("composition backgrounds are non-empty")
    }

    /// Recomputes the flattened image from the parts.
    pub fn reflatten(&self, fonts: &FontCatalog) -> Result<RgbaImage, RenderError> {
        let fg = composite(self.size(), &self.foreground_layers.layers, &self.assets, fonts)?;
        Ok(flatten(&self.background, &fg))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRequest {
    pub prompt: String,
    pub size: CanvasSize,
    pub assets: Vec<RgbaImage>,
    pub mode: Mode,
    pub partial: Option<PartialProtocol>,
    pub relayout_source: Option<Composition>,
}

impl PipelineRequest {
    pub fn new(prompt: impl Into<String>, size: CanvasSize, mode: Mode) -> Self {
        PipelineRequest { prompt: prompt.into(), size, assets: Vec::new(), mode, partial: None, relayout_source: None }
    }

    pub fn with_assets(mut self, assets: Vec<RgbaImage>) -> Self {
        self.assets = assets;
        self
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidRequest(m.to_string()));
        match self.mode {
            Mode::Canvas if self.partial.is_none() => return bad("canvas mode needs a partial protocol"),
            Mode::Relayout if self.relayout_source.is_none() => return bad("relayout needs a source composition"),
            Mode::TextOverlay if self.assets.is_empty() => return bad("text_overlay needs at least one asset"),
            _ => {}
        }
        if self.partial.is_some() && self.mode != Mode::Canvas {
            return bad("a partial protocol is only accepted in canvas mode");
        }
        if self.assets.iter().any(|a| a.size().is_none()) {
            return bad("assets must be non-empty images within the pixel limit");
        }
        Ok(())
    }

    /// Canvas size the pipeline renders at: the first asset's size for
    /// text overlay, the requested size otherwise.
    pub fn canvas_size(&self) -> CanvasSize {
        match self.mode {
            Mode::TextOverlay => self.assets.first().and_then(RgbaImage::size).unwrap_or(self.size),
            _ => self.size,
        }
    }
}

/// What a protocol model sees.
#[derive(Debug, Clone, Copy)]
pub struct PmRequest<'a> {
    pub prompt: &'a str,
    pub size: CanvasSize,
    pub assets: &'a [RgbaImage],
    pub mode: Mode,
    pub partial: Option<&'a PartialProtocol>,
    /// Existing design to adapt (relayout).
    pub reference: Option<&'a Composition>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("invalid backend response: {0}")]
    Protocol(String),
}

pub trait PmBackend: Send + Sync {
    fn predict(&self, req: &PmRequest<'_>) -> Result<Protocol, BackendError>;
}

pub trait BmBackend: Send + Sync {
    fn generate(&self, foreground: &RgbaImage, caption: &str) -> Result<RgbaImage, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "PM")]
    Pm,
    #[serde(rename = "render")]
    Render,
    #[serde(rename = "BM")]
    Bm,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Pm => "PM",
            Stage::Render => "render",
            Stage::Bm => "BM",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{stage} stage failed: {source}")]
    Backend { stage: Stage, source: BackendError },
    #[error("locked fields do not merge with the prediction: {0}")]
    Merge(#[from] MergeError),
    #[error("protocol has {} violation(s)", .0.len())]
    Validation(Vec<Violation>),
    #[error("render stage failed: {0}")]
    Render(#[from] RenderError),
}

impl PipelineError {
    /// Stage to blame for backend failures.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Backend { stage, .. } => Some(*stage),
            PipelineError::Render(_) => Some(Stage::Render),
            _ => None,
        }
    }
}

fn describe(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Runs PM → (merge) → validate → render → BM → flatten.
pub fn compose(
    req: &PipelineRequest,
    pm: &dyn PmBackend,
    bm: &dyn BmBackend,
    fonts: &FontCatalog,
) -> Result<Composition, PipelineError> {
    req.check()?;
    let source = req.relayout_source.as_ref();
    let assets: &[RgbaImage] = match source {
        Some(src) if req.mode == Mode::Relayout => &src.assets,
        _ => &req.assets,
    };
    let size = req.canvas_size();
    let pm_req = PmRequest {
        prompt: &req.prompt,
        size,
        assets,
        mode: req.mode,
        partial: req.partial.as_ref(),
        reference: source,
    };
    let pm_err = |source| PipelineError::Backend { stage: Stage::Pm, source };
    let predicted = pm.predict(&pm_req).map_err(pm_err)?;
    let v = validate(&predicted, size, assets.len());
    if !v.is_empty() {
        return Err(pm_err(BackendError::Protocol(describe(&v))));
    }
    if req.mode == Mode::TextOverlay && predicted.layers.iter().any(|l| matches!(l, Layer::Asset(_))) {
        return Err(pm_err(BackendError::Protocol("text_overlay prediction contains asset layers".into())));
    }

    let mut protocol = match &req.partial {
        Some(p) => {
            let merged = merge_partial(&p.protocol, &p.mask, &predicted)?;
            let v = validate(&merged, size, assets.len());
            if !v.is_empty() {
                return Err(PipelineError::Validation(v));
            }
            merged
        }
        None => predicted,
    };
    if let Some(src) = source {
        protocol.caption = src.foreground_layers.caption.clone();
    }

    let foreground = composite(size, &protocol.layers, assets, fonts)?;
    let background = if req.mode == Mode::TextOverlay {
        assets[0].clone()
    } else {
        let bg = bm.generate(&foreground, &protocol.caption).map_err(|source| PipelineError::Backend { stage: Stage::Bm, source })?;
        if (bg.width(), bg.height()) != (size.width, size.height) {
            return Err(PipelineError::Backend {
                stage: Stage::Bm,
                source: BackendError::Protocol(format!("background is {}x{}, canvas is {size}", bg.width(), bg.height())),
            });
        }
        bg
    };
    let flattened = flatten(&background, &foreground);
    Ok(Composition { background, foreground_layers: protocol, flattened, assets: assets.to_vec() })
}

/// Adapts an existing composition to `new_size`, keeping its caption and
/// assets.
pub fn relayout(
    src: &Composition,
    new_size: CanvasSize,
    pm: &dyn PmBackend,
    bm: &dyn BmBackend,
    fonts: &FontCatalog,
) -> Result<Composition, PipelineError> {
    let mut req = PipelineRequest::new(src.foreground_layers.caption.clone(), new_size, Mode::Relayout);
    req.relayout_source = Some(src.clone());
    compose(&req, pm, bm, fonts)
}
