//! HTTP facade over the renderer and pipeline.
//!
//! | route            | body                         | reply                      |
//! |------------------|------------------------------|----------------------------|
//! | `POST /render`   | multipart: protocol, size, asset_N, background | PNG      |
//! | `POST /compose`  | multipart: mode, prompt, size, asset_N, partial, bundle | zip bundle |
//! | `POST /validate` | multipart: protocol, size, asset_count | `{valid, violations}` |
//! | `GET /fonts`     |                              | sorted family names        |
//!
//! The service keeps no state between requests. See `docs/backend-api.md`.

pub mod ops;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, State};
use axum::http::{header, HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use strata_core::font::{FontCatalog, FontError};
use strata_core::pipeline::{BackendConfig, BmBackend, ConfigError, Mode, PmBackend};
use strata_core::protocol::Violation;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use ops::{ComposeInput, OpError, RenderInput};

/// Request body cap, uploads included.
pub const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

/// SHA-256 (hex) of the response body.
pub const CONTENT_HASH_HEADER: &str = "x-content-sha256";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    pub method: &'static str,
    pub path: &'static str,
    /// CLI subcommand offering the same capability.
    pub cli: &'static str,
}

pub const ROUTES: &[Route] = &[
    Route { method: "POST", path: "/render", cli: "render" },
    Route { method: "POST", path: "/compose", cli: "compose" },
    Route { method: "POST", path: "/validate", cli: "validate" },
    Route { method: "GET", path: "/fonts", cli: "fonts" },
];

// ------------------------------------------------------------------ config

/// ```toml
/// bind = "127.0.0.1:8080"
/// font_dir = "fonts"
/// cors_origins = ["http://localhost:5173"]   # empty: any origin
///
/// [backends]
/// pm_url = "http://127.0.0.1:9001/predict"
/// ```
///
/// Environment overrides: `STRATA_BIND`, `STRATA_FONT_DIR`,
/// `STRATA_CORS_ORIGINS` (comma separated) and the backend variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub font_dir: Option<PathBuf>,
    pub cors_origins: Vec<String>,
    pub backends: BackendConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { bind: "127.0.0.1:8080".into(), font_dir: None, cors_origins: Vec::new(), backends: BackendConfig::default() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("config {path}: {source}")]
    ConfigRead { path: String, source: std::io::Error },
    #[error("config: {0}")]
    ConfigParse(#[from] toml::de::Error),
    #[error(transparent)]
    Backend(#[from] ConfigError),
    #[error("fonts: {0}")]
    Fonts(#[from] FontError),
    #[error("bad cors origin {0:?}")]
    Origin(String),
    #[error("bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ServeError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ServeError::ConfigRead { path: p.display().to_string(), source })?;
                toml::from_str(&text)?
            }
            None => ServiceConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ServeError> {
        let get = |k: &str| get(k).filter(|v| !v.is_empty());
        if let Some(v) = get("STRATA_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("STRATA_FONT_DIR") {
            self.font_dir = Some(v.into());
        }
        if let Some(v) = get("STRATA_CORS_ORIGINS") {
            self.cors_origins = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
        self.backends.apply_env(get)?;
        Ok(())
    }
}

// ------------------------------------------------------------------- state

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

struct Inner {
    fonts: FontCatalog,
    pm: Box<dyn PmBackend>,
    bm: Box<dyn BmBackend>,
}

impl AppState {
    pub fn new(fonts: FontCatalog, pm: Box<dyn PmBackend>, bm: Box<dyn BmBackend>) -> Self {
        AppState(Arc::new(Inner { fonts, pm, bm }))
    }

    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, ServeError> {
        let fonts = match &cfg.font_dir {
            Some(d) => FontCatalog::from_dir(d)?,
            None => FontCatalog::embedded(),
        };
        Ok(Self::new(fonts, cfg.backends.pm(), cfg.backends.bm()))
    }

    pub fn fonts(&self) -> &FontCatalog {
        &self.0.fonts
    }
}

// ------------------------------------------------------------------ errors

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    violations: Option<Vec<Violation>>,
}

pub struct ApiError(pub OpError);

impl From<OpError> for ApiError {
    fn from(e: OpError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let error = self.0.to_string();
        let (status, body) = match self.0 {
            OpError::Invalid { violations, .. } => (StatusCode::BAD_REQUEST, ErrorBody { error, stage: None, violations: Some(violations) }),
            OpError::TooLarge(_) => (StatusCode::PAYLOAD_TOO_LARGE, ErrorBody { error, stage: None, violations: None }),
            OpError::Backend { stage, .. } => (StatusCode::BAD_GATEWAY, ErrorBody { error, stage: Some(stage), violations: None }),
            OpError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, ErrorBody { error, stage: None, violations: None }),
        };
        if status.is_server_error() {
            tracing::warn!(status = status.as_u16(), error = %body.error, "request failed");
        }
        (status, Json(body)).into_response()
    }
}

// --------------------------------------------------------------- multipart

/// Named parts of a multipart body; `asset_N` parts collected in order.
struct Form {
    parts: BTreeMap<String, Bytes>,
    assets: Vec<Vec<u8>>,
}

impl Form {
    fn text(&self, name: &str) -> Result<Option<String>, OpError> {
        self.parts
            .get(name)
            .map(|b| String::from_utf8(b.to_vec()).map_err(|_| OpError::invalid(format!("part `{name}` is not UTF-8"))))
            .transpose()
    }

    fn require(&self, name: &str) -> Result<&Bytes, OpError> {
        self.parts.get(name).ok_or_else(|| OpError::invalid(format!("missing part `{name}`")))
    }

    fn size(&self) -> Result<Option<strata_core::CanvasSize>, OpError> {
        self.text("size")?.map(|s| ops::parse_size(&s)).transpose()
    }
}

async fn read_form(mut mp: Multipart, allowed: &[&str], with_assets: bool) -> Result<Form, OpError> {
    let mp_err = |e: axum::extract::multipart::MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            OpError::TooLarge(e.body_text())
        } else {
            OpError::invalid(e.body_text())
        }
    };
    let mut parts = BTreeMap::new();
    let mut assets = BTreeMap::new();
    while let Some(field) = mp.next_field().await.map_err(mp_err)? {
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(mp_err)?;
        let index = name.strip_prefix("asset_").filter(|_| with_assets).map(|i| i.parse::<usize>());
        let fresh = match index {
            Some(Ok(i)) => assets.insert(i, data.to_vec()).is_none(),
            Some(Err(_)) => return Err(OpError::invalid(format!("bad asset part name `{name}`"))),
            None if allowed.contains(&name.as_str()) => parts.insert(name.clone(), data).is_none(),
            None => return Err(OpError::invalid(format!("unexpected part `{name}`"))),
        };
        if !fresh {
            return Err(OpError::invalid(format!("duplicate part `{name}`")));
        }
    }
    if let Some((i, _)) = assets.keys().enumerate().find(|(i, k)| i != *k) {
        return Err(OpError::invalid(format!("asset parts must be numbered from 0 without gaps; asset_{i} is missing")));
    }
    Ok(Form { parts, assets: assets.into_values().collect() })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, OpError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| OpError::Internal(e.to_string()))?.map_err(ApiError)
}

fn hashed(content_type: &'static str, body: Vec<u8>) -> Response {
    let hash = ops::content_hash(&body);
    ([(header::CONTENT_TYPE, content_type), (HeaderName::from_static(CONTENT_HASH_HEADER), &hash)], body).into_response()
}

// ---------------------------------------------------------------- handlers

async fn render(State(s): State<AppState>, mp: Multipart) -> Result<Response, ApiError> {
    let form = read_form(mp, &["protocol", "size", "background"], true).await?;
    let size = form.size()?.ok_or_else(|| OpError::invalid("missing part `size`"))?;
    let protocol = form.require("protocol")?.clone();
    let background = form.parts.get("background").cloned();
    let png = blocking(move || {
        let input = RenderInput { protocol: &protocol, size, assets: &form.assets, background: background.as_deref() };
        ops::render_png(&input, s.fonts())
    })
    .await?;
    Ok(hashed("image/png", png))
}

async fn compose(State(s): State<AppState>, mp: Multipart) -> Result<Response, ApiError> {
    let form = read_form(mp, &["mode", "prompt", "size", "partial", "bundle"], true).await?;
    let mode = match form.text("mode")? {
        None => Mode::PromptOnly,
        Some(m) => serde_json::from_value(serde_json::Value::String(m.trim().to_string()))
            .map_err(|_| OpError::invalid(format!("unknown mode {m:?}")))?,
    };
    let prompt = form.text("prompt")?.unwrap_or_default();
    let size = form.size()?;
    let zip = blocking(move || {
        let input = ComposeInput {
            mode,
            prompt: &prompt,
            size,
            assets: &form.assets,
            partial: form.parts.get("partial").map(|b| &b[..]),
            source_bundle: form.parts.get("bundle").map(|b| &b[..]),
        };
        ops::compose_bundle(&input, s.0.pm.as_ref(), s.0.bm.as_ref(), s.fonts())
    })
    .await?;
    Ok(hashed("application/zip", zip))
}

async fn validate(mp: Multipart) -> Result<Json<ops::ValidateReport>, ApiError> {
    let form = read_form(mp, &["protocol", "size", "asset_count"], false).await?;
    let size = form.size()?.ok_or_else(|| OpError::invalid("missing part `size`"))?;
    let count = match form.text("asset_count")? {
        Some(c) => c.trim().parse().map_err(|_| OpError::invalid(format!("bad asset_count {c:?}")))?,
        None => 0,
    };
    Ok(Json(ops::validate_doc(form.require("protocol")?, size, count)))
}

async fn fonts(State(s): State<AppState>) -> Json<Vec<String>> {
    Json(s.fonts().family_names())
}

/// The full application, CORS and body limits included.
pub fn router(state: AppState, cors_origins: &[String]) -> Result<Router, ServeError> {
    let origin = if cors_origins.is_empty() {
        AllowOrigin::from(Any)
    } else {
        let list = cors_origins
            .iter()
            .map(|o| HeaderValue::from_str(o).map_err(|_| ServeError::Origin(o.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        AllowOrigin::list(list)
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any)
        .expose_headers([HeaderName::from_static(CONTENT_HASH_HEADER)]);
    Ok(Router::new()
        .route("/render", post(render))
        .route("/compose", post(compose))
        .route("/validate", post(validate))
        .route("/fonts", get(fonts))
        .with_state(state)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(cors))
}

/// Serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServeError> {
    let app = router(AppState::from_config(&cfg)?, &cfg.cors_origins)?;
    let listener = tokio::net::TcpListener::bind(&cfg.bind).await.map_err(|source| ServeError::Bind { addr: cfg.bind.clone(), source })?;
    let addr: SocketAddr = listener.local_addr()?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// [`serve`] on a fresh multi-threaded runtime.
pub fn serve_blocking(cfg: ServiceConfig) -> Result<(), ServeError> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(serve(cfg))
}
