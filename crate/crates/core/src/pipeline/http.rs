//! Remote model backends over HTTP multipart. Wire format: `docs/backend-api.md`.

use std::sync::OnceLock;
use std::time::Duration;

use reqwest::blocking::multipart::{Form, Part};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;

use super::retry::Attempt;
use super::{BackendConfig, BackendError, BmBackend, PmBackend, PmRequest, RetryPolicy};
use crate::image::RgbaImage;
use crate::protocol::{canonicalize, parse_protocol, Protocol};

/// Lazily built blocking client. Building or dropping a blocking client on
/// an async runtime thread panics, so construction waits for the first
/// request and the drop happens on a plain thread.
pub(crate) struct LazyClient {
    timeout: Duration,
    client: OnceLock<Client>,
}

impl LazyClient {
    pub(crate) fn new(timeout: Duration) -> Self {
        LazyClient { timeout, client: OnceLock::new() }
    }

    pub(crate) fn get(&self) -> Result<&Client, BackendError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let c = Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(format!("http client: {e}")))?;
        Ok(self.client.get_or_init(|| c))
    }
}

impl Drop for LazyClient {
    fn drop(&mut self) {
        if let Some(c) = self.client.take() {
            let _ = std::thread::spawn(move || drop(c)).join();
        }
    }
}

fn png_part(img: &RgbaImage, name: &str) -> Part {
    Part::bytes(img.encode_png())
        .file_name(format!("{name}.png"))
        .mime_str("image/png")
        .expect("static mime")
}

fn json_part(bytes: Vec<u8>) -> Part {
    Part::bytes(bytes).mime_str("application/json").expect("static mime")
}

/// Classifies a response or transport error into an attempt outcome.
pub(crate) fn classify(result: reqwest::Result<Response>) -> Attempt<Vec<u8>> {
    let resp = match result {
        Ok(r) => r,
        Err(e) => return Attempt::Retry(e.to_string()),
    };
    let status = resp.status();
    if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
        return Attempt::Retry(format!("HTTP {status}"));
    }
    if !status.is_success() {
        let body = resp.text().unwrap_or_default();
        return Attempt::Fatal(BackendError::Protocol(format!("HTTP {status}: {}", body.chars().take(200).collect::<String>())));
    }
    match resp.bytes() {
        Ok(b) => Attempt::Done(b.to_vec()),
        Err(e) => Attempt::Retry(e.to_string()),
    }
}

pub struct HttpPm {
    url: String,
    retry: RetryPolicy,
    client: LazyClient,
}

impl HttpPm {
    pub fn new(url: impl Into<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        HttpPm { url: url.into(), retry, client: LazyClient::new(timeout) }
    }

    /// `None` when no PM endpoint is configured.
    pub fn from_config(cfg: &BackendConfig) -> Option<Self> {
        cfg.pm_url.as_ref().map(|u| Self::new(u.clone(), cfg.timeout(), cfg.retry()))
    }

    fn form(req: &PmRequest<'_>) -> Form {
        let mut form = Form::new()
            .text("prompt", req.prompt.to_string())
            .text("size", req.size.to_string())
            .text("mode", req.mode.as_str());
        for (i, a) in req.assets.iter().enumerate() {
            form = form.part(format!("asset_{i}"), png_part(a, &i.to_string()));
        }
        if let Some(p) = req.partial {
            form = form.part("partial", json_part(serde_json::to_vec(p).expect("partial serializes")));
        }
        if let Some(src) = req.reference {
            form = form
                .part("reference_protocol", json_part(canonicalize(&src.foreground_layers)))
                .part("reference_image", png_part(&src.flattened, "reference"));
        }
        form
    }
}

impl PmBackend for HttpPm {
    fn predict(&self, req: &PmRequest<'_>) -> Result<Protocol, BackendError> {
        let client = self.client.get()?;
        let body = self.retry.run("PM", || classify(client.post(&self.url).multipart(Self::form(req)).send()))?;
        parse_protocol(&body).map_err(|e| BackendError::Protocol(e.to_string()))
    }
}

pub struct HttpBm {
    url: String,
    retry: RetryPolicy,
    client: LazyClient,
}

impl HttpBm {
    pub fn new(url: impl Into<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        HttpBm { url: url.into(), retry, client: LazyClient::new(timeout) }
    }

    pub fn from_config(cfg: &BackendConfig) -> Option<Self> {
        cfg.bm_url.as_ref().map(|u| Self::new(u.clone(), cfg.timeout(), cfg.retry()))
    }
}

impl BmBackend for HttpBm {
    fn generate(&self, foreground: &RgbaImage, caption: &str) -> Result<RgbaImage, BackendError> {
        let client = self.client.get()?;
        let png = foreground.encode_png();
        let size = format!("{}x{}", foreground.width(), foreground.height());
        let body = self.retry.run("BM", || {
            let form = Form::new()
                .part("foreground", Part::bytes(png.clone()).file_name("foreground.png").mime_str("image/png").expect("static mime"))
                .text("caption", caption.to_string())
                .text("size", size.clone());
            classify(client.post(&self.url).multipart(form).send())
        })?;
        let img = RgbaImage::decode_png(&body).map_err(|e| BackendError::Protocol(format!("background PNG: {e}")))?;
        if (img.width(), img.height()) != (foreground.width(), foreground.height()) {
            return Err(BackendError::Protocol(format!(
                "background is {}x{}, expected {size}",
                img.width(),
                img.height()
            )));
        }
        Ok(img)
    }
}
