//! Deterministic stand-in backends.
//!
//! The mock protocol model lays out a title in the top third of the canvas
//! and the assets in a grid across the middle third. It is a fixed
//! heuristic meant to exercise the pipeline, not a layout model.

use sha2::{Digest, Sha256};

use super::{BackendError, BmBackend, Mode, PmBackend, PmRequest};
use crate::image::RgbaImage;
use crate::protocol::{
    estimated_text_box, merge_partial, validate, Alignment, AssetLayer, CanvasSize, FieldMask, Layer, LayerKind,
    PartialProtocol, Protocol, Rect, Rgba, TextLayer,
};

/// Family named in mock predictions; resolves to the embedded font.
pub const MOCK_FONT: &str = "DejaVu Sans";

const PLACEHOLDER_TITLE: &str = "Untitled";

#[derive(Debug, Clone, Copy, Default)]
pub struct MockPm;

#[derive(Debug, Clone, Copy, Default)]
pub struct MockBm;

impl PmBackend for MockPm {
    fn predict(&self, req: &PmRequest<'_>) -> Result<Protocol, BackendError> {
        Ok(mock_pm(req))
    }
}

impl BmBackend for MockBm {
    fn generate(&self, foreground: &RgbaImage, caption: &str) -> Result<RgbaImage, BackendError> {
        Ok(mock_bm(foreground, caption))
    }
}

fn digest(s: &str) -> [u8; 32] {
    Sha256::digest(s.as_bytes()).into()
}

/// Caption the mock predicts for `prompt`.
pub fn mock_caption(prompt: &str) -> String {
    format!("Soft abstract background with gentle lighting, suited to: {}", prompt.trim())
}

pub fn mock_pm(req: &PmRequest<'_>) -> Protocol {
    if let (Mode::Relayout, Some(src)) = (req.mode, req.reference) {
        return relayout_layers(&src.foreground_layers, src.size(), req.size);
    }
    let mut predicted = default_prediction(req);
    if let Some(partial) = req.partial {
        predicted = align_to_partial(predicted, partial, req);
        // locks that would make the prediction invalid are left for the
        // caller's own merge to report
        if let Ok(merged) = merge_partial(&partial.protocol, &partial.mask, &predicted) {
            if validate(&merged, req.size, req.assets.len()).is_empty() {
                predicted = merged;
            }
        }
    }
    predicted
}

fn title_layer(prompt: &str, size: CanvasSize, hash: &[u8; 32]) -> TextLayer {
    let (w, h) = (f64::from(size.width), f64::from(size.height));
    let font_size = h / 12.0;
    let first = prompt.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or(PLACEHOLDER_TITLE);
    let max_chars = ((0.9 * w / (0.6 * font_size)).floor() as usize).max(1);
    let content: String = first.chars().take(max_chars).collect::<String>().trim_end().to_string();
    let content = if content.is_empty() { PLACEHOLDER_TITLE.chars().take(max_chars).collect() } else { content };
    // dark, saturated-ish title colour
    let color = Rgba([hash[0] / 3, hash[1] / 3, hash[2] / 3, 255]);
    let mut t = TextLayer::new(content, MOCK_FONT, font_size).with_color(color);
    t.alignment = Alignment::Center;
    let b = estimated_text_box(&t);
    t.position.x = (w - b.w) / 2.0;
    t.position.y = h / 6.0 - b.h / 2.0;
    t
}

/// Aspect-fit rects for `dims` in a near-square grid over the middle third.
fn asset_grid(dims: &[(u32, u32)], size: CanvasSize) -> Vec<Rect> {
    let n = dims.len();
    if n == 0 {
        return Vec::new();
    }
    let (w, h) = (f64::from(size.width), f64::from(size.height));
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let (rx, ry, rw, rh) = (0.05 * w, h / 3.0, 0.9 * w, h / 3.0);
    let (cw, ch) = (rw / cols as f64, rh / rows as f64);
    dims.iter()
        .enumerate()
        .map(|(i, &(aw, ah))| {
            let (col, row) = (i % cols, i / cols);
            let (bw, bh) = (cw * 0.9, ch * 0.9);
            let s = (bw / f64::from(aw)).min(bh / f64::from(ah));
            let fw = (f64::from(aw) * s).floor().max(1.0);
            let fh = (f64::from(ah) * s).floor().max(1.0);
            let x = (rx + col as f64 * cw + (cw - fw) / 2.0).floor();
            let y = (ry + row as f64 * ch + (ch - fh) / 2.0).floor();
            Rect { x, y, w: fw, h: fh }
        })
        .collect()
}

fn default_prediction(req: &PmRequest<'_>) -> Protocol {
    let hash = digest(req.prompt);
    let mut layers = Vec::new();
    if req.mode != Mode::TextOverlay {
        let dims: Vec<_> = req.assets.iter().map(|a| (a.width(), a.height())).collect();
        for (i, rect) in asset_grid(&dims, req.size).into_iter().enumerate() {
            layers.push(Layer::Asset(AssetLayer::new(i, rect)));
        }
    }
    layers.push(Layer::Text(title_layer(req.prompt, req.size, &hash)));
    Protocol::new(mock_caption(req.prompt), layers)
}

/// Builds a prediction whose layers at the mask's indices have the kinds of
/// the user's layers, so that the locked fields can be merged in.
fn align_to_partial(base: Protocol, partial: &PartialProtocol, req: &PmRequest<'_>) -> Protocol {
    let mask: &FieldMask = &partial.mask;
    let needed = mask.layers.keys().next_back().map_or(0, |k| k + 1);
    let n = base.layers.len().max(needed);
    let mut spare = base.layers.iter().cycle();
    let mut layers = Vec::with_capacity(n);
    let mut user = mask.layers.iter().zip(&partial.protocol.layers).peekable();
    for i in 0..n {
        match user.peek() {
            Some(((&index, _), user_layer)) if index == i => {
                layers.push(guess_for(user_layer.kind(), &base, req));
                user.next();
            }
            _ => layers.push(spare.next().expect("base has a title").clone()),
        }
    }
    Protocol { caption: base.caption, layers, extra: base.extra }
}

/// The mock's own layer of the given kind, used where a user layer sits.
fn guess_for(kind: LayerKind, base: &Protocol, req: &PmRequest<'_>) -> Layer {
    if let Some(l) = base.layers.iter().find(|l| l.kind() == kind) {
        return l.clone();
    }
    match kind {
        LayerKind::Text => Layer::Text(title_layer(req.prompt, req.size, &digest(req.prompt))),
        LayerKind::Asset => {
            let (w, h) = (f64::from(req.size.width), f64::from(req.size.height));
            let rect = Rect { x: (w / 4.0).floor(), y: (h / 3.0).floor(), w: (w / 2.0).floor().max(1.0), h: (h / 3.0).floor().max(1.0) };
            Layer::Asset(AssetLayer::new(0, rect))
        }
    }
}

/// Scales geometry from `from` to `to` and clamps every layer box into the
/// new canvas. Same-size relayout returns the layers unchanged.
pub fn relayout_layers(src: &Protocol, from: CanvasSize, to: CanvasSize) -> Protocol {
    if from == to {
        return src.clone();
    }
    let sx = f64::from(to.width) / f64::from(from.width);
    let sy = f64::from(to.height) / f64::from(from.height);
    let s = sx.min(sy);
    let (cw, ch) = (f64::from(to.width), f64::from(to.height));
    let mut out = src.clone();
    for layer in &mut out.layers {
        match layer {
            Layer::Text(t) => {
                t.position.x *= sx;
                t.position.y *= sy;
                t.font_size *= s;
                t.stroke.width *= s;
                t.char_spacing *= s;
                let b = estimated_text_box(t);
                let fit = (cw / b.w.max(f64::MIN_POSITIVE)).min(ch / b.h.max(f64::MIN_POSITIVE)).min(1.0);
                if fit < 1.0 {
                    t.font_size *= fit;
                    t.char_spacing *= fit;
                    t.stroke.width *= fit;
                }
                let b = estimated_text_box(t);
                t.position.x = t.position.x.clamp(0.0, (cw - b.w).max(0.0));
                t.position.y = t.position.y.clamp(0.0, (ch - b.h).max(0.0));
            }
            Layer::Asset(a) => {
                let r = &mut a.position;
                r.x *= sx;
                r.y *= sy;
                r.w *= s;
                r.h *= s;
                let fit = (cw / r.w).min(ch / r.h).min(1.0);
                r.w = (r.w * fit).max(1.0);
                r.h = (r.h * fit).max(1.0);
                r.x = r.x.clamp(0.0, (cw - r.w).max(0.0));
                r.y = r.y.clamp(0.0, (ch - r.h).max(0.0));
            }
        }
    }
    out
}

/// Opaque vertical gradient between two colours taken from the caption hash.
pub fn mock_bm(foreground: &RgbaImage, caption: &str) -> RgbaImage {
    let h = digest(caption);
    let top = [h[0], h[1], h[2]];
    let bottom = [h[3], h[4], h[5]];
    let (w, ht) = (foreground.width(), foreground.height());
    let mut img = RgbaImage::new(w, ht);
    let span = ht.max(2) - 1;
    for y in 0..ht {
        let mut px = [0, 0, 0, 255];
        for c in 0..3 {
            let v = u32::from(top[c]) * (span - y.min(span)) + u32::from(bottom[c]) * y.min(span);
            px[c] = ((v + span / 2) / span) as u8;
        }
        for x in 0..w {
            img.set_pixel(x, y, px);
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::canonicalize;

    fn req<'a>(prompt: &'a str, size: CanvasSize, assets: &'a [RgbaImage]) -> PmRequest<'a> {
        let mode = if assets.is_empty() { Mode::PromptOnly } else { Mode::PromptAssets };
        PmRequest { prompt, size, assets, mode, partial: None, reference: None }
    }

    #[test]
    fn deterministic_and_valid() {
        let size = CanvasSize::new(1000, 1500).unwrap();
        let assets = [RgbaImage::new(300, 200), RgbaImage::new(100, 400)];
        let a = mock_pm(&req("Grand opening", size, &assets));
        assert_eq!(canonicalize(&a), canonicalize(&mock_pm(&req("Grand opening", size, &assets))));
        assert!(validate(&a, size, 2).is_empty());
        let rects: Vec<Rect> = a
            .layers
            .iter()
            .filter_map(|l| if let Layer::Asset(x) = l { Some(x.position) } else { None })
            .collect();
        assert_eq!(rects.len(), 2);
        let (p, q) = (rects[0], rects[1]);
        assert!(p.x + p.w <= q.x || q.x + q.w <= p.x || p.y + p.h <= q.y || q.y + q.h <= p.y);
        for r in rects {
            assert!(r.x >= 0.0 && r.y >= 0.0 && r.x + r.w <= 1000.0 && r.y + r.h <= 1500.0);
        }
    }

    #[test]
    fn empty_prompt_gets_placeholder() {
        let size = CanvasSize::new(500, 500).unwrap();
        let p = mock_pm(&req("   ", size, &[]));
        let Layer::Text(t) = &p.layers[0] else { panic!() };
        assert_eq!(t.content, PLACEHOLDER_TITLE);
        assert!(validate(&p, size, 0).is_empty());
    }

    #[test]
    fn long_titles_are_truncated_to_width() {
        let size = CanvasSize::new(300, 1200).unwrap();
        let p = mock_pm(&req(&"word ".repeat(50), size, &[]));
        let Layer::Text(t) = &p.layers[0] else { panic!() };
        assert!(estimated_text_box(t).w <= 0.9 * 300.0 + 1e-9);
    }

    #[test]
    fn bm_gradient_properties() {
        let fg = RgbaImage::new(7, 9);
        assert_eq!(mock_bm(&fg, "a"), mock_bm(&fg, "a"));
        assert_ne!(mock_bm(&fg, "a").pixel(0, 0), mock_bm(&fg, "b").pixel(0, 0));
        let img = mock_bm(&fg, "anything");
        assert!(img.pixels().all(|p| p[3] == 255));
        let h = digest("anything");
        assert_eq!(img.pixel(3, 0), [h[0], h[1], h[2], 255]);
        assert_eq!(img.pixel(3, 8), [h[3], h[4], h[5], 255]);
        assert_eq!(mock_bm(&RgbaImage::new(2, 1), "x").height(), 1);
    }

    #[test]
    fn relayout_contains_layers() {
        let size = CanvasSize::new(1000, 1000).unwrap();
        let assets = [RgbaImage::new(800, 300)];
        let src = mock_pm(&req("A rather long poster headline here", size, &assets));
        let to = CanvasSize::new(500, 1000).unwrap();
        let out = relayout_layers(&src, size, to);
        for l in &out.layers {
            let b = match l {
                Layer::Text(t) => estimated_text_box(t),
                Layer::Asset(a) => a.position,
            };
            assert!(b.x >= 0.0 && b.y >= 0.0 && b.x + b.w <= 500.0 + 1e-9 && b.y + b.h <= 1000.0 + 1e-9, "{b:?}");
        }
        assert!(validate(&out, to, 1).is_empty());
    }
}
