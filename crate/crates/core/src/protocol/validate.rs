use serde::{Deserialize, Serialize};

use super::{AssetLayer, CanvasSize, Layer, MaskType, Protocol, Rect, TextLayer};

/// One published validation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rule {
    pub id: &'static str,
    pub description: &'static str,
}

/// Registry of every rule `validate` can report.
pub const RULES: &[Rule] = &[
    Rule { id: "non_finite", description: "numeric field must be finite" },
    Rule { id: "content_empty", description: "text content must be non-empty" },
    Rule { id: "font_family_empty", description: "font family must be named" },
    Rule { id: "font_size_positive", description: "font size must be > 0" },
    Rule { id: "line_spacing_positive", description: "line spacing must be > 0" },
    Rule { id: "stroke_width_negative", description: "stroke width must be >= 0" },
    Rule { id: "bend_range", description: "bend must lie in [-360, 360] degrees" },
    Rule { id: "rect_size", description: "asset rect width and height must be >= 1" },
    Rule { id: "crop_range", description: "crop must satisfy 0 <= u0 < u1 <= 1 and 0 <= v0 < v1 <= 1" },
    Rule { id: "mask_radius", description: "rounded-rect radius must be >= 0" },
    Rule { id: "asset_ref_range", description: "asset_ref must index the supplied asset list" },
    Rule { id: "off_canvas", description: "unrotated layer box must intersect the canvas" },
];

fn rule(id: &str) -> &'static str {
    RULES.iter().find(|r| r.id == id).map(|r| r.id).expect("rule is registered")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `None` for document-level violations.
    pub layer_index: Option<usize>,
    pub field: String,
    pub rule: String,
    pub message: String,
}

impl Violation {
    fn new(layer: usize, field: &str, rule_id: &str, message: String) -> Self {
        Violation { layer_index: Some(layer), field: field.into(), rule: rule(rule_id).into(), message }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.layer_index {
            Some(i) => write!(f, "layer {i} `{}` [{}]: {}", self.field, self.rule, self.message),
            None => write!(f, "`{}` [{}]: {}", self.field, self.rule, self.message),
        }
    }
}

/// Full validation against a canvas and an asset count. An empty result means
/// the protocol is renderable.
pub fn validate(protocol: &Protocol, size: CanvasSize, asset_count: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, layer) in protocol.layers.iter().enumerate() {
        out.extend(layer_field_violations(i, layer));
        if let Layer::Asset(a) = layer {
            if a.asset_ref >= asset_count {
                out.push(Violation::new(
                    i,
                    "asset_ref",
                    "asset_ref_range",
                    format!("asset_ref {} out of range for {asset_count} asset(s)", a.asset_ref),
                ));
            }
        }
        if let Some(b) = layer_box(layer) {
            if !intersects(b, size) {
                out.push(Violation::new(
                    i,
                    "position",
                    "off_canvas",
                    format!("box ({}, {}, {}x{}) lies outside the {size} canvas", b.x, b.y, b.w, b.h),
                ));
            }
        }
    }
    sort(&mut out);
    out
}

/// Canvas-independent checks only: field ranges and finiteness.
pub fn validate_fields(protocol: &Protocol) -> Vec<Violation> {
    let mut out: Vec<_> =
        protocol.layers.iter().enumerate().flat_map(|(i, l)| layer_field_violations(i, l)).collect();
    sort(&mut out);
    out
}

fn sort(v: &mut [Violation]) {
    v.sort_by(|a, b| (a.layer_index, &a.field, &a.rule).cmp(&(b.layer_index, &b.field, &b.rule)));
}

pub(crate) fn layer_field_violations(i: usize, layer: &Layer) -> Vec<Violation> {
    match layer {
        Layer::Text(t) => text_violations(i, t),
        Layer::Asset(a) => asset_violations(i, a),
    }
}

fn finite(out: &mut Vec<Violation>, i: usize, field: &str, values: &[f64]) -> bool {
    if values.iter().all(|v| v.is_finite()) {
        return true;
    }
    out.push(Violation::new(i, field, "non_finite", format!("{field} must be finite")));
    false
}

fn text_violations(i: usize, t: &TextLayer) -> Vec<Violation> {
    let mut out = Vec::new();
    if t.content.is_empty() {
        out.push(Violation::new(i, "content", "content_empty", "text content is empty".into()));
    }
    if t.font_family.trim().is_empty() {
        out.push(Violation::new(i, "font_family", "font_family_empty", "font family is empty".into()));
    }
    if finite(&mut out, i, "font_size", &[t.font_size]) && t.font_size <= 0.0 {
        out.push(Violation::new(i, "font_size", "font_size_positive", format!("font_size {} must be > 0", t.font_size)));
    }
    finite(&mut out, i, "position", &[t.position.x, t.position.y]);
    if finite(&mut out, i, "stroke", &[t.stroke.width]) && t.stroke.width < 0.0 {
        out.push(Violation::new(i, "stroke", "stroke_width_negative", format!("stroke width {} must be >= 0", t.stroke.width)));
    }
    finite(&mut out, i, "rotation", &[t.rotation]);
    if finite(&mut out, i, "bend", &[t.bend]) && t.bend.abs() > 360.0 {
        out.push(Violation::new(i, "bend", "bend_range", format!("bend {} outside [-360, 360]", t.bend)));
    }
    if finite(&mut out, i, "line_spacing", &[t.line_spacing]) && t.line_spacing <= 0.0 {
        out.push(Violation::new(
            i,
            "line_spacing",
            "line_spacing_positive",
            format!("line_spacing {} must be > 0", t.line_spacing),
        ));
    }
    finite(&mut out, i, "char_spacing", &[t.char_spacing]);
    out
}

fn asset_violations(i: usize, a: &AssetLayer) -> Vec<Violation> {
    let mut out = Vec::new();
    let p = a.position;
    if finite(&mut out, i, "position", &[p.x, p.y, p.w, p.h]) && (p.w < 1.0 || p.h < 1.0) {
        out.push(Violation::new(i, "position", "rect_size", format!("rect {}x{} must be at least 1x1", p.w, p.h)));
    }
    let c = a.crop;
    if finite(&mut out, i, "crop", &[c.u0, c.v0, c.u1, c.v1])
        && !(0.0 <= c.u0 && c.u0 < c.u1 && c.u1 <= 1.0 && 0.0 <= c.v0 && c.v0 < c.v1 && c.v1 <= 1.0)
    {
        out.push(Violation::new(
            i,
            "crop",
            "crop_range",
            format!("crop ({}, {}, {}, {}) is not an ordered sub-rect of [0,1]", c.u0, c.v0, c.u1, c.v1),
        ));
    }
    finite(&mut out, i, "rotation", &[a.rotation]);
    if let MaskType::RoundedRect { radius } = a.mask_type {
        if finite(&mut out, i, "mask_type", &[radius]) && radius < 0.0 {
            out.push(Violation::new(i, "mask_type", "mask_radius", format!("radius {radius} must be >= 0")));
        }
    }
    out
}

/// Font-independent estimate of a text layer's unrotated layout box: 0.6 em
/// per character, 1.2 em per line. Used for validation and layout heuristics,
/// never for rendering.
pub fn estimated_text_box(t: &TextLayer) -> Rect {
    let lines: Vec<&str> = t.content.split('\n').collect();
    let widest = lines
        .iter()
        .map(|l| {
            let n = l.chars().count() as f64;
            (n * 0.6 * t.font_size + t.char_spacing * (n - 1.0).max(0.0)).max(0.0)
        })
        .fold(0.0, f64::max);
    let height = t.font_size * 1.2 * (1.0 + (lines.len() as f64 - 1.0) * t.line_spacing);
    Rect { x: t.position.x, y: t.position.y, w: widest, h: height }
}

fn layer_box(layer: &Layer) -> Option<Rect> {
    let b = match layer {
        Layer::Text(t) => estimated_text_box(t),
        Layer::Asset(a) => a.position,
    };
    [b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite()).then_some(b)
}

fn intersects(b: Rect, size: CanvasSize) -> bool {
    let (w, h) = (f64::from(size.width), f64::from(size.height));
    // degenerate boxes count when their anchor lies on the canvas
    let hit = |start: f64, len: f64, extent: f64| {
        if len > 0.0 {
            start < extent && start + len > 0.0
        } else {
            (0.0..extent).contains(&start)
        }
    };
    hit(b.x, b.w, w) && hit(b.y, b.h, h)
}
