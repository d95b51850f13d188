//! The layer protocol: a background caption plus an ordered list of text and
//! asset layers. List order is z-order, bottom to top.
//!
//! Coordinates are y-down with the origin at the canvas top-left, in pixels at
//! canvas resolution. Rotations are clockwise degrees.

mod merge;
mod parse;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

pub use merge::{merge_partial, FieldMask, MergeError, PartialProtocol};
pub use parse::{canonicalize, parse_protocol, ParseError};
pub use validate::{
    estimated_text_box, validate, validate_fields, Rule, Violation, RULES,
};

/// Unknown JSON keys, kept so that documents round-trip losslessly.
pub type Extra = BTreeMap<String, Value>;

/// Upper bound on `width * height` accepted anywhere in the crate.
pub const MAX_CANVAS_PIXELS: u64 = 64_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanvasSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SizeError {
    #[error("canvas dimensions must be at least 1x1, got {0}x{1}")]
    Empty(u32, u32),
    #[error("canvas {0}x{1} exceeds the {MAX_CANVAS_PIXELS} pixel limit")]
    TooLarge(u32, u32),
    #[error("malformed size {0:?}, expected WxH")]
    Malformed(String),
}

impl CanvasSize {
    pub fn new(width: u32, height: u32) -> Result<Self, SizeError> {
        if width == 0 || height == 0 {
            return Err(SizeError::Empty(width, height));
        }
        if u64::from(width) * u64::from(height) > MAX_CANVAS_PIXELS {
            return Err(SizeError::TooLarge(width, height));
        }
        Ok(Self { width, height })
    }

    pub fn pixel_count(self) -> usize {
        self.width as usize * self.height as usize
    }
}

impl fmt::Display for CanvasSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for CanvasSize {
    type Err = SizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || SizeError::Malformed(s.to_string());
        let (w, h) = s.trim().split_once(['x', 'X']).ok_or_else(malformed)?;
        let w = w.trim().parse().map_err(|_| malformed())?;
        let h = h.trim().parse().map_err(|_| malformed())?;
        Self::new(w, h)
    }
}

impl Serialize for CanvasSize {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CanvasSize {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// 8-bit straight-alpha color, serialized as `#rrggbbaa`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rgba(pub [u8; 4]);

impl Rgba {
    pub const TRANSPARENT: Rgba = Rgba([0, 0, 0, 0]);
    pub const BLACK: Rgba = Rgba([0, 0, 0, 255]);
    pub const WHITE: Rgba = Rgba([255, 255, 255, 255]);

    pub fn new(r: u8, g: u8, b: u8, a: u8) -> Self {
        Rgba([r, g, b, a])
    }
}

impl fmt::Display for Rgba {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [r, g, b, a] = self.0;
        write!(f, "#{r:02x}{g:02x}{b:02x}{a:02x}")
    }
}

impl FromStr for Rgba {
    type Err = String;

    /// Accepts `#rrggbb` (opaque) and `#rrggbbaa`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s
            .strip_prefix('#')
            .ok_or_else(|| format!("color {s:?} must start with '#'"))?;
        if !(hex.len() == 6 || hex.len() == 8) || !hex.is_ascii() {
            return Err(format!("color {s:?} must be #rrggbb or #rrggbbaa"));
        }
        let mut out = [0, 0, 0, 255];
        for (i, slot) in out.iter_mut().enumerate().take(hex.len() / 2) {
            *slot = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|_| format!("color {s:?} has a non-hex digit"))?;
        }
        Ok(Rgba(out))
    }
}

impl Serialize for Rgba {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rgba {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Normalized crop over the source asset, `0 <= u0 < u1 <= 1` and likewise for v.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropRect {
    pub u0: f64,
    pub v0: f64,
    pub u1: f64,
    pub v1: f64,
}

impl Default for CropRect {
    fn default() -> Self {
        CropRect { u0: 0.0, v0: 0.0, u1: 1.0, v1: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stroke {
    #[serde(default)]
    pub width: f64,
    #[serde(default = "default_stroke_color")]
    pub color: Rgba,
}

fn default_stroke_color() -> Rgba {
    Rgba::BLACK
}

impl Default for Stroke {
    fn default() -> Self {
        Stroke { width: 0.0, color: Rgba::BLACK }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    #[default]
    Left,
    Center,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskType {
    #[default]
    None,
    Circle,
    RoundedRect { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLayer {
    pub content: String,
    pub font_family: String,
    /// Pixels (em size at canvas resolution).
    pub font_size: f64,
    /// Top-left of the unrotated layout box.
    pub position: Point,
    pub color: Rgba,
    #[serde(default)]
    pub stroke: Stroke,
    #[serde(default)]
    pub rotation: f64,
    /// Total arc sweep of each baseline in degrees; positive arches upward.
    #[serde(default)]
    pub bend: f64,
    #[serde(default)]
    pub bold: bool,
    #[serde(default)]
    pub italic: bool,
    #[serde(default)]
    pub underline: bool,
    #[serde(default)]
    pub alignment: Alignment,
    #[serde(default = "default_line_spacing")]
    pub line_spacing: f64,
    #[serde(default)]
    pub char_spacing: f64,
    #[serde(flatten)]
    pub extra: Extra,
}

fn default_line_spacing() -> f64 {
    1.0
}

impl TextLayer {
    /// A layer with every optional field at its default.
    pub fn new(content: impl Into<String>, font_family: impl Into<String>, font_size: f64) -> Self {
        TextLayer {
            content: content.into(),
            font_family: font_family.into(),
            font_size,
            position: Point::default(),
            color: Rgba::BLACK,
            stroke: Stroke::default(),
            rotation: 0.0,
            bend: 0.0,
            bold: false,
            italic: false,
            underline: false,
            alignment: Alignment::Left,
            line_spacing: 1.0,
            char_spacing: 0.0,
            extra: Extra::new(),
        }
    }

    pub fn at(mut self, x: f64, y: f64) -> Self {
        self.position = Point { x, y };
        self
    }

    pub fn with_color(mut self, color: Rgba) -> Self {
        self.color = color;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetLayer {
    pub asset_ref: usize,
    pub position: Rect,
    #[serde(default)]
    pub crop: CropRect,
    #[serde(default)]
    pub rotation: f64,
    #[serde(default)]
    pub mask_type: MaskType,
    #[serde(flatten)]
    pub extra: Extra,
}

impl AssetLayer {
    pub fn new(asset_ref: usize, position: Rect) -> Self {
        AssetLayer {
            asset_ref,
            position,
            crop: CropRect::default(),
            rotation: 0.0,
            mask_type: MaskType::None,
            extra: Extra::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Text(TextLayer),
    Asset(AssetLayer),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Text(_) => LayerKind::Text,
            Layer::Asset(_) => LayerKind::Asset,
        }
    }

    pub fn rotation(&self) -> f64 {
        match self {
            Layer::Text(t) => t.rotation,
            Layer::Asset(a) => a.rotation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Text,
    Asset,
}

impl LayerKind {
    /// Every field defined on this kind, in schema order.
    pub fn fields(self) -> &'static [FieldName] {
        match self {
            LayerKind::Text => TEXT_FIELDS,
            LayerKind::Asset => ASSET_FIELDS,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Text => "text",
            LayerKind::Asset => "asset",
        })
    }
}

/// The editable document: caption `c` plus layers, bottom to top.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Protocol {
    pub caption: String,
    pub layers: Vec<Layer>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Protocol {
    pub fn new(caption: impl Into<String>, layers: Vec<Layer>) -> Self {
        Protocol { caption: caption.into(), layers, extra: Extra::new() }
    }
}

impl<'de> Deserialize<'de> for Protocol {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        parse::protocol_from_value(value).map_err(serde::de::Error::custom)
    }
}

/// Names of protocol fields, used by locks, violations and augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldName {
    Content,
    FontFamily,
    FontSize,
    Position,
    Color,
    Stroke,
    Rotation,
    Bend,
    Bold,
    Italic,
    Underline,
    Alignment,
    LineSpacing,
    CharSpacing,
    AssetRef,
    Crop,
    MaskType,
}

pub const TEXT_FIELDS: &[FieldName] = &[
    FieldName::Content,
    FieldName::FontFamily,
    FieldName::FontSize,
    FieldName::Position,
    FieldName::Color,
    FieldName::Stroke,
    FieldName::Rotation,
    FieldName::Bend,
    FieldName::Bold,
    FieldName::Italic,
    FieldName::Underline,
    FieldName::Alignment,
    FieldName::LineSpacing,
    FieldName::CharSpacing,
];

pub const ASSET_FIELDS: &[FieldName] = &[
    FieldName::AssetRef,
    FieldName::Position,
    FieldName::Crop,
    FieldName::Rotation,
    FieldName::MaskType,
];

impl FieldName {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldName::Content => "content",
            FieldName::FontFamily => "font_family",
            FieldName::FontSize => "font_size",
            FieldName::Position => "position",
            FieldName::Color => "color",
            FieldName::Stroke => "stroke",
            FieldName::Rotation => "rotation",
            FieldName::Bend => "bend",
            FieldName::Bold => "bold",
            FieldName::Italic => "italic",
            FieldName::Underline => "underline",
            FieldName::Alignment => "alignment",
            FieldName::LineSpacing => "line_spacing",
            FieldName::CharSpacing => "char_spacing",
            FieldName::AssetRef => "asset_ref",
            FieldName::Crop => "crop",
            FieldName::MaskType => "mask_type",
        }
    }

    pub fn applies_to(self, kind: LayerKind) -> bool {
        kind.fields().contains(&self)
    }
}

impl fmt::Display for FieldName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FieldName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TEXT_FIELDS
            .iter()
            .chain(ASSET_FIELDS)
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown field {s:?}"))
    }
}

/// Copies one field from `src` onto `dst`. Both layers must be of a kind the
/// field applies to; other combinations are ignored.
pub fn copy_field(dst: &mut Layer, src: &Layer, field: FieldName) {
    match (dst, src) {
        (Layer::Text(d), Layer::Text(s)) => match field {
            FieldName::Content => d.content = s.content.clone(),
            FieldName::FontFamily => d.font_family = s.font_family.clone(),
            FieldName::FontSize => d.font_size = s.font_size,
            FieldName::Position => d.position = s.position,
            FieldName::Color => d.color = s.color,
            FieldName::Stroke => d.stroke = s.stroke,
            FieldName::Rotation => d.rotation = s.rotation,
            FieldName::Bend => d.bend = s.bend,
            FieldName::Bold => d.bold = s.bold,
            FieldName::Italic => d.italic = s.italic,
            FieldName::Underline => d.underline = s.underline,
            FieldName::Alignment => d.alignment = s.alignment,
            FieldName::LineSpacing => d.line_spacing = s.line_spacing,
            FieldName::CharSpacing => d.char_spacing = s.char_spacing,
            _ => {}
        },
        (Layer::Asset(d), Layer::Asset(s)) => match field {
            FieldName::AssetRef => d.asset_ref = s.asset_ref,
            FieldName::Position => d.position = s.position,
            FieldName::Crop => d.crop = s.crop,
            FieldName::Rotation => d.rotation = s.rotation,
            FieldName::MaskType => d.mask_type = s.mask_type,
            _ => {}
        },
        _ => {}
    }
}

/// Resets one field to its parse-time default. Required fields without a
/// default get a neutral placeholder.
pub fn reset_field(layer: &mut Layer, field: FieldName) {
    let blank = match layer {
        Layer::Text(_) => Layer::Text(TextLayer::new(String::new(), String::new(), 1.0)),
        Layer::Asset(a) => {
            Layer::Asset(AssetLayer::new(a.asset_ref, Rect { x: 0.0, y: 0.0, w: 1.0, h: 1.0 }))
        }
    };
    copy_field(layer, &blank, field);
}
