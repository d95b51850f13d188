//! Rasterizes protocol layers and composites them in z-order.
//!
//! Every layer is rendered to its own tight raster placed at an integer
//! canvas offset, then blended onto a transparent canvas with
//! [`crate::blend::source_over`]. All arithmetic is platform-independent: trig
//! goes through `libm`, coverage is counted on a fixed 4x4 sample grid and
//! blending is integer.

use ttf_parser::{GlyphId, OutlineBuilder};

use crate::blend::{blend_onto, scale_alpha};
use crate::font::FontCatalog;
use crate::image::RgbaImage;
use crate::protocol::{AssetLayer, CanvasSize, Layer, MaskType, TextLayer, MAX_CANVAS_PIXELS};
use crate::scan::{Contour, CoverageMask, Flattener, SUBSAMPLES};
use crate::text::{glyph_to_local, layout_text, rotate_translate, shear_for, TextLayout};

/// Synthetic bold grows outlines by this fraction of the em on each side.
pub const SYNTHETIC_BOLD_EM: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("asset_ref {asset_ref} out of range ({count} assets)")]
    MissingAsset { asset_ref: usize, count: usize },
    #[error("crop rounds to an empty {width}x{height} pixel region")]
    DegenerateCrop { width: i64, height: i64 },
    #[error("layer raster {width}x{height} exceeds the pixel limit")]
    TooLarge { width: u64, height: u64 },
    #[error("non-finite geometry")]
    NonFinite,
    #[error("layer {index}: {source}")]
    Layer { index: usize, source: Box<RenderError> },
}

impl RenderError {
    /// Index of the failing layer, for errors raised by [`composite`].
    pub fn layer_index(&self) -> Option<usize> {
        match self {
            RenderError::Layer { index, .. } => Some(*index),
            _ => None,
        }
    }
}

/// A rendered layer: its raster and the canvas position of its top-left pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRaster {
    pub image: RgbaImage,
    pub x: i64,
    pub y: i64,
}

#[inline]
fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn check_area(w: i64, h: i64) -> Result<(), RenderError> {
    if (w as u64).saturating_mul(h as u64) > MAX_CANVAS_PIXELS {
        return Err(RenderError::TooLarge { width: w as u64, height: h as u64 });
    }
    Ok(())
}

pub fn rasterize_layer(layer: &Layer, assets: &[RgbaImage], fonts: &FontCatalog) -> Result<LayerRaster, RenderError> {
    match layer {
        Layer::Text(t) => rasterize_text(t, fonts),
        Layer::Asset(a) => rasterize_asset(a, assets),
    }
}

/// Renders `layers` bottom to top over a transparent `size` canvas.
pub fn composite(
    size: CanvasSize,
    layers: &[Layer],
    assets: &[RgbaImage],
    fonts: &FontCatalog,
) -> Result<RgbaImage, RenderError> {
    let mut canvas = RgbaImage::new(size.width, size.height);
    for (index, layer) in layers.iter().enumerate() {
        let r = rasterize_layer(layer, assets, fonts)
            .map_err(|e| RenderError::Layer { index, source: Box::new(e) })?;
        blend_onto(&mut canvas, &r.image, r.x, r.y);
    }
    Ok(canvas)
}

// ---------------------------------------------------------------- text

struct ContourSink<'a> {
    out: &'a mut Vec<Contour>,
    current: Contour,
    last: (f64, f64),
    map: &'a dyn Fn(f64, f64) -> (f64, f64),
    flat: Flattener,
}

impl ContourSink<'_> {
    fn close_current(&mut self) {
        if self.current.len() >= 2 {
            self.out.push(std::mem::take(&mut self.current));
        }
        self.current.clear();
    }
}

impl OutlineBuilder for ContourSink<'_> {
    fn move_to(&mut self, x: f32, y: f32) {
        self.close_current();
        let p = (self.map)(f64::from(x), f64::from(y));
        self.current.push(p);
        self.last = p;
    }

    fn line_to(&mut self, x: f32, y: f32) {
        let p = (self.map)(f64::from(x), f64::from(y));
        self.current.push(p);
        self.last = p;
    }

    fn quad_to(&mut self, x1: f32, y1: f32, x: f32, y: f32) {
        let c = (self.map)(f64::from(x1), f64::from(y1));
        let p = (self.map)(f64::from(x), f64::from(y));
        self.flat.quad(&mut self.current, self.last, c, p);
        self.last = p;
    }

    fn curve_to(&mut self, x1: f32, y1: f32, x2: f32, y2: f32, x: f32, y: f32) {
        let c1 = (self.map)(f64::from(x1), f64::from(y1));
        let c2 = (self.map)(f64::from(x2), f64::from(y2));
        let p = (self.map)(f64::from(x), f64::from(y));
        self.flat.cubic(&mut self.current, self.last, c1, c2, p);
        self.last = p;
    }

    fn close(&mut self) {
        self.close_current();
    }
}

/// Outline polygons of every glyph (one entry per glyph) and underline
/// rectangles, in canvas coordinates.
fn text_shapes(t: &TextLayer, layout: &TextLayout) -> Vec<Vec<Contour>> {
    let parsed: Vec<_> = layout.faces.iter().map(|f| f.data.face()).collect();
    let mut shapes = Vec::new();
    let (ox, oy) = (t.position.x, t.position.y);
    for g in &layout.glyphs {
        let face = &parsed[g.face];
        let scale = t.font_size / f64::from(face.units_per_em());
        let shear = shear_for(&layout.faces[g.face]);
        let map = |x: f64, y: f64| {
            let (lx, ly) = glyph_to_local(g, scale, shear, x, y);
            (lx + ox, ly + oy)
        };
        let mut contours = Vec::new();
        {
            let mut sink = ContourSink { out: &mut contours, current: Vec::new(), last: (0.0, 0.0), map: &map, flat: Flattener::new(scale) };
            face.outline_glyph(GlyphId(g.glyph_id), &mut sink);
            sink.close_current();
        }
        if !contours.is_empty() {
            shapes.push(contours);
        }
    }
    if t.underline {
        let main = &parsed[0];
        let scale = layout.scale;
        let top = -f64::from(main.underline_metrics().map_or(-(main.units_per_em() as i16) / 10, |m| m.position)) * scale;
        let thickness = (t.font_size / 15.0).max(1.0);
        for g in &layout.glyphs {
            let len = g.advance + if g.joined { t.char_spacing } else { 0.0 };
            if len <= 0.0 {
                continue;
            }
            let rect = [(0.0, top), (len, top), (len, top + thickness), (0.0, top + thickness)]
                .iter()
                .map(|&(x, y)| {
                    let (lx, ly) = rotate_translate(g, x, y);
                    (lx + ox, ly + oy)
                })
                .collect();
            shapes.push(vec![rect]);
        }
    }
    shapes
}

fn rasterize_text(t: &TextLayer, fonts: &FontCatalog) -> Result<LayerRaster, RenderError> {
    let layout = layout_text(t, fonts);
    let shapes = text_shapes(t, &layout);
    let embolden = if layout.faces[0].synthetic_bold { SYNTHETIC_BOLD_EM * t.font_size } else { 0.0 };
    let stroke_r = t.stroke.width.max(0.0) / 2.0;
    let pad = embolden.max(0.0) + stroke_r;

    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in shapes.iter().flatten().flatten() {
        lo = (lo.0.min(p.0), lo.1.min(p.1));
        hi = (hi.0.max(p.0), hi.1.max(p.1));
    }
    let pivot = (t.position.x + layout.width / 2.0, t.position.y + layout.height / 2.0);
    if !(lo.0 <= hi.0) {
        return Ok(LayerRaster { image: RgbaImage::new(0, 0), x: round_half_up(pivot.0), y: round_half_up(pivot.1) });
    }
    if ![lo.0, lo.1, hi.0, hi.1, pad].iter().all(|v| v.is_finite()) {
        return Err(RenderError::NonFinite);
    }
    let x0 = (lo.0 - pad).floor() as i64;
    let y0 = (lo.1 - pad).floor() as i64;
    let x1 = (hi.0 + pad).ceil() as i64;
    let y1 = (hi.1 + pad).ceil() as i64;
    let (w, h) = (x1 - x0, y1 - y0);
    check_area(w, h)?;

    let mut fill = CoverageMask::new(x0, y0, w as usize, h as usize);
    for shape in &shapes {
        fill.fill(shape);
        if embolden > 0.0 {
            fill.stroke(shape, embolden);
        }
    }
    let stroke = (stroke_r > 0.0).then(|| {
        let mut m = CoverageMask::new(x0, y0, w as usize, h as usize);
        for shape in &shapes {
            m.stroke(shape, stroke_r);
        }
        m
    });

    let mut img = RgbaImage::new(w as u32, h as u32);
    let color = t.color.0;
    let scolor = t.stroke.color.0;
    for py in 0..h as usize {
        for px in 0..w as usize {
            let mut out = [0u8; 4];
            let cf = fill.coverage(px, py);
            if cf > 0 {
                out = [color[0], color[1], color[2], scale_alpha(color[3], cf)];
                if out[3] == 0 {
                    out = [0; 4];
                }
            }
            if let Some(s) = &stroke {
                let cs = s.coverage(px, py);
                if cs > 0 {
                    let src = [scolor[0], scolor[1], scolor[2], scale_alpha(scolor[3], cs)];
                    out = crate::blend::source_over(out, src);
                }
            }
            img.set_pixel(px as u32, py as u32, out);
        }
    }
    Ok(rotate_raster(LayerRaster { image: img, x: x0, y: y0 }, t.rotation, pivot))
}

// ---------------------------------------------------------------- assets

fn rasterize_asset(a: &AssetLayer, assets: &[RgbaImage]) -> Result<LayerRaster, RenderError> {
    let src = assets
        .get(a.asset_ref)
        .ok_or(RenderError::MissingAsset { asset_ref: a.asset_ref, count: assets.len() })?;
    let r = a.position;
    if ![r.x, r.y, r.w, r.h, a.rotation].iter().all(|v| v.is_finite()) {
        return Err(RenderError::NonFinite);
    }
    let (sw, sh) = (f64::from(src.width()), f64::from(src.height()));
    let cx0 = round_half_up(a.crop.u0 * sw);
    let cx1 = round_half_up(a.crop.u1 * sw);
    let cy0 = round_half_up(a.crop.v0 * sh);
    let cy1 = round_half_up(a.crop.v1 * sh);
    if cx1 <= cx0 || cy1 <= cy0 {
        return Err(RenderError::DegenerateCrop { width: cx1 - cx0, height: cy1 - cy0 });
    }
    let dx0 = round_half_up(r.x);
    let dy0 = round_half_up(r.y);
    let dw = (round_half_up(r.x + r.w) - dx0).max(1);
    let dh = (round_half_up(r.y + r.h) - dy0).max(1);
    check_area(dw, dh)?;

    let mut img = resample_crop(src, (cx0, cy0, cx1, cy1), dw as u32, dh as u32);
    apply_mask(&mut img, a.mask_type);
    let pivot = (dx0 as f64 + dw as f64 / 2.0, dy0 as f64 + dh as f64 / 2.0);
    Ok(rotate_raster(LayerRaster { image: img, x: dx0, y: dy0 }, a.rotation, pivot))
}

/// Bilinear sample in premultiplied space at continuous pixel coordinates
/// `(x, y)` (pixel centres at integers). `inside` decides whether a source
/// texel exists; missing texels count as transparent.
fn bilinear(src: &RgbaImage, x: f64, y: f64, clamp: Option<(i64, i64, i64, i64)>) -> [u8; 4] {
    let fx = x.floor();
    let fy = y.floor();
    let (tx, ty) = (x - fx, y - fy);
    let (ix, iy) = (fx as i64, fy as i64);
    let mut acc = [0.0f64; 4];
    for (oy, wy) in [(0, 1.0 - ty), (1, ty)] {
        for (ox, wx) in [(0, 1.0 - tx), (1, tx)] {
            let wgt = wx * wy;
            if wgt == 0.0 {
                continue;
            }
            let (mut sx, mut sy) = (ix + ox, iy + oy);
            if let Some((x0, y0, x1, y1)) = clamp {
                sx = sx.clamp(x0, x1 - 1);
                sy = sy.clamp(y0, y1 - 1);
            } else if sx < 0 || sy < 0 || sx >= i64::from(src.width()) || sy >= i64::from(src.height()) {
                continue;
            }
            let p = src.pixel(sx as u32, sy as u32);
            let a = f64::from(p[3]) * wgt;
            acc[0] += f64::from(p[0]) * a;
            acc[1] += f64::from(p[1]) * a;
            acc[2] += f64::from(p[2]) * a;
            acc[3] += a;
        }
    }
    let alpha = to_u8(acc[3]);
    if alpha == 0 {
        return [0; 4];
    }
    [to_u8(acc[0] / acc[3]), to_u8(acc[1] / acc[3]), to_u8(acc[2] / acc[3]), alpha]
}

fn resample_crop(src: &RgbaImage, crop: (i64, i64, i64, i64), dw: u32, dh: u32) -> RgbaImage {
    let (cx0, cy0, cx1, cy1) = crop;
    let (cw, ch) = ((cx1 - cx0) as f64, (cy1 - cy0) as f64);
    let (sx_step, sy_step) = (cw / f64::from(dw), ch / f64::from(dh));
    let mut out = RgbaImage::new(dw, dh);
    for y in 0..dh {
        let sy = cy0 as f64 + (f64::from(y) + 0.5) * sy_step - 0.5;
        for x in 0..dw {
            let sx = cx0 as f64 + (f64::from(x) + 0.5) * sx_step - 0.5;
            out.set_pixel(x, y, bilinear(src, sx, sy, Some(crop)));
        }
    }
    out
}

fn apply_mask(img: &mut RgbaImage, mask: MaskType) {
    let (w, h) = (f64::from(img.width()), f64::from(img.height()));
    let inside: Box<dyn Fn(f64, f64) -> bool> = match mask {
        MaskType::None => return,
        MaskType::Circle => {
            let (rx, ry) = (w / 2.0, h / 2.0);
            Box::new(move |x, y| {
                let (u, v) = ((x - rx) / rx, (y - ry) / ry);
                u * u + v * v <= 1.0
            })
        }
        MaskType::RoundedRect { radius } => {
            let r = radius.clamp(0.0, w.min(h) / 2.0);
            Box::new(move |x, y| {
                let cx = x.clamp(r, w - r);
                let cy = y.clamp(r, h - r);
                let (dx, dy) = (x - cx, y - cy);
                dx * dx + dy * dy <= r * r
            })
        }
    };
    let n = SUBSAMPLES as f64;
    for py in 0..img.height() {
        for px in 0..img.width() {
            let mut cov = 0;
            for j in 0..SUBSAMPLES {
                for i in 0..SUBSAMPLES {
                    let x = f64::from(px) + (i as f64 + 0.5) / n;
                    let y = f64::from(py) + (j as f64 + 0.5) / n;
                    cov += u32::from(inside(x, y));
                }
            }
            if cov < 16 {
                let mut p = img.pixel(px, py);
                p[3] = scale_alpha(p[3], cov);
                if p[3] == 0 {
                    p = [0; 4];
                }
                img.set_pixel(px, py, p);
            }
        }
    }
}

// ---------------------------------------------------------------- rotation

/// Rotates a placed raster clockwise by `degrees` about the canvas point
/// `pivot`. Quarter turns permute pixels exactly; other angles resample
/// bilinearly over the bounding box of the rotated corners.
pub fn rotate_raster(r: LayerRaster, degrees: f64, pivot: (f64, f64)) -> LayerRaster {
    let turn = degrees.rem_euclid(360.0);
    if turn == 0.0 || r.image.width() == 0 || r.image.height() == 0 {
        return r;
    }
    let (w, h) = (r.image.width(), r.image.height());
    let quarter = [90.0, 180.0, 270.0].iter().position(|q| *q == turn);
    if let Some(q) = quarter {
        let (nw, nh) = if q == 1 { (w, h) } else { (h, w) };
        let mut out = RgbaImage::new(nw, nh);
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = match q {
                    0 => (h - 1 - y, x),
                    1 => (w - 1 - x, h - 1 - y),
                    _ => (y, w - 1 - x),
                };
                out.set_pixel(nx, ny, r.image.pixel(x, y));
            }
        }
        let centre = (r.x as f64 + f64::from(w) / 2.0, r.y as f64 + f64::from(h) / 2.0);
        let (cx, cy) = rotate_point(centre, pivot, turn);
        return LayerRaster {
            image: out,
            x: round_half_up(cx - f64::from(nw) / 2.0),
            y: round_half_up(cy - f64::from(nh) / 2.0),
        };
    }

    let corners = [
        (r.x as f64, r.y as f64),
        (r.x as f64 + f64::from(w), r.y as f64),
        (r.x as f64, r.y as f64 + f64::from(h)),
        (r.x as f64 + f64::from(w), r.y as f64 + f64::from(h)),
    ];
    let rotated: Vec<_> = corners.iter().map(|&c| rotate_point(c, pivot, turn)).collect();
    let x0 = rotated.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor() as i64;
    let y0 = rotated.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor() as i64;
    let x1 = rotated.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    let y1 = rotated.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    let (nw, nh) = ((x1 - x0) as u32, (y1 - y0) as u32);
    let mut out = RgbaImage::new(nw, nh);
    for y in 0..nh {
        for x in 0..nw {
            let c = ((x0 + i64::from(x)) as f64 + 0.5, (y0 + i64::from(y)) as f64 + 0.5);
            let (sx, sy) = rotate_point(c, pivot, -turn);
            let px = bilinear(&r.image, sx - r.x as f64 - 0.5, sy - r.y as f64 - 0.5, None);
            out.set_pixel(x, y, px);
        }
    }
    LayerRaster { image: out, x: x0, y: y0 }
}

/// Clockwise rotation in y-down coordinates.
fn rotate_point(p: (f64, f64), pivot: (f64, f64), degrees: f64) -> (f64, f64) {
    let (s, c) = libm::sincos(degrees.to_radians());
    let (dx, dy) = (p.0 - pivot.0, p.1 - pivot.1);
    (pivot.0 + dx * c - dy * s, pivot.1 + dx * s + dy * c)
}
