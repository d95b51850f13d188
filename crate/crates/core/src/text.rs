//! Text layout: line breaking on `\n`, alignment, spacing and arc bending.
//!
//! Coordinates are local to the unrotated layout box (origin at its top-left,
//! y down). The box is `width` wide (widest line) and
//! `ascent + (n - 1) * line_spacing * line_height + descent` tall.

use ttf_parser::GlyphId;

use crate::font::{FontCatalog, ResolvedFace};
use crate::protocol::{Alignment, Rect, TextLayer};

/// Horizontal shear used for synthetic italics.
pub const SYNTHETIC_ITALIC_DEGREES: f64 = 12.0;

/// One positioned glyph. `(x, y)` is the glyph origin on its baseline;
/// `rotation` is clockwise degrees about that origin (non-zero only for bent
/// text).
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphPlacement {
    pub glyph_id: u16,
    /// Index into [`TextLayout::faces`].
    pub face: usize,
    pub x: f64,
    pub y: f64,
    pub rotation: f64,
    pub advance: f64,
    /// Line index, counted from 0.
    pub line: usize,
    /// Whether another glyph follows on the same line.
    pub joined: bool,
}

#[derive(Debug, Clone)]
pub struct TextLayout {
    pub glyphs: Vec<GlyphPlacement>,
    /// Requested face first, then the catalog fallback used for missing glyphs.
    pub faces: Vec<ResolvedFace>,
    pub width: f64,
    pub height: f64,
    /// Ascent of the requested face in pixels.
    pub ascent: f64,
    /// Pixels per font unit of the requested face.
    pub scale: f64,
    /// Union of the transformed glyph bounding boxes; `None` for blank text.
    pub ink_bounds: Option<Rect>,
}

impl TextLayout {
    /// Layout box in local coordinates.
    pub fn box_rect(&self) -> Rect {
        Rect { x: 0.0, y: 0.0, w: self.width, h: self.height }
    }
}

/// Maps a point in glyph space (font units, y up) to local layout space.
pub fn glyph_to_local(p: &GlyphPlacement, scale: f64, shear: f64, gx: f64, gy: f64) -> (f64, f64) {
    let x = (gx + shear * gy) * scale;
    let y = -gy * scale;
    rotate_translate(p, x, y)
}

/// Rotates an already-scaled glyph-local offset by the glyph rotation and
/// moves it to the glyph origin.
pub fn rotate_translate(p: &GlyphPlacement, x: f64, y: f64) -> (f64, f64) {
    if p.rotation == 0.0 {
        return (p.x + x, p.y + y);
    }
    let (s, c) = libm::sincos(p.rotation.to_radians());
    (p.x + x * c - y * s, p.y + x * s + y * c)
}

pub fn shear_for(face: &ResolvedFace) -> f64 {
    if face.synthetic_italic {
        libm::tan(SYNTHETIC_ITALIC_DEGREES.to_radians())
    } else {
        0.0
    }
}

struct Run {
    glyph: u16,
    face: usize,
    advance: f64,
}

pub fn layout_text(layer: &TextLayer, fonts: &FontCatalog) -> TextLayout {
    let primary = fonts.resolve(&layer.font_family, layer.bold, layer.italic);
    let fallback = fonts.resolve(fonts.fallback_family(), layer.bold, layer.italic);
    let faces = vec![primary, fallback];
    let parsed: Vec<_> = faces.iter().map(|f| f.data.face()).collect();
    let scales: Vec<f64> = parsed.iter().map(|f| layer.font_size / f64::from(f.units_per_em())).collect();

    let main = &parsed[0];
    let scale = scales[0];
    let ascent = f64::from(main.ascender()) * scale;
    let descent = -f64::from(main.descender()) * scale;
    let line_height = f64::from(main.ascender() - main.descender() + main.line_gap()) * scale;
    let pitch = layer.line_spacing * line_height;

    let lines: Vec<Vec<Run>> = layer
        .content
        .split('\n')
        .map(|line| {
            line.chars()
                .map(|ch| {
                    let (face, glyph) = match parsed[0].glyph_index(ch) {
                        Some(g) => (0, g),
                        None => match parsed[1].glyph_index(ch) {
                            Some(g) => (1, g),
                            None => (0, GlyphId(0)),
                        },
                    };
                    let adv = parsed[face].glyph_hor_advance(glyph).unwrap_or(0);
                    Run { glyph: glyph.0, face, advance: f64::from(adv) * scales[face] }
                })
                .collect()
        })
        .collect();

    let line_widths: Vec<f64> = lines
        .iter()
        .map(|runs| {
            let k = runs.len();
            if k == 0 {
                0.0
            } else {
                runs.iter().map(|r| r.advance).sum::<f64>() + layer.char_spacing * (k - 1) as f64
            }
        })
        .collect();
    let width = line_widths.iter().copied().fold(0.0, f64::max);
    let height = ascent + (lines.len() - 1) as f64 * pitch + descent;
    let sweep = layer.bend.to_radians();

    let mut glyphs = Vec::new();
    for (li, (runs, &lw)) in lines.iter().zip(&line_widths).enumerate() {
        let x0 = match layer.alignment {
            Alignment::Left => 0.0,
            Alignment::Center => (width - lw) / 2.0,
            Alignment::Right => width - lw,
        };
        let base = ascent + li as f64 * pitch;
        let centre = x0 + lw / 2.0;
        let mut pen = x0;
        for (k, run) in runs.iter().enumerate() {
            let mut g = GlyphPlacement {
                glyph_id: run.glyph,
                face: run.face,
                x: pen,
                y: base,
                rotation: 0.0,
                advance: run.advance,
                line: li,
                joined: k + 1 < runs.len(),
            };
            if sweep != 0.0 && lw > 0.0 {
                bend_glyph(&mut g, centre, base, lw / sweep);
            }
            glyphs.push(g);
            pen += run.advance + layer.char_spacing;
        }
    }

    let ink_bounds = ink_bounds(&glyphs, &faces, &parsed, &scales);
    TextLayout { glyphs, faces, width, height, ascent, scale, ink_bounds }
}

/// Moves a straight-baseline glyph onto a circle of signed radius `radius`
/// whose arc passes through `(centre, base)`. Arc length along the circle
/// equals the straight-line offset, so the sweep of the whole line is
/// `line_width / radius`.
fn bend_glyph(g: &mut GlyphPlacement, centre: f64, base: f64, radius: f64) {
    let half = g.advance / 2.0;
    let u = g.x + half - centre;
    let phi = u / radius;
    let (s, c) = libm::sincos(phi);
    let half_phi = libm::sin(phi / 2.0);
    // R(1 - cos phi) written to stay accurate for large R
    let ax = centre + radius * s;
    let ay = base + 2.0 * radius * half_phi * half_phi;
    g.x = ax - c * half;
    g.y = ay - s * half;
    g.rotation = phi.to_degrees();
}

fn ink_bounds(
    glyphs: &[GlyphPlacement],
    faces: &[ResolvedFace],
    parsed: &[ttf_parser::Face<'_>],
    scales: &[f64],
) -> Option<Rect> {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for g in glyphs {
        let Some(bb) = parsed[g.face].glyph_bounding_box(GlyphId(g.glyph_id)) else { continue };
        let shear = shear_for(&faces[g.face]);
        for (gx, gy) in [(bb.x_min, bb.y_min), (bb.x_max, bb.y_min), (bb.x_min, bb.y_max), (bb.x_max, bb.y_max)] {
            let (x, y) = glyph_to_local(g, scales[g.face], shear, f64::from(gx), f64::from(gy));
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
    }
    (lo.0 <= hi.0).then_some(Rect { x: lo.0, y: lo.1, w: hi.0 - lo.0, h: hi.1 - lo.1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(content: &str) -> TextLayer {
        TextLayer::new(content, "DejaVu Sans", 100.0)
    }

    #[test]
    fn single_glyph_sits_on_ascent() {
        let l = layout_text(&layer("A"), &FontCatalog::embedded());
        assert_eq!(l.glyphs.len(), 1);
        // 1901 / 2048 * 100
        assert_eq!(l.glyphs[0].y, 92.822265625);
        assert_eq!(l.glyphs[0].x, 0.0);
        assert_eq!(l.height, (1901.0 + 483.0) / 2048.0 * 100.0);
    }

    #[test]
    fn char_spacing_between_glyphs_only() {
        let fonts = FontCatalog::embedded();
        let plain = layout_text(&layer("AV"), &fonts);
        let mut spaced = layer("AV");
        spaced.char_spacing = 7.0;
        let spaced = layout_text(&spaced, &fonts);
        assert_eq!(spaced.width, plain.width + 7.0);
        assert_eq!(spaced.glyphs[1].x, plain.glyphs[1].x + 7.0);
    }

    #[test]
    fn lines_advance_by_spacing_times_line_height() {
        let mut t = layer("a\nb\nc");
        t.line_spacing = 1.5;
        let l = layout_text(&t, &FontCatalog::embedded());
        let lh = (1901.0 + 483.0) / 2048.0 * 100.0;
        assert!((l.glyphs[2].y - l.glyphs[0].y - 3.0 * lh).abs() < 1e-9);
    }

    #[test]
    fn centred_equal_lines_share_x() {
        let mut t = layer("a\na");
        t.alignment = Alignment::Center;
        let l = layout_text(&t, &FontCatalog::embedded());
        assert_eq!(l.glyphs[0].x, l.glyphs[1].x);
    }

    #[test]
    fn alignment_offsets_short_line() {
        let fonts = FontCatalog::embedded();
        let mut t = layer("WWW\ni");
        for (align, expect) in [(Alignment::Left, 0.0), (Alignment::Right, 1.0), (Alignment::Center, 0.5)] {
            t.alignment = align;
            let l = layout_text(&t, &fonts);
            let short = l.glyphs[3].advance;
            assert!((l.glyphs[3].x - expect * (l.width - short)).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_glyph_uses_notdef() {
        let l = layout_text(&layer("\u{4e2d}"), &FontCatalog::embedded());
        assert_eq!(l.glyphs[0].glyph_id, 0);
        assert!(l.glyphs[0].advance > 0.0);
    }

    #[test]
    fn tiny_bend_converges_to_straight() {
        let fonts = FontCatalog::embedded();
        let straight = layout_text(&layer("Bend me"), &fonts);
        let mut t = layer("Bend me");
        t.bend = 1e-6;
        let bent = layout_text(&t, &fonts);
        for (a, b) in straight.glyphs.iter().zip(&bent.glyphs) {
            assert!((a.x - b.x).abs() < 0.01 && (a.y - b.y).abs() < 0.01);
        }
    }

    #[test]
    fn positive_bend_arches() {
        let mut t = layer("ooooo");
        t.bend = 90.0;
        let l = layout_text(&t, &FontCatalog::embedded());
        let mid = &l.glyphs[2];
        let end = &l.glyphs[4];
        assert!(end.y > mid.y, "ends sit lower than the middle");
        assert!(end.rotation > 0.0 && l.glyphs[0].rotation < 0.0);
        // glyph centres follow the arc: tangent sweep between first and last
        // centre is (line width - first/last half advances) / R
        let sweep = l.glyphs[4].rotation - l.glyphs[0].rotation;
        let lw = l.width;
        let expect = (lw - l.glyphs[0].advance / 2.0 - l.glyphs[4].advance / 2.0) / lw * 90.0;
        assert!((sweep - expect).abs() < 1e-9);
        t.bend = -90.0;
        let l = layout_text(&t, &FontCatalog::embedded());
        assert!(l.glyphs[4].y < l.glyphs[2].y);
    }
}
