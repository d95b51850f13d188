//! Porter-Duff source-over on straight-alpha 8-bit pixels.
//!
//! The blend is evaluated with exact integer rationals: with `as = As/255`,
//! `ad = Ad/255`
//!
//! ```text
//! ao = as + ad(1 - as)
//! Co = (Cs·as + Cd·ad(1 - as)) / ao        (Co = 0 when ao = 0)
//! ```
//!
//! and every output channel is rounded half-up to 8 bits.

use crate::image::RgbaImage;

#[inline]
fn div_round_half_up(num: u64, den: u64) -> u8 {
    ((2 * num + den) / (2 * den)) as u8
}

/// `src` over `dst`.
#[inline]
pub fn source_over(dst: [u8; 4], src: [u8; 4]) -> [u8; 4] {
    let sa = u64::from(src[3]);
    if sa == 255 {
        return src;
    }
    let da = u64::from(dst[3]);
    // ao scaled by 255^2
    let ao = sa * 255 + da * (255 - sa);
    if ao == 0 {
        return [0, 0, 0, 0];
    }
    let mut out = [0u8; 4];
    for c in 0..3 {
        let num = u64::from(src[c]) * sa * 255 + u64::from(dst[c]) * da * (255 - sa);
        out[c] = div_round_half_up(num, ao);
    }
    out[3] = div_round_half_up(ao, 255);
    out
}

/// Composites `src` over `dst` with `src`'s top-left at `(ox, oy)` in `dst`
/// pixel coordinates, clipping to `dst`.
pub fn blend_onto(dst: &mut RgbaImage, src: &RgbaImage, ox: i64, oy: i64) {
    let (dw, dh) = (i64::from(dst.width()), i64::from(dst.height()));
    let x0 = ox.max(0);
    let y0 = oy.max(0);
    let x1 = (ox + i64::from(src.width())).min(dw);
    let y1 = (oy + i64::from(src.height())).min(dh);
    for y in y0..y1 {
        for x in x0..x1 {
            let s = src.pixel((x - ox) as u32, (y - oy) as u32);
            let d = dst.pixel(x as u32, y as u32);
            dst.set_pixel(x as u32, y as u32, source_over(d, s));
        }
    }
}

/// `fg` over `bg`; both must have the same dimensions.
pub fn flatten(bg: &RgbaImage, fg: &RgbaImage) -> RgbaImage {
    assert_eq!((bg.width(), bg.height()), (fg.width(), fg.height()), "flatten needs equal sizes");
    let mut out = bg.clone();
    blend_onto(&mut out, fg, 0, 0);
    out
}

/// Scales an alpha value by a 0..=16 coverage count, rounding half-up.
#[inline]
pub fn scale_alpha(alpha: u8, coverage: u32) -> u8 {
    ((u32::from(alpha) * coverage + 8) / 16) as u8
}
