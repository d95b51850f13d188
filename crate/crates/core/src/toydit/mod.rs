//! Desk-scale, forward-only pieces of a conditioned diffusion-transformer
//! block: foreground-to-gray conversion, 64-token pooling, LoRA linear maps,
//! AdaLN, positional-encoding reuse, joint three-stream attention and
//! timestep samplers.
//!
//! Matrices are `ndarray` `f64` arrays with tokens along axis 0.

mod attention;
mod fixture;
mod schedule;

pub use attention::{
    joint_attention, layer_norm, sinusoidal_pe, softmax_rows, AdaLn, AdaLnParams, AttentionOutput, BlockConfig,
    Linear, LoraLinear, MmBlock, StreamInputs, LN_EPS,
};
pub use fixture::{read_matrix, read_matrix_file, write_matrix, write_matrix_file, FixtureError};
pub use schedule::{sample_timestep, sample_timesteps, NoiseSchedule, ScheduleError};

use ndarray::{Array2, Array3, Axis};

use crate::image::{RgbImage, RgbaImage};

/// Gray shown through transparent foreground pixels.
pub const GRAY: u8 = 128;

/// Number of tokens per side after [`shrink_tokens`].
pub const SHRUNK_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShapeError {
    #[error("grid {h}x{w} is not a multiple of {SHRUNK_SIDE} on both sides")]
    NotDivisible { h: usize, w: usize },
    #[error("{what}: expected width {expected}, got {got}")]
    Width { what: &'static str, expected: usize, got: usize },
    #[error("{0} is empty")]
    Empty(&'static str),
}

/// Which of the three attention streams a token sequence belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    BackgroundPrompt,
    Noise,
    Foreground,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSeq {
    pub tokens: Array2<f64>,
    pub stream: Stream,
}

impl TokenSeq {
    pub fn new(tokens: Array2<f64>, stream: Stream) -> Self {
        TokenSeq { tokens, stream }
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.tokens.iter().all(|v| v.is_finite())
    }
}

/// Composites a foreground over mid-gray: `round(C·a + 128·(1 - a))` with
/// `a = alpha / 255`, rounded half-up in exact integer arithmetic.
pub fn to_gray_rgb(fg: &RgbaImage) -> RgbImage {
    let mut data = Vec::with_capacity(fg.width() as usize * fg.height() as usize * 3);
    for p in fg.pixels() {
        let a = u32::from(p[3]);
        for c in &p[..3] {
            let num = u32::from(*c) * a + u32::from(GRAY) * (255 - a);
            data.push(((2 * num + 255) / 510) as u8);
        }
    }
    RgbImage { width: fg.width(), height: fg.height(), data }
}

/// Average-pools an `H x W x d` token grid to `8 x 8` cells and returns the
/// 64 pooled tokens in row-major order as a `64 x d` matrix.
pub fn shrink_tokens(grid: &Array3<f64>) -> Result<Array2<f64>, ShapeError> {
    let (h, w, d) = grid.dim();
    if h == 0 || w == 0 || h % SHRUNK_SIDE != 0 || w % SHRUNK_SIDE != 0 {
        return Err(ShapeError::NotDivisible { h, w });
    }
    let (ch, cw) = (h / SHRUNK_SIDE, w / SHRUNK_SIDE);
    let n = (ch * cw) as f64;
    let mut out = Array2::zeros((SHRUNK_SIDE * SHRUNK_SIDE, d));
    for (k, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let (gy, gx) = (k / SHRUNK_SIDE, k % SHRUNK_SIDE);
        let cell = grid.slice(ndarray::s![gy * ch..(gy + 1) * ch, gx * cw..(gx + 1) * cw, ..]);
        for c in 0..d {
            row[c] = cell.slice(ndarray::s![.., .., c]).sum() / n;
        }
    }
    Ok(out)
}
