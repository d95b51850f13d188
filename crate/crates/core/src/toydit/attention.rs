//! Joint attention over background-prompt, noise and foreground streams.
//!
//! Stream inputs before projection:
//!
//! ```text
//! b_in = h_b
//! z_in = h_z + PE[0..T_z]
//! f_in = AdaLN(h_f; cond) + PE[0..T_f]      (same PE rows as the noise stream)
//! ```
//!
//! The background-prompt and noise streams use plain linear Q/K/V maps; the
//! foreground stream uses LoRA-wrapped maps. Q, K and V are concatenated
//! along the token axis and a single `softmax(Q K^T / sqrt(d)) V` is split
//! back per stream.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ShapeError, TokenSeq};

pub const LN_EPS: f64 = 1e-6;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

fn check_width(what: &'static str, m: &ArrayView2<'_, f64>, expected: usize) -> Result<(), ShapeError> {
    if m.ncols() != expected {
        return Err(ShapeError::Width { what, expected, got: m.ncols() });
    }
    Ok(())
}

/// `y = x W^T + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn identity(d: usize) -> Self {
        Linear { weight: Array2::eye(d), bias: Array1::zeros(d) }
    }

    pub fn random(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize) -> Self {
        let std = 1.0 / (d_in as f64).sqrt();
        Linear { weight: random_matrix(rng, d_out, d_in, std), bias: Array1::zeros(d_out) }
    }

    pub fn forward(&self, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

/// Linear map plus a rank-`r` update: `y = x W^T + b + (alpha / r) (x A^T) B^T`.
/// `A` is `r x d_in`, `B` is `d_out x r` and starts at zero, so a fresh
/// wrapper computes exactly the base map.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraLinear {
    pub base: Linear,
    pub down: Array2<f64>,
    pub up: Array2<f64>,
    pub alpha: f64,
}

impl LoraLinear {
    pub fn new(base: Linear, rank: usize, alpha: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!(rank >= 1, "LoRA rank must be at least 1");
        let (d_out, d_in) = base.weight.dim();
        let down = random_matrix(rng, rank, d_in, 1.0 / (d_in as f64).sqrt());
        LoraLinear { base, down, up: Array2::zeros((d_out, rank)), alpha }
    }

    pub fn rank(&self) -> usize {
        self.down.nrows()
    }

    pub fn forward(&self, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        let y = self.base.forward(x);
        let scale = self.alpha / self.rank() as f64;
        y + x.dot(&self.down.t()).dot(&self.up.t()) * scale
    }
}

/// Per-row layer normalization without affine terms.
pub fn layer_norm(x: &ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaLnParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl AdaLnParams {
    pub fn identity(d: usize) -> Self {
        AdaLnParams { gamma: Array1::ones(d), beta: Array1::zeros(d) }
    }

    /// `gamma ⊙ LN(x) + beta`.
    pub fn modulate(&self, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        layer_norm(x) * &self.gamma + &self.beta
    }
}

/// Affine maps from a conditioning vector to per-channel scale and shift.
/// The scale map is centred on 1: `gamma = 1 + W_g c + b_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaLn {
    pub to_gamma: Linear,
    pub to_beta: Linear,
}

impl AdaLn {
    /// Maps that ignore the condition and yield `gamma = 1`, `beta = 0`.
    pub fn neutral(cond_dim: usize, d: usize) -> Self {
        let zero = Linear { weight: Array2::zeros((d, cond_dim)), bias: Array1::zeros(d) };
        AdaLn { to_gamma: zero.clone(), to_beta: zero }
    }

    pub fn random(rng: &mut ChaCha8Rng, cond_dim: usize, d: usize) -> Self {
        AdaLn { to_gamma: Linear::random(rng, cond_dim, d), to_beta: Linear::random(rng, cond_dim, d) }
    }

    pub fn params(&self, cond: &Array1<f64>) -> AdaLnParams {
        let c = cond.view().insert_axis(Axis(0));
        let gamma = self.to_gamma.forward(&c).row(0).mapv(|v| 1.0 + v);
        let beta = self.to_beta.forward(&c).row(0).to_owned();
        AdaLnParams { gamma, beta }
    }
}

/// Sinusoidal table: `PE[i, 2k] = sin(i / 10000^(2k/d))`,
/// `PE[i, 2k+1] = cos(i / 10000^(2k/d))`.
pub fn sinusoidal_pe(n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |(i, j)| {
        let k = (j / 2) as f64;
        let angle = i as f64 / libm::pow(10000.0, 2.0 * k / d as f64);
        if j % 2 == 0 {
            libm::sin(angle)
        } else {
            libm::cos(angle)
        }
    })
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| libm::exp(v - max));
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// `(softmax(Q K^T / sqrt(d)) V, weights)`.
pub fn joint_attention(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let d = q.ncols() as f64;
    let weights = softmax_rows(&(q.dot(&k.t()) / d.sqrt()));
    (weights.dot(v), weights)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConfig {
    pub d: usize,
    pub rank: usize,
    pub alpha: f64,
    pub cond_dim: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig { d: 32, rank: 4, alpha: 4.0, cond_dim: 32 }
    }
}

/// Q/K/V maps for the three streams plus the foreground AdaLN.
#[derive(Debug, Clone, PartialEq)]
pub struct MmBlock {
    pub config: BlockConfig,
    pub qkv_b: [Linear; 3],
    pub qkv_z: [Linear; 3],
    pub qkv_f: [LoraLinear; 3],
    pub adaln: AdaLn,
}

/// Pre-projection stream inputs, with the positional rows that were added.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamInputs {
    pub b: Array2<f64>,
    pub z: Array2<f64>,
    pub f: Array2<f64>,
    pub pe_z: Array2<f64>,
    pub pe_f: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub b: Array2<f64>,
    pub z: Array2<f64>,
    pub f: Array2<f64>,
    /// Joint attention weights, `(T_b + T_z + T_f)` square, streams in b, z, f order.
    pub weights: Array2<f64>,
}

impl MmBlock {
    /// Random base weights from `seed`; LoRA up-projections start at zero.
    pub fn random(config: BlockConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d;
        let mut lin = || Linear::random(&mut rng, d, d);
        let qkv_b = [lin(), lin(), lin()];
        let qkv_z = [lin(), lin(), lin()];
        let bases = [lin(), lin(), lin()];
        let qkv_f = bases.map(|b| LoraLinear::new(b, config.rank, config.alpha, &mut rng));
        let adaln = AdaLn::random(&mut rng, config.cond_dim, d);
        MmBlock { config, qkv_b, qkv_z, qkv_f, adaln }
    }

    /// Identity projections, zero LoRA and neutral AdaLN.
    pub fn identity(config: BlockConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = config.d;
        let id = || Linear::identity(d);
        MmBlock {
            config,
            qkv_b: [id(), id(), id()],
            qkv_z: [id(), id(), id()],
            qkv_f: [id(), id(), id()].map(|b| LoraLinear::new(b, config.rank, config.alpha, &mut rng)),
            adaln: AdaLn::neutral(config.cond_dim, d),
        }
    }

    /// The same block with the foreground LoRA updates removed.
    pub fn without_lora(&self) -> MmBlock {
        let mut out = self.clone();
        for l in &mut out.qkv_f {
            l.up.fill(0.0);
        }
        out
    }

    fn check(&self, h_b: &TokenSeq, h_z: &TokenSeq, h_f: &TokenSeq, cond: &Array1<f64>) -> Result<(), ShapeError> {
        let d = self.config.d;
        check_width("h_b", &h_b.tokens.view(), d)?;
        check_width("h_z", &h_z.tokens.view(), d)?;
        check_width("h_f", &h_f.tokens.view(), d)?;
        if cond.len() != self.config.cond_dim {
            return Err(ShapeError::Width { what: "cond", expected: self.config.cond_dim, got: cond.len() });
        }
        if h_b.is_empty() && h_z.is_empty() && h_f.is_empty() {
            return Err(ShapeError::Empty("token streams"));
        }
        Ok(())
    }

    pub fn stream_inputs(&self, h_b: &TokenSeq, h_z: &TokenSeq, h_f: &TokenSeq, cond: &Array1<f64>, pe: &Array2<f64>) -> StreamInputs {
        let (tz, tf) = (h_z.len(), h_f.len());
        let pe_z = pe.slice(s![..tz, ..]).to_owned();
        let pe_f = pe.slice(s![..tf, ..]).to_owned();
        let z = &h_z.tokens + &pe_z;
        let f = self.adaln.params(cond).modulate(&h_f.tokens.view()) + &pe_f;
        StreamInputs { b: h_b.tokens.clone(), z, f, pe_z, pe_f }
    }

    pub fn forward(&self, h_b: &TokenSeq, h_z: &TokenSeq, h_f: &TokenSeq, cond: &Array1<f64>) -> Result<AttentionOutput, ShapeError> {
        self.check(h_b, h_z, h_f, cond)?;
        let pe = sinusoidal_pe(h_z.len().max(h_f.len()), self.config.d);
        Ok(self.forward_with_pe(h_b, h_z, h_f, cond, &pe))
    }

    /// Forward pass with an explicit positional table (at least
    /// `max(T_z, T_f)` rows).
    pub fn forward_with_pe(&self, h_b: &TokenSeq, h_z: &TokenSeq, h_f: &TokenSeq, cond: &Array1<f64>, pe: &Array2<f64>) -> AttentionOutput {
        let inp = self.stream_inputs(h_b, h_z, h_f, cond, pe);
        let project = |i: usize| {
            let b = self.qkv_b[i].forward(&inp.b.view());
            let z = self.qkv_z[i].forward(&inp.z.view());
            let f = self.qkv_f[i].forward(&inp.f.view());
            concatenate(Axis(0), &[b.view(), z.view(), f.view()]).expect("shared width")
        };
        let (q, k, v) = (project(0), project(1), project(2));
        let (out, weights) = joint_attention(&q, &k, &v);
        let (tb, tz) = (h_b.len(), h_z.len());
        AttentionOutput {
            b: out.slice(s![..tb, ..]).to_owned(),
            z: out.slice(s![tb..tb + tz, ..]).to_owned(),
            f: out.slice(s![tb + tz.., ..]).to_owned(),
            weights,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::Stream;
    use super::*;

    #[test]
    fn lora_is_base_at_init_and_moves_after_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = Linear::random(&mut rng, 6, 6);
        let mut lora = LoraLinear::new(base.clone(), 2, 2.0, &mut rng);
        let x = random_matrix(&mut rng, 5, 6, 1.0);
        assert_eq!(lora.forward(&x.view()), base.forward(&x.view()));
        lora.up[[0, 0]] = 0.5;
        assert_ne!(lora.forward(&x.view()), base.forward(&x.view()));
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, 4, 16, 3.0);
        let y = layer_norm(&x.view());
        for row in y.axis_iter(Axis(0)) {
            let m = row.sum() / 16.0;
            let v = row.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 16.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn pe_first_row_alternates() {
        let pe = sinusoidal_pe(3, 4);
        assert_eq!(pe.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[[1, 3]] - (1.0f64 / 100.0).cos()).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let block = MmBlock::random(BlockConfig { d: 8, rank: 2, alpha: 2.0, cond_dim: 8 }, 1);
        let ok = TokenSeq::new(Array2::zeros((2, 8)), Stream::Noise);
        let bad = TokenSeq::new(Array2::zeros((2, 7)), Stream::Foreground);
        let cond = Array1::zeros(8);
        assert!(matches!(block.forward(&ok, &ok, &bad, &cond), Err(ShapeError::Width { what: "h_f", .. })));
        assert!(block.forward(&ok, &ok, &ok, &Array1::zeros(3)).is_err());
    }
}
