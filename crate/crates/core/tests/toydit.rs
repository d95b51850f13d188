//! Attention block checks against a plain scalar re-implementation, plus a
//! checked-in output fixture (`STRATA_BLESS=1` rewrites it).

mod common;

use ndarray::{Array1, Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strata_core::toydit::{
    read_matrix_file, shrink_tokens, sinusoidal_pe, write_matrix_file, BlockConfig, Linear, LoraLinear, MmBlock, Stream,
    TokenSeq,
};

type M = Vec<Vec<f64>>;

fn rows(a: &Array2<f64>) -> M {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn matmul_t(x: &M, w: &Array2<f64>) -> M {
    // x W^T
    x.iter()
        .map(|r| (0..w.nrows()).map(|o| (0..r.len()).map(|i| r[i] * w[[o, i]]).sum()).collect())
        .collect()
}

fn linear(x: &M, l: &Linear) -> M {
    matmul_t(x, &l.weight).into_iter().map(|r| r.iter().zip(&l.bias).map(|(a, b)| a + b).collect()).collect()
}

fn lora(x: &M, l: &LoraLinear) -> M {
    let base = linear(x, &l.base);
    let low = matmul_t(&matmul_t(x, &l.down), &l.up);
    let s = l.alpha / l.down.nrows() as f64;
    base.iter().zip(&low).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + s * q).collect()).collect()
}

fn naive_forward(block: &MmBlock, hb: &M, hz: &M, hf: &M, cond: &[f64]) -> (M, M) {
    let d = block.config.d;
    let pe = |i: usize, j: usize| {
        let k = (j / 2) as f64;
        let a = i as f64 / 10000f64.powf(2.0 * k / d as f64);
        if j.is_multiple_of(2) { a.sin() } else { a.cos() }
    };
    let c = vec![cond.to_vec()];
    let gamma: Vec<f64> = linear(&c, &block.adaln.to_gamma)[0].iter().map(|v| 1.0 + v).collect();
    let beta = linear(&c, &block.adaln.to_beta)[0].clone();
    let z_in: M = hz.iter().enumerate().map(|(i, r)| r.iter().enumerate().map(|(j, v)| v + pe(i, j)).collect()).collect();
    let f_in: M = hf
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mean = r.iter().sum::<f64>() / d as f64;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            r.iter().enumerate().map(|(j, v)| gamma[j] * (v - mean) / (var + 1e-6).sqrt() + beta[j] + pe(i, j)).collect()
        })
        .collect();
    let proj = |k: usize| -> M {
        let mut out = linear(hb, &block.qkv_b[k]);
        out.extend(linear(&z_in, &block.qkv_z[k]));
        out.extend(lora(&f_in, &block.qkv_f[k]));
        out
    };
    let (q, kk, v) = (proj(0), proj(1), proj(2));
    let n = q.len();
    let mut weights = vec![vec![0.0; n]; n];
    let mut out = vec![vec![0.0; d]; n];
    for i in 0..n {
        let logits: Vec<f64> = (0..n).map(|j| q[i].iter().zip(&kk[j]).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt()).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        for j in 0..n {
            weights[i][j] = e[j] / s;
            for c in 0..d {
                out[i][c] += weights[i][j] * v[j][c];
            }
        }
    }
    (out, weights)
}

fn random_inputs(seed: u64, d: usize, cond_dim: usize, (tb, tz, tf): (usize, usize, usize)) -> (TokenSeq, TokenSeq, TokenSeq, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = |n: usize| Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
    let (b, z, f) = (m(tb), m(tz), m(tf));
    let cond = Array1::from_shape_simple_fn(cond_dim, || rng.random_range(-1.0..1.0));
    (TokenSeq::new(b, Stream::BackgroundPrompt), TokenSeq::new(z, Stream::Noise), TokenSeq::new(f, Stream::Foreground), cond)
}

fn max_abs_diff(a: &M, b: &M) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Block with LoRA up-projections perturbed away from zero.
fn trained(seed: u64) -> MmBlock {
    let mut b = MmBlock::random(BlockConfig::default(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for l in &mut b.qkv_f {
        l.up.mapv_inplace(|_| rng.random_range(-0.2..0.2));
    }
    b
}

#[test]
fn forward_matches_scalar_reimplementation() {
    for seed in 0..5 {
        let block = trained(seed);
        let (hb, hz, hf, cond) = random_inputs(seed + 100, 32, 32, (3, 16, 16));
        let got = block.forward(&hb, &hz, &hf, &cond).unwrap();
        let (out, w) = naive_forward(&block, &rows(&hb.tokens), &rows(&hz.tokens), &rows(&hf.tokens), &cond.to_vec());
        let mut all = rows(&got.b);
        all.extend(rows(&got.z));
        all.extend(rows(&got.f));
        assert!(max_abs_diff(&all, &out) < 1e-10, "seed {seed}");
        assert!(max_abs_diff(&rows(&got.weights), &w) < 1e-12, "seed {seed}");
    }
}

#[test]
fn forward_matches_checked_in_fixture() {
    let block = trained(2024);
    let (hb, hz, hf, cond) = random_inputs(7, 32, 32, (4, 64, 64));
    let got = block.forward(&hb, &hz, &hf, &cond).unwrap();
    let path = common::fixtures().join("toydit/forward_z.bin");
    if std::env::var_os("STRATA_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        write_matrix_file(&path, &got.z).unwrap();
    }
    let want = read_matrix_file(&path).unwrap();
    assert_eq!(want.dim(), got.z.dim());
    // stored as f32
    let diff = want.iter().zip(got.z.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "max diff {diff}");
}

#[test]
fn pe_table_matches_formula() {
    let pe = sinusoidal_pe(64, 32);
    for i in [0usize, 1, 17, 63] {
        for j in 0..32 {
            let a = i as f64 / 10000f64.powf(2.0 * (j / 2) as f64 / 32.0);
            let want = if j % 2 == 0 { a.sin() } else { a.cos() };
            assert!((pe[[i, j]] - want).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_rows_sum_to_one(seed in any::<u64>(), tb in 0usize..5, tz in 1usize..20, tf in 0usize..20) {
        let block = trained(seed);
        let (hb, hz, hf, cond) = random_inputs(seed, 32, 32, (tb, tz, tf));
        let out = block.forward(&hb, &hz, &hf, &cond).unwrap();
        prop_assert_eq!(out.weights.nrows(), tb + tz + tf);
        for row in out.weights.outer_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|w| *w >= 0.0));
        }
    }

    #[test]
    fn fresh_lora_equals_base(seed in any::<u64>()) {
        let block = MmBlock::random(BlockConfig::default(), seed);
        let (hb, hz, hf, cond) = random_inputs(seed, 32, 32, (2, 8, 8));
        let a = block.forward(&hb, &hz, &hf, &cond).unwrap();
        let b = block.without_lora().forward(&hb, &hz, &hf, &cond).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn shrinker_is_exact_cell_mean(cells in 1usize..4, d in 1usize..4, seed in any::<u64>()) {
        let side = 8 * cells;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // small integers keep every sum exact in f64
        let grid = Array3::from_shape_simple_fn((side, side, d), || f64::from(rng.random_range(-1000i32..1000)));
        let out = shrink_tokens(&grid).unwrap();
        for gy in 0..8 {
            for gx in 0..8 {
                for c in 0..d {
                    let mut sum = 0i64;
                    for y in gy * cells..(gy + 1) * cells {
                        for x in gx * cells..(gx + 1) * cells {
                            sum += grid[[y, x, c]] as i64;
                        }
                    }
                    let want = sum as f64 / (cells * cells) as f64;
                    prop_assert_eq!(out[[gy * 8 + gx, c]].to_bits(), want.to_bits());
                }
            }
        }
    }
}
