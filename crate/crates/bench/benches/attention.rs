use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array1;
use strata_bench::tokens;
use strata_core::toydit::{BlockConfig, MmBlock, Stream};

fn forward(c: &mut Criterion) {
    let cfg = BlockConfig::default();
    let block = MmBlock::random(cfg, 1);
    let cond = Array1::from_elem(cfg.cond_dim, 0.1);
    let mut g = c.benchmark_group("mm_block_forward");
    for n in [16usize, 64, 256] {
        let (hb, hz, hf) = (tokens(n, cfg.d, Stream::BackgroundPrompt, 1), tokens(n, cfg.d, Stream::Noise, 2), tokens(n, cfg.d, Stream::Foreground, 3));
        g.bench_with_input(BenchmarkId::from_parameter(n * 3), &n, |b, _| b.iter(|| block.forward(&hb, &hz, &hf, &cond).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, forward);
criterion_main!(benches);
