use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use strata_bench::{fonts, scene};
use strata_core::blend::flatten;
use strata_core::protocol::CanvasSize;
use strata_core::render::composite;
use strata_core::RgbaImage;

fn scenes(c: &mut Criterion) {
    let fonts = fonts();
    let mut g = c.benchmark_group("composite");
    for name in ["02_asset_plain", "04_asset_rounded_rotated", "08_text_stroke_underline", "10_text_bend_rotate", "12_mixed_stack"] {
        let s = scene(name);
        let assets = s.load_assets().unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(name), &s, |b, s| {
            b.iter(|| composite(s.size, &s.protocol.layers, &assets, &fonts).unwrap())
        });
    }
    g.finish();
}

fn poster_size(c: &mut Criterion) {
    let fonts = fonts();
    let s = scene("12_mixed_stack");
    let assets = s.load_assets().unwrap();
    let size = CanvasSize::new(1000, 1500).unwrap();
    let bg = RgbaImage::new(1000, 1500);
    c.bench_function("composite_1000x1500", |b| b.iter(|| composite(size, &s.protocol.layers, &assets, &fonts).unwrap()));
    let fg = composite(size, &s.protocol.layers, &assets, &fonts).unwrap();
    c.bench_function("flatten_1000x1500", |b| b.iter(|| flatten(&bg, &fg)));
    c.bench_function("encode_png_1000x1500", |b| b.iter(|| fg.encode_png()));
}

criterion_group!(benches, scenes, poster_size);
criterion_main!(benches);
