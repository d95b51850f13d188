//! Synthetic test suites and method outputs produced by the pipeline.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{output_path, write_manifest, BenchError, BenchmarkCase, CaseMode};
use crate::font::FontCatalog;
use crate::image::RgbaImage;
use crate::pipeline::{compose, BmBackend, Composition, Mode, PipelineError, PipelineRequest, PmBackend};
use crate::protocol::{canonicalize, CanvasSize};

/// Case counts per mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteSplit {
    pub prompt_only: usize,
    pub single_asset: usize,
    pub multi_asset: usize,
}

impl Default for SuiteSplit {
    /// 45 prompt-only, 39 single-asset, 6 multi-asset.
    fn default() -> Self {
        SuiteSplit { prompt_only: 45, single_asset: 39, multi_asset: 6 }
    }
}

impl SuiteSplit {
    pub fn total(&self) -> usize {
        self.prompt_only + self.single_asset + self.multi_asset
    }
}

const SUBJECTS: &[&str] = &[
    "a summer jazz night in the park",
    "a neighbourhood bakery opening",
    "a marathon charity run",
    "a winter clearance sale",
    "a science museum exhibition on volcanoes",
    "a weekend farmers market",
    "an indie film festival",
    "a yoga retreat by the lake",
    "a coding bootcamp open day",
    "a vintage car show",
    "a coffee tasting workshop",
    "a lantern festival",
];

const STYLES: &[&str] = &["minimalist", "retro", "playful", "elegant", "bold typographic", "watercolor-inspired"];

fn asset_png(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let (w, h) = (rng.random_range(48..=96u32), rng.random_range(48..=96u32));
    let fill = [rng.random(), rng.random(), rng.random(), 255];
    let round = rng.random_bool(0.5);
    let mut img = RgbaImage::new(w, h);
    let (cx, cy, rx, ry) = (w as f64 / 2.0, h as f64 / 2.0, w as f64 / 2.0, h as f64 / 2.0);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = ((x as f64 + 0.5 - cx) / rx, (y as f64 + 0.5 - cy) / ry);
            if !round || dx * dx + dy * dy <= 1.0 {
                img.set_pixel(x, y, fill);
            }
        }
    }
    img.encode_png()
}

/// Writes `cases.jsonl` and `assets/*.png` under `dir` and returns the cases
/// with absolute asset paths. Case ids are `c000`, `c001`, ... in
/// prompt-only, single-asset, multi-asset order.
pub fn write_test_suite(dir: impl AsRef<Path>, seed: u64, split: SuiteSplit) -> Result<Vec<BenchmarkCase>, BenchError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("assets"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = std::iter::repeat_n(CaseMode::PromptOnly, split.prompt_only)
        .chain(std::iter::repeat_n(CaseMode::SingleAsset, split.single_asset))
        .chain(std::iter::repeat_n(CaseMode::MultiAsset, split.multi_asset));
    let mut cases = Vec::new();
    for (k, mode) in modes.enumerate() {
        let id = format!("c{k:03}");
        let subject = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
        let style = STYLES[rng.random_range(0..STYLES.len())];
        let n_assets = match mode {
            CaseMode::PromptOnly => 0,
            CaseMode::SingleAsset => 1,
            CaseMode::MultiAsset => rng.random_range(2..=3),
        };
        let mut assets = Vec::new();
        for i in 0..n_assets {
            let rel = PathBuf::from("assets").join(format!("{id}_{i}.png"));
            std::fs::write(dir.join(&rel), asset_png(&mut rng))?;
            assets.push(rel);
        }
        let prompt = if n_assets == 0 {
            format!("A {style} poster for {subject}.")
        } else {
            format!("A {style} poster for {subject}, featuring the supplied image{}.", if n_assets > 1 { "s" } else { "" })
        };
        cases.push(BenchmarkCase { id, mode, prompt, assets });
    }
    write_manifest(&cases, std::fs::File::create(dir.join("cases.jsonl"))?)?;
    for c in &mut cases {
        for a in &mut c.assets {
            *a = dir.join(&*a);
        }
    }
    Ok(cases)
}

/// Runs one case through the pipeline.
pub fn compose_case(
    case: &BenchmarkCase,
    size: CanvasSize,
    pm: &dyn PmBackend,
    bm: &dyn BmBackend,
    fonts: &FontCatalog,
) -> Result<Composition, BenchError> {
    let err = |msg: String| BenchError::Case { id: case.id.clone(), msg };
    let assets = case
        .assets
        .iter()
        .map(|p| RgbaImage::read_png(p).map_err(|e| err(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let mode = if assets.is_empty() { Mode::PromptOnly } else { Mode::PromptAssets };
    let req = PipelineRequest::new(case.prompt.clone(), size, mode).with_assets(assets);
    compose(&req, pm, bm, fonts).map_err(|e: PipelineError| err(e.to_string()))
}

/// Composes every case and writes `<outputs>/<method>/<id>.png` (flattened)
/// and `<id>.json` (protocol). Cases run in parallel; output bytes do not
/// depend on scheduling.
pub fn generate_outputs(
    cases: &[BenchmarkCase],
    method: &str,
    outputs: &Path,
    size: CanvasSize,
    pm: &dyn PmBackend,
    bm: &dyn BmBackend,
    fonts: &FontCatalog,
) -> Result<(), BenchError> {
    std::fs::create_dir_all(outputs.join(method))?;
    cases.par_iter().try_for_each(|c| {
        let comp = compose_case(c, size, pm, bm, fonts)?;
        let png = output_path(outputs, method, &c.id);
        std::fs::write(&png, comp.flattened.encode_png())?;
        std::fs::write(png.with_extension("json"), canonicalize(&comp.foreground_layers))?;
        Ok(())
    })
}
