//! Multi-layer corpus ingestion and canvas-mode training pairs.
//!
//! Layout, one directory per sample (see `docs/corpus-format.md`):
//!
//! ```text
//! <root>/<id>/protocol.json
//! <root>/<id>/bg.png              background, defines the canvas size
//! <root>/<id>/assets/<i>.png      i = 0, 1, ... contiguous
//! <root>/<id>/composite.png       optional flattened reference
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::{png_dimensions, RgbaImage};
use crate::protocol::{
    canonicalize, parse_protocol, reset_field, validate, AssetLayer, CanvasSize, FieldMask, FieldName, Layer,
    PartialProtocol, Protocol, Rect, Rgba, TextLayer, Violation,
};

pub const PROTOCOL_FILE: &str = "protocol.json";
pub const BACKGROUND_FILE: &str = "bg.png";
pub const COMPOSITE_FILE: &str = "composite.png";
pub const ASSETS_DIR: &str = "assets";

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSample {
    pub id: String,
    pub dir: PathBuf,
    pub protocol: Protocol,
    pub size: CanvasSize,
    pub assets: Vec<PathBuf>,
    pub background: PathBuf,
    pub composite: Option<PathBuf>,
}

impl CorpusSample {
    pub fn load_assets(&self) -> Result<Vec<RgbaImage>, crate::image::ImageError> {
        self.assets.iter().map(RgbaImage::read_png).collect()
    }
}

/// One rejected sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestResult {
    pub samples: Vec<CorpusSample>,
    pub report: Vec<ReportEntry>,
}

impl IngestResult {
    /// Writes the report as JSON lines.
    pub fn write_report(&self, mut out: impl Write) -> std::io::Result<()> {
        for entry in &self.report {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn reject(id: &str, msg: impl std::fmt::Display) -> ReportEntry {
    ReportEntry { id: id.to_string(), error: Some(msg.to_string()), violations: Vec::new() }
}

/// Loads and validates one sample directory. Never panics on bad input.
pub fn ingest_sample(dir: &Path) -> Result<CorpusSample, ReportEntry> {
    let id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let bytes = std::fs::read(dir.join(PROTOCOL_FILE)).map_err(|e| reject(&id, format!("{PROTOCOL_FILE}: {e}")))?;
    let protocol = parse_protocol(&bytes).map_err(|e| reject(&id, format!("{PROTOCOL_FILE}: {e}")))?;
    let background = dir.join(BACKGROUND_FILE);
    let (w, h) = png_dimensions(&background).map_err(|e| reject(&id, format!("{BACKGROUND_FILE}: {e}")))?;
    let size = CanvasSize::new(w, h).map_err(|e| reject(&id, format!("{BACKGROUND_FILE}: {e}")))?;
    let mut assets = Vec::new();
    loop {
        let p = dir.join(ASSETS_DIR).join(format!("{}.png", assets.len()));
        if !p.is_file() {
            break;
        }
        png_dimensions(&p).map_err(|e| reject(&id, format!("{}: {e}", p.display())))?;
        assets.push(p);
    }
    let composite = Some(dir.join(COMPOSITE_FILE)).filter(|p| p.is_file());
    if let Some(c) = &composite {
        let dims = png_dimensions(c).map_err(|e| reject(&id, format!("{COMPOSITE_FILE}: {e}")))?;
        if dims != (w, h) {
            return Err(reject(&id, format!("{COMPOSITE_FILE} is {}x{}, canvas is {size}", dims.0, dims.1)));
        }
    }
    let violations = validate(&protocol, size, assets.len());
    if !violations.is_empty() {
        return Err(ReportEntry { id, error: None, violations });
    }
    Ok(CorpusSample { id, dir: dir.to_path_buf(), protocol, size, assets, background, composite })
}

/// Ingests every sample directory under `root`, in name order. Sample-level
/// problems go to the report; only an unreadable root is an error.
pub fn ingest(root: impl AsRef<Path>) -> std::io::Result<IngestResult> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let results: Vec<_> = dirs.par_iter().map(|d| ingest_sample(d)).collect();
    let mut out = IngestResult::default();
    for r in results {
        match r {
            Ok(s) => out.samples.push(s),
            Err(e) => out.report.push(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub samples: usize,
    pub rejected: usize,
    pub layers: usize,
    pub text_layers: usize,
    pub asset_layers: usize,
    pub max_layers: usize,
    pub mean_layers: f64,
}

pub fn stats(result: &IngestResult) -> CorpusStats {
    let mut s = CorpusStats { samples: result.samples.len(), rejected: result.report.len(), ..CorpusStats::default() };
    for sample in &result.samples {
        let n = sample.protocol.layers.len();
        s.layers += n;
        s.max_layers = s.max_layers.max(n);
        for l in &sample.protocol.layers {
            match l {
                Layer::Text(_) => s.text_layers += 1,
                Layer::Asset(_) => s.asset_layers += 1,
            }
        }
    }
    if s.samples > 0 {
        s.mean_layers = s.layers as f64 / s.samples as f64;
    }
    s
}

// ------------------------------------------------------------ augmentation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub p_layer: f64,
    pub p_field: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { p_layer: 0.5, p_field: 0.3 }
    }
}

/// A canvas-mode training example: the locked subset and the full target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPair {
    pub partial: PartialProtocol,
    pub target: Protocol,
}

/// Whether augmentation may drop `field`. Content and asset references are
/// the identity of a layer and are always kept.
pub fn is_droppable(field: FieldName) -> bool {
    !matches!(field, FieldName::Content | FieldName::AssetRef)
}

pub fn augment_canvas(sample: &CorpusSample, seed: u64, p_layer: f64, p_field: f64) -> AugmentedPair {
    augment_protocol(&sample.protocol, seed, AugmentConfig { p_layer, p_field })
}

/// Samples a partial protocol from `target`.
///
/// Generator: `ChaCha8Rng::seed_from_u64(seed)`, drawing `f64` values in
/// [0, 1). For each layer in order one draw `r`; the layer is kept iff
/// `r < p_layer`. For a kept layer, one draw per droppable field of its kind
/// in schema order; the field is dropped iff the draw is `< p_field`.
/// Dropped layers consume no field draws. Kept layers appear in the partial
/// in their original order, keyed by their index in `target`; dropped fields
/// are reset to defaults and left unlocked. The caption is copied but not
/// locked.
pub fn augment_protocol(target: &Protocol, seed: u64, cfg: AugmentConfig) -> AugmentedPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut mask = FieldMask::default();
    for (i, layer) in target.layers.iter().enumerate() {
        if rng.random::<f64>() >= cfg.p_layer {
            continue;
        }
        let mut kept = layer.clone();
        let mut locked = std::collections::BTreeSet::new();
        for &f in layer.kind().fields() {
            if is_droppable(f) && rng.random::<f64>() < cfg.p_field {
                reset_field(&mut kept, f);
            } else {
                locked.insert(f);
            }
        }
        layers.push(kept);
        mask.layers.insert(i, locked);
    }
    let protocol = Protocol { caption: target.caption.clone(), layers, extra: Default::default() };
    AugmentedPair { partial: PartialProtocol { protocol, mask }, target: target.clone() }
}

// ------------------------------------------------------------ synthetic corpus

/// Writes `n` small valid samples (`s00000`, ...) under `root`, for tests and
/// benchmarks. Deterministic in `seed`.
pub fn write_synthetic_corpus(root: impl AsRef<Path>, n: usize, seed: u64) -> std::io::Result<()> {
    let root = root.as_ref();
    let size = CanvasSize::new(64, 48).expect("static size");
    let bg = RgbaImage::filled(size.width, size.height, [240, 236, 228, 255]).encode_png();
    let asset = RgbaImage::filled(8, 8, [200, 40, 40, 255]).encode_png();
    (0..n).into_par_iter().try_for_each(|k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let dir = root.join(format!("s{k:05}"));
        std::fs::create_dir_all(dir.join(ASSETS_DIR))?;
        let n_assets = rng.random_range(0..3usize);
        let mut layers = Vec::new();
        for i in 0..n_assets {
            std::fs::write(dir.join(ASSETS_DIR).join(format!("{i}.png")), &asset)?;
            let rect = Rect { x: rng.random_range(0..40) as f64, y: rng.random_range(0..30) as f64, w: 16.0, h: 12.0 };
            layers.push(Layer::Asset(AssetLayer::new(i, rect)));
        }
        for j in 0..rng.random_range(1..4usize) {
            let t = TextLayer::new(format!("Text {k}-{j}"), "DejaVu Sans", rng.random_range(6..14) as f64)
                .at(rng.random_range(0..40) as f64, rng.random_range(0..40) as f64)
                .with_color(Rgba([rng.random(), rng.random(), rng.random(), 255]));
            layers.push(Layer::Text(t));
        }
        let p = Protocol::new(format!("synthetic background {k}"), layers);
        std::fs::write(dir.join(PROTOCOL_FILE), canonicalize(&p))?;
        std::fs::write(dir.join(BACKGROUND_FILE), &bg)?;
        Ok(())
    })
}
