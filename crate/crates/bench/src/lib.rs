//! Inputs shared by the benchmarks.

use std::path::PathBuf;

use ndarray::Array2;
use strata_core::dataset::{ingest_sample, CorpusSample};
use strata_core::font::FontCatalog;
use strata_core::toydit::{Stream, TokenSeq};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn fonts() -> FontCatalog {
    FontCatalog::from_dir(fixtures().join("fonts")).expect("fixture fonts")
}

/// A golden scene by directory name, e.g. `12_mixed_stack`.
pub fn scene(name: &str) -> CorpusSample {
    ingest_sample(&fixtures().join("golden").join(name)).unwrap_or_else(|e| panic!("{name}: {e:?}"))
}

/// Deterministic tokens, values in [-1, 1).
pub fn tokens(n: usize, d: usize, stream: Stream, salt: u64) -> TokenSeq {
    let m = Array2::from_shape_fn((n, d), |(i, j)| {
        let h = (i as u64 * 31 + j as u64 * 17 + salt).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11;
        (h as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    });
    TokenSeq::new(m, stream)
}
