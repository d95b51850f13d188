//! Composition bundles, as a zip archive or a directory:
//!
//! ```text
//! protocol.json      canonical protocol
//! background.png
//! flattened.png
//! assets/0.png ...   one per asset index
//! ```

use std::io::{Cursor, Read, Write};
use std::path::Path;

use zip::write::SimpleFileOptions;

use super::Composition;
use crate::image::{ImageError, RgbaImage};
use crate::protocol::{canonicalize, parse_protocol, ParseError};

pub const PROTOCOL_FILE: &str = "protocol.json";
pub const BACKGROUND_FILE: &str = "background.png";
pub const FLATTENED_FILE: &str = "flattened.png";
pub const ASSETS_DIR: &str = "assets";

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("bundle is missing {0}")]
    Missing(String),
    #[error("{file}: {source}")]
    Image { file: String, source: ImageError },
    #[error("protocol.json: {0}")]
    Protocol(#[from] ParseError),
    #[error("zip: {0}")]
    Zip(#[from] zip::result::ZipError),
    #[error("background is {0}, flattened is {1}")]
    SizeMismatch(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bundle entries in archive order, PNGs already encoded.
pub fn bundle_entries(c: &Composition) -> Vec<(String, Vec<u8>)> {
    bundle_entries_with_background(c, c.background.encode_png())
}

/// As [`bundle_entries`] with caller-supplied background bytes (for example
/// an uploaded PNG kept verbatim).
pub fn bundle_entries_with_background(c: &Composition, background_png: Vec<u8>) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![
        (PROTOCOL_FILE.to_string(), canonicalize(&c.foreground_layers)),
        (BACKGROUND_FILE.to_string(), background_png),
        (FLATTENED_FILE.to_string(), c.flattened.encode_png()),
    ];
    for (i, a) in c.assets.iter().enumerate() {
        out.push((format!("{ASSETS_DIR}/{i}.png"), a.encode_png()));
    }
    out
}

pub fn entries_to_zip(entries: &[(String, Vec<u8>)]) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    {
        let mut zip = zip::ZipWriter::new(&mut buf);
        // fixed timestamp so equal bundles are equal bytes
        let opts = SimpleFileOptions::default()
            .compression_method(zip::CompressionMethod::Deflated)
            .last_modified_time(zip::DateTime::default());
        for (name, bytes) in entries {
            zip.start_file(name.as_str(), opts).expect("in-memory zip");
            zip.write_all(bytes).expect("in-memory zip");
        }
        zip.finish().expect("in-memory zip");
    }
    buf.into_inner()
}

pub fn write_bundle_zip(c: &Composition) -> Vec<u8> {
    entries_to_zip(&bundle_entries(c))
}

fn decode(file: &str, bytes: &[u8]) -> Result<RgbaImage, BundleError> {
    RgbaImage::decode_png(bytes).map_err(|source| BundleError::Image { file: file.to_string(), source })
}

fn assemble(mut get: impl FnMut(&str) -> Result<Option<Vec<u8>>, BundleError>) -> Result<Composition, BundleError> {
    let mut need = |name: &str| get(name)?.ok_or_else(|| BundleError::Missing(name.to_string()));
    let foreground_layers = parse_protocol(&need(PROTOCOL_FILE)?)?;
    let background = decode(BACKGROUND_FILE, &need(BACKGROUND_FILE)?)?;
    let flattened = decode(FLATTENED_FILE, &need(FLATTENED_FILE)?)?;
    if (background.width(), background.height()) != (flattened.width(), flattened.height()) {
        return Err(BundleError::SizeMismatch(
            format!("{}x{}", background.width(), background.height()),
            format!("{}x{}", flattened.width(), flattened.height()),
        ));
    }
    if background.size().is_none() {
        return Err(BundleError::Missing("a non-empty background".into()));
    }
    let mut assets = Vec::new();
    loop {
        let name = format!("{ASSETS_DIR}/{}.png", assets.len());
        match get(&name)? {
            Some(b) => assets.push(decode(&name, &b)?),
            None => break,
        }
    }
    Ok(Composition { background, foreground_layers, flattened, assets })
}

pub fn read_bundle_zip(bytes: &[u8]) -> Result<Composition, BundleError> {
    let mut zip = zip::ZipArchive::new(Cursor::new(bytes))?;
    assemble(|name| match zip.by_name(name) {
        Ok(mut f) => {
            let mut buf = Vec::new();
            f.read_to_end(&mut buf)?;
            Ok(Some(buf))
        }
        Err(zip::result::ZipError::FileNotFound) => Ok(None),
        Err(e) => Err(e.into()),
    })
}

pub fn write_bundle_dir(c: &Composition, dir: impl AsRef<Path>) -> Result<(), BundleError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join(ASSETS_DIR))?;
    for (name, bytes) in bundle_entries(c) {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

pub fn read_bundle_dir(dir: impl AsRef<Path>) -> Result<Composition, BundleError> {
    let dir = dir.as_ref();
    assemble(|name| match std::fs::read(dir.join(name)) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    })
}

/// Reads a bundle from a `.zip` file or a directory.
pub fn read_bundle(path: impl AsRef<Path>) -> Result<Composition, BundleError> {
    let path = path.as_ref();
    if path.is_dir() {
        read_bundle_dir(path)
    } else {
        read_bundle_zip(&std::fs::read(path)?)
    }
}
