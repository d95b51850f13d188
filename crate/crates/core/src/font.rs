//! Font loading and family/style resolution.
//!
//! A catalog always contains the embedded fallback family, so lookups are
//! total. Faces are parsed with `ttf-parser`; rasterization lives in
//! [`crate::scan`].

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use ttf_parser::{name_id, Face};

/// Permissively licensed (Bitstream Vera / DejaVu) Latin-1 subset of DejaVu Sans.
pub const EMBEDDED_FONT: &[u8] = include_bytes!("../fonts/DejaVuSans.ttf");

#[derive(Debug, thiserror::Error)]
pub enum FontError {
    #[error("font parse: {0}")]
    Parse(#[from] ttf_parser::FaceParsingError),
    #[error("font has no family name")]
    Unnamed,
    #[error("font directory {path}: {source}")]
    Dir { path: String, source: std::io::Error },
}

/// One parsed font file.
pub struct FontData {
    bytes: Vec<u8>,
    family: String,
    bold: bool,
    italic: bool,
}

impl std::fmt::Debug for FontData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FontData")
            .field("family", &self.family)
            .field("bold", &self.bold)
            .field("italic", &self.italic)
            .finish()
    }
}

impl FontData {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, FontError> {
        let (family, bold, italic) = {
            let face = Face::parse(&bytes, 0)?;
            let family = family_name(&face).ok_or(FontError::Unnamed)?;
            (family, face.is_bold(), face.is_italic() || face.is_oblique())
        };
        Ok(FontData { bytes, family, bold, italic })
    }

    pub fn face(&self) -> Face<'_> {
        Face::parse(&self.bytes, 0).expect("validated at load")
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn is_bold(&self) -> bool {
        self.bold
    }

    pub fn is_italic(&self) -> bool {
        self.italic
    }
}

fn family_name(face: &Face<'_>) -> Option<String> {
    let lookup = |id: u16| {
        face.names().into_iter().filter(|n| n.name_id == id).find_map(|n| n.to_string())
    };
    lookup(name_id::TYPOGRAPHIC_FAMILY).or_else(|| lookup(name_id::FAMILY)).filter(|s| !s.trim().is_empty())
}

#[derive(Debug, Default, Clone)]
struct Family {
    name: String,
    // indexed by (bold as usize) * 2 + italic as usize
    faces: [Option<Arc<FontData>>; 4],
}

/// A face chosen for a requested style, with any styles it must synthesize.
#[derive(Debug, Clone)]
pub struct ResolvedFace {
    pub data: Arc<FontData>,
    pub synthetic_bold: bool,
    pub synthetic_italic: bool,
}

#[derive(Debug, Clone)]
pub struct FontCatalog {
    families: BTreeMap<String, Family>,
    fallback: String,
}

impl FontCatalog {
    /// Catalog holding only the embedded fallback family.
    pub fn embedded() -> Self {
        let data = FontData::from_bytes(EMBEDDED_FONT.to_vec()).expect("embedded font parses");
        let fallback = data.family.clone();
        let mut catalog = FontCatalog { families: BTreeMap::new(), fallback };
        catalog.insert(data);
        catalog
    }

    /// Embedded fallback plus every `.ttf`/`.otf` file in `dir` (not recursive).
    /// Unparseable files are skipped. Files are visited in name order and the
    /// first face loaded for a family/style wins.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, FontError> {
        let dir = dir.as_ref();
        let io_err = |source| FontError::Dir { path: dir.display().to_string(), source };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("ttf") || e.eq_ignore_ascii_case("otf"))
            })
            .collect();
        paths.sort();
        let mut catalog = Self::embedded();
        for path in paths {
            match std::fs::read(&path).map_err(io_err).and_then(FontData::from_bytes) {
                Ok(data) => catalog.insert(data),
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping font"),
            }
        }
        Ok(catalog)
    }

    pub fn add_font(&mut self, bytes: Vec<u8>) -> Result<(), FontError> {
        self.insert(FontData::from_bytes(bytes)?);
        Ok(())
    }

    fn insert(&mut self, data: FontData) {
        let family = self
            .families
            .entry(data.family.to_lowercase())
            .or_insert_with(|| Family { name: data.family.clone(), ..Family::default() });
        let slot = &mut family.faces[usize::from(data.bold) * 2 + usize::from(data.italic)];
        if slot.is_none() {
            *slot = Some(Arc::new(data));
        }
    }

    pub fn fallback_family(&self) -> &str {
        &self.fallback
    }

    /// Sorted family names, fallback included.
    pub fn family_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.families.values().map(|f| f.name.clone()).collect();
        names.sort();
        names
    }

    pub fn has_family(&self, family: &str) -> bool {
        self.families.contains_key(&family.to_lowercase())
    }

    /// Picks the closest face for `family`, falling back to the fallback
    /// family when it is unknown. Missing bold or italic faces are flagged
    /// for synthesis.
    pub fn resolve(&self, family: &str, bold: bool, italic: bool) -> ResolvedFace {
        let fam = self
            .families
            .get(&family.to_lowercase())
            .unwrap_or_else(|| &self.families[&self.fallback.to_lowercase()]);
        // candidates ordered by preference; a face may only lack requested styles
        let wanted = usize::from(bold) * 2 + usize::from(italic);
        let order: &[usize] = match wanted {
            0 => &[0, 1, 2, 3],
            1 => &[1, 0, 3, 2],
            2 => &[2, 0, 3, 1],
            _ => &[3, 2, 1, 0],
        };
        let (idx, data) = order
            .iter()
            .find_map(|&i| fam.faces[i].clone().map(|d| (i, d)))
            .expect("families hold at least one face");
        let has_bold = idx >= 2;
        let has_italic = idx % 2 == 1;
        ResolvedFace { data, synthetic_bold: bold && !has_bold, synthetic_italic: italic && !has_italic }
    }
}

impl Default for FontCatalog {
    fn default() -> Self {
        Self::embedded()
    }
}
