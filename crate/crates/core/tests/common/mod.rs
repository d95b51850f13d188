#![allow(dead_code)]

use std::path::{Path, PathBuf};

use num_rational::Ratio;
use strata_core::dataset::{ingest_sample, CorpusSample};
use strata_core::font::FontCatalog;
use strata_core::render::composite;
use strata_core::RgbaImage;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Embedded fallback plus the serif, mono and display fixture faces.
pub fn fixture_fonts() -> FontCatalog {
    FontCatalog::from_dir(fixtures().join("fonts")).expect("fixture fonts load")
}

pub fn sample_dirs(set: &str) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(fixtures().join(set))
        .expect("fixture set exists")
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs
}

pub fn load(dir: &Path) -> CorpusSample {
    ingest_sample(dir).unwrap_or_else(|e| panic!("{}: {e:?}", dir.display()))
}

pub fn render_foreground(sample: &CorpusSample, fonts: &FontCatalog) -> RgbaImage {
    let assets = sample.load_assets().unwrap();
    composite(sample.size, &sample.protocol.layers, &assets, fonts).unwrap()
}

/// `name sha256` lines of the golden hash file.
pub fn golden_hashes() -> Vec<(String, String)> {
    let text = std::fs::read_to_string(fixtures().join("golden/hashes.txt")).unwrap_or_default();
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (n, h) = l.split_once(' ').expect("name and hash");
            (n.to_string(), h.trim().to_string())
        })
        .collect()
}

/// Renders every golden scene; `(name, png sha256)`.
pub fn golden_renders() -> Vec<(String, String)> {
    let fonts = fixture_fonts();
    sample_dirs("golden")
        .iter()
        .map(|d| {
            let s = load(d);
            (s.id.clone(), render_foreground(&s, &fonts).png_sha256())
        })
        .collect()
}

/// Scalar source-over in exact rationals, each channel rounded half up.
pub fn oracle_over(dst: [u8; 4], src: [u8; 4]) -> [u8; 4] {
    let r = |v: u8| Ratio::new(i64::from(v), 255);
    let (sa, da) = (r(src[3]), r(dst[3]));
    let one = Ratio::from_integer(1);
    let ao = sa + da * (one - sa);
    let round = |x: Ratio<i64>| -> u8 { (x + Ratio::new(1, 2)).floor().to_integer() as u8 };
    if ao == Ratio::from_integer(0) {
        return [0; 4];
    }
    let mut out = [0u8; 4];
    for c in 0..3 {
        let co = (Ratio::from_integer(i64::from(src[c])) * sa + Ratio::from_integer(i64::from(dst[c])) * da * (one - sa)) / ao;
        out[c] = round(co);
    }
    out[3] = round(ao * 255);
    out
}

pub mod arb {
    use proptest::prelude::*;
    use strata_core::protocol::{Alignment, AssetLayer, CropRect, Layer, MaskType, Point, Protocol, Rect, Rgba, Stroke, TextLayer};

    fn coord() -> impl Strategy<Value = f64> {
        prop_oneof![-500.0..1500.0f64, (-100i32..1000).prop_map(f64::from)]
    }

    fn color() -> impl Strategy<Value = Rgba> {
        any::<[u8; 4]>().prop_map(Rgba)
    }

    pub fn text_layer() -> impl Strategy<Value = TextLayer> {
        (
            ("[A-Za-z0-9 ]{1,12}", prop_oneof![Just("\n"), Just(" "), Just("é€")], "[a-z]{0,6}"),
            prop_oneof![Just("DejaVu Sans".to_string()), "[A-Z][a-z]{2,8}"],
            0.5..200.0f64,
            (coord(), coord()),
            color(),
            (0.0..10.0f64, color()),
            (-360.0..360.0f64, -360.0..=360.0f64),
            any::<(bool, bool, bool)>(),
            prop_oneof![Just(Alignment::Left), Just(Alignment::Center), Just(Alignment::Right)],
            (0.1..3.0f64, -5.0..5.0f64),
        )
            .prop_map(|((a, b, c), family, size, (x, y), color, (sw, sc), (rot, bend), (bold, italic, underline), alignment, (ls, cs))| {
                let mut t = TextLayer::new(format!("{a}{b}{c}"), family, size);
                t.position = Point { x, y };
                t.color = color;
                t.stroke = Stroke { width: sw, color: sc };
                t.rotation = rot;
                t.bend = bend;
                t.bold = bold;
                t.italic = italic;
                t.underline = underline;
                t.alignment = alignment;
                t.line_spacing = ls;
                t.char_spacing = cs;
                t
            })
    }

    pub fn asset_layer(max_ref: usize) -> impl Strategy<Value = AssetLayer> {
        (
            0..max_ref.max(1),
            (coord(), coord(), 1.0..800.0f64, 1.0..800.0f64),
            (0.0..0.5f64, 0.0..0.5f64, 0.5..=1.0f64, 0.5..=1.0f64),
            -720.0..720.0f64,
            prop_oneof![Just(MaskType::None), Just(MaskType::Circle), (0.0..50.0f64).prop_map(|radius| MaskType::RoundedRect { radius })],
        )
            .prop_map(|(r, (x, y, w, h), (u0, v0, u1, v1), rotation, mask_type)| {
                let mut a = AssetLayer::new(r, Rect { x, y, w, h });
                a.crop = CropRect { u0, v0, u1, v1 };
                a.rotation = rotation;
                a.mask_type = mask_type;
                a
            })
    }

    pub fn layer() -> impl Strategy<Value = Layer> {
        prop_oneof![text_layer().prop_map(Layer::Text), asset_layer(4).prop_map(Layer::Asset)]
    }

    pub fn protocol() -> impl Strategy<Value = Protocol> {
        ("[ -~]{0,30}", proptest::collection::vec(layer(), 0..6)).prop_map(|(c, layers)| Protocol::new(c, layers))
    }
}

/// Byte- and structure-level mutations of a JSON document for parser fuzzing.
pub fn mutate(rng: &mut rand_chacha::ChaCha8Rng, src: &[u8]) -> Vec<u8> {
    use rand::Rng;
    const TOKENS: &[&[u8]] = &[
        b"null", b"true", b"[]", b"{}", b"\"\"", b"-0", b"1e400", b"-1e308", b"18446744073709551616", b"0.5", b"\"#zzzzzz\"",
        b"\"\\ud800\"", b",", b":", b"{", b"]", b"\"type\"", b"\"layers\"", b"\"asset\"", b"\"text\"", b"NaN", b"\xff",
    ];
    let mut out = src.to_vec();
    for _ in 0..rng.random_range(1..4) {
        if out.is_empty() {
            out.extend_from_slice(TOKENS[rng.random_range(0..TOKENS.len())]);
            continue;
        }
        let i = rng.random_range(0..out.len());
        match rng.random_range(0..7) {
            0 => out[i] = rng.random(),
            1 => {
                let j = rng.random_range(i..=out.len().min(i + 16));
                out.drain(i..j);
            }
            2 => {
                let t = TOKENS[rng.random_range(0..TOKENS.len())];
                out.splice(i..i, t.iter().copied());
            }
            3 => out.truncate(i),
            4 => {
                let j = rng.random_range(i..=out.len().min(i + 64));
                let span: Vec<u8> = out[i..j].to_vec();
                out.splice(j..j, span);
            }
            5 => {
                // replace a JSON value with a differently typed one
                if let Ok(mut v) = serde_json::from_slice::<serde_json::Value>(&out) {
                    retype(rng, &mut v);
                    out = serde_json::to_vec(&v).unwrap();
                }
            }
            _ => {
                if out[i].is_ascii_digit() {
                    out[i] = b'0' + rng.random_range(0..10u8);
                } else {
                    out.insert(i, b'9');
                }
            }
        }
    }
    out
}

fn retype(rng: &mut rand_chacha::ChaCha8Rng, v: &mut serde_json::Value) {
    use rand::Rng;
    use serde_json::{json, Value};
    let r = match rng.random_range(0..8) {
        0 => Value::Null,
        1 => json!(-1),
        2 => json!(1e300),
        3 => json!("x"),
        4 => json!([]),
        5 => json!({}),
        6 => json!(u64::MAX),
        _ => json!(0.0),
    };
    match v {
        Value::Object(m) if !m.is_empty() => {
            let k = m.keys().nth(rng.random_range(0..m.len())).unwrap().clone();
            if rng.random_bool(0.5) {
                retype(rng, m.get_mut(&k).unwrap());
            } else if rng.random_bool(0.5) {
                m.remove(&k);
            } else {
                m.insert(k, r);
            }
        }
        Value::Array(a) if !a.is_empty() => {
            let i = rng.random_range(0..a.len());
            if rng.random_bool(0.7) {
                retype(rng, &mut a[i]);
            } else {
                a[i] = r;
            }
        }
        _ => *v = r,
    }
}
