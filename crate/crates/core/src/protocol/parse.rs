use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use super::validate::layer_field_violations;
use super::{AssetLayer, Layer, Protocol, TextLayer};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("invalid UTF-8 at byte {offset}")]
    Utf8 { offset: usize },
    #[error("malformed JSON at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("{}: {message}", location(*.layer, field))]
    Field { layer: Option<usize>, field: String, message: String },
}

impl ParseError {
    pub fn layer(&self) -> Option<usize> {
        match self {
            ParseError::Field { layer, .. } => *layer,
            _ => None,
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ParseError::Field { field, .. } => Some(field),
            _ => None,
        }
    }
}

fn location(layer: Option<usize>, field: &str) -> String {
    match layer {
        Some(i) => format!("layer {i} field `{field}`"),
        None => format!("field `{field}`"),
    }
}

/// Parses a UTF-8 JSON protocol document, applying defaults for absent
/// optional fields and keeping unknown keys.
pub fn parse_protocol(bytes: &[u8]) -> Result<Protocol, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ParseError::Utf8 { offset: e.valid_up_to() })?;
    let value: Value = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    protocol_from_value(value)
}

/// Canonical bytes: schema key order, extras sorted, shortest round-trip
/// number formatting, no insignificant whitespace.
pub fn canonicalize(protocol: &Protocol) -> Vec<u8> {
    serde_json::to_vec(protocol).expect("protocol serialization is infallible")
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

pub(crate) fn protocol_from_value(value: Value) -> Result<Protocol, ParseError> {
    let doc_err = |field: &str, message: String| ParseError::Field { layer: None, field: field.into(), message };
    let Value::Object(mut root) = value else {
        return Err(doc_err("$", format!("expected an object, found {}", kind_of(&value))));
    };
    let caption = match root.remove("caption") {
        Some(Value::String(s)) => s,
        Some(other) => return Err(doc_err("caption", format!("expected a string, found {}", kind_of(&other)))),
        None => return Err(doc_err("caption", "missing required field".into())),
    };
    let raw_layers = match root.remove("layers") {
        Some(Value::Array(items)) => items,
        Some(other) => return Err(doc_err("layers", format!("expected an array, found {}", kind_of(&other)))),
        None => return Err(doc_err("layers", "missing required field".into())),
    };
    let layers = raw_layers
        .into_iter()
        .enumerate()
        .map(|(i, v)| layer_from_value(i, v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Protocol { caption, layers, extra: root.into_iter().collect() })
}

fn layer_from_value(index: usize, value: Value) -> Result<Layer, ParseError> {
    let err = |field: &str, message: String| ParseError::Field { layer: Some(index), field: field.into(), message };
    let Value::Object(mut obj) = value else {
        return Err(err("$", format!("expected an object, found {}", kind_of(&value))));
    };
    let layer = match obj.remove("type") {
        Some(Value::String(t)) if t == "text" => {
            require(&obj, &["content", "font_family", "font_size", "position", "color"]).map_err(|f| err(f, "missing required field".into()))?;
            Layer::Text(typed::<TextLayer>(index, obj)?)
        }
        Some(Value::String(t)) if t == "asset" => {
            require(&obj, &["asset_ref", "position"]).map_err(|f| err(f, "missing required field".into()))?;
            Layer::Asset(typed::<AssetLayer>(index, obj)?)
        }
        Some(Value::String(t)) => return Err(err("type", format!("unknown layer type {t:?}, expected \"text\" or \"asset\""))),
        Some(other) => return Err(err("type", format!("expected a string, found {}", kind_of(&other)))),
        None => return Err(err("type", "missing required field".into())),
    };
    if let Some(v) = layer_field_violations(index, &layer).into_iter().next() {
        return Err(err(&v.field, v.message));
    }
    Ok(layer)
}

fn require<'a>(obj: &Map<String, Value>, fields: &[&'a str]) -> Result<(), &'a str> {
    match fields.iter().find(|f| !obj.contains_key(**f)) {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn typed<T: DeserializeOwned>(index: usize, obj: Map<String, Value>) -> Result<T, ParseError> {
    serde_path_to_error::deserialize(Value::Object(obj)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = match path.as_str() {
            "." | "" => missing_field_name(&inner.to_string()).unwrap_or_else(|| "$".into()),
            p => p.split(['.', '[']).next().unwrap_or(p).to_string(),
        };
        ParseError::Field { layer: Some(index), field, message: inner.to_string() }
    })
}

fn missing_field_name(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}
