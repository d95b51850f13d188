use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{copy_field, FieldName, LayerKind, Protocol};

/// Fields a user has fixed.
///
/// Each entry of `layers` marks one user-supplied layer: the key is the index
/// of that layer in the predicted (and merged) protocol, the value is the set
/// of its locked fields. User layers pair with entries in ascending key order,
/// so a user protocol with `k` layers comes with exactly `k` entries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FieldMask {
    #[serde(default)]
    pub caption: bool,
    #[serde(default)]
    pub layers: BTreeMap<usize, BTreeSet<FieldName>>,
}

impl FieldMask {
    pub fn is_empty(&self) -> bool {
        !self.caption && self.layers.is_empty()
    }

    /// Locks every field of every layer of `user`, placed at the same indices.
    pub fn lock_all(user: &Protocol) -> Self {
        FieldMask {
            caption: true,
            layers: user
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| (i, l.kind().fields().iter().copied().collect()))
                .collect(),
        }
    }

    /// Whether `index` is a user-supplied layer.
    pub fn is_present(&self, index: usize) -> bool {
        self.layers.contains_key(&index)
    }

    /// JSON view of `user` showing only locked fields, as a model prompt
    /// would see it.
    pub fn redact(&self, user: &Protocol) -> Value {
        let layers: Vec<Value> = self
            .layers
            .values()
            .zip(&user.layers)
            .map(|(locked, layer)| {
                let mut obj = serde_json::to_value(layer).expect("layer serializes");
                if let Value::Object(map) = &mut obj {
                    map.retain(|k, _| {
                        k == "type" || k.parse::<FieldName>().map(|f| locked.contains(&f)).unwrap_or(false)
                    });
                }
                obj
            })
            .collect();
        let mut out = serde_json::Map::new();
        if self.caption {
            out.insert("caption".into(), Value::String(user.caption.clone()));
        }
        out.insert("layers".into(), Value::Array(layers));
        Value::Object(out)
    }
}

/// A user-supplied partial protocol together with its locks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialProtocol {
    pub protocol: Protocol,
    pub mask: FieldMask,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MergeError {
    #[error("mask has {mask} layer entries but the user protocol has {user} layers")]
    LayerCount { mask: usize, user: usize },
    #[error("mask references layer {index} but the prediction has {len} layers")]
    LayerOutOfRange { index: usize, len: usize },
    #[error("field `{field}` does not exist on {kind} layers (layer {index})")]
    FieldNotOnKind { index: usize, field: FieldName, kind: LayerKind },
    #[error("layer {index}: user supplied a {user} layer but the prediction has a {predicted} layer")]
    KindMismatch { index: usize, user: LayerKind, predicted: LayerKind },
}

/// Overlays locked user fields onto a prediction.
///
/// Unlocked fields of user layers and every layer not named in the mask come
/// from `predicted`. A user layer with all of its fields locked replaces the
/// predicted layer wholesale, unknown keys included.
pub fn merge_partial(user: &Protocol, mask: &FieldMask, predicted: &Protocol) -> Result<Protocol, MergeError> {
    if mask.layers.len() != user.layers.len() {
        return Err(MergeError::LayerCount { mask: mask.layers.len(), user: user.layers.len() });
    }
    let mut out = predicted.clone();
    if mask.caption {
        out.caption = user.caption.clone();
    }
    for ((&index, locked), user_layer) in mask.layers.iter().zip(&user.layers) {
        let kind = user_layer.kind();
        if let Some(&field) = locked.iter().find(|f| !f.applies_to(kind)) {
            return Err(MergeError::FieldNotOnKind { index, field, kind });
        }
        let len = out.layers.len();
        let slot = out.layers.get_mut(index).ok_or(MergeError::LayerOutOfRange { index, len })?;
        if kind.fields().iter().all(|f| locked.contains(f)) {
            *slot = user_layer.clone();
            continue;
        }
        if slot.kind() != kind {
            return Err(MergeError::KindMismatch { index, user: kind, predicted: slot.kind() });
        }
        for &field in locked {
            copy_field(slot, user_layer, field);
        }
    }
    Ok(out)
}
