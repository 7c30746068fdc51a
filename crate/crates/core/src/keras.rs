//! Keras model-config traversal.
//!
//! Walks the `layers` topology of a saved model config and pulls out the
//! serialized function carried by Lambda (and operator-listed custom) layers.
//! Decoded bytes are hashed and previewed, never unmarshalled.

use base64::alphabet;
use base64::engine::general_purpose::{GeneralPurpose, GeneralPurposeConfig};
use base64::engine::DecodePaddingMode;
use base64::Engine;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::util::escape_bytes;

pub const MAX_DEPTH: usize = 256;
pub const MAX_NODES: usize = 1_000_000;
pub const PREVIEW_BYTES: usize = 64;

const B64: GeneralPurpose = GeneralPurpose::new(
    &alphabet::STANDARD,
    GeneralPurposeConfig::new().with_decode_padding_mode(DecodePaddingMode::Indifferent),
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayloadEncoding {
    Base64MarshalledCode,
    PlainSource,
    ReferenceByName,
}

impl PayloadEncoding {
    pub fn as_str(self) -> &'static str {
        match self {
            PayloadEncoding::Base64MarshalledCode => "base64-marshalled-code",
            PayloadEncoding::PlainSource => "plain-source",
            PayloadEncoding::ReferenceByName => "reference-by-name",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CodePayload {
    pub encoding: PayloadEncoding,
    /// Zero for reference-by-name.
    pub decoded_length: u64,
    /// Lowercase sha256 hex of the decoded bytes (of the name for references).
    pub digest: String,
    pub preview: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerRecord {
    pub class_name: String,
    pub layer_name: String,
    pub json_path: String,
    pub payload: Option<CodePayload>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KerasAnomaly {
    MalformedConfig { json_path: String, reason: String },
    Base64Error { json_path: String },
    LimitExceeded { json_path: String, reason: String },
}

impl KerasAnomaly {
    pub fn json_path(&self) -> &str {
        match self {
            KerasAnomaly::MalformedConfig { json_path, .. }
            | KerasAnomaly::Base64Error { json_path }
            | KerasAnomaly::LimitExceeded { json_path, .. } => json_path,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            KerasAnomaly::MalformedConfig { reason, .. } => format!("malformed config: {reason}"),
            KerasAnomaly::Base64Error { .. } => "function payload is not valid base64".into(),
            KerasAnomaly::LimitExceeded { reason, .. } => format!("traversal limit exceeded: {reason}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayerWalk {
    pub layers: Vec<LayerRecord>,
    pub anomalies: Vec<KerasAnomaly>,
}

impl LayerWalk {
    pub fn lambda_count(&self) -> usize {
        self.layers.iter().filter(|l| l.class_name == "Lambda").count()
    }
}

/// Visit every layer reachable through `layers` arrays and wrapper `layer`
/// objects, in document order.
///
/// Payloads are extracted for `Lambda` and any class in `custom_classes`.
pub fn walk_layers(config: &Value, custom_classes: &[String]) -> LayerWalk {
    let mut walker = Walker { custom_classes, out: LayerWalk::default(), nodes: 0, stopped: false };
    match config {
        Value::Object(_) => walker.model_body(config, "", 0),
        _ => walker.anomaly_malformed("$", "config is not a JSON object"),
    }
    walker.out
}

struct Walker<'a> {
    custom_classes: &'a [String],
    out: LayerWalk,
    nodes: usize,
    stopped: bool,
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

impl Walker<'_> {
    fn anomaly_malformed(&mut self, path: &str, reason: &str) {
        self.out.anomalies.push(KerasAnomaly::MalformedConfig { json_path: path.to_string(), reason: reason.to_string() });
    }

    fn tick(&mut self, path: &str, depth: usize) -> bool {
        if self.stopped {
            return false;
        }
        self.nodes += 1;
        if self.nodes > MAX_NODES {
            self.stopped = true;
            self.out.anomalies.push(KerasAnomaly::LimitExceeded {
                json_path: path.to_string(),
                reason: format!("more than {MAX_NODES} layer nodes"),
            });
            return false;
        }
        if depth > MAX_DEPTH {
            self.out.anomalies.push(KerasAnomaly::LimitExceeded {
                json_path: path.to_string(),
                reason: format!("nesting deeper than {MAX_DEPTH}"),
            });
            return false;
        }
        true
    }

    /// `node` is an object that may carry `config` with nested layers.
    /// `path` names `node` itself.
    fn model_body(&mut self, node: &Value, path: &str, depth: usize) {
        let Some(config) = node.get("config") else { return };
        let config_path = join(path, "config");
        match config {
            // Keras 1 Sequential stored the layer list directly.
            Value::Array(items) => self.layer_list(items, &config_path, depth),
            Value::Object(map) => {
                if let Some(layers) = map.get("layers") {
                    let layers_path = join(&config_path, "layers");
                    match layers {
                        Value::Array(items) => self.layer_list(items, &layers_path, depth),
                        _ => self.anomaly_malformed(&layers_path, "layers is not an array"),
                    }
                }
                for key in ["layer", "backward_layer"] {
                    if let Some(inner) = map.get(key) {
                        let inner_path = join(&config_path, key);
                        match inner {
                            Value::Object(_) => self.layer(inner, &inner_path, depth + 1),
                            _ => self.anomaly_malformed(&inner_path, "wrapped layer is not an object"),
                        }
                    }
                }
            }
            _ => {}
        }
    }

    fn layer_list(&mut self, items: &[Value], path: &str, depth: usize) {
        for (i, item) in items.iter().enumerate() {
            let item_path = format!("{path}[{i}]");
            if item.is_object() {
                self.layer(item, &item_path, depth + 1);
            } else {
                self.anomaly_malformed(&item_path, "layer entry is not an object");
            }
            if self.stopped {
                return;
            }
        }
    }

    fn layer(&mut self, node: &Value, path: &str, depth: usize) {
        if !self.tick(path, depth) {
            return;
        }
        let class_name = node.get("class_name").and_then(Value::as_str).unwrap_or("").to_string();
        if class_name.is_empty() {
            self.anomaly_malformed(path, "layer has no class_name");
        }
        let layer_name = node
            .get("config")
            .and_then(|c| c.get("name"))
            .or_else(|| node.get("name"))
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        let payload = if class_name == "Lambda" || self.custom_classes.iter().any(|c| *c == class_name) {
            match extract_code_payload(node, path) {
                Ok(p) => p,
                Err(e) => {
                    self.out.anomalies.push(e);
                    None
                }
            }
        } else {
            None
        };
        self.out.layers.push(LayerRecord { class_name, layer_name, json_path: path.to_string(), payload });
        self.model_body(node, path, depth);
    }
}

/// Inspect `config.function` of a layer object. `path` names the layer and is
/// used only for error reporting.
pub fn extract_code_payload(layer: &Value, path: &str) -> Result<Option<CodePayload>, KerasAnomaly> {
    let Some(function) = layer.get("config").and_then(|c| c.get("function")) else {
        return Ok(None);
    };
    let fpath = join(path, "config.function");
    let malformed = |reason: &str| KerasAnomaly::MalformedConfig { json_path: fpath.clone(), reason: reason.to_string() };
    match function {
        Value::Null => Ok(None),
        // [code, defaults, closure]
        Value::Array(parts) => match parts.first() {
            Some(Value::String(b64)) => decode_marshalled(b64, &fpath).map(Some),
            _ => Err(malformed("function list does not start with a base64 string")),
        },
        Value::String(text) => Ok(Some(text_payload(text))),
        Value::Object(map) => match map.get("class_name").and_then(Value::as_str) {
            Some("__lambda__") => match map.get("config").and_then(|c| c.get("code")) {
                Some(Value::String(b64)) => decode_marshalled(b64, &join(&fpath, "config.code")).map(Some),
                _ => Err(malformed("lambda object without a code string")),
            },
            Some("function") => match map.get("config") {
                Some(Value::String(name)) => Ok(Some(reference(name))),
                _ => Err(malformed("function reference without a name")),
            },
            _ => Err(malformed("unrecognized function object")),
        },
        _ => Err(malformed("function field has an unexpected type")),
    }
}

fn decode_marshalled(b64: &str, path: &str) -> Result<CodePayload, KerasAnomaly> {
    let compact: String = b64.chars().filter(|c| !c.is_ascii_whitespace()).collect();
    let bytes = B64.decode(compact.as_bytes()).map_err(|_| KerasAnomaly::Base64Error { json_path: path.to_string() })?;
    Ok(CodePayload {
        encoding: PayloadEncoding::Base64MarshalledCode,
        decoded_length: bytes.len() as u64,
        digest: hex::encode(Sha256::digest(&bytes)),
        preview: escape_bytes(&bytes, PREVIEW_BYTES),
    })
}

/// A bare string is a registered name unless it looks like source text.
fn text_payload(text: &str) -> CodePayload {
    let looks_like_source = text.contains(['\n', '(', ' ', ':']);
    if !looks_like_source {
        return reference(text);
    }
    CodePayload {
        encoding: PayloadEncoding::PlainSource,
        decoded_length: text.len() as u64,
        digest: hex::encode(Sha256::digest(text.as_bytes())),
        preview: escape_bytes(text.as_bytes(), PREVIEW_BYTES),
    }
}

fn reference(name: &str) -> CodePayload {
    CodePayload {
        encoding: PayloadEncoding::ReferenceByName,
        decoded_length: 0,
        digest: hex::encode(Sha256::digest(name.as_bytes())),
        preview: escape_bytes(name.as_bytes(), PREVIEW_BYTES),
    }
}
