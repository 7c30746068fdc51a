//! Deterministic generation of inert attack and benign model files.
//!
//! Every executable-shaped payload is the marker command
//! [`DEFAULT_MARKER`]; nothing here references a network location or a real
//! binary.

pub mod corpus;
pub mod oracle;
pub mod pickler;

use std::io;

use base64::Engine;
use serde_json::{json, Value};
use thiserror::Error;

use crate::container::ZipWriter;

pub use crate::container::h5::emit_keras_h5;
pub use corpus::{emit_corpus, CorpusManifest, ExpectedFinding, FixtureEntry, FixtureKind};
pub use pickler::{dumps, PickleValue, Pickler};

pub const DEFAULT_MARKER: &str = "true # FIXTURE-MARKER";

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("command must not be empty")]
    EmptyCommand,
    #[error("unsupported protocol {0}")]
    UnsupportedProtocol(u8),
    #[error("unsupported value: {0}")]
    UnsupportedValue(String),
    #[error("{0}")]
    Io(#[from] io::Error),
}

fn system_call(command: &str) -> Result<PickleValue, ForgeError> {
    if command.is_empty() {
        return Err(ForgeError::EmptyCommand);
    }
    Ok(PickleValue::call(PickleValue::global("os", "system"), vec![PickleValue::text(command)]))
}

/// `os.system(command)` as a single REDUCE, the shape a `__reduce__`
/// override returning `(os.system, (command,))` produces.
pub fn emit_reduce_payload_pickle(command: &str, protocol: u8) -> Result<Vec<u8>, ForgeError> {
    let call = system_call(command)?;
    dumps(&call, protocol)
}

/// The payload call is serialized first, then `benign_root`, then one STOP.
/// A loader runs the payload and hands back `benign_root`.
pub fn emit_injected_pickle(benign_root: &PickleValue, command: &str, protocol: u8) -> Result<Vec<u8>, ForgeError> {
    if benign_root.to_json().is_none() {
        return Err(ForgeError::UnsupportedValue("benign root must be none, ints, text, lists or text-keyed maps".into()));
    }
    let call = system_call(command)?;
    Pickler::new(protocol)?.dump_all(&[&call, benign_root])
}

/// Protocol 4 injection with no `PROTO` opcode: the stream opens with the
/// frame, exactly as a `dump` override that calls `start_framing` first writes it.
pub fn emit_injected_pickle_headerless(benign_root: &PickleValue, command: &str) -> Result<Vec<u8>, ForgeError> {
    if benign_root.to_json().is_none() {
        return Err(ForgeError::UnsupportedValue("benign root must be none, ints, text, lists or text-keyed maps".into()));
    }
    let call = system_call(command)?;
    Pickler::new(4)?.without_proto_header().dump_all(&[&call, benign_root])
}

/// Archive in the checkpoint layout: `model/data.pkl`, `model/version`, and
/// one storage blob per element of `storages` under `model/data/`.
pub fn emit_torch_like_zip_with_storages(inner_pickle: &[u8], storages: &[Vec<u8>]) -> io::Result<Vec<u8>> {
    let mut zip = ZipWriter::new(Vec::new());
    zip.add_stored("model/data.pkl", inner_pickle)?;
    zip.add_stored("model/version", b"3\n")?;
    for (i, data) in storages.iter().enumerate() {
        zip.add_stored(&format!("model/data/{i}"), data)?;
    }
    zip.finish()
}

pub fn emit_torch_like_zip(inner_pickle: &[u8]) -> io::Result<Vec<u8>> {
    emit_torch_like_zip_with_storages(inner_pickle, &[vec![0u8; 16]])
}

/// Opaque stand-in for a marshalled code object. Not valid bytecode.
pub fn fixture_lambda_payload() -> Vec<u8> {
    let mut p = b"\xe3FIXTURE-MARKER opaque lambda payload, not a code object\x00".to_vec();
    p.extend((0u8..32).map(|i| i.wrapping_mul(37)));
    p
}

/// Base64 with a newline every 76 columns, as the older saver wrote it.
fn base64_lines(bytes: &[u8]) -> String {
    let flat = base64::engine::general_purpose::STANDARD.encode(bytes);
    let mut out = String::with_capacity(flat.len() + flat.len() / 76 + 1);
    for chunk in flat.as_bytes().chunks(76) {
        out.push_str(std::str::from_utf8(chunk).expect("base64 is ascii"));
        out.push('\n');
    }
    out
}

fn dense(name: &str, units: u32, activation: &str, input_dim: Option<u32>) -> Value {
    let mut config = json!({"name": name, "trainable": true, "dtype": "float32"});
    if let Some(dim) = input_dim {
        config["batch_input_shape"] = json!([null, dim]);
    }
    config["units"] = json!(units);
    config["activation"] = json!(activation);
    config["use_bias"] = json!(true);
    config["kernel_initializer"] = json!({"class_name": "GlorotUniform", "config": {"seed": null}});
    config["bias_initializer"] = json!({"class_name": "Zeros", "config": {}});
    json!({"class_name": "Dense", "config": config})
}

fn lambda_layer(name: &str, function: Value, function_type: &str) -> Value {
    json!({"class_name": "Lambda", "config": {
        "name": name, "trainable": true, "dtype": "float32",
        "function": function, "function_type": function_type, "module": "__main__",
        "output_shape": null, "output_shape_type": "raw", "output_shape_module": null, "arguments": {}
    }})
}

fn sequential(name: &str, layers: Vec<Value>) -> Value {
    json!({"class_name": "Sequential", "config": {"name": name, "layers": layers}})
}

/// Dense(10, relu, input 20) -> Lambda -> Dense(1, sigmoid), as a model config.
pub fn emit_keras_lambda_config_value(with_payload: bool) -> Value {
    let function = if with_payload {
        json!([base64_lines(&fixture_lambda_payload()), null, null])
    } else {
        json!("fixture_registered_fn")
    };
    let function_type = if with_payload { "lambda" } else { "function" };
    let mut model = sequential(
        "sequential",
        vec![
            dense("dense", 10, "relu", Some(20)),
            lambda_layer("lambda", function, function_type),
            dense("dense_1", 1, "sigmoid", None),
        ],
    );
    model["keras_version"] = json!("2.15.0");
    model["backend"] = json!("tensorflow");
    model
}

pub fn emit_keras_lambda_config(with_payload: bool) -> String {
    emit_keras_lambda_config_value(with_payload).to_string()
}

/// The same three-layer model with the newer saver's `__lambda__` encoding.
pub fn emit_keras3_lambda_config() -> String {
    let code = json!({"class_name": "__lambda__", "config": {
        "code": base64_lines(&fixture_lambda_payload()), "defaults": null, "closure": null
    }});
    let mut lam = lambda_layer("lambda", code, "lambda");
    lam["module"] = json!("keras.layers");
    let mut model = sequential(
        "sequential",
        vec![dense("dense", 10, "relu", Some(20)), lam, dense("dense_1", 1, "sigmoid", None)],
    );
    model["module"] = json!("keras");
    model["registered_name"] = Value::Null;
    model.to_string()
}

/// The Lambda model wrapped in two further model levels.
pub fn emit_nested_lambda_config() -> String {
    let inner = emit_keras_lambda_config_value(true);
    let middle = sequential("middle", vec![inner]);
    json!({"class_name": "Functional", "config": {"name": "outer", "layers": [
        {"class_name": "InputLayer", "config": {"name": "input_1", "batch_input_shape": [null, 20], "dtype": "float32"}},
        middle
    ]}})
    .to_string()
}

/// A Lambda-free model config of `n` Dense layers.
pub fn emit_benign_keras_config(n: usize) -> String {
    let layers = (0..n)
        .map(|i| dense(&format!("dense_{i}"), 8 + i as u32, "relu", (i == 0).then_some(16)))
        .collect();
    sequential("sequential", layers).to_string()
}

/// Archive in the newer single-file layout: metadata, config and weights.
pub fn emit_keras_zip(config_json: &str) -> io::Result<Vec<u8>> {
    let mut zip = ZipWriter::new(Vec::new());
    zip.add_stored("metadata.json", br#"{"keras_version": "3.0.0", "date_saved": "2024-01-01@00:00:00"}"#)?;
    zip.add_stored("config.json", config_json.as_bytes())?;
    let mut weights = crate::container::HDF5_SIGNATURE.to_vec();
    weights.resize(96, 0);
    zip.add_stored("model.weights.h5", &weights)?;
    zip.finish()
}
