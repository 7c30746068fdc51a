//! The seeded fixture corpus and its manifest.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::pickler::{dumps, PickleValue};
use super::*;
use crate::policy::{RuleId, Severity};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    ReducePayload,
    InjectedStream,
    TorchLikeZip,
    KerasH5Lambda,
    KerasZipLambda,
    BenignPickle,
    BenignZip,
    BenignH5,
}

impl FixtureKind {
    pub fn is_malicious(self) -> bool {
        !matches!(self, FixtureKind::BenignPickle | FixtureKind::BenignZip | FixtureKind::BenignH5)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedFinding {
    pub rule_id: RuleId,
    pub min_severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub id: String,
    /// Relative to the corpus directory, `/`-separated.
    pub path: String,
    pub kind: FixtureKind,
    pub protocol: Option<u8>,
    /// Every finding at LOW or above the default policy must produce.
    pub expected: Vec<ExpectedFinding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_marker: Option<String>,
    /// What a loader returns for injected streams.
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "present_value")]
    pub benign_root: Option<Value>,
    pub sha256: String,
}

// A present `null` is a real root, distinct from an absent field.
fn present_value<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Value>, D::Error> {
    Value::deserialize(d).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub fixtures: Vec<FixtureEntry>,
}

impl CorpusManifest {
    pub fn load(dir: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME)).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }
}

fn exp(pairs: &[(RuleId, Severity)]) -> Vec<ExpectedFinding> {
    pairs.iter().map(|&(rule_id, min_severity)| ExpectedFinding { rule_id, min_severity }).collect()
}

fn reduce_expected() -> Vec<ExpectedFinding> {
    exp(&[(RuleId::PickleDangerousGlobal, Severity::Critical), (RuleId::PickleCall, Severity::Critical)])
}

fn injected_expected() -> Vec<ExpectedFinding> {
    let mut e = reduce_expected();
    e.extend(exp(&[(RuleId::PickleResidualStack, Severity::High)]));
    e
}

struct Fixture {
    id: String,
    path: String,
    kind: FixtureKind,
    protocol: Option<u8>,
    expected: Vec<ExpectedFinding>,
    marker: bool,
    benign_root: Option<Value>,
    bytes: Vec<u8>,
}

impl Fixture {
    fn entry(&self) -> FixtureEntry {
        FixtureEntry {
            id: self.id.clone(),
            path: self.path.clone(),
            kind: self.kind,
            protocol: self.protocol,
            expected: self.expected.clone(),
            payload_marker: self.marker.then(|| DEFAULT_MARKER.to_string()),
            benign_root: self.benign_root.clone(),
            sha256: hex::encode(Sha256::digest(&self.bytes)),
        }
    }

    fn new(id: &str, path: &str, kind: FixtureKind, protocol: Option<u8>, expected: Vec<ExpectedFinding>, bytes: Vec<u8>) -> Self {
        Fixture {
            id: id.into(),
            path: path.into(),
            kind,
            protocol,
            marker: kind.is_malicious() && !matches!(kind, FixtureKind::KerasH5Lambda | FixtureKind::KerasZipLambda),
            expected,
            benign_root: None,
            bytes,
        }
    }
}

const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "epoch", "layer", "weight", "bias", "conv", "norm", "head", "embed",
    "token", "vocab", "scale", "shift", "grad", "step", "caf\u{e9}", "\u{4e2d}\u{6587}", "line\nbreak", "back\\slash",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=3);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join("_")
}

fn random_scalar(rng: &mut ChaCha8Rng, proto: u8) -> PickleValue {
    match rng.gen_range(0..8) {
        0 => PickleValue::None,
        1 => PickleValue::Bool(rng.gen()),
        2 => PickleValue::Int(rng.gen_range(-300..70_000)),
        3 => PickleValue::Int(rng.gen::<i64>() >> rng.gen_range(0..40)),
        4 => PickleValue::Float((rng.gen::<f64>() - 0.5) * 10f64.powi(rng.gen_range(-8..9))),
        5 if proto >= 1 => PickleValue::Bytes((0..rng.gen_range(0..24)).map(|_| rng.gen()).collect()),
        _ => PickleValue::Text(random_text(rng)),
    }
}

fn random_value(rng: &mut ChaCha8Rng, proto: u8, depth: u32) -> PickleValue {
    if depth == 0 || rng.gen_bool(0.35) {
        return random_scalar(rng, proto);
    }
    let n = rng.gen_range(0..6);
    match rng.gen_range(0..4) {
        0 => PickleValue::List((0..n).map(|_| random_value(rng, proto, depth - 1)).collect()),
        1 => PickleValue::Tuple((0..n).map(|_| random_value(rng, proto, depth - 1)).collect()),
        2 if proto >= 4 => PickleValue::Set((0..n).map(|_| PickleValue::Int(rng.gen_range(0..1000))).collect()),
        _ => PickleValue::Dict(
            (0..n).map(|i| (PickleValue::Text(format!("{}_{i}", random_text(rng))), random_value(rng, proto, depth - 1))).collect(),
        ),
    }
}

/// JSON-representable values, for injected-stream roots.
fn random_root(rng: &mut ChaCha8Rng, depth: u32) -> PickleValue {
    if depth == 0 || rng.gen_bool(0.3) {
        return match rng.gen_range(0..3) {
            0 => PickleValue::None,
            1 => PickleValue::Int(rng.gen_range(-1000..1_000_000)),
            _ => PickleValue::Text(random_text(rng)),
        };
    }
    let n = rng.gen_range(1..5);
    if rng.gen() {
        PickleValue::List((0..n).map(|_| random_root(rng, depth - 1)).collect())
    } else {
        PickleValue::Dict((0..n).map(|i| (PickleValue::Text(format!("k{i}")), random_root(rng, depth - 1))).collect())
    }
}

fn ordered_dict(items: Vec<(PickleValue, PickleValue)>) -> PickleValue {
    PickleValue::Call {
        callee: Box::new(PickleValue::global("collections", "OrderedDict")),
        args: vec![],
        dict_items: items,
        state: None,
    }
}

/// A state dict in the checkpoint pickle's shape; returns it with the raw
/// storage blobs it references.
fn state_dict(rng: &mut ChaCha8Rng, layers: usize) -> (PickleValue, Vec<Vec<u8>>) {
    let mut items = Vec::new();
    let mut storages = Vec::new();
    for l in 0..layers {
        for (suffix, shape) in [("weight", vec![rng.gen_range(2..9), rng.gen_range(2..9)]), ("bias", vec![rng.gen_range(2..9)])] {
            let numel: i64 = shape.iter().product();
            let key = storages.len().to_string();
            let mut blob = Vec::with_capacity(numel as usize * 4);
            for _ in 0..numel {
                blob.extend_from_slice(&(rng.gen::<f32>() - 0.5).to_le_bytes());
            }
            storages.push(blob);
            let mut stride = vec![1i64; shape.len()];
            for i in (0..shape.len().saturating_sub(1)).rev() {
                stride[i] = stride[i + 1] * shape[i + 1];
            }
            let storage = PickleValue::Persistent(Box::new(PickleValue::Tuple(vec![
                PickleValue::text("storage"),
                PickleValue::global("torch", "FloatStorage"),
                PickleValue::Text(key),
                PickleValue::text("cpu"),
                PickleValue::Int(numel),
            ])));
            let tensor = PickleValue::call(
                PickleValue::global("torch._utils", "_rebuild_tensor_v2"),
                vec![
                    storage,
                    PickleValue::Int(0),
                    PickleValue::Tuple(shape.into_iter().map(PickleValue::Int).collect()),
                    PickleValue::Tuple(stride.into_iter().map(PickleValue::Int).collect()),
                    PickleValue::Bool(false),
                    ordered_dict(vec![]),
                ],
            );
            items.push((PickleValue::Text(format!("layers.{l}.{suffix}")), tensor));
        }
    }
    (ordered_dict(items), storages)
}

/// An array pickle in the numeric library's reconstruct shape.
fn array_value(rng: &mut ChaCha8Rng) -> PickleValue {
    let n = rng.gen_range(1..16);
    let data: Vec<u8> = (0..n).flat_map(|_| rng.gen::<f32>().to_le_bytes()).collect();
    let dtype = PickleValue::Call {
        callee: Box::new(PickleValue::global("numpy", "dtype")),
        args: vec![PickleValue::text("f4"), PickleValue::Bool(false), PickleValue::Bool(true)],
        dict_items: vec![],
        state: Some(Box::new(PickleValue::Tuple(vec![
            PickleValue::Int(3),
            PickleValue::text("<"),
            PickleValue::None,
            PickleValue::None,
            PickleValue::None,
            PickleValue::Int(-1),
            PickleValue::Int(-1),
            PickleValue::Int(0),
        ]))),
    };
    PickleValue::Call {
        callee: Box::new(PickleValue::global("numpy.core.multiarray", "_reconstruct")),
        args: vec![
            PickleValue::global("numpy", "ndarray"),
            PickleValue::Tuple(vec![PickleValue::Int(0)]),
            PickleValue::Bytes(b"b".to_vec()),
        ],
        dict_items: vec![],
        state: Some(Box::new(PickleValue::Tuple(vec![
            PickleValue::Int(1),
            PickleValue::Tuple(vec![PickleValue::Int(n as i64)]),
            dtype,
            PickleValue::Bool(false),
            PickleValue::Bytes(data),
        ]))),
    }
}

fn build(seed: u64) -> Result<Vec<Fixture>, ForgeError> {
    use FixtureKind::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let m = DEFAULT_MARKER;

    for proto in [0u8, 2, 4] {
        out.push(Fixture::new(
            &format!("reduce_p{proto}"),
            &format!("malicious/reduce_p{proto}.pkl"),
            ReducePayload,
            Some(proto),
            reduce_expected(),
            emit_reduce_payload_pickle(m, proto)?,
        ));
    }
    for proto in [0u8, 2, 4] {
        let root = if proto == 0 { PickleValue::None } else { random_root(&mut rng, 3) };
        let mut f = Fixture::new(
            &format!("injected_p{proto}"),
            &format!("malicious/injected_p{proto}.pkl"),
            InjectedStream,
            Some(proto),
            injected_expected(),
            emit_injected_pickle(&root, m, proto)?,
        );
        f.benign_root = root.to_json();
        out.push(f);
    }
    {
        let root = random_root(&mut rng, 3);
        let mut f = Fixture::new(
            "injected_headerless_p4",
            "malicious/injected_headerless_p4.pickle",
            InjectedStream,
            Some(4),
            injected_expected(),
            emit_injected_pickle_headerless(&root, m)?,
        );
        f.benign_root = root.to_json();
        out.push(f);
    }
    out.push(Fixture::new(
        "torch_reduce",
        "malicious/torch_reduce.pt",
        TorchLikeZip,
        Some(2),
        reduce_expected(),
        emit_torch_like_zip(&emit_reduce_payload_pickle(m, 2)?)?,
    ));
    {
        let root = PickleValue::List(vec![PickleValue::Int(1), PickleValue::Int(2), PickleValue::Int(3)]);
        let mut f = Fixture::new(
            "torch_injected",
            "malicious/torch_injected.pt",
            TorchLikeZip,
            Some(2),
            injected_expected(),
            emit_torch_like_zip(&emit_injected_pickle(&root, m, 2)?)?,
        );
        f.benign_root = root.to_json();
        out.push(f);
    }
    // payload in a file whose name gives no hint; found by content
    out.push(Fixture::new(
        "weights_bin_reduce",
        "malicious/weights.bin",
        ReducePayload,
        Some(4),
        reduce_expected(),
        emit_reduce_payload_pickle(m, 4)?,
    ));
    let lambda_code = exp(&[(RuleId::KerasLambdaCode, Severity::High)]);
    out.push(Fixture::new(
        "keras_h5_lambda",
        "malicious/keras_lambda.h5",
        KerasH5Lambda,
        None,
        lambda_code.clone(),
        emit_keras_h5(&emit_keras_lambda_config(true)),
    ));
    out.push(Fixture::new(
        "keras_zip_lambda",
        "malicious/keras_lambda.keras",
        KerasZipLambda,
        None,
        lambda_code.clone(),
        emit_keras_zip(&emit_keras_lambda_config(true))?,
    ));
    out.push(Fixture::new(
        "keras_h5_lambda_ref",
        "malicious/keras_lambda_ref.h5",
        KerasH5Lambda,
        None,
        exp(&[(RuleId::KerasLambdaRef, Severity::Medium)]),
        emit_keras_h5(&emit_keras_lambda_config(false)),
    ));
    out.push(Fixture::new(
        "keras_zip_nested",
        "malicious/keras_nested.keras",
        KerasZipLambda,
        None,
        lambda_code.clone(),
        emit_keras_zip(&emit_nested_lambda_config())?,
    ));
    out.push(Fixture::new(
        "keras3_zip_lambda",
        "malicious/keras3_lambda.keras",
        KerasZipLambda,
        None,
        lambda_code,
        emit_keras_zip(&emit_keras3_lambda_config())?,
    ));

    for (i, proto) in [0u8, 1, 2, 3, 4, 5, 0, 2, 4, 5, 1, 3].into_iter().enumerate() {
        let v = random_value(&mut rng, proto, 4);
        out.push(Fixture::new(
            &format!("benign_pickle_{i:02}"),
            &format!("benign/pickle_{i:02}_p{proto}.pkl"),
            BenignPickle,
            Some(proto),
            vec![],
            dumps(&v, proto)?,
        ));
    }
    for (i, proto) in [2u8, 4].into_iter().enumerate() {
        let v = array_value(&mut rng);
        out.push(Fixture::new(
            &format!("benign_array_{i}"),
            &format!("benign/array_{i}_p{proto}.pkl"),
            BenignPickle,
            Some(proto),
            vec![],
            dumps(&v, proto)?,
        ));
    }
    for i in 0..4 {
        let (sd, storages) = state_dict(&mut rng, i + 1);
        let inner = dumps(&sd, 2)?;
        out.push(Fixture::new(
            &format!("benign_torch_{i}"),
            &format!("benign/torch_{i}.pt"),
            BenignZip,
            Some(2),
            vec![],
            emit_torch_like_zip_with_storages(&inner, &storages)?,
        ));
    }
    for i in 0..3 {
        out.push(Fixture::new(
            &format!("benign_h5_{i}"),
            &format!("benign/model_{i}.h5"),
            BenignH5,
            None,
            vec![],
            emit_keras_h5(&emit_benign_keras_config(i + 2)),
        ));
    }
    for i in 0..2 {
        out.push(Fixture::new(
            &format!("benign_keras_{i}"),
            &format!("benign/model_{i}.keras"),
            BenignZip,
            None,
            vec![],
            emit_keras_zip(&emit_benign_keras_config(i + 1))?,
        ));
    }
    Ok(out)
}

/// Write the corpus for `seed` into `output_dir` and return its manifest.
///
/// Files are staged in a sibling temporary directory and moved into place in
/// one rename, so a failure leaves nothing behind. `output_dir` must not exist
/// or be empty.
pub fn emit_corpus(output_dir: &Path, seed: u64) -> Result<CorpusManifest, ForgeError> {
    let fixtures = build(seed)?;
    let parent = match output_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    if output_dir.exists() {
        if fs::read_dir(output_dir)?.next().is_some() {
            return Err(ForgeError::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} is not empty", output_dir.display()),
            )));
        }
    }
    let staging = tempfile::Builder::new().prefix(".forge-").tempdir_in(&parent)?;
    let mut entries = Vec::with_capacity(fixtures.len());
    for f in fixtures {
        let dest = staging.path().join(&f.path);
        if let Some(dir) = dest.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&dest, &f.bytes)?;
        entries.push(f.entry());
    }
    let manifest = CorpusManifest { seed, fixtures: entries };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(staging.path().join(MANIFEST_NAME), text)?;
    if output_dir.exists() {
        fs::remove_dir(output_dir)?;
    }
    let staged = staging.keep();
    if let Err(e) = fs::rename(&staged, output_dir) {
        let _ = fs::remove_dir_all(&staged);
        return Err(e.into());
    }
    Ok(manifest)
}

/// The manifest [`emit_corpus`] would write for `seed`.
pub fn build_manifest(seed: u64) -> Result<CorpusManifest, ForgeError> {
    Ok(CorpusManifest { seed, fixtures: build(seed)?.iter().map(Fixture::entry).collect() })
}

/// The corpus fixtures as in-memory (path, bytes) pairs.
pub fn corpus_files(seed: u64) -> Result<Vec<(String, Vec<u8>)>, ForgeError> {
    Ok(build(seed)?.into_iter().map(|f| (f.path, f.bytes)).collect())
}
