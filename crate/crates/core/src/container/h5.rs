//! Bounded heuristic extraction of the Keras `model_config` attribute from an
//! HDF5 file.
//!
//! No HDF5 object headers or B-trees are walked. The attribute name is
//! located by byte search and the JSON object that follows it is cut out with
//! an escape-aware brace counter. This recovers the config from files written
//! by the mainstream saver, where the attribute value is stored as one
//! contiguous string, but it is not a general HDF5 reader.

use std::io::{Read, Seek, SeekFrom};

use super::FormatError;

pub const HDF5_SIGNATURE: [u8; 8] = [0x89, b'H', b'D', b'F', 0x0d, 0x0a, 0x1a, 0x0a];
pub const MODEL_CONFIG_CAP: u64 = 64 * 1024 * 1024;
pub const ATTRIBUTE_NAME: &[u8] = b"model_config";

const CHUNK: usize = 64 * 1024;
const MAX_NAME_HITS: usize = 8;
const MAX_BRACE_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigSource {
    Hdf5AttributeHeuristic,
    ZipEntry,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedConfig {
    pub source: ConfigSource,
    pub json_text: String,
    /// Half-open byte range of the JSON text in the original file.
    pub byte_range: (u64, u64),
}

pub fn extract_h5_model_config<R: Read + Seek>(file: &mut R) -> Result<ExtractedConfig, FormatError> {
    extract_h5_model_config_capped(file, MODEL_CONFIG_CAP)
}

pub fn extract_h5_model_config_capped<R: Read + Seek>(file: &mut R, cap: u64) -> Result<ExtractedConfig, FormatError> {
    let mut magic = [0u8; 8];
    file.seek(SeekFrom::Start(0))?;
    if read_full(file, &mut magic)? < 8 || magic != HDF5_SIGNATURE {
        return Err(FormatError::NotHdf5);
    }

    let mut first_error = None;
    let mut from = 8;
    for _ in 0..MAX_NAME_HITS {
        let Some(name_at) = find(file, from, ATTRIBUTE_NAME)? else { break };
        from = name_at + ATTRIBUTE_NAME.len() as u64;
        match config_after(file, from, cap)? {
            Ok(config) => return Ok(config),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }

    // Fall back to the top-level shape of a serialized model config.
    if let Some(at) = find(file, 8, b"{\"class_name\"")? {
        if let Ok(Ok(config)) = extract_json(file, at, cap).map(|r| r.and_then(validate(at))) {
            return Ok(config);
        }
    }
    Err(first_error.unwrap_or(FormatError::ConfigNotFound))
}

/// First JSON object after `from`, trying a bounded number of `{` candidates.
fn config_after<R: Read + Seek>(
    file: &mut R,
    mut from: u64,
    cap: u64,
) -> Result<Result<ExtractedConfig, FormatError>, FormatError> {
    let mut first_error = None;
    for _ in 0..MAX_BRACE_ATTEMPTS {
        let Some(start) = find_object_start(file, from)? else { break };
        from = start + 1;
        match extract_json(file, start, cap)?.and_then(validate(start)) {
            Ok(config) => return Ok(Ok(config)),
            // later braces sit inside the same unterminated object
            Err(e @ (FormatError::CapExceeded { .. } | FormatError::UnbalancedJson { .. })) => return Ok(Err(e)),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    Ok(Err(first_error.unwrap_or(FormatError::ConfigNotFound)))
}

fn validate(start: u64) -> impl Fn(Vec<u8>) -> Result<ExtractedConfig, FormatError> {
    move |bytes| {
        let end = start + bytes.len() as u64;
        let text = String::from_utf8(bytes).map_err(|_| FormatError::ConfigNotFound)?;
        serde_json::from_str::<serde_json::Value>(&text).map_err(|_| FormatError::ConfigNotFound)?;
        Ok(ExtractedConfig { source: ConfigSource::Hdf5AttributeHeuristic, json_text: text, byte_range: (start, end) })
    }
}

fn read_full<R: Read>(file: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match file.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

/// Offset of the next occurrence of `needle` at or after `from`.
fn find<R: Read + Seek>(file: &mut R, from: u64, needle: &[u8]) -> Result<Option<u64>, FormatError> {
    file.seek(SeekFrom::Start(from))?;
    let mut buf = vec![0u8; CHUNK + needle.len()];
    let mut kept = 0usize;
    let mut base = from;
    loop {
        let n = read_full(file, &mut buf[kept..kept + CHUNK])?;
        let filled = kept + n;
        if let Some(i) = buf[..filled].windows(needle.len()).position(|w| w == needle) {
            return Ok(Some(base + i as u64));
        }
        if n == 0 {
            return Ok(None);
        }
        let keep = (needle.len() - 1).min(filled);
        buf.copy_within(filled - keep..filled, 0);
        base += (filled - keep) as u64;
        kept = keep;
    }
}

/// Next `{` that is followed by a byte a JSON object can continue with.
fn find_object_start<R: Read + Seek>(file: &mut R, mut from: u64) -> Result<Option<u64>, FormatError> {
    loop {
        let Some(at) = find(file, from, b"{")? else { return Ok(None) };
        let mut next = [0u8; 1];
        file.seek(SeekFrom::Start(at + 1))?;
        if read_full(file, &mut next)? == 1 && matches!(next[0], b'"' | b'}' | b' ' | b'\n' | b'\r' | b'\t') {
            return Ok(Some(at));
        }
        from = at + 1;
    }
}

/// Bytes of the balanced JSON object starting at `start`.
///
/// Braces inside strings are ignored, honoring backslash escapes.
fn extract_json<R: Read + Seek>(file: &mut R, start: u64, cap: u64) -> Result<Result<Vec<u8>, FormatError>, FormatError> {
    file.seek(SeekFrom::Start(start))?;
    let mut out = Vec::new();
    let mut chunk = vec![0u8; CHUNK];
    let mut depth = 0u64;
    let mut in_string = false;
    let mut escaped = false;
    loop {
        let n = read_full(file, &mut chunk)?;
        if n == 0 {
            return Ok(Err(FormatError::UnbalancedJson { start_offset: start }));
        }
        for (i, &b) in chunk[..n].iter().enumerate() {
            if in_string {
                if escaped {
                    escaped = false;
                } else if b == b'\\' {
                    escaped = true;
                } else if b == b'"' {
                    in_string = false;
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' | b'[' => depth += 1,
                b'}' | b']' => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        if (out.len() + i + 1) as u64 > cap {
                            return Ok(Err(FormatError::CapExceeded { declared: (out.len() + i + 1) as u64, cap }));
                        }
                        out.extend_from_slice(&chunk[..=i]);
                        return Ok(Ok(out));
                    }
                }
                _ => {}
            }
        }
        out.extend_from_slice(&chunk[..n]);
        if out.len() as u64 > cap {
            return Ok(Err(FormatError::CapExceeded { declared: out.len() as u64, cap }));
        }
    }
}

/// Write a minimal file that starts with the HDF5 signature and carries
/// `config_json` right after the `model_config` attribute name.
///
/// Scanner-grade only: real HDF5 readers will not open it.
pub fn emit_keras_h5(config_json: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(128 + config_json.len());
    out.extend_from_slice(&HDF5_SIGNATURE);
    // superblock version 0 stub, then padding to a round offset
    out.extend_from_slice(&[0, 0, 0, 0, 0, 8, 8, 0]);
    out.resize(96, 0);
    out.extend_from_slice(b"backend\0tensorflow\0");
    out.extend_from_slice(b"keras_version\x002.15.0\0");
    out.extend_from_slice(ATTRIBUTE_NAME);
    out.extend_from_slice(&[0, 0, 0, 0]);
    out.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    out.extend_from_slice(config_json.as_bytes());
    out.push(0);
    out.resize(out.len().next_multiple_of(8) + 64, 0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn extract(bytes: Vec<u8>) -> Result<ExtractedConfig, FormatError> {
        extract_h5_model_config(&mut Cursor::new(bytes))
    }

    #[test]
    fn roundtrip_through_emitter() {
        let json = r#"{"class_name": "Sequential", "config": {"layers": [{"class_name": "Dense"}]}}"#;
        let bytes = emit_keras_h5(json);
        let got = extract(bytes.clone()).unwrap();
        assert_eq!(got.json_text, json);
        assert_eq!(got.source, ConfigSource::Hdf5AttributeHeuristic);
        let (s, e) = got.byte_range;
        assert_eq!(&bytes[s as usize..e as usize], json.as_bytes());
    }

    #[test]
    fn empty_object() {
        assert_eq!(extract(emit_keras_h5("{}")).unwrap().json_text, "{}");
    }

    #[test]
    fn braces_inside_strings() {
        let json = r#"{"a": "}{\"}", "b": ["{", {"c": "\\"}]}"#;
        assert_eq!(extract(emit_keras_h5(json)).unwrap().json_text, json);
    }

    #[test]
    fn signature_only() {
        let mut bytes = HDF5_SIGNATURE.to_vec();
        bytes.resize(4096, 0);
        assert_eq!(extract(bytes), Err(FormatError::ConfigNotFound));
    }

    #[test]
    fn zip_magic_is_not_hdf5() {
        assert_eq!(extract(b"PK\x03\x04rest".to_vec()), Err(FormatError::NotHdf5));
        assert_eq!(extract(Vec::new()), Err(FormatError::NotHdf5));
    }

    #[test]
    fn unbalanced() {
        let mut bytes = HDF5_SIGNATURE.to_vec();
        bytes.extend_from_slice(b"model_config\0{\"a\": {\"b\": 1}");
        assert_eq!(extract(bytes), Err(FormatError::UnbalancedJson { start_offset: 21 }));
    }

    #[test]
    fn cap_enforced() {
        let json = format!("{{\"pad\": \"{}\"}}", "x".repeat(1000));
        let err = extract_h5_model_config_capped(&mut Cursor::new(emit_keras_h5(&json)), 100).unwrap_err();
        assert!(matches!(err, FormatError::CapExceeded { cap: 100, .. }));
    }

    #[test]
    fn name_split_across_chunks() {
        let mut bytes = HDF5_SIGNATURE.to_vec();
        bytes.resize(CHUNK + 8 - 5, 0);
        bytes.extend_from_slice(b"model_config\0\0{\"k\": 1}");
        assert_eq!(extract(bytes).unwrap().json_text, "{\"k\": 1}");
    }

    #[test]
    fn stray_brace_before_config_skipped() {
        let mut bytes = HDF5_SIGNATURE.to_vec();
        bytes.extend_from_slice(b"model_config\0{\x01\x02{\"k\": {}}");
        assert_eq!(extract(bytes).unwrap().json_text, "{\"k\": {}}");
    }
}
