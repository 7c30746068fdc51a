//! Digest manifests: `{ "path": "sha256:<hex>" }`.

use std::collections::BTreeMap;
use std::io::{self, Read};
use std::path::{Component, Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Finding, Locus, RuleId, Severity};

pub const DIGEST_PREFIX: &str = "sha256:";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntegrityManifest {
    pub entries: BTreeMap<String, String>,
    /// Directory relative paths are resolved against, when loaded from disk.
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntegrityStatus {
    Verified,
    Mismatch { expected: String, actual: String },
    NotListed,
}

fn normalize(p: &Path) -> String {
    let mut parts: Vec<String> = Vec::new();
    for c in p.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if parts.pop().is_none() {
                    parts.push("..".into());
                }
            }
            other => parts.push(other.as_os_str().to_string_lossy().into_owned()),
        }
    }
    parts.join("/").replace("//", "/")
}

impl IntegrityManifest {
    pub fn from_json_str(text: &str) -> Result<Self, String> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        for (path, digest) in &raw {
            let hex_part = digest
                .strip_prefix(DIGEST_PREFIX)
                .ok_or_else(|| format!("{path}: digest must start with {DIGEST_PREFIX}"))?;
            if hex_part.len() != 64 || !hex_part.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
                return Err(format!("{path}: digest must be 64 lowercase hex digits"));
            }
        }
        Ok(IntegrityManifest { entries: raw, base_dir: None })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut m = Self::from_json_str(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf);
        Ok(m)
    }

    /// Expected digest for `path`, matching keys literally, after `./`
    /// normalization, or relative to the manifest's directory.
    pub fn lookup(&self, path: &Path) -> Option<&str> {
        let literal = path.to_string_lossy();
        if let Some(d) = self.entries.get(literal.as_ref()) {
            return Some(d);
        }
        let norm = normalize(path);
        if let Some((_, d)) = self.entries.iter().find(|(k, _)| normalize(Path::new(k)) == norm) {
            return Some(d);
        }
        let base = self.base_dir.as_ref()?;
        let abs_path = std::path::absolute(path).ok()?;
        let abs_base = std::path::absolute(base).ok()?;
        let rel = abs_path.strip_prefix(&abs_base).ok()?;
        let rel = normalize(rel);
        self.entries.iter().find(|(k, _)| normalize(Path::new(k)) == rel).map(|(_, d)| d.as_str())
    }
}

/// Hex sha256 of a byte stream, read in fixed-size chunks.
pub fn sha256_stream<R: Read>(mut reader: R) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn verify_integrity<R: Read>(reader: R, path: &Path, manifest: &IntegrityManifest) -> io::Result<IntegrityStatus> {
    let Some(expected) = manifest.lookup(path) else {
        return Ok(IntegrityStatus::NotListed);
    };
    let actual = format!("{DIGEST_PREFIX}{}", sha256_stream(reader)?);
    Ok(if actual == expected {
        IntegrityStatus::Verified
    } else {
        IntegrityStatus::Mismatch { expected: expected.to_string(), actual }
    })
}

pub fn integrity_finding(status: &IntegrityStatus, file: &str) -> Option<Finding> {
    match status {
        IntegrityStatus::Verified => None,
        IntegrityStatus::NotListed => Some(Finding::new(
            RuleId::IntegrityMismatch,
            Severity::Low,
            file,
            Locus::Offset(0),
            "file is not listed in the integrity manifest".into(),
            "",
        )),
        IntegrityStatus::Mismatch { expected, actual } => Some(Finding::new(
            RuleId::IntegrityMismatch,
            Severity::High,
            file,
            Locus::Offset(0),
            "file digest does not match the integrity manifest".into(),
            &format!("expected {expected}, got {actual}"),
        )),
    }
}
