//! Severity model, finding catalog and the allow/deny policy for globals.

pub mod integrity;
pub mod rules;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use integrity::{verify_integrity, IntegrityManifest, IntegrityStatus};
pub use rules::{apply_rules, call_roots, keras_findings, pickle_findings, FileContext};

const DEFAULT_POLICY_JSON: &str = include_str!("../../data/default_policy.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Info,
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    pub const ALL: [Severity; 5] = [Severity::Info, Severity::Low, Severity::Medium, Severity::High, Severity::Critical];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "INFO",
            Severity::Low => "LOW",
            Severity::Medium => "MEDIUM",
            Severity::High => "HIGH",
            Severity::Critical => "CRITICAL",
        }
    }

    /// Key used in report summaries.
    pub fn summary_key(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
            Severity::Critical => "critical",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown severity {0:?}")]
pub struct ParseSeverityError(pub String);

impl FromStr for Severity {
    type Err = ParseSeverityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Severity::ALL
            .into_iter()
            .find(|sev| sev.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseSeverityError(s.to_string()))
    }
}

impl Serialize for Severity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Severity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! rules {
    ($($variant:ident = $code:literal, $sev:ident, $doc:literal;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum RuleId {
            $($variant,)*
        }

        impl RuleId {
            pub const ALL: &'static [RuleId] = &[$(RuleId::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(RuleId::$variant => $code,)*
                }
            }

            /// Severity under the default policy. Rules marked as policy-driven
            /// may be raised or lowered by the policy file.
            pub fn default_severity(self) -> Severity {
                match self {
                    $(RuleId::$variant => Severity::$sev,)*
                }
            }

            pub fn description(self) -> &'static str {
                match self {
                    $(RuleId::$variant => $doc,)*
                }
            }
        }
    };
}

rules! {
    PickleDangerousGlobal = "PICKLE_DANGEROUS_GLOBAL", Critical, "Import of a denied or unknown callable (policy-driven severity).";
    PickleCall = "PICKLE_CALL", Critical, "Call of a denied or unknown callable; at least MEDIUM.";
    PickleResidualStack = "PICKLE_RESIDUAL_STACK", High, "Values left on the stack at STOP, typical of injected payloads.";
    PickleDynamicGlobal = "PICKLE_DYNAMIC_GLOBAL", High, "STACK_GLOBAL whose module or name is computed at load time.";
    PickleTrailingData = "PICKLE_TRAILING_DATA", Info, "Bytes after the final STOP.";
    PickleFrameMismatch = "PICKLE_FRAME_MISMATCH", Info, "Framing inconsistent with the opcodes it wraps.";
    PickleOobBuffer = "PICKLE_OOB_BUFFER", Info, "Out-of-band buffer opcode.";
    ParseError = "PARSE_ERROR", Medium, "Stream could not be fully parsed or evaluated.";
    KerasLambdaCode = "KERAS_LAMBDA_CODE", High, "Lambda layer carrying serialized code (policy-driven severity).";
    KerasLambdaRef = "KERAS_LAMBDA_REF", Medium, "Lambda layer referencing a function by name.";
    KerasCustomLayer = "KERAS_CUSTOM_LAYER", High, "Policy-listed custom layer class.";
    KerasConfigAnomaly = "KERAS_CONFIG_ANOMALY", Medium, "Malformed or over-limit model config.";
    ArchivePathTraversal = "ARCHIVE_PATH_TRAVERSAL", High, "Archive entry path escapes the extraction root.";
    ArchiveUnsupportedMethod = "ARCHIVE_UNSUPPORTED_METHOD", Medium, "Archive entry is encrypted or uses an unsupported compression method.";
    H5HeuristicUsed = "H5_HEURISTIC_USED", Info, "HDF5 config recovered by byte-level heuristic.";
    IntegrityMismatch = "INTEGRITY_MISMATCH", High, "Digest differs from the manifest (LOW when the file is not listed).";
    UnrecognizedFormat = "UNRECOGNIZED_FORMAT", Info, "File did not match any supported format.";
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RuleId::ALL.iter().copied().find(|r| r.as_str() == s).ok_or_else(|| format!("unknown rule id {s:?}"))
    }
}

impl Serialize for RuleId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for RuleId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where in a file a finding points.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Locus {
    Offset(u64),
    JsonPath(String),
    /// Inside an archive entry, optionally narrowed further.
    Entry { path: String, inner: Option<Box<Locus>> },
}

impl Locus {
    pub fn entry(path: &str, inner: Option<Locus>) -> Locus {
        Locus::Entry { path: path.to_string(), inner: inner.map(Box::new) }
    }

    /// Byte offset within the outer file, when the locus has one.
    pub fn byte_offset(&self) -> Option<u64> {
        match self {
            Locus::Offset(o) => Some(*o),
            _ => None,
        }
    }
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locus::Offset(o) => write!(f, "@{o}"),
            Locus::JsonPath(p) => f.write_str(p),
            Locus::Entry { path, inner: None } => f.write_str(path),
            Locus::Entry { path, inner: Some(inner) } => match **inner {
                Locus::Offset(o) => write!(f, "{path}@{o}"),
                ref other => write!(f, "{path}:{other}"),
            },
        }
    }
}

impl Serialize for Locus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub const EVIDENCE_CAP: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub rule_id: RuleId,
    pub severity: Severity,
    #[serde(skip)]
    pub file: String,
    pub locus: Locus,
    pub message: String,
    /// Bounded excerpt, at most [`EVIDENCE_CAP`] bytes.
    pub evidence: String,
}

impl Finding {
    pub fn new(rule_id: RuleId, severity: Severity, file: &str, locus: Locus, message: String, evidence: &str) -> Self {
        let evidence = if evidence.len() > EVIDENCE_CAP {
            format!("{}...", crate::util::truncate_str(evidence, EVIDENCE_CAP - 3))
        } else {
            evidence.to_string()
        };
        Finding { rule_id, severity, file: file.to_string(), locus, message, evidence }
    }
}

/// A (module, name) pattern; either part may end in a single `*`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pattern {
    pub module: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenyEntry {
    pub module: String,
    pub name: String,
    pub severity: Severity,
}

/// How specific a pattern part is: exact beats prefix, then longer literal wins.
type Specificity = (bool, usize);

fn part_matches(pattern: &str, value: &str) -> Option<Specificity> {
    match pattern.strip_suffix('*') {
        Some(prefix) => value.starts_with(prefix).then_some((false, prefix.len())),
        None => (pattern == value).then_some((true, pattern.len())),
    }
}

fn pattern_matches(module_pat: &str, name_pat: &str, module: &str, name: &str) -> Option<(Specificity, Specificity)> {
    Some((part_matches(module_pat, module)?, part_matches(name_pat, name)?))
}

fn validate_part(part: &str) -> Result<(), PolicyError> {
    let body = part.strip_suffix('*').unwrap_or(part);
    if part.is_empty() || body.contains('*') {
        return Err(PolicyError::BadPattern(part.to_string()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disposition {
    Deny(Severity),
    Allow,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Policy {
    pub deny: Vec<DenyEntry>,
    pub allow: Vec<Pattern>,
    pub unknown_global_severity: Severity,
    pub lambda_severity: Severity,
    pub residual_stack_severity: Severity,
    pub dynamic_global_severity: Severity,
    pub extra_custom_layer_classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("invalid policy file: {0}")]
    Json(String),
    #[error("invalid pattern {0:?}: `*` is only allowed once, at the end")]
    BadPattern(String),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SeverityOverrides {
    unknown_global: Option<Severity>,
    lambda: Option<Severity>,
    residual_stack: Option<Severity>,
    dynamic_global: Option<Severity>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    #[serde(default = "yes")]
    inherit_defaults: bool,
    #[serde(default)]
    deny: Vec<DenyEntry>,
    #[serde(default)]
    allow: Vec<Pattern>,
    #[serde(default)]
    severities: SeverityOverrides,
    #[serde(default)]
    custom_layer_classes: Vec<String>,
}

fn yes() -> bool {
    true
}

impl Policy {
    fn empty() -> Self {
        Policy {
            deny: Vec::new(),
            allow: Vec::new(),
            unknown_global_severity: Severity::Medium,
            lambda_severity: Severity::High,
            residual_stack_severity: Severity::High,
            dynamic_global_severity: Severity::High,
            extra_custom_layer_classes: Vec::new(),
        }
    }

    /// The policy shipped with the tool.
    pub fn default_policy() -> Policy {
        Policy::from_json_str(DEFAULT_POLICY_JSON).expect("bundled default policy is valid")
    }

    /// Parse a policy file. Entries are layered on top of the defaults unless
    /// the file sets `"inherit_defaults": false`.
    pub fn from_json_str(text: &str) -> Result<Policy, PolicyError> {
        let file: PolicyFile = serde_json::from_str(text).map_err(|e| PolicyError::Json(e.to_string()))?;
        for part in file.deny.iter().flat_map(|d| [&d.module, &d.name]).chain(file.allow.iter().flat_map(|a| [&a.module, &a.name])) {
            validate_part(part)?;
        }
        let is_default = std::ptr::eq(text, DEFAULT_POLICY_JSON);
        let mut policy = if file.inherit_defaults && !is_default { Policy::default_policy() } else { Policy::empty() };
        policy.deny.extend(file.deny);
        policy.allow.extend(file.allow);
        let s = file.severities;
        policy.unknown_global_severity = s.unknown_global.unwrap_or(policy.unknown_global_severity);
        policy.lambda_severity = s.lambda.unwrap_or(policy.lambda_severity);
        policy.residual_stack_severity = s.residual_stack.unwrap_or(policy.residual_stack_severity);
        policy.dynamic_global_severity = s.dynamic_global.unwrap_or(policy.dynamic_global_severity);
        for class in file.custom_layer_classes {
            if !policy.extra_custom_layer_classes.contains(&class) {
                policy.extra_custom_layer_classes.push(class);
            }
        }
        Ok(policy)
    }

    /// `sha256:` digest of the effective policy's canonical JSON form.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("policy serializes");
        format!("sha256:{}", hex::encode(Sha256::digest(canonical)))
    }

    pub fn classify(&self, module: &str, name: &str) -> (Disposition, Option<String>) {
        classify_global(module, name, self)
    }
}

impl Default for Policy {
    fn default() -> Self {
        Policy::default_policy()
    }
}

/// Resolve a global against the policy.
///
/// Exact deny beats exact allow, which beats any wildcard entry. Among
/// wildcard entries the most specific one wins and deny wins ties. Returns
/// the matched pattern as `module:name`.
pub fn classify_global(module: &str, name: &str, policy: &Policy) -> (Disposition, Option<String>) {
    type Hit<'a> = ((Specificity, Specificity), Option<Severity>, &'a str, &'a str);
    let deny_hits = policy.deny.iter().filter_map(|d| {
        pattern_matches(&d.module, &d.name, module, name).map(|spec| (spec, Some(d.severity), d.module.as_str(), d.name.as_str()))
    });
    let allow_hits = policy.allow.iter().filter_map(|a| {
        pattern_matches(&a.module, &a.name, module, name).map(|spec| (spec, None, a.module.as_str(), a.name.as_str()))
    });
    let exact = |h: &Hit| h.0 .0 .0 && h.0 .1 .0;
    // exactness, then deny over allow among exact hits, then specificity, then deny on ties
    let best = deny_hits.chain(allow_hits).max_by_key(|h| (exact(h), exact(h) && h.1.is_some(), h.0, h.1.is_some(), h.1));
    match best {
        None => (Disposition::Unknown, None),
        Some((_, sev, m, n)) => {
            let matched = Some(format!("{m}:{n}"));
            match sev {
                Some(sev) => (Disposition::Deny(sev), matched),
                None => (Disposition::Allow, matched),
            }
        }
    }
}
