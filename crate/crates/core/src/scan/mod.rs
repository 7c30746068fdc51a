//! File-type routing, per-file analysis and report assembly.

mod render;

use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::container::h5::{extract_h5_model_config_capped, MODEL_CONFIG_CAP};
use crate::container::zip::{read_entry, DEFAULT_ENTRY_CAP};
use crate::container::{find_pickle_payloads, list_entries, FormatError, HDF5_SIGNATURE};
use crate::keras::{walk_layers, KerasAnomaly, LayerWalk};
use crate::pickle::sniff::{looks_like_pickle, SNIFF_WINDOW};
use crate::pickle::{disassemble_concatenated, evaluate_lenient, ParseLimits, PickleProgram, VmLimits};
use crate::policy::rules::{keras_findings, parse_error_finding, pickle_findings, FileContext};
use crate::policy::{Finding, Locus, Policy, RuleId, Severity};

pub use render::{render, OutputFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    ZipArchive,
    Hdf5,
    PickleStream,
    Unknown,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::ZipArchive => "zip_archive",
            Kind::Hdf5 => "hdf5",
            Kind::PickleStream => "pickle_stream",
            Kind::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confidence {
    Magic,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileKind {
    pub kind: Kind,
    pub confidence: Confidence,
}

impl Serialize for FileKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.kind.serialize(s)
    }
}

/// Classify content from its first bytes. Magic numbers are checked before
/// the pickle heuristic.
pub fn sniff(first_bytes: &[u8]) -> FileKind {
    let magic = |kind| FileKind { kind, confidence: Confidence::Magic };
    if first_bytes.starts_with(b"PK\x03\x04") || first_bytes.starts_with(b"PK\x05\x06") {
        return magic(Kind::ZipArchive);
    }
    if first_bytes.starts_with(&HDF5_SIGNATURE) {
        return magic(Kind::Hdf5);
    }
    if looks_like_pickle(first_bytes) {
        return FileKind { kind: Kind::PickleStream, confidence: Confidence::Heuristic };
    }
    FileKind { kind: Kind::Unknown, confidence: Confidence::Heuristic }
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    /// Cap on any single decompressed entry, bare pickle file or config.
    pub max_entry_bytes: u64,
    pub follow_symlinks: bool,
    /// Worker threads; 0 picks one per core.
    pub jobs: usize,
    pub threshold: Severity,
    pub parse_limits: ParseLimits,
    pub vm_limits: VmLimits,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            max_entry_bytes: DEFAULT_ENTRY_CAP,
            follow_symlinks: false,
            jobs: 0,
            threshold: Severity::High,
            parse_limits: ParseLimits::default(),
            vm_limits: VmLimits::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// The file or directory could not be read.
    Io,
    Archive,
    Hdf5,
    Pickle,
    Config,
}

/// Something that stopped analysis of a file, entry or segment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ScanError {
    pub kind: ErrorKind,
    pub locus: Option<Locus>,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileReport {
    pub path: String,
    pub kind: FileKind,
    pub findings: Vec<Finding>,
    pub errors: Vec<ScanError>,
    #[serde(skip)]
    pub bytes_scanned: u64,
    #[serde(skip)]
    pub duration: Duration,
}

impl FileReport {
    fn new(path: &str) -> Self {
        FileReport {
            path: path.to_string(),
            kind: FileKind { kind: Kind::Unknown, confidence: Confidence::Heuristic },
            findings: Vec::new(),
            errors: Vec::new(),
            bytes_scanned: 0,
            duration: Duration::ZERO,
        }
    }

    fn error(&mut self, kind: ErrorKind, locus: Option<Locus>, message: impl Into<String>) {
        self.errors.push(ScanError { kind, locus, message: message.into() });
    }

    fn io_failure(path: &str, err: &io::Error) -> Self {
        let mut r = FileReport::new(path);
        r.error(ErrorKind::Io, None, err.to_string());
        r
    }

    fn finish(&mut self) {
        self.findings.sort_by(|a, b| {
            a.locus
                .cmp(&b.locus)
                .then(a.rule_id.cmp(&b.rule_id))
                .then(b.severity.cmp(&a.severity))
                .then_with(|| (&a.message, &a.evidence).cmp(&(&b.message, &b.evidence)))
        });
        self.errors.sort();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub critical: u64,
    pub high: u64,
    pub medium: u64,
    pub low: u64,
    pub info: u64,
}

impl Summary {
    pub fn count(&self, sev: Severity) -> u64 {
        match sev {
            Severity::Critical => self.critical,
            Severity::High => self.high,
            Severity::Medium => self.medium,
            Severity::Low => self.low,
            Severity::Info => self.info,
        }
    }

    fn add(&mut self, sev: Severity) {
        *match sev {
            Severity::Critical => &mut self.critical,
            Severity::High => &mut self.high,
            Severity::Medium => &mut self.medium,
            Severity::Low => &mut self.low,
            Severity::Info => &mut self.info,
        } += 1;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub version: String,
    pub policy_digest: String,
    pub files: Vec<FileReport>,
    pub summary: Summary,
    #[serde(skip)]
    pub exit_severity_threshold: Severity,
}

impl ScanReport {
    pub fn new(files: Vec<FileReport>, policy: &Policy, threshold: Severity) -> Self {
        let mut files = files;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let mut summary = Summary::default();
        for f in files.iter().flat_map(|f| &f.findings) {
            summary.add(f.severity);
        }
        ScanReport {
            version: crate::VERSION.to_string(),
            policy_digest: policy.digest(),
            files,
            summary,
            exit_severity_threshold: threshold,
        }
    }

    pub fn findings(&self) -> impl Iterator<Item = &Finding> {
        self.files.iter().flat_map(|f| &f.findings)
    }

    /// 3 when any finding reaches the threshold, else 2 when an input could
    /// not be read, else 0. Unrecognized-format notes never count.
    pub fn exit_code(&self) -> i32 {
        let gated = self
            .findings()
            .any(|f| f.rule_id != RuleId::UnrecognizedFormat && f.severity >= self.exit_severity_threshold);
        if gated {
            3
        } else if self.files.iter().flat_map(|f| &f.errors).any(|e| e.kind == ErrorKind::Io) {
            2
        } else {
            0
        }
    }
}

/// Scan one file. Never fails: problems become errors or findings in the report.
pub fn scan_file(path: &Path, policy: &Policy, opts: &ScanOptions) -> FileReport {
    let display = path.to_string_lossy().replace('\\', "/");
    let started = Instant::now();
    let mut report = match File::open(path) {
        Ok(mut file) => match scan_open(&mut file, &display, policy, opts) {
            Ok(r) => r,
            Err(e) => FileReport::io_failure(&display, &e),
        },
        Err(e) => FileReport::io_failure(&display, &e),
    };
    report.finish();
    report.duration = started.elapsed();
    report
}

/// Scan in-memory or already-open content under the given display path.
pub fn scan_reader<R: Read + Seek>(reader: &mut R, display: &str, policy: &Policy, opts: &ScanOptions) -> FileReport {
    let mut report = match scan_open(reader, display, policy, opts) {
        Ok(r) => r,
        Err(e) => FileReport::io_failure(display, &e),
    };
    report.finish();
    report
}

fn scan_open<R: Read + Seek>(file: &mut R, path: &str, policy: &Policy, opts: &ScanOptions) -> io::Result<FileReport> {
    let size = file.seek(SeekFrom::End(0))?;
    file.seek(SeekFrom::Start(0))?;
    let mut head = Vec::with_capacity(SNIFF_WINDOW);
    file.by_ref().take(SNIFF_WINDOW as u64).read_to_end(&mut head)?;
    file.seek(SeekFrom::Start(0))?;

    let mut report = FileReport::new(path);
    report.kind = sniff(&head);
    let ctx = FileContext::file(path);
    match report.kind.kind {
        Kind::ZipArchive => scan_zip(file, &ctx, policy, opts, &mut report),
        Kind::Hdf5 => scan_h5(file, &ctx, policy, opts, &mut report),
        Kind::PickleStream => {
            let mut data = Vec::new();
            file.by_ref().take(opts.max_entry_bytes).read_to_end(&mut data)?;
            report.bytes_scanned = data.len() as u64;
            if size > opts.max_entry_bytes {
                report.error(
                    ErrorKind::Pickle,
                    Some(Locus::Offset(opts.max_entry_bytes)),
                    format!("only the first {} of {size} bytes were analysed", opts.max_entry_bytes),
                );
            }
            scan_pickle_bytes(&data, &ctx, policy, opts, &mut report);
        }
        Kind::Unknown => {
            report.bytes_scanned = head.len() as u64;
            report.findings.push(Finding::new(
                RuleId::UnrecognizedFormat,
                Severity::Info,
                path,
                Locus::Offset(0),
                "unrecognized format".into(),
                &crate::util::escape_bytes(&head, 16),
            ));
        }
    }
    Ok(report)
}

/// Analyse a byte buffer as one or more concatenated pickle programs.
fn scan_pickle_bytes(data: &[u8], ctx: &FileContext, policy: &Policy, opts: &ScanOptions, report: &mut FileReport) {
    let evaluate = |program: &PickleProgram, report: &mut FileReport| {
        let result = evaluate_lenient(program, &opts.vm_limits);
        if let Some(err) = &result.halted {
            if err.kind != crate::pickle::VmErrorKind::Incomplete {
                report.error(ErrorKind::Pickle, Some(ctx.offset(err.offset)), format!("evaluation stopped: {err}"));
            }
        }
        report.findings.extend(pickle_findings(&result, policy, ctx));
    };
    match disassemble_concatenated(data, &opts.parse_limits) {
        Ok(mut programs) => {
            // A further program is not trailing data for the one before it.
            let last = programs.len() - 1;
            for p in &mut programs[..last] {
                p.trailing_bytes = 0;
            }
            for p in &programs {
                evaluate(p, report);
            }
        }
        Err(seg) => {
            for p in &seg.parsed {
                let mut p = p.clone();
                p.trailing_bytes = 0;
                evaluate(&p, report);
            }
            if !seg.partial.instructions.is_empty() {
                evaluate(&seg.partial, report);
            }
            report.error(
                ErrorKind::Pickle,
                Some(ctx.offset(seg.error.offset())),
                format!("segment {}: {}", seg.segment, seg.error),
            );
            report.findings.push(parse_error_finding(&seg.error, ctx));
        }
    }
}

fn format_error_finding(ctx: &FileContext, locus: Locus, err: &FormatError) -> Finding {
    Finding::new(
        RuleId::ParseError,
        RuleId::ParseError.default_severity(),
        ctx.file,
        locus,
        err.to_string(),
        "",
    )
}

fn scan_zip<R: Read + Seek>(file: &mut R, ctx: &FileContext, policy: &Policy, opts: &ScanOptions, report: &mut FileReport) {
    let entries = match list_entries(file) {
        Ok(e) => e,
        Err(err) => {
            report.error(ErrorKind::Archive, None, err.to_string());
            report.findings.push(format_error_finding(ctx, Locus::Offset(0), &err));
            return;
        }
    };
    for entry in &entries {
        let locus = Locus::entry(&entry.path, None);
        if entry.is_path_traversal() {
            report.findings.push(Finding::new(
                RuleId::ArchivePathTraversal,
                RuleId::ArchivePathTraversal.default_severity(),
                ctx.file,
                locus.clone(),
                format!("entry name {:?} escapes the archive root", entry.path),
                &entry.path,
            ));
        }
        if !entry.is_supported() {
            let what = if entry.encrypted { "encrypted".to_string() } else { format!("{:?} compression", entry.method) };
            report.findings.push(Finding::new(
                RuleId::ArchiveUnsupportedMethod,
                RuleId::ArchiveUnsupportedMethod.default_severity(),
                ctx.file,
                locus,
                format!("entry uses {what} and was not inspected"),
                "",
            ));
        }
    }
    let readable: Vec<_> = entries.iter().filter(|e| e.is_supported()).cloned().collect();
    for (entry, data) in find_pickle_payloads(&readable, file, opts.max_entry_bytes) {
        let ectx = FileContext { file: ctx.file, entry: Some(&entry.path) };
        match data {
            Ok(bytes) => {
                report.bytes_scanned += bytes.len() as u64;
                scan_pickle_bytes(&bytes, &ectx, policy, opts, report);
            }
            Err(err) => {
                report.error(ErrorKind::Archive, Some(Locus::entry(&entry.path, None)), err.to_string());
                report.findings.push(format_error_finding(ctx, Locus::entry(&entry.path, None), &err));
            }
        }
    }
    let cap = opts.max_entry_bytes.min(MODEL_CONFIG_CAP);
    for entry in readable.iter().filter(|e| e.path == "config.json") {
        let ectx = FileContext { file: ctx.file, entry: Some(&entry.path) };
        match read_entry(file, entry, cap) {
            Ok(bytes) => {
                report.bytes_scanned += bytes.len() as u64;
                let text = String::from_utf8_lossy(&bytes);
                report.findings.extend(keras_findings(&walk_config(&text, policy), policy, &ectx));
            }
            Err(err) => {
                report.error(ErrorKind::Config, Some(Locus::entry(&entry.path, None)), err.to_string());
                report.findings.push(format_error_finding(ctx, Locus::entry(&entry.path, None), &err));
            }
        }
    }
}

fn walk_config(text: &str, policy: &Policy) -> LayerWalk {
    match serde_json::from_str(text) {
        Ok(value) => walk_layers(&value, &policy.extra_custom_layer_classes),
        Err(e) => LayerWalk {
            layers: Vec::new(),
            anomalies: vec![KerasAnomaly::MalformedConfig { json_path: "$".into(), reason: format!("invalid JSON: {e}") }],
        },
    }
}

fn scan_h5<R: Read + Seek>(file: &mut R, ctx: &FileContext, policy: &Policy, opts: &ScanOptions, report: &mut FileReport) {
    let cap = opts.max_entry_bytes.min(MODEL_CONFIG_CAP);
    match extract_h5_model_config_capped(file, cap) {
        Ok(cfg) => {
            report.bytes_scanned = cfg.byte_range.1;
            report.findings.push(Finding::new(
                RuleId::H5HeuristicUsed,
                Severity::Info,
                ctx.file,
                Locus::Offset(cfg.byte_range.0),
                format!("model_config recovered by byte scan ({} bytes)", cfg.json_text.len()),
                "",
            ));
            report.findings.extend(keras_findings(&walk_config(&cfg.json_text, policy), policy, ctx));
        }
        Err(FormatError::ConfigNotFound) => {
            report.findings.push(Finding::new(
                RuleId::H5HeuristicUsed,
                Severity::Info,
                ctx.file,
                Locus::Offset(0),
                "no model_config attribute found; weights-only file assumed".into(),
                "",
            ));
        }
        Err(err) => {
            let locus = match &err {
                FormatError::UnbalancedJson { start_offset } => Locus::Offset(*start_offset),
                _ => Locus::Offset(0),
            };
            report.error(ErrorKind::Hdf5, Some(locus.clone()), err.to_string());
            report.findings.push(format_error_finding(ctx, locus, &err));
        }
    }
}

/// Files under `roots`, expanded recursively, sorted and deduplicated.
/// Unreadable directory entries come back as `Err`.
fn collect_files(roots: &[PathBuf], follow_symlinks: bool) -> Vec<Result<PathBuf, (PathBuf, io::Error)>> {
    let mut out = Vec::new();
    for root in roots {
        for item in walkdir::WalkDir::new(root).follow_links(follow_symlinks).follow_root_links(true) {
            match item {
                Ok(entry) => {
                    let ft = entry.file_type();
                    if ft.is_file() {
                        out.push(Ok(entry.into_path()));
                    }
                }
                Err(e) => {
                    let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.clone());
                    out.push(Err((path, e.into())));
                }
            }
        }
    }
    out.sort_by(|a, b| key(a).cmp(key(b)));
    out.dedup_by(|a, b| key(a) == key(b));
    out
}

fn key(item: &Result<PathBuf, (PathBuf, io::Error)>) -> &Path {
    match item {
        Ok(p) => p,
        Err((p, _)) => p,
    }
}

/// Scan every file under `roots` (files are scanned directly).
pub fn scan_tree(roots: &[PathBuf], policy: &Policy, opts: &ScanOptions) -> ScanReport {
    let items = collect_files(roots, opts.follow_symlinks);
    let run = || -> Vec<FileReport> {
        items
            .par_iter()
            .map(|item| match item {
                Ok(path) => scan_file(path, policy, opts),
                Err((path, e)) => FileReport::io_failure(&path.to_string_lossy().replace('\\', "/"), e),
            })
            .collect()
    };
    let files = match rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    ScanReport::new(files, policy, opts.threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sniff_kinds() {
        assert_eq!(sniff(b"PK\x03\x04rest").kind, Kind::ZipArchive);
        assert_eq!(sniff(b"PK\x05\x06").confidence, Confidence::Magic);
        assert_eq!(sniff(&HDF5_SIGNATURE).kind, Kind::Hdf5);
        assert_eq!(sniff(b"\x80\x04\x95"), FileKind { kind: Kind::PickleStream, confidence: Confidence::Heuristic });
        assert_eq!(sniff(b"").kind, Kind::Unknown);
        assert_eq!(sniff(b"plain text\n").kind, Kind::Unknown);
    }

    fn scan_bytes(bytes: &[u8]) -> FileReport {
        scan_reader(&mut io::Cursor::new(bytes), "mem", &Policy::default_policy(), &ScanOptions::default())
    }

    #[test]
    fn empty_is_unknown_info() {
        let r = scan_bytes(b"");
        assert_eq!(r.kind.kind, Kind::Unknown);
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].severity, Severity::Info);
        let report = ScanReport::new(vec![r], &Policy::default_policy(), Severity::Info);
        assert_eq!(report.exit_code(), 0);
    }

    #[test]
    fn truncated_pickle_keeps_events() {
        let r = scan_bytes(b"cos\nsystem\n(S'true # FIXTURE-MARKER'\ntR");
        let rules: Vec<_> = r.findings.iter().map(|f| f.rule_id).collect();
        assert!(rules.contains(&RuleId::PickleDangerousGlobal));
        assert!(rules.contains(&RuleId::PickleCall));
        assert!(rules.contains(&RuleId::ParseError));
        assert_eq!(r.errors.len(), 1);
    }

    #[test]
    fn concatenated_programs_not_trailing() {
        let r = scan_bytes(b"N.N.");
        assert!(r.findings.is_empty(), "{:?}", r.findings);
        let r = scan_bytes(b"N.\x00\x00");
        assert!(r.findings.iter().all(|f| f.rule_id == RuleId::PickleTrailingData));
    }

    #[test]
    fn oversize_pickle_is_capped() {
        let mut data = b"(".to_vec();
        data.extend(std::iter::repeat(b"N".as_slice()).take(100).flatten());
        data.extend(b"t.");
        let opts = ScanOptions { max_entry_bytes: 10, ..Default::default() };
        let r = scan_reader(&mut io::Cursor::new(&data), "big", &Policy::default_policy(), &opts);
        assert_eq!(r.bytes_scanned, 10);
        assert!(r.errors.iter().any(|e| e.kind == ErrorKind::Pickle));
    }

    #[test]
    fn exit_codes() {
        let policy = Policy::default_policy();
        let bad = scan_bytes(b"cos\nsystem\n(S'x'\ntR.");
        assert_eq!(ScanReport::new(vec![bad.clone()], &policy, Severity::High).exit_code(), 3);
        let io = FileReport::io_failure("gone", &io::Error::from(io::ErrorKind::NotFound));
        assert_eq!(ScanReport::new(vec![io.clone()], &policy, Severity::High).exit_code(), 2);
        assert_eq!(ScanReport::new(vec![scan_bytes(b"N.")], &policy, Severity::High).exit_code(), 0);
        assert_eq!(ScanReport::new(vec![], &policy, Severity::High).summary, Summary::default());
    }
}
