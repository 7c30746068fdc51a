use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{json, Value};

use super::ScanReport;
use crate::policy::{Locus, RuleId, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
    Sarif,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(OutputFormat::Text),
            "json" => Ok(OutputFormat::Json),
            "sarif" => Ok(OutputFormat::Sarif),
            _ => Err(format!("unknown format {s:?} (expected text, json or sarif)")),
        }
    }
}

pub fn render(report: &ScanReport, format: OutputFormat) -> Vec<u8> {
    match format {
        OutputFormat::Text => render_text(report).into_bytes(),
        OutputFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        OutputFormat::Sarif => {
            let mut out = serde_json::to_vec_pretty(&sarif(report)).expect("sarif serializes");
            out.push(b'\n');
            out
        }
    }
}

fn render_text(report: &ScanReport) -> String {
    let mut out = String::new();
    for file in &report.files {
        for f in &file.findings {
            let _ = writeln!(out, "{} {} {}:{} {}", f.severity, f.rule_id, file.path, f.locus, f.message);
        }
        for e in &file.errors {
            let at = e.locus.as_ref().map(|l| format!(":{l}")).unwrap_or_default();
            let _ = writeln!(out, "ERROR {} {}{at} {}", serde_kind(e.kind), file.path, e.message);
        }
    }
    let s = &report.summary;
    let _ = writeln!(
        out,
        "{} file(s): critical={} high={} medium={} low={} info={}",
        report.files.len(),
        s.critical,
        s.high,
        s.medium,
        s.low,
        s.info
    );
    out
}

fn serde_kind(kind: super::ErrorKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn sarif_level(sev: Severity) -> &'static str {
    match sev {
        Severity::Info | Severity::Low => "note",
        Severity::Medium => "warning",
        Severity::High | Severity::Critical => "error",
    }
}

fn sarif(report: &ScanReport) -> Value {
    let rules: Vec<Value> = RuleId::ALL
        .iter()
        .map(|r| {
            json!({
                "id": r.as_str(),
                "shortDescription": {"text": r.description()},
                "defaultConfiguration": {"level": sarif_level(r.default_severity())},
            })
        })
        .collect();
    let mut results = Vec::new();
    for file in &report.files {
        for f in &file.findings {
            let mut physical = json!({"artifactLocation": {"uri": file.path}});
            if let Locus::Offset(o) = f.locus {
                physical["region"] = json!({"byteOffset": o});
            }
            let index = RuleId::ALL.iter().position(|r| *r == f.rule_id).unwrap_or(0);
            results.push(json!({
                "ruleId": f.rule_id.as_str(),
                "ruleIndex": index,
                "level": sarif_level(f.severity),
                "message": {"text": f.message},
                "locations": [{
                    "physicalLocation": physical,
                    "logicalLocations": [{"fullyQualifiedName": f.locus.to_string()}],
                }],
                "properties": {"severity": f.severity.as_str(), "evidence": f.evidence},
            }));
        }
    }
    json!({
        "version": "2.1.0",
        "runs": [{
            "tool": {"driver": {
                "name": "modelsentry",
                "version": report.version,
                "rules": rules,
            }},
            "properties": {"policy_digest": report.policy_digest},
            "results": results,
        }],
    })
}
