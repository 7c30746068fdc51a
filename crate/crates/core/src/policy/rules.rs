//! Mapping from analysis events to findings.

use crate::keras::{KerasAnomaly, LayerWalk, PayloadEncoding};
use crate::pickle::{
    summarize_call_chain, AbstractResult, EventKind, ParseError, SecurityEvent, VmError, VmErrorKind,
};

use super::{classify_global, Disposition, Finding, Locus, Policy, RuleId, Severity};
use crate::pickle::absvm::{DYNAMIC_ROOT, OPAQUE_ROOT};

/// Where the analysed bytes live: the scanned file, and optionally an entry
/// inside it.
#[derive(Debug, Clone, Copy)]
pub struct FileContext<'a> {
    pub file: &'a str,
    pub entry: Option<&'a str>,
}

impl<'a> FileContext<'a> {
    pub fn file(file: &'a str) -> Self {
        FileContext { file, entry: None }
    }

    pub fn offset(&self, offset: u64) -> Locus {
        self.wrap(Locus::Offset(offset))
    }

    pub fn json_path(&self, path: &str) -> Locus {
        self.wrap(Locus::JsonPath(path.to_string()))
    }

    fn wrap(&self, inner: Locus) -> Locus {
        match self.entry {
            Some(e) => Locus::entry(e, Some(inner)),
            None => inner,
        }
    }

    fn finding(&self, rule: RuleId, sev: Severity, locus: Locus, message: String, evidence: &str) -> Finding {
        Finding::new(rule, sev, self.file, locus, message, evidence)
    }
}

/// Callee roots reachable from each event; non-empty only for calls, where
/// the first element is the called function's own root.
pub fn call_roots(result: &AbstractResult) -> Vec<Vec<(String, String)>> {
    result
        .events
        .iter()
        .map(|ev| match &ev.kind {
            EventKind::CallMade { result: node, .. } => summarize_call_chain(&result.graph, *node),
            _ => Vec::new(),
        })
        .collect()
}

fn root_severity(module: &str, name: &str, policy: &Policy) -> Option<Severity> {
    if (module, name) == DYNAMIC_ROOT {
        return Some(policy.dynamic_global_severity);
    }
    if (module, name) == OPAQUE_ROOT {
        return Some(policy.unknown_global_severity);
    }
    match classify_global(module, name, policy).0 {
        Disposition::Deny(sev) => Some(sev),
        Disposition::Unknown => Some(policy.unknown_global_severity),
        Disposition::Allow => None,
    }
}

/// Findings for one evaluated program, in event order.
pub fn apply_rules(
    events: &[SecurityEvent],
    call_roots: &[Vec<(String, String)>],
    policy: &Policy,
    ctx: &FileContext,
) -> Vec<Finding> {
    let mut out = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        let locus = ctx.offset(ev.at_offset);
        match &ev.kind {
            EventKind::GlobalResolved { module, name } => {
                let (disposition, matched) = classify_global(module, name, policy);
                let (sev, why) = match disposition {
                    Disposition::Allow => continue,
                    Disposition::Deny(sev) => (sev, format!("denied by policy entry {}", matched.unwrap_or_default())),
                    Disposition::Unknown => (policy.unknown_global_severity, "not in the policy allowlist".to_string()),
                };
                out.push(ctx.finding(
                    RuleId::PickleDangerousGlobal,
                    sev,
                    locus,
                    format!("imports {module}.{name}: {why}"),
                    &format!("{module} {name}"),
                ));
            }
            EventKind::CallMade { via, argc, arg_summary, .. } => {
                let Some((module, name)) = call_roots.get(i).and_then(|r| r.first()) else { continue };
                let Some(root_sev) = root_severity(module, name, policy) else { continue };
                let sev = root_sev.max(Severity::Medium);
                let via = serde_json::to_value(via).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
                out.push(ctx.finding(
                    RuleId::PickleCall,
                    sev,
                    locus,
                    format!("calls {module}.{name} with {argc} argument(s) via {via}"),
                    &format!("{module}.{name}({})", arg_summary.text),
                ));
            }
            EventKind::ResidualStack { depth } => out.push(ctx.finding(
                RuleId::PickleResidualStack,
                policy.residual_stack_severity,
                locus,
                format!("{depth} value(s) left on the stack at STOP"),
                &format!("depth={depth}"),
            )),
            EventKind::DynamicGlobal { .. } => out.push(ctx.finding(
                RuleId::PickleDynamicGlobal,
                policy.dynamic_global_severity,
                locus,
                "STACK_GLOBAL with module or name computed at load time".into(),
                "",
            )),
            EventKind::ExtensionUsed { code } => out.push(ctx.finding(
                RuleId::PickleDangerousGlobal,
                policy.unknown_global_severity,
                locus,
                format!("extension code {code} resolves through the loader's extension registry"),
                &format!("ext={code}"),
            )),
            EventKind::TrailingData { byte_count } => out.push(ctx.finding(
                RuleId::PickleTrailingData,
                Severity::Info,
                locus,
                format!("{byte_count} byte(s) after STOP"),
                "",
            )),
            EventKind::FrameMismatch { detail } => {
                out.push(ctx.finding(RuleId::PickleFrameMismatch, Severity::Info, locus, detail.clone(), ""))
            }
            EventKind::OutOfBandBuffer => out.push(ctx.finding(
                RuleId::PickleOobBuffer,
                Severity::Info,
                locus,
                "out-of-band buffer reference".into(),
                "",
            )),
            EventKind::StateBuilt { .. } | EventKind::PersistentId { .. } => {}
        }
    }
    out
}

/// Rule findings for an evaluation result, plus a PARSE_ERROR when the
/// evaluation halted on anything but an incomplete program.
pub fn pickle_findings(result: &AbstractResult, policy: &Policy, ctx: &FileContext) -> Vec<Finding> {
    let roots = call_roots(result);
    let mut out = apply_rules(&result.events, &roots, policy, ctx);
    if let Some(err) = &result.halted {
        if err.kind != VmErrorKind::Incomplete {
            out.push(vm_error_finding(err, ctx));
        }
    }
    out
}

pub fn parse_error_finding(err: &ParseError, ctx: &FileContext) -> Finding {
    ctx.finding(RuleId::ParseError, RuleId::ParseError.default_severity(), ctx.offset(err.offset()), format!("pickle parse error: {err}"), "")
}

pub fn vm_error_finding(err: &VmError, ctx: &FileContext) -> Finding {
    ctx.finding(
        RuleId::ParseError,
        RuleId::ParseError.default_severity(),
        ctx.offset(err.offset),
        format!("evaluation stopped: {err}"),
        "",
    )
}

/// Findings for a walked Keras config.
pub fn keras_findings(walk: &LayerWalk, policy: &Policy, ctx: &FileContext) -> Vec<Finding> {
    let mut out = Vec::new();
    for layer in &walk.layers {
        let is_lambda = layer.class_name == "Lambda";
        if !is_lambda && !policy.extra_custom_layer_classes.contains(&layer.class_name) {
            continue;
        }
        let by_ref = layer.payload.as_ref().is_some_and(|p| p.encoding == PayloadEncoding::ReferenceByName);
        let (rule, sev) = match (is_lambda, by_ref) {
            (true, true) => (RuleId::KerasLambdaRef, policy.lambda_severity.min(Severity::Medium)),
            (true, false) => (RuleId::KerasLambdaCode, policy.lambda_severity),
            (false, true) => (RuleId::KerasCustomLayer, policy.lambda_severity.min(Severity::Medium)),
            (false, false) => (RuleId::KerasCustomLayer, policy.lambda_severity),
        };
        let evidence = match &layer.payload {
            Some(p) => format!(
                "encoding={} length={} sha256={} preview={}",
                p.encoding.as_str(),
                p.decoded_length,
                p.digest,
                p.preview
            ),
            None => String::new(),
        };
        let what = match &layer.payload {
            Some(p) if p.encoding == PayloadEncoding::ReferenceByName => "references a function by name".to_string(),
            Some(p) => format!("carries a {}-byte serialized function", p.decoded_length),
            None => "has no readable function payload".to_string(),
        };
        out.push(ctx.finding(
            rule,
            sev,
            ctx.json_path(&layer.json_path),
            format!("{} layer {:?} {what}", layer.class_name, layer.layer_name),
            &evidence,
        ));
    }
    for anomaly in &walk.anomalies {
        let path = match anomaly {
            KerasAnomaly::MalformedConfig { json_path, .. }
            | KerasAnomaly::Base64Error { json_path }
            | KerasAnomaly::LimitExceeded { json_path, .. } => json_path,
        };
        out.push(ctx.finding(
            RuleId::KerasConfigAnomaly,
            RuleId::KerasConfigAnomaly.default_severity(),
            ctx.json_path(path),
            anomaly.describe(),
            "",
        ));
    }
    out
}
