//! Symbolic re-execution of a disassembled pickle program.
//!
//! Values live in an arena ([`ValueGraph`]); the stack, metastack and memo
//! hold [`NodeId`]s, so aliasing introduced by the memo is shared identity in
//! the arena and mutation (APPENDS, SETITEMS, BUILD) is visible through every
//! alias, as it is in the real loader. Nothing is imported, constructed or
//! called.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use num_bigint::BigInt;
use serde::Serialize;
use thiserror::Error;

use super::disasm::{Arg, Instruction, PickleProgram};
use super::opcodes::op;
use crate::util::{escape_bytes, truncate_str};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContainerKind {
    List,
    Tuple,
    Dict,
    Set,
    FrozenSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CallVia {
    Reduce,
    NewObj,
    NewObjEx,
    Obj,
    Inst,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    None,
    Bool(bool),
    Int(i64),
    BigInt(BigInt),
    Float(f64),
    Bytes(Vec<u8>),
    ByteArray(Vec<u8>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AbstractValue {
    GlobalRef { module: String, name: String },
    /// STACK_GLOBAL whose operands were not two literal strings.
    DynamicGlobalRef { module: NodeId, name: NodeId },
    CallResult {
        callee: NodeId,
        args: Vec<NodeId>,
        via: CallVia,
        /// Items appended, set or built into the call result after construction.
        extra: Vec<NodeId>,
    },
    /// Dict elements alternate key, value.
    Container { kind: ContainerKind, elements: Vec<NodeId> },
    Primitive(Literal),
    PersistentRef(NodeId),
    ExtensionRef(i64),
    Opaque,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValueGraph {
    nodes: Vec<AbstractValue>,
}

impl ValueGraph {
    pub fn get(&self, id: NodeId) -> &AbstractValue {
        &self.nodes[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add(&mut self, value: AbstractValue) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(value);
        id
    }

    fn get_mut(&mut self, id: NodeId) -> &mut AbstractValue {
        &mut self.nodes[id.0 as usize]
    }

    pub fn text(&self, id: NodeId) -> Option<&str> {
        match self.get(id) {
            AbstractValue::Primitive(Literal::Text(s)) => Some(s),
            _ => None,
        }
    }

    /// Short human rendering of a node, bounded in depth and width.
    pub fn describe(&self, id: NodeId, max_literal: usize) -> String {
        let mut out = String::new();
        self.describe_into(id, max_literal, 3, &mut out);
        out
    }

    fn describe_into(&self, id: NodeId, max_literal: usize, depth: u32, out: &mut String) {
        match self.get(id) {
            AbstractValue::GlobalRef { module, name } => {
                let _ = write!(out, "{module}.{name}");
            }
            AbstractValue::DynamicGlobalRef { .. } => out.push_str("<dynamic global>"),
            AbstractValue::CallResult { callee, args, .. } => {
                if depth == 0 {
                    out.push_str("<call>");
                    return;
                }
                self.describe_into(*callee, max_literal, depth - 1, out);
                out.push('(');
                for (i, a) in args.iter().take(8).enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    self.describe_into(*a, max_literal, depth - 1, out);
                }
                if args.len() > 8 {
                    out.push_str(", ...");
                }
                out.push(')');
            }
            AbstractValue::Container { kind, elements } => {
                let _ = write!(out, "<{} of {}>", container_name(*kind), elements.len());
            }
            AbstractValue::Primitive(lit) => match lit {
                Literal::None => out.push_str("None"),
                Literal::Bool(b) => out.push_str(if *b { "True" } else { "False" }),
                Literal::Int(v) => {
                    let _ = write!(out, "{v}");
                }
                Literal::BigInt(v) => {
                    let _ = write!(out, "{v}");
                }
                Literal::Float(v) => {
                    let _ = write!(out, "{v:?}");
                }
                Literal::Bytes(b) | Literal::ByteArray(b) => {
                    let _ = write!(out, "b\"{}\"", escape_bytes(b, max_literal));
                }
                Literal::Text(s) => {
                    let _ = write!(out, "{:?}", truncate_str(s, max_literal));
                    if s.len() > max_literal {
                        out.push_str("...");
                    }
                }
            },
            AbstractValue::PersistentRef(_) => out.push_str("<persistent id>"),
            AbstractValue::ExtensionRef(code) => {
                let _ = write!(out, "<extension {code}>");
            }
            AbstractValue::Opaque => out.push_str("<opaque>"),
        }
    }
}

fn container_name(kind: ContainerKind) -> &'static str {
    match kind {
        ContainerKind::List => "list",
        ContainerKind::Tuple => "tuple",
        ContainerKind::Dict => "dict",
        ContainerKind::Set => "set",
        ContainerKind::FrozenSet => "frozenset",
    }
}

/// Bounded rendering of a call's arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArgSummary {
    pub text: String,
    /// Total byte length of the literal text and bytes arguments before truncation.
    pub total_literal_len: u64,
    pub truncated: bool,
}

pub const ARG_SUMMARY_LITERAL_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    GlobalResolved { module: String, name: String },
    DynamicGlobal { node: NodeId },
    CallMade { callee: NodeId, result: NodeId, via: CallVia, argc: usize, arg_summary: ArgSummary },
    StateBuilt { target: NodeId, state: NodeId },
    PersistentId { id_summary: String },
    ExtensionUsed { code: i64 },
    ResidualStack { depth: usize },
    TrailingData { byte_count: u64 },
    FrameMismatch { detail: String },
    OutOfBandBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityEvent {
    pub kind: EventKind,
    pub at_offset: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VmLimits {
    pub max_memo_entries: usize,
    pub max_nodes: usize,
}

impl Default for VmLimits {
    fn default() -> Self {
        Self { max_memo_entries: 10_000_000, max_nodes: 20_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmErrorKind {
    #[error("stack underflow")]
    StackUnderflow,
    #[error("memo has no entry {0}")]
    MemoMiss(i64),
    #[error("no matching MARK")]
    BadMark,
    #[error("{0} limit exceeded")]
    LimitExceeded(&'static str),
    #[error("{0}")]
    Malformed(String),
    #[error("program ended without STOP")]
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct VmError {
    pub kind: VmErrorKind,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbstractResult {
    pub graph: ValueGraph,
    /// Value STOP would hand back to the loader; absent when evaluation halted.
    pub root: Option<NodeId>,
    pub events: Vec<SecurityEvent>,
    pub memo_size: usize,
    pub halted: Option<VmError>,
}

/// Evaluate a complete program; any VM error is returned as `Err`.
pub fn evaluate(program: &PickleProgram, limits: &VmLimits) -> Result<AbstractResult, VmError> {
    let result = evaluate_lenient(program, limits);
    match result.halted {
        Some(err) => Err(err),
        None => Ok(result),
    }
}

/// Evaluate as far as possible, keeping the events emitted before any error.
///
/// Works on incomplete programs too: everything a loader would have run before
/// hitting the damaged part is still reported.
pub fn evaluate_lenient(program: &PickleProgram, limits: &VmLimits) -> AbstractResult {
    let mut vm = Machine {
        graph: ValueGraph::default(),
        stack: Vec::new(),
        metastack: Vec::new(),
        memo: HashMap::new(),
        events: Vec::new(),
        limits,
        frame_end: None,
    };
    let mut root = None;
    let mut halted = None;
    for ins in &program.instructions {
        match vm.step(ins) {
            Ok(Some(value)) => {
                root = Some(value);
                let depth = vm.stack.len() + vm.metastack.iter().map(|frame| frame.len() + 1).sum::<usize>();
                if depth > 0 {
                    vm.emit(EventKind::ResidualStack { depth }, ins.offset);
                }
                if program.trailing_bytes > 0 {
                    vm.emit(EventKind::TrailingData { byte_count: program.trailing_bytes }, ins.offset);
                }
                if let Some(end) = vm.frame_end {
                    if end > program.end() + program.trailing_bytes {
                        vm.emit(
                            EventKind::FrameMismatch { detail: format!("frame extends to {end}, past end of input") },
                            ins.offset,
                        );
                    }
                }
                break;
            }
            Ok(None) => {}
            Err(kind) => {
                halted = Some(VmError { kind, offset: ins.offset });
                break;
            }
        }
    }
    if root.is_none() && halted.is_none() {
        halted = Some(VmError { kind: VmErrorKind::Incomplete, offset: program.end() });
    }
    AbstractResult { memo_size: vm.memo.len(), graph: vm.graph, root, events: vm.events, halted }
}

struct Machine<'a> {
    graph: ValueGraph,
    stack: Vec<NodeId>,
    metastack: Vec<Vec<NodeId>>,
    memo: HashMap<i64, NodeId>,
    events: Vec<SecurityEvent>,
    limits: &'a VmLimits,
    frame_end: Option<u64>,
}

type Step = Result<Option<NodeId>, VmErrorKind>;

impl Machine<'_> {
    fn emit(&mut self, kind: EventKind, at_offset: u64) {
        self.events.push(SecurityEvent { kind, at_offset });
    }

    fn node(&mut self, value: AbstractValue) -> Result<NodeId, VmErrorKind> {
        if self.graph.len() >= self.limits.max_nodes {
            return Err(VmErrorKind::LimitExceeded("node count"));
        }
        Ok(self.graph.add(value))
    }

    fn push(&mut self, value: AbstractValue) -> Result<(), VmErrorKind> {
        let id = self.node(value)?;
        self.stack.push(id);
        Ok(())
    }

    fn push_literal(&mut self, lit: Literal) -> Result<(), VmErrorKind> {
        self.push(AbstractValue::Primitive(lit))
    }

    fn pop(&mut self) -> Result<NodeId, VmErrorKind> {
        self.stack.pop().ok_or(VmErrorKind::StackUnderflow)
    }

    fn top(&self) -> Result<NodeId, VmErrorKind> {
        self.stack.last().copied().ok_or(VmErrorKind::StackUnderflow)
    }

    fn pop_mark(&mut self) -> Result<Vec<NodeId>, VmErrorKind> {
        let outer = self.metastack.pop().ok_or(VmErrorKind::BadMark)?;
        Ok(std::mem::replace(&mut self.stack, outer))
    }

    fn memo_put(&mut self, index: i64) -> Result<(), VmErrorKind> {
        if index < 0 {
            return Err(VmErrorKind::Malformed(format!("negative memo index {index}")));
        }
        let top = self.top()?;
        if !self.memo.contains_key(&index) && self.memo.len() >= self.limits.max_memo_entries {
            return Err(VmErrorKind::LimitExceeded("memo size"));
        }
        self.memo.insert(index, top);
        Ok(())
    }

    fn memo_get(&mut self, index: i64) -> Result<(), VmErrorKind> {
        let id = *self.memo.get(&index).ok_or(VmErrorKind::MemoMiss(index))?;
        self.stack.push(id);
        Ok(())
    }

    fn container(&mut self, kind: ContainerKind, elements: Vec<NodeId>) -> Result<(), VmErrorKind> {
        self.push(AbstractValue::Container { kind, elements })
    }

    /// Add items to the container (or call result) at `target`.
    fn extend(&mut self, target: NodeId, items: Vec<NodeId>, want: ContainerKind) {
        match self.graph.get_mut(target) {
            AbstractValue::Container { kind, elements } if *kind == want => elements.extend(items),
            AbstractValue::CallResult { extra, .. } => extra.extend(items),
            // The real loader would raise here; keep going so later opcodes are still seen.
            _ => {}
        }
    }

    fn call(&mut self, callee: NodeId, args: Vec<NodeId>, via: CallVia, offset: u64) -> Result<NodeId, VmErrorKind> {
        let arg_summary = summarize_args(&self.graph, &args);
        let argc = args.len();
        let result = self.node(AbstractValue::CallResult { callee, args, via, extra: Vec::new() })?;
        self.emit(EventKind::CallMade { callee, result, via, argc, arg_summary }, offset);
        Ok(result)
    }

    /// Elements of an argument tuple, or the value itself when it is not a tuple.
    fn call_args(&self, args: NodeId) -> Vec<NodeId> {
        match self.graph.get(args) {
            AbstractValue::Container { kind: ContainerKind::Tuple, elements } => elements.clone(),
            _ => vec![args],
        }
    }

    fn track_frame(&mut self, ins: &Instruction) {
        if ins.opcode.code == op::FRAME {
            if let Some(end) = self.frame_end {
                if ins.offset < end {
                    self.emit(
                        EventKind::FrameMismatch { detail: format!("new frame at {} before end of frame at {end}", ins.offset) },
                        ins.offset,
                    );
                }
            }
            let len = ins.arg.as_i64().map_or(u64::MAX, |v| v as u64);
            self.frame_end = Some(ins.end().saturating_add(len));
            return;
        }
        if let Some(end) = self.frame_end {
            if ins.offset >= end {
                self.frame_end = None;
            } else if ins.end() > end {
                self.emit(
                    EventKind::FrameMismatch { detail: format!("opcode straddles frame end at {end}") },
                    ins.offset,
                );
                self.frame_end = None;
            }
        }
    }

    fn step(&mut self, ins: &Instruction) -> Step {
        self.track_frame(ins);
        let offset = ins.offset;
        let code = ins.opcode.code;
        match code {
            op::STOP => return self.pop().map(Some),
            op::PROTO | op::FRAME => {}
            op::NONE => self.push_literal(Literal::None)?,
            op::NEWTRUE => self.push_literal(Literal::Bool(true))?,
            op::NEWFALSE => self.push_literal(Literal::Bool(false))?,
            op::INT | op::BININT | op::BININT1 | op::BININT2 | op::LONG | op::LONG1 | op::LONG4 => {
                let lit = match &ins.arg {
                    Arg::Bool(b) => Literal::Bool(*b),
                    Arg::Int(v) => Literal::Int(*v),
                    Arg::BigInt(v) => Literal::BigInt(v.clone()),
                    other => return Err(VmErrorKind::Malformed(format!("unexpected integer argument {other:?}"))),
                };
                self.push_literal(lit)?;
            }
            op::FLOAT | op::BINFLOAT => {
                let Arg::Float(v) = ins.arg else { unreachable!("float opcodes decode to floats") };
                self.push_literal(Literal::Float(v))?;
            }
            op::STRING | op::BINSTRING | op::SHORT_BINSTRING | op::UNICODE | op::SHORT_BINUNICODE | op::BINUNICODE
            | op::BINUNICODE8 => {
                let Arg::Text(s) = &ins.arg else { unreachable!("string opcodes decode to text") };
                self.push_literal(Literal::Text(s.clone()))?;
            }
            op::BINBYTES | op::SHORT_BINBYTES | op::BINBYTES8 => {
                let Arg::Bytes(b) = &ins.arg else { unreachable!("bytes opcodes decode to bytes") };
                self.push_literal(Literal::Bytes(b.clone()))?;
            }
            op::BYTEARRAY8 => {
                let Arg::Bytes(b) = &ins.arg else { unreachable!("bytes opcodes decode to bytes") };
                self.push_literal(Literal::ByteArray(b.clone()))?;
            }
            op::NEXT_BUFFER => {
                self.emit(EventKind::OutOfBandBuffer, offset);
                self.push(AbstractValue::Opaque)?;
            }
            op::READONLY_BUFFER => {
                self.emit(EventKind::OutOfBandBuffer, offset);
                self.top()?;
            }
            op::EMPTY_LIST => self.container(ContainerKind::List, Vec::new())?,
            op::EMPTY_TUPLE => self.container(ContainerKind::Tuple, Vec::new())?,
            op::EMPTY_DICT => self.container(ContainerKind::Dict, Vec::new())?,
            op::EMPTY_SET => self.container(ContainerKind::Set, Vec::new())?,
            op::LIST => {
                let items = self.pop_mark()?;
                self.container(ContainerKind::List, items)?;
            }
            op::TUPLE => {
                let items = self.pop_mark()?;
                self.container(ContainerKind::Tuple, items)?;
            }
            op::TUPLE1 | op::TUPLE2 | op::TUPLE3 => {
                let n = (code - op::TUPLE1 + 1) as usize;
                if self.stack.len() < n {
                    return Err(VmErrorKind::StackUnderflow);
                }
                let items = self.stack.split_off(self.stack.len() - n);
                self.container(ContainerKind::Tuple, items)?;
            }
            op::DICT => {
                let items = self.pop_mark()?;
                if items.len() % 2 != 0 {
                    return Err(VmErrorKind::Malformed("odd number of items for DICT".into()));
                }
                self.container(ContainerKind::Dict, items)?;
            }
            op::FROZENSET => {
                let items = self.pop_mark()?;
                self.container(ContainerKind::FrozenSet, items)?;
            }
            op::APPEND => {
                let value = self.pop()?;
                let target = self.top()?;
                self.extend(target, vec![value], ContainerKind::List);
            }
            op::APPENDS => {
                let items = self.pop_mark()?;
                let target = self.top()?;
                self.extend(target, items, ContainerKind::List);
            }
            op::SETITEM => {
                let value = self.pop()?;
                let key = self.pop()?;
                let target = self.top()?;
                self.extend(target, vec![key, value], ContainerKind::Dict);
            }
            op::SETITEMS => {
                let items = self.pop_mark()?;
                if items.len() % 2 != 0 {
                    return Err(VmErrorKind::Malformed("odd number of items for SETITEMS".into()));
                }
                let target = self.top()?;
                self.extend(target, items, ContainerKind::Dict);
            }
            op::ADDITEMS => {
                let items = self.pop_mark()?;
                let target = self.top()?;
                self.extend(target, items, ContainerKind::Set);
            }
            op::POP => {
                if self.stack.pop().is_none() {
                    self.pop_mark()?;
                }
            }
            op::POP_MARK => {
                self.pop_mark()?;
            }
            op::DUP => {
                let top = self.top()?;
                self.stack.push(top);
            }
            op::MARK => {
                let inner = std::mem::take(&mut self.stack);
                self.metastack.push(inner);
            }
            op::GET | op::BINGET | op::LONG_BINGET => {
                let index = memo_index(&ins.arg)?;
                self.memo_get(index)?;
            }
            op::PUT | op::BINPUT | op::LONG_BINPUT => {
                let index = memo_index(&ins.arg)?;
                self.memo_put(index)?;
            }
            op::MEMOIZE => {
                let index = self.memo.len() as i64;
                self.memo_put(index)?;
            }
            op::GLOBAL => {
                let Arg::Pair(module, name) = &ins.arg else { unreachable!("GLOBAL decodes to a pair") };
                self.emit(EventKind::GlobalResolved { module: module.clone(), name: name.clone() }, offset);
                self.push(AbstractValue::GlobalRef { module: module.clone(), name: name.clone() })?;
            }
            op::STACK_GLOBAL => {
                let name = self.pop()?;
                let module = self.pop()?;
                match (self.graph.text(module), self.graph.text(name)) {
                    (Some(m), Some(n)) => {
                        let (m, n) = (m.to_owned(), n.to_owned());
                        self.emit(EventKind::GlobalResolved { module: m.clone(), name: n.clone() }, offset);
                        self.push(AbstractValue::GlobalRef { module: m, name: n })?;
                    }
                    _ => {
                        let node = self.node(AbstractValue::DynamicGlobalRef { module, name })?;
                        self.emit(EventKind::DynamicGlobal { node }, offset);
                        self.stack.push(node);
                    }
                }
            }
            op::REDUCE => {
                let args = self.pop()?;
                let callee = self.pop()?;
                let args = self.call_args(args);
                let result = self.call(callee, args, CallVia::Reduce, offset)?;
                self.stack.push(result);
            }
            op::NEWOBJ => {
                let args = self.pop()?;
                let cls = self.pop()?;
                let args = self.call_args(args);
                let result = self.call(cls, args, CallVia::NewObj, offset)?;
                self.stack.push(result);
            }
            op::NEWOBJ_EX => {
                let kwargs = self.pop()?;
                let args = self.pop()?;
                let cls = self.pop()?;
                let mut all = self.call_args(args);
                all.push(kwargs);
                let result = self.call(cls, all, CallVia::NewObjEx, offset)?;
                self.stack.push(result);
            }
            op::OBJ => {
                let mut items = self.pop_mark()?;
                if items.is_empty() {
                    return Err(VmErrorKind::StackUnderflow);
                }
                let cls = items.remove(0);
                let result = self.call(cls, items, CallVia::Obj, offset)?;
                self.stack.push(result);
            }
            op::INST => {
                let Arg::Pair(module, name) = &ins.arg else { unreachable!("INST decodes to a pair") };
                let args = self.pop_mark()?;
                let cls = self.node(AbstractValue::GlobalRef { module: module.clone(), name: name.clone() })?;
                let result = self.call(cls, args, CallVia::Inst, offset)?;
                self.stack.push(result);
            }
            op::BUILD => {
                let state = self.pop()?;
                let target = self.top()?;
                if let AbstractValue::CallResult { extra, .. } = self.graph.get_mut(target) {
                    extra.push(state);
                }
                self.emit(EventKind::StateBuilt { target, state }, offset);
            }
            op::PERSID => {
                let Arg::Text(pid) = &ins.arg else { unreachable!("PERSID decodes to text") };
                let id_summary = format!("{:?}", truncate_str(pid, 256));
                let pid = self.node(AbstractValue::Primitive(Literal::Text(pid.clone())))?;
                self.emit(EventKind::PersistentId { id_summary }, offset);
                self.push(AbstractValue::PersistentRef(pid))?;
            }
            op::BINPERSID => {
                let pid = self.pop()?;
                let id_summary = self.graph.describe(pid, 256);
                self.emit(EventKind::PersistentId { id_summary }, offset);
                self.push(AbstractValue::PersistentRef(pid))?;
            }
            op::EXT1 | op::EXT2 | op::EXT4 => {
                let code = ins.arg.as_i64().unwrap_or_default();
                self.emit(EventKind::ExtensionUsed { code }, offset);
                self.push(AbstractValue::ExtensionRef(code))?;
            }
            other => return Err(VmErrorKind::Malformed(format!("unhandled opcode {other:#04x}"))),
        }
        Ok(None)
    }
}

fn memo_index(arg: &Arg) -> Result<i64, VmErrorKind> {
    match arg {
        Arg::Int(v) => Ok(*v),
        Arg::Bool(b) => Ok(*b as i64),
        _ => Err(VmErrorKind::Malformed("memo index out of range".into())),
    }
}

fn summarize_args(graph: &ValueGraph, args: &[NodeId]) -> ArgSummary {
    let mut total = 0u64;
    let mut truncated = false;
    let mut parts = Vec::with_capacity(args.len().min(16));
    for &a in args.iter().take(16) {
        match graph.get(a) {
            AbstractValue::Primitive(Literal::Text(s)) => {
                total += s.len() as u64;
                truncated |= s.len() > ARG_SUMMARY_LITERAL_CAP;
            }
            AbstractValue::Primitive(Literal::Bytes(b) | Literal::ByteArray(b)) => {
                total += b.len() as u64;
                truncated |= b.len() > ARG_SUMMARY_LITERAL_CAP;
            }
            _ => {}
        }
        parts.push(graph.describe(a, ARG_SUMMARY_LITERAL_CAP));
    }
    if args.len() > 16 {
        parts.push("...".into());
        truncated = true;
    }
    ArgSummary { text: parts.join(", "), total_literal_len: total, truncated }
}

pub const DYNAMIC_ROOT: (&str, &str) = ("<dynamic>", "<dynamic>");
pub const OPAQUE_ROOT: (&str, &str) = ("<opaque>", "<opaque>");

/// Root (module, name) of a callee chain: follows call results down to the
/// callable that was ultimately invoked.
pub fn call_root(graph: &ValueGraph, mut callee: NodeId) -> (String, String) {
    let mut seen = HashSet::new();
    loop {
        if !seen.insert(callee) {
            return (OPAQUE_ROOT.0.into(), OPAQUE_ROOT.1.into());
        }
        match graph.get(callee) {
            AbstractValue::CallResult { callee: inner, .. } => callee = *inner,
            AbstractValue::GlobalRef { module, name } => return (module.clone(), name.clone()),
            AbstractValue::DynamicGlobalRef { .. } => return (DYNAMIC_ROOT.0.into(), DYNAMIC_ROOT.1.into()),
            _ => return (OPAQUE_ROOT.0.into(), OPAQUE_ROOT.1.into()),
        }
    }
}

/// Pre-order list of the callee roots of every call result reachable from `value`.
///
/// Nested callee chains (`f(a)(b)`) contribute only their innermost root.
pub fn summarize_call_chain(graph: &ValueGraph, value: NodeId) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut pending = vec![value];
    while let Some(id) = pending.pop() {
        if !seen.insert(id) {
            continue;
        }
        let mut children: Vec<NodeId> = Vec::new();
        match graph.get(id) {
            AbstractValue::CallResult { .. } => {
                let mut cur = id;
                while let AbstractValue::CallResult { callee, args, extra, .. } = graph.get(cur) {
                    seen.insert(cur);
                    children.extend(args.iter().chain(extra));
                    cur = *callee;
                    if seen.contains(&cur) {
                        break;
                    }
                }
                out.push(call_root(graph, id_callee(graph, id)));
            }
            AbstractValue::Container { elements, .. } => children.extend(elements),
            AbstractValue::PersistentRef(inner) => children.push(*inner),
            AbstractValue::DynamicGlobalRef { module, name } => children.extend([*module, *name]),
            _ => {}
        }
        pending.extend(children.into_iter().rev());
    }
    out
}

fn id_callee(graph: &ValueGraph, id: NodeId) -> NodeId {
    match graph.get(id) {
        AbstractValue::CallResult { callee, .. } => *callee,
        _ => id,
    }
}
