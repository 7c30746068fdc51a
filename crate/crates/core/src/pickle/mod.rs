//! Pickle stream disassembly and symbolic evaluation.

pub mod absvm;
pub mod disasm;
pub mod opcodes;
pub mod sniff;

pub use absvm::{
    call_root, evaluate, evaluate_lenient, summarize_call_chain, AbstractResult, AbstractValue, ArgSummary, CallVia,
    ContainerKind, EventKind, Literal, NodeId, SecurityEvent, ValueGraph, VmError, VmErrorKind, VmLimits,
};
pub use disasm::{
    disassemble, disassemble_concatenated, disassemble_prefix, Arg, Instruction, LimitKind, ParseError, ParseLimits,
    PickleProgram, SegmentError,
};
pub use opcodes::{lookup, opcode_table, ArgKind, OpcodeSpec};
