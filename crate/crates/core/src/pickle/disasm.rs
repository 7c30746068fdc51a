//! Total, non-executing disassembler for pickle streams.
//!
//! Argument decoding follows what the reference loader accepts, which is in a
//! few places more permissive than its disassembler (base-prefixed `INT`
//! lines, for instance).

use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use super::opcodes::{self, op, ArgKind, OpcodeSpec, HIGHEST_PROTOCOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseLimits {
    pub max_instructions: usize,
    pub max_arg_len: u64,
    pub max_stream_len: u64,
}

impl Default for ParseLimits {
    fn default() -> Self {
        Self {
            max_instructions: 1_000_000,
            max_arg_len: 256 * 1024 * 1024,
            max_stream_len: 4 * 1024 * 1024 * 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitKind {
    Instructions,
    ArgumentLength,
    StreamLength,
}

impl fmt::Display for LimitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LimitKind::Instructions => "instruction count",
            LimitKind::ArgumentLength => "argument length",
            LimitKind::StreamLength => "stream length",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty stream")]
    EmptyStream,
    #[error("unknown opcode {byte:#04x} at offset {offset}")]
    UnknownOpcode { offset: u64, byte: u8 },
    #[error("truncated argument at offset {offset}: needed {needed} bytes, {available} available")]
    TruncatedArgument { offset: u64, needed: u64, available: u64 },
    #[error("malformed argument at offset {offset}: {reason}")]
    MalformedArgument { offset: u64, reason: String },
    #[error("end of input at offset {offset} before STOP")]
    MissingStop { offset: u64 },
    #[error("{limit} limit exceeded at offset {offset}")]
    LimitExceeded { offset: u64, limit: LimitKind },
}

impl ParseError {
    pub fn offset(&self) -> u64 {
        match self {
            ParseError::EmptyStream => 0,
            ParseError::UnknownOpcode { offset, .. }
            | ParseError::TruncatedArgument { offset, .. }
            | ParseError::MalformedArgument { offset, .. }
            | ParseError::MissingStop { offset }
            | ParseError::LimitExceeded { offset, .. } => *offset,
        }
    }
}

/// Decoded inline argument of an instruction.
#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    None,
    Int(i64),
    BigInt(BigInt),
    Bool(bool),
    Float(f64),
    Bytes(Vec<u8>),
    Text(String),
    /// Module and name lines of `GLOBAL` / `INST`.
    Pair(String, String),
}

impl Arg {
    fn int(value: impl Into<BigInt>) -> Arg {
        let value = value.into();
        match i64::try_from(&value) {
            Ok(v) => Arg::Int(v),
            Err(_) => Arg::BigInt(value),
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Arg::Int(v) => Some(*v),
            Arg::Bool(b) => Some(*b as i64),
            _ => None,
        }
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::None => Ok(()),
            Arg::Int(v) => write!(f, "{v}"),
            Arg::BigInt(v) => write!(f, "{v}"),
            Arg::Bool(b) => f.write_str(if *b { "True" } else { "False" }),
            Arg::Float(v) => write!(f, "{v:?}"),
            Arg::Bytes(b) => write!(f, "b{:?}", crate::util::escape_bytes(b, 256)),
            Arg::Text(s) => write!(f, "{:?}", crate::util::truncate_str(s, 256)),
            Arg::Pair(m, n) => write!(f, "{m:?} {n:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub offset: u64,
    pub opcode: &'static OpcodeSpec,
    pub arg: Arg,
    /// Encoded length including the opcode byte.
    pub len: u64,
}

impl Instruction {
    pub fn mnemonic(&self) -> &'static str {
        self.opcode.mnemonic
    }

    pub fn end(&self) -> u64 {
        self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PickleProgram {
    pub instructions: Vec<Instruction>,
    /// Protocol from `PROTO`, else the highest minimum protocol of the opcodes used.
    pub declared_protocol: u8,
    pub has_proto_opcode: bool,
    /// Absolute offset of the first instruction in the input.
    pub start: u64,
    pub byte_length: u64,
    pub trailing_bytes: u64,
    /// False when decoding stopped early; the last instruction is then not STOP.
    pub complete: bool,
}

impl PickleProgram {
    pub fn end(&self) -> u64 {
        self.start + self.byte_length
    }
}

/// Disassemble a single pickle program starting at byte 0.
pub fn disassemble(stream: &[u8], limits: &ParseLimits) -> Result<PickleProgram, ParseError> {
    match disassemble_prefix(stream, limits) {
        (program, None) => Ok(program),
        (_, Some(err)) => Err(err),
    }
}

/// Like [`disassemble`] but also hands back everything decoded before a failure.
pub fn disassemble_prefix(stream: &[u8], limits: &ParseLimits) -> (PickleProgram, Option<ParseError>) {
    if stream.is_empty() {
        return (empty_program(0), Some(ParseError::EmptyStream));
    }
    if stream.len() as u64 > limits.max_stream_len {
        return (
            empty_program(0),
            Some(ParseError::LimitExceeded { offset: 0, limit: LimitKind::StreamLength }),
        );
    }
    let (mut program, err) = decode_program(stream, 0, limits);
    program.trailing_bytes = stream.len() as u64 - program.end();
    (program, err)
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("segment {segment}: {error}")]
pub struct SegmentError {
    pub segment: usize,
    pub error: ParseError,
    /// Programs that decoded fully before the failing segment.
    pub parsed: Vec<PickleProgram>,
    /// Instructions of the failing segment decoded before the error.
    pub partial: Box<PickleProgram>,
}

/// Split a stream into consecutive pickle programs, one per STOP.
///
/// A run of zero bytes after the last STOP is tolerated and counted in that
/// program's `trailing_bytes`. Each program's `trailing_bytes` is the number
/// of input bytes after its STOP.
pub fn disassemble_concatenated(stream: &[u8], limits: &ParseLimits) -> Result<Vec<PickleProgram>, SegmentError> {
    if stream.is_empty() {
        return Err(SegmentError {
            segment: 0,
            error: ParseError::EmptyStream,
            parsed: Vec::new(),
            partial: Box::new(empty_program(0)),
        });
    }
    if stream.len() as u64 > limits.max_stream_len {
        return Err(SegmentError {
            segment: 0,
            error: ParseError::LimitExceeded { offset: 0, limit: LimitKind::StreamLength },
            parsed: Vec::new(),
            partial: Box::new(empty_program(0)),
        });
    }
    let total = stream.len() as u64;
    let mut programs = Vec::new();
    let mut pos = 0u64;
    loop {
        let (mut program, err) = decode_program(stream, pos, limits);
        program.trailing_bytes = total - program.end();
        if let Some(error) = err {
            return Err(SegmentError { segment: programs.len(), error, parsed: programs, partial: Box::new(program) });
        }
        pos = program.end();
        programs.push(program);
        if stream[pos as usize..].iter().all(|&b| b == 0) {
            return Ok(programs);
        }
    }
}

fn empty_program(start: u64) -> PickleProgram {
    PickleProgram {
        instructions: Vec::new(),
        declared_protocol: 0,
        has_proto_opcode: false,
        start,
        byte_length: 0,
        trailing_bytes: 0,
        complete: false,
    }
}

fn decode_program(stream: &[u8], start: u64, limits: &ParseLimits) -> (PickleProgram, Option<ParseError>) {
    let mut reader = Reader { data: stream, pos: start as usize, limits };
    let mut program = empty_program(start);
    let mut inferred = 0u8;
    let err = loop {
        let offset = reader.pos as u64;
        let Some(&byte) = stream.get(reader.pos) else {
            break Some(ParseError::MissingStop { offset });
        };
        if program.instructions.len() >= limits.max_instructions {
            break Some(ParseError::LimitExceeded { offset, limit: LimitKind::Instructions });
        }
        let Some(spec) = opcodes::lookup(byte) else {
            break Some(ParseError::UnknownOpcode { offset, byte });
        };
        reader.pos += 1;
        let arg = match reader.read_arg(spec, offset) {
            Ok(arg) => arg,
            Err(e) => break Some(e),
        };
        if spec.code == op::PROTO {
            let proto = arg.as_i64().unwrap_or(0);
            if proto > HIGHEST_PROTOCOL as i64 {
                break Some(ParseError::MalformedArgument {
                    offset,
                    reason: format!("unsupported protocol {proto}"),
                });
            }
            if !program.has_proto_opcode {
                program.declared_protocol = proto as u8;
                program.has_proto_opcode = true;
            }
        }
        inferred = inferred.max(spec.min_protocol);
        program.instructions.push(Instruction { offset, opcode: spec, arg, len: reader.pos as u64 - offset });
        if spec.code == op::STOP {
            program.complete = true;
            break None;
        }
    };
    if !program.has_proto_opcode {
        program.declared_protocol = inferred;
    }
    program.byte_length = program.instructions.last().map_or(start, |i| i.end()) - start;
    (program, err)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    limits: &'a ParseLimits,
}

impl<'a> Reader<'a> {
    fn available(&self) -> u64 {
        (self.data.len() - self.pos) as u64
    }

    fn take(&mut self, n: u64, offset: u64) -> Result<&'a [u8], ParseError> {
        if n > self.limits.max_arg_len {
            return Err(ParseError::LimitExceeded { offset, limit: LimitKind::ArgumentLength });
        }
        if n > self.available() {
            return Err(ParseError::TruncatedArgument { offset, needed: n, available: self.available() });
        }
        let start = self.pos;
        self.pos += n as usize;
        Ok(&self.data[start..self.pos])
    }

    fn fixed<const N: usize>(&mut self, offset: u64) -> Result<[u8; N], ParseError> {
        let bytes = self.take(N as u64, offset)?;
        Ok(bytes.try_into().expect("length checked"))
    }

    /// Newline-terminated line without the newline.
    fn line(&mut self, offset: u64) -> Result<&'a [u8], ParseError> {
        let rest = &self.data[self.pos..];
        let window = rest.len().min(self.limits.max_arg_len.saturating_add(1).min(usize::MAX as u64) as usize);
        match rest[..window].iter().position(|&b| b == b'\n') {
            Some(i) => {
                self.pos += i + 1;
                Ok(&rest[..i])
            }
            None if window < rest.len() => Err(ParseError::LimitExceeded { offset, limit: LimitKind::ArgumentLength }),
            None => Err(ParseError::TruncatedArgument {
                offset,
                needed: rest.len() as u64 + 1,
                available: rest.len() as u64,
            }),
        }
    }

    fn length_prefixed(&mut self, len: u64, offset: u64) -> Result<&'a [u8], ParseError> {
        self.take(len, offset)
    }

    fn read_arg(&mut self, spec: &OpcodeSpec, offset: u64) -> Result<Arg, ParseError> {
        let malformed = |reason: String| ParseError::MalformedArgument { offset, reason };
        Ok(match spec.arg_kind {
            ArgKind::None => Arg::None,
            // memo indices go through plain int(): decimal only, leading zeros fine
            ArgKind::DecimalNlShort if spec.code != op::INT => {
                let line = self.line(offset)?;
                Arg::int(parse_int(line, false).ok_or_else(|| malformed(bad_line("memo index", line)))?)
            }
            ArgKind::DecimalNlShort => {
                let line = self.line(offset)?;
                match line {
                    b"00" => Arg::Bool(false),
                    b"01" => Arg::Bool(true),
                    _ => Arg::int(parse_int(line, true).ok_or_else(|| malformed(bad_line("integer", line)))?),
                }
            }
            ArgKind::DecimalNlLong => {
                let line = self.line(offset)?;
                let digits = line.strip_suffix(b"L").unwrap_or(line);
                Arg::int(parse_int(digits, true).ok_or_else(|| malformed(bad_line("long", line)))?)
            }
            ArgKind::StringNl => {
                let line = self.line(offset)?;
                let inner = strip_quotes(line).ok_or_else(|| malformed(bad_line("quoted string", line)))?;
                Arg::Text(latin1(&escape_decode(inner).map_err(|e| malformed(e.to_string()))?))
            }
            ArgKind::StringNlNoEscape => Arg::Text(latin1(self.line(offset)?)),
            ArgKind::TwoNlLines => {
                let module = self.line(offset)?;
                let name = self.line(offset)?;
                let utf8 = |b: &[u8]| String::from_utf8(b.to_vec()).map_err(|_| malformed("global name is not utf-8".into()));
                Arg::Pair(utf8(module)?, utf8(name)?)
            }
            ArgKind::UnicodeNl => {
                let line = self.line(offset)?;
                Arg::Text(raw_unicode_escape_decode(line).map_err(malformed)?)
            }
            ArgKind::FloatNl => {
                let line = self.line(offset)?;
                Arg::Float(parse_float(line).ok_or_else(|| malformed(bad_line("float", line)))?)
            }
            ArgKind::U1 => Arg::Int(self.fixed::<1>(offset)?[0] as i64),
            ArgKind::U2Le => Arg::Int(u16::from_le_bytes(self.fixed(offset)?) as i64),
            ArgKind::U4Le => Arg::Int(u32::from_le_bytes(self.fixed(offset)?) as i64),
            ArgKind::U8Le => Arg::int(u64::from_le_bytes(self.fixed(offset)?)),
            ArgKind::I4Le => Arg::Int(i32::from_le_bytes(self.fixed(offset)?) as i64),
            ArgKind::F8Be => Arg::Float(f64::from_be_bytes(self.fixed(offset)?)),
            ArgKind::String1 => {
                let n = self.fixed::<1>(offset)?[0] as u64;
                Arg::Text(latin1(self.length_prefixed(n, offset)?))
            }
            ArgKind::String4 => {
                let n = i32::from_le_bytes(self.fixed(offset)?);
                if n < 0 {
                    return Err(malformed(format!("negative byte count {n}")));
                }
                Arg::Text(latin1(self.length_prefixed(n as u64, offset)?))
            }
            ArgKind::Bytes1 => {
                let n = self.fixed::<1>(offset)?[0] as u64;
                Arg::Bytes(self.length_prefixed(n, offset)?.to_vec())
            }
            ArgKind::Bytes4 => {
                let n = u32::from_le_bytes(self.fixed(offset)?) as u64;
                Arg::Bytes(self.length_prefixed(n, offset)?.to_vec())
            }
            ArgKind::Bytes8 | ArgKind::ByteArray8 => {
                let n = u64::from_le_bytes(self.fixed(offset)?);
                Arg::Bytes(self.length_prefixed(n, offset)?.to_vec())
            }
            ArgKind::Utf8U1 => {
                let n = self.fixed::<1>(offset)?[0] as u64;
                Arg::Text(utf8_lenient(self.length_prefixed(n, offset)?))
            }
            ArgKind::Utf8U4 => {
                let n = u32::from_le_bytes(self.fixed(offset)?) as u64;
                Arg::Text(utf8_lenient(self.length_prefixed(n, offset)?))
            }
            ArgKind::Utf8U8 => {
                let n = u64::from_le_bytes(self.fixed(offset)?);
                Arg::Text(utf8_lenient(self.length_prefixed(n, offset)?))
            }
            ArgKind::Long1 => {
                let n = self.fixed::<1>(offset)?[0] as u64;
                Arg::int(BigInt::from_signed_bytes_le(self.length_prefixed(n, offset)?))
            }
            ArgKind::Long4 => {
                let n = i32::from_le_bytes(self.fixed(offset)?);
                if n < 0 {
                    return Err(malformed(format!("negative byte count {n}")));
                }
                Arg::int(BigInt::from_signed_bytes_le(self.length_prefixed(n as u64, offset)?))
            }
        })
    }
}

fn bad_line(what: &str, line: &[u8]) -> String {
    format!("invalid {what} literal {}", crate::util::escape_bytes(line, 64))
}

fn latin1(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| b as char).collect()
}

fn utf8_lenient(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn strip_quotes(line: &[u8]) -> Option<&[u8]> {
    let q = *line.first()?;
    if (q == b'\'' || q == b'"') && line.len() >= 2 && line[line.len() - 1] == q {
        Some(&line[1..line.len() - 1])
    } else {
        None
    }
}

fn trim_ascii(mut s: &[u8]) -> &[u8] {
    while let [first, rest @ ..] = s {
        if first.is_ascii_whitespace() {
            s = rest;
        } else {
            break;
        }
    }
    while let [rest @ .., last] = s {
        if last.is_ascii_whitespace() {
            s = rest;
        } else {
            break;
        }
    }
    s
}

/// Integer literal grammar of the loader: optional sign, optional `0x`/`0o`/`0b`
/// prefix when `base_prefixes` is set, underscores between digits.
fn parse_int(raw: &[u8], base_prefixes: bool) -> Option<BigInt> {
    let s = trim_ascii(raw);
    let (negative, s) = match s.first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (radix, digits, prefixed) = if base_prefixes && s.len() > 1 && s[0] == b'0' {
        match s[1].to_ascii_lowercase() {
            b'x' => (16, &s[2..], true),
            b'o' => (8, &s[2..], true),
            b'b' => (2, &s[2..], true),
            _ => (10, s, false),
        }
    } else {
        (10, s, false)
    };
    let digits = if prefixed { digits.strip_prefix(b"_").unwrap_or(digits) } else { digits };
    if digits.is_empty() || digits[0] == b'_' || digits[digits.len() - 1] == b'_' || digits.windows(2).any(|w| w == b"__") {
        return None;
    }
    let clean: Vec<u8> = digits.iter().copied().filter(|&b| b != b'_').collect();
    if !clean.iter().all(|&b| (b as char).is_digit(radix)) {
        return None;
    }
    if base_prefixes && radix == 10 && clean.len() > 1 && clean[0] == b'0' && clean.iter().any(|&b| b != b'0') {
        return None;
    }
    let value = BigInt::parse_bytes(&clean, radix)?;
    Some(if negative { -value } else { value })
}

fn parse_float(raw: &[u8]) -> Option<f64> {
    let s = std::str::from_utf8(trim_ascii(raw)).ok()?;
    if s.is_empty() {
        return None;
    }
    let bytes = s.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'_' {
            let ok = i > 0 && i + 1 < bytes.len() && bytes[i - 1].is_ascii_digit() && bytes[i + 1].is_ascii_digit();
            if !ok {
                return None;
            }
        }
    }
    s.replace('_', "").parse().ok()
}

#[derive(Debug, Error)]
#[error("{0}")]
struct EscapeError(String);

/// Backslash-escape decoding used for quoted protocol-0 strings.
fn escape_decode(input: &[u8]) -> Result<Vec<u8>, EscapeError> {
    let mut out = Vec::with_capacity(input.len());
    let mut i = 0;
    while i < input.len() {
        let b = input[i];
        i += 1;
        if b != b'\\' {
            out.push(b);
            continue;
        }
        let Some(&e) = input.get(i) else {
            return Err(EscapeError("trailing backslash in string".into()));
        };
        i += 1;
        match e {
            b'\n' => {}
            b'\\' => out.push(b'\\'),
            b'\'' => out.push(b'\''),
            b'"' => out.push(b'"'),
            b'b' => out.push(0x08),
            b'f' => out.push(0x0c),
            b't' => out.push(b'\t'),
            b'n' => out.push(b'\n'),
            b'r' => out.push(b'\r'),
            b'v' => out.push(0x0b),
            b'a' => out.push(0x07),
            b'0'..=b'7' => {
                let mut value = (e - b'0') as u32;
                for _ in 0..2 {
                    match input.get(i) {
                        Some(&d @ b'0'..=b'7') => {
                            value = value * 8 + (d - b'0') as u32;
                            i += 1;
                        }
                        _ => break,
                    }
                }
                out.push(value as u8);
            }
            b'x' => {
                let hex = input.get(i..i + 2).filter(|h| h.iter().all(u8::is_ascii_hexdigit));
                let Some(hex) = hex else {
                    return Err(EscapeError("invalid \\x escape".into()));
                };
                out.push(u8::from_str_radix(std::str::from_utf8(hex).expect("hex digits"), 16).expect("hex digits"));
                i += 2;
            }
            other => {
                out.push(b'\\');
                out.push(other);
            }
        }
    }
    Ok(out)
}

/// Raw-unicode-escape decoding: latin-1 bytes except `\uXXXX` and `\UXXXXXXXX`.
fn raw_unicode_escape_decode(input: &[u8]) -> Result<String, String> {
    let mut out = String::with_capacity(input.len());
    let mut i = 0;
    while i < input.len() {
        let b = input[i];
        i += 1;
        if b != b'\\' || i >= input.len() {
            out.push(b as char);
            continue;
        }
        let e = input[i];
        i += 1;
        let count = match e {
            b'u' => 4,
            b'U' => 8,
            _ => {
                out.push('\\');
                out.push(e as char);
                continue;
            }
        };
        let hex = input
            .get(i..i + count)
            .filter(|h| h.iter().all(u8::is_ascii_hexdigit))
            .ok_or_else(|| format!("truncated \\{} escape", e as char))?;
        i += count;
        let code = u32::from_str_radix(std::str::from_utf8(hex).expect("hex digits"), 16).expect("hex digits");
        match char::from_u32(code) {
            Some(c) => out.push(c),
            // Lone surrogates are representable in the loader but not in Rust strings.
            None if code <= 0x10ffff => out.push(char::REPLACEMENT_CHARACTER),
            None => return Err("\\Uxxxxxxxx out of range".into()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits() -> ParseLimits {
        ParseLimits::default()
    }

    fn mnemonics(p: &PickleProgram) -> Vec<&'static str> {
        p.instructions.iter().map(|i| i.mnemonic()).collect()
    }

    #[test]
    fn minimal_stream() {
        let p = disassemble(b"N.", &limits()).unwrap();
        assert_eq!(mnemonics(&p), ["NONE", "STOP"]);
        assert_eq!(p.instructions[1].offset, 1);
        assert_eq!(p.declared_protocol, 0);
        assert_eq!(p.trailing_bytes, 0);
        assert_eq!(p.byte_length, 2);
        assert!(p.complete);
    }

    #[test]
    fn global_reduce_protocol0() {
        let stream = b"cos\nsystem\n(Vtrue\ntR.";
        let p = disassemble(stream, &limits()).unwrap();
        assert_eq!(mnemonics(&p), ["GLOBAL", "MARK", "UNICODE", "TUPLE", "REDUCE", "STOP"]);
        assert_eq!(p.instructions[0].arg, Arg::Pair("os".into(), "system".into()));
        assert_eq!(p.instructions[0].offset, 0);
        assert_eq!(p.instructions[2].arg, Arg::Text("true".into()));
    }

    #[test]
    fn truncated_global() {
        assert_eq!(
            disassemble(b"c", &limits()),
            Err(ParseError::TruncatedArgument { offset: 0, needed: 1, available: 0 })
        );
        assert!(matches!(disassemble(b"cos\nsys", &limits()), Err(ParseError::TruncatedArgument { offset: 0, .. })));
    }

    #[test]
    fn missing_stop_and_unknown() {
        assert_eq!(disassemble(b"NN", &limits()), Err(ParseError::MissingStop { offset: 2 }));
        assert_eq!(disassemble(b"N\xff.", &limits()), Err(ParseError::UnknownOpcode { offset: 1, byte: 0xff }));
        assert_eq!(disassemble(b"", &limits()), Err(ParseError::EmptyStream));
    }

    #[test]
    fn trailing_bytes_reported() {
        let p = disassemble(b"N.junk", &limits()).unwrap();
        assert_eq!(p.trailing_bytes, 4);
        assert_eq!(p.byte_length, 2);
    }

    #[test]
    fn concatenated_streams() {
        let ps = disassemble_concatenated(b"N.N.", &limits()).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[1].start, 2);
        assert_eq!(ps[1].instructions[0].offset, 2);
        assert_eq!(ps[0].trailing_bytes, 2);
        assert_eq!(ps[1].trailing_bytes, 0);

        let padded = disassemble_concatenated(b"N.\0\0\0", &limits()).unwrap();
        assert_eq!(padded.len(), 1);
        assert_eq!(padded[0].trailing_bytes, 3);

        let err = disassemble_concatenated(b"N.\xff", &limits()).unwrap_err();
        assert_eq!(err.segment, 1);
        assert_eq!(err.error, ParseError::UnknownOpcode { offset: 2, byte: 0xff });
        assert_eq!(err.parsed.len(), 1);
    }

    #[test]
    fn decimal_lines() {
        let p = disassemble(b"I01\nI00\nI-17\nI0x1f\nL123456789012345678901234L\n.", &limits()).unwrap();
        assert_eq!(p.instructions[0].arg, Arg::Bool(true));
        assert_eq!(p.instructions[1].arg, Arg::Bool(false));
        assert_eq!(p.instructions[2].arg, Arg::Int(-17));
        assert_eq!(p.instructions[3].arg, Arg::Int(31));
        assert_eq!(p.instructions[4].arg, Arg::BigInt("123456789012345678901234".parse().unwrap()));
        assert!(matches!(disassemble(b"I12a\n.", &limits()), Err(ParseError::MalformedArgument { offset: 0, .. })));
        assert!(matches!(disassemble(b"I007\n.", &limits()), Err(ParseError::MalformedArgument { .. })));
        // GET/PUT indices are plain decimal.
        assert!(matches!(disassemble(b"Np0x1\n.", &limits()), Err(ParseError::MalformedArgument { .. })));
    }

    #[test]
    fn quoted_strings() {
        let p = disassemble(b"S'a\\n\\\\b\\x41\\101'\nS\"q\"\n.", &limits()).unwrap();
        assert_eq!(p.instructions[0].arg, Arg::Text("a\n\\bAA".into()));
        assert_eq!(p.instructions[1].arg, Arg::Text("q".into()));
        assert!(disassemble(b"Sabc\n.", &limits()).is_err());
        assert!(disassemble(b"S'abc\"\n.", &limits()).is_err());
    }

    #[test]
    fn unicode_escapes() {
        let p = disassemble(b"Va\\u00e9\\U0001F600\\n\n.", &limits()).unwrap();
        assert_eq!(p.instructions[0].arg, Arg::Text("a\u{e9}\u{1F600}\\n".into()));
        assert!(disassemble(b"V\\u12\n.", &limits()).is_err());
    }

    #[test]
    fn binary_arguments() {
        let mut s = vec![0x80, 4, 0x95];
        s.extend_from_slice(&10u64.to_le_bytes());
        s.extend_from_slice(&[b'J', 0xfe, 0xff, 0xff, 0xff, 0x8a, 2, 0x00, 0x80, b'G']);
        s.extend_from_slice(&1.5f64.to_be_bytes());
        s.extend_from_slice(&[0x8c, 2, b'h', b'i', b'C', 1, 7, b'.']);
        let p = disassemble(&s, &limits()).unwrap();
        assert_eq!(p.declared_protocol, 4);
        assert_eq!(p.instructions[1].arg, Arg::Int(10));
        assert_eq!(p.instructions[2].arg, Arg::Int(-2));
        assert_eq!(p.instructions[3].arg, Arg::Int(-32768));
        assert_eq!(p.instructions[4].arg, Arg::Float(1.5));
        assert_eq!(p.instructions[5].arg, Arg::Text("hi".into()));
        assert_eq!(p.instructions[6].arg, Arg::Bytes(vec![7]));
    }

    #[test]
    fn negative_lengths_rejected() {
        assert!(matches!(
            disassemble(b"T\xff\xff\xff\xff.", &limits()),
            Err(ParseError::MalformedArgument { offset: 0, .. })
        ));
    }

    #[test]
    fn protocol_above_five_rejected() {
        assert!(matches!(disassemble(b"\x80\x06N.", &limits()), Err(ParseError::MalformedArgument { .. })));
    }

    #[test]
    fn limits_enforced() {
        let tight = ParseLimits { max_instructions: 2, ..limits() };
        assert_eq!(
            disassemble(b"NNN.", &tight),
            Err(ParseError::LimitExceeded { offset: 2, limit: LimitKind::Instructions })
        );
        let small_args = ParseLimits { max_arg_len: 4, ..limits() };
        assert_eq!(
            disassemble(b"B\x00\x00\x00\x01.", &small_args),
            Err(ParseError::LimitExceeded { offset: 0, limit: LimitKind::ArgumentLength })
        );
        assert_eq!(
            disassemble(b"Vabcdefgh\n.", &small_args),
            Err(ParseError::LimitExceeded { offset: 0, limit: LimitKind::ArgumentLength })
        );
        let small_stream = ParseLimits { max_stream_len: 1, ..limits() };
        assert!(matches!(disassemble(b"N.", &small_stream), Err(ParseError::LimitExceeded { .. })));
    }

    #[test]
    fn prefix_kept_on_error() {
        let (p, err) = disassemble_prefix(b"cos\nsystem\nN", &limits());
        assert!(!p.complete);
        assert_eq!(p.instructions.len(), 2);
        assert_eq!(err, Some(ParseError::MissingStop { offset: 12 }));
    }

    #[test]
    fn inferred_protocol() {
        assert_eq!(disassemble(b"]N.", &limits()).unwrap().declared_protocol, 1);
        assert_eq!(disassemble(b"(l.", &limits()).unwrap().declared_protocol, 0);
    }
}
