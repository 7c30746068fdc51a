//! Content sniffing for pickle streams.

use super::absvm::{evaluate_lenient, VmErrorKind, VmLimits};
use super::disasm::{disassemble_prefix, ParseError, ParseLimits};
use super::opcodes::HIGHEST_PROTOCOL;

/// Bytes inspected when deciding whether content is a pickle stream.
pub const SNIFF_WINDOW: usize = 4096;

/// Whether `prefix` starts a plausible pickle stream.
///
/// `PROTO` with a known protocol only needs the rest of the window to
/// decode. Anything else must also evaluate cleanly (running out of bytes is
/// fine), which rejects text and binary data that merely happen to begin
/// with an opcode byte.
pub fn looks_like_pickle(prefix: &[u8]) -> bool {
    let window = &prefix[..prefix.len().min(SNIFF_WINDOW)];
    match window {
        [] | [_] => false,
        [0x80, proto, ..] => *proto <= HIGHEST_PROTOCOL && decodes(window),
        _ => coherent_prefix(window),
    }
}

fn decodes(window: &[u8]) -> bool {
    matches!(
        disassemble_prefix(window, &ParseLimits::default()).1,
        None | Some(ParseError::MissingStop { .. }) | Some(ParseError::TruncatedArgument { .. })
    )
}

fn coherent_prefix(window: &[u8]) -> bool {
    let (program, err) = disassemble_prefix(window, &ParseLimits::default());
    match err {
        None | Some(ParseError::MissingStop { .. }) | Some(ParseError::TruncatedArgument { .. }) => {}
        Some(_) => return false,
    }
    if program.instructions.len() < 2 {
        return false;
    }
    let result = evaluate_lenient(&program, &VmLimits::default());
    match result.halted {
        None => true,
        Some(e) => e.kind == VmErrorKind::Incomplete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_header() {
        assert!(looks_like_pickle(b"\x80\x04\x95"));
        assert!(looks_like_pickle(b"\x80\x02"));
        assert!(!looks_like_pickle(b"\x80\x07"));
        assert!(!looks_like_pickle(b"\x80"));
        // a float blob whose first byte happens to be 0x80
        assert!(!looks_like_pickle(b"\x80\x02\x00\x00\xff\x3f\x12\x9a\x01\x40"));
    }

    #[test]
    fn protocol_zero_streams() {
        assert!(looks_like_pickle(b"N."));
        assert!(looks_like_pickle(b"cos\nsystem\n(Vtrue\ntR."));
        assert!(looks_like_pickle(b"(lp0\nI1\na"));
    }

    #[test]
    fn non_pickles() {
        assert!(!looks_like_pickle(b""));
        assert!(!looks_like_pickle(b"hello world"));
        assert!(!looks_like_pickle(b"Nothing to see here"));
        assert!(!looks_like_pickle(b"{\"a\": 1}"));
        assert!(!looks_like_pickle(&[0u8; 64]));
        assert!(!looks_like_pickle(b"# comment\n"));
    }
}
