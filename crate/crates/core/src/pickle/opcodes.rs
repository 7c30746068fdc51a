//! Static opcode table for pickle protocols 0 through 5.
//!
//! Mnemonics follow the names used by the format's reference disassembler so
//! transcripts can be compared line for line.

use std::fmt;

/// How an opcode's inline argument is laid out in the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArgKind {
    None,
    /// Decimal integer line (`INT`, `GET`, `PUT`); `00`/`01` decode to booleans.
    DecimalNlShort,
    /// Decimal integer line with optional trailing `L`.
    DecimalNlLong,
    /// Quoted, backslash-escaped string line.
    StringNl,
    /// Raw string line, no quotes and no escapes (`PERSID`).
    StringNlNoEscape,
    /// Two raw lines: module then name (`GLOBAL`, `INST`).
    TwoNlLines,
    /// Raw-unicode-escape text line (`UNICODE`).
    UnicodeNl,
    /// Float line parsed with the loader's float grammar.
    FloatNl,
    U1,
    U2Le,
    U4Le,
    U8Le,
    I4Le,
    F8Be,
    /// Length-prefixed latin-1 string with a u1 length (`SHORT_BINSTRING`).
    String1,
    /// Length-prefixed latin-1 string with a signed i4 length (`BINSTRING`).
    String4,
    Bytes1,
    Bytes4,
    Bytes8,
    ByteArray8,
    Utf8U1,
    Utf8U4,
    Utf8U8,
    Long1,
    Long4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OpcodeSpec {
    pub code: u8,
    pub mnemonic: &'static str,
    pub arg_kind: ArgKind,
    pub min_protocol: u8,
}

impl fmt::Display for OpcodeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic)
    }
}

macro_rules! opcodes {
    ($($name:ident = $code:expr, $kind:ident, $proto:expr;)*) => {
        /// Byte values of every defined opcode.
        pub mod op {
            $(pub const $name: u8 = $code;)*
        }

        static TABLE: &[OpcodeSpec] = &[
            $(OpcodeSpec {
                code: $code,
                mnemonic: stringify!($name),
                arg_kind: ArgKind::$kind,
                min_protocol: $proto,
            },)*
        ];
    };
}

opcodes! {
    INT = b'I', DecimalNlShort, 0;
    BININT = b'J', I4Le, 1;
    BININT1 = b'K', U1, 1;
    BININT2 = b'M', U2Le, 1;
    LONG = b'L', DecimalNlLong, 0;
    LONG1 = 0x8a, Long1, 2;
    LONG4 = 0x8b, Long4, 2;
    STRING = b'S', StringNl, 0;
    BINSTRING = b'T', String4, 1;
    SHORT_BINSTRING = b'U', String1, 1;
    BINBYTES = b'B', Bytes4, 3;
    SHORT_BINBYTES = b'C', Bytes1, 3;
    BINBYTES8 = 0x8e, Bytes8, 4;
    BYTEARRAY8 = 0x96, ByteArray8, 5;
    NEXT_BUFFER = 0x97, None, 5;
    READONLY_BUFFER = 0x98, None, 5;
    NONE = b'N', None, 0;
    NEWTRUE = 0x88, None, 2;
    NEWFALSE = 0x89, None, 2;
    UNICODE = b'V', UnicodeNl, 0;
    SHORT_BINUNICODE = 0x8c, Utf8U1, 4;
    BINUNICODE = b'X', Utf8U4, 1;
    BINUNICODE8 = 0x8d, Utf8U8, 4;
    FLOAT = b'F', FloatNl, 0;
    BINFLOAT = b'G', F8Be, 1;
    EMPTY_LIST = b']', None, 1;
    APPEND = b'a', None, 0;
    APPENDS = b'e', None, 1;
    LIST = b'l', None, 0;
    EMPTY_TUPLE = b')', None, 1;
    TUPLE = b't', None, 0;
    TUPLE1 = 0x85, None, 2;
    TUPLE2 = 0x86, None, 2;
    TUPLE3 = 0x87, None, 2;
    EMPTY_DICT = b'}', None, 1;
    DICT = b'd', None, 0;
    SETITEM = b's', None, 0;
    SETITEMS = b'u', None, 1;
    EMPTY_SET = 0x8f, None, 4;
    ADDITEMS = 0x90, None, 4;
    FROZENSET = 0x91, None, 4;
    POP = b'0', None, 0;
    DUP = b'2', None, 0;
    MARK = b'(', None, 0;
    POP_MARK = b'1', None, 1;
    GET = b'g', DecimalNlShort, 0;
    BINGET = b'h', U1, 1;
    LONG_BINGET = b'j', U4Le, 1;
    PUT = b'p', DecimalNlShort, 0;
    BINPUT = b'q', U1, 1;
    LONG_BINPUT = b'r', U4Le, 1;
    MEMOIZE = 0x94, None, 4;
    EXT1 = 0x82, U1, 2;
    EXT2 = 0x83, U2Le, 2;
    EXT4 = 0x84, I4Le, 2;
    GLOBAL = b'c', TwoNlLines, 0;
    STACK_GLOBAL = 0x93, None, 4;
    REDUCE = b'R', None, 0;
    BUILD = b'b', None, 0;
    INST = b'i', TwoNlLines, 0;
    OBJ = b'o', None, 1;
    NEWOBJ = 0x81, None, 2;
    NEWOBJ_EX = 0x92, None, 4;
    PROTO = 0x80, U1, 2;
    STOP = b'.', None, 0;
    FRAME = 0x95, U8Le, 4;
    PERSID = b'P', StringNlNoEscape, 0;
    BINPERSID = b'Q', None, 1;
}

/// Highest protocol this table understands.
pub const HIGHEST_PROTOCOL: u8 = 5;

static BY_CODE: std::sync::OnceLock<[Option<&'static OpcodeSpec>; 256]> = std::sync::OnceLock::new();

/// The complete static table, in definition order.
pub fn opcode_table() -> &'static [OpcodeSpec] {
    TABLE
}

pub fn lookup(code: u8) -> Option<&'static OpcodeSpec> {
    BY_CODE.get_or_init(|| {
        let mut index = [None; 256];
        for spec in TABLE {
            index[spec.code as usize] = Some(spec);
        }
        index
    })[code as usize]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn codes_are_unique() {
        let mut seen = HashSet::new();
        for spec in opcode_table() {
            assert!(seen.insert(spec.code), "duplicate code {:#04x}", spec.code);
        }
        assert_eq!(opcode_table().len(), 68);
    }

    #[test]
    fn stop_and_reduce() {
        let stop = lookup(b'.').unwrap();
        assert_eq!(stop.mnemonic, "STOP");
        assert_eq!(stop.arg_kind, ArgKind::None);
        assert_eq!(stop.min_protocol, 0);

        let reduce = lookup(b'R').unwrap();
        assert_eq!(reduce.mnemonic, "REDUCE");
        assert_eq!(reduce.arg_kind, ArgKind::None);
    }

    #[test]
    fn unassigned_bytes() {
        assert!(lookup(0xff).is_none());
        assert!(lookup(0x99).is_none());
        assert!(lookup(b'{').is_none());
    }

    #[test]
    fn table_is_stable() {
        assert_eq!(opcode_table().as_ptr(), opcode_table().as_ptr());
        assert_eq!(lookup(op::STACK_GLOBAL).unwrap().mnemonic, "STACK_GLOBAL");
    }
}
