//! Streams used for transcript comparison against the reference
//! disassembler, plus the canonical transcript format both sides produce.

use std::fmt::Write as _;

use super::corpus::{corpus_files, DEFAULT_SEED};
use super::ForgeError;
use crate::container::{find_pickle_payloads, list_entries};
use crate::pickle::{Arg, PickleProgram};

/// Hand-assembled streams covering opcodes the pickler never emits.
const HAND: &[(&str, &[u8])] = &[
    ("string_escapes_p0", b"S'hello\\n\\x41\\'q'\n."),
    ("string_tuple_p0", b"(S'a'\nS\"b\"\ntp0\n."),
    ("binstring_p2", b"\x80\x02T\x03\x00\x00\x00abcU\x02hi\x86q\x00."),
    ("long_text_p0", b"(L12345678901234567890L\nL-5L\nL0\nt."),
    ("float_text_p0", b"(F1.5\nF-0.0\nF1e-07\nF2.5E+300\nFinf\nFnan\nt."),
    ("persid_p0", b"Pstorage0\n."),
    ("binpersid_p2", b"\x80\x02X\x01\x00\x00\x00kQ."),
    ("ext_p2", b"\x80\x02\x82\x01\x83\x02\x01\x84\x00\x00\x01\x00\x87."),
    ("get_put_p0", b"(lp0\nI1\nag0\na."),
    ("long_binget_p2", b"\x80\x02]r\x00\x01\x00\x00j\x00\x01\x00\x00a."),
    ("inst_p0", b"(S'x'\nicollections\nOrderedDict\n."),
    ("obj_p1", b"(ccollections\nOrderedDict\no."),
    ("newobj_p2", b"\x80\x02ccollections\nOrderedDict\n)\x81."),
    ("newobj_ex_p4", b"\x80\x04\x8c\x0bcollections\x8c\x0bOrderedDict\x93)}\x92."),
    ("dup_pop_mark_p1", b"(K\x01K\x021N2\x86."),
    ("pop_p2", b"\x80\x02K\x01K\x020."),
    ("bytes8_p5", b"\x80\x05\x8e\x03\x00\x00\x00\x00\x00\x00\x00abc\x96\x02\x00\x00\x00\x00\x00\x00\x00xy\x86."),
    ("buffers_p5", b"\x80\x05\x97\x98."),
    ("frozenset_p4", b"\x80\x04(K\x01K\x02\x91."),
    ("binunicode8_p4", b"\x80\x04\x8d\x02\x00\x00\x00\x00\x00\x00\x00hi."),
    ("int_forms_p0", b"(I01\nI00\nI-17\nI42\nt."),
    ("set_additems_p4", b"\x80\x04\x8f(K\x01K\x02\x90."),
    ("dict_p0", b"(S'a'\nI1\nd."),
    ("setitem_p0", b"(dp0\nS'k'\nI2\ns."),
    ("long4_p2", b"\x80\x02\x8b\x09\x00\x00\x00\x01\x02\x03\x04\x05\x06\x07\x08\x89."),
    ("unicode_escapes_p0", b"V\\u20ac \\U0001f600 caf\xe9\n."),
    ("binfloat_p2", b"\x80\x02G?\xf0\x00\x00\x00\x00\x00\x00."),
    ("nested_marks_p1", b"((K\x01tK\x02t."),
    ("stack_global_p4", b"\x80\x04\x8c\x02os\x8c\x06system\x93\x8c\x15true # FIXTURE-MARKER\x85R."),
    ("two_frames_p4", b"\x80\x04\x95\x02\x00\x00\x00\x00\x00\x00\x00K\x01\x95\x02\x00\x00\x00\x00\x00\x00\x00\x85."),
    ("list_p1", b"]q\x00(K\x01K\x02e."),
    ("short_binbytes_p3", b"\x80\x03C\x03abc."),
    ("binbytes_p3", b"\x80\x03B\x03\x00\x00\x00abc."),
    ("binints_p2", b"\x80\x02M\xff\xffJ\x00\x00\x00\x80\x86."),
    ("singletons_p2", b"\x80\x02\x88\x89N\x87."),
    ("global_reduce_p0", b"cos\nsystem\n(S'true # FIXTURE-MARKER'\ntR."),
    ("empty_containers_p1", b"(]})t."),
];

/// Named streams: every pickle in the default corpus (archive payloads
/// included) followed by the hand-assembled set.
pub fn oracle_streams() -> Result<Vec<(String, Vec<u8>)>, ForgeError> {
    let mut out = Vec::new();
    for (path, bytes) in corpus_files(DEFAULT_SEED)? {
        if bytes.starts_with(b"PK") {
            let mut cur = std::io::Cursor::new(&bytes);
            let Ok(entries) = list_entries(&mut cur) else { continue };
            for (entry, data) in find_pickle_payloads(&entries, &mut cur, 1 << 26) {
                if let Ok(data) = data {
                    out.push((format!("corpus/{path}!{}", entry.path), data));
                }
            }
        } else if bytes.starts_with(&crate::container::HDF5_SIGNATURE) {
            continue;
        } else {
            out.push((format!("corpus/{path}"), bytes));
        }
    }
    out.extend(HAND.iter().map(|(name, bytes)| (format!("hand/{name}"), bytes.to_vec())));
    Ok(out)
}

/// Canonical argument rendering shared with the reference-side script:
/// ints in decimal, floats as IEEE-754 bit patterns, text and bytes as hex,
/// globals as `module name` text.
pub fn canonical_arg(arg: &Arg) -> String {
    match arg {
        Arg::None => String::new(),
        Arg::Int(i) => i.to_string(),
        Arg::BigInt(b) => b.to_string(),
        Arg::Bool(b) => if *b { "True" } else { "False" }.to_string(),
        Arg::Float(f) => format!("f:{:016x}", f.to_bits()),
        Arg::Bytes(b) => format!("b:{}", hex::encode(b)),
        Arg::Text(s) => format!("s:{}", hex::encode(s.as_bytes())),
        Arg::Pair(m, n) => format!("s:{}", hex::encode(format!("{m} {n}"))),
    }
}

/// One `offset MNEMONIC arg` line per instruction.
pub fn transcript(program: &PickleProgram) -> Vec<String> {
    program
        .instructions
        .iter()
        .map(|ins| {
            let mut line = String::new();
            let _ = write!(line, "{} {} {}", ins.offset, ins.mnemonic(), canonical_arg(&ins.arg));
            line
        })
        .collect()
}
