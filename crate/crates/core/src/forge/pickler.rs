//! A small pickler over an explicit value tree.
//!
//! Output follows the conventions of the reference implementation closely
//! enough for its loader and disassembler to accept every stream: framing at
//! protocol 4+, memoization after containers, strings and globals, batched
//! APPENDS/SETITEMS, and the protocol-specific opcode choices.

use std::collections::HashMap;

use super::ForgeError;
use crate::pickle::opcodes::op;

const BATCH: usize = 1000;
const FRAME_SIZE_MIN: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum PickleValue {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Bytes(Vec<u8>),
    List(Vec<PickleValue>),
    Tuple(Vec<PickleValue>),
    Dict(Vec<(PickleValue, PickleValue)>),
    Set(Vec<PickleValue>),
    Global { module: String, name: String },
    /// `callee(*args)`, then dict items, then `BUILD` with the state.
    Call {
        callee: Box<PickleValue>,
        args: Vec<PickleValue>,
        dict_items: Vec<(PickleValue, PickleValue)>,
        state: Option<Box<PickleValue>>,
    },
    Persistent(Box<PickleValue>),
}

impl PickleValue {
    pub fn text(s: &str) -> Self {
        PickleValue::Text(s.to_string())
    }

    pub fn global(module: &str, name: &str) -> Self {
        PickleValue::Global { module: module.to_string(), name: name.to_string() }
    }

    pub fn call(callee: PickleValue, args: Vec<PickleValue>) -> Self {
        PickleValue::Call { callee: Box::new(callee), args, dict_items: Vec::new(), state: None }
    }

    /// JSON rendering for manifests; `None` for values JSON cannot hold.
    pub fn to_json(&self) -> Option<serde_json::Value> {
        use serde_json::Value;
        Some(match self {
            PickleValue::None => Value::Null,
            PickleValue::Bool(b) => Value::Bool(*b),
            PickleValue::Int(i) => Value::from(*i),
            PickleValue::Float(f) => Value::from(*f),
            PickleValue::Text(s) => Value::String(s.clone()),
            PickleValue::List(items) => Value::Array(items.iter().map(Self::to_json).collect::<Option<_>>()?),
            PickleValue::Dict(items) => {
                let mut map = serde_json::Map::new();
                for (k, v) in items {
                    let PickleValue::Text(k) = k else { return None };
                    map.insert(k.clone(), v.to_json()?);
                }
                Value::Object(map)
            }
            _ => return None,
        })
    }
}

pub struct Pickler {
    proto: u8,
    header: bool,
    out: Vec<u8>,
    memo_len: u32,
    globals: HashMap<(String, String), u32>,
}

impl Pickler {
    pub fn new(proto: u8) -> Result<Self, ForgeError> {
        if proto > crate::pickle::opcodes::HIGHEST_PROTOCOL {
            return Err(ForgeError::UnsupportedProtocol(proto));
        }
        Ok(Pickler { proto, header: true, out: Vec::new(), memo_len: 0, globals: HashMap::new() })
    }

    /// Skip the leading `PROTO`, as a pickler that overrides `dump` and
    /// starts framing directly does.
    pub fn without_proto_header(mut self) -> Self {
        self.header = false;
        self
    }

    /// Serialize `values` one after another and terminate with a single STOP.
    /// With more than one value the loader returns only the last.
    pub fn dump_all(mut self, values: &[&PickleValue]) -> Result<Vec<u8>, ForgeError> {
        for v in values {
            self.save(v)?;
        }
        self.out.push(op::STOP);
        let mut stream = Vec::with_capacity(self.out.len() + 11);
        if self.proto >= 2 && self.header {
            stream.extend_from_slice(&[op::PROTO, self.proto]);
        }
        if self.proto >= 4 && self.out.len() >= FRAME_SIZE_MIN {
            stream.push(op::FRAME);
            stream.extend_from_slice(&(self.out.len() as u64).to_le_bytes());
        }
        stream.extend_from_slice(&self.out);
        Ok(stream)
    }

    fn w(&mut self, bytes: &[u8]) {
        self.out.extend_from_slice(bytes);
    }

    fn line(&mut self, opcode: u8, text: &str) {
        self.out.push(opcode);
        self.w(text.as_bytes());
        self.out.push(b'\n');
    }

    fn memoize(&mut self) -> u32 {
        let idx = self.memo_len;
        self.memo_len += 1;
        if self.proto >= 4 {
            self.out.push(op::MEMOIZE);
        } else if self.proto >= 1 {
            if idx < 256 {
                self.w(&[op::BINPUT, idx as u8]);
            } else {
                self.out.push(op::LONG_BINPUT);
                self.w(&idx.to_le_bytes());
            }
        } else {
            self.line(op::PUT, &idx.to_string());
        }
        idx
    }

    fn get(&mut self, idx: u32) {
        if self.proto >= 1 {
            if idx < 256 {
                self.w(&[op::BINGET, idx as u8]);
            } else {
                self.out.push(op::LONG_BINGET);
                self.w(&idx.to_le_bytes());
            }
        } else {
            self.line(op::GET, &idx.to_string());
        }
    }

    fn save(&mut self, v: &PickleValue) -> Result<(), ForgeError> {
        match v {
            PickleValue::None => self.out.push(op::NONE),
            PickleValue::Bool(b) => {
                if self.proto >= 2 {
                    self.out.push(if *b { op::NEWTRUE } else { op::NEWFALSE });
                } else {
                    self.w(if *b { b"I01\n" } else { b"I00\n" });
                }
            }
            PickleValue::Int(i) => self.save_int(*i),
            PickleValue::Float(f) => {
                if self.proto >= 1 {
                    self.out.push(op::BINFLOAT);
                    self.w(&f.to_be_bytes());
                } else {
                    self.line(op::FLOAT, &float_repr(*f));
                }
            }
            PickleValue::Text(s) => {
                self.save_text(s);
                self.memoize();
            }
            PickleValue::Bytes(b) => {
                if self.proto >= 3 {
                    if b.len() < 256 {
                        self.w(&[op::SHORT_BINBYTES, b.len() as u8]);
                    } else {
                        self.out.push(op::BINBYTES);
                        self.w(&(b.len() as u32).to_le_bytes());
                    }
                    self.w(b);
                    self.memoize();
                } else {
                    // older protocols spell bytes as a latin-1 round trip
                    let latin1: String = b.iter().map(|&c| c as char).collect();
                    self.save(&PickleValue::call(
                        PickleValue::global("_codecs", "encode"),
                        vec![PickleValue::Text(latin1), PickleValue::text("latin1")],
                    ))?;
                }
            }
            PickleValue::Tuple(items) => self.save_tuple(items)?,
            PickleValue::List(items) => {
                if self.proto >= 1 {
                    self.out.push(op::EMPTY_LIST);
                } else {
                    self.w(&[op::MARK, op::LIST]);
                }
                self.memoize();
                self.batch(items, op::APPEND, op::APPENDS, |p, x| p.save(x))?;
            }
            PickleValue::Dict(items) => {
                if self.proto >= 1 {
                    self.out.push(op::EMPTY_DICT);
                } else {
                    self.w(&[op::MARK, op::DICT]);
                }
                self.memoize();
                self.save_items(items)?;
            }
            PickleValue::Set(items) => {
                if self.proto < 4 {
                    return Err(ForgeError::UnsupportedValue(format!("set at protocol {}", self.proto)));
                }
                self.out.push(op::EMPTY_SET);
                self.memoize();
                for chunk in items.chunks(BATCH) {
                    self.out.push(op::MARK);
                    for x in chunk {
                        self.save(x)?;
                    }
                    self.out.push(op::ADDITEMS);
                }
            }
            PickleValue::Global { module, name } => self.save_global(module, name)?,
            PickleValue::Call { callee, args, dict_items, state } => {
                self.save(callee)?;
                self.save_tuple(args)?;
                self.out.push(op::REDUCE);
                self.memoize();
                self.save_items(dict_items)?;
                if let Some(state) = state {
                    self.save(state)?;
                    self.out.push(op::BUILD);
                }
            }
            PickleValue::Persistent(pid) => {
                if self.proto >= 1 {
                    self.save(pid)?;
                    self.out.push(op::BINPERSID);
                } else {
                    match &**pid {
                        PickleValue::Text(s) if s.is_ascii() && !s.contains('\n') => self.line(op::PERSID, s),
                        _ => return Err(ForgeError::UnsupportedValue("protocol 0 persistent id must be ascii text".into())),
                    }
                }
            }
        }
        Ok(())
    }

    fn save_int(&mut self, i: i64) {
        if self.proto >= 1 {
            if (0..256).contains(&i) {
                self.w(&[op::BININT1, i as u8]);
                return;
            }
            if (0..65536).contains(&i) {
                self.out.push(op::BININT2);
                self.w(&(i as u16).to_le_bytes());
                return;
            }
            if i32::try_from(i).is_ok() {
                self.out.push(op::BININT);
                self.w(&(i as i32).to_le_bytes());
                return;
            }
        }
        if self.proto >= 2 {
            let bytes = long_bytes(i);
            self.w(&[op::LONG1, bytes.len() as u8]);
            self.w(&bytes);
        } else if i32::try_from(i).is_ok() {
            self.line(op::INT, &i.to_string());
        } else {
            self.line(op::LONG, &format!("{i}L"));
        }
    }

    fn save_text(&mut self, s: &str) {
        let b = s.as_bytes();
        if self.proto >= 4 && b.len() < 256 {
            self.w(&[op::SHORT_BINUNICODE, b.len() as u8]);
            self.w(b);
        } else if self.proto >= 1 {
            self.out.push(op::BINUNICODE);
            self.w(&(b.len() as u32).to_le_bytes());
            self.w(b);
        } else {
            self.out.push(op::UNICODE);
            let escaped = raw_unicode_escape(s);
            self.w(&escaped);
            self.out.push(b'\n');
        }
    }

    fn save_tuple(&mut self, items: &[PickleValue]) -> Result<(), ForgeError> {
        if items.is_empty() {
            if self.proto >= 1 {
                self.out.push(op::EMPTY_TUPLE);
            } else {
                self.w(&[op::MARK, op::TUPLE]);
            }
            return Ok(());
        }
        if self.proto >= 2 && items.len() <= 3 {
            for x in items {
                self.save(x)?;
            }
            self.out.push([op::TUPLE1, op::TUPLE2, op::TUPLE3][items.len() - 1]);
        } else {
            self.out.push(op::MARK);
            for x in items {
                self.save(x)?;
            }
            self.out.push(op::TUPLE);
        }
        self.memoize();
        Ok(())
    }

    fn save_items(&mut self, items: &[(PickleValue, PickleValue)]) -> Result<(), ForgeError> {
        self.batch(items, op::SETITEM, op::SETITEMS, |p, (k, v)| {
            p.save(k)?;
            p.save(v)
        })
    }

    fn batch<T>(
        &mut self,
        items: &[T],
        single: u8,
        many: u8,
        mut save: impl FnMut(&mut Self, &T) -> Result<(), ForgeError>,
    ) -> Result<(), ForgeError> {
        if self.proto == 0 {
            for x in items {
                save(self, x)?;
                self.out.push(single);
            }
            return Ok(());
        }
        for chunk in items.chunks(BATCH) {
            if chunk.len() == 1 {
                save(self, &chunk[0])?;
                self.out.push(single);
            } else {
                self.out.push(op::MARK);
                for x in chunk {
                    save(self, x)?;
                }
                self.out.push(many);
            }
        }
        Ok(())
    }

    fn save_global(&mut self, module: &str, name: &str) -> Result<(), ForgeError> {
        let key = (module.to_string(), name.to_string());
        if let Some(&idx) = self.globals.get(&key) {
            self.get(idx);
            return Ok(());
        }
        if self.proto >= 4 {
            self.save(&PickleValue::text(module))?;
            self.save(&PickleValue::text(name))?;
            self.out.push(op::STACK_GLOBAL);
        } else {
            if module.contains('\n') || name.contains('\n') {
                return Err(ForgeError::UnsupportedValue("newline in global name".into()));
            }
            self.out.push(op::GLOBAL);
            self.w(module.as_bytes());
            self.out.push(b'\n');
            self.w(name.as_bytes());
            self.out.push(b'\n');
        }
        let idx = self.memoize();
        self.globals.insert(key, idx);
        Ok(())
    }
}

pub fn dumps(value: &PickleValue, proto: u8) -> Result<Vec<u8>, ForgeError> {
    Pickler::new(proto)?.dump_all(&[value])
}

/// Minimal two's-complement little-endian encoding, as LONG1 expects.
fn long_bytes(i: i64) -> Vec<u8> {
    if i == 0 {
        return Vec::new();
    }
    let mut bytes = i.to_le_bytes().to_vec();
    while bytes.len() > 1 {
        let last = bytes[bytes.len() - 1];
        let prev_sign = bytes[bytes.len() - 2] & 0x80;
        if (last == 0x00 && prev_sign == 0) || (last == 0xff && prev_sign != 0) {
            bytes.pop();
        } else {
            break;
        }
    }
    bytes
}

fn raw_unicode_escape(s: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' | '\0' | '\n' | '\r' | '\x1a' => out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes()),
            c if (c as u32) < 256 => out.push(c as u32 as u8),
            c if (c as u32) < 0x10000 => out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes()),
            c => out.extend_from_slice(format!("\\U{:08x}", c as u32).as_bytes()),
        }
    }
    out
}

/// Shortest round-tripping decimal form accepted by the loader's float().
fn float_repr(f: f64) -> String {
    if f.is_nan() {
        return "nan".into();
    }
    if f.is_infinite() {
        return if f > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{f:?}");
    s
}
