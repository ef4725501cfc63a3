// SPDX-License-Identifier: CC0-1.0

//! Scripts over the opcode subset used by covenant deposits.
//!
//! Pushes (direct, `PUSHDATA1/2/4`, `OP_0`, `OP_1NEGATE`, `OP_1`..`OP_16`), the
//! conditionals `IF`/`ELSE`/`ENDIF`, stack helpers `DROP`/`EQUAL`/`EQUALVERIFY`, the
//! CHECKSIG family, and the three lock opcodes CLTV, CSV and CHECKTEMPLATEVERIFY.
//! Any other byte in opcode position is a parse error.

use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Opcode byte values.
pub mod opcodes {
    pub const OP_0: u8 = 0x00;
    pub const OP_PUSHDATA1: u8 = 0x4c;
    pub const OP_PUSHDATA2: u8 = 0x4d;
    pub const OP_PUSHDATA4: u8 = 0x4e;
    pub const OP_1NEGATE: u8 = 0x4f;
    pub const OP_1: u8 = 0x51;
    pub const OP_16: u8 = 0x60;
    pub const OP_IF: u8 = 0x63;
    pub const OP_ELSE: u8 = 0x67;
    pub const OP_ENDIF: u8 = 0x68;
    pub const OP_DROP: u8 = 0x75;
    pub const OP_EQUAL: u8 = 0x87;
    pub const OP_EQUALVERIFY: u8 = 0x88;
    pub const OP_CHECKSIG: u8 = 0xac;
    pub const OP_CHECKSIGVERIFY: u8 = 0xad;
    pub const OP_CHECKMULTISIG: u8 = 0xae;
    pub const OP_CHECKMULTISIGVERIFY: u8 = 0xaf;
    pub const OP_CHECKLOCKTIMEVERIFY: u8 = 0xb1;
    pub const OP_CHECKSEQUENCEVERIFY: u8 = 0xb2;
    pub const OP_CHECKTEMPLATEVERIFY: u8 = 0xb3;
}

use opcodes::*;

/// Maximum number of keys in a CHECKMULTISIG.
pub const MAX_MULTISIG_KEYS: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptError {
    #[error("push at byte {0} runs past the end of the script")]
    TruncatedPush(usize),
    #[error("unsupported opcode {op:#04x} at byte {at}")]
    UnsupportedOpcode { op: u8, at: usize },
    #[error("unbalanced conditional at byte {0}")]
    UnbalancedConditional(usize),
    #[error("invalid asm token {0:?}")]
    BadAsm(String),
}

/// One parsed element of a script.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instruction<'a> {
    /// Data push. `OP_0` is an empty push; small integers are reported as opcodes.
    Push(&'a [u8]),
    Op(u8),
}

/// A script as raw bytes. Parsing is lazy; [`Script::validate`] checks structure.
#[derive(Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Script(Vec<u8>);

impl Script {
    pub fn new() -> Script {
        Script(Vec::new())
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Script {
        Script(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn instructions(&self) -> Instructions<'_> {
        Instructions { data: &self.0, pos: 0 }
    }

    /// Parses every instruction and checks that conditionals nest properly.
    pub fn validate(&self) -> Result<(), ScriptError> {
        let mut depth: Vec<bool> = Vec::new();
        let mut iter = self.instructions();
        loop {
            let at = iter.pos;
            match iter.next() {
                None => break,
                Some(Err(e)) => return Err(e),
                Some(Ok(Instruction::Op(OP_IF))) => depth.push(false),
                Some(Ok(Instruction::Op(OP_ELSE))) => match depth.last_mut() {
                    Some(seen_else) if !*seen_else => *seen_else = true,
                    _ => return Err(ScriptError::UnbalancedConditional(at)),
                },
                Some(Ok(Instruction::Op(OP_ENDIF))) => {
                    if depth.pop().is_none() {
                        return Err(ScriptError::UnbalancedConditional(at));
                    }
                }
                Some(Ok(_)) => {}
            }
        }
        if !depth.is_empty() {
            return Err(ScriptError::UnbalancedConditional(self.0.len()));
        }
        Ok(())
    }

    /// Human-readable opcode listing, e.g. `OP_1 <02ab..> OP_1 OP_CHECKMULTISIG`.
    pub fn to_asm(&self) -> String {
        let mut parts = Vec::new();
        for ins in self.instructions() {
            match ins {
                Ok(Instruction::Push(data)) if data.is_empty() => parts.push("OP_0".to_string()),
                Ok(Instruction::Push(data)) => parts.push(format!("<{}>", hex::encode(data))),
                Ok(Instruction::Op(op)) => parts.push(opcode_name(op)),
                Err(e) => {
                    parts.push(format!("<error: {}>", e));
                    break;
                }
            }
        }
        parts.join(" ")
    }

    /// Inverse of [`Script::to_asm`] for well-formed listings.
    pub fn from_asm(asm: &str) -> Result<Script, ScriptError> {
        let mut b = ScriptBuilder::new();
        for tok in asm.split_whitespace() {
            if let Some(inner) = tok.strip_prefix('<').and_then(|t| t.strip_suffix('>')) {
                let data = hex::decode(inner).map_err(|_| ScriptError::BadAsm(tok.to_string()))?;
                b = b.push_slice(&data);
            } else if tok == "OP_0" {
                b = b.push_opcode(OP_0);
            } else {
                let op = opcode_from_name(tok).ok_or_else(|| ScriptError::BadAsm(tok.to_string()))?;
                b = b.push_opcode(op);
            }
        }
        Ok(b.into_script())
    }

    /// Whether `needle` appears as a pushed element.
    pub fn contains_push(&self, needle: &[u8]) -> bool {
        self.instructions().any(|i| matches!(i, Ok(Instruction::Push(d)) if d == needle))
    }
}

impl fmt::Debug for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Script({})", self.to_asm())
    }
}

impl Serialize for Script {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Script {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map(Script).map_err(serde::de::Error::custom)
    }
}

pub struct Instructions<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Instructions<'_> {
    pub fn position(&self) -> usize {
        self.pos
    }
}

impl<'a> Iterator for Instructions<'a> {
    type Item = Result<Instruction<'a>, ScriptError>;

    fn next(&mut self) -> Option<Self::Item> {
        let at = self.pos;
        let op = *self.data.get(at)?;
        self.pos += 1;
        let (len, header) = match op {
            OP_0 => return Some(Ok(Instruction::Push(&[]))),
            0x01..=0x4b => (op as usize, 0),
            OP_PUSHDATA1 => match self.data.get(self.pos) {
                Some(&n) => (n as usize, 1),
                None => return self.fail(ScriptError::TruncatedPush(at)),
            },
            OP_PUSHDATA2 => match self.data.get(self.pos..self.pos + 2) {
                Some(b) => (u16::from_le_bytes([b[0], b[1]]) as usize, 2),
                None => return self.fail(ScriptError::TruncatedPush(at)),
            },
            OP_PUSHDATA4 => match self.data.get(self.pos..self.pos + 4) {
                Some(b) => (u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize, 4),
                None => return self.fail(ScriptError::TruncatedPush(at)),
            },
            _ if is_supported_opcode(op) => return Some(Ok(Instruction::Op(op))),
            _ => return self.fail(ScriptError::UnsupportedOpcode { op, at }),
        };
        let start = self.pos + header;
        let end = match start.checked_add(len) {
            Some(end) if end <= self.data.len() => end,
            _ => return self.fail(ScriptError::TruncatedPush(at)),
        };
        self.pos = end;
        Some(Ok(Instruction::Push(&self.data[start..end])))
    }
}

impl<'a> Instructions<'a> {
    fn fail(&mut self, e: ScriptError) -> Option<Result<Instruction<'a>, ScriptError>> {
        self.pos = self.data.len();
        Some(Err(e))
    }
}

pub fn is_supported_opcode(op: u8) -> bool {
    matches!(
        op,
        OP_1NEGATE | OP_1
            ..=OP_16
                | OP_IF
                | OP_ELSE
                | OP_ENDIF
                | OP_DROP
                | OP_EQUAL
                | OP_EQUALVERIFY
                | OP_CHECKSIG
                | OP_CHECKSIGVERIFY
                | OP_CHECKMULTISIG
                | OP_CHECKMULTISIGVERIFY
                | OP_CHECKLOCKTIMEVERIFY
                | OP_CHECKSEQUENCEVERIFY
                | OP_CHECKTEMPLATEVERIFY
    )
}

pub fn opcode_name(op: u8) -> String {
    let name = match op {
        OP_0 => "OP_0",
        OP_PUSHDATA1 => "OP_PUSHDATA1",
        OP_PUSHDATA2 => "OP_PUSHDATA2",
        OP_PUSHDATA4 => "OP_PUSHDATA4",
        OP_1NEGATE => "OP_1NEGATE",
        OP_IF => "OP_IF",
        OP_ELSE => "OP_ELSE",
        OP_ENDIF => "OP_ENDIF",
        OP_DROP => "OP_DROP",
        OP_EQUAL => "OP_EQUAL",
        OP_EQUALVERIFY => "OP_EQUALVERIFY",
        OP_CHECKSIG => "OP_CHECKSIG",
        OP_CHECKSIGVERIFY => "OP_CHECKSIGVERIFY",
        OP_CHECKMULTISIG => "OP_CHECKMULTISIG",
        OP_CHECKMULTISIGVERIFY => "OP_CHECKMULTISIGVERIFY",
        OP_CHECKLOCKTIMEVERIFY => "OP_CHECKLOCKTIMEVERIFY",
        OP_CHECKSEQUENCEVERIFY => "OP_CHECKSEQUENCEVERIFY",
        OP_CHECKTEMPLATEVERIFY => "OP_CHECKTEMPLATEVERIFY",
        OP_1..=OP_16 => return format!("OP_{}", op - OP_1 + 1),
        _ => return format!("OP_UNKNOWN_{:02x}", op),
    };
    name.to_string()
}

fn opcode_from_name(name: &str) -> Option<u8> {
    (0u8..=0xff).find(|&op| (op == OP_0 || is_supported_opcode(op)) && opcode_name(op) == name)
}

/// Minimal script-number encoding (little-endian, sign bit in the top byte).
pub fn encode_scriptnum(n: i64) -> Vec<u8> {
    if n == 0 {
        return Vec::new();
    }
    let negative = n < 0;
    let mut abs = n.unsigned_abs();
    let mut out = Vec::new();
    while abs > 0 {
        out.push((abs & 0xff) as u8);
        abs >>= 8;
    }
    if out.last().unwrap() & 0x80 != 0 {
        out.push(if negative { 0x80 } else { 0x00 });
    } else if negative {
        *out.last_mut().unwrap() |= 0x80;
    }
    out
}

/// Decodes a minimally encoded script number of at most `max_len` bytes.
pub fn decode_scriptnum(bytes: &[u8], max_len: usize) -> Option<i64> {
    if bytes.len() > max_len {
        return None;
    }
    if bytes.is_empty() {
        return Some(0);
    }
    let last = *bytes.last().unwrap();
    // minimal: the top byte may only be 0x00/0x80 if the next byte needs its sign bit
    if last & 0x7f == 0 && (bytes.len() == 1 || bytes[bytes.len() - 2] & 0x80 == 0) {
        return None;
    }
    let mut v: i64 = 0;
    for (i, b) in bytes.iter().enumerate() {
        v |= (*b as i64) << (8 * i);
    }
    if last & 0x80 != 0 {
        v &= !(0x80i64 << (8 * (bytes.len() - 1)));
        v = -v;
    }
    Some(v)
}

/// Incremental script construction with minimal push encoding.
#[derive(Debug, Clone, Default)]
pub struct ScriptBuilder(Vec<u8>);

impl ScriptBuilder {
    pub fn new() -> ScriptBuilder {
        ScriptBuilder(Vec::new())
    }

    pub fn push_opcode(mut self, op: u8) -> ScriptBuilder {
        self.0.push(op);
        self
    }

    pub fn push_int(self, n: i64) -> ScriptBuilder {
        match n {
            0 => self.push_opcode(OP_0),
            -1 => self.push_opcode(OP_1NEGATE),
            1..=16 => self.push_opcode(OP_1 + (n as u8) - 1),
            _ => self.push_slice(&encode_scriptnum(n)),
        }
    }

    pub fn push_slice(mut self, data: &[u8]) -> ScriptBuilder {
        match data.len() {
            0 => self.0.push(OP_0),
            n @ 1..=0x4b => self.0.push(n as u8),
            n @ 0x4c..=0xff => {
                self.0.push(OP_PUSHDATA1);
                self.0.push(n as u8);
            }
            n @ 0x100..=0xffff => {
                self.0.push(OP_PUSHDATA2);
                self.0.extend_from_slice(&(n as u16).to_le_bytes());
            }
            n => {
                self.0.push(OP_PUSHDATA4);
                self.0.extend_from_slice(&(n as u32).to_le_bytes());
            }
        }
        self.0.extend_from_slice(data);
        self
    }

    pub fn append(mut self, other: &Script) -> ScriptBuilder {
        self.0.extend_from_slice(other.as_bytes());
        self
    }

    pub fn into_script(self) -> Script {
        Script(self.0)
    }
}
