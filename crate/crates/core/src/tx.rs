// SPDX-License-Identifier: CC0-1.0

//! Transaction data model, wire serialization and identifiers.
//!
//! The layout follows the Bitcoin consensus encoding: non-witness serialization for the
//! txid, and the extended (marker `0x00`, flag `0x01`) layout when any input carries
//! witness data. Only SegWit v0 spending is modelled, so every input has an empty
//! scriptSig and a decoder rejects anything else.

use core::fmt;
use core::ops::{Add, Sub};
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::script::Script;

/// Maximum number of satoshis that can ever exist.
pub const MAX_MONEY: u64 = 21_000_000 * 100_000_000;
/// Scripts longer than this fail serialization.
pub const MAX_SCRIPT_SIZE: usize = 10_000;
/// Maximum size of a witness script committed to by a P2WSH output.
pub const MAX_WITNESS_SCRIPT_SIZE: usize = 3_600;

/// Sequence value that opts out of replacement but keeps lock-time enabled.
pub const SEQUENCE_NO_RBF: u32 = 0xFFFF_FFFE;
/// Sequence value signalling replaceability.
pub const SEQUENCE_RBF: u32 = 0xFFFF_FFFD;
/// Final sequence; disables lock-time for the input.
pub const SEQUENCE_FINAL: u32 = 0xFFFF_FFFF;

/// SHA256 of `data`.
pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Double SHA256 of `data`.
pub fn sha256d(data: &[u8]) -> [u8; 32] {
    sha256(&sha256(data))
}

/// Errors from building, encoding or decoding transactions.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TxError {
    #[error("amount {0} exceeds the money supply")]
    AmountTooLarge(u64),
    #[error("amount arithmetic overflowed")]
    AmountOverflow,
    #[error("script of {0} bytes exceeds the {MAX_SCRIPT_SIZE} byte limit")]
    ScriptTooLarge(usize),
    #[error("witness script of {0} bytes is empty or exceeds {MAX_WITNESS_SCRIPT_SIZE} bytes")]
    BadWitnessScriptSize(usize),
    #[error("unexpected end of data at byte {0}")]
    UnexpectedEof(usize),
    #[error("non-canonical compact size at byte {0}")]
    NonCanonicalCompactSize(usize),
    #[error("non-empty scriptSig at byte {0}; only segwit spends are supported")]
    ScriptSigPresent(usize),
    #[error("witness flag set but no witness data present")]
    SuperfluousWitness,
    #[error("unknown segwit flag {0:#04x}")]
    UnknownFlag(u8),
    #[error("{0} trailing bytes after transaction")]
    TrailingBytes(usize),
    #[error("invalid hex: {0}")]
    Hex(String),
}

/// A quantity of satoshis, always within the money supply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Amount(u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);
    pub const MAX: Amount = Amount(MAX_MONEY);

    pub fn from_sat(value: u64) -> Result<Amount, TxError> {
        if value > MAX_MONEY {
            return Err(TxError::AmountTooLarge(value));
        }
        Ok(Amount(value))
    }

    pub const fn to_sat(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, rhs: Amount) -> Result<Amount, TxError> {
        let sum = self.0.checked_add(rhs.0).ok_or(TxError::AmountOverflow)?;
        Amount::from_sat(sum).map_err(|_| TxError::AmountOverflow)
    }

    pub fn checked_sub(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_sub(rhs.0).map(Amount)
    }

    /// Sums an iterator of amounts, failing on overflow of the money supply.
    pub fn checked_sum<I: IntoIterator<Item = Amount>>(iter: I) -> Result<Amount, TxError> {
        iter.into_iter().try_fold(Amount::ZERO, Amount::checked_add)
    }
}

impl Add for Amount {
    type Output = Amount;
    /// Panics if the result would exceed [`MAX_MONEY`]; use [`Amount::checked_add`] on
    /// untrusted values.
    fn add(self, rhs: Amount) -> Amount {
        self.checked_add(rhs).expect("amount overflow")
    }
}

impl Sub for Amount {
    type Output = Amount;
    fn sub(self, rhs: Amount) -> Amount {
        self.checked_sub(rhs).expect("amount underflow")
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} sat", self.0)
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(self.0)
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u64::deserialize(d)?;
        Amount::from_sat(v).map_err(serde::de::Error::custom)
    }
}

/// A transaction identifier: double-SHA256 of the non-witness serialization.
///
/// Stored in hash byte order; displayed byte-reversed as is conventional.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Txid([u8; 32]);

impl Txid {
    pub const NULL: Txid = Txid([0u8; 32]);

    pub const fn from_byte_array(bytes: [u8; 32]) -> Txid {
        Txid(bytes)
    }

    pub const fn to_byte_array(self) -> [u8; 32] {
        self.0
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Display for Txid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut rev = self.0;
        rev.reverse();
        f.write_str(&hex::encode(rev))
    }
}

impl fmt::Debug for Txid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Txid({})", self)
    }
}

impl FromStr for Txid {
    type Err = TxError;
    fn from_str(s: &str) -> Result<Txid, TxError> {
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(s, &mut bytes).map_err(|e| TxError::Hex(e.to_string()))?;
        bytes.reverse();
        Ok(Txid(bytes))
    }
}

impl Serialize for Txid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Txid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Reference to a transaction output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutPoint {
    pub txid: Txid,
    pub vout: u32,
}

impl OutPoint {
    /// The reserved outpoint used by proof-of-reserves commitment inputs.
    pub const NULL: OutPoint = OutPoint { txid: Txid::NULL, vout: u32::MAX };

    pub const fn new(txid: Txid, vout: u32) -> OutPoint {
        OutPoint { txid, vout }
    }

    pub fn is_null(&self) -> bool {
        *self == OutPoint::NULL
    }
}

impl fmt::Display for OutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.txid, self.vout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxInput {
    pub previous: OutPoint,
    pub sequence: u32,
    #[serde(with = "crate::hexser::vec_of_bytes")]
    pub witness: Vec<Vec<u8>>,
}

impl TxInput {
    pub fn new(previous: OutPoint, sequence: u32) -> TxInput {
        TxInput { previous, sequence, witness: Vec::new() }
    }

    /// Whether this input opts in to replace-by-fee.
    pub fn signals_rbf(&self) -> bool {
        self.sequence < SEQUENCE_NO_RBF
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxOutput {
    pub amount: Amount,
    pub locking_script: Script,
}

impl TxOutput {
    pub fn new(amount: Amount, locking_script: Script) -> TxOutput {
        TxOutput { amount, locking_script }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub version: i32,
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
    pub locktime: u32,
}

impl Transaction {
    pub fn has_witness(&self) -> bool {
        self.inputs.iter().any(|i| !i.witness.is_empty())
    }

    /// Serializes the transaction, with or without witness data.
    ///
    /// With `include_witness` the extended layout is produced only when some input
    /// actually carries witness data, so a witness-free transaction serializes
    /// identically in both modes.
    pub fn serialize(&self, include_witness: bool) -> Result<Vec<u8>, TxError> {
        for out in &self.outputs {
            if out.locking_script.len() > MAX_SCRIPT_SIZE {
                return Err(TxError::ScriptTooLarge(out.locking_script.len()));
            }
        }
        Ok(self.encode(include_witness))
    }

    pub(crate) fn encode(&self, include_witness: bool) -> Vec<u8> {
        let witness = include_witness && self.has_witness();
        let mut buf = Vec::with_capacity(64 + 64 * self.inputs.len() + 48 * self.outputs.len());
        buf.extend_from_slice(&self.version.to_le_bytes());
        if witness {
            buf.extend_from_slice(&[0x00, 0x01]);
        }
        write_compact_size(&mut buf, self.inputs.len() as u64);
        for input in &self.inputs {
            write_outpoint(&mut buf, &input.previous);
            // empty scriptSig
            buf.push(0x00);
            buf.extend_from_slice(&input.sequence.to_le_bytes());
        }
        write_compact_size(&mut buf, self.outputs.len() as u64);
        for output in &self.outputs {
            write_output(&mut buf, output);
        }
        if witness {
            for input in &self.inputs {
                write_compact_size(&mut buf, input.witness.len() as u64);
                for item in &input.witness {
                    write_compact_size(&mut buf, item.len() as u64);
                    buf.extend_from_slice(item);
                }
            }
        }
        buf.extend_from_slice(&self.locktime.to_le_bytes());
        buf
    }

    /// Decodes a transaction from either layout. The whole slice must be consumed.
    pub fn deserialize(bytes: &[u8]) -> Result<Transaction, TxError> {
        let mut r = Reader::new(bytes);
        let version = r.read_u32()? as i32;
        let mut segwit = false;
        if r.peek() == Some(0x00) {
            r.pos += 1;
            let flag = r.read_u8()?;
            if flag != 0x01 {
                return Err(TxError::UnknownFlag(flag));
            }
            segwit = true;
        }
        let n_in = r.read_compact_size()?;
        let mut inputs = Vec::with_capacity(r.bounded_capacity(n_in, 41));
        for _ in 0..n_in {
            let previous = r.read_outpoint()?;
            let at = r.pos;
            let script_sig_len = r.read_compact_size()?;
            if script_sig_len != 0 {
                return Err(TxError::ScriptSigPresent(at));
            }
            let sequence = r.read_u32()?;
            inputs.push(TxInput { previous, sequence, witness: Vec::new() });
        }
        let n_out = r.read_compact_size()?;
        let mut outputs = Vec::with_capacity(r.bounded_capacity(n_out, 9));
        for _ in 0..n_out {
            let at = r.pos;
            let value = r.read_u64()?;
            let amount = Amount::from_sat(value).map_err(|_| {
                let _ = at;
                TxError::AmountTooLarge(value)
            })?;
            let script = r.read_var_bytes()?;
            if script.len() > MAX_SCRIPT_SIZE {
                return Err(TxError::ScriptTooLarge(script.len()));
            }
            outputs.push(TxOutput { amount, locking_script: Script::from_bytes(script) });
        }
        if segwit {
            for input in inputs.iter_mut() {
                let n_items = r.read_compact_size()?;
                let mut items = Vec::with_capacity(r.bounded_capacity(n_items, 1));
                for _ in 0..n_items {
                    items.push(r.read_var_bytes()?);
                }
                input.witness = items;
            }
            if inputs.iter().all(|i| i.witness.is_empty()) {
                return Err(TxError::SuperfluousWitness);
            }
        }
        let locktime = r.read_u32()?;
        if r.remaining() != 0 {
            return Err(TxError::TrailingBytes(r.remaining()));
        }
        Ok(Transaction { version, inputs, outputs, locktime })
    }

    /// Transaction identifier over the non-witness serialization.
    pub fn txid(&self) -> Txid {
        Txid(sha256d(&self.encode(false)))
    }

    /// Identifier over the witness serialization.
    pub fn wtxid(&self) -> Txid {
        Txid(sha256d(&self.encode(true)))
    }

    /// Size in bytes of the full (witness) serialization; used for fee rates.
    pub fn size(&self) -> usize {
        self.encode(true).len()
    }

    pub fn base_size(&self) -> usize {
        self.encode(false).len()
    }

    pub fn total_output(&self) -> Result<Amount, TxError> {
        Amount::checked_sum(self.outputs.iter().map(|o| o.amount))
    }

    /// Whether any input opts in to replacement.
    pub fn signals_rbf(&self) -> bool {
        self.inputs.iter().any(TxInput::signals_rbf)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode(true))
    }

    pub fn from_hex(s: &str) -> Result<Transaction, TxError> {
        let bytes = hex::decode(s.trim()).map_err(|e| TxError::Hex(e.to_string()))?;
        Transaction::deserialize(&bytes)
    }
}

/// Returns the P2WSH locking script `0x00 PUSH32(SHA256(witness_script))`.
pub fn p2wsh_address(witness_script: &Script) -> Result<Script, TxError> {
    let len = witness_script.len();
    if len == 0 || len > MAX_WITNESS_SCRIPT_SIZE {
        return Err(TxError::BadWitnessScriptSize(len));
    }
    let mut bytes = Vec::with_capacity(34);
    bytes.push(0x00);
    bytes.push(0x20);
    bytes.extend_from_slice(&sha256(witness_script.as_bytes()));
    Ok(Script::from_bytes(bytes))
}

/// Extracts the 32-byte program of a P2WSH locking script.
pub fn p2wsh_program(locking_script: &Script) -> Option<[u8; 32]> {
    let b = locking_script.as_bytes();
    if b.len() == 34 && b[0] == 0x00 && b[1] == 0x20 {
        let mut program = [0u8; 32];
        program.copy_from_slice(&b[2..]);
        Some(program)
    } else {
        None
    }
}

/// Human rendering of a P2WSH locking script: `p2wsh:` followed by the program in hex.
pub fn render_address(locking_script: &Script) -> Option<String> {
    p2wsh_program(locking_script).map(|p| format!("p2wsh:{}", hex::encode(p)))
}

/// Parses an address produced by [`render_address`] back into a locking script.
pub fn parse_address(s: &str) -> Option<Script> {
    let program = s.strip_prefix("p2wsh:")?;
    let mut bytes = [0u8; 32];
    hex::decode_to_slice(program, &mut bytes).ok()?;
    let mut script = vec![0x00, 0x20];
    script.extend_from_slice(&bytes);
    Some(Script::from_bytes(script))
}

pub(crate) fn write_compact_size(buf: &mut Vec<u8>, n: u64) {
    match n {
        0..=0xFC => buf.push(n as u8),
        0xFD..=0xFFFF => {
            buf.push(0xFD);
            buf.extend_from_slice(&(n as u16).to_le_bytes());
        }
        0x1_0000..=0xFFFF_FFFF => {
            buf.push(0xFE);
            buf.extend_from_slice(&(n as u32).to_le_bytes());
        }
        _ => {
            buf.push(0xFF);
            buf.extend_from_slice(&n.to_le_bytes());
        }
    }
}

pub(crate) fn write_outpoint(buf: &mut Vec<u8>, o: &OutPoint) {
    buf.extend_from_slice(o.txid.as_bytes());
    buf.extend_from_slice(&o.vout.to_le_bytes());
}

pub(crate) fn write_output(buf: &mut Vec<u8>, o: &TxOutput) {
    buf.extend_from_slice(&o.amount.to_sat().to_le_bytes());
    write_compact_size(buf, o.locking_script.len() as u64);
    buf.extend_from_slice(o.locking_script.as_bytes());
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    // Never pre-allocate more elements than the remaining bytes could describe.
    fn bounded_capacity(&self, count: u64, min_elem_size: usize) -> usize {
        let max = self.remaining() / min_elem_size.max(1);
        (count as usize).min(max)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TxError> {
        if self.remaining() < n {
            return Err(TxError::UnexpectedEof(self.data.len()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_u8(&mut self) -> Result<u8, TxError> {
        Ok(self.take(1)?[0])
    }

    fn read_u32(&mut self) -> Result<u32, TxError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn read_u64(&mut self) -> Result<u64, TxError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn read_compact_size(&mut self) -> Result<u64, TxError> {
        let at = self.pos;
        let first = self.read_u8()?;
        let (value, min) = match first {
            0xFD => (u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as u64, 0xFD),
            0xFE => (u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as u64, 0x1_0000),
            0xFF => (u64::from_le_bytes(self.take(8)?.try_into().unwrap()), 0x1_0000_0000),
            n => return Ok(n as u64),
        };
        if value < min {
            return Err(TxError::NonCanonicalCompactSize(at));
        }
        Ok(value)
    }

    fn read_var_bytes(&mut self) -> Result<Vec<u8>, TxError> {
        let len = self.read_compact_size()?;
        if len > self.remaining() as u64 {
            return Err(TxError::UnexpectedEof(self.data.len()));
        }
        Ok(self.take(len as usize)?.to_vec())
    }

    fn read_outpoint(&mut self) -> Result<OutPoint, TxError> {
        let txid: [u8; 32] = self.take(32)?.try_into().unwrap();
        let vout = self.read_u32()?;
        Ok(OutPoint { txid: Txid(txid), vout })
    }
}
