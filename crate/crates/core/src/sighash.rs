// SPDX-License-Identifier: CC0-1.0

//! Signature hashes for SegWit v0 inputs, extended with a NOINPUT mode.
//!
//! The digest is the double SHA256 of the following preimage (all integers
//! little-endian):
//!
//! | field           | bytes | ALL                | ANYONECANPAY | NONE | SINGLE              | NOINPUT                 |
//! |-----------------|-------|--------------------|--------------|------|---------------------|-------------------------|
//! | version         | 4     | yes                |              |      |                     |                         |
//! | hashPrevouts    | 32    | sha256d(outpoints) | zero         |      |                     | zero                    |
//! | hashSequence    | 32    | sha256d(sequences) | zero         | zero | zero                |                         |
//! | outpoint        | 36    | spent outpoint     |              |      |                     | zero                    |
//! | scriptCode      | var   | witness script     |              |      |                     | empty (single `0x00`)   |
//! | amount          | 8     | spent amount       |              |      |                     | zero                    |
//! | nSequence       | 4     | own sequence       |              |      |                     |                         |
//! | hashOutputs     | 32    | sha256d(outputs)   |              | zero | sha256d(output[i])  | always all outputs      |
//! | locktime        | 4     | yes                |              |      |                     |                         |
//! | sighash type    | 4     | type byte as u32   |              |      |                     |                         |
//!
//! Blank cells mean "as for ALL". NOINPUT is assigned flag bit `0x40` and commits to
//! every output whatever the base type. SIGHASH_SINGLE without a matching output is an
//! error rather than the legacy "digest of one".

use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::script::Script;
use crate::tx::{sha256d, write_compact_size, write_outpoint, write_output, Amount, Transaction};

pub const SIGHASH_ALL: u8 = 0x01;
pub const SIGHASH_NONE: u8 = 0x02;
pub const SIGHASH_SINGLE: u8 = 0x03;
pub const SIGHASH_NOINPUT: u8 = 0x40;
pub const SIGHASH_ANYONECANPAY: u8 = 0x80;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SighashError {
    #[error("input index {index} out of range for {inputs} inputs")]
    InputOutOfRange { index: usize, inputs: usize },
    #[error("SIGHASH_SINGLE at input {0} has no matching output")]
    SingleWithoutOutput(usize),
    #[error("invalid sighash type byte {0:#04x}")]
    InvalidType(u8),
    #[error("unknown sighash type {0:?}")]
    UnknownName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseType {
    All,
    None,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SigHashType {
    pub base: BaseType,
    pub anyonecanpay: bool,
    pub noinput: bool,
}

impl SigHashType {
    pub const ALL: SigHashType = SigHashType::new(BaseType::All, false, false);
    pub const NONE: SigHashType = SigHashType::new(BaseType::None, false, false);
    pub const SINGLE: SigHashType = SigHashType::new(BaseType::Single, false, false);
    pub const ALL_ANYONECANPAY: SigHashType = SigHashType::new(BaseType::All, true, false);
    pub const NONE_ANYONECANPAY: SigHashType = SigHashType::new(BaseType::None, true, false);
    pub const SINGLE_ANYONECANPAY: SigHashType = SigHashType::new(BaseType::Single, true, false);
    pub const ALL_NOINPUT: SigHashType = SigHashType::new(BaseType::All, false, true);
    pub const NOINPUT_ANYONECANPAY: SigHashType = SigHashType::new(BaseType::All, true, true);

    pub const fn new(base: BaseType, anyonecanpay: bool, noinput: bool) -> SigHashType {
        SigHashType { base, anyonecanpay, noinput }
    }

    pub fn to_byte(self) -> u8 {
        let mut b = match self.base {
            BaseType::All => SIGHASH_ALL,
            BaseType::None => SIGHASH_NONE,
            BaseType::Single => SIGHASH_SINGLE,
        };
        if self.anyonecanpay {
            b |= SIGHASH_ANYONECANPAY;
        }
        if self.noinput {
            b |= SIGHASH_NOINPUT;
        }
        b
    }

    /// Strict decoding: only the three base values with the two flag bits.
    pub fn from_byte(b: u8) -> Result<SigHashType, SighashError> {
        let base = match b & 0x3f {
            SIGHASH_ALL => BaseType::All,
            SIGHASH_NONE => BaseType::None,
            SIGHASH_SINGLE => BaseType::Single,
            _ => return Err(SighashError::InvalidType(b)),
        };
        Ok(SigHashType { base, anyonecanpay: b & SIGHASH_ANYONECANPAY != 0, noinput: b & SIGHASH_NOINPUT != 0 })
    }
}

impl fmt::Display for SigHashType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.base {
            BaseType::All => "ALL",
            BaseType::None => "NONE",
            BaseType::Single => "SINGLE",
        };
        f.write_str(base)?;
        if self.noinput {
            f.write_str("|NOINPUT")?;
        }
        if self.anyonecanpay {
            f.write_str("|ANYONECANPAY")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for SigHashType {
    type Err = SighashError;

    /// Parses `ALL`, `SINGLE|ANYONECANPAY`, `ALL|NOINPUT` and the like, or a byte
    /// such as `0xc1`.
    fn from_str(s: &str) -> Result<SigHashType, SighashError> {
        if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            let b = u8::from_str_radix(h, 16).map_err(|_| SighashError::UnknownName(s.into()))?;
            return SigHashType::from_byte(b);
        }
        let (mut base, mut acp, mut noinput) = (None, false, false);
        for part in s.split('|').map(|p| p.trim().to_ascii_uppercase()) {
            match part.as_str() {
                "ALL" if base.is_none() => base = Some(BaseType::All),
                "NONE" if base.is_none() => base = Some(BaseType::None),
                "SINGLE" if base.is_none() => base = Some(BaseType::Single),
                "ANYONECANPAY" if !acp => acp = true,
                "NOINPUT" if !noinput => noinput = true,
                _ => return Err(SighashError::UnknownName(s.into())),
            }
        }
        Ok(SigHashType::new(base.unwrap_or(BaseType::All), acp, noinput))
    }
}

impl Serialize for SigHashType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.to_byte())
    }
}

impl<'de> Deserialize<'de> for SigHashType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        SigHashType::from_byte(u8::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// What the spent output contributes to the digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpentOutputContext {
    /// For P2WSH this is the full witness script.
    pub script_code: Script,
    pub amount: Amount,
}

/// Which inputs a signature covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputCoverage {
    AllInputs,
    ThisInputOnly,
}

/// Which outputs a signature covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputCoverage {
    AllOutputs,
    MatchingOutput,
    NoOutputs,
}

/// Declarative description of the fields a sighash type endorses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CommittedFields {
    pub version: bool,
    pub locktime: bool,
    pub inputs: InputCoverage,
    /// Outpoints of the other inputs (only meaningful with `AllInputs`).
    pub other_outpoints: bool,
    /// Sequences of the other inputs.
    pub other_sequences: bool,
    pub outputs: OutputCoverage,
    /// The spent outpoint of the signing input.
    pub outpoint: bool,
    pub script_code: bool,
    pub amount: bool,
    pub own_sequence: bool,
}

/// The fields endorsed by a signature of type `ty`.
pub fn committed_fields(ty: SigHashType) -> CommittedFields {
    let inputs = if ty.anyonecanpay { InputCoverage::ThisInputOnly } else { InputCoverage::AllInputs };
    let outputs = if ty.noinput {
        OutputCoverage::AllOutputs
    } else {
        match ty.base {
            BaseType::All => OutputCoverage::AllOutputs,
            BaseType::Single => OutputCoverage::MatchingOutput,
            BaseType::None => OutputCoverage::NoOutputs,
        }
    };
    CommittedFields {
        version: true,
        locktime: true,
        inputs,
        other_outpoints: !ty.anyonecanpay && !ty.noinput,
        other_sequences: !ty.anyonecanpay && ty.base == BaseType::All,
        outputs,
        outpoint: !ty.noinput,
        script_code: !ty.noinput,
        amount: !ty.noinput,
        own_sequence: true,
    }
}

/// Computes the digest a signature of type `ty` on input `input_index` commits to.
pub fn sighash_digest(
    tx: &Transaction,
    input_index: usize,
    ctx: &SpentOutputContext,
    ty: SigHashType,
) -> Result<[u8; 32], SighashError> {
    Ok(sha256d(&sighash_preimage(tx, input_index, ctx, ty)?))
}

/// The exact byte string hashed by [`sighash_digest`].
pub fn sighash_preimage(
    tx: &Transaction,
    input_index: usize,
    ctx: &SpentOutputContext,
    ty: SigHashType,
) -> Result<Vec<u8>, SighashError> {
    let input = tx
        .inputs
        .get(input_index)
        .ok_or(SighashError::InputOutOfRange { index: input_index, inputs: tx.inputs.len() })?;
    let fields = committed_fields(ty);
    let zero = [0u8; 32];

    let hash_prevouts = if fields.other_outpoints {
        let mut buf = Vec::with_capacity(36 * tx.inputs.len());
        for i in &tx.inputs {
            write_outpoint(&mut buf, &i.previous);
        }
        sha256d(&buf)
    } else {
        zero
    };

    let hash_sequence = if fields.other_sequences {
        let mut buf = Vec::with_capacity(4 * tx.inputs.len());
        for i in &tx.inputs {
            buf.extend_from_slice(&i.sequence.to_le_bytes());
        }
        sha256d(&buf)
    } else {
        zero
    };

    let hash_outputs = match fields.outputs {
        OutputCoverage::AllOutputs => {
            let mut buf = Vec::new();
            for o in &tx.outputs {
                write_output(&mut buf, o);
            }
            sha256d(&buf)
        }
        OutputCoverage::MatchingOutput => {
            let out = tx.outputs.get(input_index).ok_or(SighashError::SingleWithoutOutput(input_index))?;
            let mut buf = Vec::new();
            write_output(&mut buf, out);
            sha256d(&buf)
        }
        OutputCoverage::NoOutputs => zero,
    };

    let mut pre = Vec::with_capacity(160 + ctx.script_code.len());
    pre.extend_from_slice(&tx.version.to_le_bytes());
    pre.extend_from_slice(&hash_prevouts);
    pre.extend_from_slice(&hash_sequence);
    if fields.outpoint {
        write_outpoint(&mut pre, &input.previous);
    } else {
        pre.extend_from_slice(&[0u8; 36]);
    }
    if fields.script_code {
        write_compact_size(&mut pre, ctx.script_code.len() as u64);
        pre.extend_from_slice(ctx.script_code.as_bytes());
    } else {
        pre.push(0x00);
    }
    let amount = if fields.amount { ctx.amount.to_sat() } else { 0 };
    pre.extend_from_slice(&amount.to_le_bytes());
    pre.extend_from_slice(&input.sequence.to_le_bytes());
    pre.extend_from_slice(&hash_outputs);
    pre.extend_from_slice(&tx.locktime.to_le_bytes());
    pre.extend_from_slice(&(ty.to_byte() as u32).to_le_bytes());
    Ok(pre)
}
