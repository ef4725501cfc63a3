// SPDX-License-Identifier: CC0-1.0

//! Template hash for `OP_CHECKTEMPLATEVERIFY`.
//!
//! The hash is a single SHA256 over, in order:
//!
//! | field              | encoding                                        |
//! |--------------------|-------------------------------------------------|
//! | version            | 4 bytes LE                                      |
//! | locktime           | 4 bytes LE                                      |
//! | scriptSigs hash    | omitted: every input has an empty scriptSig     |
//! | number of inputs   | 4 bytes LE                                      |
//! | sequences hash     | sha256 of every input sequence, 4 bytes LE each |
//! | number of outputs  | 4 bytes LE                                      |
//! | outputs hash       | sha256 of every output, wire-serialized         |
//! | input index        | 4 bytes LE                                      |
//!
//! Outpoints are not committed, so a template can be hashed before the output it
//! spends exists.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::tx::{sha256, write_output, Transaction};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CtvError {
    #[error("input index {index} out of range for {inputs} inputs")]
    InputOutOfRange { index: u32, inputs: usize },
}

/// A 32-byte template hash together with the input index it was computed for.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CtvTemplateHash {
    #[serde(with = "crate::hexser::array32")]
    pub hash: [u8; 32],
    pub input_index: u32,
}

impl fmt::Debug for CtvTemplateHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CtvTemplateHash({}, {})", hex::encode(self.hash), self.input_index)
    }
}

/// The preimage hashed by [`ctv_hash`].
pub fn ctv_preimage(tx: &Transaction, input_index: u32) -> Result<Vec<u8>, CtvError> {
    if input_index as usize >= tx.inputs.len() {
        return Err(CtvError::InputOutOfRange { index: input_index, inputs: tx.inputs.len() });
    }
    let mut sequences = Vec::with_capacity(4 * tx.inputs.len());
    for input in &tx.inputs {
        sequences.extend_from_slice(&input.sequence.to_le_bytes());
    }
    let mut outputs = Vec::new();
    for output in &tx.outputs {
        write_output(&mut outputs, output);
    }
    let mut buf = Vec::with_capacity(4 * 5 + 64);
    buf.extend_from_slice(&tx.version.to_le_bytes());
    buf.extend_from_slice(&tx.locktime.to_le_bytes());
    buf.extend_from_slice(&(tx.inputs.len() as u32).to_le_bytes());
    buf.extend_from_slice(&sha256(&sequences));
    buf.extend_from_slice(&(tx.outputs.len() as u32).to_le_bytes());
    buf.extend_from_slice(&sha256(&outputs));
    buf.extend_from_slice(&input_index.to_le_bytes());
    Ok(buf)
}

pub fn ctv_hash(tx: &Transaction, input_index: u32) -> Result<CtvTemplateHash, CtvError> {
    Ok(CtvTemplateHash { hash: sha256(&ctv_preimage(tx, input_index)?), input_index })
}
