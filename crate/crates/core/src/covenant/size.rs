// SPDX-License-Identifier: CC0-1.0

//! Byte accounting for the commitment portion of each mechanism.
//!
//! Signature-based commitments are counted as signature + 33-byte compressed key + 1
//! CHECKSIG opcode, without the key's push prefix. Two totals are given: one with
//! the DER signature alone and one that includes the trailing sighash type byte. A
//! CTV commitment is the rendered `<h> CTV` script, push prefix included.

use serde::Serialize;

use super::{Commitment, CovenantError, Mechanism};
use crate::crypto::{EcdsaSignature, SignatureSize};
use crate::ctv::CtvTemplateHash;

pub const COMPRESSED_KEY_BYTES: usize = 33;
pub const OPCODE_BYTES: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SizeReport {
    pub mechanism: Mechanism,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signature: Option<SignatureSize>,
    pub key_bytes: usize,
    pub opcode_bytes: usize,
    pub hash_bytes: usize,
    /// Commitment bytes counting the DER signature only.
    pub der_only: usize,
    /// Commitment bytes counting the DER signature plus its type byte.
    pub with_type_byte: usize,
}

/// Size of the commitment portion. Deleted-key and recovered-key need the commitment
/// signature; CTV takes none.
pub fn size_report(mechanism: Mechanism, signature: Option<&EcdsaSignature>) -> Result<SizeReport, CovenantError> {
    match mechanism {
        Mechanism::Ctv => {
            let core =
                Commitment::Ctv { hashes: vec![CtvTemplateHash { hash: [0; 32], input_index: 0 }] }.script()?.len();
            Ok(SizeReport {
                mechanism,
                signature: None,
                key_bytes: 0,
                opcode_bytes: OPCODE_BYTES,
                hash_bytes: 32,
                der_only: core,
                with_type_byte: core,
            })
        }
        _ => {
            let sig = signature.ok_or(CovenantError::MissingExtras("size report needs the commitment signature"))?;
            let size = sig.size();
            let rest = COMPRESSED_KEY_BYTES + OPCODE_BYTES;
            Ok(SizeReport {
                mechanism,
                signature: Some(size),
                key_bytes: COMPRESSED_KEY_BYTES,
                opcode_bytes: OPCODE_BYTES,
                hash_bytes: 0,
                der_only: size.der + rest,
                with_type_byte: size.with_type_byte + rest,
            })
        }
    }
}
