// SPDX-License-Identifier: CC0-1.0

//! Deposits, covenant templates, commitment signatures and proofs for the three
//! mechanisms: deleted-key, recovered-key and CHECKTEMPLATEVERIFY.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::{CryptoError, PublicKey};
use crate::ctv::CtvError;
use crate::script::MAX_MULTISIG_KEYS;
use crate::sighash::SighashError;
use crate::tx::TxError;

pub mod commitment;
pub mod deposit;
pub mod proof;
pub mod size;

pub use commitment::{
    build_recovered_key_covenant, sign_commitment, CommitmentSignature, CovenantTemplate, RecoveredStyle,
};
pub use deposit::{deposit_address, Branch, Commitment, DepositSpec, RefundPath, Satisfaction, SpendPath};
pub use proof::{
    prove_covenant, prove_reserves, verify_proof, CovenantEvidence, DeletionAttestation, Evidence, ProofBundle,
    ProofKind, ProofRejection, ProofSummary,
};
pub use size::{size_report, SizeReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    DeletedKey,
    RecoveredKey,
    Ctv,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::DeletedKey, Mechanism::RecoveredKey, Mechanism::Ctv];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::DeletedKey => "deleted-key",
            Mechanism::RecoveredKey => "recovered-key",
            Mechanism::Ctv => "ctv",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = CovenantError;
    fn from_str(s: &str) -> Result<Mechanism, CovenantError> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CovenantError::InvalidPolicy(format!("unknown mechanism {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CovenantError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("missing mechanism parameters: {0}")]
    MissingExtras(&'static str),
    #[error("key {0} is not in the enforcement policy")]
    KeyNotInPolicy(PublicKey),
    #[error("input {index} out of range for {inputs} inputs")]
    InputOutOfRange { index: usize, inputs: usize },
    #[error("recovered-key commitments require a NOINPUT sighash type")]
    NotNoinput,
    #[error("wrong number of signatures: {0}")]
    SignatureCount(String),
    #[error(transparent)]
    Sighash(#[from] SighashError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Ctv(#[from] CtvError),
}

fn check_threshold(name: &str, m: usize, n: usize, keys: &[PublicKey]) -> Result<(), CovenantError> {
    if n != keys.len() {
        return Err(CovenantError::InvalidPolicy(format!("{name}: n = {n} but {} keys given", keys.len())));
    }
    if !(1 <= m && m <= n && n <= MAX_MULTISIG_KEYS) {
        return Err(CovenantError::InvalidPolicy(format!("{name}: need 1 <= {m} <= {n} <= {MAX_MULTISIG_KEYS}")));
    }
    let mut sorted = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != keys.len() {
        return Err(CovenantError::InvalidPolicy(format!("{name}: duplicate keys")));
    }
    Ok(())
}

/// `m`-of-`n` clause over the enforcement keys `P_l`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnforcementPolicy {
    pub m: usize,
    pub n: usize,
    pub keys: Vec<PublicKey>,
}

impl EnforcementPolicy {
    pub fn new(m: usize, keys: Vec<PublicKey>) -> Result<EnforcementPolicy, CovenantError> {
        let p = EnforcementPolicy { m, n: keys.len(), keys };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CovenantError> {
        check_threshold("enforcement", self.m, self.n, &self.keys)
    }

    /// Number of private keys that must be destroyed before the covenant is enforced.
    pub fn deletions_required(&self) -> usize {
        self.n - self.m + 1
    }

    pub fn position(&self, key: &PublicKey) -> Option<usize> {
        self.keys.iter().position(|k| k == key)
    }
}

/// `j`-of-`k` clause over the custodial keys `Q_i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CustodialPolicy {
    pub j: usize,
    pub k: usize,
    pub keys: Vec<PublicKey>,
}

impl CustodialPolicy {
    pub fn new(j: usize, keys: Vec<PublicKey>) -> Result<CustodialPolicy, CovenantError> {
        let p = CustodialPolicy { j, k: keys.len(), keys };
        p.validate()?;
        Ok(p)
    }

    pub fn single(key: PublicKey) -> CustodialPolicy {
        CustodialPolicy { j: 1, k: 1, keys: vec![key] }
    }

    pub fn validate(&self) -> Result<(), CovenantError> {
        check_threshold("custody", self.j, self.k, &self.keys)
    }

    pub fn position(&self, key: &PublicKey) -> Option<usize> {
        self.keys.iter().position(|k| k == key)
    }
}
