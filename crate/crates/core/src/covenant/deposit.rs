// SPDX-License-Identifier: CC0-1.0

//! Deposit witness scripts.
//!
//! A deposit script is a sequence of clauses. Every clause except the last is
//! rendered in its VERIFY form.
//!
//! ```text
//! deleted-key    [<t> CLTV DROP] m <P_1> .. <P_n> n CHECKMULTISIGVERIFY  <custody>
//! recovered-key  [<t> CLTV DROP] <P> CHECKSIGVERIFY                      <custody>
//!                [<t> CLTV DROP] IF <P_a> CHECKSIGVERIFY ELSE <P_b> CHECKSIGVERIFY ENDIF <custody>
//! ctv            [<t> CLTV DROP] <custody, VERIFY form> <h> CTV
//!                [<t> CLTV DROP] <custody, VERIFY form> IF <h_a> ELSE <h_b> ENDIF CTV
//! ```
//!
//! `<custody>` is `<Q> CHECKSIG` for a single key and `j <Q_1> .. <Q_k> k
//! CHECKMULTISIG` otherwise; a 1-of-1 enforcement clause likewise uses CHECKSIG.
//! With a refund path the whole body becomes
//! `IF <body> ELSE <h> CLTV DROP <R> CHECKSIG ENDIF`.

use serde::{Deserialize, Serialize};

use super::{CovenantError, CustodialPolicy, EnforcementPolicy, Mechanism};
use crate::crypto::{sign, PrivateKey, PublicKey};
use crate::ctv::CtvTemplateHash;
use crate::script::opcodes::*;
use crate::script::{Script, ScriptBuilder};
use crate::sighash::{sighash_digest, SigHashType, SpentOutputContext};
use crate::tx::{p2wsh_address, render_address, Amount, Transaction};

/// The mechanism-specific part of a deposit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "kebab-case")]
pub enum Commitment {
    DeletedKey {
        enforcement: EnforcementPolicy,
    },
    /// One recovered key, or one per disjoint branch.
    RecoveredKey {
        keys: Vec<PublicKey>,
    },
    /// One template hash, or one per disjoint branch.
    Ctv {
        hashes: Vec<CtvTemplateHash>,
    },
}

impl Commitment {
    pub fn mechanism(&self) -> Mechanism {
        match self {
            Commitment::DeletedKey { .. } => Mechanism::DeletedKey,
            Commitment::RecoveredKey { .. } => Mechanism::RecoveredKey,
            Commitment::Ctv { .. } => Mechanism::Ctv,
        }
    }

    pub fn validate(&self) -> Result<(), CovenantError> {
        match self {
            Commitment::DeletedKey { enforcement } => enforcement.validate(),
            Commitment::RecoveredKey { keys } if keys.is_empty() => {
                Err(CovenantError::MissingExtras("recovered-key deposit needs the recovered public key"))
            }
            Commitment::Ctv { hashes } if hashes.is_empty() => {
                Err(CovenantError::MissingExtras("ctv deposit needs a template hash"))
            }
            Commitment::RecoveredKey { keys } if keys.len() > 2 => {
                Err(CovenantError::InvalidPolicy("at most two disjoint branches".into()))
            }
            Commitment::Ctv { hashes } if hashes.len() > 2 => {
                Err(CovenantError::InvalidPolicy("at most two disjoint branches".into()))
            }
            _ => Ok(()),
        }
    }

    /// Number of alternative branches the commitment allows.
    pub fn branches(&self) -> usize {
        match self {
            Commitment::DeletedKey { .. } => 1,
            Commitment::RecoveredKey { keys } => keys.len(),
            Commitment::Ctv { hashes } => hashes.len(),
        }
    }

    fn render(&self, b: ScriptBuilder, verify: bool) -> ScriptBuilder {
        match self {
            Commitment::DeletedKey { enforcement } => multisig_clause(b, enforcement.m, &enforcement.keys, verify),
            Commitment::RecoveredKey { keys } => match keys.as_slice() {
                [p] => checksig_clause(b, p, verify),
                [a, bk] => {
                    let b = checksig_clause(b.push_opcode(OP_IF), a, verify).push_opcode(OP_ELSE);
                    checksig_clause(b, bk, verify).push_opcode(OP_ENDIF)
                }
                _ => unreachable!("validated"),
            },
            // leaves the hash on the stack, so it is only ever the final clause
            Commitment::Ctv { hashes } => match hashes.as_slice() {
                [h] => b.push_slice(&h.hash).push_opcode(OP_CHECKTEMPLATEVERIFY),
                [a, bh] => b
                    .push_opcode(OP_IF)
                    .push_slice(&a.hash)
                    .push_opcode(OP_ELSE)
                    .push_slice(&bh.hash)
                    .push_opcode(OP_ENDIF)
                    .push_opcode(OP_CHECKTEMPLATEVERIFY),
                _ => unreachable!("validated"),
            },
        }
    }

    /// The commitment clause alone, in final form.
    pub fn script(&self) -> Result<Script, CovenantError> {
        self.validate()?;
        Ok(self.render(ScriptBuilder::new(), false).into_script())
    }
}

fn checksig_clause(b: ScriptBuilder, key: &PublicKey, verify: bool) -> ScriptBuilder {
    b.push_slice(&key.serialize()).push_opcode(if verify { OP_CHECKSIGVERIFY } else { OP_CHECKSIG })
}

fn multisig_clause(b: ScriptBuilder, m: usize, keys: &[PublicKey], verify: bool) -> ScriptBuilder {
    if let ([key], 1) = (keys, m) {
        return checksig_clause(b, key, verify);
    }
    let mut b = b.push_int(m as i64);
    for key in keys {
        b = b.push_slice(&key.serialize());
    }
    b.push_int(keys.len() as i64).push_opcode(if verify { OP_CHECKMULTISIGVERIFY } else { OP_CHECKMULTISIG })
}

/// Time-locked alternative spend back to the depositor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RefundPath {
    pub height: u32,
    pub key: PublicKey,
}

/// Everything needed to derive a deposit script and address.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DepositSpec {
    pub commitment: Commitment,
    pub custody: CustodialPolicy,
    /// Absolute height before which the deposit cannot be spent at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timelock: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refund: Option<RefundPath>,
}

/// Disjoint branch selector; `A` is the first key or hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Branch {
    #[default]
    A,
    B,
}

impl Branch {
    fn selector(self) -> Vec<u8> {
        match self {
            Branch::A => vec![1],
            Branch::B => Vec::new(),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Branch::A => 0,
            Branch::B => 1,
        }
    }
}

/// Witness items for the main spending path, each list in key order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Satisfaction {
    pub branch: Branch,
    pub commitment: Vec<Vec<u8>>,
    pub custody: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpendPath {
    Main(Satisfaction),
    Refund(Vec<u8>),
}

impl DepositSpec {
    pub fn new(commitment: Commitment, custody: CustodialPolicy) -> DepositSpec {
        DepositSpec { commitment, custody, timelock: None, refund: None }
    }

    pub fn mechanism(&self) -> Mechanism {
        self.commitment.mechanism()
    }

    pub fn validate(&self) -> Result<(), CovenantError> {
        self.commitment.validate()?;
        self.custody.validate()
    }

    pub fn witness_script(&self) -> Result<Script, CovenantError> {
        self.validate()?;
        let mut b = ScriptBuilder::new();
        if let Some(t) = self.timelock {
            b = b.push_int(t as i64).push_opcode(OP_CHECKLOCKTIMEVERIFY).push_opcode(OP_DROP);
        }
        if self.refund.is_some() {
            b = b.push_opcode(OP_IF);
        }
        b = match self.commitment {
            Commitment::Ctv { .. } => {
                let b = multisig_clause(b, self.custody.j, &self.custody.keys, true);
                self.commitment.render(b, false)
            }
            _ => {
                let b = self.commitment.render(b, true);
                multisig_clause(b, self.custody.j, &self.custody.keys, false)
            }
        };
        if let Some(r) = &self.refund {
            b = b
                .push_opcode(OP_ELSE)
                .push_int(r.height as i64)
                .push_opcode(OP_CHECKLOCKTIMEVERIFY)
                .push_opcode(OP_DROP)
                .push_slice(&r.key.serialize())
                .push_opcode(OP_CHECKSIG)
                .push_opcode(OP_ENDIF);
        }
        Ok(b.into_script())
    }

    /// The P2WSH locking script paying to this deposit.
    pub fn locking_script(&self) -> Result<Script, CovenantError> {
        Ok(p2wsh_address(&self.witness_script()?)?)
    }

    pub fn address(&self) -> Result<String, CovenantError> {
        Ok(render_address(&self.locking_script()?).expect("p2wsh"))
    }

    /// Full witness stack, witness script last.
    pub fn witness(&self, path: SpendPath) -> Result<Vec<Vec<u8>>, CovenantError> {
        let script = self.witness_script()?;
        let mut items: Vec<Vec<u8>> = Vec::new();
        match path {
            SpendPath::Refund(sig) => {
                if self.refund.is_none() {
                    return Err(CovenantError::MissingExtras("deposit has no refund path"));
                }
                items.push(sig);
                items.push(Vec::new());
            }
            SpendPath::Main(sat) => {
                if sat.custody.len() != self.custody.j {
                    return Err(CovenantError::SignatureCount(format!(
                        "custody needs {} signatures, got {}",
                        self.custody.j,
                        sat.custody.len()
                    )));
                }
                let branching = self.commitment.branches() == 2;
                if !branching && sat.branch == Branch::B {
                    return Err(CovenantError::InvalidPolicy("deposit has a single branch".into()));
                }
                // items consumed first sit on top
                let mut commitment_items = sat.commitment.clone();
                match &self.commitment {
                    Commitment::DeletedKey { enforcement } if commitment_items.len() != enforcement.m => {
                        return Err(CovenantError::SignatureCount(format!(
                            "enforcement needs {} signatures, got {}",
                            enforcement.m,
                            commitment_items.len()
                        )));
                    }
                    Commitment::RecoveredKey { .. } if commitment_items.len() != 1 => {
                        return Err(CovenantError::SignatureCount("recovered-key needs one signature".into()));
                    }
                    Commitment::Ctv { .. } if !commitment_items.is_empty() => {
                        return Err(CovenantError::SignatureCount("ctv takes no commitment signature".into()));
                    }
                    _ => {}
                }
                if branching {
                    commitment_items.push(sat.branch.selector());
                }
                match self.commitment {
                    Commitment::Ctv { .. } => {
                        items.extend(commitment_items);
                        items.extend(sat.custody);
                    }
                    _ => {
                        items.extend(sat.custody);
                        items.extend(commitment_items);
                    }
                }
                if self.refund.is_some() {
                    items.push(vec![1]);
                }
            }
        }
        items.push(script.into_bytes());
        Ok(items)
    }

    pub fn spent_context(&self, amount: Amount) -> Result<SpentOutputContext, CovenantError> {
        Ok(SpentOutputContext { script_code: self.witness_script()?, amount })
    }

    /// Custodial signatures on input `input_index` of `tx`, ordered as the policy
    /// lists the keys. Exactly `j` keys must be given.
    pub fn sign_custody(
        &self,
        tx: &Transaction,
        input_index: usize,
        amount: Amount,
        keys: &[&PrivateKey],
        ty: SigHashType,
    ) -> Result<Vec<Vec<u8>>, CovenantError> {
        let ctx = self.spent_context(amount)?;
        let digest = sighash_digest(tx, input_index, &ctx, ty)?;
        let mut ordered: Vec<(usize, &PrivateKey)> = Vec::with_capacity(keys.len());
        for k in keys {
            let pk = k.public_key();
            let pos = self
                .custody
                .position(&pk)
                .ok_or_else(|| CovenantError::InvalidPolicy(format!("key {pk} is not a custodial key")))?;
            ordered.push((pos, k));
        }
        ordered.sort_by_key(|(p, _)| *p);
        Ok(ordered.into_iter().map(|(_, k)| sign(k, &digest).to_witness_bytes(ty)).collect())
    }

    /// Signature for the refund path.
    pub fn sign_refund(
        &self,
        tx: &Transaction,
        input_index: usize,
        amount: Amount,
        key: &PrivateKey,
    ) -> Result<Vec<u8>, CovenantError> {
        let ctx = self.spent_context(amount)?;
        let digest = sighash_digest(tx, input_index, &ctx, SigHashType::ALL)?;
        Ok(sign(key, &digest).to_witness_bytes(SigHashType::ALL))
    }
}

/// Deposit address and witness script for a deposit specification.
pub fn deposit_address(spec: &DepositSpec) -> Result<(String, Script), CovenantError> {
    let script = spec.witness_script()?;
    Ok((spec.address()?, script))
}
