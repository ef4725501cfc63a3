// SPDX-License-Identifier: CC0-1.0

//! Proof-of-reserves and proof-of-covenant bundles.
//!
//! Evidence byte strings (keys, signatures, seeds, the transaction) are kept raw in
//! the bundle and decoded during verification, so a corrupted field is reported as a
//! named rejection instead of a parse failure.
//!
//! A reserves proof is a transaction whose input 0 spends the null outpoint with
//! `SHA256(message)` as its only witness item and whose input 1 spends the deposit,
//! signed `SIGHASH_ALL` by custodial keys. The null input makes it invalid on chain.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::commitment::noinput_context;
use super::{CommitmentSignature, CovenantError, CovenantTemplate, DepositSpec, Mechanism, RecoveredStyle};
use crate::covenant::deposit::Commitment;
use crate::crypto::{
    decode_witness_signature, der_decode, nums_signature, recover_pubkeys, seeded_values, sign, verify, PrivateKey,
    PublicKey, SignatureSeeds,
};
use crate::ctv::ctv_hash;
use crate::sighash::{committed_fields, sighash_digest, OutputCoverage, SigHashType};
use crate::tx::{
    p2wsh_address, render_address, sha256, Amount, OutPoint, Transaction, TxInput, TxOutput, SEQUENCE_FINAL,
};

pub const PROOF_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProofKind {
    Reserves,
    Covenant,
}

/// Key-deletion record produced by the enforcement protocol.
///
/// The enforcer signs the record with the key it is about to delete, which binds every
/// field to the committed key. The deletion itself cannot be proven.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeletionAttestation {
    pub enforcer: usize,
    pub key_fingerprint: String,
    pub event: u64,
    /// DER signature over [`DeletionAttestation::digest`].
    #[serde(with = "crate::hexser::bytes")]
    pub signature: Vec<u8>,
}

impl DeletionAttestation {
    /// Signs the record for `key`, which the caller deletes next.
    pub fn sign(enforcer: usize, key: &PrivateKey, event: u64) -> DeletionAttestation {
        let key_fingerprint = key.public_key().fingerprint();
        let digest = attestation_digest(enforcer, &key_fingerprint, event);
        DeletionAttestation { enforcer, key_fingerprint, event, signature: sign(key, &digest).to_der() }
    }

    pub fn digest(&self) -> [u8; 32] {
        attestation_digest(self.enforcer, &self.key_fingerprint, self.event)
    }
}

fn attestation_digest(enforcer: usize, fingerprint: &str, event: u64) -> [u8; 32] {
    let mut data = b"covenant/deletion".to_vec();
    data.extend_from_slice(&(enforcer as u64).to_le_bytes());
    data.extend_from_slice(&event.to_le_bytes());
    data.extend_from_slice(fingerprint.as_bytes());
    sha256(&data)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureEvidence {
    #[serde(with = "crate::hexser::bytes")]
    pub signer: Vec<u8>,
    /// DER signature followed by the sighash type byte.
    #[serde(with = "crate::hexser::bytes")]
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Evidence {
    DeletedKey {
        input_index: usize,
        amount: Amount,
        signatures: Vec<SignatureEvidence>,
        #[serde(default)]
        attestations: Vec<DeletionAttestation>,
    },
    RecoveredKey {
        input_index: usize,
        #[serde(with = "crate::hexser::bytes")]
        signature: Vec<u8>,
        #[serde(with = "crate::hexser::bytes")]
        key: Vec<u8>,
        /// Absent for NUMS commitments.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seeds: Option<SignatureSeeds>,
    },
    Ctv {
        input_index: u32,
    },
    Reserves {
        #[serde(with = "crate::hexser::bytes")]
        message: Vec<u8>,
        amount: Amount,
        signatures: Vec<SignatureEvidence>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofBundle {
    pub format: u32,
    pub kind: ProofKind,
    pub mechanism: Mechanism,
    /// Parameters the witness script is derived from.
    pub deposit: DepositSpec,
    pub address: String,
    #[serde(with = "crate::hexser::bytes")]
    pub witness_script: Vec<u8>,
    /// Opcode listing of `witness_script` for human audit.
    pub witness_script_asm: String,
    /// Covenant template, or the reserves transaction, as witness-serialized hex.
    #[serde(with = "crate::hexser::bytes")]
    pub transaction: Vec<u8>,
    pub evidence: Evidence,
}

/// Mechanism evidence handed to [`prove_covenant`].
#[derive(Debug, Clone, Copy)]
pub enum CovenantEvidence<'a> {
    DeletedKey { amount: Amount, signatures: &'a [CommitmentSignature], attestations: &'a [DeletionAttestation] },
    RecoveredKey { signature: &'a CommitmentSignature, style: &'a RecoveredStyle },
    Ctv { input_index: u32 },
}

fn signature_evidence(s: &CommitmentSignature) -> SignatureEvidence {
    SignatureEvidence { signer: s.signer.serialize().to_vec(), signature: s.witness_bytes() }
}

fn bundle_shell(
    kind: ProofKind,
    spec: &DepositSpec,
    transaction: &Transaction,
    evidence: Evidence,
) -> Result<ProofBundle, CovenantError> {
    let script = spec.witness_script()?;
    Ok(ProofBundle {
        format: PROOF_FORMAT,
        kind,
        mechanism: spec.mechanism(),
        deposit: spec.clone(),
        address: spec.address()?,
        witness_script_asm: script.to_asm(),
        witness_script: script.into_bytes(),
        transaction: transaction.serialize(true)?,
        evidence,
    })
}

/// Bundles the covenant template with the evidence for its mechanism.
pub fn prove_covenant(
    spec: &DepositSpec,
    template: &CovenantTemplate,
    evidence: CovenantEvidence<'_>,
) -> Result<ProofBundle, CovenantError> {
    let evidence = match (spec.mechanism(), evidence) {
        (Mechanism::DeletedKey, CovenantEvidence::DeletedKey { amount, signatures, attestations }) => {
            let input_index = signatures.first().map_or(0, |s| s.input_index);
            Evidence::DeletedKey {
                input_index,
                amount,
                signatures: signatures.iter().map(signature_evidence).collect(),
                attestations: attestations.to_vec(),
            }
        }
        (Mechanism::RecoveredKey, CovenantEvidence::RecoveredKey { signature, style }) => Evidence::RecoveredKey {
            input_index: signature.input_index,
            signature: signature.witness_bytes(),
            key: signature.signer.serialize().to_vec(),
            seeds: match style {
                RecoveredStyle::Nums => None,
                RecoveredStyle::Seeded(s) => Some(s.clone()),
            },
        },
        (Mechanism::Ctv, CovenantEvidence::Ctv { input_index }) => Evidence::Ctv { input_index },
        _ => return Err(CovenantError::InvalidPolicy("evidence does not match the deposit mechanism".into())),
    };
    bundle_shell(ProofKind::Covenant, spec, &template.transaction, evidence)
}

/// Custodial proof of control over `deposit` bound to `message`.
pub fn prove_reserves(
    spec: &DepositSpec,
    deposit: OutPoint,
    amount: Amount,
    custody_keys: &[&PrivateKey],
    message: &[u8],
) -> Result<ProofBundle, CovenantError> {
    let mut commitment_input = TxInput::new(OutPoint::NULL, SEQUENCE_FINAL);
    commitment_input.witness = vec![sha256(message).to_vec()];
    let mut tx = Transaction {
        version: 2,
        inputs: vec![commitment_input, TxInput::new(deposit, SEQUENCE_FINAL)],
        outputs: vec![TxOutput::new(amount, spec.locking_script()?)],
        locktime: 0,
    };
    let sigs = spec.sign_custody(&tx, 1, amount, custody_keys, SigHashType::ALL)?;
    let signers: Vec<PublicKey> = {
        let mut ks: Vec<PublicKey> = custody_keys.iter().map(|k| k.public_key()).collect();
        ks.sort_by_key(|k| spec.custody.position(k));
        ks
    };
    let mut witness = sigs.clone();
    witness.push(spec.witness_script()?.into_bytes());
    tx.inputs[1].witness = witness;
    let evidence = Evidence::Reserves {
        message: message.to_vec(),
        amount,
        signatures: signers
            .iter()
            .zip(sigs)
            .map(|(k, s)| SignatureEvidence { signer: k.serialize().to_vec(), signature: s })
            .collect(),
    };
    bundle_shell(ProofKind::Reserves, spec, &tx, evidence)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{reason}: {detail}")]
pub struct ProofRejection {
    pub reason: &'static str,
    pub detail: String,
}

fn reject<T>(reason: &'static str, detail: impl Into<String>) -> Result<T, ProofRejection> {
    Err(ProofRejection { reason, detail: detail.into() })
}

/// What a successful verification established.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProofSummary {
    pub kind: ProofKind,
    pub mechanism: Mechanism,
    pub address: String,
    pub txid: String,
    /// Verified signatures for signature-based evidence.
    pub signatures: usize,
    /// Deleted-key only: attested deletions against the `n - m + 1` required.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deletions: Option<(usize, usize)>,
}

fn parse_signer(bytes: &[u8]) -> Result<PublicKey, ProofRejection> {
    PublicKey::from_slice(bytes).map_err(|_| ProofRejection {
        reason: "key-not-committed",
        detail: format!("signer {} is not a valid public key", hex::encode(bytes)),
    })
}

/// Checks `signatures` against `keys` for input `index` and returns how many verified.
fn verify_signature_set(
    tx: &Transaction,
    index: usize,
    spec: &DepositSpec,
    amount: Amount,
    signatures: &[SignatureEvidence],
    keys: &[PublicKey],
    threshold: usize,
    require_all_inputs: bool,
) -> Result<usize, ProofRejection> {
    let ctx =
        spec.spent_context(amount).map_err(|e| ProofRejection { reason: "script-mismatch", detail: e.to_string() })?;
    let mut seen = BTreeSet::new();
    for ev in signatures {
        let signer = parse_signer(&ev.signer)?;
        if !keys.contains(&signer) {
            return reject("key-not-committed", format!("{signer} is not in the committed policy"));
        }
        if !seen.insert(signer) {
            return reject("insufficient-signatures", format!("duplicate signer {signer}"));
        }
        let (sig, ty) = decode_witness_signature(&ev.signature)
            .map_err(|e| ProofRejection { reason: "bad-sig", detail: e.to_string() })?;
        let fields = committed_fields(ty);
        if fields.outputs != OutputCoverage::AllOutputs || (require_all_inputs && ty.anyonecanpay) {
            return reject("bad-sighash-type", format!("type {ty} does not commit to the required fields"));
        }
        let digest = sighash_digest(tx, index, &ctx, ty)
            .map_err(|e| ProofRejection { reason: "bad-sig", detail: e.to_string() })?;
        if !verify(&signer, &digest, &sig) {
            return reject("bad-sig", format!("signature by {signer} does not verify"));
        }
    }
    if seen.len() < threshold {
        return reject("insufficient-signatures", format!("{} of {threshold} required signatures", seen.len()));
    }
    Ok(seen.len())
}

/// Recomputes every piece of evidence in `bundle`.
pub fn verify_proof(bundle: &ProofBundle) -> Result<ProofSummary, ProofRejection> {
    if bundle.format != PROOF_FORMAT {
        return reject("format", format!("unsupported format {}", bundle.format));
    }
    let spec = &bundle.deposit;
    if spec.mechanism() != bundle.mechanism {
        return reject(
            "mechanism-mismatch",
            format!("bundle says {}, deposit is {}", bundle.mechanism, spec.mechanism()),
        );
    }
    let script =
        spec.witness_script().map_err(|e| ProofRejection { reason: "script-mismatch", detail: e.to_string() })?;
    if script.as_bytes() != bundle.witness_script.as_slice() {
        return reject("script-mismatch", "witness script is not derived from the deposit parameters");
    }
    if script.to_asm() != bundle.witness_script_asm {
        return reject("asm-mismatch", "opcode listing does not match the witness script");
    }
    let locking =
        p2wsh_address(&script).map_err(|e| ProofRejection { reason: "script-mismatch", detail: e.to_string() })?;
    if render_address(&locking).as_deref() != Some(bundle.address.as_str()) {
        return reject(
            "address-mismatch",
            format!("script hashes to {}", render_address(&locking).unwrap_or_default()),
        );
    }
    let tx = Transaction::deserialize(&bundle.transaction)
        .map_err(|e| ProofRejection { reason: "malformed-transaction", detail: e.to_string() })?;
    let mut summary = ProofSummary {
        kind: bundle.kind,
        mechanism: bundle.mechanism,
        address: bundle.address.clone(),
        txid: tx.txid().to_string(),
        signatures: 0,
        deletions: None,
    };
    let check_index = |i: usize| {
        if i >= tx.inputs.len() {
            reject("input-out-of-range", format!("input {i} of {}", tx.inputs.len()))
        } else {
            Ok(())
        }
    };
    match (bundle.kind, &bundle.evidence, &spec.commitment) {
        (ProofKind::Reserves, Evidence::Reserves { message, amount, signatures }, _) => {
            if tx.inputs.len() != 2 || !tx.inputs[0].previous.is_null() {
                return reject("message-mismatch", "input 0 must spend the null outpoint");
            }
            if tx.inputs[0].witness != [sha256(message).to_vec()] {
                return reject("message-mismatch", "input 0 witness is not SHA256(message)");
            }
            summary.signatures =
                verify_signature_set(&tx, 1, spec, *amount, signatures, &spec.custody.keys, spec.custody.j, true)?;
        }
        (
            ProofKind::Covenant,
            Evidence::DeletedKey { input_index, amount, signatures, attestations },
            Commitment::DeletedKey { enforcement },
        ) => {
            check_index(*input_index)?;
            summary.signatures = verify_signature_set(
                &tx,
                *input_index,
                spec,
                *amount,
                signatures,
                &enforcement.keys,
                enforcement.m,
                false,
            )?;
            let fingerprints: Vec<String> = enforcement.keys.iter().map(PublicKey::fingerprint).collect();
            let mut attested = BTreeSet::new();
            for a in attestations {
                let Some(pos) = fingerprints.iter().position(|f| *f == a.key_fingerprint) else {
                    return reject(
                        "attestation-mismatch",
                        format!("attestation for unknown key {}", a.key_fingerprint),
                    );
                };
                if !attested.insert(pos) {
                    return reject("attestation-mismatch", format!("repeated attestation for {}", a.key_fingerprint));
                }
                let signed =
                    der_decode(&a.signature).is_ok_and(|sig| verify(&enforcement.keys[pos], &a.digest(), &sig));
                if !signed {
                    return reject(
                        "attestation-mismatch",
                        format!("attestation for {} is not signed by it", a.key_fingerprint),
                    );
                }
            }
            summary.deletions = Some((attested.len(), enforcement.deletions_required()));
        }
        (
            ProofKind::Covenant,
            Evidence::RecoveredKey { input_index, signature, key, seeds },
            Commitment::RecoveredKey { keys },
        ) => {
            check_index(*input_index)?;
            let (sig, ty) = decode_witness_signature(signature)
                .map_err(|e| ProofRejection { reason: "bad-sig", detail: e.to_string() })?;
            if !ty.noinput {
                return reject("bad-sighash-type", format!("type {ty} lacks NOINPUT"));
            }
            let digest = sighash_digest(&tx, *input_index, &noinput_context(), ty)
                .map_err(|e| ProofRejection { reason: "bad-sig", detail: e.to_string() })?;
            match seeds {
                Some(seeds) => match seeded_values(seeds) {
                    Ok(expected) if expected == sig => {}
                    Ok(_) => return reject("seed-mismatch", "seeds do not hash to the commitment signature"),
                    Err(e) => return reject("seed-mismatch", e.to_string()),
                },
                None => match nums_signature(&digest) {
                    Ok((expected, _)) if expected == sig => {}
                    Ok((expected, _)) => {
                        return reject(
                            "nums-mismatch",
                            format!("expected NUMS values {}", hex::encode(expected.to_der())),
                        )
                    }
                    Err(e) => return reject("nums-mismatch", e.to_string()),
                },
            }
            let claimed = parse_signer(key)?;
            if !recover_pubkeys(&digest, &sig).contains(&claimed) {
                return reject("recovery-mismatch", format!("{claimed} is not recoverable from the signature"));
            }
            if !keys.contains(&claimed) {
                return reject("key-not-committed", format!("deposit does not commit to {claimed}"));
            }
            summary.signatures = 1;
        }
        (ProofKind::Covenant, Evidence::Ctv { input_index }, Commitment::Ctv { hashes }) => {
            let h = ctv_hash(&tx, *input_index)
                .map_err(|e| ProofRejection { reason: "ctv-mismatch", detail: e.to_string() })?;
            if !hashes.iter().any(|c| c.hash == h.hash) {
                return reject("ctv-mismatch", format!("template hashes to {}", hex::encode(h.hash)));
            }
        }
        _ => return reject("mechanism-mismatch", "evidence type does not match the bundle"),
    }
    Ok(summary)
}

impl ProofBundle {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}
