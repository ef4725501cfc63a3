// SPDX-License-Identifier: CC0-1.0

//! Covenant templates and the signatures that commit to them.

use serde::{Deserialize, Serialize};

use super::{CovenantError, EnforcementPolicy, Mechanism};
use crate::crypto::{
    nums_signature, seeded_signature, sign, verify, EcdsaSignature, PrivateKey, PublicKey, SignatureSeeds,
};
use crate::script::Script;
use crate::sighash::{sighash_digest, SigHashType, SpentOutputContext};
use crate::tx::{Amount, Transaction};

/// An unsigned covenant transaction and the sighash type each input is signed with.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CovenantTemplate {
    #[serde(with = "crate::hexser::transaction")]
    pub transaction: Transaction,
    pub sighash_types: Vec<SigHashType>,
    pub mechanism: Mechanism,
}

impl CovenantTemplate {
    /// A template whose inputs all use `ty`.
    pub fn new(transaction: Transaction, ty: SigHashType, mechanism: Mechanism) -> CovenantTemplate {
        let sighash_types = vec![ty; transaction.inputs.len()];
        CovenantTemplate { transaction, sighash_types, mechanism }
    }

    pub fn sighash_type(&self, input_index: usize) -> Result<SigHashType, CovenantError> {
        self.sighash_types
            .get(input_index)
            .copied()
            .ok_or(CovenantError::InputOutOfRange { index: input_index, inputs: self.sighash_types.len() })
    }

    fn check_index(&self, input_index: usize) -> Result<(), CovenantError> {
        if input_index >= self.transaction.inputs.len() || self.sighash_types.len() != self.transaction.inputs.len() {
            return Err(CovenantError::InputOutOfRange { index: input_index, inputs: self.transaction.inputs.len() });
        }
        Ok(())
    }

    pub fn digest(&self, input_index: usize, ctx: &SpentOutputContext) -> Result<[u8; 32], CovenantError> {
        self.check_index(input_index)?;
        Ok(sighash_digest(&self.transaction, input_index, ctx, self.sighash_types[input_index])?)
    }
}

/// A signature committing to input `input_index` of a covenant template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentSignature {
    pub input_index: usize,
    pub signature: EcdsaSignature,
    pub sighash_type: SigHashType,
    pub signer: PublicKey,
}

impl CommitmentSignature {
    /// DER signature followed by the type byte.
    pub fn witness_bytes(&self) -> Vec<u8> {
        self.signature.to_witness_bytes(self.sighash_type)
    }

    /// Whether the signature verifies for input `input_index` of `tx`.
    pub fn verifies(&self, tx: &Transaction, ctx: &SpentOutputContext) -> bool {
        match sighash_digest(tx, self.input_index, ctx, self.sighash_type) {
            Ok(d) => verify(&self.signer, &d, &self.signature),
            Err(_) => false,
        }
    }
}

/// Signs the template with an enforcement key belonging to `policy`.
pub fn sign_commitment(
    template: &CovenantTemplate,
    input_index: usize,
    key: &PrivateKey,
    ctx: &SpentOutputContext,
    policy: &EnforcementPolicy,
) -> Result<CommitmentSignature, CovenantError> {
    let signer = key.public_key();
    if policy.position(&signer).is_none() {
        return Err(CovenantError::KeyNotInPolicy(signer));
    }
    let digest = template.digest(input_index, ctx)?;
    Ok(CommitmentSignature {
        input_index,
        signature: sign(key, &digest),
        sighash_type: template.sighash_types[input_index],
        signer,
    })
}

/// How a recovered-key commitment signature is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "kebab-case")]
pub enum RecoveredStyle {
    /// Smallest liftable `r` with `s = 1`.
    Nums,
    /// `(SHA256(seed_r), SHA256(seed_s))` reduced mod `n`.
    Seeded(SignatureSeeds),
}

/// The context NOINPUT digests are computed with; its fields are not committed.
pub fn noinput_context() -> SpentOutputContext {
    SpentOutputContext { script_code: Script::new(), amount: Amount::ZERO }
}

/// Chooses a commitment signature nobody holds a key for and recovers the enforcement
/// key it verifies under. The deposit can be built afterwards from the returned key.
pub fn build_recovered_key_covenant(
    template: &CovenantTemplate,
    input_index: usize,
    style: &RecoveredStyle,
) -> Result<(CommitmentSignature, PublicKey), CovenantError> {
    template.check_index(input_index)?;
    let ty = template.sighash_types[input_index];
    if !ty.noinput {
        return Err(CovenantError::NotNoinput);
    }
    let digest = template.digest(input_index, &noinput_context())?;
    let (signature, key) = match style {
        RecoveredStyle::Nums => nums_signature(&digest)?,
        RecoveredStyle::Seeded(seeds) => seeded_signature(seeds, &digest)?,
    };
    Ok((CommitmentSignature { input_index, signature, sighash_type: ty, signer: key }, key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tx::{OutPoint, TxInput, TxOutput, Txid};
    use rand::SeedableRng;

    fn template(ty: SigHashType, mechanism: Mechanism) -> CovenantTemplate {
        let tx = Transaction {
            version: 2,
            inputs: vec![TxInput::new(OutPoint::new(Txid::from_byte_array([9; 32]), 0), 0xFFFF_FFFD)],
            outputs: vec![TxOutput::new(Amount::from_sat(1000).unwrap(), Script::from_bytes(vec![0x51]))],
            locktime: 0,
        };
        CovenantTemplate::new(tx, ty, mechanism)
    }

    #[test]
    fn commitment_signature_round_trip() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let keys: Vec<PrivateKey> = (0..3).map(|_| PrivateKey::generate(&mut rng)).collect();
        let policy = EnforcementPolicy::new(2, keys.iter().map(PrivateKey::public_key).collect()).unwrap();
        let t = template(SigHashType::ALL, Mechanism::DeletedKey);
        let ctx =
            SpentOutputContext { script_code: Script::from_bytes(vec![0x51]), amount: Amount::from_sat(1000).unwrap() };
        let sig = sign_commitment(&t, 0, &keys[0], &ctx, &policy).unwrap();
        assert!(sig.verifies(&t.transaction, &ctx));
        let mut altered = t.transaction.clone();
        altered.outputs[0].amount = Amount::from_sat(999).unwrap();
        assert!(!sig.verifies(&altered, &ctx));
        let outsider = PrivateKey::generate(&mut rng);
        assert!(matches!(sign_commitment(&t, 0, &outsider, &ctx, &policy), Err(CovenantError::KeyNotInPolicy(_))));
    }

    #[test]
    fn recovered_key_requires_noinput() {
        let t = template(SigHashType::ALL, Mechanism::RecoveredKey);
        assert_eq!(build_recovered_key_covenant(&t, 0, &RecoveredStyle::Nums), Err(CovenantError::NotNoinput));
        let t = template(SigHashType::NOINPUT_ANYONECANPAY, Mechanism::RecoveredKey);
        let (a, pa) = build_recovered_key_covenant(&t, 0, &RecoveredStyle::Nums).unwrap();
        let (b, pb) = build_recovered_key_covenant(&t, 0, &RecoveredStyle::Nums).unwrap();
        assert_eq!((a, pa), (b, pb));
        assert!(a.verifies(&t.transaction, &noinput_context()));
    }
}
