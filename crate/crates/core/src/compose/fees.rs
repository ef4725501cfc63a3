// SPDX-License-Identifier: CC0-1.0

//! Fee allocation: pre-signed replace-by-fee variants, child-pays-for-parent
//! children, and the ANYONECANPAY|SINGLE pinning replay.

use rand::RngCore;
use serde::Serialize;

use super::build::{build_chain_with, ChainParams};
use super::{sign_wallet_input, ComposeError, CovenantGraph, FundingSource, NodeInput};
use crate::covenant::{Commitment, Mechanism};
use crate::crypto::PrivateKey;
use crate::script::Script;
use crate::sighash::SigHashType;
use crate::tx::{Amount, Transaction, TxInput, TxOutput, SEQUENCE_NO_RBF, SEQUENCE_RBF};

/// Default bound on the number of variant chains materialized.
pub const DEFAULT_VARIANT_CAP: usize = 4096;

/// Witness bytes assumed per signature when estimating a node's size.
const SIGNATURE_ESTIMATE: usize = 73;

/// One fully signed chain; `levels[i]` indexes the feerate used at level `i + 1`.
#[derive(Debug, Clone, Serialize)]
pub struct FeeVariant {
    pub levels: Vec<usize>,
    pub fees: Vec<Amount>,
    pub graph: CovenantGraph,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeeVariantSet {
    pub variants_per_level: usize,
    pub chain_length: usize,
    /// Feerates in sat/byte, one per variant index.
    pub feerates: Vec<u64>,
    pub variants: Vec<FeeVariant>,
}

impl FeeVariantSet {
    pub fn count(&self) -> usize {
        self.variants.len()
    }

    /// Serialized bytes of every template across all variants.
    pub fn byte_size(&self) -> usize {
        self.variants.iter().map(|v| v.graph.nodes.iter().map(|n| n.template.transaction.size()).sum::<usize>()).sum()
    }

    /// The variant using feerate index `levels[i]` at each level.
    pub fn find(&self, levels: &[usize]) -> Option<&FeeVariant> {
        self.variants.iter().find(|v| v.levels == levels)
    }
}

/// Number of chains `p^t`, or `None` on overflow.
pub fn variant_count(p: usize, t: usize) -> Option<u128> {
    (p as u128).checked_pow(u32::try_from(t).ok()?)
}

/// Rough finalized size of a covenant node spending a deposit under `params`.
fn estimated_size(template_size: usize, params: &ChainParams, input: &NodeInput) -> usize {
    let script = match input {
        NodeInput::Covenant { spec, .. } => spec.witness_script().map(|s| s.len()).unwrap_or(0),
        NodeInput::Wallet { .. } => 0,
    };
    let sigs = params.enforcement_m + params.custody.j;
    template_size + 3 + script + sigs * (SIGNATURE_ESTIMATE + 1)
}

/// Materializes all `p^t` deleted-key chains for `feerates` (sat/byte). Enforcement
/// keys are shared per level, so every variant spends the same deposit and each
/// level's variants conflict with one another.
pub fn enumerate_fee_variants<R: RngCore + ?Sized>(
    funding: &FundingSource,
    params: &ChainParams,
    feerates: &[u64],
    cap: usize,
    rng: &mut R,
) -> Result<FeeVariantSet, ComposeError> {
    if params.mechanism != Mechanism::DeletedKey {
        return Err(ComposeError::Graph(format!(
            "fee variants are pre-signed deleted-key chains; {} covenants use fee inputs or template hashes instead",
            params.mechanism
        )));
    }
    let (p, t) = (feerates.len(), params.length);
    if p == 0 || t == 0 {
        return Err(ComposeError::Graph("need at least one feerate and one level".into()));
    }
    if params.sequence >= SEQUENCE_NO_RBF {
        return Err(ComposeError::Graph("variants must signal replaceability".into()));
    }
    let count = variant_count(p, t).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(ComposeError::TooManyVariants { count, cap });
    }
    let enforcers: Vec<Vec<PrivateKey>> = (0..t).map(|_| params.generate_enforcers(rng)).collect();

    // sizes do not depend on the fee, so measure a zero-fee build once
    let mut probe = params.clone();
    probe.level_fees = vec![Amount::ZERO; t];
    let base = build_chain_with(funding, &probe, &enforcers)?;
    let sizes: Vec<usize> =
        base.nodes.iter().map(|n| estimated_size(n.template.transaction.size(), params, &n.inputs[0])).collect();

    let mut variants = Vec::with_capacity(count as usize);
    let mut levels = vec![0usize; t];
    loop {
        let fees = levels
            .iter()
            .zip(&sizes)
            .map(|(&l, &size)| Amount::from_sat(feerates[l].saturating_mul(size as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut chain = params.clone();
        chain.level_fees = fees.clone();
        let graph = build_chain_with(funding, &chain, &enforcers)?;
        variants.push(FeeVariant { levels: levels.clone(), fees, graph });
        // odometer, last level fastest
        let mut i = t;
        loop {
            if i == 0 {
                drop(enforcers);
                return Ok(FeeVariantSet {
                    variants_per_level: p,
                    chain_length: t,
                    feerates: feerates.to_vec(),
                    variants,
                });
            }
            i -= 1;
            levels[i] += 1;
            if levels[i] < p {
                break;
            }
            levels[i] = 0;
        }
    }
}

/// Whether a graph's commitments can be replaced by fee variants.
pub fn is_presigned(graph: &CovenantGraph) -> bool {
    graph.roots.iter().all(|r| matches!(r.spec.commitment, Commitment::DeletedKey { .. }))
}

/// A child spending `wallet` (an output of `parent`) to `destination`, paying
/// `max(feerate * (size(parent) + size(child)) - parent_fee, size(child))`.
pub fn cpfp_child(
    parent: &Transaction,
    parent_fee: Amount,
    feerate: u64,
    wallet: &FundingSource,
    destination: Script,
) -> Result<Transaction, ComposeError> {
    if wallet.outpoint.txid != parent.txid() {
        return Err(ComposeError::Graph("wallet output is not an output of the parent".into()));
    }
    let out = parent
        .outputs
        .get(wallet.outpoint.vout as usize)
        .ok_or_else(|| ComposeError::Graph("parent has no such output".into()))?;
    if out.amount != wallet.amount || out.locking_script != super::wallet_locking_script(&wallet.key.public_key()) {
        return Err(ComposeError::Graph("parent output is not controlled by the wallet key".into()));
    }
    let parent_size = parent.size() as u64;
    let mut fee = 0u64;
    for _ in 0..8 {
        let value = wallet.amount.to_sat().checked_sub(fee).ok_or_else(|| {
            ComposeError::InsufficientFunds(format!("child fee {fee} exceeds wallet output {}", wallet.amount))
        })?;
        let mut child = Transaction {
            version: 2,
            inputs: vec![TxInput::new(wallet.outpoint, SEQUENCE_RBF)],
            outputs: vec![TxOutput::new(Amount::from_sat(value)?, destination.clone())],
            locktime: 0,
        };
        child.inputs[0].witness = sign_wallet_input(&child, 0, wallet.amount, &wallet.key, SigHashType::ALL)?;
        let child_size = child.size() as u64;
        let package = feerate.saturating_mul(parent_size + child_size);
        let needed = package.saturating_sub(parent_fee.to_sat()).max(child_size);
        if needed <= fee {
            return Ok(child);
        }
        fee = needed;
    }
    Err(ComposeError::Graph("child fee did not converge".into()))
}

/// The adversarial replay of a covenant spend signed ANYONECANPAY|SINGLE on input
/// `input`: the signed input is kept, and an attacker input and a large change output
/// are appended. The result is non-replaceable and has a much lower feerate than the
/// original.
pub fn pinning_replay(
    honest: &Transaction,
    input: usize,
    attacker: &FundingSource,
    change: Script,
    attacker_fee: Amount,
) -> Result<Transaction, ComposeError> {
    if input != 0 {
        return Err(ComposeError::Graph("replay is built for the covenant input at index 0".into()));
    }
    let signed =
        honest.inputs.get(input).ok_or_else(|| ComposeError::Graph(format!("no input {input} to replay")))?.clone();
    let output = honest
        .outputs
        .get(input)
        .ok_or_else(|| ComposeError::Graph("SINGLE needs an output at the input index".into()))?
        .clone();
    let change_value = attacker
        .amount
        .checked_sub(attacker_fee)
        .ok_or_else(|| ComposeError::InsufficientFunds("attacker fee exceeds attacker funds".into()))?;
    let inputs = vec![signed, TxInput::new(attacker.outpoint, SEQUENCE_NO_RBF)];
    let mut tx = Transaction {
        version: honest.version,
        inputs,
        outputs: vec![output, TxOutput::new(change_value, change)],
        locktime: honest.locktime,
    };
    tx.inputs[1].witness = sign_wallet_input(&tx, 1, attacker.amount, &attacker.key, SigHashType::ALL)?;
    Ok(tx)
}
