// SPDX-License-Identifier: CC0-1.0

//! UTXO set, mempool with fee-based replacement, and an ancestor-feerate block builder.
//!
//! Heights: the tip is `height`. A transaction is final when its locktime is at most
//! the tip height. Relative locks count confirmations, where an output created in the
//! tip block has one confirmation and a mempool output has none.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::engine::{
    verify_input, EngineError, SEQUENCE_LOCKTIME_DISABLE_FLAG, SEQUENCE_LOCKTIME_MASK, SEQUENCE_LOCKTIME_TYPE_FLAG,
};
use crate::script::{Script, ScriptBuilder};
use crate::tx::{p2wsh_address, Amount, OutPoint, Transaction, TxInput, TxOutput, Txid, SEQUENCE_FINAL};

/// Machine-readable rejection reasons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    MissingUtxo,
    BadScript,
    BadSig,
    CtvMismatch,
    Timelock,
    NegativeFee,
    DoubleSpend,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::MissingUtxo => "missing-utxo",
            RejectReason::BadScript => "bad-script",
            RejectReason::BadSig => "bad-sig",
            RejectReason::CtvMismatch => "ctv-mismatch",
            RejectReason::Timelock => "timelock",
            RejectReason::NegativeFee => "negative-fee",
            RejectReason::DoubleSpend => "double-spend",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{reason}{}: {detail}", .input.map(|i| format!(" (input {i})")).unwrap_or_default())]
pub struct Rejection {
    pub reason: RejectReason,
    pub input: Option<usize>,
    pub detail: String,
}

impl Rejection {
    fn new(reason: RejectReason, input: Option<usize>, detail: impl Into<String>) -> Rejection {
        Rejection { reason, input, detail: detail.into() }
    }

    fn from_engine(e: EngineError, input: usize) -> Rejection {
        let reason = match e {
            EngineError::BadScript(_) => RejectReason::BadScript,
            EngineError::BadSig(_) => RejectReason::BadSig,
            EngineError::CtvMismatch => RejectReason::CtvMismatch,
            EngineError::Timelock(_) => RejectReason::Timelock,
        };
        Rejection::new(reason, Some(input), e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Confirmations required before an output counts as confirmed.
    pub confirmation_depth: u32,
    /// Value created by each block, paid to `p2wsh(OP_1)`.
    pub block_subsidy: Amount,
}

impl Default for ChainConfig {
    fn default() -> ChainConfig {
        ChainConfig { confirmation_depth: 6, block_subsidy: Amount::ZERO }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtxoEntry {
    pub output: TxOutput,
    /// Height of the block that created the output.
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u32,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn txids(&self) -> Vec<Txid> {
        self.transactions.iter().map(Transaction::txid).collect()
    }

    pub fn size(&self) -> usize {
        self.transactions.iter().map(Transaction::size).sum()
    }
}

/// Result of a successful validity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TxCheck {
    pub fee: Amount,
    pub size: usize,
    pub sigops: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MempoolEntry {
    #[serde(with = "crate::hexser::transaction")]
    pub tx: Transaction,
    pub fee: Amount,
    pub size: usize,
    /// Arrival order, for deterministic tie-breaking.
    pub sequence: u64,
}

impl MempoolEntry {
    /// `self.fee / self.size > other.fee / other.size` without division.
    pub fn feerate_gt(&self, other: &MempoolEntry) -> bool {
        feerate_gt(self.fee.to_sat(), self.size, other.fee.to_sat(), other.size)
    }
}

fn feerate_gt(fee_a: u64, size_a: usize, fee_b: u64, size_b: usize) -> bool {
    (fee_a as u128) * (size_b as u128) > (fee_b as u128) * (size_a as u128)
}

/// Outcome of [`ChainState::accept_to_mempool`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum MempoolAccept {
    Accepted { txid: Txid, fee: Amount },
    Replaced { txid: Txid, fee: Amount, evicted: Vec<Txid> },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Mempool {
    entries: BTreeMap<Txid, MempoolEntry>,
    /// Outpoint to the mempool transaction spending it.
    spends: BTreeMap<OutPoint, Txid>,
    next_sequence: u64,
}

impl Mempool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, txid: &Txid) -> Option<&MempoolEntry> {
        self.entries.get(txid)
    }

    pub fn contains(&self, txid: &Txid) -> bool {
        self.entries.contains_key(txid)
    }

    pub fn entries(&self) -> impl Iterator<Item = &MempoolEntry> {
        self.entries.values()
    }

    fn output(&self, outpoint: &OutPoint) -> Option<&TxOutput> {
        self.entries.get(&outpoint.txid)?.tx.outputs.get(outpoint.vout as usize)
    }

    fn insert(&mut self, tx: Transaction, fee: Amount, size: usize) {
        let txid = tx.txid();
        for input in &tx.inputs {
            self.spends.insert(input.previous, txid);
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.entries.insert(txid, MempoolEntry { tx, fee, size, sequence });
    }

    fn remove(&mut self, txid: &Txid) -> Option<MempoolEntry> {
        let entry = self.entries.remove(txid)?;
        for input in &entry.tx.inputs {
            if self.spends.get(&input.previous) == Some(txid) {
                self.spends.remove(&input.previous);
            }
        }
        Some(entry)
    }

    /// In-mempool parents of `txid`.
    fn parents(&self, txid: &Txid) -> BTreeSet<Txid> {
        let mut out = BTreeSet::new();
        if let Some(e) = self.entries.get(txid) {
            for input in &e.tx.inputs {
                if self.entries.contains_key(&input.previous.txid) {
                    out.insert(input.previous.txid);
                }
            }
        }
        out
    }

    /// All in-mempool ancestors of `txid`, excluding itself.
    pub fn ancestors(&self, txid: &Txid) -> BTreeSet<Txid> {
        let mut seen = BTreeSet::new();
        let mut todo: Vec<Txid> = self.parents(txid).into_iter().collect();
        while let Some(t) = todo.pop() {
            if seen.insert(t) {
                todo.extend(self.parents(&t));
            }
        }
        seen
    }

    /// All in-mempool descendants of `txid`, excluding itself.
    pub fn descendants(&self, txid: &Txid) -> BTreeSet<Txid> {
        let mut seen = BTreeSet::new();
        let mut todo = vec![*txid];
        while let Some(t) = todo.pop() {
            let Some(e) = self.entries.get(&t) else { continue };
            for vout in 0..e.tx.outputs.len() {
                if let Some(child) = self.spends.get(&OutPoint::new(t, vout as u32)) {
                    if seen.insert(*child) {
                        todo.push(*child);
                    }
                }
            }
        }
        seen
    }
}

/// Single-writer consensus state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    pub config: ChainConfig,
    utxos: BTreeMap<OutPoint, UtxoEntry>,
    /// Spent outpoint to the spending txid.
    spent: BTreeMap<OutPoint, Txid>,
    /// Confirmed txid to inclusion height.
    confirmed: BTreeMap<Txid, u32>,
    height: u32,
    blocks: Vec<Block>,
    mempool: Mempool,
    minted: u64,
}

impl Default for ChainState {
    fn default() -> ChainState {
        ChainState::new(ChainConfig::default())
    }
}

impl ChainState {
    pub fn new(config: ChainConfig) -> ChainState {
        ChainState {
            config,
            utxos: BTreeMap::new(),
            spent: BTreeMap::new(),
            confirmed: BTreeMap::new(),
            height: 0,
            blocks: Vec::new(),
            mempool: Mempool::default(),
            minted: 0,
        }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn utxo(&self, outpoint: &OutPoint) -> Option<&UtxoEntry> {
        self.utxos.get(outpoint)
    }

    pub fn utxos(&self) -> impl Iterator<Item = (&OutPoint, &UtxoEntry)> {
        self.utxos.iter()
    }

    pub fn utxo_total(&self) -> u64 {
        self.utxos.values().map(|u| u.output.amount.to_sat()).sum()
    }

    /// Outputs created by the faucet rather than by transactions.
    pub fn minted_total(&self) -> u64 {
        self.minted
    }

    pub fn confirmations(&self, txid: &Txid) -> Option<u32> {
        self.confirmed.get(txid).map(|h| self.height - h + 1)
    }

    pub fn is_confirmed(&self, txid: &Txid) -> bool {
        self.confirmations(txid).is_some_and(|c| c >= self.config.confirmation_depth)
    }

    /// Creates a confirmed output at the current height without a spending
    /// transaction, standing in for funds that existed before the simulation.
    pub fn mint(&mut self, locking_script: Script, amount: Amount) -> OutPoint {
        let faucet = Transaction {
            version: 2,
            inputs: vec![TxInput::new(OutPoint::NULL, SEQUENCE_FINAL)],
            outputs: vec![TxOutput::new(amount, locking_script)],
            locktime: self.minted_counter(),
        };
        let outpoint = OutPoint::new(faucet.txid(), 0);
        self.utxos.insert(outpoint, UtxoEntry { output: faucet.outputs[0].clone(), height: self.height });
        self.confirmed.insert(outpoint.txid, self.height);
        self.minted += amount.to_sat();
        outpoint
    }

    fn minted_counter(&self) -> u32 {
        // distinct faucet txids
        self.confirmed.len() as u32
    }

    fn lookup(&self, outpoint: &OutPoint, with_mempool: bool) -> Result<(TxOutput, Option<u32>), RejectReason> {
        if let Some(u) = self.utxos.get(outpoint) {
            return Ok((u.output.clone(), Some(u.height)));
        }
        if with_mempool {
            if let Some(o) = self.mempool.output(outpoint) {
                return Ok((o.clone(), None));
            }
        }
        if self.spent.contains_key(outpoint) {
            Err(RejectReason::DoubleSpend)
        } else {
            Err(RejectReason::MissingUtxo)
        }
    }

    /// Consensus validity against the confirmed UTXO set.
    pub fn check_tx(&self, tx: &Transaction) -> Result<TxCheck, Rejection> {
        self.check(tx, false)
    }

    fn check(&self, tx: &Transaction, with_mempool: bool) -> Result<TxCheck, Rejection> {
        if tx.inputs.is_empty() || tx.outputs.is_empty() {
            return Err(Rejection::new(RejectReason::BadScript, None, "transaction has no inputs or no outputs"));
        }
        let size = tx.serialize(true).map_err(|e| Rejection::new(RejectReason::BadScript, None, e.to_string()))?.len();
        let mut seen = BTreeSet::new();
        for (i, input) in tx.inputs.iter().enumerate() {
            if !seen.insert(input.previous) {
                return Err(Rejection::new(
                    RejectReason::DoubleSpend,
                    Some(i),
                    "outpoint spent twice in one transaction",
                ));
            }
        }
        if tx.locktime != 0 && tx.inputs.iter().any(|i| i.sequence != SEQUENCE_FINAL) {
            if tx.locktime as i64 >= super::engine::LOCKTIME_THRESHOLD {
                return Err(Rejection::new(RejectReason::Timelock, None, "time-based locktime unsupported"));
            }
            if tx.locktime > self.height {
                return Err(Rejection::new(
                    RejectReason::Timelock,
                    None,
                    format!("locktime {} above tip height {}", tx.locktime, self.height),
                ));
            }
        }
        let mut spent_outputs = Vec::with_capacity(tx.inputs.len());
        for (i, input) in tx.inputs.iter().enumerate() {
            if input.previous.is_null() {
                return Err(Rejection::new(RejectReason::MissingUtxo, Some(i), "null outpoint is not spendable"));
            }
            let (output, created) = self
                .lookup(&input.previous, with_mempool)
                .map_err(|r| Rejection::new(r, Some(i), format!("outpoint {}", input.previous)))?;
            self.check_relative_lock(tx, i, created)?;
            spent_outputs.push(output);
        }
        let total_in = Amount::checked_sum(spent_outputs.iter().map(|o| o.amount))
            .map_err(|e| Rejection::new(RejectReason::NegativeFee, None, e.to_string()))?;
        let total_out =
            tx.total_output().map_err(|e| Rejection::new(RejectReason::NegativeFee, None, e.to_string()))?;
        let fee = total_in.checked_sub(total_out).ok_or_else(|| {
            Rejection::new(RejectReason::NegativeFee, None, format!("outputs {total_out} exceed inputs {total_in}"))
        })?;
        let mut sigops = 0;
        for (i, spent) in spent_outputs.iter().enumerate() {
            sigops += verify_input(tx, i, spent).map_err(|e| Rejection::from_engine(e, i))?;
        }
        Ok(TxCheck { fee, size, sigops })
    }

    fn check_relative_lock(&self, tx: &Transaction, index: usize, created: Option<u32>) -> Result<(), Rejection> {
        let sequence = tx.inputs[index].sequence;
        if tx.version < 2 || sequence & SEQUENCE_LOCKTIME_DISABLE_FLAG != 0 {
            return Ok(());
        }
        if sequence & SEQUENCE_LOCKTIME_TYPE_FLAG != 0 {
            return Err(Rejection::new(RejectReason::Timelock, Some(index), "time-based relative lock unsupported"));
        }
        let required = sequence & SEQUENCE_LOCKTIME_MASK;
        let confirmations = created.map_or(0, |h| self.height - h + 1);
        if confirmations < required {
            return Err(Rejection::new(
                RejectReason::Timelock,
                Some(index),
                format!("relative lock {required} with {confirmations} confirmations"),
            ));
        }
        Ok(())
    }

    /// Adds `tx` to the mempool, replacing conflicting entries when every conflict
    /// signals replaceability and `tx` pays both a strictly higher feerate and a
    /// strictly higher absolute fee than each of them.
    pub fn accept_to_mempool(&mut self, tx: Transaction) -> Result<MempoolAccept, Rejection> {
        let txid = tx.txid();
        if self.mempool.contains(&txid) || self.confirmed.contains_key(&txid) {
            return Err(Rejection::new(RejectReason::DoubleSpend, None, "transaction already known"));
        }
        let check = self.check(&tx, true)?;
        let conflicts: BTreeSet<Txid> =
            tx.inputs.iter().filter_map(|i| self.mempool.spends.get(&i.previous).copied()).collect();
        if conflicts.is_empty() {
            self.mempool.insert(tx, check.fee, check.size);
            return Ok(MempoolAccept::Accepted { txid, fee: check.fee });
        }
        let mut evicted = BTreeSet::new();
        for c in &conflicts {
            evicted.insert(*c);
            evicted.extend(self.mempool.descendants(c));
        }
        if tx.inputs.iter().any(|i| evicted.contains(&i.previous.txid)) {
            return Err(Rejection::new(
                RejectReason::DoubleSpend,
                None,
                "replacement spends a transaction it replaces",
            ));
        }
        for c in &conflicts {
            let entry = &self.mempool.entries[c];
            if !entry.tx.signals_rbf() {
                return Err(Rejection::new(
                    RejectReason::DoubleSpend,
                    None,
                    format!("conflicts with non-replaceable {c}"),
                ));
            }
            if !feerate_gt(check.fee.to_sat(), check.size, entry.fee.to_sat(), entry.size) {
                return Err(Rejection::new(RejectReason::DoubleSpend, None, format!("feerate not above {c}")));
            }
            if check.fee <= entry.fee {
                return Err(Rejection::new(RejectReason::DoubleSpend, None, format!("absolute fee not above {c}")));
            }
        }
        for e in &evicted {
            self.mempool.remove(e);
        }
        self.mempool.insert(tx, check.fee, check.size);
        Ok(MempoolAccept::Replaced { txid, fee: check.fee, evicted: evicted.into_iter().collect() })
    }

    /// Builds and connects the next block from the mempool by ancestor-package feerate.
    pub fn mine_block(&mut self, capacity_bytes: usize) -> Block {
        let mut selected: Vec<Txid> = Vec::new();
        let mut in_block: BTreeSet<Txid> = BTreeSet::new();
        let mut skipped: BTreeSet<Txid> = BTreeSet::new();
        let mut used = 0usize;
        loop {
            let mut best: Option<(Txid, Vec<Txid>, u64, usize, u64)> = None;
            for (txid, entry) in &self.mempool.entries {
                if in_block.contains(txid) || skipped.contains(txid) {
                    continue;
                }
                let mut package: Vec<Txid> =
                    self.mempool.ancestors(txid).into_iter().filter(|a| !in_block.contains(a)).collect();
                package.push(*txid);
                let fee: u64 = package.iter().map(|t| self.mempool.entries[t].fee.to_sat()).sum();
                let size: usize = package.iter().map(|t| self.mempool.entries[t].size).sum();
                let better = match &best {
                    None => true,
                    Some((_, _, bf, bs, bseq)) => {
                        feerate_gt(fee, size, *bf, *bs) || (!feerate_gt(*bf, *bs, fee, size) && entry.sequence < *bseq)
                    }
                };
                if better {
                    best = Some((*txid, package, fee, size, entry.sequence));
                }
            }
            let Some((txid, package, _, size, _)) = best else { break };
            if used + size > capacity_bytes {
                skipped.insert(txid);
                continue;
            }
            used += size;
            let ordered = self.topological(&package);
            for t in ordered {
                in_block.insert(t);
                selected.push(t);
            }
        }
        let transactions: Vec<Transaction> = selected.iter().map(|t| self.mempool.entries[t].tx.clone()).collect();
        for t in &selected {
            self.mempool.remove(t);
        }
        self.connect(transactions)
    }

    /// Orders `package` so parents precede children.
    fn topological(&self, package: &[Txid]) -> Vec<Txid> {
        let set: BTreeSet<Txid> = package.iter().copied().collect();
        let mut out = Vec::new();
        let mut placed = BTreeSet::new();
        while out.len() < set.len() {
            for t in &set {
                if placed.contains(t) {
                    continue;
                }
                if self.mempool.parents(t).iter().all(|p| !set.contains(p) || placed.contains(p)) {
                    placed.insert(*t);
                    out.push(*t);
                }
            }
        }
        out
    }

    fn connect(&mut self, transactions: Vec<Transaction>) -> Block {
        self.height += 1;
        let height = self.height;
        for tx in &transactions {
            let txid = tx.txid();
            for input in &tx.inputs {
                self.utxos.remove(&input.previous);
                self.spent.insert(input.previous, txid);
            }
            for (vout, output) in tx.outputs.iter().enumerate() {
                self.utxos.insert(OutPoint::new(txid, vout as u32), UtxoEntry { output: output.clone(), height });
            }
            self.confirmed.insert(txid, height);
        }
        let mut transactions = transactions;
        if self.config.block_subsidy > Amount::ZERO {
            let coinbase = coinbase(height, self.config.block_subsidy);
            let txid = coinbase.txid();
            self.utxos.insert(OutPoint::new(txid, 0), UtxoEntry { output: coinbase.outputs[0].clone(), height });
            self.confirmed.insert(txid, height);
            transactions.insert(0, coinbase);
        }
        // drop mempool entries that no longer connect
        let stale: Vec<Txid> = self
            .mempool
            .entries
            .iter()
            .filter(|(_, e)| e.tx.inputs.iter().any(|i| self.spent.contains_key(&i.previous)))
            .map(|(t, _)| *t)
            .collect();
        for t in stale {
            let mut gone = self.mempool.descendants(&t);
            gone.insert(t);
            for g in gone {
                self.mempool.remove(&g);
            }
        }
        let block = Block { height, transactions };
        self.blocks.push(block.clone());
        block
    }

    /// Mines `count` blocks of unlimited capacity.
    pub fn mine_blocks(&mut self, count: u32) {
        for _ in 0..count {
            self.mine_block(usize::MAX);
        }
    }

    /// Checks `tx` and, if valid, submits it and mines it in its own block.
    pub fn submit_and_mine(&mut self, tx: Transaction) -> Result<Block, Rejection> {
        self.accept_to_mempool(tx)?;
        Ok(self.mine_block(usize::MAX))
    }

    pub fn snapshot(&self) -> ChainSnapshot {
        ChainSnapshot {
            format: 1,
            config: self.config.clone(),
            height: self.height,
            utxos: self.utxos.iter().map(|(o, u)| SnapshotUtxo { outpoint: *o, entry: u.clone() }).collect(),
            spent: self.spent.iter().map(|(o, t)| (*o, *t)).collect(),
            confirmed: self.confirmed.iter().map(|(t, h)| (*t, *h)).collect(),
            blocks: self.blocks.clone(),
            mempool: self.mempool.entries.values().cloned().collect(),
            minted: self.minted,
        }
    }

    pub fn from_snapshot(s: ChainSnapshot) -> Result<ChainState, String> {
        if s.format != 1 {
            return Err(format!("unsupported format {}", s.format));
        }
        let mut mempool = Mempool::default();
        let mut entries = s.mempool;
        entries.sort_by_key(|e| e.sequence);
        for e in entries {
            mempool.insert(e.tx, e.fee, e.size);
        }
        Ok(ChainState {
            config: s.config,
            utxos: s.utxos.into_iter().map(|u| (u.outpoint, u.entry)).collect(),
            spent: s.spent.into_iter().collect(),
            confirmed: s.confirmed.into_iter().collect(),
            height: s.height,
            blocks: s.blocks,
            mempool,
            minted: s.minted,
        })
    }
}

fn coinbase(height: u32, amount: Amount) -> Transaction {
    let anyone = ScriptBuilder::new().push_int(1).into_script();
    Transaction {
        version: 2,
        inputs: vec![TxInput::new(OutPoint::NULL, SEQUENCE_FINAL)],
        outputs: vec![TxOutput::new(amount, p2wsh_address(&anyone).expect("non-empty script"))],
        locktime: height,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotUtxo {
    pub outpoint: OutPoint,
    #[serde(flatten)]
    pub entry: UtxoEntry,
}

/// Serializable form of [`ChainState`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSnapshot {
    pub format: u32,
    pub config: ChainConfig,
    pub height: u32,
    pub utxos: Vec<SnapshotUtxo>,
    pub spent: Vec<(OutPoint, Txid)>,
    pub confirmed: Vec<(Txid, u32)>,
    pub blocks: Vec<Block>,
    pub mempool: Vec<MempoolEntry>,
    pub minted: u64,
}
