// SPDX-License-Identifier: CC0-1.0

//! Covenant graphs: deposits, chains, disjoint branches and multi-deposit joins, plus
//! fee machinery (replace-by-fee variants, child-pays-for-parent, pinning).
//!
//! A graph is a set of root deposit transactions and covenant nodes. Each edge
//! connects a parent output to a node input and is bound either by txid or, for
//! NOINPUT commitments, by the witness-script hash of the parent output. Nodes are
//! finalized (witnesses filled in) only when broadcast, since custodial signatures
//! are produced at spend time.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::covenant::{
    Branch, CommitmentSignature, CovenantError, CovenantTemplate, DepositSpec, Mechanism, Satisfaction, SpendPath,
};
use crate::crypto::{sign, PrivateKey, PublicKey};
use crate::script::opcodes::OP_CHECKSIG;
use crate::script::{Script, ScriptBuilder};
use crate::sighash::{sighash_digest, SigHashType, SpentOutputContext};
use crate::tx::{p2wsh_address, p2wsh_program, Amount, OutPoint, Transaction, TxInput, TxOutput, Txid, SEQUENCE_RBF};
use crate::validator::{ChainState, Rejection};

pub mod build;
pub mod fees;

pub use build::{
    build_chain, build_chain_with, build_disjoint, build_multi_deposit, refund_transaction, ChainParams,
    MultiDepositParams,
};
pub use fees::{
    cpfp_child, enumerate_fee_variants, pinning_replay, variant_count, FeeVariant, FeeVariantSet, DEFAULT_VARIANT_CAP,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ComposeError {
    #[error(transparent)]
    Covenant(#[from] CovenantError),
    #[error("graph: {0}")]
    Graph(String),
    #[error("no private key for {0}")]
    MissingKey(PublicKey),
    #[error("{count} variant chains exceed the cap of {cap}")]
    TooManyVariants { count: u128, cap: usize },
    #[error("insufficient funds: {0}")]
    InsufficientFunds(String),
}

impl From<crate::tx::TxError> for ComposeError {
    fn from(e: crate::tx::TxError) -> ComposeError {
        ComposeError::Covenant(e.into())
    }
}

impl From<crate::sighash::SighashError> for ComposeError {
    fn from(e: crate::sighash::SighashError) -> ComposeError {
        ComposeError::Covenant(e.into())
    }
}

/// Private keys available when finalizing transactions.
#[derive(Debug, Clone, Default)]
pub struct Keyring(BTreeMap<PublicKey, PrivateKey>);

impl Keyring {
    pub fn new() -> Keyring {
        Keyring(BTreeMap::new())
    }

    pub fn insert(&mut self, key: PrivateKey) -> PublicKey {
        let pk = key.public_key();
        self.0.insert(pk, key);
        pk
    }

    pub fn get(&self, pk: &PublicKey) -> Option<&PrivateKey> {
        self.0.get(pk)
    }

    pub fn contains(&self, pk: &PublicKey) -> bool {
        self.0.contains_key(pk)
    }
}

impl FromIterator<PrivateKey> for Keyring {
    fn from_iter<I: IntoIterator<Item = PrivateKey>>(iter: I) -> Keyring {
        let mut k = Keyring::new();
        for key in iter {
            k.insert(key);
        }
        k
    }
}

/// `<W> CHECKSIG`, the script of plain single-key wallet outputs.
pub fn wallet_script(key: &PublicKey) -> Script {
    ScriptBuilder::new().push_slice(&key.serialize()).push_opcode(OP_CHECKSIG).into_script()
}

pub fn wallet_locking_script(key: &PublicKey) -> Script {
    p2wsh_address(&wallet_script(key)).expect("non-empty script")
}

/// Witness for a wallet input: `[sig, <W> CHECKSIG]`.
pub fn sign_wallet_input(
    tx: &Transaction,
    input_index: usize,
    amount: Amount,
    key: &PrivateKey,
    ty: SigHashType,
) -> Result<Vec<Vec<u8>>, ComposeError> {
    let script = wallet_script(&key.public_key());
    let ctx = SpentOutputContext { script_code: script.clone(), amount };
    let digest = sighash_digest(tx, input_index, &ctx, ty)?;
    Ok(vec![sign(key, &digest).to_witness_bytes(ty), script.into_bytes()])
}

/// A wallet output that funds a deposit.
#[derive(Debug, Clone)]
pub struct FundingSource {
    pub outpoint: OutPoint,
    pub amount: Amount,
    pub key: PrivateKey,
}

impl FundingSource {
    /// Mints a wallet output on `chain` and returns it as a funding source.
    pub fn mint(chain: &mut ChainState, key: PrivateKey, amount: Amount) -> FundingSource {
        let outpoint = chain.mint(wallet_locking_script(&key.public_key()), amount);
        FundingSource { outpoint, amount, key }
    }

    /// Signed transaction moving the funds to `outputs`.
    pub fn spend(&self, outputs: Vec<TxOutput>, sequence: u32) -> Result<Transaction, ComposeError> {
        let mut tx =
            Transaction { version: 2, inputs: vec![TxInput::new(self.outpoint, sequence)], outputs, locktime: 0 };
        tx.inputs[0].witness = sign_wallet_input(&tx, 0, self.amount, &self.key, SigHashType::ALL)?;
        Ok(tx)
    }
}

/// A signed transaction creating a covenant-bound deposit output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootDeposit {
    #[serde(with = "crate::hexser::transaction")]
    pub funding: Transaction,
    pub vout: u32,
    pub spec: DepositSpec,
    pub amount: Amount,
}

impl RootDeposit {
    pub fn outpoint(&self) -> OutPoint {
        OutPoint::new(self.funding.txid(), self.vout)
    }
}

/// How a node input is satisfied at broadcast time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum NodeInput {
    Covenant {
        spec: DepositSpec,
        amount: Amount,
        commitments: Vec<CommitmentSignature>,
        #[serde(default)]
        branch: Branch,
        custody_type: SigHashType,
    },
    Wallet {
        key: PublicKey,
        amount: Amount,
    },
}

impl NodeInput {
    pub fn amount(&self) -> Amount {
        match self {
            NodeInput::Covenant { amount, .. } | NodeInput::Wallet { amount, .. } => *amount,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub label: String,
    pub template: CovenantTemplate,
    pub inputs: Vec<NodeInput>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Root(usize),
    Node(usize),
}

/// What a child input commits to about its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Binding {
    /// The signature or template covers the parent txid.
    Txid,
    /// NOINPUT: any parent output with this witness-script hash is acceptable.
    ScriptHash {
        #[serde(with = "crate::hexser::array32")]
        hash: [u8; 32],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: Source,
    pub vout: u32,
    pub to: usize,
    pub input: usize,
    pub binding: Binding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovenantGraph {
    pub mechanism: Mechanism,
    pub roots: Vec<RootDeposit>,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<Edge>,
}

fn binding_for(mechanism: Mechanism, parent_output: &TxOutput) -> Binding {
    match (mechanism, p2wsh_program(&parent_output.locking_script)) {
        (Mechanism::RecoveredKey, Some(hash)) => Binding::ScriptHash { hash },
        _ => Binding::Txid,
    }
}

impl CovenantGraph {
    fn source_tx(&self, s: Source) -> Option<&Transaction> {
        match s {
            Source::Root(i) => self.roots.get(i).map(|r| &r.funding),
            Source::Node(i) => self.nodes.get(i).map(|n| &n.template.transaction),
        }
    }

    /// Edge feeding input `input` of node `node`.
    pub fn edge_into(&self, node: usize, input: usize) -> Option<&Edge> {
        self.edges.iter().find(|e| e.to == node && e.input == input)
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self.edges.iter().filter(|e| e.from == Source::Node(node)).map(|e| e.to).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Nodes ordered so every parent precedes its children.
    pub fn topological_order(&self) -> Result<Vec<usize>, ComposeError> {
        let mut indegree = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            if let Source::Node(_) = e.from {
                indegree[e.to] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop() {
            order.push(n);
            let mut next = Vec::new();
            for e in self.edges.iter().filter(|e| e.from == Source::Node(n)) {
                indegree[e.to] -= 1;
                if indegree[e.to] == 0 {
                    next.push(e.to);
                }
            }
            next.sort();
            next.dedup();
            ready.extend(next.into_iter().rev());
        }
        if order.len() != self.nodes.len() {
            return Err(ComposeError::Graph("cycle in covenant graph".into()));
        }
        Ok(order)
    }

    /// Structural checks: edges in range, acyclic, every parent output is a witness
    /// output, and script-hash bindings match their parent.
    pub fn validate(&self) -> Result<(), ComposeError> {
        for e in &self.edges {
            let parent =
                self.source_tx(e.from).ok_or_else(|| ComposeError::Graph("edge from unknown source".into()))?;
            let out = parent
                .outputs
                .get(e.vout as usize)
                .ok_or_else(|| ComposeError::Graph(format!("edge from missing output {}", e.vout)))?;
            let node = self.nodes.get(e.to).ok_or_else(|| ComposeError::Graph("edge to unknown node".into()))?;
            if e.input >= node.template.transaction.inputs.len() {
                return Err(ComposeError::Graph("edge to missing input".into()));
            }
            let Some(program) = p2wsh_program(&out.locking_script) else {
                return Err(ComposeError::Graph(format!(
                    "{} output {} has dependents but is not a witness output; its txid would be malleable",
                    match e.from {
                        Source::Root(i) => format!("root {i}"),
                        Source::Node(i) => format!("node {}", self.nodes[i].label),
                    },
                    e.vout
                )));
            };
            if let Binding::ScriptHash { hash } = e.binding {
                if hash != program {
                    return Err(ComposeError::Graph("script-hash binding does not match parent output".into()));
                }
            }
        }
        self.topological_order().map(|_| ())
    }

    /// Rewrites every edge's input outpoint to the current txid of its parent.
    pub fn rebind(&mut self) -> Result<(), ComposeError> {
        let order = self.topological_order()?;
        for n in order {
            let incoming: Vec<Edge> = self.edges.iter().filter(|e| e.to == n).copied().collect();
            for e in incoming {
                let txid = self.source_tx(e.from).expect("validated").txid();
                self.nodes[n].template.transaction.inputs[e.input].previous = OutPoint::new(txid, e.vout);
            }
        }
        Ok(())
    }

    /// Adds a wallet input to `node`, changing its txid, and rebinds descendants.
    pub fn add_fee_input(
        &mut self,
        node: usize,
        outpoint: OutPoint,
        amount: Amount,
        key: PublicKey,
    ) -> Result<(), ComposeError> {
        let n = self.nodes.get_mut(node).ok_or_else(|| ComposeError::Graph("unknown node".into()))?;
        n.template.transaction.inputs.push(TxInput::new(outpoint, SEQUENCE_RBF));
        n.template.sighash_types.push(SigHashType::ALL);
        n.inputs.push(NodeInput::Wallet { key, amount });
        self.rebind()
    }

    /// Node `node` with every witness filled in.
    pub fn finalize_node(&self, node: usize, keys: &Keyring) -> Result<Transaction, ComposeError> {
        let n = self.nodes.get(node).ok_or_else(|| ComposeError::Graph("unknown node".into()))?;
        finalize(&n.template.transaction, &n.inputs, keys)
    }

    /// Root funding transactions followed by every node, finalized, in broadcast order.
    pub fn finalized(&self, keys: &Keyring) -> Result<Vec<Transaction>, ComposeError> {
        let mut out: Vec<Transaction> = self.roots.iter().map(|r| r.funding.clone()).collect();
        for n in self.topological_order()? {
            out.push(self.finalize_node(n, keys)?);
        }
        Ok(out)
    }

    /// Submits and mines `txs` one block each, stopping at the first rejection.
    pub fn broadcast(chain: &mut ChainState, txs: &[Transaction]) -> Result<(), (usize, Rejection)> {
        for (i, tx) in txs.iter().enumerate() {
            chain.submit_and_mine(tx.clone()).map_err(|r| (i, r))?;
        }
        Ok(())
    }

    /// Total serialized size of every root and node template.
    pub fn byte_size(&self) -> usize {
        self.roots.iter().map(|r| r.funding.size()).sum::<usize>()
            + self.nodes.iter().map(|n| n.template.transaction.size()).sum::<usize>()
    }

    /// Indented text rendering of the graph.
    pub fn render_tree(&self) -> String {
        let mut s = String::new();
        for (i, r) in self.roots.iter().enumerate() {
            let _ = writeln!(s, "root {i} {} ({}, {})", r.outpoint(), r.amount, self.mechanism);
            self.render_children(&mut s, Source::Root(i), 1);
        }
        s
    }

    fn render_children(&self, s: &mut String, from: Source, depth: usize) {
        let mut seen = Vec::new();
        for e in self.edges.iter().filter(|e| e.from == from) {
            if seen.contains(&e.to) {
                continue;
            }
            seen.push(e.to);
            let n = &self.nodes[e.to];
            let bind = match e.binding {
                Binding::Txid => "txid".to_string(),
                Binding::ScriptHash { hash } => format!("script {}", &hex::encode(hash)[..16]),
            };
            let fee = fee_of(n).map(|f| f.to_string()).unwrap_or_else(|| "?".into());
            let _ = writeln!(
                s,
                "{}└─ {} {} [vout {} -> in {}, {bind}, fee {fee}]",
                "   ".repeat(depth - 1),
                n.label,
                n.template.transaction.txid(),
                e.vout,
                e.input
            );
            self.render_children(s, Source::Node(e.to), depth + 1);
        }
    }
}

/// Fee implied by a node's declared input amounts.
pub fn fee_of(node: &GraphNode) -> Option<Amount> {
    let total_in = Amount::checked_sum(node.inputs.iter().map(NodeInput::amount)).ok()?;
    total_in.checked_sub(node.template.transaction.total_output().ok()?)
}

/// Fills in the witness of every input of `tx`.
pub fn finalize(tx: &Transaction, inputs: &[NodeInput], keys: &Keyring) -> Result<Transaction, ComposeError> {
    if inputs.len() != tx.inputs.len() {
        return Err(ComposeError::Graph("input metadata does not match transaction".into()));
    }
    let mut signed = tx.clone();
    for (i, input) in inputs.iter().enumerate() {
        let witness = match input {
            NodeInput::Wallet { key, amount } => {
                let sk = keys.get(key).ok_or(ComposeError::MissingKey(*key))?;
                sign_wallet_input(tx, i, *amount, sk, SigHashType::ALL)?
            }
            NodeInput::Covenant { spec, amount, commitments, branch, custody_type } => {
                let custody: Vec<&PrivateKey> =
                    spec.custody.keys.iter().filter_map(|k| keys.get(k)).take(spec.custody.j).collect();
                if custody.len() < spec.custody.j {
                    let missing = spec.custody.keys.iter().find(|k| !keys.contains(k)).copied();
                    return Err(ComposeError::MissingKey(missing.expect("some key missing")));
                }
                let custody_sigs = spec.sign_custody(tx, i, *amount, &custody, *custody_type)?;
                let mut ordered: Vec<&CommitmentSignature> = commitments.iter().collect();
                if let crate::covenant::Commitment::DeletedKey { enforcement } = &spec.commitment {
                    ordered.sort_by_key(|c| enforcement.position(&c.signer));
                    ordered.truncate(enforcement.m);
                }
                let sat = Satisfaction {
                    branch: *branch,
                    commitment: ordered.iter().map(|c| c.witness_bytes()).collect(),
                    custody: custody_sigs,
                };
                spec.witness(SpendPath::Main(sat))?
            }
        };
        signed.inputs[i].witness = witness;
    }
    Ok(signed)
}

pub(crate) fn covenant_input(
    spec: &DepositSpec,
    amount: Amount,
    commitments: Vec<CommitmentSignature>,
    branch: Branch,
    custody_type: SigHashType,
) -> NodeInput {
    NodeInput::Covenant { spec: spec.clone(), amount, commitments, branch, custody_type }
}

pub(crate) fn edge(
    mechanism: Mechanism,
    from: Source,
    parent: &Transaction,
    vout: u32,
    to: usize,
    input: usize,
) -> Edge {
    Edge { from, vout, to, input, binding: binding_for(mechanism, &parent.outputs[vout as usize]) }
}

pub(crate) fn placeholder_outpoint(i: u32) -> OutPoint {
    OutPoint::new(Txid::NULL, i)
}
