// SPDX-License-Identifier: CC0-1.0

//! Graph builders.
//!
//! Deleted-key graphs are built parent first: each commitment signature covers the
//! parent txid. Recovered-key and CTV graphs are built leaf first, because a parent's
//! output script embeds the child's recovered key or template hash, and neither
//! commits to the outpoint the child spends; outpoints are bound afterwards.

use rand::RngCore;

use super::{
    covenant_input, edge, placeholder_outpoint, ComposeError, CovenantGraph, FundingSource, GraphNode, RootDeposit,
    Source,
};
use crate::covenant::{
    build_recovered_key_covenant, sign_commitment, Branch, Commitment, CommitmentSignature, CovenantTemplate,
    CustodialPolicy, DepositSpec, EnforcementPolicy, Mechanism, RecoveredStyle, RefundPath,
};
use crate::crypto::PrivateKey;
use crate::ctv::ctv_hash;
use crate::script::Script;
use crate::sighash::SigHashType;
use crate::tx::{Amount, OutPoint, Transaction, TxInput, TxOutput, SEQUENCE_NO_RBF, SEQUENCE_RBF};

/// Shape of a covenant chain (or of the single covenant in disjoint and multi-deposit
/// graphs, which use `level_fees[0]`).
#[derive(Debug, Clone)]
pub struct ChainParams {
    pub mechanism: Mechanism,
    pub length: usize,
    pub custody: CustodialPolicy,
    /// Deleted-key enforcement threshold `m` of `n`.
    pub enforcement_m: usize,
    pub enforcement_n: usize,
    /// Locking script of the last covenant's output.
    pub destination: Script,
    /// Fee paid by the root deposit transaction.
    pub root_fee: Amount,
    /// Fee paid by each level of the chain.
    pub level_fees: Vec<Amount>,
    /// Sighash type of commitment signatures; defaults per mechanism.
    pub commitment_type: Option<SigHashType>,
    pub custody_type: SigHashType,
    pub style: RecoveredStyle,
    pub sequence: u32,
    /// Extra output appended to the last level, e.g. a CPFP anchor.
    pub anchor: Option<TxOutput>,
    /// Refund path added to root deposits.
    pub refund: Option<RefundPath>,
}

impl ChainParams {
    pub fn new(mechanism: Mechanism, length: usize, custody: CustodialPolicy, destination: Script) -> ChainParams {
        ChainParams {
            mechanism,
            length,
            custody,
            enforcement_m: 2,
            enforcement_n: 3,
            destination,
            root_fee: Amount::from_sat(1_000).expect("in range"),
            level_fees: vec![Amount::from_sat(1_000).expect("in range"); length],
            commitment_type: None,
            custody_type: SigHashType::ALL,
            style: RecoveredStyle::Nums,
            sequence: SEQUENCE_RBF,
            anchor: None,
            refund: None,
        }
    }

    fn commitment_type(&self, joint_inputs: bool) -> SigHashType {
        self.commitment_type.unwrap_or(match self.mechanism {
            Mechanism::RecoveredKey if joint_inputs => SigHashType::ALL_NOINPUT,
            Mechanism::RecoveredKey => SigHashType::NOINPUT_ANYONECANPAY,
            _ => SigHashType::ALL,
        })
    }

    fn check(&self) -> Result<(), ComposeError> {
        if self.length == 0 {
            return Err(ComposeError::Graph("chain length must be at least 1".into()));
        }
        if self.level_fees.len() != self.length {
            return Err(ComposeError::Graph(format!(
                "{} level fees for a chain of length {}",
                self.level_fees.len(),
                self.length
            )));
        }
        self.custody.validate()?;
        Ok(())
    }

    /// Deleted-key enforcement keys for one policy.
    pub fn generate_enforcers<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<PrivateKey> {
        (0..self.enforcement_n).map(|_| PrivateKey::generate(rng)).collect()
    }

    fn deposit_spec(&self, commitment: Commitment, with_refund: bool) -> DepositSpec {
        let mut spec = DepositSpec::new(commitment, self.custody.clone());
        if with_refund {
            spec.refund = self.refund.clone();
        }
        spec
    }
}

fn sub(a: Amount, b: Amount, what: &str) -> Result<Amount, ComposeError> {
    a.checked_sub(b).ok_or_else(|| ComposeError::InsufficientFunds(format!("{what}: {a} < {b}")))
}

/// Output amounts: index 0 is the deposit, index `i` the output of level `i`.
fn level_amounts(funding: Amount, params: &ChainParams) -> Result<Vec<Amount>, ComposeError> {
    let mut amounts = vec![sub(funding, params.root_fee, "root fee")?];
    for (i, fee) in params.level_fees.iter().enumerate() {
        let prev = *amounts.last().expect("non-empty");
        amounts.push(sub(prev, *fee, &format!("level {} fee", i + 1))?);
    }
    Ok(amounts)
}

fn level_outputs(
    params: &ChainParams,
    amount: Amount,
    next: Option<&DepositSpec>,
) -> Result<Vec<TxOutput>, ComposeError> {
    match next {
        Some(spec) => Ok(vec![TxOutput::new(amount, spec.locking_script()?)]),
        None => match &params.anchor {
            Some(anchor) => Ok(vec![
                TxOutput::new(sub(amount, anchor.amount, "anchor")?, params.destination.clone()),
                anchor.clone(),
            ]),
            None => Ok(vec![TxOutput::new(amount, params.destination.clone())]),
        },
    }
}

fn unsigned(previous: OutPoint, sequence: u32, outputs: Vec<TxOutput>) -> Transaction {
    Transaction { version: 2, inputs: vec![TxInput::new(previous, sequence)], outputs, locktime: 0 }
}

fn sign_all(
    template: &CovenantTemplate,
    input: usize,
    spec: &DepositSpec,
    amount: Amount,
    keys: &[PrivateKey],
) -> Result<Vec<CommitmentSignature>, ComposeError> {
    let Commitment::DeletedKey { enforcement } = &spec.commitment else {
        return Err(ComposeError::Graph("not a deleted-key deposit".into()));
    };
    let ctx = spec.spent_context(amount)?;
    keys.iter().map(|k| Ok(sign_commitment(template, input, k, &ctx, enforcement)?)).collect()
}

fn policy(params: &ChainParams, keys: &[PrivateKey]) -> Result<EnforcementPolicy, ComposeError> {
    Ok(EnforcementPolicy::new(params.enforcement_m, keys.iter().map(PrivateKey::public_key).collect())?)
}

/// A chain of `params.length` covenant transactions below one deposit.
///
/// Deleted-key enforcement keys are generated from `rng` and dropped once every
/// commitment signature is made.
pub fn build_chain<R: RngCore + ?Sized>(
    funding: &FundingSource,
    params: &ChainParams,
    rng: &mut R,
) -> Result<CovenantGraph, ComposeError> {
    let enforcers: Vec<Vec<PrivateKey>> = match params.mechanism {
        Mechanism::DeletedKey => (0..params.length).map(|_| params.generate_enforcers(rng)).collect(),
        _ => Vec::new(),
    };
    build_chain_with(funding, params, &enforcers)
}

/// [`build_chain`] with caller-supplied deleted-key enforcement keys, one set per level.
pub fn build_chain_with(
    funding: &FundingSource,
    params: &ChainParams,
    enforcers: &[Vec<PrivateKey>],
) -> Result<CovenantGraph, ComposeError> {
    params.check()?;
    let amounts = level_amounts(funding.amount, params)?;
    let t = params.length;
    let ty = params.commitment_type(false);
    let mut nodes: Vec<GraphNode> = Vec::with_capacity(t);
    let root_spec;
    let root_tx;
    match params.mechanism {
        Mechanism::DeletedKey => {
            if enforcers.len() != t {
                return Err(ComposeError::Graph(format!("{} enforcer sets for {t} levels", enforcers.len())));
            }
            let specs: Vec<DepositSpec> = enforcers
                .iter()
                .enumerate()
                .map(|(i, keys)| {
                    Ok(params.deposit_spec(Commitment::DeletedKey { enforcement: policy(params, keys)? }, i == 0))
                })
                .collect::<Result<_, ComposeError>>()?;
            root_spec = specs[0].clone();
            root_tx = funding.spend(vec![TxOutput::new(amounts[0], root_spec.locking_script()?)], SEQUENCE_NO_RBF)?;
            let mut prev = root_tx.txid();
            for i in 0..t {
                let outputs = level_outputs(params, amounts[i + 1], specs.get(i + 1))?;
                let tx = unsigned(OutPoint::new(prev, 0), params.sequence, outputs);
                let template = CovenantTemplate::new(tx, ty, Mechanism::DeletedKey);
                let sigs = sign_all(&template, 0, &specs[i], amounts[i], &enforcers[i])?;
                prev = template.transaction.txid();
                nodes.push(GraphNode {
                    label: format!("level-{}", i + 1),
                    inputs: vec![covenant_input(&specs[i], amounts[i], sigs, Branch::A, params.custody_type)],
                    template,
                });
            }
        }
        Mechanism::RecoveredKey | Mechanism::Ctv => {
            let mut next: Option<DepositSpec> = None;
            for i in (0..t).rev() {
                let outputs = level_outputs(params, amounts[i + 1], next.as_ref())?;
                let tx = unsigned(placeholder_outpoint(0), params.sequence, outputs);
                let template = CovenantTemplate::new(tx, ty, params.mechanism);
                let (commitment, sigs) = leaf_first_commitment(&template, 0, params)?;
                let spec = params.deposit_spec(commitment, i == 0);
                nodes.push(GraphNode {
                    label: format!("level-{}", i + 1),
                    inputs: vec![covenant_input(&spec, amounts[i], sigs, Branch::A, params.custody_type)],
                    template,
                });
                next = Some(spec);
            }
            nodes.reverse();
            root_spec = next.expect("length >= 1");
            root_tx = funding.spend(vec![TxOutput::new(amounts[0], root_spec.locking_script()?)], SEQUENCE_NO_RBF)?;
        }
    }
    let mut edges = vec![edge(params.mechanism, Source::Root(0), &root_tx, 0, 0, 0)];
    for i in 1..t {
        edges.push(edge(params.mechanism, Source::Node(i - 1), &nodes[i - 1].template.transaction, 0, i, 0));
    }
    let mut graph = CovenantGraph {
        mechanism: params.mechanism,
        roots: vec![RootDeposit { funding: root_tx, vout: 0, spec: root_spec, amount: amounts[0] }],
        nodes,
        edges,
    };
    graph.rebind()?;
    graph.validate()?;
    Ok(graph)
}

/// Commitment for a recovered-key or CTV template, with any commitment signature.
fn leaf_first_commitment(
    template: &CovenantTemplate,
    input: usize,
    params: &ChainParams,
) -> Result<(Commitment, Vec<CommitmentSignature>), ComposeError> {
    match params.mechanism {
        Mechanism::RecoveredKey => {
            let (sig, key) = build_recovered_key_covenant(template, input, &params.style)?;
            Ok((Commitment::RecoveredKey { keys: vec![key] }, vec![sig]))
        }
        Mechanism::Ctv => {
            let h = ctv_hash(&template.transaction, input as u32).map_err(crate::covenant::CovenantError::from)?;
            Ok((Commitment::Ctv { hashes: vec![h] }, Vec::new()))
        }
        Mechanism::DeletedKey => unreachable!("parent-first mechanism"),
    }
}

/// Two alternative covenants spending the same deposit; confirming one invalidates
/// the other.
pub fn build_disjoint<R: RngCore + ?Sized>(
    funding: &FundingSource,
    params: &ChainParams,
    branch_a: Vec<TxOutput>,
    branch_b: Vec<TxOutput>,
    rng: &mut R,
) -> Result<CovenantGraph, ComposeError> {
    params.custody.validate()?;
    let deposit = sub(funding.amount, params.root_fee, "root fee")?;
    for (name, outs) in [("A", &branch_a), ("B", &branch_b)] {
        let total = Amount::checked_sum(outs.iter().map(|o| o.amount))?;
        if outs.is_empty() || total > deposit {
            return Err(ComposeError::Graph(format!("branch {name} outputs do not fit the deposit")));
        }
    }
    let ty = params.commitment_type(false);
    let templates: Vec<CovenantTemplate> = [branch_a, branch_b]
        .into_iter()
        .map(|outs| {
            CovenantTemplate::new(unsigned(placeholder_outpoint(0), params.sequence, outs), ty, params.mechanism)
        })
        .collect();
    if templates[0] == templates[1] {
        return Err(ComposeError::Graph("branches are identical".into()));
    }
    let (spec, sigs): (DepositSpec, [Vec<CommitmentSignature>; 2]) = match params.mechanism {
        Mechanism::DeletedKey => {
            let keys = params.generate_enforcers(rng);
            let spec = params.deposit_spec(Commitment::DeletedKey { enforcement: policy(params, &keys)? }, true);
            // signed once the deposit txid is known
            return finish_deleted_key_disjoint(funding, params, spec, templates, keys, deposit);
        }
        Mechanism::RecoveredKey => {
            let (sa, ka) = build_recovered_key_covenant(&templates[0], 0, &params.style)?;
            let (sb, kb) = build_recovered_key_covenant(&templates[1], 0, &params.style)?;
            (params.deposit_spec(Commitment::RecoveredKey { keys: vec![ka, kb] }, true), [vec![sa], vec![sb]])
        }
        Mechanism::Ctv => {
            let ha = ctv_hash(&templates[0].transaction, 0).map_err(crate::covenant::CovenantError::from)?;
            let hb = ctv_hash(&templates[1].transaction, 0).map_err(crate::covenant::CovenantError::from)?;
            (params.deposit_spec(Commitment::Ctv { hashes: vec![ha, hb] }, true), [Vec::new(), Vec::new()])
        }
    };
    let root_tx = funding.spend(vec![TxOutput::new(deposit, spec.locking_script()?)], SEQUENCE_NO_RBF)?;
    let [sa, sb] = sigs;
    let nodes = templates
        .into_iter()
        .zip([(sa, Branch::A, "branch-a"), (sb, Branch::B, "branch-b")])
        .map(|(template, (sigs, branch, label))| GraphNode {
            label: label.into(),
            inputs: vec![covenant_input(&spec, deposit, sigs, branch, params.custody_type)],
            template,
        })
        .collect();
    disjoint_graph(params.mechanism, root_tx, spec, deposit, nodes)
}

fn finish_deleted_key_disjoint(
    funding: &FundingSource,
    params: &ChainParams,
    spec: DepositSpec,
    mut templates: Vec<CovenantTemplate>,
    keys: Vec<PrivateKey>,
    deposit: Amount,
) -> Result<CovenantGraph, ComposeError> {
    let root_tx = funding.spend(vec![TxOutput::new(deposit, spec.locking_script()?)], SEQUENCE_NO_RBF)?;
    let mut nodes = Vec::new();
    for (template, label) in templates.iter_mut().zip(["branch-a", "branch-b"]) {
        template.transaction.inputs[0].previous = OutPoint::new(root_tx.txid(), 0);
        let sigs = sign_all(template, 0, &spec, deposit, &keys)?;
        nodes.push(GraphNode {
            label: label.into(),
            inputs: vec![covenant_input(&spec, deposit, sigs, Branch::A, params.custody_type)],
            template: template.clone(),
        });
    }
    drop(keys);
    disjoint_graph(Mechanism::DeletedKey, root_tx, spec, deposit, nodes)
}

fn disjoint_graph(
    mechanism: Mechanism,
    root_tx: Transaction,
    spec: DepositSpec,
    deposit: Amount,
    nodes: Vec<GraphNode>,
) -> Result<CovenantGraph, ComposeError> {
    let edges =
        vec![edge(mechanism, Source::Root(0), &root_tx, 0, 0, 0), edge(mechanism, Source::Root(0), &root_tx, 0, 1, 0)];
    let mut graph = CovenantGraph {
        mechanism,
        roots: vec![RootDeposit { funding: root_tx, vout: 0, spec, amount: deposit }],
        nodes,
        edges,
    };
    graph.rebind()?;
    graph.validate()?;
    Ok(graph)
}

/// Parameters of [`build_multi_deposit`] beyond the chain shape.
pub type MultiDepositParams = ChainParams;

/// One covenant spending every deposit; it is valid only once all of them exist.
/// `params.refund` adds a time-locked refund path to each deposit.
pub fn build_multi_deposit<R: RngCore + ?Sized>(
    fundings: &[FundingSource],
    params: &ChainParams,
    rng: &mut R,
) -> Result<CovenantGraph, ComposeError> {
    if fundings.is_empty() {
        return Err(ComposeError::Graph("at least one deposit is required".into()));
    }
    params.custody.validate()?;
    let amounts: Vec<Amount> =
        fundings.iter().map(|f| sub(f.amount, params.root_fee, "root fee")).collect::<Result<_, _>>()?;
    let total = Amount::checked_sum(amounts.iter().copied())?;
    let fee = *params.level_fees.first().ok_or_else(|| ComposeError::Graph("missing covenant fee".into()))?;
    let outputs = level_outputs(params, sub(total, fee, "covenant fee")?, None)?;
    let ty = params.commitment_type(true);
    let mut tx = Transaction {
        version: 2,
        inputs: (0..fundings.len()).map(|i| TxInput::new(placeholder_outpoint(i as u32), params.sequence)).collect(),
        outputs,
        locktime: 0,
    };
    let mut template = CovenantTemplate::new(tx.clone(), ty, params.mechanism);
    let mut specs = Vec::new();
    let mut sigs: Vec<Vec<CommitmentSignature>> = Vec::new();
    let mut roots = Vec::new();
    match params.mechanism {
        Mechanism::DeletedKey => {
            let keys = params.generate_enforcers(rng);
            let spec = params.deposit_spec(Commitment::DeletedKey { enforcement: policy(params, &keys)? }, true);
            for (i, f) in fundings.iter().enumerate() {
                let root = f.spend(vec![TxOutput::new(amounts[i], spec.locking_script()?)], SEQUENCE_NO_RBF)?;
                tx.inputs[i].previous = OutPoint::new(root.txid(), 0);
                roots.push(root);
            }
            template = CovenantTemplate::new(tx, ty, params.mechanism);
            for (i, amount) in amounts.iter().enumerate() {
                sigs.push(sign_all(&template, i, &spec, *amount, &keys)?);
                specs.push(spec.clone());
            }
        }
        Mechanism::RecoveredKey | Mechanism::Ctv => {
            for i in 0..fundings.len() {
                let (commitment, s) = leaf_first_commitment(&template, i, params)?;
                specs.push(params.deposit_spec(commitment, true));
                sigs.push(s);
            }
            for (i, f) in fundings.iter().enumerate() {
                roots.push(f.spend(vec![TxOutput::new(amounts[i], specs[i].locking_script()?)], SEQUENCE_NO_RBF)?);
            }
        }
    }
    let node = GraphNode {
        label: "covenant".into(),
        inputs: specs
            .iter()
            .zip(amounts.iter())
            .zip(sigs)
            .map(|((spec, amount), s)| covenant_input(spec, *amount, s, Branch::A, params.custody_type))
            .collect(),
        template,
    };
    let edges = roots.iter().enumerate().map(|(i, r)| edge(params.mechanism, Source::Root(i), r, 0, 0, i)).collect();
    let mut graph = CovenantGraph {
        mechanism: params.mechanism,
        roots: roots
            .into_iter()
            .zip(specs)
            .zip(amounts)
            .map(|((funding, spec), amount)| RootDeposit { funding, vout: 0, spec, amount })
            .collect(),
        nodes: vec![node],
        edges,
    };
    graph.rebind()?;
    graph.validate()?;
    Ok(graph)
}

/// Spends the given root deposits through their refund path to `destination`.
pub fn refund_transaction(
    graph: &CovenantGraph,
    roots: &[usize],
    key: &PrivateKey,
    destination: Script,
    fee: Amount,
) -> Result<Transaction, ComposeError> {
    let mut height = 0;
    let mut total = Amount::ZERO;
    for &r in roots {
        let root = graph.roots.get(r).ok_or_else(|| ComposeError::Graph(format!("no root {r}")))?;
        let refund = root
            .spec
            .refund
            .as_ref()
            .ok_or(crate::covenant::CovenantError::MissingExtras("deposit has no refund path"))?;
        height = height.max(refund.height);
        total = total.checked_add(root.amount)?;
    }
    let mut tx = Transaction {
        version: 2,
        inputs: roots.iter().map(|&r| TxInput::new(graph.roots[r].outpoint(), SEQUENCE_NO_RBF)).collect(),
        outputs: vec![TxOutput::new(sub(total, fee, "refund fee")?, destination)],
        locktime: height,
    };
    for (i, &r) in roots.iter().enumerate() {
        let root = &graph.roots[r];
        let sig = root.spec.sign_refund(&tx, i, root.amount, key)?;
        tx.inputs[i].witness = root.spec.witness(crate::covenant::SpendPath::Refund(sig))?;
    }
    Ok(tx)
}
