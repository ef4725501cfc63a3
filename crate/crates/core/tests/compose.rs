// SPDX-License-Identifier: CC0-1.0

mod common;

use common::{sat, Setup};
use covenant_core::compose::{
    build_chain, build_disjoint, build_multi_deposit, cpfp_child, enumerate_fee_variants, pinning_replay,
    refund_transaction, variant_count, wallet_locking_script, Binding, ChainParams, ComposeError, CovenantGraph,
    FundingSource, DEFAULT_VARIANT_CAP,
};
use covenant_core::covenant::{Mechanism, RefundPath};
use covenant_core::crypto::PrivateKey;
use covenant_core::script::Script;
use covenant_core::sighash::SigHashType;
use covenant_core::tx::{OutPoint, TxOutput, SEQUENCE_NO_RBF};
use covenant_core::validator::{ChainConfig, ChainState, MempoolAccept, RejectReason};

fn chain_params(s: &Setup, mechanism: Mechanism, length: usize) -> ChainParams {
    ChainParams::new(mechanism, length, s.custody.clone(), s.destination.clone())
}

#[test]
fn length_three_chains_confirm_in_order_only() {
    for (seed, mechanism) in Mechanism::ALL.into_iter().enumerate() {
        let mut s = Setup::new(seed as u64);
        let funding = s.fund(100_000);
        let graph = build_chain(&funding, &chain_params(&s, mechanism, 3), &mut s.rng).unwrap();
        let txs = graph.finalized(&s.keys).unwrap();
        assert_eq!(txs.len(), 4);

        let mut out_of_order = s.chain.clone();
        out_of_order.submit_and_mine(txs[0].clone()).unwrap();
        let r = out_of_order.accept_to_mempool(txs[2].clone()).unwrap_err();
        assert_eq!(r.reason, RejectReason::MissingUtxo, "{mechanism}");

        CovenantGraph::broadcast(&mut s.chain, &txs).unwrap();
        assert!(txs.iter().all(|t| s.chain.confirmations(&t.txid()).is_some()));
        let last = txs.last().unwrap();
        assert_eq!(s.chain.utxo(&OutPoint::new(last.txid(), 0)).unwrap().output.locking_script, s.destination);
    }
}

#[test]
fn edge_bindings_follow_mechanism() {
    let mut s = Setup::new(10);
    let funding = s.fund(100_000);
    for mechanism in Mechanism::ALL {
        let g = build_chain(&funding, &chain_params(&s, mechanism, 2), &mut s.rng).unwrap();
        let script_bound = g.edges.iter().all(|e| matches!(e.binding, Binding::ScriptHash { .. }));
        assert_eq!(script_bound, mechanism == Mechanism::RecoveredKey);
    }
}

#[test]
fn recovered_key_children_survive_a_fee_input() {
    let mut s = Setup::new(11);
    let funding = s.fund(100_000);
    let mut graph = build_chain(&funding, &chain_params(&s, Mechanism::RecoveredKey, 3), &mut s.rng).unwrap();
    let before = graph.nodes[0].template.transaction.txid();
    let bump = s.fund(5_000);
    graph.add_fee_input(0, bump.outpoint, bump.amount, bump.key.public_key()).unwrap();
    assert_ne!(graph.nodes[0].template.transaction.txid(), before);
    assert_eq!(graph.nodes[1].template.transaction.inputs[0].previous.txid, graph.nodes[0].template.transaction.txid());
    let txs = graph.finalized(&s.keys).unwrap();
    CovenantGraph::broadcast(&mut s.chain, &txs).unwrap();
}

#[test]
fn deleted_key_fee_input_breaks_commitment() {
    let mut s = Setup::new(12);
    let funding = s.fund(100_000);
    let mut graph = build_chain(&funding, &chain_params(&s, Mechanism::DeletedKey, 1), &mut s.rng).unwrap();
    let bump = s.fund(5_000);
    graph.add_fee_input(0, bump.outpoint, bump.amount, bump.key.public_key()).unwrap();
    let txs = graph.finalized(&s.keys).unwrap();
    s.chain.submit_and_mine(txs[0].clone()).unwrap();
    assert_eq!(s.chain.accept_to_mempool(txs[1].clone()).unwrap_err().reason, RejectReason::BadSig);
}

#[test]
fn disjoint_branches_invalidate_each_other() {
    for (seed, mechanism) in Mechanism::ALL.into_iter().enumerate() {
        for first in 0..2 {
            let mut s = Setup::new(20 + seed as u64);
            let funding = s.fund(100_000);
            let a = vec![TxOutput::new(sat(90_000), s.destination.clone())];
            let other = wallet_locking_script(&PrivateKey::generate(&mut s.rng).public_key());
            let b = vec![TxOutput::new(sat(95_000), other)];
            let g = build_disjoint(&funding, &chain_params(&s, mechanism, 1), a, b, &mut s.rng).unwrap();
            let txs = g.finalized(&s.keys).unwrap();
            s.chain.submit_and_mine(txs[0].clone()).unwrap();
            s.chain.submit_and_mine(txs[1 + first].clone()).unwrap();
            let r = s.chain.accept_to_mempool(txs[2 - first].clone()).unwrap_err();
            assert_eq!(r.reason, RejectReason::DoubleSpend, "{mechanism} first={first}");
        }
    }
}

#[test]
fn disjoint_rejects_unfit_branches() {
    let mut s = Setup::new(30);
    let funding = s.fund(10_000);
    let a = vec![TxOutput::new(sat(9_000), s.destination.clone())];
    let p = chain_params(&s, Mechanism::Ctv, 1);
    assert!(build_disjoint(&funding, &p, a.clone(), a.clone(), &mut s.rng).is_err());
    let big = vec![TxOutput::new(sat(50_000), s.destination.clone())];
    assert!(build_disjoint(&funding, &p, a, big, &mut s.rng).is_err());
}

#[test]
fn multi_deposit_needs_every_deposit_and_refunds_after_timelock() {
    for (seed, mechanism) in Mechanism::ALL.into_iter().enumerate() {
        let mut s = Setup::new(40 + seed as u64);
        let refund_key = PrivateKey::generate(&mut s.rng);
        let fundings: Vec<FundingSource> = (0..3).map(|_| s.fund(50_000)).collect();
        let mut p = chain_params(&s, mechanism, 1);
        p.refund = Some(RefundPath { height: 20, key: refund_key.public_key() });
        let g = build_multi_deposit(&fundings, &p, &mut s.rng).unwrap();
        let txs = g.finalized(&s.keys).unwrap();
        assert_eq!(txs[3].inputs.len(), 3);

        let mut all = s.chain.clone();
        CovenantGraph::broadcast(&mut all, &txs).unwrap();

        // withhold deposit 2
        let mut partial = s.chain.clone();
        CovenantGraph::broadcast(&mut partial, &txs[..2]).unwrap();
        assert_eq!(partial.accept_to_mempool(txs[3].clone()).unwrap_err().reason, RejectReason::MissingUtxo);
        let refund = refund_transaction(&g, &[0, 1], &refund_key, s.destination.clone(), sat(500)).unwrap();
        assert_eq!(partial.accept_to_mempool(refund.clone()).unwrap_err().reason, RejectReason::Timelock);
        while partial.height() < 20 {
            partial.mine_blocks(1);
        }
        partial.submit_and_mine(refund).unwrap();
    }
}

#[test]
fn single_deposit_join_is_a_simple_covenant() {
    let mut s = Setup::new(50);
    let funding = s.fund(50_000);
    let g = build_multi_deposit(&[funding], &chain_params(&s, Mechanism::DeletedKey, 1), &mut s.rng).unwrap();
    assert_eq!((g.roots.len(), g.nodes.len(), g.nodes[0].template.transaction.inputs.len()), (1, 1, 1));
    CovenantGraph::broadcast(&mut s.chain, &g.finalized(&s.keys).unwrap()).unwrap();
}

#[test]
fn non_witness_parent_with_dependents_is_rejected() {
    let mut s = Setup::new(60);
    let funding = s.fund(100_000);
    let mut g = build_chain(&funding, &chain_params(&s, Mechanism::Ctv, 2), &mut s.rng).unwrap();
    g.nodes[0].template.transaction.outputs[0].locking_script = Script::from_bytes(vec![0x51]);
    let e = g.validate().unwrap_err();
    assert!(matches!(e, ComposeError::Graph(ref m) if m.contains("not a witness output")), "{e}");
}

#[test]
fn graph_json_round_trip() {
    let mut s = Setup::new(61);
    let funding = s.fund(100_000);
    let g = build_chain(&funding, &chain_params(&s, Mechanism::RecoveredKey, 2), &mut s.rng).unwrap();
    let json = serde_json::to_string(&g).unwrap();
    let back: CovenantGraph = serde_json::from_str(&json).unwrap();
    assert_eq!(back, g);
    assert!(g.render_tree().contains("level-2"));
}

#[test]
fn variant_counts() {
    let mut s = Setup::new(70);
    let funding = s.fund(10_000_000);
    let p = chain_params(&s, Mechanism::DeletedKey, 3);
    assert_eq!(enumerate_fee_variants(&funding, &p, &[1], DEFAULT_VARIANT_CAP, &mut s.rng).unwrap().count(), 1);
    let set = enumerate_fee_variants(&funding, &p, &[1, 5], DEFAULT_VARIANT_CAP, &mut s.rng).unwrap();
    assert_eq!(set.count(), 8);
    assert!(set.byte_size() > 8 * 3 * 60);
    let mut p5 = chain_params(&s, Mechanism::DeletedKey, 5);
    p5.level_fees = vec![sat(1); 5];
    let e = enumerate_fee_variants(&funding, &p5, &[1, 2, 3, 4, 5, 6], DEFAULT_VARIANT_CAP, &mut s.rng).unwrap_err();
    assert_eq!(e, ComposeError::TooManyVariants { count: 7776, cap: DEFAULT_VARIANT_CAP });
    assert_eq!(variant_count(4, 5), Some(1024));
}

#[test]
fn every_variant_chain_validates_and_replaces() {
    let mut s = Setup::new(71);
    let funding = s.fund(1_000_000);
    let set = enumerate_fee_variants(&funding, &chain_params(&s, Mechanism::DeletedKey, 3), &[1, 4], 4096, &mut s.rng)
        .unwrap();
    for v in &set.variants {
        let mut fresh = s.chain.clone();
        let txs = v.graph.finalized(&s.keys).unwrap();
        assert!(txs[1..].iter().all(|t| t.signals_rbf()));
        CovenantGraph::broadcast(&mut fresh, &txs).unwrap();
    }
    // low-fee level 1 in the mempool, then the high-fee variant replaces it
    let low = set.find(&[0, 0, 0]).unwrap().graph.finalized(&s.keys).unwrap();
    let high = set.find(&[1, 0, 0]).unwrap().graph.finalized(&s.keys).unwrap();
    assert_eq!(low[0], high[0]);
    s.chain.submit_and_mine(low[0].clone()).unwrap();
    s.chain.accept_to_mempool(low[1].clone()).unwrap();
    assert!(matches!(s.chain.accept_to_mempool(high[1].clone()).unwrap(), MempoolAccept::Replaced { .. }));
    assert_eq!(s.chain.accept_to_mempool(low[1].clone()).unwrap_err().reason, RejectReason::DoubleSpend);
}

#[test]
fn cpfp_child_pulls_zero_fee_parent_into_block() {
    let mut s = Setup::new(80);
    let funding = s.fund(100_000);
    let anchor_key = PrivateKey::generate(&mut s.rng);
    let mut p = chain_params(&s, Mechanism::Ctv, 1);
    p.level_fees = vec![sat(0)];
    p.anchor = Some(TxOutput::new(sat(20_000), wallet_locking_script(&anchor_key.public_key())));
    let g = build_chain(&funding, &p, &mut s.rng).unwrap();
    let txs = g.finalized(&s.keys).unwrap();
    s.chain.submit_and_mine(txs[0].clone()).unwrap();
    let parent = txs[1].clone();
    s.chain.accept_to_mempool(parent.clone()).unwrap();

    // a competitor paying 2 sat/B fills most of the block
    let other = s.fund(1_000_000);
    let filler =
        other.spend(vec![TxOutput::new(sat(1_000_000 - 400), s.destination.clone())], SEQUENCE_NO_RBF).unwrap();
    let capacity = parent.size() + filler.size() + 250;
    let wallet = FundingSource { outpoint: OutPoint::new(parent.txid(), 1), amount: sat(20_000), key: anchor_key };
    let child = cpfp_child(&parent, sat(0), 5, &wallet, s.destination.clone()).unwrap();
    let child_fee = 20_000 - child.outputs[0].amount.to_sat();
    assert!(child_fee >= 5 * (parent.size() + child.size()) as u64);
    s.chain.accept_to_mempool(filler.clone()).unwrap();
    s.chain.accept_to_mempool(child.clone()).unwrap();
    let block = s.chain.mine_block(capacity);
    let ids = block.txids();
    assert!(ids.contains(&parent.txid()) && ids.contains(&child.txid()));
    let pos = |t| ids.iter().position(|x| *x == t).unwrap();
    assert!(pos(parent.txid()) < pos(child.txid()));
}

#[test]
fn cpfp_above_target_pays_own_minimum() {
    let mut s = Setup::new(81);
    let key = PrivateKey::generate(&mut s.rng);
    let funding = s.fund(100_000);
    let parent = funding
        .spend(vec![TxOutput::new(sat(50_000), wallet_locking_script(&key.public_key()))], SEQUENCE_NO_RBF)
        .unwrap();
    let wallet = FundingSource { outpoint: OutPoint::new(parent.txid(), 0), amount: sat(50_000), key };
    let child = cpfp_child(&parent, sat(50_000), 2, &wallet, s.destination.clone()).unwrap();
    assert_eq!(50_000 - child.outputs[0].amount.to_sat(), child.size() as u64);
    let poor = FundingSource { amount: sat(50_000), ..wallet.clone() };
    assert!(cpfp_child(&parent, sat(0), 10_000, &poor, s.destination.clone()).is_err());
}

#[test]
fn anyonecanpay_single_replay_pins_the_covenant() {
    let mut s = Setup::new(90);
    let funding = s.fund(100_000);
    let mut p = chain_params(&s, Mechanism::DeletedKey, 1);
    p.commitment_type = Some(SigHashType::SINGLE_ANYONECANPAY);
    p.custody_type = SigHashType::SINGLE_ANYONECANPAY;
    p.sequence = SEQUENCE_NO_RBF;
    p.level_fees = vec![sat(2_000)];
    let g = build_chain(&funding, &p, &mut s.rng).unwrap();
    let txs = g.finalized(&s.keys).unwrap();
    let honest = txs[1].clone();
    s.chain.submit_and_mine(txs[0].clone()).unwrap();

    let attacker = s.fund(5_000_000);
    let attacker_change = wallet_locking_script(&PrivateKey::generate(&mut s.rng).public_key());
    let pinned = pinning_replay(&honest, 0, &attacker, attacker_change, sat(10)).unwrap();
    s.chain.accept_to_mempool(pinned.clone()).unwrap();

    // the honest spend cannot replace the non-signalling replay
    assert_eq!(s.chain.accept_to_mempool(honest.clone()).unwrap_err().reason, RejectReason::DoubleSpend);

    // a full block of higher-feerate transactions excludes the pinned package
    let mut competitors = Vec::new();
    for _ in 0..4 {
        let f = s.fund(100_000);
        let t = f.spend(vec![TxOutput::new(sat(100_000 - 1_000), s.destination.clone())], SEQUENCE_NO_RBF).unwrap();
        s.chain.accept_to_mempool(t.clone()).unwrap();
        competitors.push(t);
    }
    let capacity: usize = competitors.iter().map(|t| t.size()).sum();
    let block = s.chain.mine_block(capacity);
    assert!(!block.txids().contains(&pinned.txid()));
    assert!(s.chain.mempool().contains(&pinned.txid()));
    let honest_rate = 2_000.0 / honest.size() as f64;
    let pinned_rate = 2_010.0 / pinned.size() as f64;
    assert!(pinned_rate < honest_rate);
}

#[test]
fn fresh_chain_helper_defaults() {
    let c = ChainState::new(ChainConfig::default());
    assert_eq!(c.height(), 0);
}
