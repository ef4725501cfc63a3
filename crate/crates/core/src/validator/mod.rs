// SPDX-License-Identifier: CC0-1.0

//! Simulated single-node consensus.

pub mod chain;
pub mod engine;

pub use chain::{
    Block, ChainConfig, ChainSnapshot, ChainState, MempoolAccept, MempoolEntry, RejectReason, Rejection, TxCheck,
};
pub use engine::{execute, execute_clean, verify_input, EngineError, ExecContext, Execution};
