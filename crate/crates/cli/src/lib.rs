// SPDX-License-Identifier: CC0-1.0

//! Command-line front end and covenant wallet for `covenant-core`.

pub mod app;
pub mod input;
pub mod wallet;

pub use app::{run, Cli, CliError};
pub use wallet::{CovenantWallet, WalletError};
