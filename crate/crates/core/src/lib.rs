// SPDX-License-Identifier: CC0-1.0

pub mod compose;
pub mod covenant;
pub mod crypto;
pub mod ctv;
pub mod hexser;
pub mod protocol;
pub mod script;
pub mod sighash;
pub mod tx;
pub mod validator;
