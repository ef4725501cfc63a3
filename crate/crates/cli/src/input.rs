// SPDX-License-Identifier: CC0-1.0

//! Decoding of user-supplied JSON and hex, with byte offsets on failure.

use covenant_core::tx::{Transaction, TxError};
use serde::de::DeserializeOwned;

/// Malformed input and the byte offset where decoding stopped.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{what}: {message} at byte {offset}")]
pub struct ParseError {
    pub what: String,
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(what: impl Into<String>, offset: usize, message: impl Into<String>) -> ParseError {
        ParseError { what: what.into(), offset, message: message.into() }
    }
}

/// Byte offset of a 1-based (line, column) position in `text`.
fn offset_of(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn parse_json<T: DeserializeOwned>(what: &str, text: &str) -> Result<T, ParseError> {
    serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        let message = message.split(" at line ").next().unwrap_or(&message).to_string();
        ParseError::new(what, offset_of(text, e.line(), e.column()), message)
    })
}

pub fn parse_hex(what: &str, text: &str) -> Result<Vec<u8>, ParseError> {
    let trimmed = text.trim();
    let lead = text.len() - text.trim_start().len();
    hex::decode(trimmed).map_err(|e| match e {
        hex::FromHexError::InvalidHexCharacter { c, index } => {
            ParseError::new(what, lead + index, format!("invalid hex character {c:?}"))
        }
        hex::FromHexError::OddLength => ParseError::new(what, lead + trimmed.len(), "odd number of hex digits"),
        hex::FromHexError::InvalidStringLength => ParseError::new(what, lead + trimmed.len(), e.to_string()),
    })
}

pub fn parse_hex32(what: &str, text: &str) -> Result<[u8; 32], ParseError> {
    let bytes = parse_hex(what, text)?;
    let len = bytes.len();
    bytes.try_into().map_err(|_| ParseError::new(what, len.min(32) * 2, format!("expected 32 bytes, got {len}")))
}

/// Decodes a hex transaction; the offset counts hex characters into `text`.
pub fn parse_tx(what: &str, text: &str) -> Result<Transaction, ParseError> {
    let bytes = parse_hex(what, text)?;
    let lead = text.len() - text.trim_start().len();
    Transaction::deserialize(&bytes).map_err(|e| {
        let byte = match e {
            TxError::UnexpectedEof(p) | TxError::NonCanonicalCompactSize(p) | TxError::ScriptSigPresent(p) => p,
            TxError::UnknownFlag(_) => 5,
            TxError::TrailingBytes(n) => bytes.len() - n,
            _ => bytes.len(),
        };
        ParseError::new(what, lead + byte * 2, e.to_string())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_offsets() {
        let e = parse_json::<serde_json::Value>("x", "{\"a\": 1,\n \"b\": ]}").unwrap_err();
        assert_eq!(e.offset, 15);
        assert_eq!(&"{\"a\": 1,\n \"b\": ]}"[e.offset..e.offset + 1], "]");
    }

    #[test]
    fn hex_offsets() {
        assert_eq!(parse_hex("x", "00zz").unwrap_err().offset, 2);
        assert_eq!(parse_hex("x", "000").unwrap_err().offset, 3);
        assert_eq!(parse_tx("x", "02000000").unwrap_err().offset, 8);
    }
}
