// SPDX-License-Identifier: CC0-1.0

//! secp256k1 ECDSA: signing, verification, public key recovery, and signatures whose
//! private key provably does not exist.
//!
//! Field and group arithmetic come from `k256`; everything ECDSA-specific (nonce use,
//! verification, recovery candidate enumeration, DER) lives here.
//!
//! The message scalar `e` is the full 32-byte digest read big-endian and reduced mod
//! `n`. Recovery follows SEC1 4.1.6: for each valid lift `R` of `r` (both y parities,
//! and `r + n` when that is still a field element) the candidate key is
//! `P = r⁻¹(s·R − e·G)`; only candidates that verify are returned.

use core::fmt;

use k256::elliptic_curve::bigint::{ArrayEncoding, U256};
use k256::elliptic_curve::group::prime::PrimeCurveAffine;
use k256::elliptic_curve::ops::Reduce;
use k256::elliptic_curve::point::{AffineCoordinates, DecompressPoint};
use k256::elliptic_curve::scalar::IsHigh;
use k256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use k256::elliptic_curve::subtle::Choice;
use k256::elliptic_curve::{Curve, PrimeField};
use k256::{AffinePoint, EncodedPoint, FieldBytes, ProjectivePoint, Scalar, Secp256k1};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::Sha256;

use crate::sighash::SigHashType;
use crate::tx::sha256;

/// Field prime `p` of secp256k1, big-endian.
pub const FIELD_PRIME: [u8; 32] = [
    0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff,
    0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xfe, 0xff, 0xff, 0xfc, 0x2f,
];

/// Upper bound on the `r` increments tried when searching for a NUMS signature.
pub const NUMS_MAX_ITERATIONS: u32 = 1_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("invalid private key")]
    InvalidPrivateKey,
    #[error("invalid public key encoding")]
    InvalidPublicKey,
    #[error("signature component out of range")]
    ScalarOutOfRange,
    #[error("invalid DER signature: {0}")]
    Der(&'static str),
    #[error("seed_r does not map to a curve point; choose a new seed_r")]
    SeedRejected,
    #[error("seed hash reduces to zero; choose new seeds")]
    SeedZero,
    #[error("no NUMS signature found within {0} iterations")]
    NumsExhausted(u32),
    #[error("no recovered public key verifies")]
    NoRecoverableKey,
}

fn order() -> U256 {
    Secp256k1::ORDER
}

fn field_prime() -> U256 {
    U256::from_be_slice(&FIELD_PRIME)
}

/// Reads 32 big-endian bytes as an integer and reduces it mod `n`.
pub fn scalar_reduce(bytes: &[u8; 32]) -> Scalar {
    <Scalar as Reduce<U256>>::reduce_bytes(&FieldBytes::from(*bytes))
}

/// Strict conversion: `None` if the value is zero or not below `n`.
pub fn scalar_from_bytes(bytes: &[u8; 32]) -> Option<Scalar> {
    let s: Option<Scalar> = Scalar::from_repr(FieldBytes::from(*bytes)).into();
    s.filter(|s| !bool::from(s.is_zero()))
}

fn scalar_bytes(s: &Scalar) -> [u8; 32] {
    s.to_bytes().into()
}

/// The message digest as a scalar `e`.
pub fn digest_scalar(digest: &[u8; 32]) -> Scalar {
    scalar_reduce(digest)
}

/// A secret scalar in `[1, n-1]`.
#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey(Scalar);

impl PrivateKey {
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> PrivateKey {
        loop {
            let mut b = [0u8; 32];
            rng.fill_bytes(&mut b);
            if let Some(s) = scalar_from_bytes(&b) {
                return PrivateKey(s);
            }
        }
    }

    pub fn from_bytes(bytes: &[u8; 32]) -> Result<PrivateKey, CryptoError> {
        scalar_from_bytes(bytes).map(PrivateKey).ok_or(CryptoError::InvalidPrivateKey)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        scalar_bytes(&self.0)
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey((ProjectivePoint::GENERATOR * self.0).to_affine())
    }

    pub(crate) fn scalar(&self) -> &Scalar {
        &self.0
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrivateKey(<{}>)", self.public_key())
    }
}

/// A curve point other than the identity, exchanged in compressed form.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(AffinePoint);

impl PublicKey {
    pub fn from_slice(bytes: &[u8]) -> Result<PublicKey, CryptoError> {
        if bytes.len() != 33 || !(bytes[0] == 0x02 || bytes[0] == 0x03) {
            return Err(CryptoError::InvalidPublicKey);
        }
        let ep = EncodedPoint::from_bytes(bytes).map_err(|_| CryptoError::InvalidPublicKey)?;
        let p: Option<AffinePoint> = AffinePoint::from_encoded_point(&ep).into();
        match p {
            Some(p) if !bool::from(p.is_identity()) => Ok(PublicKey(p)),
            _ => Err(CryptoError::InvalidPublicKey),
        }
    }

    pub fn serialize(&self) -> [u8; 33] {
        let ep = self.0.to_encoded_point(true);
        let mut out = [0u8; 33];
        out.copy_from_slice(ep.as_bytes());
        out
    }

    /// First eight bytes of SHA256 of the compressed key, in hex.
    pub fn fingerprint(&self) -> String {
        hex::encode(&sha256(&self.serialize())[..8])
    }

    fn point(&self) -> ProjectivePoint {
        ProjectivePoint::from(self.0)
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.serialize()))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self)
    }
}

impl PartialOrd for PublicKey {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PublicKey {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.serialize().cmp(&other.serialize())
    }
}

impl core::hash::Hash for PublicKey {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        self.serialize().hash(state)
    }
}

impl core::str::FromStr for PublicKey {
    type Err = CryptoError;
    fn from_str(s: &str) -> Result<PublicKey, CryptoError> {
        let b = hex::decode(s).map_err(|_| CryptoError::InvalidPublicKey)?;
        PublicKey::from_slice(&b)
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// An ECDSA signature `(r, s)` with both components in `[1, n-1]`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct EcdsaSignature {
    r: Scalar,
    s: Scalar,
}

impl EcdsaSignature {
    pub fn from_scalars(r: Scalar, s: Scalar) -> Result<EcdsaSignature, CryptoError> {
        if bool::from(r.is_zero()) || bool::from(s.is_zero()) {
            return Err(CryptoError::ScalarOutOfRange);
        }
        Ok(EcdsaSignature { r, s })
    }

    pub fn from_bytes(r: &[u8; 32], s: &[u8; 32]) -> Result<EcdsaSignature, CryptoError> {
        let r = scalar_from_bytes(r).ok_or(CryptoError::ScalarOutOfRange)?;
        let s = scalar_from_bytes(s).ok_or(CryptoError::ScalarOutOfRange)?;
        Ok(EcdsaSignature { r, s })
    }

    /// Small-integer constructor used for NUMS values such as `(1, 1)`.
    pub fn from_u64(r: u64, s: u64) -> Result<EcdsaSignature, CryptoError> {
        EcdsaSignature::from_scalars(Scalar::from(r), Scalar::from(s))
    }

    pub fn r(&self) -> &Scalar {
        &self.r
    }

    pub fn s(&self) -> &Scalar {
        &self.s
    }

    pub fn r_bytes(&self) -> [u8; 32] {
        scalar_bytes(&self.r)
    }

    pub fn s_bytes(&self) -> [u8; 32] {
        scalar_bytes(&self.s)
    }

    /// `s ≤ n/2`.
    pub fn is_low_s(&self) -> bool {
        !bool::from(self.s.is_high())
    }

    /// The same signature with `s` replaced by `n - s`; both verify identically.
    pub fn negate_s(&self) -> EcdsaSignature {
        EcdsaSignature { r: self.r, s: -self.s }
    }

    pub fn normalize_s(&self) -> EcdsaSignature {
        if self.is_low_s() {
            *self
        } else {
            self.negate_s()
        }
    }

    pub fn to_der(&self) -> Vec<u8> {
        der_encode(self)
    }

    /// DER encoding followed by the sighash type byte, as carried in a witness.
    pub fn to_witness_bytes(&self, ty: SigHashType) -> Vec<u8> {
        let mut v = der_encode(self);
        v.push(ty.to_byte());
        v
    }

    pub fn size(&self) -> SignatureSize {
        let der = der_encode(self).len();
        SignatureSize { der, with_type_byte: der + 1 }
    }
}

impl fmt::Debug for EcdsaSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EcdsaSignature({})", hex::encode(der_encode(self)))
    }
}

impl Serialize for EcdsaSignature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(der_encode(self)))
    }
}

impl<'de> Deserialize<'de> for EcdsaSignature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(s).map_err(serde::de::Error::custom)?;
        der_decode(&bytes).map_err(serde::de::Error::custom)
    }
}

/// Encoded size of a signature under both counting conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SignatureSize {
    pub der: usize,
    pub with_type_byte: usize,
}

/// Seeds whose SHA256 images form a signature nobody holds a key for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureSeeds {
    #[serde(with = "crate::hexser::bytes")]
    pub seed_r: Vec<u8>,
    #[serde(with = "crate::hexser::bytes")]
    pub seed_s: Vec<u8>,
}

/// Deterministic ECDSA signature with an RFC 6979 nonce, normalized to low-s.
pub fn sign(key: &PrivateKey, digest: &[u8; 32]) -> EcdsaSignature {
    let n = order().to_be_byte_array();
    let x = key.to_bytes();
    let e = digest_scalar(digest);
    let mut extra = [0u8; 32];
    let mut attempt: u32 = 0;
    loop {
        let data: &[u8] = if attempt == 0 { &[] } else { &extra };
        let k_bytes = rfc6979::generate_k::<Sha256, _>(&FieldBytes::from(x), &n, &FieldBytes::from(*digest), data);
        attempt += 1;
        extra[..4].copy_from_slice(&attempt.to_le_bytes());
        let Some(k) = scalar_from_bytes(&k_bytes.into()) else { continue };
        let big_r = (ProjectivePoint::GENERATOR * k).to_affine();
        let r = scalar_reduce(&big_r.x().into());
        if bool::from(r.is_zero()) {
            continue;
        }
        let k_inv = Option::<Scalar>::from(k.invert()).expect("k is non-zero");
        let s = k_inv * (e + r * key.scalar());
        if bool::from(s.is_zero()) {
            continue;
        }
        return EcdsaSignature { r, s }.normalize_s();
    }
}

/// Standard ECDSA verification. Accepts both `s` and `n - s`.
pub fn verify(key: &PublicKey, digest: &[u8; 32], sig: &EcdsaSignature) -> bool {
    let e = digest_scalar(digest);
    let s_inv = match Option::<Scalar>::from(sig.s.invert()) {
        Some(v) => v,
        None => return false,
    };
    let u1 = e * s_inv;
    let u2 = sig.r * s_inv;
    let point = (ProjectivePoint::GENERATOR * u1 + key.point() * u2).to_affine();
    if bool::from(point.is_identity()) {
        return false;
    }
    scalar_reduce(&point.x().into()) == sig.r
}

/// Verification that additionally requires the low-s form produced by [`sign`].
pub fn verify_low_s(key: &PublicKey, digest: &[u8; 32], sig: &EcdsaSignature) -> bool {
    sig.is_low_s() && verify(key, digest, sig)
}

/// Lifts an x-coordinate to a curve point with the requested y parity.
///
/// `None` when `x ≥ p` or `x³ + 7` is not a square mod `p`.
pub fn lift_x(x: &[u8; 32], y_odd: bool) -> Option<AffinePoint> {
    if U256::from_be_slice(x) >= field_prime() {
        return None;
    }
    Option::from(AffinePoint::decompress(&FieldBytes::from(*x), Choice::from(y_odd as u8)))
}

/// Whether some curve point has this x-coordinate.
pub fn is_liftable(x: &[u8; 32]) -> bool {
    lift_x(x, false).is_some()
}

/// All x-coordinates whose reduction mod `n` equals `r`: `r` itself and, when still
/// below `p`, `r + n`.
fn r_lifts(r: &Scalar) -> Vec<[u8; 32]> {
    let r_int = U256::from_be_slice(&scalar_bytes(r));
    let mut xs = vec![r_int.to_be_byte_array().into()];
    let (sum, carry) = r_int.adc(&order(), k256::elliptic_curve::bigint::Limb::ZERO);
    if carry == k256::elliptic_curve::bigint::Limb::ZERO && sum < field_prime() {
        xs.push(sum.to_be_byte_array().into());
    }
    xs
}

/// Recovers every public key for which `sig` is a valid signature on `digest`.
///
/// Candidates are ordered by lift (`r` before `r + n`) then y parity (even first).
pub fn recover_pubkeys(digest: &[u8; 32], sig: &EcdsaSignature) -> Vec<PublicKey> {
    let e = digest_scalar(digest);
    let r_inv = match Option::<Scalar>::from(sig.r.invert()) {
        Some(v) => v,
        None => return Vec::new(),
    };
    let e_g = ProjectivePoint::GENERATOR * e;
    let mut keys = Vec::new();
    for x in r_lifts(&sig.r) {
        for y_odd in [false, true] {
            let Some(big_r) = lift_x(&x, y_odd) else { continue };
            let candidate = ((ProjectivePoint::from(big_r) * sig.s - e_g) * r_inv).to_affine();
            if bool::from(candidate.is_identity()) {
                continue;
            }
            let key = PublicKey(candidate);
            if verify(&key, digest, sig) && !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    keys
}

/// Nothing-up-my-sleeve commitment signature: start at `(1, 1)`, increase `r` until it
/// is the x-coordinate of a curve point, and return the first recovered key.
pub fn nums_signature(digest: &[u8; 32]) -> Result<(EcdsaSignature, PublicKey), CryptoError> {
    let s = Scalar::ONE;
    let mut r = Scalar::ONE;
    for _ in 0..NUMS_MAX_ITERATIONS {
        if is_liftable(&scalar_bytes(&r)) {
            let sig = EcdsaSignature { r, s };
            let key = recover_pubkeys(digest, &sig).into_iter().next().ok_or(CryptoError::NoRecoverableKey)?;
            return Ok((sig, key));
        }
        r += Scalar::ONE;
    }
    Err(CryptoError::NumsExhausted(NUMS_MAX_ITERATIONS))
}

/// `(r, s) = (SHA256(seed_r) mod n, SHA256(seed_s) mod n)` and its first recovered key.
pub fn seeded_signature(seeds: &SignatureSeeds, digest: &[u8; 32]) -> Result<(EcdsaSignature, PublicKey), CryptoError> {
    let sig = seeded_values(seeds)?;
    let key = recover_pubkeys(digest, &sig).into_iter().next().ok_or(CryptoError::NoRecoverableKey)?;
    Ok((sig, key))
}

/// Recomputes the signature values committed to by `seeds`, as a verifier would.
pub fn seeded_values(seeds: &SignatureSeeds) -> Result<EcdsaSignature, CryptoError> {
    let hr = sha256(&seeds.seed_r);
    let hs = sha256(&seeds.seed_s);
    if !is_liftable(&hr) {
        return Err(CryptoError::SeedRejected);
    }
    let r = scalar_reduce(&hr);
    let s = scalar_reduce(&hs);
    EcdsaSignature::from_scalars(r, s).map_err(|_| CryptoError::SeedZero)
}

fn der_integer(buf: &mut Vec<u8>, value: &[u8; 32]) {
    let first = value.iter().position(|&b| b != 0).unwrap_or(31);
    let body = &value[first..];
    let pad = body[0] & 0x80 != 0;
    buf.push(0x02);
    buf.push((body.len() + pad as usize) as u8);
    if pad {
        buf.push(0x00);
    }
    buf.extend_from_slice(body);
}

/// Strict DER: minimal integer lengths, a leading zero only before a set high bit.
pub fn der_encode(sig: &EcdsaSignature) -> Vec<u8> {
    let mut body = Vec::with_capacity(70);
    der_integer(&mut body, &sig.r_bytes());
    der_integer(&mut body, &sig.s_bytes());
    let mut out = Vec::with_capacity(body.len() + 2);
    out.push(0x30);
    out.push(body.len() as u8);
    out.extend_from_slice(&body);
    out
}

fn der_read_integer(data: &[u8], pos: &mut usize) -> Result<[u8; 32], CryptoError> {
    if data.get(*pos) != Some(&0x02) {
        return Err(CryptoError::Der("expected integer tag"));
    }
    let len = *data.get(*pos + 1).ok_or(CryptoError::Der("truncated"))? as usize;
    let start = *pos + 2;
    let body = data.get(start..start + len).ok_or(CryptoError::Der("truncated"))?;
    if len == 0 {
        return Err(CryptoError::Der("empty integer"));
    }
    if body[0] & 0x80 != 0 {
        return Err(CryptoError::Der("negative integer"));
    }
    if len > 1 && body[0] == 0x00 && body[1] & 0x80 == 0 {
        return Err(CryptoError::Der("non-minimal integer"));
    }
    let trimmed = if body[0] == 0x00 && len > 1 { &body[1..] } else { body };
    if trimmed.len() > 32 {
        return Err(CryptoError::Der("integer too large"));
    }
    let mut out = [0u8; 32];
    out[32 - trimmed.len()..].copy_from_slice(trimmed);
    *pos = start + len;
    Ok(out)
}

pub fn der_decode(data: &[u8]) -> Result<EcdsaSignature, CryptoError> {
    if data.len() < 8 || data.len() > 72 {
        return Err(CryptoError::Der("bad length"));
    }
    if data[0] != 0x30 {
        return Err(CryptoError::Der("expected sequence tag"));
    }
    if data[1] as usize != data.len() - 2 {
        return Err(CryptoError::Der("sequence length mismatch"));
    }
    let mut pos = 2;
    let r = der_read_integer(data, &mut pos)?;
    let s = der_read_integer(data, &mut pos)?;
    if pos != data.len() {
        return Err(CryptoError::Der("trailing bytes"));
    }
    EcdsaSignature::from_bytes(&r, &s)
}

/// Splits witness signature bytes into the DER signature and its sighash type.
pub fn decode_witness_signature(data: &[u8]) -> Result<(EcdsaSignature, SigHashType), CryptoError> {
    let (&ty, der) = data.split_last().ok_or(CryptoError::Der("empty"))?;
    let ty = SigHashType::from_byte(ty).map_err(|_| CryptoError::Der("bad sighash type"))?;
    Ok((der_decode(der)?, ty))
}
