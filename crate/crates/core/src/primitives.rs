//! Fixed-width digest arithmetic.
//!
//! Every value the protocol combines (hash outputs, the card nonce, the
//! dynamic ID, the system secret `y`, encoded timestamps) lives in a 32-byte
//! [`Digest`], and all combination is bytewise XOR over that width.

use std::fmt;
use std::ops::{BitXor, BitXorAssign};

use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Width in bytes of every block the protocol hashes or XORs.
pub const DIGEST_LEN: usize = 32;

/// Longest accepted password, in UTF-8 bytes.
pub const MAX_PASSWORD_LEN: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PrimitiveError {
    #[error("unknown hash algorithm id 0x{0:02x}")]
    UnknownAlgorithm(u8),
    #[error("password is empty")]
    EmptyPassword,
    #[error("password is {0} bytes, longer than the {MAX_PASSWORD_LEN}-byte limit")]
    PasswordTooLong(usize),
    #[error("expected {DIGEST_LEN} bytes, got {0}")]
    BadDigestLength(usize),
}

/// A 32-byte block.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest([u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);

    pub const fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, PrimitiveError> {
        let arr: [u8; DIGEST_LEN] = bytes
            .try_into()
            .map_err(|_| PrimitiveError::BadDigestLength(bytes.len()))?;
        Ok(Digest(arr))
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest(out))
    }

    pub const fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Bytewise exclusive-or.
    pub fn xor(&self, other: &Digest) -> Digest {
        let mut out = self.0;
        out.iter_mut().zip(other.0.iter()).for_each(|(a, b)| *a ^= b);
        Digest(out)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl From<[u8; DIGEST_LEN]> for Digest {
    fn from(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest(bytes)
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl BitXor for Digest {
    type Output = Digest;

    fn bitxor(self, rhs: Digest) -> Digest {
        self.xor(&rhs)
    }
}

impl BitXorAssign for Digest {
    fn bitxor_assign(&mut self, rhs: Digest) {
        *self = self.xor(&rhs);
    }
}

/// Free-function form of [`Digest::xor`].
pub fn xor(a: &Digest, b: &Digest) -> Digest {
    a.xor(b)
}

/// Seconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const fn from_secs(secs: u64) -> Self {
        Timestamp(secs)
    }

    pub const fn secs(self) -> u64 {
        self.0
    }

    pub fn saturating_add(self, secs: u64) -> Self {
        Timestamp(self.0.saturating_add(secs))
    }

    pub fn saturating_sub(self, secs: u64) -> Self {
        Timestamp(self.0.saturating_sub(secs))
    }

    /// `self - earlier` in seconds, or `None` when `earlier` is later.
    pub fn seconds_since(self, earlier: Timestamp) -> Option<u64> {
        self.0.checked_sub(earlier.0)
    }

    /// Signed difference `self - other`, saturating at the `i128` range of a `u64` pair.
    pub fn signed_diff(self, other: Timestamp) -> i128 {
        i128::from(self.0) - i128::from(other.0)
    }

    /// Digest-width block: 24 zero bytes, then the seconds as big-endian u64.
    pub fn encode(self) -> Digest {
        encode_timestamp(self)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn encode_timestamp(t: Timestamp) -> Digest {
    let mut out = [0u8; DIGEST_LEN];
    out[DIGEST_LEN - 8..].copy_from_slice(&t.0.to_be_bytes());
    Digest(out)
}

/// Registered hash functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum HashAlgorithm {
    /// SHA-256; the production choice.
    Sha256 = 0x01,
    /// Test-only hash with 8 bits of entropy: every output byte is the first
    /// byte of the SHA-256 digest. Makes collision-dependent attack rates
    /// measurable.
    Toy8 = 0xFF,
}

impl HashAlgorithm {
    pub const fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self, PrimitiveError> {
        match id {
            0x01 => Ok(HashAlgorithm::Sha256),
            0xFF => Ok(HashAlgorithm::Toy8),
            other => Err(PrimitiveError::UnknownAlgorithm(other)),
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            HashAlgorithm::Sha256 => "sha256",
            HashAlgorithm::Toy8 => "toy8",
        }
    }

    pub fn hash(self, message: &[u8]) -> Digest {
        debug_assert!(message.len() as u64 <= u64::from(u32::MAX));
        let full: [u8; DIGEST_LEN] = Sha256::digest(message).into();
        match self {
            HashAlgorithm::Sha256 => Digest(full),
            HashAlgorithm::Toy8 => Digest([full[0]; DIGEST_LEN]),
        }
    }
}

impl TryFrom<u8> for HashAlgorithm {
    type Error = PrimitiveError;

    fn try_from(id: u8) -> Result<Self, Self::Error> {
        HashAlgorithm::from_id(id)
    }
}

impl fmt::Display for HashAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn hash(message: &[u8], alg: HashAlgorithm) -> Digest {
    alg.hash(message)
}

/// A validated password: 1 to 1024 bytes of UTF-8, hashed as-is with no
/// normalization or terminator.
#[derive(Clone, PartialEq, Eq)]
pub struct Password(String);

impl Password {
    pub fn new(pw: impl Into<String>) -> Result<Self, PrimitiveError> {
        let pw = pw.into();
        encode_password(&pw)?;
        Ok(Password(pw))
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Password {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Password(<redacted>)")
    }
}

pub fn encode_password(pw: &str) -> Result<&[u8], PrimitiveError> {
    let bytes = pw.as_bytes();
    match bytes.len() {
        0 => Err(PrimitiveError::EmptyPassword),
        n if n > MAX_PASSWORD_LEN => Err(PrimitiveError::PasswordTooLong(n)),
        _ => Ok(bytes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn digest() -> impl Strategy<Value = Digest> {
        any::<[u8; 32]>().prop_map(Digest::from_bytes)
    }

    #[test]
    fn sha256_empty_vector() {
        assert_eq!(
            hash(b"", HashAlgorithm::Sha256).to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn toy8_repeats_first_sha256_byte() {
        assert_eq!(hash(b"", HashAlgorithm::Toy8), Digest::from_bytes([0xe3; 32]));
    }

    #[test]
    fn algorithm_ids() {
        assert_eq!(HashAlgorithm::from_id(0x01), Ok(HashAlgorithm::Sha256));
        assert_eq!(HashAlgorithm::from_id(0xFF), Ok(HashAlgorithm::Toy8));
        assert_eq!(
            HashAlgorithm::from_id(0x02),
            Err(PrimitiveError::UnknownAlgorithm(0x02))
        );
        assert_eq!(HashAlgorithm::Toy8.id(), 0xFF);
    }

    #[test]
    fn timestamp_encoding() {
        assert_eq!(encode_timestamp(Timestamp::from_secs(0)), Digest::ZERO);

        let one = encode_timestamp(Timestamp::from_secs(1));
        assert!(one.as_bytes()[..31].iter().all(|&b| b == 0));
        assert_eq!(one.as_bytes()[31], 0x01);

        let b = encode_timestamp(Timestamp::from_secs(256));
        assert!(b.as_bytes()[..30].iter().all(|&b| b == 0));
        assert_eq!(&b.as_bytes()[30..], &[0x01, 0x00]);
    }

    #[test]
    fn password_encoding() {
        assert_eq!(encode_password("alice").unwrap(), &[0x61, 0x6c, 0x69, 0x63, 0x65]);
        assert_eq!(encode_password(""), Err(PrimitiveError::EmptyPassword));
        let long = "a".repeat(1025);
        assert_eq!(encode_password(&long), Err(PrimitiveError::PasswordTooLong(1025)));
        assert!(encode_password(&"a".repeat(1024)).is_ok());
        // multi-byte characters count in bytes, not chars
        assert_eq!(
            encode_password(&"é".repeat(513)),
            Err(PrimitiveError::PasswordTooLong(1026))
        );
        assert!(Password::new("").is_err());
    }

    #[test]
    fn password_debug_is_redacted() {
        let pw = Password::new("hunter2").unwrap();
        assert!(!format!("{pw:?}").contains("hunter2"));
    }

    #[test]
    fn digest_from_slice_length() {
        assert_eq!(
            Digest::from_slice(&[0u8; 31]),
            Err(PrimitiveError::BadDigestLength(31))
        );
    }

    proptest! {
        #[test]
        fn xor_laws(a in digest(), b in digest(), c in digest()) {
            prop_assert_eq!(xor(&a, &b), xor(&b, &a));
            prop_assert_eq!(xor(&xor(&a, &b), &c), xor(&a, &xor(&b, &c)));
            prop_assert_eq!(xor(&a, &a), Digest::ZERO);
            prop_assert_eq!(xor(&a, &Digest::ZERO), a);
            prop_assert_eq!(xor(&xor(&a, &b), &b), a);
            prop_assert_eq!(a ^ b, xor(&a, &b));
        }

        #[test]
        fn hash_is_deterministic(msg in proptest::collection::vec(any::<u8>(), 0..256)) {
            for alg in [HashAlgorithm::Sha256, HashAlgorithm::Toy8] {
                let h = hash(&msg, alg);
                prop_assert_eq!(h, hash(&msg, alg));
                prop_assert_eq!(h.as_bytes().len(), DIGEST_LEN);
            }
            let toy = hash(&msg, HashAlgorithm::Toy8);
            prop_assert!(toy.as_bytes().iter().all(|&b| b == hash(&msg, HashAlgorithm::Sha256).as_bytes()[0]));
        }

        #[test]
        fn timestamp_encoding_is_injective(a in any::<u64>(), b in any::<u64>()) {
            let (ea, eb) = (encode_timestamp(Timestamp::from_secs(a)), encode_timestamp(Timestamp::from_secs(b)));
            prop_assert_eq!(a == b, ea == eb);
        }
    }
}
