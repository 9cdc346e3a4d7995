//! The smart-card side of the scheme.
//!
//! A card holds the hash algorithm, its nonce `N = h(PW) ^ h(x)` and the
//! system secret `y`. It builds login messages from a keyed password and the
//! terminal's clock, and rewrites its nonce on password change. The card has
//! no way to check the password it is given: a wrong old password during
//! [`CardImage::change_password`] silently desynchronizes `N` from `h(x)`.

use std::path::Path;

use crate::primitives::{Digest, HashAlgorithm, Password, Timestamp};
use crate::storage::{self, FileFormatError, FILE_LEN};

pub const CARD_MAGIC: [u8; 4] = *b"DIDC";

/// Length of the card body carried in a registration response: `alg || N || y`.
pub const CARD_BODY_LEN: usize = 1 + 32 + 32;

/// Persisted card state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CardImage {
    pub alg: HashAlgorithm,
    /// `N_i`
    pub n: Digest,
    /// `y`, shared by every card the authority issues.
    pub y: Digest,
}

/// The login quadruple sent over the open channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LoginMessage {
    pub cid: Digest,
    pub n: Digest,
    pub c: Digest,
    pub t: Timestamp,
}

/// Intermediate values of one login computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoginDerivation {
    pub hpw: Digest,
    pub cid: Digest,
    pub b: Digest,
    pub c: Digest,
}

impl CardImage {
    pub const VERSION: u8 = storage::FILE_VERSION;

    pub fn new(alg: HashAlgorithm, n: Digest, y: Digest) -> Self {
        CardImage { alg, n, y }
    }

    /// `h(N ^ y ^ T)`, the time-varying mask hiding `h(PW)` inside the dynamic ID.
    pub fn login_mask(&self, t: Timestamp) -> Digest {
        self.alg.hash((self.n ^ self.y ^ t.encode()).as_bytes())
    }

    pub fn derive_login(&self, pw: &Password, t: Timestamp) -> LoginDerivation {
        let hpw = self.alg.hash(pw.as_bytes());
        let cid = hpw ^ self.login_mask(t);
        let b = self.alg.hash((cid ^ hpw).as_bytes());
        let c = self.alg.hash((t.encode() ^ self.n ^ b ^ self.y).as_bytes());
        LoginDerivation { hpw, cid, b, c }
    }

    pub fn build_login(&self, pw: &Password, t: Timestamp) -> LoginMessage {
        let d = self.derive_login(pw, t);
        LoginMessage { cid: d.cid, n: self.n, c: d.c, t }
    }

    /// `N* = N ^ h(old) ^ h(new)`; `y` and the algorithm are untouched.
    pub fn change_password(&self, old: &Password, new: &Password) -> CardImage {
        let n = self.n ^ self.alg.hash(old.as_bytes()) ^ self.alg.hash(new.as_bytes());
        CardImage { n, ..*self }
    }

    pub fn to_bytes(&self) -> [u8; FILE_LEN] {
        storage::encode(&CARD_MAGIC, self.alg, self.n.as_bytes(), self.y.as_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FileFormatError> {
        let (alg, n, y) = storage::decode(&CARD_MAGIC, bytes)?;
        Ok(CardImage { alg, n: Digest::from_bytes(n), y })
    }

    /// `alg || N || y`
    pub fn body(&self) -> [u8; CARD_BODY_LEN] {
        let mut out = [0u8; CARD_BODY_LEN];
        out[0] = self.alg.id();
        out[1..33].copy_from_slice(self.n.as_bytes());
        out[33..].copy_from_slice(self.y.as_bytes());
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FileFormatError> {
        Ok(storage::write_atomic(path.as_ref(), &self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FileFormatError> {
        Self::from_bytes(&storage::read_file(path.as_ref())?)
    }
}

pub fn save_card(card: &CardImage, path: impl AsRef<Path>) -> Result<(), FileFormatError> {
    card.save(path)
}

pub fn load_card(path: impl AsRef<Path>) -> Result<CardImage, FileFormatError> {
    CardImage::load(path)
}
