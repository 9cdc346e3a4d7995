//! The remote system: holds `x` and `y`, issues cards, and verifies logins.
//!
//! Verification is stateless. The authority keeps no per-user record, so an
//! accepted login says only that the message is consistent with `y`; it does
//! not say which user sent it.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::Mutex;

use rand::TryCryptoRng;
use thiserror::Error;

use crate::card::{CardImage, LoginMessage};
use crate::primitives::{Digest, HashAlgorithm, Password, Timestamp, DIGEST_LEN};
use crate::storage::{self, FileFormatError, FILE_LEN};

pub const SECRETS_MAGIC: [u8; 4] = *b"DIDS";

/// Environment variable naming the secrets file.
pub const SECRETS_ENV: &str = "DYNID_SECRETS";

#[derive(Debug, Error)]
pub enum AuthorityError {
    #[error("random source failed: {0}")]
    Randomness(String),
    #[error("invalid freshness policy: {0}")]
    InvalidPolicy(&'static str),
    #[error(transparent)]
    File(#[from] FileFormatError),
}

#[derive(Clone, PartialEq, Eq)]
pub struct AuthoritySecrets {
    pub alg: HashAlgorithm,
    x: [u8; DIGEST_LEN],
    pub y: Digest,
}

impl fmt::Debug for AuthoritySecrets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuthoritySecrets")
            .field("alg", &self.alg)
            .field("x", &"<redacted>")
            .field("y", &"<redacted>")
            .finish()
    }
}

impl AuthoritySecrets {
    pub fn from_parts(alg: HashAlgorithm, x: [u8; DIGEST_LEN], y: Digest) -> Self {
        AuthoritySecrets { alg, x, y }
    }

    /// Draws fresh `x` and `y` from `rng`.
    pub fn generate<R: TryCryptoRng + ?Sized>(alg: HashAlgorithm, rng: &mut R) -> Result<Self, AuthorityError> {
        let mut x = [0u8; DIGEST_LEN];
        let mut y = [0u8; DIGEST_LEN];
        rng.try_fill_bytes(&mut x)
            .and_then(|_| rng.try_fill_bytes(&mut y))
            .map_err(|e| AuthorityError::Randomness(e.to_string()))?;
        Ok(AuthoritySecrets { alg, x, y: Digest::from_bytes(y) })
    }

    /// [`generate`](Self::generate) from the operating system's CSPRNG.
    pub fn generate_os(alg: HashAlgorithm) -> Result<Self, AuthorityError> {
        Self::generate(alg, &mut rand::rngs::OsRng)
    }

    pub fn x(&self) -> &[u8; DIGEST_LEN] {
        &self.x
    }

    /// `h(x)`
    pub fn hx(&self) -> Digest {
        self.alg.hash(&self.x)
    }

    /// Issues a card with `N = h(PW) ^ h(x)`. Nothing about the user is retained.
    pub fn register(&self, pw: &Password) -> CardImage {
        CardImage::new(self.alg, self.alg.hash(pw.as_bytes()) ^ self.hx(), self.y)
    }

    pub fn to_bytes(&self) -> [u8; FILE_LEN] {
        storage::encode(&SECRETS_MAGIC, self.alg, &self.x, self.y.as_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FileFormatError> {
        let (alg, x, y) = storage::decode(&SECRETS_MAGIC, bytes)?;
        Ok(AuthoritySecrets { alg, x, y })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FileFormatError> {
        Ok(storage::write_atomic(path.as_ref(), &self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FileFormatError> {
        Self::from_bytes(&storage::read_file(path.as_ref())?)
    }
}

/// Timestamp acceptance rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreshnessPolicy {
    /// Reject when `now - T >= delta_t`.
    pub delta_t: u64,
    /// Reject when `T > now + max_future_skew`.
    pub max_future_skew: u64,
    /// Extension: remember accepted `(C, T)` pairs for `delta_t` and reject repeats.
    pub replay_cache_enabled: bool,
}

impl Default for FreshnessPolicy {
    fn default() -> Self {
        FreshnessPolicy { delta_t: 60, max_future_skew: 5, replay_cache_enabled: false }
    }
}

impl FreshnessPolicy {
    pub fn new(delta_t: u64, max_future_skew: u64, replay_cache_enabled: bool) -> Result<Self, AuthorityError> {
        if delta_t < 1 {
            return Err(AuthorityError::InvalidPolicy("delta_t must be at least 1 second"));
        }
        Ok(FreshnessPolicy { delta_t, max_future_skew, replay_cache_enabled })
    }

    pub fn with_replay_cache(self, enabled: bool) -> Self {
        FreshnessPolicy { replay_cache_enabled: enabled, ..self }
    }

    pub fn check(&self, t: Timestamp, now: Timestamp) -> Result<(), Rejection> {
        if t > now.saturating_add(self.max_future_skew) {
            return Err(Rejection::FutureDated);
        }
        match now.seconds_since(t) {
            Some(age) if age >= self.delta_t => Err(Rejection::Expired),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rejection {
    Expired,
    FutureDated,
    BadAuthenticator,
    Replayed,
}

impl Rejection {
    pub const fn as_str(self) -> &'static str {
        match self {
            Rejection::Expired => "expired",
            Rejection::FutureDated => "future-dated",
            Rejection::BadAuthenticator => "bad-authenticator",
            Rejection::Replayed => "replayed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Accept,
    Reject(Rejection),
}

impl Verdict {
    pub const fn is_accept(self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accept => f.write_str("ACCEPT"),
            Verdict::Reject(r) => write!(f, "REJECT {}", r.as_str()),
        }
    }
}

/// Steps 2 and 3 of verification: recover `h(PW)` from the dynamic ID,
/// recompute `B`, and check `C`.
pub fn authenticate(secrets: &AuthoritySecrets, msg: &LoginMessage) -> bool {
    let alg = secrets.alg;
    let te = msg.t.encode();
    let hpw = msg.cid ^ alg.hash((msg.n ^ secrets.y ^ te).as_bytes());
    let b = alg.hash((msg.cid ^ hpw).as_bytes());
    msg.c == alg.hash((te ^ msg.n ^ b ^ secrets.y).as_bytes())
}

/// Stateless verification. Ignores `policy.replay_cache_enabled`; use
/// [`Authority`] for cached verification.
pub fn verify(secrets: &AuthoritySecrets, policy: &FreshnessPolicy, msg: &LoginMessage, now: Timestamp) -> Verdict {
    if let Err(r) = policy.check(msg.t, now) {
        return Verdict::Reject(r);
    }
    if authenticate(secrets, msg) {
        Verdict::Accept
    } else {
        Verdict::Reject(Rejection::BadAuthenticator)
    }
}

/// Set of accepted `(C, T)` pairs, pruned once `T` leaves the freshness window.
///
/// All operations serialize on one lock, so concurrent claims of the same
/// pair are totally ordered and exactly one wins.
#[derive(Debug, Default)]
pub struct ReplayCache {
    seen: Mutex<BTreeSet<(Timestamp, Digest)>>,
}

impl ReplayCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn prune(seen: &mut BTreeSet<(Timestamp, Digest)>, now: Timestamp, delta_t: u64) {
        // Entries with now - T >= delta_t can never be presented again without
        // failing the freshness check.
        let Some(cutoff) = now.secs().checked_sub(delta_t) else { return };
        let keep = seen.split_off(&(Timestamp::from_secs(cutoff + 1), Digest::ZERO));
        *seen = keep;
    }

    pub fn contains(&self, c: &Digest, t: Timestamp) -> bool {
        self.seen.lock().unwrap_or_else(|p| p.into_inner()).contains(&(t, *c))
    }

    /// Records the pair; returns false if it was already present.
    pub fn claim(&self, c: &Digest, t: Timestamp, now: Timestamp, delta_t: u64) -> bool {
        let mut seen = self.seen.lock().unwrap_or_else(|p| p.into_inner());
        Self::prune(&mut seen, now, delta_t);
        seen.insert((t, *c))
    }

    pub fn len(&self) -> usize {
        self.seen.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Secrets, policy, and the replay cache when the policy enables it.
#[derive(Debug)]
pub struct Authority {
    secrets: AuthoritySecrets,
    policy: FreshnessPolicy,
    cache: Option<ReplayCache>,
}

impl Authority {
    pub fn new(secrets: AuthoritySecrets, policy: FreshnessPolicy) -> Self {
        let cache = policy.replay_cache_enabled.then(ReplayCache::new);
        Authority { secrets, policy, cache }
    }

    pub fn secrets(&self) -> &AuthoritySecrets {
        &self.secrets
    }

    pub fn policy(&self) -> &FreshnessPolicy {
        &self.policy
    }

    pub fn register(&self, pw: &Password) -> CardImage {
        self.secrets.register(pw)
    }

    pub fn verify(&self, msg: &LoginMessage, now: Timestamp) -> Verdict {
        if let Err(r) = self.policy.check(msg.t, now) {
            return Verdict::Reject(r);
        }
        let Some(cache) = &self.cache else {
            return verify(&self.secrets, &self.policy, msg, now);
        };
        if cache.contains(&msg.c, msg.t) {
            return Verdict::Reject(Rejection::Replayed);
        }
        if !authenticate(&self.secrets, msg) {
            return Verdict::Reject(Rejection::BadAuthenticator);
        }
        // Only authenticated pairs enter the cache; the claim is the
        // linearization point between racing copies.
        if cache.claim(&msg.c, msg.t, now, self.policy.delta_t) {
            Verdict::Accept
        } else {
            Verdict::Reject(Rejection::Replayed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn secrets() -> AuthoritySecrets {
        AuthoritySecrets::generate(HashAlgorithm::Sha256, &mut ChaCha20Rng::seed_from_u64(7)).unwrap()
    }

    fn pw(s: &str) -> Password {
        Password::new(s).unwrap()
    }

    #[test]
    fn generated_secrets_differ() {
        let a = AuthoritySecrets::generate_os(HashAlgorithm::Sha256).unwrap();
        let b = AuthoritySecrets::generate_os(HashAlgorithm::Sha256).unwrap();
        assert_ne!(a.x(), b.x());
        assert_ne!(a.y, b.y);
    }

    #[test]
    fn secrets_file_round_trip_and_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("secrets");
        let s = secrets();
        s.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 70);
        assert_eq!(AuthoritySecrets::load(&path).unwrap(), s);

        let mut bytes = s.to_bytes();
        bytes[0] = b'Z';
        assert!(matches!(AuthoritySecrets::from_bytes(&bytes), Err(FileFormatError::BadMagic { .. })));
        // card files are rejected as secrets files
        assert!(matches!(
            AuthoritySecrets::from_bytes(&s.register(&pw("a")).to_bytes()),
            Err(FileFormatError::BadMagic { .. })
        ));
    }

    #[test]
    fn debug_hides_secrets() {
        let s = secrets();
        let dbg = format!("{s:?}");
        assert!(!dbg.contains(&hex::encode(s.x())));
        assert!(!dbg.contains(&s.y.to_hex()));
    }

    #[test]
    fn same_password_same_nonce() {
        let s = secrets();
        assert_eq!(s.register(&pw("alice")).n, s.register(&pw("alice")).n);
        assert_ne!(s.register(&pw("alice")).n, s.register(&pw("bob")).n);
    }

    #[test]
    fn policy_validation() {
        assert!(FreshnessPolicy::new(0, 5, false).is_err());
        assert!(FreshnessPolicy::new(1, 0, false).is_ok());
        let p = FreshnessPolicy::default();
        assert_eq!((p.delta_t, p.max_future_skew, p.replay_cache_enabled), (60, 5, false));
    }

    #[test]
    fn freshness_edges() {
        let p = FreshnessPolicy::default();
        let now = Timestamp::from_secs(10_000);
        assert_eq!(p.check(Timestamp::from_secs(10_000 - 59), now), Ok(()));
        assert_eq!(p.check(Timestamp::from_secs(10_000 - 60), now), Err(Rejection::Expired));
        assert_eq!(p.check(Timestamp::from_secs(10_005), now), Ok(()));
        assert_eq!(p.check(Timestamp::from_secs(10_006), now), Err(Rejection::FutureDated));
        // no overflow at the top of the range
        assert_eq!(p.check(Timestamp::from_secs(u64::MAX), Timestamp::from_secs(u64::MAX)), Ok(()));
        assert_eq!(p.check(Timestamp::from_secs(0), Timestamp::from_secs(u64::MAX)), Err(Rejection::Expired));
    }

    #[test]
    fn honest_login_accepts_and_bit_flip_rejects() {
        let s = secrets();
        let p = FreshnessPolicy::default();
        let card = s.register(&pw("alice"));
        let t = Timestamp::from_secs(1_700_000_000);
        let msg = card.build_login(&pw("alice"), t);
        assert_eq!(verify(&s, &p, &msg, t), Verdict::Accept);
        assert_eq!(verify(&s, &p, &msg, t.saturating_add(60)), Verdict::Reject(Rejection::Expired));

        let mut bad = msg;
        let mut c = *bad.c.as_bytes();
        c[0] ^= 1;
        bad.c = Digest::from_bytes(c);
        assert_eq!(verify(&s, &p, &bad, t), Verdict::Reject(Rejection::BadAuthenticator));
    }

    #[test]
    fn replaced_cid_still_accepts() {
        let s = secrets();
        let card = s.register(&pw("alice"));
        let t = Timestamp::from_secs(5_000);
        let mut msg = card.build_login(&pw("alice"), t);
        msg.cid = Digest::from_bytes([0xA7; 32]);
        assert_eq!(verify(&s, &FreshnessPolicy::default(), &msg, t), Verdict::Accept);
    }

    #[test]
    fn cache_rejects_second_copy_only() {
        let s = secrets();
        let auth = Authority::new(s.clone(), FreshnessPolicy::default().with_replay_cache(true));
        let card = s.register(&pw("alice"));
        let t = Timestamp::from_secs(5_000);
        let msg = card.build_login(&pw("alice"), t);
        assert_eq!(auth.verify(&msg, t), Verdict::Accept);
        assert_eq!(auth.verify(&msg, t.saturating_add(1)), Verdict::Reject(Rejection::Replayed));
        // expiry wins once the window has passed
        assert_eq!(auth.verify(&msg, t.saturating_add(60)), Verdict::Reject(Rejection::Expired));
        // a forged message does not populate the cache
        let mut forged = card.build_login(&pw("alice"), t.saturating_add(2));
        forged.c = Digest::ZERO;
        assert_eq!(auth.verify(&forged, t.saturating_add(2)), Verdict::Reject(Rejection::BadAuthenticator));
        assert_eq!(auth.verify(&forged, t.saturating_add(2)), Verdict::Reject(Rejection::BadAuthenticator));
    }

    #[test]
    fn cache_without_flag_is_stateless() {
        let s = secrets();
        let auth = Authority::new(s.clone(), FreshnessPolicy::default());
        let msg = s.register(&pw("alice")).build_login(&pw("alice"), Timestamp::from_secs(9));
        assert_eq!(auth.verify(&msg, Timestamp::from_secs(9)), Verdict::Accept);
        assert_eq!(auth.verify(&msg, Timestamp::from_secs(10)), Verdict::Accept);
    }

    #[test]
    fn cache_prunes_expired_entries() {
        let cache = ReplayCache::new();
        let c = Digest::from_bytes([1; 32]);
        assert!(cache.claim(&c, Timestamp::from_secs(100), Timestamp::from_secs(100), 60));
        assert!(!cache.claim(&c, Timestamp::from_secs(100), Timestamp::from_secs(159), 60));
        assert!(cache.claim(&Digest::ZERO, Timestamp::from_secs(160), Timestamp::from_secs(160), 60));
        assert_eq!(cache.len(), 1);
        assert!(!cache.contains(&c, Timestamp::from_secs(100)));
    }

    #[test]
    fn concurrent_claims_have_one_winner() {
        let s = secrets();
        let auth = Authority::new(s.clone(), FreshnessPolicy::default().with_replay_cache(true));
        let t = Timestamp::from_secs(77);
        let msg = s.register(&pw("alice")).build_login(&pw("alice"), t);
        let verdicts: Vec<Verdict> = std::thread::scope(|sc| {
            let handles: Vec<_> = (0..16).map(|_| sc.spawn(|| auth.verify(&msg, t))).collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(verdicts.iter().filter(|v| v.is_accept()).count(), 1);
        assert_eq!(verdicts.iter().filter(|v| **v == Verdict::Reject(Rejection::Replayed)).count(), 15);
    }
}
