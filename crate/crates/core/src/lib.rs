//! Dynamic-ID remote user authentication with smart cards.
//!
//! The authority issues each user a card holding `N = h(PW) ^ h(x)` and the
//! system secret `y`. To log in, the card sends `(CID, N, C, T)` where
//!
//! ```text
//! CID = h(PW) ^ h(N ^ y ^ T)
//! B   = h(CID ^ h(PW))
//! C   = h(T ^ N ^ B ^ y)
//! ```
//!
//! and the authority accepts if `T` is fresh and `C` recomputes from the
//! message and `y`. No per-user verifier is stored anywhere.
//!
//! Modules:
//! - [`primitives`]: 32-byte digests, XOR, hashing, timestamp/password encoding
//! - [`card`]: login construction, password change, card files
//! - [`authority`]: secrets, registration, verification, replay cache
//! - [`wire`]: binary frames
//! - [`netd`]: TCP daemon, client, clocks
//! - [`adversary`]: attack experiments and reports

#![forbid(unsafe_code)]

pub mod adversary;
pub mod authority;
pub mod card;
pub mod netd;
pub mod primitives;
pub mod storage;
pub mod wire;

pub use authority::{Authority, AuthoritySecrets, FreshnessPolicy, Rejection, Verdict};
pub use card::{CardImage, LoginDerivation, LoginMessage};
pub use netd::{Clock, ScriptedClock, SystemClock};
pub use primitives::{Digest, HashAlgorithm, Password, PrimitiveError, Timestamp};
pub use storage::FileFormatError;
