//! Attack experiments against an in-process or remote authority.
//!
//! Each experiment runs one or more cases, counts how many submitted
//! messages were accepted, and compares the count with the expected
//! outcome. Observations are reported as measured, including the ones that
//! go beyond what the scheme's security argument covers: replays inside the
//! freshness window, and logins with the wrong password on a valid card.
//!
//! All randomness comes from a seeded ChaCha20 stream, so a report can be
//! reproduced from its seed.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::net::ToSocketAddrs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::distr::{Alphanumeric, SampleString};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::authority::{Authority, AuthoritySecrets, FreshnessPolicy, Rejection, Verdict};
use crate::card::{CardImage, LoginMessage};
use crate::netd::{Client, ClientError, Clock, ScriptedClock, ServeError, Server, ServerConfig, SystemClock};
use crate::primitives::{Digest, HashAlgorithm, Password, Timestamp, DIGEST_LEN};
use crate::storage::FileFormatError;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error(transparent)]
    File(#[from] FileFormatError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("cannot merge reports {0:?} and {1:?}")]
    Merge(String, String),
}

/// Predicted outcome of a case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Expectation {
    AllAccepted,
    AllRejected,
    /// Acceptance rate within three binomial standard deviations of `p`.
    Rate { p: f64 },
    /// Every trial fails before producing a message.
    AllErrors,
}

impl Expectation {
    pub fn holds(&self, trials: u64, acceptances: u64, errors: u64) -> bool {
        match *self {
            Expectation::AllAccepted => errors == 0 && acceptances == trials,
            Expectation::AllRejected => errors == 0 && acceptances == 0,
            Expectation::AllErrors => errors == trials,
            Expectation::Rate { p } => {
                if trials == 0 || errors != 0 {
                    return false;
                }
                let (n, observed) = (trials as f64, acceptances as f64 / trials as f64);
                let sigma = (p * (1.0 - p) / n).sqrt();
                (observed - p).abs() <= 3.0 * sigma
            }
        }
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::AllAccepted => f.write_str("every trial accepted"),
            Expectation::AllRejected => f.write_str("no trial accepted"),
            Expectation::AllErrors => f.write_str("every trial refused before submission"),
            Expectation::Rate { p } => write!(f, "acceptance rate within 3 sigma of {p:.6}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub trials: u64,
    pub acceptances: u64,
    pub errors: u64,
    pub expectation: Expectation,
    pub conforms: bool,
    /// Verdict label to count.
    pub outcomes: BTreeMap<String, u64>,
}

impl CaseReport {
    pub fn new(name: impl Into<String>, expectation: Expectation) -> Self {
        CaseReport {
            name: name.into(),
            trials: 0,
            acceptances: 0,
            errors: 0,
            expectation,
            conforms: expectation.holds(0, 0, 0),
            outcomes: BTreeMap::new(),
        }
    }

    fn bump(&mut self, label: &str) {
        *self.outcomes.entry(label.to_owned()).or_default() += 1;
    }

    pub fn record(&mut self, verdict: Verdict) {
        self.trials += 1;
        if verdict.is_accept() {
            self.acceptances += 1;
        }
        self.bump(verdict_label(verdict));
        self.refresh();
    }

    pub fn record_error(&mut self, label: &str) {
        self.trials += 1;
        self.errors += 1;
        self.bump(label);
        self.refresh();
    }

    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.acceptances as f64 / self.trials as f64
        }
    }

    fn refresh(&mut self) {
        self.conforms = self.expectation.holds(self.trials, self.acceptances, self.errors);
    }

    fn absorb(&mut self, other: &CaseReport) {
        self.trials += other.trials;
        self.acceptances += other.acceptances;
        self.errors += other.errors;
        for (k, v) in &other.outcomes {
            *self.outcomes.entry(k.clone()).or_default() += v;
        }
        self.refresh();
    }
}

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Accept => "accept",
        Verdict::Reject(r) => r.as_str(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub name: String,
    pub seed: u64,
    pub trials: u64,
    pub acceptances: u64,
    pub rate: f64,
    pub expectation: String,
    pub conforms: bool,
    pub cases: Vec<CaseReport>,
    pub notes: Vec<String>,
}

impl AttackReport {
    pub fn new(name: impl Into<String>, seed: u64, expectation: impl Into<String>) -> Self {
        let mut r = AttackReport {
            name: name.into(),
            seed,
            trials: 0,
            acceptances: 0,
            rate: 0.0,
            expectation: expectation.into(),
            conforms: true,
            cases: Vec::new(),
            notes: Vec::new(),
        };
        r.refresh();
        r
    }

    pub fn push_case(&mut self, case: CaseReport) {
        match self.cases.iter_mut().find(|c| c.name == case.name) {
            Some(existing) => existing.absorb(&case),
            None => self.cases.push(case),
        }
        self.refresh();
    }

    pub fn note(&mut self, note: impl Into<String>) {
        let note = note.into();
        if !self.notes.contains(&note) {
            self.notes.push(note);
        }
    }

    pub fn case(&self, name: &str) -> Option<&CaseReport> {
        self.cases.iter().find(|c| c.name == name)
    }

    fn refresh(&mut self) {
        self.cases.sort_by(|a, b| a.name.cmp(&b.name));
        self.trials = self.cases.iter().map(|c| c.trials).sum();
        self.acceptances = self.cases.iter().map(|c| c.acceptances).sum();
        self.rate = if self.trials == 0 { 0.0 } else { self.acceptances as f64 / self.trials as f64 };
        self.conforms = self.cases.iter().all(|c| c.conforms);
    }

    /// Combines two runs of the same experiment, summing counts case by case.
    pub fn merge(mut self, other: AttackReport) -> Result<AttackReport, AttackError> {
        if self.name != other.name || self.seed != other.seed {
            return Err(AttackError::Merge(self.name, other.name));
        }
        for case in other.cases {
            self.push_case(case);
        }
        for note in other.notes {
            self.note(note);
        }
        self.notes.sort();
        self.refresh();
        Ok(self)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let status = if self.conforms { "CONFORMS" } else { "DOES NOT CONFORM" };
        let _ = writeln!(out, "attack {} (seed {}): {status}", self.name, self.seed);
        let _ = writeln!(out, "  expectation: {}", self.expectation);
        for c in &self.cases {
            let _ = writeln!(
                out,
                "  [{}] {:<30} {}/{} accepted (rate {:.6}), errors {}; expected {}",
                if c.conforms { "ok" } else { "!!" },
                c.name,
                c.acceptances,
                c.trials,
                c.rate(),
                c.errors,
                c.expectation
            );
            let outcomes: Vec<String> = c.outcomes.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(out, "       outcomes: {}", outcomes.join(" "));
        }
        for n in &self.notes {
            let _ = writeln!(out, "  note: {n}");
        }
        out
    }
}

impl fmt::Display for AttackReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Something that judges login messages.
pub trait Target {
    fn now(&self) -> Timestamp;
    fn submit(&mut self, msg: &LoginMessage) -> Result<Verdict, AttackError>;
}

pub struct InProcessTarget {
    authority: Authority,
    clock: ScriptedClock,
}

impl InProcessTarget {
    pub fn new(secrets: AuthoritySecrets, policy: FreshnessPolicy, clock: ScriptedClock) -> Self {
        InProcessTarget { authority: Authority::new(secrets, policy), clock }
    }

    pub fn clock(&self) -> &ScriptedClock {
        &self.clock
    }
}

impl Target for InProcessTarget {
    fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn submit(&mut self, msg: &LoginMessage) -> Result<Verdict, AttackError> {
        Ok(self.authority.verify(msg, self.clock.now()))
    }
}

/// A live daemon reached over TCP, judged on its own clock.
pub struct RemoteTarget {
    client: Client,
    clock: SystemClock,
}

impl RemoteTarget {
    pub fn connect(addr: impl ToSocketAddrs + fmt::Display) -> Result<Self, AttackError> {
        Ok(RemoteTarget { client: Client::connect(addr)?, clock: SystemClock::new() })
    }
}

impl Target for RemoteTarget {
    fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn submit(&mut self, msg: &LoginMessage) -> Result<Verdict, AttackError> {
        Ok(self.client.login(msg)?)
    }
}

/// Seeded in-process setup: authority secrets, one honestly registered
/// victim card, and a fixed starting time.
pub struct Lab {
    pub seed: u64,
    pub secrets: AuthoritySecrets,
    pub victim_password: Password,
    pub card: CardImage,
    pub start: Timestamp,
}

impl Lab {
    pub const START: Timestamp = Timestamp::from_secs(1_700_000_000);

    pub fn new(alg: HashAlgorithm, seed: u64) -> Lab {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let secrets = AuthoritySecrets::generate(alg, &mut rng).expect("ChaCha20 never fails");
        let victim_password = random_password(&mut rng);
        let card = secrets.register(&victim_password);
        Lab { seed, secrets, victim_password, card, start: Lab::START }
    }

    pub fn target(&self, policy: FreshnessPolicy) -> InProcessTarget {
        InProcessTarget::new(self.secrets.clone(), policy, ScriptedClock::new(self.start))
    }

    /// The message an eavesdropper records from the victim at the start time.
    pub fn recorded_login(&self) -> LoginMessage {
        self.card.build_login(&self.victim_password, self.start)
    }
}

fn random_password(rng: &mut impl Rng) -> Password {
    let len = rng.random_range(1..=24);
    Password::new(Alphanumeric.sample_string(rng, len)).expect("1..=24 ASCII bytes")
}

fn random_digest(rng: &mut impl RngCore) -> Digest {
    let mut b = [0u8; DIGEST_LEN];
    rng.fill_bytes(&mut b);
    Digest::from_bytes(b)
}

/// Uniform sample from the output range of `alg`.
fn random_hash_output(alg: HashAlgorithm, rng: &mut impl RngCore) -> Digest {
    match alg {
        HashAlgorithm::Sha256 => random_digest(rng),
        HashAlgorithm::Toy8 => Digest::from_bytes([(rng.next_u32() & 0xff) as u8; DIGEST_LEN]),
    }
}

/// Probability that a uniformly drawn authenticator matches the expected one.
pub fn guess_probability(alg: HashAlgorithm) -> f64 {
    match alg {
        HashAlgorithm::Sha256 => 2f64.powi(-256),
        HashAlgorithm::Toy8 => 1.0 / 256.0,
    }
}

fn guess_expectation(alg: HashAlgorithm) -> Expectation {
    match alg {
        HashAlgorithm::Sha256 => Expectation::AllRejected,
        HashAlgorithm::Toy8 => Expectation::Rate { p: guess_probability(alg) },
    }
}

/// Authenticator an attacker holding `y` computes for arbitrary `(cid, n, t)`.
/// The password and `x` are not involved.
pub fn forge_with_y(alg: HashAlgorithm, y: &Digest, cid: Digest, n: Digest, t: Timestamp) -> LoginMessage {
    let te = t.encode();
    let b = alg.hash(alg.hash((n ^ *y ^ te).as_bytes()).as_bytes());
    let c = alg.hash((te ^ n ^ b ^ *y).as_bytes());
    LoginMessage { cid, n, c, t }
}

/// Re-sends an honest recorded login at chosen offsets after its timestamp.
///
/// `trials` offsets at or beyond the window are tried (`delta_t`,
/// `delta_t + 1`, then multiples), and two offsets inside the window (`1` and
/// `delta_t - 1`) are tried with the replay cache off and on.
pub fn replay_attack(lab: &Lab, policy: FreshnessPolicy, trials: u64) -> AttackReport {
    let recorded = lab.recorded_login();
    let t0 = recorded.t;
    let dt = policy.delta_t;
    let mut report = AttackReport::new(
        "replay",
        lab.seed,
        "replays at or after T + delta_t are expired; inside the window they pass unless the replay cache is on",
    );

    let mut after = CaseReport::new("after-window", Expectation::AllRejected);
    let mut stateless = lab.target(policy.with_replay_cache(false));
    for i in 0..trials {
        let offset = match i {
            0 => dt,
            1 => dt + 1,
            k => dt * k,
        };
        stateless.clock().set(t0.saturating_add(offset));
        after.record(stateless.submit(&recorded).expect("in-process"));
    }
    report.push_case(after);

    let inside: Vec<u64> = if dt > 2 { vec![1, dt - 1] } else { vec![dt - 1] };
    for (cache, name, expectation) in [
        (false, "within-window", Expectation::AllAccepted),
        (true, "within-window-cached", Expectation::AllRejected),
    ] {
        let mut target = lab.target(policy.with_replay_cache(cache));
        target.clock().set(t0);
        let mut original = CaseReport::new(format!("{name}-original"), Expectation::AllAccepted);
        original.record(target.submit(&recorded).expect("in-process"));
        report.push_case(original);

        let mut case = CaseReport::new(name, expectation);
        for &offset in &inside {
            target.clock().set(t0.saturating_add(offset));
            case.record(target.submit(&recorded).expect("in-process"));
        }
        report.push_case(case);
    }

    report.note(format!(
        "a recorded login replayed less than delta_t = {dt}s after T is accepted by the stateless verifier; \
         the freshness check only bounds the replay window"
    ));
    report.note("the replay cache is an extension: it rejects repeats of (C, T) seen within delta_t");
    report
}

/// Fabricates logins without knowing `y`.
///
/// Strategies: keep an observed `(CID, N, T)` and guess `C`; reuse the
/// observed `N` with a fresh `T`; draw everything at random. With `known_y`,
/// an extra case builds authenticators directly to show that `y` alone
/// gates acceptance.
pub fn forge_without_y(
    target: &mut dyn Target,
    observed: &LoginMessage,
    alg: HashAlgorithm,
    trials: u64,
    seed: u64,
    known_y: Option<&Digest>,
) -> Result<AttackReport, AttackError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let expectation = guess_expectation(alg);
    let mut report = AttackReport::new(
        "forge",
        seed,
        format!(
            "without y, a guessed authenticator is accepted with probability {:e} ({alg})",
            guess_probability(alg)
        ),
    );

    let mut random_c = CaseReport::new("random-c", expectation);
    for _ in 0..trials {
        let msg = LoginMessage { c: random_hash_output(alg, &mut rng), ..*observed };
        random_c.record(target.submit(&msg)?);
    }
    report.push_case(random_c);

    let mut reuse_n = CaseReport::new("reuse-n-new-t", expectation);
    for _ in 0..trials {
        let msg = LoginMessage {
            cid: random_digest(&mut rng),
            n: observed.n,
            c: random_hash_output(alg, &mut rng),
            t: target.now(),
        };
        reuse_n.record(target.submit(&msg)?);
    }
    report.push_case(reuse_n);

    let mut random_n = CaseReport::new("random-n", expectation);
    for _ in 0..trials {
        let msg = LoginMessage {
            cid: random_digest(&mut rng),
            n: random_digest(&mut rng),
            c: random_hash_output(alg, &mut rng),
            t: target.now(),
        };
        random_n.record(target.submit(&msg)?);
    }
    report.push_case(random_n);

    if let Some(y) = known_y {
        let mut with_y = CaseReport::new("knows-y", Expectation::AllAccepted);
        for _ in 0..trials.clamp(1, 1000) {
            let msg = forge_with_y(alg, y, random_digest(&mut rng), random_digest(&mut rng), target.now());
            with_y.record(target.submit(&msg)?);
        }
        report.push_case(with_y);
        report.note("with y in hand, any (CID, N) and the current T yield an accepted login; neither x nor a password is needed");
    }
    if alg == HashAlgorithm::Toy8 {
        report.note("toy8 has 256 possible outputs, so guessed authenticators are drawn from that range");
    }
    Ok(report)
}

/// Logs in from a possessed card with passwords other than the registered one.
pub fn wrong_password_probe(
    target: &mut dyn Target,
    card: &CardImage,
    registered: Option<&Password>,
    trials: u64,
    seed: u64,
) -> Result<AttackReport, AttackError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut report = AttackReport::new(
        "wrong-password",
        seed,
        "logins from a valid card are accepted for any password; a card with a corrupted y is rejected",
    );

    let draw = |rng: &mut ChaCha20Rng| loop {
        let pw = random_password(rng);
        if registered != Some(&pw) {
            break pw;
        }
    };

    let mut wrong = CaseReport::new("wrong-password", Expectation::AllAccepted);
    for _ in 0..trials {
        let pw = draw(&mut rng);
        wrong.record(target.submit(&card.build_login(&pw, target.now()))?);
    }
    report.push_case(wrong);

    let mut flipped = *card;
    let mut y = *flipped.y.as_bytes();
    let idx = rng.random_range(0..DIGEST_LEN);
    y[idx] ^= rng.random_range(1..=255u8);
    flipped.y = Digest::from_bytes(y);
    let mut bad_y = CaseReport::new("flipped-y", Expectation::AllRejected);
    for _ in 0..trials {
        let pw = draw(&mut rng);
        bad_y.record(target.submit(&flipped.build_login(&pw, target.now()))?);
    }
    report.push_case(bad_y);

    let mut empty = CaseReport::new("empty-password", Expectation::AllErrors);
    match Password::new("") {
        Ok(pw) => empty.record(target.submit(&card.build_login(&pw, target.now()))?),
        Err(_) => empty.record_error("encode-error"),
    }
    report.push_case(empty);

    if report.cases.iter().any(|c| c.outcomes.contains_key(Rejection::Replayed.as_str())) {
        report.note("the target runs a replay cache; the authenticator C does not depend on the password, so same-second probes collide");
    }
    report.note(
        "the verifier recovers h(PW) from CID and recomputes B from it, so the check passes for whatever password was keyed",
    );
    report.note("the card stores nothing that could check a password locally");
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub len: u64,
}

fn list_files(root: &Path) -> io::Result<Vec<FileEntry>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let meta = entry.metadata()?;
            if meta.is_dir() {
                stack.push(entry.path());
            } else {
                let rel = entry.path().strip_prefix(root).unwrap_or(&entry.path()).to_path_buf();
                out.push(FileEntry { path: rel, len: meta.len() });
            }
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

pub const AUDIT_SECRETS_FILE: &str = "secrets.dids";

/// Starts a daemon whose whole state lives in a fresh directory, registers
/// and logs in `registrations` users over the wire, then lists every file in
/// that directory.
pub fn stolen_verifier_audit(registrations: u64, seed: u64) -> Result<AttackReport, AttackError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let state = tempfile::tempdir()?;
    let secrets_path = state.path().join(AUDIT_SECRETS_FILE);
    AuthoritySecrets::generate(HashAlgorithm::Sha256, &mut rng)
        .expect("ChaCha20 never fails")
        .save(&secrets_path)?;
    let before = fs::read(&secrets_path)?;

    let token = "audit-token";
    let mut config = ServerConfig::new("127.0.0.1:0", &secrets_path);
    config.admin_token = Some(token.into());
    let clock = ScriptedClock::new(Lab::START);
    let server = Server::from_config(&config, Arc::new(clock.clone()))?.spawn()?;

    let mut report = AttackReport::new(
        "stolen-verifier",
        seed,
        "the authority's persistent state is exactly the 70-byte secrets file, whatever the number of users",
    );
    let mut issued = CaseReport::new("registrations", Expectation::AllAccepted);
    let mut logins = CaseReport::new("logins", Expectation::AllAccepted);
    {
        let mut client = Client::connect(server.local_addr())?;
        for _ in 0..registrations {
            let pw = random_password(&mut rng);
            match client.register(token, &pw) {
                Ok(card) => {
                    issued.record(Verdict::Accept);
                    logins.record(client.login(&card.build_login(&pw, clock.now()))?);
                }
                Err(ClientError::RegistrationDenied) => issued.record_error("denied"),
                Err(e) => return Err(e.into()),
            }
        }
    }
    server.shutdown()?;

    let files = list_files(state.path())?;
    let after = fs::read(&secrets_path)?;
    let only_secrets = files.len() == 1
        && files[0].path == Path::new(AUDIT_SECRETS_FILE)
        && files[0].len == crate::storage::FILE_LEN as u64
        && before == after;
    let mut footprint = CaseReport::new("footprint", Expectation::AllAccepted);
    if only_secrets {
        footprint.record(Verdict::Accept);
    } else {
        footprint.record_error("extra-state");
    }
    report.push_case(footprint);
    if registrations > 0 {
        report.push_case(issued);
        report.push_case(logins);
    }

    for f in &files {
        report.note(format!("authority wrote {} ({} bytes)", f.path.display(), f.len));
    }
    report.note("registration requests carry the password itself to the authority over the registration channel");
    report.note("during verification the authority only handles h(PW), recovered from CID");
    Ok(report)
}
