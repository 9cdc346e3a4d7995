use std::io;
use std::net::{Ipv4Addr, Ipv6Addr, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{info, warn};
use thiserror::Error;

use super::clock::{Clock, SystemClock};
use crate::authority::{Authority, AuthorityError, AuthoritySecrets, FreshnessPolicy, Verdict};
use crate::card::LoginMessage;
use crate::primitives::{HashAlgorithm, Password, Timestamp};
use crate::storage::FileFormatError;
use crate::wire::{
    self, Frame, LoginStatus, Message, MessageType, RegisterResponse, RegisterStatus, WireError,
};

pub const DEFAULT_READ_TIMEOUT: Duration = Duration::from_secs(10);

/// Log target of the per-request access lines.
pub const ACCESS_LOG_TARGET: &str = "dynid::access";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: String,
    pub secrets_path: PathBuf,
    pub policy: FreshnessPolicy,
    /// Registration is disabled when unset.
    pub admin_token: Option<String>,
    pub allow_toy_hash: bool,
    pub read_timeout: Duration,
}

impl ServerConfig {
    pub fn new(bind: impl Into<String>, secrets_path: impl Into<PathBuf>) -> Self {
        ServerConfig {
            bind: bind.into(),
            secrets_path: secrets_path.into(),
            policy: FreshnessPolicy::default(),
            admin_token: None,
            allow_toy_hash: false,
            read_timeout: DEFAULT_READ_TIMEOUT,
        }
    }

    pub fn validate(&self) -> Result<(), ServeError> {
        if self.policy.delta_t < 1 {
            return Err(ServeError::Config("delta-t must be at least 1 second".into()));
        }
        if matches!(&self.admin_token, Some(t) if t.is_empty()) {
            return Err(ServeError::Config("admin token must not be empty".into()));
        }
        if self.read_timeout.is_zero() {
            return Err(ServeError::Config("read timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("secrets file {path}: {source}")]
    Secrets { path: PathBuf, source: FileFormatError },
    #[error("secrets use the test-only toy8 hash; pass --allow-toy-hash to serve them")]
    ToyHashRefused,
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<AuthorityError> for ServeError {
    fn from(e: AuthorityError) -> Self {
        ServeError::Config(e.to_string())
    }
}

struct Shared {
    authority: Authority,
    admin_token: Option<String>,
    clock: Arc<dyn Clock>,
    read_timeout: Duration,
    shutdown: AtomicBool,
}

/// A bound, not yet running, daemon.
pub struct Server {
    listener: TcpListener,
    local_addr: SocketAddr,
    shared: Arc<Shared>,
}

/// Stops a running [`Server`] from another thread.
#[derive(Clone)]
pub struct ShutdownHandle {
    shared: Arc<Shared>,
    wake_addr: SocketAddr,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        // unblock accept()
        let _ = TcpStream::connect_timeout(&self.wake_addr, Duration::from_secs(1));
    }
}

/// A server running on a background thread.
pub struct RunningServer {
    addr: SocketAddr,
    handle: ShutdownHandle,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        self.handle.clone()
    }

    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> io::Result<()> {
        self.handle.shutdown();
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

fn wake_addr(addr: SocketAddr) -> SocketAddr {
    match addr {
        SocketAddr::V4(a) if a.ip().is_unspecified() => SocketAddr::from((Ipv4Addr::LOCALHOST, a.port())),
        SocketAddr::V6(a) if a.ip().is_unspecified() => SocketAddr::from((Ipv6Addr::LOCALHOST, a.port())),
        other => other,
    }
}

impl Server {
    /// Loads the secrets named by `config` and binds.
    pub fn from_config(config: &ServerConfig, clock: Arc<dyn Clock>) -> Result<Server, ServeError> {
        config.validate()?;
        let secrets = AuthoritySecrets::load(&config.secrets_path)
            .map_err(|source| ServeError::Secrets { path: config.secrets_path.clone(), source })?;
        Server::bind(config, secrets, clock)
    }

    pub fn bind(config: &ServerConfig, secrets: AuthoritySecrets, clock: Arc<dyn Clock>) -> Result<Server, ServeError> {
        config.validate()?;
        if secrets.alg == HashAlgorithm::Toy8 && !config.allow_toy_hash {
            return Err(ServeError::ToyHashRefused);
        }
        let listener = TcpListener::bind(&config.bind)
            .map_err(|source| ServeError::Bind { addr: config.bind.clone(), source })?;
        let local_addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            authority: Authority::new(secrets, config.policy),
            admin_token: config.admin_token.clone(),
            clock,
            read_timeout: config.read_timeout,
            shutdown: AtomicBool::new(false),
        });
        Ok(Server { listener, local_addr, shared })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        ShutdownHandle { shared: Arc::clone(&self.shared), wake_addr: wake_addr(self.local_addr) }
    }

    /// Accepts connections until [`ShutdownHandle::shutdown`] is called. Each
    /// connection gets its own thread.
    pub fn run(self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            if self.shared.shutdown.load(Ordering::SeqCst) {
                break;
            }
            match stream {
                Ok(stream) => {
                    let shared = Arc::clone(&self.shared);
                    thread::Builder::new()
                        .name("dynid-conn".into())
                        .spawn(move || handle_connection(stream, &shared))?;
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
        Ok(())
    }

    pub fn spawn(self) -> io::Result<RunningServer> {
        let addr = self.local_addr;
        let handle = self.shutdown_handle();
        let thread = thread::Builder::new().name("dynid-accept".into()).spawn(move || self.run())?;
        Ok(RunningServer { addr, handle, thread: Some(thread) })
    }
}

/// Loads secrets, binds, and serves on the wall clock until the process exits.
pub fn serve(config: &ServerConfig) -> Result<(), ServeError> {
    let server = Server::from_config(config, Arc::new(SystemClock::new()))?;
    info!("listening on {}", server.local_addr());
    Ok(server.run()?)
}

fn handle_connection(mut stream: TcpStream, shared: &Shared) {
    let peer = stream
        .peer_addr()
        .map(|a| a.to_string())
        .unwrap_or_else(|_| "?".into());
    if stream.set_read_timeout(Some(shared.read_timeout)).is_err()
        || stream.set_write_timeout(Some(shared.read_timeout)).is_err()
    {
        return;
    }
    let _ = stream.set_nodelay(true);
    loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            break;
        }
        let frame = match wire::read_frame(&mut stream) {
            Ok(frame) => frame,
            Err(WireError::ConnectionClosed) => break,
            Err(WireError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => break,
            Err(WireError::Io(_)) => break,
            Err(e) => {
                warn!("{peer}: malformed frame: {e}");
                let _ = wire::write_frame(&mut stream, &error_response(None));
                break;
            }
        };
        let (reply, keep_open) = respond(shared, &frame, &peer);
        if wire::write_frame(&mut stream, &reply).is_err() || !keep_open {
            break;
        }
    }
}

fn error_response(request: Option<MessageType>) -> Frame {
    let msg = match request {
        Some(MessageType::RegisterRequest) => Message::RegisterResponse(RegisterResponse::Refused(RegisterStatus::ServerError)),
        _ => Message::LoginResponse(LoginStatus::ServerError),
    };
    msg.encode().expect("fixed-size response")
}

fn token_matches(expected: &str, given: &str) -> bool {
    let (a, b) = (expected.as_bytes(), given.as_bytes());
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn iso8601(t: Timestamp) -> String {
    i64::try_from(t.secs())
        .ok()
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0))
        .map(|d| d.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.to_string())
}

fn log_request(now: Timestamp, kind: MessageType, outcome: &str, login: Option<&LoginMessage>, peer: &str) {
    let (t, age) = match login {
        Some(m) => (m.t.to_string(), now.signed_diff(m.t).to_string()),
        None => ("-".into(), "-".into()),
    };
    info!(target: ACCESS_LOG_TARGET, "{}\t{}\t{}\t{}\t{}\t{}", iso8601(now), kind.name(), outcome, t, age, peer);
}

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Accept => "accept",
        Verdict::Reject(r) => r.as_str(),
    }
}

/// Returns the reply and whether the connection stays open.
fn respond(shared: &Shared, frame: &Frame, peer: &str) -> (Frame, bool) {
    let now = shared.clock.now();
    let msg = match Message::from_frame(frame) {
        Ok(m) => m,
        Err(e) => {
            warn!("{peer}: bad {} payload: {e}", frame.msg_type.name());
            log_request(now, frame.msg_type, "malformed", None, peer);
            return (error_response(Some(frame.msg_type)), false);
        }
    };
    match msg {
        Message::LoginRequest(login) => {
            let verdict = shared.authority.verify(&login, now);
            log_request(now, MessageType::LoginRequest, verdict_label(verdict), Some(&login), peer);
            let reply = Message::LoginResponse(verdict.into()).encode().expect("fixed-size response");
            (reply, true)
        }
        Message::RegisterRequest { token, password } => {
            let response = match &shared.admin_token {
                Some(expected) if token_matches(expected, &token) => match Password::new(password) {
                    Ok(pw) => RegisterResponse::Issued(shared.authority.register(&pw)),
                    Err(_) => RegisterResponse::Refused(RegisterStatus::InvalidPassword),
                },
                _ => RegisterResponse::Refused(RegisterStatus::Denied),
            };
            let outcome = match &response {
                RegisterResponse::Issued(_) => "issued",
                RegisterResponse::Refused(RegisterStatus::InvalidPassword) => "invalid-password",
                RegisterResponse::Refused(_) => "denied",
            };
            log_request(now, MessageType::RegisterRequest, outcome, None, peer);
            let reply = Message::RegisterResponse(response).encode().expect("fixed-size response");
            (reply, true)
        }
        other => {
            warn!("{peer}: unexpected {} from client", other.msg_type().name());
            log_request(now, other.msg_type(), "unexpected", None, peer);
            (error_response(None), false)
        }
    }
}
