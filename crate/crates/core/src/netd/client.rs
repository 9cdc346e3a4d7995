use std::io;
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use super::clock::Clock;
use crate::authority::Verdict;
use crate::card::{CardImage, LoginMessage};
use crate::primitives::Password;
use crate::wire::{self, Frame, Message, MessageType, RegisterResponse, RegisterStatus, WireError};

pub const DEFAULT_CLIENT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect to {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error("protocol error: {0}")]
    Wire(#[from] WireError),
    #[error("server answered {actual:?} to a {request:?}")]
    UnexpectedReply { request: MessageType, actual: MessageType },
    #[error("server reported an internal error")]
    ServerError,
    #[error("registration denied")]
    RegistrationDenied,
    #[error("server refused the password")]
    InvalidPassword,
}

impl ClientError {
    /// True for failures to reach or talk to the server at all.
    pub fn is_transport(&self) -> bool {
        matches!(self, ClientError::Connect { .. } | ClientError::Wire(WireError::Io(_) | WireError::ConnectionClosed))
    }
}

/// One connection to the daemon; requests are strictly sequential.
#[derive(Debug)]
pub struct Client {
    stream: TcpStream,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs + std::fmt::Display) -> Result<Client, ClientError> {
        Self::connect_timeout(addr, DEFAULT_CLIENT_TIMEOUT)
    }

    pub fn connect_timeout(addr: impl ToSocketAddrs + std::fmt::Display, timeout: Duration) -> Result<Client, ClientError> {
        let label = addr.to_string();
        let fail = |source| ClientError::Connect { addr: label.clone(), source };
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs().map_err(fail)?.collect();
        let mut last = io::Error::new(io::ErrorKind::NotFound, "no addresses resolved");
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(timeout)).map_err(fail)?;
                    stream.set_write_timeout(Some(timeout)).map_err(fail)?;
                    let _ = stream.set_nodelay(true);
                    return Ok(Client { stream });
                }
                Err(e) => last = e,
            }
        }
        Err(fail(last))
    }

    /// Sends pre-encoded frame bytes, as captured off the wire, and returns the reply.
    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<Frame, ClientError> {
        use std::io::Write;
        self.stream.write_all(bytes).map_err(WireError::from)?;
        self.stream.flush().map_err(WireError::from)?;
        Ok(wire::read_frame(&mut self.stream)?)
    }

    fn exchange(&mut self, request: &Message) -> Result<Message, ClientError> {
        let reply = self.send_raw(&request.to_bytes()?)?;
        Ok(Message::from_frame(&reply)?)
    }

    pub fn login(&mut self, msg: &LoginMessage) -> Result<Verdict, ClientError> {
        match self.exchange(&Message::LoginRequest(*msg))? {
            Message::LoginResponse(status) => status.verdict().ok_or(ClientError::ServerError),
            other => Err(ClientError::UnexpectedReply { request: MessageType::LoginRequest, actual: other.msg_type() }),
        }
    }

    pub fn register(&mut self, admin_token: &str, pw: &Password) -> Result<CardImage, ClientError> {
        let request = Message::RegisterRequest { token: admin_token.to_owned(), password: pw.as_str().to_owned() };
        match self.exchange(&request)? {
            Message::RegisterResponse(RegisterResponse::Issued(card)) => Ok(card),
            Message::RegisterResponse(RegisterResponse::Refused(status)) => Err(match status {
                RegisterStatus::Denied => ClientError::RegistrationDenied,
                RegisterStatus::InvalidPassword => ClientError::InvalidPassword,
                _ => ClientError::ServerError,
            }),
            Message::LoginResponse(wire::LoginStatus::ServerError) => Err(ClientError::ServerError),
            other => Err(ClientError::UnexpectedReply { request: MessageType::RegisterRequest, actual: other.msg_type() }),
        }
    }
}

/// Builds a login at `clock.now()` and submits it over a fresh connection.
pub fn client_login(
    addr: impl ToSocketAddrs + std::fmt::Display,
    card: &CardImage,
    pw: &Password,
    clock: &dyn Clock,
) -> Result<Verdict, ClientError> {
    let msg = card.build_login(pw, clock.now());
    Client::connect(addr)?.login(&msg)
}

pub fn client_register(
    addr: impl ToSocketAddrs + std::fmt::Display,
    admin_token: &str,
    pw: &Password,
) -> Result<CardImage, ClientError> {
    Client::connect(addr)?.register(admin_token, pw)
}
