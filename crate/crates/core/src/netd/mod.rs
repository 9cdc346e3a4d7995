//! The authentication daemon and its client.
//!
//! One request and one response per frame, sequential on each connection.
//! Every request produces one access-log line under
//! [`ACCESS_LOG_TARGET`]: ISO-8601 time, message type, verdict, `T`,
//! `T* - T`, and peer address, separated by tabs.

pub mod clock;
mod client;
mod server;

pub use client::{client_login, client_register, Client, ClientError, DEFAULT_CLIENT_TIMEOUT};
pub use clock::{Clock, ScriptedClock, SystemClock};
pub use server::{
    serve, RunningServer, ServeError, Server, ServerConfig, ShutdownHandle, ACCESS_LOG_TARGET, DEFAULT_READ_TIMEOUT,
};
