use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dynid", version, about = "Dynamic-ID smart-card authentication: daemon, card emulator, attack harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remote-system commands.
    #[command(subcommand)]
    Server(ServerCommand),
    /// Card (user terminal) commands.
    #[command(subcommand)]
    Card(CardCommand),
    /// Run an attack experiment and print its report.
    Attack(AttackArgs),
}

#[derive(Debug, Subcommand)]
pub enum ServerCommand {
    /// Generate x and y and write a new secrets file.
    Init {
        #[arg(long, env = "DYNID_SECRETS")]
        secrets: PathBuf,
        /// Use the test-only toy8 hash.
        #[arg(long)]
        toy_hash: bool,
        /// Overwrite an existing secrets file.
        #[arg(long)]
        force: bool,
    },
    /// Run the authentication daemon.
    Run(ServerRunArgs),
}

#[derive(Debug, Args)]
pub struct ServerRunArgs {
    #[arg(long, default_value = "127.0.0.1:4040", value_name = "HOST:PORT")]
    pub bind: String,
    #[arg(long, env = "DYNID_SECRETS")]
    pub secrets: PathBuf,
    /// Maximum accepted age T* - T of a login.
    #[arg(long = "delta-t", default_value_t = 60, value_name = "SECONDS")]
    pub delta_t: u64,
    /// How far in the future T may be.
    #[arg(long, default_value_t = 5, value_name = "SECONDS")]
    pub skew: u64,
    /// Reject repeats of an accepted login within delta-t (extension).
    #[arg(long)]
    pub replay_cache: bool,
    /// Token required on registration requests; registration is disabled without it.
    #[arg(long, env = "DYNID_ADMIN_TOKEN", hide_env_values = true)]
    pub admin_token: Option<String>,
    /// Serve secrets that use the test-only toy8 hash.
    #[arg(long)]
    pub allow_toy_hash: bool,
}

#[derive(Debug, Subcommand)]
pub enum CardCommand {
    /// Register with the daemon and write the issued card.
    Register {
        #[arg(long, value_name = "HOST:PORT")]
        server: String,
        #[arg(long, env = "DYNID_ADMIN_TOKEN", hide_env_values = true)]
        token: String,
        #[arg(long, value_name = "CARD")]
        out: PathBuf,
    },
    /// Log in with a card.
    Login {
        #[arg(long, value_name = "HOST:PORT")]
        server: String,
        #[arg(long, value_name = "CARD")]
        card: PathBuf,
        #[arg(long)]
        json: bool,
        /// Use this terminal time instead of the wall clock.
        #[arg(long, hide = true, value_name = "EPOCH_SECONDS")]
        at: Option<u64>,
    },
    /// Change the password held on a card, without contacting the daemon.
    ChangePassword {
        #[arg(long, value_name = "CARD")]
        card: PathBuf,
    },
    /// Print the card's contents.
    Show {
        #[arg(long, value_name = "CARD")]
        card: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackName {
    Replay,
    Forge,
    WrongPassword,
    StolenVerifier,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(value_enum)]
    pub name: AttackName,
    /// Trials per case (registrations for stolen-verifier).
    #[arg(long)]
    pub trials: Option<u64>,
    /// Seed for all randomness; drawn from the OS when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run the in-process authority with the toy8 hash.
    #[arg(long)]
    pub toy_hash: bool,
    /// Attack a live daemon instead of an in-process authority.
    #[arg(long, value_name = "HOST:PORT")]
    pub server: Option<String>,
    /// Admin token used to register a probe card on the live daemon.
    #[arg(long, env = "DYNID_ADMIN_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    #[arg(long)]
    pub json: bool,
}
