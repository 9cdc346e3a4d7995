//! `dynid` command-line tool.
//!
//! Exit codes:
//! - 0: success, or ACCEPT
//! - 1: configuration error
//! - 2: bind or secrets-file error
//! - 3: login or registration rejected; attack report does not conform
//! - 64: usage error
//! - 66: card-file error
//! - 69: transport error

mod args;
mod prompt;

use std::io::Write as _;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::Parser;
use log::info;
use rand::TryRngCore;
use serde_json::json;
use thiserror::Error;

use args::{AttackArgs, AttackName, CardCommand, Cli, Command, ServerCommand, ServerRunArgs};
use dynid::adversary::{self, AttackReport, Lab, RemoteTarget};
use dynid::netd::{self, ClientError, ServeError, Server, ServerConfig};
use dynid::{AuthoritySecrets, CardImage, Clock, FreshnessPolicy, HashAlgorithm, ScriptedClock, SystemClock, Timestamp, Verdict};
use prompt::PasswordPrompt;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Secrets(String),
    #[error("{0}")]
    File(String),
    #[error("{0}")]
    Transport(String),
    #[error("{0}")]
    Rejected(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Secrets(_) => 2,
            CliError::Usage(_) => 64,
            CliError::File(_) => 66,
            CliError::Transport(_) => 69,
            CliError::Rejected(_) => 3,
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::RegistrationDenied | ClientError::InvalidPassword => CliError::Rejected(e.to_string()),
            other => CliError::Transport(other.to_string()),
        }
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Config(_) | ServeError::ToyHashRefused => CliError::Config(e.to_string()),
            ServeError::Secrets { .. } | ServeError::Bind { .. } | ServeError::Io(_) => CliError::Secrets(e.to_string()),
        }
    }
}

impl From<adversary::AttackError> for CliError {
    fn from(e: adversary::AttackError) -> Self {
        match e {
            adversary::AttackError::Client(c) => c.into(),
            other => CliError::Transport(other.to_string()),
        }
    }
}

fn load_card(path: &Path) -> Result<CardImage, CliError> {
    CardImage::load(path).map_err(|e| CliError::File(format!("{}: {e}", path.display())))
}

fn save_card(card: &CardImage, path: &Path) -> Result<(), CliError> {
    card.save(path).map_err(|e| CliError::File(format!("{}: {e}", path.display())))
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| writeln!(buf, "{}", record.args()))
        .init();
}

fn server_init(secrets: &Path, toy_hash: bool, force: bool) -> Result<u8, CliError> {
    if secrets.exists() && !force {
        return Err(CliError::Config(format!("{} exists; pass --force to replace it", secrets.display())));
    }
    let alg = if toy_hash { HashAlgorithm::Toy8 } else { HashAlgorithm::Sha256 };
    let s = AuthoritySecrets::generate_os(alg).map_err(|e| CliError::Secrets(e.to_string()))?;
    s.save(secrets).map_err(|e| CliError::Secrets(format!("{}: {e}", secrets.display())))?;
    println!("wrote {} ({alg})", secrets.display());
    Ok(0)
}

fn server_run(a: ServerRunArgs) -> Result<u8, CliError> {
    let policy = FreshnessPolicy::new(a.delta_t, a.skew, a.replay_cache).map_err(|e| CliError::Config(e.to_string()))?;
    let mut config = ServerConfig::new(a.bind, a.secrets);
    config.policy = policy;
    config.admin_token = a.admin_token;
    config.allow_toy_hash = a.allow_toy_hash;

    init_logging();
    let server = Server::from_config(&config, Arc::new(SystemClock::new()))?;
    let handle = server.shutdown_handle();
    ctrlc::set_handler(move || handle.shutdown()).map_err(|e| CliError::Config(e.to_string()))?;
    info!("listening on {}", server.local_addr());
    server.run().map_err(|e| CliError::Secrets(e.to_string()))?;
    info!("shut down");
    Ok(0)
}

fn verdict_json(v: Verdict, t: Timestamp) -> serde_json::Value {
    let (verdict, reason) = match v {
        Verdict::Accept => ("accept", None),
        Verdict::Reject(r) => ("reject", Some(r.as_str())),
    };
    json!({ "verdict": verdict, "reason": reason, "t": t.secs() })
}

fn card_command(cmd: CardCommand) -> Result<u8, CliError> {
    match cmd {
        CardCommand::Register { server, token, out } => {
            let pw = PasswordPrompt::new().read_new("New password: ").map_err(CliError::Usage)?;
            let card = netd::client_register(server.as_str(), &token, &pw)?;
            save_card(&card, &out)?;
            println!("card written to {}", out.display());
            Ok(0)
        }
        CardCommand::Login { server, card, json, at } => {
            let image = load_card(&card)?;
            let pw = PasswordPrompt::new().read("Password: ").map_err(CliError::Usage)?;
            let t = match at {
                Some(secs) => Timestamp::from_secs(secs),
                None => SystemClock::new().now(),
            };
            let verdict = netd::client_login(server.as_str(), &image, &pw, &ScriptedClock::new(t))?;
            if json {
                println!("{}", verdict_json(verdict, t));
            } else {
                println!("{verdict}");
            }
            Ok(if verdict.is_accept() { 0 } else { 3 })
        }
        CardCommand::ChangePassword { card } => {
            let image = load_card(&card)?;
            let mut prompt = PasswordPrompt::new();
            let old = prompt.read("Current password: ").map_err(CliError::Usage)?;
            let new = prompt.read_new("New password: ").map_err(CliError::Usage)?;
            save_card(&image.change_password(&old, &new), &card)?;
            eprintln!("note: the card cannot check the current password; a mistyped one leaves a card that no longer matches the registration");
            println!("password changed");
            Ok(0)
        }
        CardCommand::Show { card } => {
            let image = load_card(&card)?;
            println!("version {}", CardImage::VERSION);
            println!("alg     {} (0x{:02x})", image.alg, image.alg.id());
            println!("n       {}", image.n.to_hex());
            println!("y       {}", image.y.to_hex());
            eprintln!("warning: y is the system-wide secret; anyone holding it can forge logins");
            Ok(0)
        }
    }
}

fn attack(a: AttackArgs) -> Result<u8, CliError> {
    let seed = match a.seed {
        Some(s) => s,
        None => rand::rngs::OsRng.try_next_u64().map_err(|e| CliError::Config(e.to_string()))?,
    };
    let alg = if a.toy_hash { HashAlgorithm::Toy8 } else { HashAlgorithm::Sha256 };
    let policy = FreshnessPolicy::default();

    let report: AttackReport = match (a.name, &a.server) {
        (AttackName::Replay, None) => {
            adversary::replay_attack(&Lab::new(alg, seed), policy, a.trials.unwrap_or(5))
        }
        (AttackName::Forge, None) => {
            let lab = Lab::new(alg, seed);
            let mut target = lab.target(policy);
            adversary::forge_without_y(&mut target, &lab.recorded_login(), alg, a.trials.unwrap_or(100_000), seed, Some(&lab.secrets.y))?
        }
        (AttackName::WrongPassword, None) => {
            let lab = Lab::new(alg, seed);
            let mut target = lab.target(policy);
            adversary::wrong_password_probe(&mut target, &lab.card, Some(&lab.victim_password), a.trials.unwrap_or(100), seed)?
        }
        (AttackName::StolenVerifier, None) => adversary::stolen_verifier_audit(a.trials.unwrap_or(50), seed)?,
        (AttackName::Forge | AttackName::WrongPassword, Some(server)) => {
            let token = a.token.as_deref().ok_or_else(|| {
                CliError::Usage("--server needs --token (or DYNID_ADMIN_TOKEN) to register a probe card".into())
            })?;
            let pw = dynid::Password::new(format!("probe-{seed:016x}")).expect("ASCII probe password");
            let card = netd::client_register(server.as_str(), token, &pw)?;
            let mut target = RemoteTarget::connect(server.as_str())?;
            if a.name == AttackName::Forge {
                let observed = card.build_login(&pw, SystemClock::new().now());
                adversary::forge_without_y(&mut target, &observed, card.alg, a.trials.unwrap_or(10_000), seed, Some(&card.y))?
            } else {
                adversary::wrong_password_probe(&mut target, &card, Some(&pw), a.trials.unwrap_or(100), seed)?
            }
        }
        (name, Some(_)) => {
            return Err(CliError::Usage(format!(
                "attack {} runs in-process only (it needs a scripted clock or the authority's disk)",
                clap::ValueEnum::to_possible_value(&name).map(|v| v.get_name().to_owned()).unwrap_or_default()
            )))
        }
    };

    if a.json {
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
    } else {
        print!("{report}");
    }
    Ok(if report.conforms { 0 } else { 3 })
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Server(ServerCommand::Init { secrets, toy_hash, force }) => server_init(&secrets, toy_hash, force),
        Command::Server(ServerCommand::Run(a)) => server_run(a),
        Command::Card(cmd) => card_command(cmd),
        Command::Attack(a) => attack(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("dynid: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
