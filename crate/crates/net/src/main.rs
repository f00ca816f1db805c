use std::fs;
use std::io::Write;
use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use zeroize::Zeroizing;

use scauth::adversary::{attack_small_subgroup, run_scenario, tampering_rejected, AttackerModel, Dictionary};
use scauth::group::GroupConfig;
use scauth::wire::ProtocolId;
use scauth_net::client::authenticate_with_image;
use scauth_net::service::{AuthService, ServiceConfig};
use scauth_net::store::ServerStore;
use scauth_net::{image, NetError, NetResult};

#[derive(Parser)]
#[command(name = "scauth", version, about = "Card-based password authentication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Issue a card image and record it in the server store.
    Personalize {
        #[arg(long, value_parser = parse_protocol)]
        protocol: ProtocolId,
        #[arg(long)]
        id: String,
        #[arg(long)]
        server_db: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Server identity, used only when the store does not exist yet.
        #[arg(long, default_value = "scauth-server")]
        server_id: String,
        /// Attempts before the card destroys itself; 0 disables the counter.
        #[arg(long, default_value_t = AttackerModel::DEFAULT_LIMIT)]
        limit: u32,
        /// Read the password from this environment variable instead of prompting.
        #[arg(long)]
        password_env: Option<String>,
    },
    /// Run the authentication service.
    Serve {
        #[arg(long)]
        server_db: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Serve only this protocol.
        #[arg(long, value_parser = parse_protocol)]
        protocol: Option<ProtocolId>,
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
    },
    /// Authenticate with a card image.
    Auth {
        #[arg(long)]
        card: PathBuf,
        #[arg(long)]
        server: String,
        #[arg(long)]
        password_env: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
    },
    /// Run an attack scenario and print its outcome as one JSON line.
    Attack {
        /// A scenario name, or `<protocol>-reversed` / `<protocol>-secure`.
        #[arg(long)]
        scenario: String,
        #[arg(long, value_parser = parse_protocol)]
        protocol: Option<ProtocolId>,
        /// One candidate password per line; the bundled list by default.
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Also picks the card's password: word number `seed mod size`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Attacker model, e.g. type-iii or type-ii:16.
        #[arg(long)]
        model: Option<String>,
    },
    /// Demonstrations.
    Demo {
        #[command(subcommand)]
        demo: Demo,
    },
}

#[derive(Subcommand)]
enum Demo {
    /// Key recovery against an unchecked exchange versus the protected protocols.
    SmallSubgroup {
        #[arg(long, default_value_t = 3)]
        t: u64,
        #[arg(long, default_value_t = 100)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_protocol(s: &str) -> Result<ProtocolId, String> {
    ProtocolId::from_name(s).ok_or_else(|| format!("unknown protocol {s:?} (ssca, pscab, pscabv, pscav)"))
}

fn usage(msg: impl Into<String>) -> NetError {
    NetError::Usage(msg.into())
}

fn read_password(env: Option<&str>, confirm: bool) -> NetResult<Zeroizing<String>> {
    let password = match env {
        Some(var) => Zeroizing::new(std::env::var(var).map_err(|_| usage(format!("environment variable {var} is not set")))?),
        None => {
            let first = Zeroizing::new(rpassword::prompt_password("Password: ").map_err(NetError::Network)?);
            if confirm {
                let second = Zeroizing::new(rpassword::prompt_password("Repeat password: ").map_err(NetError::Network)?);
                if *first != *second {
                    return Err(usage("passwords do not match"));
                }
            }
            first
        }
    };
    if password.is_empty() {
        return Err(usage("empty password"));
    }
    Ok(password)
}

fn resolve(addr: &str) -> NetResult<SocketAddr> {
    addr.to_socket_addrs()
        .map_err(NetError::Network)?
        .next()
        .ok_or_else(|| usage(format!("cannot resolve {addr}")))
}

fn personalize(
    protocol: ProtocolId,
    id: &str,
    server_db: &Path,
    out: &Path,
    server_id: &str,
    limit: u32,
    password_env: Option<&str>,
) -> NetResult<()> {
    let mut store = if server_db.exists() {
        ServerStore::load(server_db)?
    } else {
        ServerStore::new(GroupConfig::mersenne61(), server_id.as_bytes())?
    };
    let password = read_password(password_env, true)?;
    let card = store.personalize(protocol, id.as_bytes(), password.as_bytes(), limit, &mut rand::thread_rng())?;
    image::save(out, &card)?;
    store.save(server_db)?;
    println!("issued {protocol} card for {id} to {}", out.display());
    Ok(())
}

fn serve(server_db: &Path, listen: &str, protocol: Option<ProtocolId>, timeout_ms: u64) -> NetResult<()> {
    let store = ServerStore::load(server_db)?;
    let config = ServiceConfig {
        read_timeout: Duration::from_millis(timeout_ms),
        ..ServiceConfig::default()
    };
    let service = AuthService::from_store(&store, protocol, config)?;
    drop(store);
    if service.protocols().is_empty() {
        return Err(usage("the store holds no credentials for the requested protocols"));
    }
    let listener = TcpListener::bind(resolve(listen)?).map_err(NetError::Network)?;
    let addr = listener.local_addr().map_err(NetError::Network)?;
    let names: Vec<&str> = service.protocols().iter().map(|p| p.name()).collect();
    println!("listening on {addr} ({})", names.join(", "));
    std::io::stdout().flush().map_err(NetError::Network)?;
    service.serve(listener);
    Ok(())
}

fn auth(card: &Path, server: &str, password_env: Option<&str>, timeout_ms: u64) -> NetResult<()> {
    let password = read_password(password_env, false)?;
    let report = authenticate_with_image(card, resolve(server)?, password.as_bytes(), Duration::from_millis(timeout_ms))?;
    println!("Accept {} check={}", report.protocol, report.check);
    Ok(())
}

/// Splits shorthands like `pscab-reversed` into a scenario and a protocol.
fn scenario_and_protocol(scenario: &str, protocol: Option<ProtocolId>) -> NetResult<(&'static str, ProtocolId)> {
    let (name, implied) = match scenario.rsplit_once('-') {
        Some((p, "reversed")) if ProtocolId::from_name(p).is_some() => ("reversed-confirmation", ProtocolId::from_name(p)),
        Some((p, "secure")) if ProtocolId::from_name(p).is_some() => ("secure-confirmation", ProtocolId::from_name(p)),
        _ => (
            scauth::adversary::SCENARIOS
                .iter()
                .find(|s| **s == scenario)
                .copied()
                .ok_or_else(|| usage(format!("unknown scenario {scenario:?}")))?,
            None,
        ),
    };
    match (implied, protocol) {
        (Some(a), Some(b)) if a != b => Err(usage("--protocol contradicts the scenario name")),
        (Some(p), _) | (None, Some(p)) => Ok((name, p)),
        (None, None) => Err(usage("--protocol is required for this scenario")),
    }
}

fn default_model(scenario: &str) -> AttackerModel {
    match scenario {
        "stolen-card-read" | "reversed-confirmation" | "secure-confirmation" => AttackerModel::TypeIII,
        "memory-stick" => AttackerModel::TypeIV,
        "stolen-card-query" | "counter-exhaustion" => AttackerModel::TypeII(AttackerModel::DEFAULT_LIMIT),
        _ => AttackerModel::TypeI,
    }
}

fn attack(scenario: &str, protocol: Option<ProtocolId>, dict: Option<&Path>, seed: u64, model: Option<&str>) -> NetResult<()> {
    let (name, protocol) = scenario_and_protocol(scenario, protocol)?;
    let model = match model {
        Some(m) => m.parse::<AttackerModel>().map_err(|e| usage(e.to_string()))?,
        None => default_model(name),
    };
    let words = match dict {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| NetError::File {
                path: path.display().to_string(),
                source: e,
            })?;
            Dictionary::from_text(&text).map_err(|e| usage(e.to_string()))?
        }
        None => Dictionary::default_fixture(),
    };
    let index = (seed % words.len() as u64) as usize;
    let words = words.with_true_index(index).map_err(|e| usage(e.to_string()))?;
    let outcome = run_scenario(name, protocol, model, &words, seed).map_err(|e| usage(e.to_string()))?;
    println!("{}", serde_json::to_string(&outcome).expect("outcome serializes"));
    Ok(())
}

fn demo_small_subgroup(t: u64, trials: u32, seed: u64) -> NetResult<()> {
    use rand::SeedableRng;
    if t < 2 || trials == 0 {
        return Err(usage("need --t of at least 2 and at least one trial"));
    }
    let config = GroupConfig::mersenne61_with_cofactor(t).map_err(|e| usage(e.to_string()))?;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut recovered = 0;
    let mut worst = 0;
    for _ in 0..trials {
        let trial = attack_small_subgroup(&config, &mut rng)?;
        recovered += trial.recovered as u32;
        worst = worst.max(trial.guesses);
    }
    println!("unchecked exchange, cofactor {t}: key recovered in {recovered}/{trials} runs, at most {worst} guesses");
    for protocol in ProtocolId::ALL {
        let mut refused = 0;
        for _ in 0..trials {
            refused += tampering_rejected(protocol, &config, &mut rng)? as u32;
        }
        println!("{protocol}: tampered messages refused in {refused}/{trials} runs");
    }
    Ok(())
}

fn run(cli: Cli) -> NetResult<()> {
    match cli.command {
        Command::Personalize {
            protocol,
            id,
            server_db,
            out,
            server_id,
            limit,
            password_env,
        } => personalize(protocol, &id, &server_db, &out, &server_id, limit, password_env.as_deref()),
        Command::Serve {
            server_db,
            listen,
            protocol,
            timeout_ms,
        } => serve(&server_db, &listen, protocol, timeout_ms),
        Command::Auth {
            card,
            server,
            password_env,
            timeout_ms,
        } => auth(&card, &server, password_env.as_deref(), timeout_ms),
        Command::Attack {
            scenario,
            protocol,
            dict,
            seed,
            model,
        } => attack(&scenario, protocol, dict.as_deref(), seed, model.as_deref()),
        Command::Demo {
            demo: Demo::SmallSubgroup { t, trials, seed },
        } => demo_small_subgroup(t, trials, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if matches!(e, NetError::Rejected | NetError::Protocol(_) | NetError::CardDestroyed) {
                println!("Reject");
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
