use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use plem::harness::{Dataset, MarketConfig, NetworkSpec, PeerModel};
use plem_cli::{keys, split_addrs, swarm::run_swarm};

/// Simulated households: register, bid and receive results.
#[derive(Parser)]
#[command(name = "client-swarm")]
struct Args {
    /// Users for a synthetic dataset.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Peer slots per user.
    #[arg(long, default_value_t = 3)]
    peers: usize,
    #[arg(long, default_value_t = 64)]
    bits: u32,
    /// `synthetic`, or a CSV file with columns user, type, volume, price.
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    /// The three servers in index order.
    #[arg(long)]
    servers: String,
    /// Directory written by `dso-server keygen`.
    #[arg(long, default_value = "keys")]
    keys: PathBuf,
    #[arg(long, default_value_t = 1000)]
    scale: u64,
    #[arg(long, value_enum, default_value = "nearest")]
    peer_model: Model,
    /// Network model file; without it a random radial feeder.
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 900)]
    timeout_secs: u64,
    /// Report file; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Model {
    Nearest,
    Mutual,
    Random,
}

fn run(a: Args) -> plem::Result<()> {
    let cfg = MarketConfig {
        bits: a.bits,
        scale: a.scale,
        peers: a.peers,
        users: a.n,
        dataset: match a.dataset.as_str() {
            "synthetic" => Dataset::default(),
            path => Dataset::Csv { path: path.into() },
        },
        peer_model: match a.peer_model {
            Model::Nearest => PeerModel::Nearest,
            Model::Mutual => PeerModel::Mutual,
            Model::Random => PeerModel::Random,
        },
        network: a.network.map(|path| NetworkSpec::File { path }).unwrap_or_default(),
        seed: a.seed,
        timeout_secs: a.timeout_secs,
        ..Default::default()
    };
    let k = (keys::load_signing(&a.keys)?, keys::load_server_keys(&a.keys)?);
    let report = run_swarm(&cfg, k, &split_addrs(&a.servers))?;
    let json = serde_json::to_string_pretty(&report)?;
    match a.report {
        Some(p) => std::fs::write(p, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("client-swarm: {e}");
            ExitCode::FAILURE
        }
    }
}
