use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use plem::dso::{compute_ptdf, Dso, FeeTable, NetworkModel, Registry};
use plem::harness::{derive_seed, env_seed, network_for, MarketConfig, NetworkSpec};
use plem_cli::keys;

/// Grid operator: key generation, registration and tuple issuance.
#[derive(Parser)]
#[command(name = "dso-server")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Writes the signing key, its public half and the three server keys.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Answers registration, fee quote and issuance requests.
    Serve {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        keys: PathBuf,
        /// Network model file; without it a radial feeder for `--users` meters.
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        users: usize,
        #[arg(long, default_value_t = 12)]
        buses: u32,
        #[arg(long, default_value_t = 64)]
        bits: u32,
        #[arg(long, default_value_t = 1000)]
        scale: u64,
        #[arg(long, default_value_t = 0.02)]
        unit_fee: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Exit after this many client connections.
        #[arg(long)]
        max_conns: Option<usize>,
    },
    /// Prints the PTDF matrix of a network model as JSON.
    Ptdf {
        #[arg(long)]
        network: PathBuf,
    },
}

fn run(a: Args) -> plem::Result<()> {
    match a.cmd {
        Cmd::Keygen { out, seed } => {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(env_seed(seed), "keygen"));
            keys::generate(&out, &mut rng)?;
            eprintln!("keys written to {}", out.display());
        }
        Cmd::Serve { listen, keys: dir, network, users, buses, bits, scale, unit_fee, seed, max_conns } => {
            let seed = env_seed(seed);
            let cfg = MarketConfig {
                bits,
                scale,
                users,
                unit_fee,
                network: match network {
                    Some(path) => NetworkSpec::File { path },
                    None => NetworkSpec::Radial { buses },
                },
                ..Default::default()
            };
            cfg.validate()?;
            let model = match &cfg.network {
                NetworkSpec::File { path } => NetworkModel::load(path)?,
                NetworkSpec::Radial { .. } => {
                    let meters: Vec<String> = (0..users).map(|u| format!("m{u}")).collect();
                    network_for(&cfg, &meters, seed)?
                }
            };
            let fees = FeeTable::build(&model, unit_fee, scale)?;
            let mut dso = Dso::new(
                cfg.field()?,
                fees,
                Registry::in_memory(),
                keys::load_signing(&dir)?,
                keys::load_server_keys(&dir)?,
                derive_seed(seed, "dso"),
            );
            let l = TcpListener::bind(&listen).map_err(|e| plem::Error::PeerUnreachable(format!("bind {listen}: {e}")))?;
            eprintln!("dso: serving {} meters on {listen}", model.users.len());
            plem_cli::dso::serve(&l, &mut dso, max_conns)?;
        }
        Cmd::Ptdf { network } => {
            let m = NetworkModel::load(&network)?;
            let p = compute_ptdf(&m)?;
            let rows: Vec<Vec<f64>> = p.phi.row_iter().map(|r| r.iter().copied().collect()).collect();
            println!("{}", serde_json::json!({ "buses": m.buses, "lines": m.lines, "ptdf": rows }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dso-server: {e}");
            ExitCode::FAILURE
        }
    }
}
