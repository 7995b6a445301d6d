use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;

use plem::dso::{DsoPublicKey, ServerKey};
use plem::harness::env_seed;
use plem::market::EngineParams;
use plem::PrimeField;
use plem_cli::server::{run_offline, run_server, ServerOptions};
use plem_cli::split_addrs;

/// One of the three market servers.
#[derive(Parser)]
#[command(name = "lemo-server")]
struct Args {
    /// Server index, 1 to 3.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    index: u8,
    #[arg(long)]
    listen: String,
    /// The other two servers, lower index first.
    #[arg(long)]
    peers: String,
    #[arg(long)]
    dso_pubkey: PathBuf,
    #[arg(long)]
    server_key: PathBuf,
    #[arg(long, default_value_t = 64)]
    bits: u32,
    #[arg(long, default_value_t = 1000)]
    scale: u64,
    /// Peer slots per bid; must match the clients.
    #[arg(long, default_value_t = 3)]
    slots: usize,
    /// Session seed, shared with the other servers and the clients.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 900)]
    timeout_secs: u64,
    /// Open sorted books and allocations to the servers after clearing.
    #[arg(long)]
    test_mode: bool,
    /// Comparison mask pool: used first and refilled with what is left.
    #[arg(long)]
    mask_pool: Option<PathBuf>,
    /// Only generate `WIDE,SINGLE` masks into the pool, with no market.
    #[arg(long, value_name = "WIDE,SINGLE", requires = "mask_pool")]
    offline: Option<String>,
    /// Report file; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn run(a: Args) -> plem::Result<()> {
    let field = PrimeField::for_input_bits(a.bits)?;
    let opts = ServerOptions {
        index: a.index as usize - 1,
        listen: a.listen,
        peers: split_addrs(&a.peers),
        dso: DsoPublicKey::load(&a.dso_pubkey)?,
        key: ServerKey::load(&a.server_key)?,
        field,
        scale: a.scale,
        engine: EngineParams { peers: a.slots, reveal: a.test_mode, ..Default::default() },
        seed: env_seed(a.seed),
        timeout: Duration::from_secs(a.timeout_secs.max(1)),
        mask_pool: a.mask_pool,
    };
    if let Some(spec) = a.offline {
        let bad = || plem::Error::ConfigInvalid(format!("--offline {spec}: expected WIDE,SINGLE"));
        let (w, s) = spec.split_once(',').ok_or_else(bad)?;
        let left = run_offline(&opts, w.trim().parse().map_err(|_| bad())?, s.trim().parse().map_err(|_| bad())?)?;
        eprintln!("server {}: {left} masks in pool", a.index);
        return Ok(());
    }
    let out = run_server(&opts)?;
    let json = serde_json::to_string_pretty(&out)?;
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
            eprintln!("lemo-server: {e}");
            ExitCode::FAILURE
        }
    }
}
