use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use plem::harness::{run_market, MarketConfig};

/// Runs a whole market (grid operator, clients and three servers) in one
/// process and writes the JSON report.
#[derive(Parser)]
#[command(name = "run-market")]
struct Args {
    /// JSON configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    peers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Emulated round-trip time in milliseconds.
    #[arg(long)]
    rtt_ms: Option<f64>,
    /// Check the outcome against the clear-text reference.
    #[arg(long)]
    test_mode: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn run(a: Args) -> plem::Result<bool> {
    let mut cfg = match &a.config {
        Some(p) => MarketConfig::load(p)?,
        None => MarketConfig::default(),
    };
    cfg.users = a.users.unwrap_or(cfg.users);
    cfg.bits = a.bits.unwrap_or(cfg.bits);
    cfg.peers = a.peers.unwrap_or(cfg.peers);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.rtt_ms = a.rtt_ms.unwrap_or(cfg.rtt_ms);
    cfg.test_mode |= a.test_mode;
    if a.report.is_some() {
        cfg.report = a.report;
    }
    let r = run_market(&cfg)?;
    let m = &r.metering;
    eprintln!(
        "p* = {}, {} sellers, {} buyers, {} excluded; online {} rounds {:.2} MB, offline {} rounds {:.2} MB, {:.2}s",
        r.p_star,
        m.sellers,
        m.buyers,
        r.excluded.len(),
        m.online.rounds,
        m.online.bytes_out as f64 / 1e6,
        m.offline.rounds,
        m.offline.bytes_out as f64 / 1e6,
        m.wall_secs
    );
    if cfg.report.is_none() {
        println!("{}", serde_json::to_string_pretty(&r)?);
    }
    Ok(match &r.oracle {
        Some(o) if !o.matches => {
            eprintln!("reference mismatch: {}", o.detail.as_deref().unwrap_or("?"));
            false
        }
        _ => true,
    })
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("run-market: {e}");
            ExitCode::FAILURE
        }
    }
}
