//! The client side on TCP: registers the users with an in-process grid
//! operator, submits their bids and collects totals and bills.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use plem::dso::{DsoSigningKey, ServerKey};
use plem::harness::{derive_seed, prepare_market, run_gateway, session_id, IssuanceStats, MarketConfig};
use plem::market::BillLine;
use plem::net::TcpTransport;
use plem::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SwarmReport {
    pub p_star: u64,
    pub bills: BTreeMap<u32, Vec<BillLine>>,
    pub totals: BTreeMap<String, u64>,
    pub excluded: Vec<String>,
    pub refused: Vec<String>,
    pub users: usize,
    pub wall_secs: f64,
    pub bytes_out: u64,
    pub bytes_in: u64,
    pub issuance: IssuanceStats,
    pub config: MarketConfig,
}

pub fn run_swarm(cfg: &MarketConfig, keys: (DsoSigningKey, [ServerKey; 3]), servers: &[String]) -> Result<SwarmReport> {
    if servers.len() != 3 {
        return Err(Error::ConfigInvalid(format!("{} server addresses, expected 3", servers.len())));
    }
    let seed = cfg.effective_seed()?;
    let (mut pop, plan) = prepare_market(cfg, seed, Some(keys))?;
    let started = Instant::now();
    let mut addrs = servers.to_vec();
    addrs.push(String::new());
    let mut net = TcpTransport::establish(3, &addrs, cfg.timeout())?;
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "clients"));
    let g = run_gateway(&mut net, session_id(seed), &mut pop, &plan, None, &mut rng)?;
    drop(net);
    Ok(SwarmReport {
        p_star: g.outcome.p_star,
        bills: g.outcome.bills,
        totals: g.outcome.totals,
        excluded: g.outcome.excluded,
        refused: g.refused,
        users: plan.len(),
        wall_secs: started.elapsed().as_secs_f64(),
        bytes_out: g.bytes_out,
        bytes_in: g.bytes_in,
        issuance: pop.issuance.clone(),
        config: cfg.clone(),
    })
}
