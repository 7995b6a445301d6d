//! One market server on TCP.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use plem::compare::MaskPool;
use plem::dso::{DsoPublicKey, ServerKey};
use plem::harness::{derive_seed, session_id, Metering};
use plem::market::{EngineParams, Exclusion, ServerKeys, ServerReport};
use plem::net::TcpTransport;
use plem::{Error, Party, PrimeField, Result};

pub struct ServerOptions {
    /// 0-based.
    pub index: usize,
    pub listen: String,
    /// The other two servers in index order.
    pub peers: Vec<String>,
    pub dso: DsoPublicKey,
    pub key: ServerKey,
    pub field: PrimeField,
    pub scale: u64,
    pub engine: EngineParams,
    pub seed: u64,
    pub timeout: Duration,
    /// Masks loaded before the session and the unused rest written back.
    pub mask_pool: Option<PathBuf>,
}

/// Outcome report of one server.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServerOutput {
    pub index: usize,
    pub bits: u32,
    pub scale: u64,
    pub p_star: u64,
    pub sellers: usize,
    pub buyers: usize,
    pub excluded: Vec<Exclusion>,
    pub metering: Metering,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reveal: Option<plem::market::Reveal>,
}

/// Address list for [`TcpTransport::establish`]: the three servers, then the
/// client gateway, which always dials in and so needs no address.
pub fn endpoints(index: usize, listen: &str, peers: &[String], gateway: bool) -> Result<Vec<String>> {
    if peers.len() != 2 || index > 2 {
        return Err(Error::ConfigInvalid("need server index 1..3 and two peer addresses".into()));
    }
    let mut others = peers.iter();
    let mut addrs: Vec<String> = (0..3).map(|i| if i == index { listen.to_string() } else { others.next().unwrap().clone() }).collect();
    if gateway {
        addrs.push(String::new());
    }
    Ok(addrs)
}

fn connect(o: &ServerOptions, gateway: bool) -> Result<Party> {
    let addrs = endpoints(o.index, &o.listen, &o.peers, gateway)?;
    let net = TcpTransport::establish(o.index, &addrs, o.timeout)?;
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(o.seed, &format!("server{}", o.index)));
    Party::setup(o.index, o.field, session_id(o.seed), Box::new(net), &mut rng)
}

/// Serves one market session and returns the server's report.
pub fn run_server(o: &ServerOptions) -> Result<ServerOutput> {
    let started = Instant::now();
    let mut p = connect(o, true)?;
    if let Some(path) = o.mask_pool.as_ref().filter(|p| p.exists()) {
        p.masks = MaskPool::load(path, &o.field, o.index)?;
    }
    let keys = ServerKeys { dso: o.dso.clone(), key: o.key.clone() };
    let r: ServerReport = p.run_server(&keys, &o.engine)?;
    if let Some(path) = &o.mask_pool {
        p.masks.save(path, &o.field, o.index)?;
    }
    let users = r.sellers + r.buyers + r.excluded.len();
    Ok(ServerOutput {
        index: o.index,
        bits: o.field.input_bits(),
        scale: o.scale,
        p_star: r.p_star,
        sellers: r.sellers,
        buyers: r.buyers,
        excluded: r.excluded.clone(),
        metering: Metering::from_reports(std::slice::from_ref(&r), users, started.elapsed().as_secs_f64()),
        reveal: r.reveal,
    })
}

/// Offline-only session among the three servers: generates comparison masks
/// and appends them to the pool file for a later market session.
pub fn run_offline(o: &ServerOptions, wide: usize, single: usize) -> Result<usize> {
    let path = o.mask_pool.as_ref().ok_or_else(|| Error::ConfigInvalid("offline run needs a mask pool file".into()))?;
    let mut p = connect(o, false)?;
    if path.exists() {
        p.masks = MaskPool::load(path, &o.field, o.index)?;
    }
    p.meter.begin("offline", false);
    p.preprocess_masks(wide, single)?;
    p.masks.save(path, &o.field, o.index)?;
    Ok(p.masks.remaining_wide() + p.masks.remaining_single())
}
