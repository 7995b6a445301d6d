//! Orchestration of a full market session and its report.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crossbeam_channel::Sender;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::client::BidRecord;
use crate::dso::{DsoSigningKey, NetworkModel, ServerKey};
use crate::error::{Error, Result};
use crate::harness::config::{derive_seed, Dataset, MarketConfig, NetworkSpec};
use crate::harness::gateway::{run_gateway, BidHook};
use crate::harness::population::{plan_market, reference_bids, IssuanceStats, PlannedBid, Population};
use crate::market::{clear_text_reference, EngineParams, MarketOutcome, ServerKeys, ServerReport, TieOrder};
use crate::net::frame::SessionId;
use crate::net::meter::PhaseStats;
use crate::net::transport::{loopback_mesh, LoopbackOptions, TapRecord, Transport};
use crate::session::Party;

/// Phase names in protocol order.
pub const PHASES: [&str; 10] =
    ["setup", "preprocess", "offline", "price", "sort", "mappings", "allocation", "test_reveal", "distribute", "billing"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub name: String,
    pub online: bool,
    /// Communication rounds between the servers.
    pub rounds: u64,
    /// Summed over the three servers.
    pub messages_out: u64,
    pub bytes_out: u64,
    pub bytes_in: u64,
    pub field_elems_out: u64,
    pub point_elems_out: u64,
    pub scalar_elems_out: u64,
    /// Slowest server.
    pub wall_secs: f64,
    /// Summed over the three servers.
    pub cpu_secs: f64,
}

impl PhaseSummary {
    fn merge(name: &str, online: bool, parts: &[&PhaseStats]) -> Self {
        PhaseSummary {
            name: name.to_string(),
            online,
            rounds: parts.iter().map(|p| p.rounds).max().unwrap_or(0),
            messages_out: parts.iter().map(|p| p.messages_out).sum(),
            bytes_out: parts.iter().map(|p| p.bytes_out).sum(),
            bytes_in: parts.iter().map(|p| p.bytes_in).sum(),
            field_elems_out: parts.iter().map(|p| p.field_elems_out).sum(),
            point_elems_out: parts.iter().map(|p| p.point_elems_out).sum(),
            scalar_elems_out: parts.iter().map(|p| p.scalar_elems_out).sum(),
            wall_secs: parts.iter().map(|p| p.wall_secs).fold(0.0, f64::max),
            cpu_secs: parts.iter().map(|p| p.cpu_secs).sum(),
        }
    }

    fn add(&mut self, o: &PhaseSummary) {
        self.rounds += o.rounds;
        self.messages_out += o.messages_out;
        self.bytes_out += o.bytes_out;
        self.bytes_in += o.bytes_in;
        self.field_elems_out += o.field_elems_out;
        self.point_elems_out += o.point_elems_out;
        self.scalar_elems_out += o.scalar_elems_out;
        self.wall_secs += o.wall_secs;
        self.cpu_secs += o.cpu_secs;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metering {
    pub phases: Vec<PhaseSummary>,
    pub offline: PhaseSummary,
    pub online: PhaseSummary,
    pub wall_secs: f64,
    pub users: usize,
    pub sellers: usize,
    pub buyers: usize,
    pub mapping_tests: u64,
    pub mutual_pairs: u64,
    pub gateway_bytes_out: u64,
    pub gateway_bytes_in: u64,
}

impl Metering {
    pub fn from_reports(r: &[ServerReport], users: usize, wall: f64) -> Self {
        let mut m = Metering {
            wall_secs: wall,
            users,
            sellers: r[0].sellers,
            buyers: r[0].buyers,
            mapping_tests: r[0].mapping_tests,
            mutual_pairs: r[0].mutual_pairs,
            offline: PhaseSummary { name: "offline_total".into(), ..Default::default() },
            online: PhaseSummary { name: "online_total".into(), online: true, ..Default::default() },
            ..Default::default()
        };
        let mut names: Vec<String> = PHASES.iter().map(|s| s.to_string()).collect();
        for p in &r[0].phases {
            if !names.contains(&p.name) {
                names.push(p.name.clone());
            }
        }
        for name in names {
            let parts: Vec<&PhaseStats> = r.iter().filter_map(|s| s.phases.iter().find(|p| p.name == name)).collect();
            if parts.is_empty() {
                continue;
            }
            let s = PhaseSummary::merge(&name, parts[0].online, &parts);
            if name == "test_reveal" {
                // disclosure for oracle checks only; not part of the protocol cost
            } else if s.online {
                m.online.add(&s);
            } else {
                m.offline.add(&s);
            }
            m.phases.push(s);
        }
        m
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseSummary> {
        self.phases.iter().find(|p| p.name == name)
    }
}

#[derive(Clone, Default)]
pub struct RunOptions {
    pub engine: EngineParams,
    pub rtt: Duration,
    pub timeout: Option<Duration>,
    pub seed: u64,
    pub tap: Option<Sender<TapRecord>>,
    pub hook: Option<std::sync::Arc<BidHook>>,
}

#[derive(Clone, Debug)]
pub struct MarketRun {
    /// As received by clients and suppliers, plus test-mode disclosures.
    pub outcome: MarketOutcome,
    pub servers: Vec<ServerReport>,
    pub metering: Metering,
    pub refused: Vec<String>,
    /// Recipients of totals in arrival order.
    pub rows: Vec<String>,
}

pub fn session_id(seed: u64) -> SessionId {
    let mut s = [0u8; 16];
    s[..8].copy_from_slice(&derive_seed(seed, "session").to_le_bytes());
    s[8..].copy_from_slice(b"plem-mkt");
    s
}

/// Runs three servers and the client side over an in-process mesh.
pub fn run_market_local(pop: &mut Population, plan: &[PlannedBid], opts: &RunOptions) -> Result<MarketRun> {
    let field = pop.field;
    let session = session_id(opts.seed);
    let mut mesh = loopback_mesh(4, LoopbackOptions { rtt: opts.rtt, timeout: opts.timeout, tap: opts.tap.clone() });
    let mut gw = mesh.pop().expect("four endpoints");
    let dso = pop.dso.public_key();
    let keys: Vec<ServerKeys> = (0..3).map(|i| ServerKeys { dso: dso.clone(), key: pop.server_keys[i].clone() }).collect();
    let started = Instant::now();
    let (gw_result, reports) = std::thread::scope(|sc| {
        let handles: Vec<_> = mesh
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                let keys = &keys[i];
                let engine = &opts.engine;
                sc.spawn(move || -> Result<ServerReport> {
                    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(opts.seed, &format!("server{i}")));
                    let mut p = Party::setup(i, field, session, Box::new(t), &mut rng)?;
                    p.run_server(keys, engine)
                })
            })
            .collect();
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(opts.seed, "clients"));
        let g = run_gateway(&mut gw as &mut dyn Transport, session, pop, plan, opts.hook.as_deref(), &mut rng);
        // hang up so that servers blocked on the client side fail fast
        drop(gw);
        let reports: Vec<Result<ServerReport>> = handles.into_iter().map(|h| h.join().expect("server thread panicked")).collect();
        (g, reports)
    });
    let wall = started.elapsed().as_secs_f64();
    let mut servers = Vec::with_capacity(3);
    let mut first_err = None;
    for r in reports {
        match r {
            Ok(r) => servers.push(r),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let g = match (gw_result, first_err) {
        (Ok(g), None) => g,
        // a server failure is the root cause when the client side merely lost its link
        (Err(Error::TransportFailure(_)), Some(e)) | (Ok(_), Some(e)) => return Err(e),
        (Err(e), _) => return Err(e),
    };
    let mut outcome = g.outcome;
    if opts.engine.reveal {
        attach_reveal(pop, plan, &servers, &mut outcome)?;
    }
    let mut metering = Metering::from_reports(&servers, plan.len(), wall);
    metering.gateway_bytes_out = g.bytes_out;
    metering.gateway_bytes_in = g.bytes_in;
    Ok(MarketRun { outcome, servers, metering, refused: g.refused, rows: g.rows })
}

/// Maps the test-mode disclosure to meters: sort order and per-slot volumes,
/// trimmed to each user's real slot count.
fn attach_reveal(pop: &Population, plan: &[PlannedBid], servers: &[ServerReport], out: &mut MarketOutcome) -> Result<()> {
    let r = servers[0].reveal.as_ref().ok_or_else(|| Error::Malformed("missing reveal".into()))?;
    if servers.iter().any(|s| s.reveal.as_ref() != Some(r)) {
        return Err(Error::InconsistentShares("servers disclosed different results".into()));
    }
    let dir: BTreeMap<String, String> =
        pop.directory().into_iter().map(|(k, v)| (crate::dso::tuples::hex(&k), v)).collect();
    let slots: BTreeMap<&str, usize> = plan.iter().map(|p| (pop.clients[p.user].meter.as_str(), p.selected.len())).collect();
    let name = |h: &String| dir.get(h).cloned().ok_or(Error::UnknownRecipient);
    let order = TieOrder {
        sellers: r.sellers.iter().map(name).collect::<Result<_>>()?,
        buyers: r.buyers.iter().map(name).collect::<Result<_>>()?,
    };
    let mut alloc = BTreeMap::new();
    for (meters, rows) in [(&order.sellers, &r.seller_alloc), (&order.buyers, &r.buyer_alloc)] {
        for (m, a) in meters.iter().zip(rows) {
            let n = slots.get(m.as_str()).copied().unwrap_or(0);
            if a[n..].iter().any(|&x| x != 0) {
                return Err(Error::InconsistentShares(format!("padding slot of {m} received volume")));
            }
            alloc.insert(m.clone(), a[..n].to_vec());
        }
    }
    out.allocations = Some(alloc);
    out.order = Some(order);
    Ok(())
}

/// Full report of one configured run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub p_star: u64,
    pub bills: BTreeMap<u32, Vec<crate::market::BillLine>>,
    pub totals: BTreeMap<String, u64>,
    pub excluded: Vec<String>,
    pub metering: Metering,
    pub issuance: IssuanceStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
    pub config: MarketConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub matches: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Bids and suppliers for a configured dataset.
pub fn load_dataset(cfg: &MarketConfig, seed: u64) -> Result<(Vec<BidRecord>, Vec<u32>)> {
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "bids"));
    let bids = match &cfg.dataset {
        Dataset::Synthetic(s) => {
            let meters: Vec<String> = (0..cfg.users).map(|u| format!("m{u}")).collect();
            s.generate(&meters, &mut rng)
        }
        Dataset::Csv { path } => crate::client::load_bids_csv(path, cfg.scale)?,
    };
    let suppliers = bids.iter().map(|_| rand::Rng::gen_range(&mut rng, 0..cfg.suppliers)).collect();
    Ok((bids, suppliers))
}

/// Network model whose meters are the dataset's users.
pub fn network_for(cfg: &MarketConfig, users: &[String], seed: u64) -> Result<NetworkModel> {
    match &cfg.network {
        NetworkSpec::Radial { buses } => {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "network"));
            let mut m = NetworkModel::synthetic_radial(*buses, users.len(), &mut rng);
            m.users = users.iter().enumerate().map(|(u, name)| (name.clone(), 2 + (u as u32 % (buses - 1)))).collect();
            Ok(m)
        }
        NetworkSpec::File { path } => {
            let m = NetworkModel::load(path)?;
            if let Some(u) = users.iter().find(|u| !m.users.contains_key(*u)) {
                return Err(Error::ConfigInvalid(format!("user {u} has no meter in the network model")));
            }
            Ok(m)
        }
    }
}

/// Rejects markets whose sums or products could leave the field's signed range.
pub fn check_ranges(cfg: &MarketConfig, pop: &Population, plan: &[PlannedBid]) -> Result<()> {
    let f = &pop.field;
    let limit = 1u128 << f.input_bits();
    let half = f.modulus() / 2;
    let price_sum: u128 = plan.iter().map(|p| p.price as u128).sum();
    if price_sum >= f.modulus() {
        return Err(Error::ConfigInvalid("sum of prices exceeds the field".into()));
    }
    for p in plan {
        let fees: u128 = p.peers.iter().map(|x| x.1 as u128).max().unwrap_or(0);
        if p.volume as u128 >= limit || p.price as u128 >= limit {
            return Err(Error::ConfigInvalid(format!("bid outside {} bits", cfg.bits)));
        }
        if p.volume as u128 * p.price.max(1) as u128 * 2 >= half || p.volume as u128 * fees * cfg.peers as u128 >= half {
            return Err(Error::ConfigInvalid("bill of one user could exceed the field".into()));
        }
    }
    Ok(())
}

/// Registers the configured users and plans their bids. Without `keys` the
/// grid operator and server keys are derived from the seed.
pub fn prepare_market(
    cfg: &MarketConfig,
    seed: u64,
    keys: Option<(DsoSigningKey, [ServerKey; 3])>,
) -> Result<(Population, Vec<PlannedBid>)> {
    cfg.validate()?;
    let field = cfg.field()?;
    let (bids, suppliers) = load_dataset(cfg, seed)?;
    let users: Vec<String> = bids.iter().map(|b| b.user.clone()).collect();
    let model = network_for(cfg, &users, seed)?;
    let pseed = derive_seed(seed, "population");
    let mut pop = match keys {
        Some((sk, server_keys)) => {
            Population::with_keys(field, cfg.scale, &model, cfg.unit_fee, &users, cfg.issuance, sk, server_keys, pseed)?
        }
        None => {
            let mut krng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "dso-key"));
            let sk = DsoSigningKey::generate(&mut krng)?;
            Population::build(field, cfg.scale, &model, cfg.unit_fee, &users, cfg.issuance, sk, pseed)?
        }
    };
    let mut prng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "peers"));
    let plan = plan_market(&mut pop, &bids, &suppliers, cfg.peer_model, cfg.peers, &mut prng)?;
    check_ranges(cfg, &pop, &plan)?;
    Ok((pop, plan))
}

pub fn engine_params(cfg: &MarketConfig) -> EngineParams {
    EngineParams {
        peers: cfg.peers,
        batch_width: cfg.batch_width,
        mapping_batch: cfg.mapping_batch,
        reveal: cfg.test_mode,
        ..Default::default()
    }
}

/// Builds the population, plans the market, runs it on loopback and, in
/// test mode, checks the outcome against the clear-text reference.
pub fn run_market(cfg: &MarketConfig) -> Result<Report> {
    let seed = cfg.effective_seed()?;
    let (mut pop, plan) = prepare_market(cfg, seed, None)?;
    let opts = RunOptions {
        engine: engine_params(cfg),
        rtt: cfg.rtt(),
        timeout: Some(cfg.timeout()),
        seed,
        tap: None,
        hook: None,
    };
    let run = run_market_local(&mut pop, &plan, &opts)?;
    let oracle = if cfg.test_mode {
        let want = clear_text_reference(&reference_bids(&pop, &plan), run.outcome.order.as_ref(), 0)?;
        let detail = run.outcome.diff(&want);
        Some(OracleCheck { matches: detail.is_none(), detail })
    } else {
        None
    };
    let report = Report {
        p_star: run.outcome.p_star,
        bills: run.outcome.bills.clone(),
        totals: run.outcome.totals.clone(),
        excluded: run.outcome.excluded.clone(),
        metering: run.metering,
        issuance: pop.issuance.clone(),
        oracle,
        config: cfg.clone(),
    };
    if let Some(path) = &cfg.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}
