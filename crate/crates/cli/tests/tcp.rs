use std::net::TcpListener;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use plem::client::Client;
use plem::dso::{Dso, DsoRequest, DsoResponse, FeeTable, NetworkModel, Registry};
use plem::harness::{run_market, MarketConfig, PeerModel};
use plem::market::EngineParams;
use plem_cli::dso::{serve, DsoClient};
use plem_cli::keys;
use plem_cli::server::{run_offline, run_server, ServerOptions};
use plem_cli::swarm::run_swarm;

fn free_addrs(n: usize) -> Vec<String> {
    let ls: Vec<TcpListener> = (0..n).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
    ls.iter().map(|l| l.local_addr().unwrap().to_string()).collect()
}

fn server_opts(dir: &std::path::Path, addrs: &[String], i: usize, cfg: &MarketConfig) -> ServerOptions {
    let peers = (0..3).filter(|&j| j != i).map(|j| addrs[j].clone()).collect();
    ServerOptions {
        index: i,
        listen: addrs[i].clone(),
        peers,
        dso: keys::load_public(dir).unwrap(),
        key: keys::load_server_keys(dir).unwrap()[i].clone(),
        field: cfg.field().unwrap(),
        scale: cfg.scale,
        engine: EngineParams { peers: cfg.peers, ..Default::default() },
        seed: cfg.seed,
        timeout: Duration::from_secs(120),
        mask_pool: None,
    }
}

#[test]
fn tcp_session_matches_loopback() {
    let dir = tempfile::tempdir().unwrap();
    keys::generate(dir.path(), &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
    let cfg = MarketConfig { users: 12, bits: 32, peer_model: PeerModel::Mutual, seed: 31, timeout_secs: 120, ..Default::default() };
    let addrs = free_addrs(3);
    let handles: Vec<_> = (0..3)
        .map(|i| {
            let o = server_opts(dir.path(), &addrs, i, &cfg);
            std::thread::spawn(move || run_server(&o))
        })
        .collect();
    let k = (keys::load_signing(dir.path()).unwrap(), keys::load_server_keys(dir.path()).unwrap());
    let swarm = run_swarm(&cfg, k, &addrs).unwrap();
    let outs: Vec<_> = handles.into_iter().map(|h| h.join().unwrap().unwrap()).collect();

    let local = run_market(&cfg).unwrap();
    assert_eq!(swarm.p_star, local.p_star);
    assert_eq!(swarm.totals, local.totals);
    assert_eq!(swarm.bills, local.bills);
    assert!(swarm.excluded.is_empty());
    for o in &outs {
        assert_eq!(o.p_star, swarm.p_star);
        assert_eq!(o.sellers + o.buyers, 12);
        assert!(o.metering.online.rounds > 0);
        let local_sort = local.metering.phase("sort").unwrap().rounds;
        assert_eq!(o.metering.phase("sort").unwrap().rounds, local_sort);
    }
}

#[test]
fn offline_pool_feeds_the_next_session() {
    let dir = tempfile::tempdir().unwrap();
    keys::generate(dir.path(), &mut ChaCha12Rng::seed_from_u64(10)).unwrap();
    let cfg = MarketConfig { users: 6, bits: 32, peer_model: PeerModel::Mutual, seed: 77, timeout_secs: 120, ..Default::default() };
    let pools: Vec<_> = (0..3).map(|i| dir.path().join(format!("pool-{i}.bin"))).collect();

    let addrs = free_addrs(3);
    let handles: Vec<_> = (0..3)
        .map(|i| {
            let mut o = server_opts(dir.path(), &addrs, i, &cfg);
            o.mask_pool = Some(pools[i].clone());
            std::thread::spawn(move || run_offline(&o, 400, 40))
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap().unwrap(), 440);
    }

    let addrs = free_addrs(3);
    let handles: Vec<_> = (0..3)
        .map(|i| {
            let mut o = server_opts(dir.path(), &addrs, i, &cfg);
            o.mask_pool = Some(pools[i].clone());
            std::thread::spawn(move || run_server(&o))
        })
        .collect();
    let k = (keys::load_signing(dir.path()).unwrap(), keys::load_server_keys(dir.path()).unwrap());
    let swarm = run_swarm(&cfg, k, &addrs).unwrap();
    for h in handles {
        let o = h.join().unwrap().unwrap();
        assert_eq!(o.p_star, swarm.p_star);
        // the pool covered the whole session, so nothing was generated online
        let offline = o.metering.phase("offline");
        assert_eq!(offline.map_or(0, |p| p.rounds), 0, "{offline:?}");
    }
    assert_eq!(swarm.totals, run_market(&cfg).unwrap().totals);
}

#[test]
fn grid_operator_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    keys::generate(dir.path(), &mut rng).unwrap();
    let cfg = MarketConfig { users: 3, ..Default::default() };
    let meters: Vec<String> = (0..3).map(|u| format!("m{u}")).collect();
    let model: NetworkModel = plem::harness::network_for(&cfg, &meters, 1).unwrap();
    let fees = FeeTable::build(&model, 0.02, 1000).unwrap();
    let want = fees.get("m0", "m1").unwrap();
    let mut dso = Dso::new(
        cfg.field().unwrap(),
        fees,
        Registry::in_memory(),
        keys::load_signing(dir.path()).unwrap(),
        keys::load_server_keys(dir.path()).unwrap(),
        5,
    );
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    let t = std::thread::spawn(move || serve(&l, &mut dso, Some(1)));

    let mut c = DsoClient::connect(&addr).unwrap();
    let mut clients: Vec<Client> = meters.iter().map(|m| Client::new(m, &mut rng)).collect();
    for cl in &mut clients {
        let resp = c.call(&cl.register_request()).unwrap();
        cl.on_register(&resp).unwrap();
    }
    let quote = match c.call(&DsoRequest::QuoteFees { meter: "m0".into() }).unwrap() {
        DsoResponse::FeeQuote(q) => q,
        r => panic!("{r:?}"),
    };
    assert_eq!(quote.len(), 2);
    assert_eq!(quote[0].1, want);
    let iss = match c.call(&DsoRequest::IssueTuples { meter: "m0".into(), peers: Some(vec![quote[0].0]) }).unwrap() {
        DsoResponse::TupleBatch(i) => i,
        r => panic!("{r:?}"),
    };
    assert_eq!(iss.signed_shares(), 3);
    let pk = keys::load_public(dir.path()).unwrap();
    assert!(iss.bundles[0].1.shares.iter().all(|s| s.verify(&pk)));
    assert_eq!(iss.bundles[0].1.fee(&cfg.field().unwrap()).unwrap(), want);
    assert!(matches!(c.call(&DsoRequest::QuoteFees { meter: "stranger".into() }).unwrap(), DsoResponse::Error(_)));
    drop(c);
    t.join().unwrap().unwrap();
}
