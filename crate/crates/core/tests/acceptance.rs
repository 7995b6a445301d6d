//! Acceptance suite. Runs every criterion, prints one verdict line each and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 2 3`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use plem::client::{BidRecord, Side, SyntheticBids};
use plem::dso::{compute_ptdf, Dso, DsoSigningKey, FeeTable, Line, NetworkModel, Registry, ServerKey};
use plem::ec::{encode_point, mul_g, open_point_shares, random_nonzero_scalar, share_point, ProjectivePoint};
use plem::harness::{
    check_invariants, check_oracle, env_seed, meter_assert, run_market, run_market_local, sum_servers, Expectation,
    MarketConfig, MarketRun, PeerModel, RunOptions, Scenario, ScenarioSpec, PHASES,
};
use plem::identity::{batch_scalars, keygen, verify_batch, verify_single, BatchItem, BatchWidth, SharedBatchItem};
use plem::market::{EngineParams, RefBid};
use plem::net::meter::PhaseStats;
use plem::permute::SharedVector;
use plem::session::run3;
use plem::share::share;
use plem::PrimeField;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn opts(seed: u64) -> RunOptions {
    RunOptions {
        engine: EngineParams { reveal: true, ..Default::default() },
        timeout: Some(Duration::from_secs(1800)),
        seed,
        ..Default::default()
    }
}

/// Markets checked for conservation by criterion 5, filled by 1 and 4.
#[derive(Default)]
struct Checked {
    markets: Vec<(String, Vec<RefBid>, plem::market::MarketOutcome)>,
}

fn c1_oracle(seed: u64, checked: &mut Checked) -> Check {
    let t0 = Instant::now();
    let models = [PeerModel::Mutual, PeerModel::Mutual, PeerModel::Nearest, PeerModel::Mutual, PeerModel::Mutual, PeerModel::Random];
    let mut count = 0;
    let mut ties = 0;
    for bits in [32u32, 64] {
        for (n, markets) in [(10usize, 50u64), (40, 35), (100, 15)] {
            let base = ScenarioSpec { users: n, bits, peers: 3, seed: seed ^ (n as u64) << 8 ^ bits as u64, ..Default::default() };
            let mut s = Scenario::build(&base).map_err(|e| e.to_string())?;
            for t in 0..markets {
                let spec = ScenarioSpec { model: models[t as usize % models.len()], ..base.clone() };
                s.replan(&spec, base.seed.wrapping_add(1 + t)).map_err(|e| e.to_string())?;
                let label = format!("l={bits} N={n} #{t}");
                let run = run_market_local(&mut s.pop, &s.plan, &opts(base.seed.wrapping_mul(1000).wrapping_add(t)))
                    .map_err(|e| format!("{label}: {e}"))?;
                let bids = s.reference_bids();
                check_oracle(&bids, &run.outcome).map_err(|e| format!("{label}: {e}"))?;
                let mut prices: Vec<u64> = bids.iter().map(|b| b.price).collect();
                prices.sort_unstable();
                if prices.windows(2).any(|w| w[0] == w[1]) {
                    ties += 1;
                }
                checked.markets.push((label, bids, run.outcome));
                count += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(count >= 200, format!("only {count} markets"))?;
    ensure(secs < 600.0, format!("{count} markets took {secs:.0}s"))?;
    Ok(format!("{count} markets bit-exact ({ties} with price ties) in {secs:.0}s"))
}

fn c2_constants() -> Check {
    let f = PrimeField::for_input_bits(64).map_err(|e| e.to_string())?;
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let mut notes = Vec::new();
    for m in [1usize, 100, 1000] {
        let dealt: Vec<_> = (0..m).map(|k| share(&f, f.from_u64(k as u64), &mut rng)).collect();
        let out = run3(f, 20 + m as u64, |p| {
            let col = dealt.iter().map(|s| s[p.id()]).collect();
            p.meter.begin("rand", true);
            p.rand(m);
            p.meter.begin("shuffle", true);
            p.shuffle(&SharedVector::from_fields(vec![col]))?;
            p.meter.begin("mul", true);
            let x: Vec<_> = dealt.iter().map(|s| s[p.id()]).collect();
            p.mul(&x, &x)?;
            Ok(p.meter.phases())
        })
        .map_err(|e| e.to_string())?;
        let all: Vec<Vec<PhaseStats>> = out.to_vec();
        let per_elem = f.byte_width() as u64;
        let summed = sum_servers(&all);
        let shuffle = Expectation { payload_bytes_out: Some(6 * m as u64 * per_elem), ..Expectation::shuffle_total("shuffle", m as u64, 1) };
        meter_assert(&summed, &[shuffle, Expectation::silent("rand")]).map_err(|v| format!("m={m}: {}", v[0]))?;
        for s in &all {
            let mul = Expectation { payload_bytes_out: Some(m as u64 * per_elem), ..Expectation::mul_batch("mul", m as u64) };
            meter_assert(s, &[mul]).map_err(|v| format!("m={m}: {}", v[0]))?;
        }
        notes.push(format!("m={m}"));
    }
    Ok(format!("shuffle moves 6m, mul sends m per server, rand silent ({})", notes.join(", ")))
}

fn honest_item(rng: &mut ChaCha12Rng) -> BatchItem {
    let mut kp = keygen(rng);
    let n = kp.commit(rng);
    let e = random_nonzero_scalar(rng);
    let s = kp.respond(&n, &e).expect("fresh nonce");
    BatchItem { r: n.commitment, p: kp.public, e, s }
}

fn tamper(it: &BatchItem, coord: usize, rng: &mut ChaCha12Rng) -> BatchItem {
    let d = random_nonzero_scalar(rng);
    let mut t = *it;
    match coord {
        0 => t.r += mul_g(&d),
        1 => t.p += mul_g(&d),
        2 => t.e += d,
        _ => t.s += d,
    }
    t
}

fn shared(items: &[BatchItem], rng: &mut ChaCha12Rng) -> Vec<[SharedBatchItem; 3]> {
    items
        .iter()
        .map(|it| {
            let r = share_point(&it.r, rng);
            let id = share_point(&it.p, rng);
            [0, 1, 2].map(|i| SharedBatchItem { r: r[i], id: id[i], e: it.e, s: it.s })
        })
        .collect()
}

fn c3_schnorr(seed: u64) -> Check {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 3);
    let honest: Vec<BatchItem> = (0..1000).map(|_| honest_item(&mut rng)).collect();
    let single = honest.iter().filter(|it| verify_single(&it.p, &it.r, &it.e, &it.s)).count();
    ensure(single == 1000, format!("single accepted {single}/1000"))?;
    for w in [BatchWidth::Short128, BatchWidth::Full] {
        let ok = honest.chunks(100).filter(|c| verify_batch(c, w, &mut rng)).count();
        ensure(ok == 10, format!("batch t=100 ({w:?}) accepted {ok}/10"))?;
    }
    // tampered copies: one coordinate of one item per batch of ten
    let mut bad_batches = Vec::new();
    for t in 0..1000 {
        let mut batch: Vec<BatchItem> = honest[(t * 10) % 1000..(t * 10) % 1000 + 10].to_vec();
        let k = rng.gen_range(0..10);
        batch[k] = tamper(&batch[k], t % 4, &mut rng);
        let it = batch[k];
        ensure(!verify_single(&it.p, &it.r, &it.e, &it.s), format!("single accepted tampering {t}"))?;
        ensure(!verify_batch(&batch, BatchWidth::Short128, &mut rng), format!("batch accepted tampering {t}"))?;
        bad_batches.push(batch);
    }
    let f = PrimeField::for_input_bits(32).map_err(|e| e.to_string())?;
    let good_sh = shared(&honest, &mut rng);
    let bad_sh: Vec<Vec<[SharedBatchItem; 3]>> = bad_batches.iter().map(|b| shared(b, &mut rng)).collect();
    let sizes = [1usize, 10, 100, 1000];
    let out = run3(f, seed ^ 33, |p| {
        let i = p.id();
        let mut rounds = Vec::new();
        let mut honest_ok = 0;
        // MPC completeness: ten batches of a hundred
        for c in good_sh.chunks(100) {
            let items: Vec<_> = c.iter().map(|s| s[i]).collect();
            let (_, seed) = p.joint_challenges(0)?;
            let a = batch_scalars(seed, items.len(), BatchWidth::Short128);
            honest_ok += p.mpc_verify_batch(&items, &a)? as usize;
        }
        for &n in &sizes {
            let items: Vec<_> = good_sh[..n].iter().map(|s| s[i]).collect();
            let a = batch_scalars([n as u8; 32], n, BatchWidth::Short128);
            let r0 = p.rounds();
            let before = p.meter.totals();
            let ok = p.mpc_verify_batch(&items, &a)?;
            let after = p.meter.totals();
            rounds.push((n, p.rounds() - r0, after.point_elems_out - before.point_elems_out, ok));
        }
        let mut rejected = 0;
        for b in &bad_sh {
            let items: Vec<_> = b.iter().map(|s| s[i]).collect();
            let (_, seed) = p.joint_challenges(0)?;
            let a = batch_scalars(seed, items.len(), BatchWidth::Short128);
            rejected += !p.mpc_verify_batch(&items, &a)? as usize;
        }
        Ok((honest_ok, rounds, rejected))
    })
    .map_err(|e| e.to_string())?;
    for (i, (ok, rounds, rejected)) in out.iter().enumerate() {
        ensure(*ok == 10, format!("server {i}: MPC batch accepted {ok}/10 honest batches"))?;
        ensure(*rejected == 1000, format!("server {i}: MPC batch rejected {rejected}/1000 tamperings"))?;
        for (n, r, pts, acc) in rounds {
            ensure(*acc, format!("MPC batch of {n} rejected"))?;
            ensure(*r == 1 && *pts == 1, format!("MPC batch of {n}: {r} rounds, {pts} points sent"))?;
        }
    }
    Ok("1000/1000 honest accepted (single, t=100 batch, MPC batch); 1000/1000 tamperings rejected by each; MPC batch opens once for t in {1,10,100,1000}".into())
}

fn alternating(n: usize, rng: &mut ChaCha12Rng) -> Vec<BidRecord> {
    let g = SyntheticBids::default();
    (0..n)
        .map(|u| BidRecord {
            user: format!("m{u}"),
            side: if u % 2 == 0 { Side::Seller } else { Side::Buyer },
            volume: rng.gen_range(g.volume.0..=g.volume.1),
            price: rng.gen_range(g.price.0..=g.price.1),
        })
        .collect()
}

fn phase(r: &MarketRun, name: &str) -> u64 {
    r.metering.phase(name).map(|p| p.rounds).unwrap_or(0)
}

fn c4_scaling(seed: u64, checked: &mut Checked) -> Check {
    let mut pts = Vec::new();
    for n in [40usize, 80, 160] {
        let spec = ScenarioSpec { users: n, bits: 64, model: PeerModel::Mutual, seed: seed ^ 4 ^ n as u64, ..Default::default() };
        let mut s = Scenario::build(&spec).map_err(|e| e.to_string())?;
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
        s.plan_records(&spec, alternating(n, &mut rng), spec.seed).map_err(|e| e.to_string())?;
        let run = run_market_local(&mut s.pop, &s.plan, &opts(spec.seed)).map_err(|e| e.to_string())?;
        let bids = s.reference_bids();
        check_oracle(&bids, &run.outcome).map_err(|e| format!("N={n}: {e}"))?;
        let x = (run.metering.sellers * spec.peers) as f64;
        let y = (phase(&run, "mappings") + phase(&run, "allocation")) as f64;
        checked.markets.push((format!("scaling N={n}"), bids, run.outcome));
        pts.push((n, x, y));
    }
    let s1 = (pts[1].2 - pts[0].2) / (pts[1].1 - pts[0].1);
    let s2 = (pts[2].2 - pts[1].2) / (pts[2].1 - pts[1].1);
    let ratio = s2 / s1;
    ensure((ratio - 1.0).abs() <= 0.25, format!("slope ratio {ratio:.3} (slopes {s1:.2}, {s2:.2})"))?;

    // communication dominance under 10 ms round trips
    let n = 40;
    let spec = ScenarioSpec { users: n, seed: seed ^ 44, ..Default::default() };
    let mut s = Scenario::build(&spec).map_err(|e| e.to_string())?;
    let mut o = opts(spec.seed);
    o.engine.reveal = false;
    o.rtt = Duration::from_millis(10);
    let run = run_market_local(&mut s.pop, &s.plan, &o).map_err(|e| e.to_string())?;
    let clearance = ["price", "sort", "mappings", "allocation", "distribute", "billing"];
    let share = run
        .servers
        .iter()
        .map(|srv| {
            let (cpu, wall) = srv
                .phases
                .iter()
                .filter(|p| clearance.contains(&p.name.as_str()))
                .fold((0.0, 0.0), |(c, w), p| (c + p.cpu_secs, w + p.wall_secs));
            cpu / wall
        })
        .fold(0.0, f64::max);
    ensure(share < 0.5, format!("CPU share {:.1}% at 10 ms RTT", 100.0 * share))?;
    let rows: Vec<String> = pts.iter().map(|(n, x, y)| format!("N={n}: {y}/{x} = {:.2}", y / x)).collect();
    Ok(format!(
        "rounds per seller slot {}; slope ratio {ratio:.3}; CPU share {:.1}% at 10 ms RTT",
        rows.join(", "),
        100.0 * share
    ))
}

fn c5_conservation(checked: &Checked) -> Check {
    ensure(!checked.markets.is_empty(), "no markets recorded")?;
    let mut traded = 0;
    for (label, bids, out) in &checked.markets {
        check_invariants(bids, out).map_err(|e| format!("{label}: {e}"))?;
        if out.totals.values().any(|&v| v > 0) {
            traded += 1;
        }
    }
    Ok(format!("{} markets ({traded} with trades): sold = bought, allocations within volume, trades only between mutual peers", checked.markets.len()))
}

/// Reduced-system angles by Gauss-Jordan elimination on the dense matrix.
fn dense_ptdf(m: &NetworkModel) -> Vec<Vec<f64>> {
    let n = m.buses.len();
    let pos = |b: u32| m.buses.iter().position(|x| *x == b).unwrap();
    let s = pos(m.slack);
    let keep: Vec<usize> = (0..n).filter(|&k| k != s).collect();
    let r = keep.len();
    let mut b = vec![vec![0.0; n]; n];
    for l in &m.lines {
        let (f, t, y) = (pos(l.from), pos(l.to), 1.0 / l.reactance);
        b[f][f] += y;
        b[t][t] += y;
        b[f][t] -= y;
        b[t][f] -= y;
    }
    // [B_red | I] -> [I | B_red^-1]
    let mut a: Vec<Vec<f64>> = keep
        .iter()
        .enumerate()
        .map(|(ri, &i)| {
            let mut row: Vec<f64> = keep.iter().map(|&j| b[i][j]).collect();
            row.extend((0..r).map(|c| if c == ri { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..r {
        let p = (c..r).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        let d = a[c][c];
        a[c].iter_mut().for_each(|v| *v /= d);
        for row in 0..r {
            if row != c {
                let k = a[row][c];
                let pivot = a[c].clone();
                a[row].iter_mut().zip(&pivot).for_each(|(v, p)| *v -= k * p);
            }
        }
    }
    let theta = |bus: usize, inj: usize| -> f64 {
        match (keep.iter().position(|&k| k == bus), keep.iter().position(|&k| k == inj)) {
            (Some(i), Some(j)) => a[i][r + j],
            _ => 0.0,
        }
    };
    m.lines
        .iter()
        .map(|l| (0..n).map(|k| (theta(pos(l.from), k) - theta(pos(l.to), k)) / l.reactance).collect())
        .collect()
}

fn c6_dso(seed: u64) -> Check {
    let f = PrimeField::for_input_bits(64).map_err(|e| e.to_string())?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 6);
    let mut counts = Vec::new();
    for n in [2usize, 10, 40] {
        let model = NetworkModel::synthetic_radial(8, n, &mut rng);
        let fees = FeeTable::build(&model, 0.02, 1000).map_err(|e| e.to_string())?;
        let keys = [ServerKey::random(&mut rng), ServerKey::random(&mut rng), ServerKey::random(&mut rng)];
        let sk = DsoSigningKey::generate(&mut rng).map_err(|e| e.to_string())?;
        let mut dso = Dso::new(f, fees, Registry::in_memory(), sk, keys.clone(), rng.gen());
        let ids: Vec<ProjectivePoint> = (0..n).map(|_| keygen(&mut rng).public).collect();
        for (u, id) in ids.iter().enumerate() {
            dso.register(&format!("m{u}"), &encode_point(id)).map_err(|e| e.to_string())?;
        }
        let newest = format!("m{}", n - 1);
        let iss = dso.issue_all(&newest).map_err(|e| e.to_string())?;
        ensure(iss.signed_shares() == 6 * (n - 1), format!("N={n}: {} signed shares", iss.signed_shares()))?;
        let pk = dso.public_key();
        for (owner, b) in &iss.bundles {
            ensure(b.shares.iter().all(|s| s.verify(&pk)), format!("N={n}: signature of {owner} fails"))?;
            let pid: Vec<_> = b.shares.iter().zip(&keys).map(|(s, k)| s.decrypt_peer(k).ok()).collect();
            let pid = open_point_shares(&[pid[0], pid[1], pid[2]]).map_err(|e| e.to_string())?;
            let peer = ids.iter().position(|p| *p == pid).ok_or("peer id not registered")?;
            let want = dso.fees().get(owner, &format!("m{peer}")).map_err(|e| e.to_string())?;
            ensure(b.fee(&f).map_err(|e| e.to_string())? == want, format!("N={n}: fee of {owner} does not recombine"))?;
        }
        counts.push(format!("N={n}: {}", iss.signed_shares()));
    }
    let model = NetworkModel {
        buses: vec![1, 2, 3, 4],
        slack: 1,
        lines: [(1, 2, 0.1), (2, 3, 0.2), (3, 4, 0.15), (4, 1, 0.25), (1, 3, 0.3)]
            .iter()
            .map(|&(from, to, reactance)| Line { from, to, reactance })
            .collect(),
        users: Default::default(),
    };
    let got = compute_ptdf(&model).map_err(|e| e.to_string())?;
    let want = dense_ptdf(&model);
    let mut worst = 0.0f64;
    for (li, row) in want.iter().enumerate() {
        for (k, w) in row.iter().enumerate() {
            worst = worst.max((got.phi[(li, k)] - w).abs());
        }
    }
    ensure(worst < 1e-9, format!("4-bus PTDF off by {worst:e}"))?;
    Ok(format!("signed shares {} = 6(N-1), all verify, fees recombine; 4-bus PTDF max |dphi| = {worst:.1e}", counts.join(", ")))
}

fn c7_desk_scale(seed: u64) -> Check {
    let dir = std::env::temp_dir().join(format!("plem-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let path = dir.join("report-1000.json");
    let cfg = MarketConfig {
        users: 1000,
        bits: 64,
        peers: 3,
        seed,
        test_mode: true,
        timeout_secs: 3600,
        report: Some(path.clone()),
        ..Default::default()
    };
    let t0 = Instant::now();
    let report = run_market(&cfg).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let m = &json["metering"];
    let names: Vec<&str> = m["phases"].as_array().ok_or("no phases")?.iter().filter_map(|p| p["name"].as_str()).collect();
    for p in PHASES {
        ensure(names.contains(&p), format!("phase {p} missing"))?;
    }
    for key in ["rounds", "bytes_out", "wall_secs", "cpu_secs"] {
        ensure(m["online"][key].is_number() && m["offline"][key].is_number(), format!("{key} missing in online/offline split"))?;
    }
    ensure(m["users"] == 1000, "user count")?;
    ensure(m["online"]["rounds"].as_u64().unwrap_or(0) > 0, "no online rounds")?;
    ensure(json["bills"].as_object().is_some_and(|b| !b.is_empty()), "no bills")?;
    let oracle = report.oracle.clone().ok_or("no oracle check")?;
    ensure(oracle.matches, format!("oracle mismatch: {:?}", oracle.detail))?;
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!(
        "N=1000 cleared in {secs:.0}s: {} online rounds, {:.1} MB sent, {} identity tests, oracle match",
        report.metering.online.rounds,
        (report.metering.online.bytes_out + report.metering.offline.bytes_out) as f64 / 1e6,
        report.metering.mapping_tests
    ))
}

fn main() {
    let seed = env_seed(20240601);
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |k: u32| wanted.is_empty() || wanted.contains(&k);
    let mut checked = Checked::default();
    let mut verdicts: Vec<(u32, &str, Check, f64)> = Vec::new();
    let mut run = |k: u32, name: &'static str, f: &mut dyn FnMut() -> Check| {
        if !on(k) {
            return;
        }
        let t0 = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or("panic".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        let (tag, msg) = match &r {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        println!("[{tag}] {k}. {name}: {msg} ({secs:.1}s)");
        verdicts.push((k, name, r, secs));
    };
    run(1, "oracle equivalence", &mut || c1_oracle(seed, &mut checked));
    run(2, "communication constants", &mut c2_constants);
    run(3, "Schnorr suite", &mut || c3_schnorr(seed));
    run(4, "round scaling", &mut || c4_scaling(seed, &mut checked));
    run(5, "conservation and bounds", &mut || c5_conservation(&checked));
    run(6, "DSO issuance and PTDF", &mut || c6_dso(seed));
    run(7, "desk-scale end-to-end", &mut || c7_desk_scale(seed));
    let failed = verdicts.iter().filter(|v| v.2.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
