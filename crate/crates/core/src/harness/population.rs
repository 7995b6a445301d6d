//! Registered users with their fee tuples, and per-market bid plans.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::client::{select_peers, BidRecord, Client, Side};
use crate::dso::{Dso, DsoRequest, DsoResponse, DsoSigningKey, FeeTable, IssuanceMode, NetworkModel, Registry, ServerKey};
use crate::ec::{encode_point, POINT_LEN};
use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::harness::config::PeerModel;
use crate::market::RefBid;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IssuanceStats {
    pub signed_shares: u64,
    pub secs: f64,
}

/// The grid operator and every registered client.
pub struct Population {
    pub field: PrimeField,
    pub dso: Dso,
    pub server_keys: [ServerKey; 3],
    pub clients: Vec<Client>,
    /// Peer meter of each tuple a client holds, parallel to its tuple list.
    peer_meters: Vec<Vec<String>>,
    index: HashMap<String, usize>,
    mode: IssuanceMode,
    pub issuance: IssuanceStats,
}

fn expect_batch(resp: DsoResponse) -> Result<crate::dso::Issuance> {
    match resp {
        DsoResponse::TupleBatch(i) => Ok(i),
        DsoResponse::Error(e) => Err(Error::TransportFailure(format!("issuance refused: {e}"))),
        other => Err(Error::Malformed(format!("unexpected issuance reply {other:?}"))),
    }
}

impl Population {
    /// Registers one client per meter, in order. With full issuance every
    /// registration also issues tuples towards all earlier users.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        field: PrimeField,
        scale: u64,
        model: &NetworkModel,
        unit_fee: f64,
        meters: &[String],
        mode: IssuanceMode,
        sk: DsoSigningKey,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let server_keys = [ServerKey::random(&mut rng), ServerKey::random(&mut rng), ServerKey::random(&mut rng)];
        Self::with_keys(field, scale, model, unit_fee, meters, mode, sk, server_keys, rng.next_u64())
    }

    /// As [`Population::build`], with server keys provisioned elsewhere.
    #[allow(clippy::too_many_arguments)]
    pub fn with_keys(
        field: PrimeField,
        scale: u64,
        model: &NetworkModel,
        unit_fee: f64,
        meters: &[String],
        mode: IssuanceMode,
        sk: DsoSigningKey,
        server_keys: [ServerKey; 3],
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let fees = FeeTable::build(model, unit_fee, scale)?;
        let dso = Dso::new(field, fees, Registry::in_memory(), sk, server_keys.clone(), rng.next_u64());
        let mut pop = Population {
            field,
            dso,
            server_keys,
            clients: Vec::with_capacity(meters.len()),
            peer_meters: Vec::with_capacity(meters.len()),
            index: HashMap::new(),
            mode,
            issuance: IssuanceStats::default(),
        };
        for m in meters {
            pop.add_user(m, &mut rng)?;
        }
        Ok(pop)
    }

    pub fn add_user<R: RngCore + CryptoRng>(&mut self, meter: &str, rng: &mut R) -> Result<usize> {
        if self.index.contains_key(meter) {
            return Err(Error::DuplicateIdentity);
        }
        let mut c = Client::new(meter, rng);
        let resp = self.dso.serve(&c.register_request());
        c.on_register(&resp)?;
        let u = self.clients.len();
        self.clients.push(c);
        self.peer_meters.push(Vec::new());
        self.index.insert(meter.to_string(), u);
        if self.mode == IssuanceMode::Full {
            let earlier: Vec<String> = self.dso.registry().meters().iter().filter(|m| m.as_str() != meter).cloned().collect();
            let t0 = Instant::now();
            let iss = expect_batch(self.dso.serve(&DsoRequest::IssueTuples { meter: meter.to_string(), peers: None }))?;
            self.issuance.secs += t0.elapsed().as_secs_f64();
            self.issuance.signed_shares += iss.signed_shares() as u64;
            // bundles come as (meter -> p, p -> meter) for each earlier p
            for (pair, p) in iss.bundles.chunks(2).zip(&earlier) {
                for ((owner, b), peer) in pair.iter().zip([p.as_str(), meter]) {
                    if b.peer != self.dso.handle(owner, peer) {
                        return Err(Error::Malformed("issuance order".into()));
                    }
                    let o = self.index[owner];
                    self.clients[o].receive_bundle(b.clone());
                    self.peer_meters[o].push(peer.to_string());
                }
            }
        }
        Ok(u)
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn user(&self, meter: &str) -> Option<usize> {
        self.index.get(meter).copied()
    }

    pub fn meters(&self) -> Vec<String> {
        self.clients.iter().map(|c| c.meter.clone()).collect()
    }

    /// Identity encoding to meter, for the recipients of results.
    pub fn directory(&self) -> HashMap<[u8; POINT_LEN], String> {
        self.clients.iter().map(|c| (encode_point(&c.id()), c.meter.clone())).collect()
    }

    pub fn peer_meters(&self, user: usize) -> &[String] {
        &self.peer_meters[user]
    }

    /// Tuple indices of `user` towards `peers`, requesting missing tuples
    /// when issuance is on demand.
    pub fn ensure_tuples(&mut self, user: usize, peers: &[String]) -> Result<Vec<usize>> {
        let meter = self.clients[user].meter.clone();
        let missing: Vec<&String> = peers.iter().filter(|p| !self.peer_meters[user].contains(p)).collect();
        if !missing.is_empty() {
            if self.mode == IssuanceMode::Full {
                return Err(Error::UnknownPeer(missing[0].clone()));
            }
            let handles = missing.iter().map(|p| self.dso.handle(&meter, p)).collect();
            let t0 = Instant::now();
            let iss = expect_batch(self.dso.serve(&DsoRequest::IssueTuples { meter: meter.clone(), peers: Some(handles) }))?;
            self.issuance.secs += t0.elapsed().as_secs_f64();
            self.issuance.signed_shares += iss.signed_shares() as u64;
            for ((_, b), p) in iss.bundles.into_iter().zip(missing) {
                self.clients[user].receive_bundle(b);
                self.peer_meters[user].push(p.clone());
            }
        }
        Ok(peers.iter().map(|p| self.peer_meters[user].iter().position(|x| x == p).expect("tuple present")).collect())
    }

    /// The `c` cheapest peers of `user` as the client would pick them.
    fn nearest(&self, user: usize, c: usize) -> Result<Vec<String>> {
        let meter = &self.clients[user].meter;
        match self.mode {
            IssuanceMode::Full => {
                let idx = self.clients[user].nearest(&self.field, c)?;
                Ok(idx.into_iter().map(|i| self.peer_meters[user][i].clone()).collect())
            }
            IssuanceMode::OnDemand => {
                // quotes come in registry order
                let others: Vec<&String> = self.dso.registry().meters().iter().filter(|m| *m != meter).collect();
                let quote = self.dso.quote_fees(meter)?;
                let fees: Vec<u64> = quote.iter().map(|q| q.1).collect();
                Ok(select_peers(&fees, c)?.into_iter().map(|i| others[i].clone()).collect())
            }
        }
    }
}

/// One user's bid for a market, with the tuples it selected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannedBid {
    pub user: usize,
    pub side: Side,
    pub supplier: u32,
    pub volume: u64,
    pub price: u64,
    /// Indices into the client's tuples.
    pub selected: Vec<usize>,
    /// `(peer meter, fee)` per selected tuple.
    pub peers: Vec<(String, u64)>,
}

/// Chooses peers for every bid and makes sure the tuples exist.
pub fn plan_market<R: Rng + ?Sized>(
    pop: &mut Population,
    bids: &[BidRecord],
    suppliers: &[u32],
    model: PeerModel,
    peers: usize,
    rng: &mut R,
) -> Result<Vec<PlannedBid>> {
    if pop.len() < 2 {
        return Err(Error::ConfigInvalid("a market needs at least two registered users".into()));
    }
    if suppliers.len() != bids.len() {
        return Err(Error::ConfigInvalid("one supplier per bid".into()));
    }
    let c = peers.min(pop.len() - 1);
    let users: Vec<usize> = bids
        .iter()
        .map(|b| pop.user(&b.user).ok_or_else(|| Error::UnknownPeer(b.user.clone())))
        .collect::<Result<_>>()?;
    let sellers: Vec<usize> = (0..bids.len()).filter(|&i| bids[i].side == Side::Seller).collect();
    let buyers: Vec<usize> = (0..bids.len()).filter(|&i| bids[i].side == Side::Buyer).collect();
    let mut out = Vec::with_capacity(bids.len());
    for (pos, b) in bids.iter().enumerate() {
        let u = users[pos];
        let want: Vec<String> = match model {
            PeerModel::Nearest => pop.nearest(u, c)?,
            PeerModel::Mutual => {
                let (own, other) = if b.side == Side::Seller { (&sellers, &buyers) } else { (&buyers, &sellers) };
                if other.is_empty() {
                    pop.nearest(u, c)?
                } else {
                    let rank = own.iter().position(|&x| x == pos).expect("bid on its side");
                    let n = other.len();
                    let mut v: Vec<String> = Vec::new();
                    for t in 0..c.min(n) {
                        let k = if b.side == Side::Seller { (rank + t) % n } else { (rank + n * c - t) % n };
                        let m = &bids[other[k]].user;
                        if !v.contains(m) {
                            v.push(m.clone());
                        }
                    }
                    v
                }
            }
            PeerModel::Random => {
                let others: Vec<String> = pop.meters().into_iter().filter(|m| *m != b.user).collect();
                sample(rng, others.len(), c).into_iter().map(|i| others[i].clone()).collect()
            }
        };
        let selected = pop.ensure_tuples(u, &want)?;
        let meter = &pop.clients[u].meter;
        let peers = want
            .iter()
            .map(|p| Ok((p.clone(), pop.dso.fees().get(meter, p)?)))
            .collect::<Result<Vec<_>>>()?;
        out.push(PlannedBid { user: u, side: b.side, supplier: suppliers[pos], volume: b.volume, price: b.price, selected, peers });
    }
    Ok(out)
}

/// The same market in the clear.
pub fn reference_bids(pop: &Population, plan: &[PlannedBid]) -> Vec<RefBid> {
    plan.iter()
        .map(|p| RefBid {
            meter: pop.clients[p.user].meter.clone(),
            side: p.side,
            supplier: p.supplier,
            volume: p.volume,
            price: p.price,
            peers: p.peers.clone(),
        })
        .collect()
}
