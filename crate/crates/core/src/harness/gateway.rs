//! The client and supplier side of a market session, multiplexed over one
//! transport endpoint: submits every bid, answers challenges and collects
//! totals and bills.

use std::collections::{BTreeMap, HashMap};

use rand::{CryptoRng, RngCore};

use crate::client::{encode_bid_shares, BidShare, Client};
use crate::ec::{encode_point, open_point_shares, Scalar, POINT_LEN};
use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::harness::population::{PlannedBid, Population};
use crate::market::wire::{decode_bills, decode_price, decode_totals, decode_user_scalars, encode_user_scalars};
use crate::market::{BillLine, MarketOutcome};
use crate::net::frame::{Frame, PayloadKind, SessionId};
use crate::net::transport::Transport;
use crate::share::open_shares;

/// Endpoint index this side uses as sender.
const ME: u8 = 3;

struct Link<'a> {
    net: &'a mut dyn Transport,
    session: SessionId,
    bytes_out: u64,
    bytes_in: u64,
}

impl Link<'_> {
    fn send(&mut self, to: usize, kind: PayloadKind, payload: Vec<u8>) -> Result<()> {
        let f = Frame::new(self.session, 0, ME, kind, payload);
        self.bytes_out += f.encoded_len() as u64;
        self.net.send(to, &f)
    }

    fn recv(&mut self, from: usize, kind: PayloadKind) -> Result<Vec<u8>> {
        let f = self.net.recv(from)?;
        self.bytes_in += f.encoded_len() as u64;
        if f.session != self.session {
            return Err(Error::TransportFailure(format!("foreign session from server {from}")));
        }
        if f.kind == PayloadKind::Error {
            return Err(Error::TransportFailure(String::from_utf8_lossy(&f.payload).into_owned()));
        }
        if f.kind != kind {
            return Err(Error::Malformed(format!("expected {kind:?} from server {from}, got {:?}", f.kind)));
        }
        Ok(f.payload)
    }

    fn recv_all(&mut self, kind: PayloadKind) -> Result<[Vec<u8>; 3]> {
        Ok([self.recv(0, kind)?, self.recv(1, kind)?, self.recv(2, kind)?])
    }
}

/// What the client side saw of one session.
#[derive(Clone, Debug, Default)]
pub struct GatewayResult {
    pub outcome: MarketOutcome,
    /// Users whose three challenge copies disagreed.
    pub refused: Vec<String>,
    /// Recipients of totals in the order the rows arrived.
    pub rows: Vec<String>,
    pub bytes_out: u64,
    pub bytes_in: u64,
}

fn open_triple(f: &PrimeField, s: [crate::session::Share; 3]) -> Result<crate::field::FieldElem> {
    open_shares(f, &[Some(s[0]), Some(s[1]), Some(s[2])])
}

/// Sees each client right after it built its bid and may rewrite the shares;
/// used to play misbehaving clients.
pub type BidHook = dyn Fn(&PlannedBid, &Client, &mut [BidShare; 3]) + Send + Sync;

/// Runs the client and supplier roles of one market against servers `0..3`.
pub fn run_gateway<R: RngCore + CryptoRng>(
    net: &mut dyn Transport,
    session: SessionId,
    pop: &mut Population,
    plan: &[PlannedBid],
    hook: Option<&BidHook>,
    rng: &mut R,
) -> Result<GatewayResult> {
    let f = pop.field;
    let mut link = Link { net, session, bytes_out: 0, bytes_in: 0 };
    let mut per_server: [Vec<BidShare>; 3] = Default::default();
    for p in plan {
        let mut parts = pop.clients[p.user].build_bid(&f, p.user as u32, p.side, p.supplier, p.volume, p.price, &p.selected, rng)?;
        if let Some(h) = hook {
            h(p, &pop.clients[p.user], &mut parts);
        }
        for (i, s) in parts.into_iter().enumerate() {
            per_server[i].push(s);
        }
    }
    for (i, bids) in per_server.iter().enumerate() {
        link.send(i, PayloadKind::Bundle, encode_bid_shares(&f, bids))?;
    }

    let ch = link.recv_all(PayloadKind::Challenge)?;
    let ch: Vec<Vec<(u32, Scalar)>> = ch.iter().map(|c| decode_user_scalars(c)).collect::<Result<_>>()?;
    if ch[1].len() != ch[0].len() || ch[2].len() != ch[0].len() {
        return Err(Error::InconsistentShares("servers challenged different users".into()));
    }
    let mut result = GatewayResult::default();
    let mut responses = Vec::with_capacity(ch[0].len());
    for r in 0..ch[0].len() {
        let user = ch[0][r].0;
        if ch[1][r].0 != user || ch[2][r].0 != user {
            return Err(Error::InconsistentShares("servers challenged different users".into()));
        }
        let c = pop.clients.get_mut(user as usize).ok_or_else(|| Error::Malformed(format!("challenge for user {user}")))?;
        let s = match c.answer_challenge(&[ch[0][r].1, ch[1][r].1, ch[2][r].1]) {
            Ok(s) => s,
            Err(_) => {
                result.refused.push(c.meter.clone());
                Scalar::ZERO
            }
        };
        responses.push((user, s));
    }
    let payload = encode_user_scalars(&responses);
    for i in 0..3 {
        link.send(i, PayloadKind::Response, payload.clone())?;
    }

    let prices = link.recv_all(PayloadKind::Price)?;
    let p_star = decode_price(&prices[0])?;
    if prices.iter().any(|p| decode_price(p).ok() != Some(p_star)) {
        return Err(Error::InconsistentShares("servers published different prices".into()));
    }

    let dir: HashMap<[u8; POINT_LEN], String> = pop.directory();
    let recipient = |id: &[u8; POINT_LEN]| dir.get(id).cloned().ok_or(Error::UnknownRecipient);

    let totals = link.recv_all(PayloadKind::Total)?;
    let totals: Vec<_> = totals.iter().map(|t| decode_totals(&f, t)).collect::<Result<_>>()?;
    if totals.iter().any(|t| t.len() != totals[0].len()) {
        return Err(Error::InconsistentShares("total lists differ in length".into()));
    }
    let mut out = MarketOutcome { p_star, ..Default::default() };
    for r in 0..totals[0].len() {
        let id = totals[0][r].0;
        if totals[1][r].0 != id || totals[2][r].0 != id {
            return Err(Error::InconsistentShares("opened identities differ".into()));
        }
        let v = open_triple(&f, [totals[0][r].1, totals[1][r].1, totals[2][r].1])?;
        let v = u64::try_from(v.value()).map_err(|_| Error::Malformed("total exceeds 64 bits".into()))?;
        let m = recipient(&id)?;
        result.rows.push(m.clone());
        if out.totals.insert(m, v).is_some() {
            return Err(Error::Malformed("two totals for one user".into()));
        }
    }

    let bills = link.recv_all(PayloadKind::Bill)?;
    let bills: Vec<_> = bills.iter().map(|b| decode_bills(&f, b)).collect::<Result<_>>()?;
    if bills.iter().any(|b| b.len() != bills[0].len()) {
        return Err(Error::InconsistentShares("bill lists differ in length".into()));
    }
    let mut lines: BTreeMap<u32, Vec<BillLine>> = BTreeMap::new();
    for r in 0..bills[0].len() {
        let row = [bills[0][r], bills[1][r], bills[2][r]];
        if row.iter().any(|x| x.supplier != row[0].supplier) {
            return Err(Error::InconsistentShares("bill rows name different suppliers".into()));
        }
        let id = open_point_shares(&[Some(row[0].id), Some(row[1].id), Some(row[2].id)])?;
        let meter = recipient(&encode_point(&id))?;
        let energy = f.to_signed(open_triple(&f, [row[0].energy, row[1].energy, row[2].energy])?);
        let network = f.to_signed(open_triple(&f, [row[0].network, row[1].network, row[2].network])?);
        lines.entry(row[0].supplier).or_default().push(BillLine { meter, energy, network });
    }
    for l in lines.values_mut() {
        l.sort();
    }
    out.bills = lines;
    out.excluded = plan
        .iter()
        .map(|p| pop.clients[p.user].meter.clone())
        .filter(|m| !out.totals.contains_key(m))
        .collect();
    result.outcome = out;
    result.bytes_out = link.bytes_out;
    result.bytes_in = link.bytes_in;
    Ok(result)
}
