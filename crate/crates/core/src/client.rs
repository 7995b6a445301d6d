//! The home energy management controller: identity, peer choice, bid sharing
//! and the prover side of the Schnorr round.

use std::path::Path;

use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::dso::{DsoRequest, DsoResponse, Issuance, SignedTupleShare, TupleBundle};
use crate::ec::{encode_point, open_point_shares, share_point, ProjectivePoint, Scalar, SharedPoint, POINT_LEN};
use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::identity::{keygen, Nonce, SchnorrKeyPair};
use crate::session::Share;
use crate::share::share;

/// Participation type `t_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buyer = 0,
    Seller = 1,
}

impl Side {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Side::Buyer),
            1 => Ok(Side::Seller),
            _ => Err(Error::Malformed(format!("participation type {v}"))),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "buyer" | "buy" | "consumer" => Ok(Side::Buyer),
            "1" | "seller" | "sell" | "prosumer" => Ok(Side::Seller),
            other => Err(Error::Malformed(format!("participation type {other:?}"))),
        }
    }
}

/// A bid in the clear, as held by the client before sharing.
#[derive(Clone, Debug)]
pub struct BidPlain {
    pub id: ProjectivePoint,
    pub supplier: u32,
    pub volume: u64,
    pub price: u64,
    pub side: Side,
    pub peers: Vec<TupleBundle>,
}

/// One server's part of a bid: shares of the bid fields, that server's tuple
/// shares, the clear participation type and a share of the commitment `R`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BidShare {
    pub user: u32,
    pub side: Side,
    pub id: SharedPoint,
    pub supplier: Share,
    pub volume: Share,
    pub price: Share,
    pub tuples: Vec<SignedTupleShare>,
    pub commitment: SharedPoint,
}

impl BidShare {
    /// `user u32 | side | id | R | supplier | volume | price | u16 count | tuples`.
    pub fn to_bytes(&self, f: &PrimeField) -> Vec<u8> {
        let mut out = self.user.to_le_bytes().to_vec();
        out.push(self.side as u8);
        out.extend_from_slice(&self.id.to_bytes());
        out.extend_from_slice(&self.commitment.to_bytes());
        for s in [self.supplier, self.volume, self.price] {
            f.encode_into(s.lo, &mut out);
            f.encode_into(s.hi, &mut out);
        }
        out.extend_from_slice(&(self.tuples.len() as u16).to_le_bytes());
        for t in &self.tuples {
            out.extend_from_slice(&t.to_bytes());
        }
        out
    }

    pub fn from_bytes(f: &PrimeField, b: &[u8]) -> Result<(Self, usize)> {
        let bad = || Error::Malformed("truncated bid share".into());
        let w = f.byte_width();
        let pair = 2 * POINT_LEN;
        let head = 5 + 2 * pair + 6 * w + 2;
        if b.len() < head {
            return Err(bad());
        }
        let user = u32::from_le_bytes(b[..4].try_into().unwrap());
        let side = Side::from_u8(b[4])?;
        let id = SharedPoint::from_bytes(&b[5..5 + pair])?;
        let commitment = SharedPoint::from_bytes(&b[5 + pair..5 + 2 * pair])?;
        let vals = f.decode_slice(&b[5 + 2 * pair..5 + 2 * pair + 6 * w])?;
        let n = u16::from_le_bytes(b[head - 2..head].try_into().unwrap()) as usize;
        let mut pos = head;
        let mut tuples = Vec::with_capacity(n);
        for _ in 0..n {
            let (t, used) = SignedTupleShare::from_bytes(b.get(pos..).ok_or_else(bad)?)?;
            tuples.push(t);
            pos += used;
        }
        Ok((
            BidShare {
                user,
                side,
                id,
                supplier: Share::new(vals[0], vals[1]),
                volume: Share::new(vals[2], vals[3]),
                price: Share::new(vals[4], vals[5]),
                tuples,
                commitment,
            },
            pos,
        ))
    }
}

pub fn encode_bid_shares(f: &PrimeField, bids: &[BidShare]) -> Vec<u8> {
    let mut out = (bids.len() as u32).to_le_bytes().to_vec();
    for b in bids {
        out.extend_from_slice(&b.to_bytes(f));
    }
    out
}

pub fn decode_bid_shares(f: &PrimeField, b: &[u8]) -> Result<Vec<BidShare>> {
    if b.len() < 4 {
        return Err(Error::Malformed("bid batch header".into()));
    }
    let n = u32::from_le_bytes(b[..4].try_into().unwrap()) as usize;
    let mut pos = 4;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let (s, used) = BidShare::from_bytes(f, &b[pos..])?;
        out.push(s);
        pos += used;
    }
    if pos != b.len() {
        return Err(Error::Malformed("trailing bytes after bid batch".into()));
    }
    Ok(out)
}

/// Indices of the `c` smallest fees, ties broken by position.
pub fn select_peers(fees: &[u64], c: usize) -> Result<Vec<usize>> {
    if c > fees.len() {
        return Err(Error::ConfigInvalid(format!("{c} peers requested, {} available", fees.len())));
    }
    let mut idx: Vec<usize> = (0..fees.len()).collect();
    idx.sort_by_key(|&i| (fees[i], i));
    idx.truncate(c);
    Ok(idx)
}

/// A simulated client. Holds the identity key, the tuples received from the
/// grid operator and at most one outstanding nonce.
#[derive(Debug)]
pub struct Client {
    pub meter: String,
    keys: SchnorrKeyPair,
    registered: bool,
    tuples: Vec<TupleBundle>,
    pending: Option<Nonce>,
}

impl Client {
    pub fn new<R: RngCore + CryptoRng + ?Sized>(meter: &str, rng: &mut R) -> Self {
        Client::with_keys(meter, keygen(rng))
    }

    pub fn with_keys(meter: &str, keys: SchnorrKeyPair) -> Self {
        Client { meter: meter.to_string(), keys, registered: false, tuples: Vec::new(), pending: None }
    }

    pub fn id(&self) -> ProjectivePoint {
        self.keys.public
    }

    pub fn keys(&self) -> &SchnorrKeyPair {
        &self.keys
    }

    /// Nonce of the bid awaiting its challenge.
    pub fn pending_nonce(&self) -> Option<&Nonce> {
        self.pending.as_ref()
    }

    pub fn is_registered(&self) -> bool {
        self.registered
    }

    pub fn register_request(&self) -> DsoRequest {
        DsoRequest::Register { meter: self.meter.clone(), id: encode_point(&self.keys.public).to_vec() }
    }

    pub fn on_register(&mut self, resp: &DsoResponse) -> Result<()> {
        match resp {
            DsoResponse::RegisterAck => {
                self.registered = true;
                Ok(())
            }
            DsoResponse::Error(e) => Err(Error::TransportFailure(format!("registration refused: {e}"))),
            other => Err(Error::Malformed(format!("unexpected reply to registration: {other:?}"))),
        }
    }

    /// Keeps the tuples addressed to this meter.
    pub fn receive_tuples(&mut self, issuance: &Issuance) {
        self.tuples.extend(issuance.for_meter(&self.meter).cloned());
    }

    pub fn receive_bundle(&mut self, b: TupleBundle) {
        self.tuples.push(b);
    }

    pub fn tuples(&self) -> &[TupleBundle] {
        &self.tuples
    }

    pub fn clear_tuples(&mut self) {
        self.tuples.clear();
    }

    /// Reconstructed fee of every held tuple, in arrival order.
    pub fn fees(&self, f: &PrimeField) -> Result<Vec<u64>> {
        self.tuples.iter().map(|t| t.fee(f)).collect()
    }

    /// The `c` cheapest peers.
    pub fn nearest(&self, f: &PrimeField, c: usize) -> Result<Vec<usize>> {
        select_peers(&self.fees(f)?, c)
    }

    /// Shares a bid for the tuples at `selected` and commits to a fresh nonce.
    /// Any earlier unanswered nonce is dropped.
    #[allow(clippy::too_many_arguments)]
    pub fn build_bid<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        f: &PrimeField,
        user: u32,
        side: Side,
        supplier: u32,
        volume: u64,
        price: u64,
        selected: &[usize],
        rng: &mut R,
    ) -> Result<[BidShare; 3]> {
        if !self.registered {
            return Err(Error::UnregisteredIdentity);
        }
        let limit = 1u128 << f.input_bits();
        if volume == 0 || volume as u128 >= limit || price as u128 >= limit || supplier as u128 >= limit {
            return Err(Error::Malformed(format!("bid outside the {}-bit input range", f.input_bits())));
        }
        if selected.is_empty() {
            return Err(Error::Malformed("no peers selected".into()));
        }
        let mut peers = Vec::with_capacity(selected.len());
        for &i in selected {
            let t = self.tuples.get(i).ok_or_else(|| Error::UnknownPeer(format!("tuple index {i}")))?;
            let ids = [t.shares[0].id_share()?, t.shares[1].id_share()?, t.shares[2].id_share()?];
            if open_point_shares(&[Some(ids[0]), Some(ids[1]), Some(ids[2])])? != self.keys.public {
                return Err(Error::UnregisteredIdentity);
            }
            peers.push(t.clone());
        }
        let plain = BidPlain { id: self.keys.public, supplier, volume, price, side, peers };
        let nonce = self.keys.commit(rng);
        let out = share_bid(f, user, &plain, &nonce.commitment, rng);
        self.pending = Some(nonce);
        Ok(out)
    }

    /// Answers the servers' challenge. All three copies must agree.
    pub fn answer_challenge(&mut self, copies: &[Scalar; 3]) -> Result<Scalar> {
        if copies[0] != copies[1] || copies[1] != copies[2] {
            return Err(Error::InconsistentShares("challenge copies differ".into()));
        }
        let nonce = self.pending.take().ok_or(Error::NonceReuse)?;
        self.keys.respond(&nonce, &copies[0])
    }
}

/// Splits a bid into the three per-server parts.
pub fn share_bid<R: RngCore + CryptoRng + ?Sized>(
    f: &PrimeField,
    user: u32,
    plain: &BidPlain,
    commitment: &ProjectivePoint,
    rng: &mut R,
) -> [BidShare; 3] {
    let id = share_point(&plain.id, rng);
    let r = share_point(commitment, rng);
    let sup = share(f, f.from_u64(plain.supplier as u64), rng);
    let vol = share(f, f.from_u64(plain.volume), rng);
    let pr = share(f, f.from_u64(plain.price), rng);
    std::array::from_fn(|i| BidShare {
        user,
        side: plain.side,
        id: id[i],
        supplier: sup[i],
        volume: vol[i],
        price: pr[i],
        tuples: plain.peers.iter().map(|t| t.shares[i].clone()).collect(),
        commitment: r[i],
    })
}

/// One row of a bid dataset, in fixed point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BidRecord {
    pub user: String,
    pub side: Side,
    pub volume: u64,
    pub price: u64,
}

#[derive(Deserialize)]
struct CsvRow {
    user: String,
    #[serde(rename = "type")]
    kind: String,
    volume: f64,
    price: f64,
}

/// Reads `user,type,volume,price` rows; volumes and prices are decimal and
/// scaled to fixed point.
pub fn load_bids_csv(path: &Path, scale: u64) -> Result<Vec<BidRecord>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for row in rd.deserialize() {
        let row: CsvRow = row.map_err(csv_err)?;
        if !(row.volume > 0.0) || !(row.price >= 0.0) {
            return Err(Error::Malformed(format!("bid of {} has volume {} price {}", row.user, row.volume, row.price)));
        }
        out.push(BidRecord {
            user: row.user,
            side: Side::parse(&row.kind)?,
            volume: crate::dso::to_fixed(row.volume, scale).max(1),
            price: crate::dso::to_fixed(row.price, scale),
        });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Malformed(format!("bid csv: {e}"))
}

/// Uniform bid ranges, in fixed point, for synthetic markets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticBids {
    pub volume: (u64, u64),
    pub price: (u64, u64),
    /// Probability that a user sells.
    pub seller_share: f64,
}

impl Default for SyntheticBids {
    fn default() -> Self {
        SyntheticBids { volume: (100, 10_000), price: (100, 400), seller_share: 0.5 }
    }
}

impl SyntheticBids {
    pub fn generate<R: Rng + ?Sized>(&self, meters: &[String], rng: &mut R) -> Vec<BidRecord> {
        meters
            .iter()
            .map(|m| BidRecord {
                user: m.clone(),
                side: if rng.gen_bool(self.seller_share) { Side::Seller } else { Side::Buyer },
                volume: rng.gen_range(self.volume.0.max(1)..=self.volume.1.max(1)),
                price: rng.gen_range(self.price.0..=self.price.1),
            })
            .collect()
    }
}
