//! The grid operator as a request/response service.

use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dso::fees::FeeTable;
use crate::dso::registry::Registry;
use crate::dso::tuples::{build_tuple, Direction, DsoPublicKey, DsoSigningKey, PeerHandle, ServerKey, TupleBundle};
use crate::ec::POINT_LEN;
use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::net::frame::{Frame, PayloadKind, SessionId};

/// Whether registering a user issues tuples for every existing peer in both
/// directions, or users later request tuples for the peers they select.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssuanceMode {
    #[default]
    Full,
    OnDemand,
}

pub struct Dso {
    field: PrimeField,
    fees: FeeTable,
    registry: Registry,
    sk: DsoSigningKey,
    server_keys: [ServerKey; 3],
    handle_key: [u8; 32],
    rng: ChaCha12Rng,
    signed: u64,
}

/// Tuples produced by one request, each addressed to the meter that owns it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Issuance {
    pub bundles: Vec<(String, TupleBundle)>,
}

impl Issuance {
    pub fn signed_shares(&self) -> usize {
        self.bundles.len() * 3
    }

    pub fn for_meter<'a>(&'a self, meter: &'a str) -> impl Iterator<Item = &'a TupleBundle> + 'a {
        self.bundles.iter().filter(move |(m, _)| m == meter).map(|(_, b)| b)
    }
}

impl Dso {
    pub fn new(
        field: PrimeField,
        fees: FeeTable,
        registry: Registry,
        sk: DsoSigningKey,
        server_keys: [ServerKey; 3],
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut handle_key = [0u8; 32];
        rng.fill_bytes(&mut handle_key);
        Dso { field, fees, registry, sk, server_keys, handle_key, rng, signed: 0 }
    }

    pub fn public_key(&self) -> DsoPublicKey {
        self.sk.public()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn fees(&self) -> &FeeTable {
        &self.fees
    }

    /// Signatures produced so far.
    pub fn signatures(&self) -> u64 {
        self.signed
    }

    pub fn register(&mut self, meter: &str, id: &[u8]) -> Result<()> {
        if !self.fees.contains(meter) {
            return Err(Error::UnknownPeer(meter.to_string()));
        }
        self.registry.register(meter, id)?;
        Ok(())
    }

    pub fn handle(&self, owner: &str, peer: &str) -> PeerHandle {
        let mut h = Sha256::new();
        h.update(self.handle_key);
        h.update((owner.len() as u32).to_le_bytes());
        h.update(owner.as_bytes());
        h.update(peer.as_bytes());
        h.finalize()[..16].try_into().unwrap()
    }

    fn peers_of(&self, meter: &str) -> Result<Vec<&String>> {
        if self.registry.get(meter).is_none() {
            return Err(Error::UnregisteredIdentity);
        }
        Ok(self.registry.meters().iter().filter(|m| m.as_str() != meter).collect())
    }

    /// Fees towards every registered peer, keyed by opaque handles.
    pub fn quote_fees(&self, meter: &str) -> Result<Vec<(PeerHandle, u64)>> {
        self.peers_of(meter)?
            .into_iter()
            .map(|p| Ok((self.handle(meter, p), self.fees.get(meter, p)?)))
            .collect()
    }

    fn bundle(&mut self, owner: &str, peer: &str, direction: Direction) -> Result<TupleBundle> {
        let id = *self.registry.get(owner).ok_or(Error::UnregisteredIdentity)?;
        let pid = *self.registry.get(peer).ok_or_else(|| Error::UnknownPeer(peer.to_string()))?;
        let fee = self.fees.get(owner, peer)?;
        let handle = self.handle(owner, peer);
        self.signed += 3;
        Ok(build_tuple(&mut self.rng, &self.field, &id, &pid, handle, fee, direction, &self.server_keys, &self.sk))
    }

    /// Every pair between `meter` and the registered peers, both directions:
    /// `6 (N - 1)` signed shares for the N-th user.
    pub fn issue_all(&mut self, meter: &str) -> Result<Issuance> {
        let peers: Vec<String> = self.peers_of(meter)?.into_iter().cloned().collect();
        let mut out = Issuance::default();
        for p in &peers {
            let own = self.bundle(meter, p, Direction::Issued)?;
            out.bundles.push((meter.to_string(), own));
            let mirror = self.bundle(p, meter, Direction::Mirrored)?;
            out.bundles.push((p.clone(), mirror));
        }
        Ok(out)
    }

    /// Tuples for the listed peers only, addressed to `meter`.
    pub fn issue_selected(&mut self, meter: &str, handles: &[PeerHandle]) -> Result<Issuance> {
        let lookup: HashMap<PeerHandle, String> =
            self.peers_of(meter)?.into_iter().map(|p| (self.handle(meter, p), p.clone())).collect();
        let mut out = Issuance::default();
        for h in handles {
            let p = lookup.get(h).ok_or_else(|| Error::UnknownPeer(crate::dso::tuples::hex(h)))?.clone();
            let b = self.bundle(meter, &p, Direction::Issued)?;
            out.bundles.push((meter.to_string(), b));
        }
        Ok(out)
    }

    pub fn serve(&mut self, req: &DsoRequest) -> DsoResponse {
        let r = match req {
            DsoRequest::Register { meter, id } => self.register(meter, id).map(|_| DsoResponse::RegisterAck),
            DsoRequest::QuoteFees { meter } => self.quote_fees(meter).map(DsoResponse::FeeQuote),
            DsoRequest::IssueTuples { meter, peers: None } => self.issue_all(meter).map(DsoResponse::TupleBatch),
            DsoRequest::IssueTuples { meter, peers: Some(h) } => self.issue_selected(meter, h).map(DsoResponse::TupleBatch),
        };
        r.unwrap_or_else(|e| DsoResponse::Error(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DsoRequest {
    Register { meter: String, id: Vec<u8> },
    QuoteFees { meter: String },
    /// `peers: None` asks for the full two-way issuance.
    IssueTuples { meter: String, peers: Option<Vec<PeerHandle>> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DsoResponse {
    RegisterAck,
    FeeQuote(Vec<(PeerHandle, u64)>),
    TupleBatch(Issuance),
    Error(String),
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self.b.get(self.pos..self.pos + n).ok_or_else(|| Error::Malformed("truncated message".into()))?;
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Malformed("meter id is not utf-8".into()))
    }
    fn done(&self) -> Result<()> {
        if self.pos != self.b.len() {
            return Err(Error::Malformed("trailing bytes in message".into()));
        }
        Ok(())
    }
}

impl DsoRequest {
    pub fn to_frame(&self, session: SessionId, sender: u8) -> Frame {
        let mut p = Vec::new();
        let kind = match self {
            DsoRequest::Register { meter, id } => {
                put_str(&mut p, meter);
                p.extend_from_slice(id);
                PayloadKind::Register
            }
            DsoRequest::QuoteFees { meter } => {
                put_str(&mut p, meter);
                PayloadKind::QuoteFees
            }
            DsoRequest::IssueTuples { meter, peers } => {
                put_str(&mut p, meter);
                match peers {
                    None => p.push(0),
                    Some(h) => {
                        p.push(1);
                        p.extend_from_slice(&(h.len() as u32).to_le_bytes());
                        for x in h {
                            p.extend_from_slice(x);
                        }
                    }
                }
                PayloadKind::IssueTuples
            }
        };
        Frame::new(session, 0, sender, kind, p)
    }

    pub fn from_frame(f: &Frame) -> Result<Self> {
        let mut c = Cursor { b: &f.payload, pos: 0 };
        let r = match f.kind {
            PayloadKind::Register => {
                let meter = c.str()?;
                DsoRequest::Register { meter, id: c.take(POINT_LEN)?.to_vec() }
            }
            PayloadKind::QuoteFees => DsoRequest::QuoteFees { meter: c.str()? },
            PayloadKind::IssueTuples => {
                let meter = c.str()?;
                let peers = match c.take(1)?[0] {
                    0 => None,
                    1 => {
                        let n = c.u32()? as usize;
                        Some((0..n).map(|_| Ok(c.take(16)?.try_into().unwrap())).collect::<Result<Vec<_>>>()?)
                    }
                    m => return Err(Error::Malformed(format!("issuance mode {m}"))),
                };
                DsoRequest::IssueTuples { meter, peers }
            }
            k => return Err(Error::Malformed(format!("{k:?} is not a grid operator request"))),
        };
        c.done()?;
        Ok(r)
    }
}

impl DsoResponse {
    pub fn to_frame(&self, session: SessionId, sender: u8) -> Frame {
        let mut p = Vec::new();
        let kind = match self {
            DsoResponse::RegisterAck => PayloadKind::RegisterAck,
            DsoResponse::FeeQuote(q) => {
                p.extend_from_slice(&(q.len() as u32).to_le_bytes());
                for (h, fee) in q {
                    p.extend_from_slice(h);
                    p.extend_from_slice(&fee.to_le_bytes());
                }
                PayloadKind::FeeQuote
            }
            DsoResponse::TupleBatch(iss) => {
                p.extend_from_slice(&(iss.bundles.len() as u32).to_le_bytes());
                for (m, b) in &iss.bundles {
                    put_str(&mut p, m);
                    p.extend_from_slice(&b.to_bytes());
                }
                PayloadKind::TupleBatch
            }
            DsoResponse::Error(e) => {
                p.extend_from_slice(e.as_bytes());
                PayloadKind::Error
            }
        };
        Frame::new(session, 0, sender, kind, p)
    }

    pub fn from_frame(f: &Frame) -> Result<Self> {
        let mut c = Cursor { b: &f.payload, pos: 0 };
        let r = match f.kind {
            PayloadKind::RegisterAck => DsoResponse::RegisterAck,
            PayloadKind::FeeQuote => {
                let n = c.u32()? as usize;
                let mut q = Vec::with_capacity(n);
                for _ in 0..n {
                    let h: PeerHandle = c.take(16)?.try_into().unwrap();
                    q.push((h, u64::from_le_bytes(c.take(8)?.try_into().unwrap())));
                }
                DsoResponse::FeeQuote(q)
            }
            PayloadKind::TupleBatch => {
                let n = c.u32()? as usize;
                let mut iss = Issuance::default();
                for _ in 0..n {
                    let m = c.str()?;
                    let (b, used) = TupleBundle::from_bytes(&c.b[c.pos..])?;
                    c.pos += used;
                    iss.bundles.push((m, b));
                }
                DsoResponse::TupleBatch(iss)
            }
            PayloadKind::Error => {
                c.pos = c.b.len();
                DsoResponse::Error(String::from_utf8_lossy(&f.payload).into_owned())
            }
            k => return Err(Error::Malformed(format!("{k:?} is not a grid operator response"))),
        };
        c.done()?;
        Ok(r)
    }
}
