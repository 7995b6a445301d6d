//! One party's protocol context: transport, correlated randomness, round
//! counter and meter. Every MPC protocol runs as methods on [`Party`], driven
//! in lock-step by the same code on all three servers.

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::compare::MaskPool;
use crate::error::{Error, Result};
use crate::field::{FieldElem, PrimeField};
use crate::net::frame::{Frame, PayloadKind, SessionId};
use crate::net::meter::Meter;
use crate::net::transport::{loopback_mesh, LoopbackOptions, Transport};
use crate::prss::{domain, generate_keys, CorrelatedSeeds, PrfKey};
use crate::share::{next, prev, ReplicatedShare};

pub type Share = ReplicatedShare;

pub struct Party {
    id: usize,
    field: PrimeField,
    session: SessionId,
    net: Box<dyn Transport>,
    pub(crate) seeds: CorrelatedSeeds,
    round: u32,
    pub meter: Meter,
    pub masks: MaskPool,
}

impl std::fmt::Debug for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Party").field("id", &self.id).field("round", &self.round).finish()
    }
}

impl Party {
    /// Builds a party from already provisioned PRF keys `(K_id, K_{id+1})`.
    pub fn with_keys(
        id: usize,
        field: PrimeField,
        session: SessionId,
        net: Box<dyn Transport>,
        lo: &PrfKey,
        hi: &PrfKey,
    ) -> Self {
        assert!(id < 3, "party index out of range");
        Party {
            id,
            field,
            session,
            net,
            seeds: CorrelatedSeeds::new(lo, hi),
            round: 0,
            meter: Meter::new(),
            masks: MaskPool::default(),
        }
    }

    /// Runs key provisioning over the transport: party `i` samples `K_i` and
    /// hands it to party `i - 1`, which is the other owner of component `i`.
    pub fn setup<R: RngCore + CryptoRng>(
        id: usize,
        field: PrimeField,
        session: SessionId,
        net: Box<dyn Transport>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut own = [0u8; 16];
        rng.fill_bytes(&mut own);
        let mut p = Party::with_keys(id, field, session, net, &own, &[0; 16]);
        p.meter.begin("setup", false);
        let got = p.exchange(PayloadKind::KeySetup, vec![(prev(id), own.to_vec(), 0)], &[next(id)])?;
        let hi: PrfKey = got[0]
            .as_slice()
            .try_into()
            .map_err(|_| Error::Malformed("key setup payload".into()))?;
        p.seeds = CorrelatedSeeds::new(&own, &hi);
        Ok(p)
    }

    #[inline]
    pub fn id(&self) -> usize {
        self.id
    }

    #[inline]
    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn session_id(&self) -> SessionId {
        self.session
    }

    /// Number of communication rounds run so far.
    pub fn rounds(&self) -> u32 {
        self.round
    }

    /// Sends `sends` and collects one frame from each party in `recv_from`, all
    /// under a fresh round id. Each send carries its element count for metering.
    pub(crate) fn exchange(
        &mut self,
        kind: PayloadKind,
        sends: Vec<(usize, Vec<u8>, u64)>,
        recv_from: &[usize],
    ) -> Result<Vec<Vec<u8>>> {
        let sends = sends.into_iter().map(|(to, p, n)| (to, kind, p, n)).collect();
        let recvs: Vec<(usize, PayloadKind)> = recv_from.iter().map(|&f| (f, kind)).collect();
        self.exchange_mixed(sends, &recvs)
    }

    /// As [`Party::exchange`] with a payload kind per frame. Frames from the
    /// same sender arrive in the order they were listed.
    pub(crate) fn exchange_mixed(
        &mut self,
        sends: Vec<(usize, PayloadKind, Vec<u8>, u64)>,
        recvs: &[(usize, PayloadKind)],
    ) -> Result<Vec<Vec<u8>>> {
        self.round += 1;
        self.meter.round();
        for (to, kind, payload, elems) in sends {
            let frame = Frame::new(self.session, self.round, self.id as u8, kind, payload);
            self.meter.sent(kind, elems, frame.payload.len(), frame.encoded_len());
            self.net.send(to, &frame)?;
        }
        let mut out = Vec::with_capacity(recvs.len());
        for &(from, kind) in recvs {
            let frame = self.net.recv(from)?;
            self.meter.received(frame.encoded_len());
            if frame.session != self.session {
                return Err(Error::TransportFailure(format!("frame from foreign session via party {from}")));
            }
            if frame.round != self.round || frame.sender as usize != from {
                return Err(Error::RoundDesync { expected: self.round, got: frame.round, from });
            }
            if frame.kind != kind {
                return Err(Error::Malformed(format!("expected {kind:?} payload, got {:?}", frame.kind)));
            }
            out.push(frame.payload);
        }
        Ok(out)
    }

    /// Public constant as a share.
    #[inline]
    pub fn constant(&self, c: FieldElem) -> Share {
        Share::constant(self.id, c)
    }

    pub fn constant_u64(&self, c: u64) -> Share {
        self.constant(self.field.from_u64(c))
    }

    /// `n` pseudo-random shares with no communication.
    pub fn rand(&mut self, n: usize) -> Vec<Share> {
        let base = self.seeds.alloc(n as u64);
        (0..n as u64).map(|k| self.rand_with(base + k)).collect()
    }

    /// Shared random value at an explicit counter; refuses consumed counters.
    pub fn rand_at(&mut self, counter: u64) -> Result<Share> {
        let c = self.seeds.claim(counter)?;
        Ok(self.rand_with(c))
    }

    fn rand_with(&self, c: u64) -> Share {
        let f = &self.field;
        Share::new(self.seeds.lo.field(f, domain::RAND_FIELD, c), self.seeds.hi.field(f, domain::RAND_FIELD, c))
    }

    /// This party's summands of `n` fresh sharings of zero.
    pub fn zero_summands(&mut self, n: usize) -> Vec<FieldElem> {
        let base = self.seeds.alloc(n as u64);
        let f = self.field;
        (0..n as u64)
            .map(|k| {
                let a = self.seeds.lo.field(&f, domain::ZERO_FIELD, base + k);
                let b = self.seeds.hi.field(&f, domain::ZERO_FIELD, base + k);
                f.sub(a, b)
            })
            .collect()
    }

    /// Turns a 3-out-of-3 additive sharing (this party's summand `z`) back into
    /// the replicated form: one round, one element sent per value.
    pub fn reshare(&mut self, z: Vec<FieldElem>) -> Result<Vec<Share>> {
        let payload = self.field.encode_slice(&z);
        let n = z.len() as u64;
        let got = self.exchange(PayloadKind::Field, vec![(prev(self.id), payload, n)], &[next(self.id)])?;
        let hi = self.field.decode_slice(&got[0])?;
        if hi.len() != z.len() {
            return Err(Error::Malformed("reshare length mismatch".into()));
        }
        Ok(z.into_iter().zip(hi).map(|(lo, hi)| Share::new(lo, hi)).collect())
    }

    /// Element-wise products in one round.
    pub fn mul(&mut self, x: &[Share], y: &[Share]) -> Result<Vec<Share>> {
        assert_eq!(x.len(), y.len(), "mul operands differ in length");
        let alpha = self.zero_summands(x.len());
        let f = self.field;
        let z = x.iter().zip(y).zip(alpha).map(|((a, b), r)| f.add(a.mul_local(&f, *b), r)).collect();
        self.reshare(z)
    }

    /// Reveals values to all three parties in one round.
    pub fn open(&mut self, x: &[Share]) -> Result<Vec<FieldElem>> {
        let payload = self.field.encode_slice(&x.iter().map(|s| s.lo).collect::<Vec<_>>());
        let got = self.exchange(PayloadKind::Field, vec![(next(self.id), payload, x.len() as u64)], &[prev(self.id)])?;
        let third = self.field.decode_slice(&got[0])?;
        if third.len() != x.len() {
            return Err(Error::Malformed("open length mismatch".into()));
        }
        let f = self.field;
        Ok(x.iter().zip(third).map(|(s, t)| f.add(f.add(s.lo, s.hi), t)).collect())
    }

    pub fn open_one(&mut self, x: Share) -> Result<FieldElem> {
        Ok(self.open(&[x])?[0])
    }

    /// Sends this party's pairs of `x` to an outside endpoint (e.g. a client
    /// or supplier process reachable on the same transport).
    pub fn send_raw(&mut self, to: usize, kind: PayloadKind, payload: Vec<u8>, elems: u64) -> Result<()> {
        let frame = Frame::new(self.session, self.round, self.id as u8, kind, payload);
        self.meter.sent(kind, elems, frame.payload.len(), frame.encoded_len());
        self.net.send(to, &frame)
    }

    /// Receives one frame of `kind` from an outside endpoint. Only the session
    /// and kind are checked; such frames do not take part in round numbering.
    pub fn recv_raw(&mut self, from: usize, kind: PayloadKind) -> Result<Vec<u8>> {
        let frame = self.net.recv(from)?;
        self.meter.received(frame.encoded_len());
        if frame.session != self.session {
            return Err(Error::TransportFailure(format!("frame from foreign session via endpoint {from}")));
        }
        if frame.kind == PayloadKind::Error {
            return Err(Error::TransportFailure(String::from_utf8_lossy(&frame.payload).into_owned()));
        }
        if frame.kind != kind {
            return Err(Error::Malformed(format!("expected {kind:?} payload, got {:?}", frame.kind)));
        }
        Ok(frame.payload)
    }

    /// Allocates counters from the session counter (same value on all parties).
    pub(crate) fn alloc_counters(&mut self, n: u64) -> u64 {
        self.seeds.alloc(n)
    }
}

/// Runs `f` as all three parties over an in-process loopback mesh and returns
/// each party's result. Keys are provisioned through the normal setup round.
pub fn run_local<T, F>(field: PrimeField, seed: u64, opts: LoopbackOptions, f: F) -> Result<[T; 3]>
where
    T: Send,
    F: Fn(&mut Party) -> Result<T> + Sync,
{
    let mesh = loopback_mesh(3, opts);
    let mut session = [0u8; 16];
    session[..8].copy_from_slice(&seed.to_le_bytes());
    let results: Vec<Result<T>> = std::thread::scope(|s| {
        let handles: Vec<_> = mesh
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                let f = &f;
                s.spawn(move || {
                    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ ((i as u64 + 1) << 56));
                    let mut p = Party::setup(i, field, session, Box::new(t), &mut rng)?;
                    f(&mut p)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("party thread panicked")).collect()
    });
    let mut it = results.into_iter();
    Ok([it.next().unwrap()?, it.next().unwrap()?, it.next().unwrap()?])
}

/// Shortcut for [`run_local`] without latency or tap.
pub fn run3<T, F>(field: PrimeField, seed: u64, f: F) -> Result<[T; 3]>
where
    T: Send,
    F: Fn(&mut Party) -> Result<T> + Sync,
{
    run_local(field, seed, LoopbackOptions::default(), f)
}

/// Dealer-side keys for tests that build parties by hand.
pub fn dealer_keys(seed: u64) -> [PrfKey; 3] {
    generate_keys(&mut ChaCha12Rng::seed_from_u64(seed))
}
