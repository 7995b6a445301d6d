//! The clearing engine run by each of the three servers.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::{decode_bid_shares, BidShare, Side};
use crate::dso::{DsoPublicKey, ServerKey};
use crate::ec::{encode_point, pad_point, ProjectivePoint, SharedPoint};
use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::identity::{batch_scalars, BatchWidth, SharedBatchItem};
use crate::market::reference::round_half_up;
use crate::market::wire::{encode_bills, encode_price, encode_totals, encode_user_scalars, decode_user_scalars, BillRow};
use crate::net::frame::PayloadKind;
use crate::net::meter::PhaseStats;
use crate::permute::{SharedVector, SortOrder};
use crate::session::{Party, Share};
use crate::share::{next, prev};

/// Transport index of the endpoint that carries client and supplier traffic.
pub const GATEWAY: usize = 3;

// field columns of a book
pub const COL_SUPPLIER: usize = 0;
pub const COL_VOLUME: usize = 1;
pub const COL_PRICE: usize = 2;
pub const COL_FEE: usize = 3;
// point columns
pub const COL_ID: usize = 0;
pub const COL_PEER: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineParams {
    /// Peer slots per row after padding.
    pub peers: usize,
    pub batch_width: BatchWidth,
    /// Identity tests per round in the peer mapping step.
    pub mapping_batch: usize,
    /// Test mode: open the sorted books' identities and the allocations.
    pub reveal: bool,
    pub gateway: usize,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams { peers: 3, batch_width: BatchWidth::Short128, mapping_batch: 1 << 17, reveal: false, gateway: GATEWAY }
    }
}

/// Material a server needs besides its PRF keys.
#[derive(Clone, Debug)]
pub struct ServerKeys {
    pub dso: DsoPublicKey,
    pub key: ServerKey,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub user: u32,
    pub reason: String,
}

/// Seller and buyer books. Field columns are `[supplier, volume, price,
/// fee_0..]`, point columns `[id, peer_0..]`.
#[derive(Clone, Debug)]
pub struct OrderBookShares {
    pub sellers: SharedVector,
    pub buyers: SharedVector,
    /// Submitting user per row, before sorting.
    pub seller_users: Vec<u32>,
    pub buyer_users: Vec<u32>,
    pub excluded: Vec<Exclusion>,
}

impl OrderBookShares {
    pub fn len(&self) -> usize {
        self.sellers.len() + self.buyers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Public result of the peer mapping step: for every row and slot, the row of
/// the other book it names, if any.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingTensor {
    pub seller: Vec<Vec<Option<usize>>>,
    pub buyer: Vec<Vec<Option<usize>>>,
}

impl MappingTensor {
    /// Mutually selected pairs `(i, j, k, j2)` in allocation order: seller `i`
    /// names buyer `k` in slot `j` and `k` names `i` in slot `j2`, taking the
    /// first such slot on each side.
    pub fn pairs(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::new();
        for (i, slots) in self.seller.iter().enumerate() {
            let mut first: Vec<(usize, usize)> = Vec::new();
            for (j, k) in slots.iter().enumerate() {
                if let Some(k) = *k {
                    if !first.iter().any(|&(kk, _)| kk == k) {
                        first.push((k, j));
                    }
                }
            }
            first.sort_unstable();
            for (k, j) in first {
                if let Some(j2) = self.buyer[k].iter().position(|x| *x == Some(i)) {
                    out.push((i, j, k, j2));
                }
            }
        }
        out
    }

    /// Dense `{0,1}` seller tensor indexed `[i][j][k]`.
    pub fn dense_seller(&self, buyers: usize) -> Vec<Vec<Vec<u8>>> {
        dense(&self.seller, buyers)
    }

    pub fn dense_buyer(&self, sellers: usize) -> Vec<Vec<Vec<u8>>> {
        dense(&self.buyer, sellers)
    }
}

fn dense(m: &[Vec<Option<usize>>], other: usize) -> Vec<Vec<Vec<u8>>> {
    m.iter()
        .map(|slots| slots.iter().map(|k| (0..other).map(|x| (*k == Some(x)) as u8).collect()).collect())
        .collect()
}

/// Accepted volumes per row and slot plus remaining volumes.
#[derive(Clone, Debug)]
pub struct AllocationState {
    pub seller: Vec<Vec<Share>>,
    pub buyer: Vec<Vec<Share>>,
    pub seller_remaining: Vec<Share>,
    pub buyer_remaining: Vec<Share>,
}

impl AllocationState {
    fn totals(f: &PrimeField, a: &[Vec<Share>]) -> Vec<Share> {
        a.iter().map(|r| r.iter().fold(Share::ZERO, |acc, x| acc.add(f, *x))).collect()
    }
}

/// Test-mode disclosure: sorted identities (hex), mappings and allocations.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reveal {
    pub sellers: Vec<String>,
    pub buyers: Vec<String>,
    pub mapping: MappingTensor,
    pub seller_alloc: Vec<Vec<u64>>,
    pub buyer_alloc: Vec<Vec<u64>>,
    pub seller_remaining: Vec<u64>,
    pub buyer_remaining: Vec<u64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ServerReport {
    pub party: usize,
    pub p_star: u64,
    pub sellers: usize,
    pub buyers: usize,
    pub excluded: Vec<Exclusion>,
    pub mapping_tests: u64,
    pub mutual_pairs: u64,
    pub phases: Vec<PhaseStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reveal: Option<Reveal>,
}

fn digest(parts: impl IntoIterator<Item = Vec<u8>>) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u32).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

struct Admitted {
    id: SharedPoint,
    tuple_ids: Vec<SharedPoint>,
    peers: Vec<SharedPoint>,
    fees: Vec<Share>,
}

impl Party {
    fn check_bid(&self, b: &BidShare, keys: &ServerKeys, peers: usize) -> Result<Admitted> {
        let f = *self.field();
        if b.tuples.is_empty() || b.tuples.len() > peers {
            return Err(Error::Malformed(format!("{} peer tuples, expected 1..={peers}", b.tuples.len())));
        }
        let mut a = Admitted { id: b.id, tuple_ids: Vec::new(), peers: Vec::new(), fees: Vec::new() };
        for t in &b.tuples {
            if t.server as usize != self.id() || !t.verify(&keys.dso) {
                return Err(Error::SignatureInvalid(b.user as usize));
            }
            let pid = t.decrypt_peer(&keys.key).map_err(|_| Error::DecryptFailed(b.user as usize))?;
            a.tuple_ids.push(t.id_share()?);
            a.peers.push(pid);
            a.fees.push(t.fee_share(&f)?);
        }
        Ok(a)
    }

    /// Agrees on the union of locally rejected users. Also checks that all
    /// servers received the same user list.
    fn agree_exclusions(&mut self, bids: &[BidShare], flagged: &mut [Option<String>]) -> Result<()> {
        let id = self.id();
        let list = digest(bids.iter().map(|b| {
            let mut v = b.user.to_le_bytes().to_vec();
            v.push(b.side as u8);
            v
        }));
        let mut payload = list.to_vec();
        let mut bits = vec![0u8; bids.len().div_ceil(8)];
        for (u, r) in flagged.iter().enumerate() {
            if r.is_some() {
                bits[u / 8] |= 1 << (u % 8);
            }
        }
        payload.extend_from_slice(&bits);
        let got = self.exchange(PayloadKind::Control, vec![(next(id), payload.clone(), 0), (prev(id), payload, 0)], &[next(id), prev(id)])?;
        for (g, from) in got.iter().zip([next(id), prev(id)]) {
            if g.len() != 32 + bits.len() || g[..32] != list {
                return Err(Error::InconsistentShares(format!("server {from} holds a different set of bids")));
            }
            for (u, r) in flagged.iter_mut().enumerate() {
                if r.is_none() && g[32 + u / 8] >> (u % 8) & 1 == 1 {
                    *r = Some(format!("rejected by server {from}"));
                }
            }
        }
        Ok(())
    }

    /// Checks signatures and decrypts peer identities, runs the Schnorr round
    /// with the clients through the gateway and classifies admitted bids.
    pub fn preprocess(&mut self, bids: Vec<BidShare>, keys: &ServerKeys, params: &EngineParams) -> Result<OrderBookShares> {
        let id = self.id();
        let mut seen = HashSet::new();
        if !bids.iter().all(|b| seen.insert(b.user)) {
            return Err(Error::Malformed("user submitted twice".into()));
        }
        let mut flagged: Vec<Option<String>> = vec![None; bids.len()];
        let mut checked: Vec<Option<Admitted>> = Vec::with_capacity(bids.len());
        for (u, b) in bids.iter().enumerate() {
            match self.check_bid(b, keys, params.peers) {
                Ok(a) => checked.push(Some(a)),
                Err(e) => {
                    flagged[u] = Some(e.to_string());
                    checked.push(None);
                }
            }
        }
        self.agree_exclusions(&bids, &mut flagged)?;

        let live: Vec<usize> = (0..bids.len()).filter(|&u| flagged[u].is_none()).collect();
        let (e, seed) = self.joint_challenges(live.len())?;
        let challenges: Vec<_> = live.iter().zip(&e).map(|(&u, e)| (bids[u].user, *e)).collect();
        self.send_raw(params.gateway, PayloadKind::Challenge, encode_user_scalars(&challenges), live.len() as u64)?;
        let raw = self.recv_raw(params.gateway, PayloadKind::Response)?;
        let responses = decode_user_scalars(&raw)?;
        if responses.len() != live.len() || responses.iter().zip(&challenges).any(|(r, c)| r.0 != c.0) {
            return Err(Error::Malformed("responses do not match the challenged users".into()));
        }
        // all servers must verify the same responses
        let d = digest([raw]).to_vec();
        let got = self.exchange(PayloadKind::Control, vec![(next(id), d.clone(), 0), (prev(id), d.clone(), 0)], &[next(id), prev(id)])?;
        if got.iter().any(|g| *g != d) {
            return Err(Error::InconsistentShares("servers received different responses".into()));
        }

        let groups: Vec<Vec<SharedBatchItem>> = live
            .iter()
            .zip(&e)
            .zip(&responses)
            .map(|((&u, e), (_, s))| {
                let a = checked[u].as_ref().expect("live bids were checked");
                let r = bids[u].commitment;
                std::iter::once(a.id)
                    .chain(a.tuple_ids.iter().copied())
                    .map(|id| SharedBatchItem { r, id, e: *e, s: *s })
                    .collect()
            })
            .collect();
        let total: usize = groups.iter().map(Vec::len).sum();
        let a = batch_scalars(seed, total, params.batch_width);
        let flat: Vec<SharedBatchItem> = groups.iter().flatten().copied().collect();
        if !flat.is_empty() && !self.mpc_verify_batch(&flat, &a)? {
            let mut split = Vec::with_capacity(groups.len());
            let mut pos = 0;
            for g in &groups {
                split.push(a[pos..pos + g.len()].to_vec());
                pos += g.len();
            }
            let ok = self.mpc_verify_groups(&groups, &split)?;
            for (&u, ok) in live.iter().zip(ok) {
                if !ok {
                    flagged[u] = Some(Error::SchnorrBatchFailed.to_string());
                }
            }
        }

        let pad = SharedPoint::constant(id, pad_point());
        let mut books = [Vec::new(), Vec::new()];
        let mut users = [Vec::new(), Vec::new()];
        let mut excluded = Vec::new();
        for (u, (b, a)) in bids.iter().zip(checked).enumerate() {
            if let Some(reason) = flagged[u].take() {
                excluded.push(Exclusion { user: b.user, reason });
                continue;
            }
            let a = a.expect("admitted bids were checked");
            let side = b.side as usize;
            users[side].push(b.user);
            books[side].push((b, a));
        }
        let table = |rows: &[(&BidShare, Admitted)]| -> SharedVector {
            let p = params.peers;
            let mut fc = vec![Vec::with_capacity(rows.len()); COL_FEE + p];
            let mut pc = vec![Vec::with_capacity(rows.len()); COL_PEER + p];
            for (b, a) in rows {
                fc[COL_SUPPLIER].push(b.supplier);
                fc[COL_VOLUME].push(b.volume);
                fc[COL_PRICE].push(b.price);
                pc[COL_ID].push(b.id);
                for j in 0..p {
                    fc[COL_FEE + j].push(a.fees.get(j).copied().unwrap_or(Share::ZERO));
                    pc[COL_PEER + j].push(a.peers.get(j).copied().unwrap_or(pad));
                }
            }
            SharedVector::new(fc, pc)
        };
        let [buyer_users, seller_users] = users;
        Ok(OrderBookShares {
            sellers: table(&books[Side::Seller as usize]),
            buyers: table(&books[Side::Buyer as usize]),
            seller_users,
            buyer_users,
            excluded,
        })
    }

    /// Mean price over both books, rounded half up; one opening.
    pub fn trading_price(&mut self, book: &OrderBookShares) -> Result<u64> {
        let n = book.len();
        if n == 0 {
            return Err(Error::EmptyMarket);
        }
        let f = *self.field();
        let sum = book.sellers.field_cols[COL_PRICE]
            .iter()
            .chain(&book.buyers.field_cols[COL_PRICE])
            .fold(Share::ZERO, |acc, x| acc.add(&f, *x));
        let s = self.open_one(sum)?;
        Ok(round_half_up(s.value(), n as u128))
    }

    /// Wide masks consumed by [`Party::sort_books`].
    pub fn sort_mask_count(book: &OrderBookShares) -> usize {
        [book.sellers.len(), book.buyers.len()].iter().map(|&m| if m > 1 { 2 * m } else { 0 }).sum()
    }

    /// Sellers ascending and buyers descending by price.
    pub fn sort_books(&mut self, book: &OrderBookShares) -> Result<(SharedVector, SharedVector)> {
        let s = self.sort_by_key(&book.sellers, COL_PRICE, SortOrder::Ascending)?;
        let b = self.sort_by_key(&book.buyers, COL_PRICE, SortOrder::Descending)?;
        Ok((s, b))
    }

    /// Tests every seller slot against every buyer identity and vice versa
    /// with `r·(pID - ID)`, a fresh random `r` per test, opening only whether
    /// the result is the identity point.
    pub fn peer_mappings(&mut self, s: &SharedVector, b: &SharedVector, peers: usize, batch: usize) -> Result<MappingTensor> {
        let twist = |v: &SharedVector| -> (Vec<ProjectivePoint>, Vec<Vec<ProjectivePoint>>) {
            let ids = v.point_cols[COL_ID].iter().map(SharedPoint::twisted).collect();
            let pids = (0..peers).map(|j| v.point_cols[COL_PEER + j].iter().map(SharedPoint::twisted).collect()).collect();
            (ids, pids)
        };
        let (ids_s, pids_s) = twist(s);
        let (ids_b, pids_b) = twist(b);
        let (ns, nb) = (s.len(), b.len());
        let half = ns * peers * nb;
        let test = |q: usize| -> ProjectivePoint {
            if q < half {
                let (i, j, k) = (q / (peers * nb), (q / nb) % peers, q % nb);
                pids_s[j][i] - ids_b[k]
            } else {
                let q = q - half;
                let (k, j, i) = (q / (peers * ns), (q / ns) % peers, q % ns);
                pids_b[j][k] - ids_s[i]
            }
        };
        let mut hits = Vec::with_capacity(2 * half);
        let batch = batch.max(1);
        let mut q = 0;
        while q < 2 * half {
            let end = (q + batch).min(2 * half);
            let dts: Vec<ProjectivePoint> = (q..end).map(test).collect();
            let r = self.rand_scalars(dts.len());
            hits.extend(self.masked_identity_test(&r, &dts)?);
            q = end;
        }
        let mut m = MappingTensor { seller: vec![vec![None; peers]; ns], buyer: vec![vec![None; peers]; nb] };
        for (q, hit) in hits.into_iter().enumerate() {
            if !hit {
                continue;
            }
            let (slot, other) = if q < half {
                let (i, j, k) = (q / (peers * nb), (q / nb) % peers, q % nb);
                (&mut m.seller[i][j], k)
            } else {
                let q = q - half;
                let (k, j, i) = (q / (peers * ns), (q / ns) % peers, q % ns);
                (&mut m.buyer[k][j], i)
            };
            if slot.replace(other).is_some() {
                return Err(Error::InconsistentShares("peer slot names two rows".into()));
            }
        }
        Ok(m)
    }

    /// Walks mutually selected pairs in price order, moving `min(v_i, v_k)`
    /// from seller to buyer with one comparison and one multiplication.
    /// Needs one wide and one single mask per pair.
    pub fn allocate(&mut self, s: &SharedVector, b: &SharedVector, m: &MappingTensor, peers: usize) -> Result<AllocationState> {
        let f = *self.field();
        let mut vs = s.field_cols[COL_VOLUME].clone();
        let mut vb = b.field_cols[COL_VOLUME].clone();
        let mut a_s = vec![vec![Share::ZERO; peers]; s.len()];
        let mut a_b = vec![vec![Share::ZERO; peers]; b.len()];
        for (i, j, k, j2) in m.pairs() {
            let c = self.lt(&[vb[k]], &[vs[i]])?[0];
            let d = vb[k].sub(&f, vs[i]);
            let x = self.mul(&[c], &[d])?[0].add(&f, vs[i]);
            a_s[i][j] = x;
            a_b[k][j2] = x;
            vs[i] = vs[i].sub(&f, x);
            vb[k] = vb[k].sub(&f, x);
        }
        Ok(AllocationState { seller: a_s, buyer: a_b, seller_remaining: vs, buyer_remaining: vb })
    }

    /// Shuffles each side's `(ID, total)` table, opens the identities and
    /// sends every total share to the gateway. Returns the unshuffled totals.
    pub fn distribute(&mut self, s: &SharedVector, b: &SharedVector, alloc: &AllocationState, gateway: usize) -> Result<(Vec<Share>, Vec<Share>)> {
        let f = *self.field();
        let ts = AllocationState::totals(&f, &alloc.seller);
        let tb = AllocationState::totals(&f, &alloc.buyer);
        let sh_s = self.shuffle(&SharedVector::new(vec![ts.clone()], vec![s.point_cols[COL_ID].clone()]))?;
        let sh_b = self.shuffle(&SharedVector::new(vec![tb.clone()], vec![b.point_cols[COL_ID].clone()]))?;
        let ids: Vec<SharedPoint> = sh_s.point_cols[0].iter().chain(&sh_b.point_cols[0]).copied().collect();
        let opened = self.open_points(&ids)?;
        let shares = sh_s.field_cols[0].iter().chain(&sh_b.field_cols[0]);
        let rows: Vec<(ProjectivePoint, Share)> = opened.into_iter().zip(shares.copied()).collect();
        self.send_raw(gateway, PayloadKind::Total, encode_totals(&f, &rows), rows.len() as u64)?;
        Ok((ts, tb))
    }

    /// Energy leg `±total·p*` and network leg `Σ a_j f_j` per row, shuffled
    /// across both books; supplier ids are opened and rows sent for delivery.
    #[allow(clippy::too_many_arguments)]
    pub fn bill(
        &mut self,
        s: &SharedVector,
        b: &SharedVector,
        alloc: &AllocationState,
        totals: (&[Share], &[Share]),
        p_star: u64,
        peers: usize,
        gateway: usize,
    ) -> Result<Vec<BillRow>> {
        let f = *self.field();
        let p = f.from_u64(p_star);
        let mut a = Vec::new();
        let mut fees = Vec::new();
        for (book, rows) in [(s, &alloc.seller), (b, &alloc.buyer)] {
            for (r, av) in rows.iter().enumerate() {
                for j in 0..peers {
                    a.push(av[j]);
                    fees.push(book.field_cols[COL_FEE + j][r]);
                }
            }
        }
        let charges = self.mul(&a, &fees)?;
        let network: Vec<Share> = charges.chunks(peers.max(1)).map(|c| c.iter().fold(Share::ZERO, |acc, x| acc.add(&f, *x))).collect();
        let energy: Vec<Share> = totals
            .0
            .iter()
            .map(|t| t.scale(&f, p).neg(&f))
            .chain(totals.1.iter().map(|t| t.scale(&f, p)))
            .collect();
        let supplier: Vec<Share> = s.field_cols[COL_SUPPLIER].iter().chain(&b.field_cols[COL_SUPPLIER]).copied().collect();
        let ids: Vec<SharedPoint> = s.point_cols[COL_ID].iter().chain(&b.point_cols[COL_ID]).copied().collect();
        let t = self.shuffle(&SharedVector::new(vec![supplier, energy, network], vec![ids]))?;
        let sup = self.open(&t.field_cols[0])?;
        let mut rows = Vec::with_capacity(t.len());
        for r in 0..t.len() {
            let supplier = u32::try_from(sup[r].value()).map_err(|_| Error::Malformed("supplier id out of range".into()))?;
            rows.push(BillRow { supplier, id: t.point_cols[0][r], energy: t.field_cols[1][r], network: t.field_cols[2][r] });
        }
        self.send_raw(gateway, PayloadKind::Bill, encode_bills(&f, &rows), rows.len() as u64)?;
        Ok(rows)
    }

    fn reveal(&mut self, s: &SharedVector, b: &SharedVector, m: &MappingTensor, alloc: &AllocationState) -> Result<Reveal> {
        let ids: Vec<SharedPoint> = s.point_cols[COL_ID].iter().chain(&b.point_cols[COL_ID]).copied().collect();
        let ids = self.open_points(&ids)?;
        let flat: Vec<Share> = alloc
            .seller
            .iter()
            .chain(&alloc.buyer)
            .flatten()
            .chain(&alloc.seller_remaining)
            .chain(&alloc.buyer_remaining)
            .copied()
            .collect();
        let vals: Vec<u64> = self.open(&flat)?.into_iter().map(|v| v.value() as u64).collect();
        let hex = |p: &ProjectivePoint| crate::dso::tuples::hex(&encode_point(p));
        let peers = alloc.seller.first().or(alloc.buyer.first()).map_or(0, Vec::len);
        let (ns, nb) = (s.len(), b.len());
        let mut it = vals.chunks(peers.max(1));
        let mut r = Reveal {
            sellers: ids[..ns].iter().map(hex).collect(),
            buyers: ids[ns..].iter().map(hex).collect(),
            mapping: m.clone(),
            ..Default::default()
        };
        if peers > 0 {
            r.seller_alloc = (0..ns).map(|_| it.next().unwrap().to_vec()).collect();
            r.buyer_alloc = (0..nb).map(|_| it.next().unwrap().to_vec()).collect();
        }
        let rest = &vals[(ns + nb) * peers..];
        r.seller_remaining = rest[..ns].to_vec();
        r.buyer_remaining = rest[ns..].to_vec();
        Ok(r)
    }

    /// One full market session from the server's side: receive bids, clear,
    /// inform clients and suppliers.
    pub fn run_server(&mut self, keys: &ServerKeys, params: &EngineParams) -> Result<ServerReport> {
        let f = *self.field();
        self.meter.begin("preprocess", true);
        let raw = self.recv_raw(params.gateway, PayloadKind::Bundle)?;
        let bids = decode_bid_shares(&f, &raw)?;
        let book = self.preprocess(bids, keys, params)?;
        let mut report = ServerReport {
            party: self.id(),
            sellers: book.sellers.len(),
            buyers: book.buyers.len(),
            excluded: book.excluded.clone(),
            ..Default::default()
        };

        self.meter.begin("offline", false);
        self.top_up_masks(Party::sort_mask_count(&book), 0)?;

        self.meter.begin("price", true);
        let p_star = self.trading_price(&book)?;
        report.p_star = p_star;
        self.send_raw(params.gateway, PayloadKind::Price, encode_price(p_star), 1)?;

        self.meter.begin("sort", true);
        let (s, b) = self.sort_books(&book)?;

        self.meter.begin("mappings", true);
        let m = self.peer_mappings(&s, &b, params.peers, params.mapping_batch)?;
        report.mapping_tests = (2 * s.len() * b.len() * params.peers) as u64;
        let pairs = m.pairs().len();
        report.mutual_pairs = pairs as u64;

        self.meter.begin("offline", false);
        self.top_up_masks(pairs, pairs)?;

        self.meter.begin("allocation", true);
        let alloc = self.allocate(&s, &b, &m, params.peers)?;

        if params.reveal {
            self.meter.begin("test_reveal", false);
            report.reveal = Some(self.reveal(&s, &b, &m, &alloc)?);
        }

        self.meter.begin("distribute", true);
        let (ts, tb) = self.distribute(&s, &b, &alloc, params.gateway)?;

        self.meter.begin("billing", true);
        self.bill(&s, &b, &alloc, (&ts, &tb), p_star, params.peers, params.gateway)?;

        report.phases = self.meter.phases();
        Ok(report)
    }
}
