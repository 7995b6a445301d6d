//! Clear-text market engine: average pricing, price-ordered books and
//! allocation between mutually selected pairs.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::client::Side;
use crate::error::{Error, Result};
use crate::market::outcome::{BillLine, MarketOutcome, TieOrder};

/// A bid in the clear with its selected peers `(meter, fee)` in slot order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefBid {
    pub meter: String,
    pub side: Side,
    pub supplier: u32,
    pub volume: u64,
    pub price: u64,
    pub peers: Vec<(String, u64)>,
}

/// Mean of all prices, rounded half up.
pub fn trading_price(prices: &[u64]) -> Result<u64> {
    if prices.is_empty() {
        return Err(Error::EmptyMarket);
    }
    let sum: u128 = prices.iter().map(|&p| p as u128).sum();
    Ok(round_half_up(sum, prices.len() as u128))
}

/// `floor(sum / n + 1/2)`.
pub fn round_half_up(sum: u128, n: u128) -> u64 {
    ((2 * sum + n) / (2 * n)) as u64
}

fn check_order(bids: &[&RefBid], order: &[String], ascending: bool) -> Result<Vec<usize>> {
    let by_meter: HashMap<&str, usize> = bids.iter().enumerate().map(|(i, b)| (b.meter.as_str(), i)).collect();
    if order.len() != bids.len() {
        return Err(Error::ConfigInvalid("tie order does not cover the book".into()));
    }
    let mut seen = vec![false; bids.len()];
    let mut idx = Vec::with_capacity(order.len());
    for m in order {
        let i = *by_meter.get(m.as_str()).ok_or_else(|| Error::UnknownPeer(m.clone()))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::ConfigInvalid(format!("{m} twice in tie order")));
        }
        idx.push(i);
    }
    for w in idx.windows(2) {
        let (a, b) = (bids[w[0]].price, bids[w[1]].price);
        if (ascending && a > b) || (!ascending && a < b) {
            return Err(Error::ConfigInvalid("tie order is not sorted by price".into()));
        }
    }
    Ok(idx)
}

fn sorted(bids: &[&RefBid], ascending: bool, rng: &mut ChaCha12Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..bids.len()).collect();
    idx.shuffle(rng);
    if ascending {
        idx.sort_by_key(|&i| bids[i].price);
    } else {
        idx.sort_by_key(|&i| std::cmp::Reverse(bids[i].price));
    }
    idx
}

/// Clears the market in the clear. With `order` the books take exactly that
/// post-sort order (which must be sorted by price); otherwise ties are broken
/// by a shuffle seeded with `tie_seed`.
pub fn clear_text_reference(bids: &[RefBid], order: Option<&TieOrder>, tie_seed: u64) -> Result<MarketOutcome> {
    let prices: Vec<u64> = bids.iter().map(|b| b.price).collect();
    let p_star = trading_price(&prices)?;
    let sellers: Vec<&RefBid> = bids.iter().filter(|b| b.side == Side::Seller).collect();
    let buyers: Vec<&RefBid> = bids.iter().filter(|b| b.side == Side::Buyer).collect();
    let (so, bo) = match order {
        Some(o) => (check_order(&sellers, &o.sellers, true)?, check_order(&buyers, &o.buyers, false)?),
        None => {
            let mut rng = ChaCha12Rng::seed_from_u64(tie_seed);
            let so = sorted(&sellers, true, &mut rng);
            (so, sorted(&buyers, false, &mut rng))
        }
    };
    let s: Vec<&RefBid> = so.iter().map(|&i| sellers[i]).collect();
    let b: Vec<&RefBid> = bo.iter().map(|&i| buyers[i]).collect();

    let mut rem_s: Vec<u64> = s.iter().map(|x| x.volume).collect();
    let mut rem_b: Vec<u64> = b.iter().map(|x| x.volume).collect();
    let mut a_s: Vec<Vec<u64>> = s.iter().map(|x| vec![0; x.peers.len()]).collect();
    let mut a_b: Vec<Vec<u64>> = b.iter().map(|x| vec![0; x.peers.len()]).collect();
    let slot = |bid: &RefBid, other: &str| bid.peers.iter().position(|(m, _)| m == other);
    for i in 0..s.len() {
        for k in 0..b.len() {
            let (Some(j), Some(j2)) = (slot(s[i], &b[k].meter), slot(b[k], &s[i].meter)) else {
                continue;
            };
            let m = rem_s[i].min(rem_b[k]);
            a_s[i][j] = m;
            a_b[k][j2] = m;
            rem_s[i] -= m;
            rem_b[k] -= m;
        }
    }

    let mut out = MarketOutcome { p_star, ..Default::default() };
    let mut allocations = BTreeMap::new();
    for (rows, alloc) in [(&s, &a_s), (&b, &a_b)] {
        for (bid, a) in rows.iter().zip(alloc.iter()) {
            let total: u64 = a.iter().sum();
            out.totals.insert(bid.meter.clone(), total);
            allocations.insert(bid.meter.clone(), a.clone());
            let energy = total as i128 * p_star as i128;
            let network: i128 = a.iter().zip(&bid.peers).map(|(a, (_, f))| *a as i128 * *f as i128).sum();
            let energy = if bid.side == Side::Seller { -energy } else { energy };
            out.bills.entry(bid.supplier).or_default().push(BillLine { meter: bid.meter.clone(), energy, network });
        }
    }
    for lines in out.bills.values_mut() {
        lines.sort();
    }
    out.allocations = Some(allocations);
    out.order = Some(TieOrder {
        sellers: s.iter().map(|x| x.meter.clone()).collect(),
        buyers: b.iter().map(|x| x.meter.clone()).collect(),
    });
    Ok(out)
}
