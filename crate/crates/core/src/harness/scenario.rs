//! Seeded random markets and the post-hoc checks applied to their outcomes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::client::{BidRecord, Side, SyntheticBids};
use crate::dso::{DsoSigningKey, IssuanceMode, NetworkModel};
use crate::error::Result;
use crate::field::PrimeField;
use crate::harness::config::{derive_seed, PeerModel};
use crate::harness::population::{plan_market, reference_bids, PlannedBid, Population};
use crate::market::{clear_text_reference, MarketOutcome, RefBid};

#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub users: usize,
    pub bits: u32,
    pub peers: usize,
    pub model: PeerModel,
    pub bids: SyntheticBids,
    pub suppliers: u32,
    pub scale: u64,
    pub unit_fee: f64,
    pub buses: u32,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            users: 10,
            bits: 64,
            peers: 3,
            model: PeerModel::Mutual,
            bids: SyntheticBids::default(),
            suppliers: 3,
            scale: 1000,
            unit_fee: 0.02,
            buses: 12,
            seed: 1,
        }
    }
}

/// A registered population with one planned market.
pub struct Scenario {
    pub pop: Population,
    pub records: Vec<BidRecord>,
    pub plan: Vec<PlannedBid>,
}

impl Scenario {
    pub fn build(spec: &ScenarioSpec) -> Result<Self> {
        let field = PrimeField::for_input_bits(spec.bits)?;
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(spec.seed, "scenario"));
        let model = NetworkModel::synthetic_radial(spec.buses, spec.users, &mut rng);
        let sk = DsoSigningKey::generate(&mut rng)?;
        let meters: Vec<String> = (0..spec.users).map(|u| format!("m{u}")).collect();
        let pop = Population::build(field, spec.scale, &model, spec.unit_fee, &meters, IssuanceMode::OnDemand, sk, rng.gen())?;
        let mut s = Scenario { pop, records: Vec::new(), plan: Vec::new() };
        s.replan(spec, spec.seed)?;
        Ok(s)
    }

    /// Draws fresh bids and peer choices for the same population.
    pub fn replan(&mut self, spec: &ScenarioSpec, seed: u64) -> Result<()> {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "market"));
        let records = spec.bids.generate(&self.pop.meters(), &mut rng);
        self.plan_records(spec, records, rng.gen())
    }

    /// Plans the given bids for the population.
    pub fn plan_records(&mut self, spec: &ScenarioSpec, records: Vec<BidRecord>, seed: u64) -> Result<()> {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "plan"));
        let suppliers: Vec<u32> = records.iter().map(|_| rng.gen_range(0..spec.suppliers)).collect();
        self.plan = plan_market(&mut self.pop, &records, &suppliers, spec.model, spec.peers, &mut rng)?;
        self.records = records;
        Ok(())
    }

    pub fn reference_bids(&self) -> Vec<RefBid> {
        reference_bids(&self.pop, &self.plan)
    }
}

/// Compares an opened outcome with the clear-text reference fed the same
/// post-sort order.
pub fn check_oracle(bids: &[RefBid], got: &MarketOutcome) -> std::result::Result<(), String> {
    let order = got.order.as_ref().ok_or("outcome carries no sort order")?;
    let want = clear_text_reference(bids, Some(order), 0).map_err(|e| e.to_string())?;
    if got.allocations.is_none() {
        return Err("outcome carries no allocations".into());
    }
    match got.diff(&want) {
        None if got.excluded.is_empty() => Ok(()),
        None => Err(format!("users excluded: {:?}", got.excluded)),
        Some(d) => Err(d),
    }
}

/// Conservation, volume bounds and mutual-selection checks on per-slot
/// allocations.
pub fn check_invariants(bids: &[RefBid], got: &MarketOutcome) -> std::result::Result<(), String> {
    let alloc = got.allocations.as_ref().ok_or("outcome carries no allocations")?;
    let by_meter: BTreeMap<&str, &RefBid> = bids.iter().map(|b| (b.meter.as_str(), b)).collect();
    let (mut sold, mut bought) = (0u128, 0u128);
    for (m, slots) in alloc {
        let b = by_meter.get(m.as_str()).ok_or_else(|| format!("allocation for unknown {m}"))?;
        if slots.len() != b.peers.len() {
            return Err(format!("{m} has {} slots, bid {}", slots.len(), b.peers.len()));
        }
        let sum: u128 = slots.iter().map(|&a| a as u128).sum();
        if sum > b.volume as u128 {
            return Err(format!("{m} allocated {sum} above volume {}", b.volume));
        }
        if got.totals.get(m).map(|&t| t as u128) != Some(sum) {
            return Err(format!("total of {m} is not its slot sum"));
        }
        for (j, &a) in slots.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let peer = &b.peers[j].0;
            let mutual = by_meter
                .get(peer.as_str())
                .is_some_and(|o| o.side != b.side && o.peers.iter().any(|(p, _)| *p == b.meter));
            if !mutual {
                return Err(format!("{m} trades {a} with {peer} without mutual selection"));
            }
        }
        match b.side {
            Side::Seller => sold += sum,
            Side::Buyer => bought += sum,
        }
    }
    if sold != bought {
        return Err(format!("sold {sold} but bought {bought}"));
    }
    Ok(())
}
