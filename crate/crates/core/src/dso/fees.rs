//! Distance-based transfer fees in fixed point.

use std::collections::{BTreeMap, HashMap};

use crate::dso::network::{compute_ptdf, NetworkModel, PtdfMatrix};
use crate::error::{Error, Result};

/// `x` at `scale`, rounded half up. `x` must be non-negative.
pub fn to_fixed(x: f64, scale: u64) -> u64 {
    debug_assert!(x >= 0.0);
    (x * scale as f64 + 0.5).floor() as u64
}

pub fn distance(ptdf: &PtdfMatrix, bus_i: u32, bus_j: u32) -> Option<f64> {
    ptdf.distance(bus_i, bus_j)
}

/// Fee per unit of energy, `u * d / 2`, at `scale`.
pub fn fee(unit_fee: f64, d: f64, scale: u64) -> u64 {
    to_fixed(unit_fee * d / 2.0, scale)
}

/// Network charge `v * f`. With both inputs at `scale` the result is at `scale^2`.
pub fn charge(v: u64, f: u64) -> u128 {
    v as u128 * f as u128
}

/// Fees for every ordered meter pair, stored per bus pair.
#[derive(Clone, Debug)]
pub struct FeeTable {
    pub unit_fee: f64,
    pub scale: u64,
    meters: BTreeMap<String, u32>,
    by_bus: HashMap<(u32, u32), u64>,
}

impl FeeTable {
    pub fn build(model: &NetworkModel, unit_fee: f64, scale: u64) -> Result<Self> {
        if !(unit_fee >= 0.0 && unit_fee.is_finite()) {
            return Err(Error::ConfigInvalid(format!("unit fee {unit_fee}")));
        }
        let ptdf = compute_ptdf(model)?;
        let mut by_bus = HashMap::new();
        for &a in &model.buses {
            for &b in &model.buses {
                let d = ptdf.distance(a, b).expect("bus in model");
                by_bus.insert((a, b), fee(unit_fee, d, scale));
            }
        }
        Ok(FeeTable { unit_fee, scale, meters: model.users.clone(), by_bus })
    }

    pub fn meters(&self) -> impl Iterator<Item = &str> {
        self.meters.keys().map(String::as_str)
    }

    pub fn contains(&self, meter: &str) -> bool {
        self.meters.contains_key(meter)
    }

    pub fn get(&self, i: &str, j: &str) -> Result<u64> {
        let bi = self.meters.get(i).ok_or_else(|| Error::UnknownPeer(i.to_string()))?;
        let bj = self.meters.get(j).ok_or_else(|| Error::UnknownPeer(j.to_string()))?;
        Ok(self.by_bus[&(*bi, *bj)])
    }
}
