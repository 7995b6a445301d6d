//! Market results as seen by clients and suppliers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::client::Side;
use crate::error::{Error, Result};

/// One user's bill. Both legs are at the square of the fixed-point scale.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BillLine {
    pub meter: String,
    /// Positive for buyers, a credit (negative) for sellers.
    pub energy: i128,
    pub network: i128,
}

/// Post-sort order of both books, by meter.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieOrder {
    pub sellers: Vec<String>,
    pub buyers: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub p_star: u64,
    /// Total accepted volume per admitted user.
    pub totals: BTreeMap<String, u64>,
    /// Bill lines per supplier, sorted by meter.
    pub bills: BTreeMap<u32, Vec<BillLine>>,
    /// Accepted volume per peer slot; present in test mode and in the reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocations: Option<BTreeMap<String, Vec<u64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<TieOrder>,
    #[serde(default)]
    pub excluded: Vec<String>,
}

impl MarketOutcome {
    pub fn sold(&self, sides: &BTreeMap<String, Side>) -> u128 {
        self.side_total(sides, Side::Seller)
    }

    pub fn bought(&self, sides: &BTreeMap<String, Side>) -> u128 {
        self.side_total(sides, Side::Buyer)
    }

    fn side_total(&self, sides: &BTreeMap<String, Side>, s: Side) -> u128 {
        self.totals.iter().filter(|(m, _)| sides.get(*m) == Some(&s)).map(|(_, v)| *v as u128).sum()
    }

    /// Compares every field both outcomes carry; returns the first difference.
    pub fn diff(&self, other: &MarketOutcome) -> Option<String> {
        if self.p_star != other.p_star {
            return Some(format!("p* {} vs {}", self.p_star, other.p_star));
        }
        if self.totals != other.totals {
            let k = self
                .totals
                .keys()
                .chain(other.totals.keys())
                .find(|k| self.totals.get(*k) != other.totals.get(*k))
                .cloned()
                .unwrap_or_default();
            return Some(format!("total of {k}: {:?} vs {:?}", self.totals.get(&k), other.totals.get(&k)));
        }
        if self.bills != other.bills {
            return Some("bills differ".into());
        }
        if let (Some(a), Some(b)) = (&self.allocations, &other.allocations) {
            if a != b {
                let k = a.keys().chain(b.keys()).find(|k| a.get(*k) != b.get(*k)).cloned().unwrap_or_default();
                return Some(format!("allocation of {k}: {:?} vs {:?}", a.get(&k), b.get(&k)));
            }
        }
        None
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::from)
    }
}
