//! Run configuration, read from JSON.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::SyntheticBids;
use crate::dso::IssuanceMode;
use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::identity::BatchWidth;

pub const SEED_ENV: &str = "PNF_SEED";

/// How simulated users choose their peers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerModel {
    /// The cheapest peers by network fee.
    #[default]
    Nearest,
    /// Seller `s` picks buyers `s, s+1, ..`; buyer `b` picks sellers `b, b-1, ..`
    /// (indices by arrival within each side), so most choices are mutual.
    Mutual,
    /// A uniformly random subset of the other users.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Dataset {
    Synthetic(SyntheticBids),
    Csv { path: PathBuf },
}

impl Default for Dataset {
    fn default() -> Self {
        Dataset::Synthetic(SyntheticBids::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NetworkSpec {
    /// Random radial feeder with this many buses.
    Radial { buses: u32 },
    /// A network model file; its meters must cover the dataset's users.
    File { path: PathBuf },
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec::Radial { buses: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub bits: u32,
    /// Fixed-point scale of volumes, prices and fees.
    pub scale: u64,
    /// Peer slots per user.
    pub peers: usize,
    /// Number of users for synthetic datasets; CSV datasets bring their own.
    pub users: usize,
    pub dataset: Dataset,
    pub peer_model: PeerModel,
    pub network: NetworkSpec,
    /// Fee per kWh per unit of electrical distance, in currency.
    pub unit_fee: f64,
    pub suppliers: u32,
    pub issuance: IssuanceMode,
    pub batch_width: BatchWidth,
    pub mapping_batch: usize,
    pub seed: u64,
    /// Emulated round-trip time between endpoints, milliseconds.
    pub rtt_ms: f64,
    pub timeout_secs: u64,
    /// Open allocations and sort order, and check against the reference.
    pub test_mode: bool,
    pub report: Option<PathBuf>,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            bits: 64,
            scale: 1000,
            peers: 3,
            users: 10,
            dataset: Dataset::default(),
            peer_model: PeerModel::default(),
            network: NetworkSpec::default(),
            unit_fee: 0.02,
            suppliers: 3,
            issuance: IssuanceMode::OnDemand,
            batch_width: BatchWidth::Short128,
            mapping_batch: 1 << 17,
            seed: 1,
            rtt_ms: 0.0,
            timeout_secs: 900,
            test_mode: false,
            report: None,
        }
    }
}

impl MarketConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let c: MarketConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        c.validate()?;
        Ok(c)
    }

    pub fn field(&self) -> Result<PrimeField> {
        match self.bits {
            32 | 64 => PrimeField::for_input_bits(self.bits),
            b => Err(Error::ConfigInvalid(format!("bit length {b}, expected 32 or 64"))),
        }
    }

    /// Checks ranges that do not depend on the dataset contents.
    pub fn validate(&self) -> Result<()> {
        self.field()?;
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.scale == 0 {
            return bad("scale must be positive".into());
        }
        if self.peers == 0 {
            return bad("at least one peer slot".into());
        }
        if self.suppliers == 0 {
            return bad("at least one supplier".into());
        }
        if self.mapping_batch == 0 {
            return bad("mapping batch must be positive".into());
        }
        if !(self.unit_fee >= 0.0 && self.unit_fee.is_finite()) {
            return bad(format!("unit fee {}", self.unit_fee));
        }
        if !(self.rtt_ms >= 0.0 && self.rtt_ms.is_finite()) {
            return bad(format!("rtt {}", self.rtt_ms));
        }
        if let Dataset::Synthetic(s) = &self.dataset {
            if self.users == 0 {
                return bad("no users".into());
            }
            if s.volume.0 == 0 || s.volume.0 > s.volume.1 || s.price.0 > s.price.1 {
                return bad("empty or zero volume/price range".into());
            }
            if !(0.0..=1.0).contains(&s.seller_share) {
                return bad(format!("seller share {}", s.seller_share));
            }
        }
        if let NetworkSpec::Radial { buses } = self.network {
            if buses < 2 {
                return bad("a radial network needs at least two buses".into());
            }
        }
        Ok(())
    }

    /// The configured seed unless `PNF_SEED` is set.
    pub fn effective_seed(&self) -> Result<u64> {
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| Error::ConfigInvalid(format!("{SEED_ENV}={v}"))),
            Err(_) => Ok(self.seed),
        }
    }

    pub fn rtt(&self) -> Duration {
        Duration::from_secs_f64(self.rtt_ms / 1000.0)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs.max(1))
    }
}

/// Independent sub-seed for one consumer of randomness.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let h = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(label.as_bytes()).finalize();
    u64::from_le_bytes(h[..8].try_into().unwrap())
}

/// `seed` from the environment if set, else `default`.
pub fn env_seed(default: u64) -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(default)
}
