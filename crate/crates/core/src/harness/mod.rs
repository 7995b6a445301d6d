//! Configuration, orchestration and reporting of whole market sessions.

pub mod config;
pub mod expect;
pub mod gateway;
pub mod population;
pub mod run;
pub mod scenario;

pub use config::{derive_seed, env_seed, Dataset, MarketConfig, NetworkSpec, PeerModel, SEED_ENV};
pub use expect::{meter_assert, sum_servers, Expectation, Violation};
pub use gateway::{run_gateway, BidHook, GatewayResult};
pub use population::{plan_market, reference_bids, IssuanceStats, PlannedBid, Population};
pub use run::{engine_params, load_dataset, network_for, prepare_market, run_market, run_market_local, session_id, PHASES, MarketRun, Metering, OracleCheck, PhaseSummary, Report, RunOptions};
pub use scenario::{check_invariants, check_oracle, Scenario, ScenarioSpec};
