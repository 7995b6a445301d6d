//! Market clearing: the three-server engine and the clear-text reference.

pub mod engine;
pub mod outcome;
pub mod reference;
pub mod wire;

pub use engine::{
    AllocationState, EngineParams, Exclusion, MappingTensor, OrderBookShares, Reveal, ServerKeys, ServerReport, GATEWAY,
};
pub use outcome::{BillLine, MarketOutcome, TieOrder};
pub use reference::{clear_text_reference, round_half_up, trading_price, RefBid};
