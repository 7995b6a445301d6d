//! Three-server secure clearing of a local energy market with network fees.

pub mod binary;
pub mod client;
pub mod compare;
pub mod dso;
pub mod ec;
pub mod error;
pub mod field;
pub mod harness;
pub mod identity;
pub mod market;
pub mod net;
pub mod permute;
pub mod prss;
pub mod session;
pub mod share;

pub use error::{Error, Result};
pub use field::{FieldElem, PrimeField};
pub use session::{Party, Share};
pub use share::ReplicatedShare;
