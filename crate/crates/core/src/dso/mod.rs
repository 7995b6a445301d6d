//! Grid operator: network fees, identity registry and signed fee tuples.

pub mod fees;
pub mod network;
pub mod registry;
pub mod service;
pub mod tuples;

pub use fees::{charge, distance, fee, to_fixed, FeeTable};
pub use network::{compute_ptdf, Line, NetworkModel, PtdfMatrix};
pub use registry::Registry;
pub use service::{Dso, DsoRequest, DsoResponse, IssuanceMode, Issuance};
pub use tuples::{build_tuple, Direction, DsoPublicKey, DsoSigningKey, PeerHandle, ServerKey, SignedTupleShare, TupleBundle};
