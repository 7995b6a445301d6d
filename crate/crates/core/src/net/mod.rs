//! Framing, transports and metering.

pub mod frame;
pub mod meter;
pub mod transport;

pub use frame::{Frame, PayloadKind, SessionId};
pub use meter::{Meter, PhaseStats};
pub use transport::{loopback_mesh, LoopbackOptions, LoopbackTransport, TapRecord, TcpTransport, Transport};
