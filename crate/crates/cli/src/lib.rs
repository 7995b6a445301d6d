//! TCP deployment of the market roles and the helpers behind the binaries.

pub mod bench;
pub mod dso;
pub mod keys;
pub mod server;
pub mod swarm;

/// Splits a comma-separated address list.
pub fn split_addrs(s: &str) -> Vec<String> {
    s.split(',').map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect()
}
