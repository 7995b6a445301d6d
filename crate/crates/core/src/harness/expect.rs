//! Checks of measured phase counters against closed-form expectations.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::net::meter::PhaseStats;

/// Expected counters of one phase; `None` leaves a counter unchecked.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    pub phase: String,
    pub rounds: Option<u64>,
    pub field_elems_out: Option<u64>,
    pub scalar_elems_out: Option<u64>,
    pub point_elems_out: Option<u64>,
    pub payload_bytes_out: Option<u64>,
}

impl Expectation {
    pub fn new(phase: &str) -> Self {
        Expectation { phase: phase.to_string(), ..Default::default() }
    }

    /// Shuffle of `m` rows of `cols` field columns, counted over all three
    /// servers: three reshares, each sending `2m` elements per column.
    pub fn shuffle_total(phase: &str, m: u64, cols: u64) -> Self {
        Expectation { rounds: Some(3), field_elems_out: Some(6 * m * cols), ..Self::new(phase) }
    }

    /// `m` multiplications in one round, counted at a single server.
    pub fn mul_batch(phase: &str, m: u64) -> Self {
        Expectation { rounds: Some(1), field_elems_out: Some(m), ..Self::new(phase) }
    }

    /// Nothing on the wire.
    pub fn silent(phase: &str) -> Self {
        Expectation {
            rounds: Some(0),
            field_elems_out: Some(0),
            scalar_elems_out: Some(0),
            point_elems_out: Some(0),
            payload_bytes_out: Some(0),
            ..Self::new(phase)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub phase: String,
    pub counter: &'static str,
    pub expected: u64,
    /// `None` when the phase was never metered.
    pub measured: Option<u64>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.measured {
            Some(m) => write!(f, "{}.{}: expected {}, measured {}", self.phase, self.counter, self.expected, m),
            None => write!(f, "{}: phase not metered", self.phase),
        }
    }
}

/// Sums the same phase across servers; rounds are shared, so they take the
/// maximum instead.
pub fn sum_servers(servers: &[Vec<PhaseStats>]) -> Vec<PhaseStats> {
    let mut out: Vec<PhaseStats> = Vec::new();
    for s in servers {
        for p in s {
            match out.iter_mut().find(|o| o.name == p.name) {
                Some(o) => {
                    let r = o.rounds.max(p.rounds);
                    o.accumulate(p);
                    o.rounds = r;
                }
                None => out.push(p.clone()),
            }
        }
    }
    out
}

pub fn meter_assert(phases: &[PhaseStats], expectations: &[Expectation]) -> Result<(), Vec<Violation>> {
    let mut bad = Vec::new();
    for e in expectations {
        let Some(p) = phases.iter().find(|p| p.name == e.phase) else {
            // an unmetered phase is only fine when silence was expected
            if *e != Expectation::silent(&e.phase) {
                bad.push(Violation { phase: e.phase.clone(), counter: "phase", expected: 1, measured: None });
            }
            continue;
        };
        let checks = [
            ("rounds", e.rounds, p.rounds),
            ("field_elems_out", e.field_elems_out, p.field_elems_out),
            ("scalar_elems_out", e.scalar_elems_out, p.scalar_elems_out),
            ("point_elems_out", e.point_elems_out, p.point_elems_out),
            ("payload_bytes_out", e.payload_bytes_out, p.payload_bytes_out),
        ];
        for (counter, want, got) in checks {
            if let Some(w) = want {
                if w != got {
                    bad.push(Violation { phase: e.phase.clone(), counter, expected: w, measured: Some(got) });
                }
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}
