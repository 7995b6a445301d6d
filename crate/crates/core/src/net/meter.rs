//! Per-phase communication and time accounting.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::frame::PayloadKind;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub name: String,
    /// `false` for data-independent preprocessing.
    pub online: bool,
    pub rounds: u64,
    pub messages_out: u64,
    pub messages_in: u64,
    /// Whole frames including headers.
    pub bytes_out: u64,
    pub bytes_in: u64,
    /// Payload bytes only.
    pub payload_bytes_out: u64,
    pub field_elems_out: u64,
    pub scalar_elems_out: u64,
    pub point_elems_out: u64,
    pub bit_words_out: u64,
    pub wall_secs: f64,
    pub cpu_secs: f64,
}

impl PhaseStats {
    pub fn accumulate(&mut self, o: &PhaseStats) {
        self.rounds += o.rounds;
        self.messages_out += o.messages_out;
        self.messages_in += o.messages_in;
        self.bytes_out += o.bytes_out;
        self.bytes_in += o.bytes_in;
        self.payload_bytes_out += o.payload_bytes_out;
        self.field_elems_out += o.field_elems_out;
        self.scalar_elems_out += o.scalar_elems_out;
        self.point_elems_out += o.point_elems_out;
        self.bit_words_out += o.bit_words_out;
        self.wall_secs += o.wall_secs;
        self.cpu_secs += o.cpu_secs;
    }

    /// Counter-wise difference `self - earlier`.
    pub fn since(&self, earlier: &PhaseStats) -> PhaseStats {
        PhaseStats {
            name: self.name.clone(),
            online: self.online,
            rounds: self.rounds - earlier.rounds,
            messages_out: self.messages_out - earlier.messages_out,
            messages_in: self.messages_in - earlier.messages_in,
            bytes_out: self.bytes_out - earlier.bytes_out,
            bytes_in: self.bytes_in - earlier.bytes_in,
            payload_bytes_out: self.payload_bytes_out - earlier.payload_bytes_out,
            field_elems_out: self.field_elems_out - earlier.field_elems_out,
            scalar_elems_out: self.scalar_elems_out - earlier.scalar_elems_out,
            point_elems_out: self.point_elems_out - earlier.point_elems_out,
            bit_words_out: self.bit_words_out - earlier.bit_words_out,
            wall_secs: self.wall_secs - earlier.wall_secs,
            cpu_secs: self.cpu_secs - earlier.cpu_secs,
        }
    }
}

/// CPU time consumed by the calling thread.
pub fn thread_cpu_time() -> Duration {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: clock_gettime only writes into the provided timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return Duration::ZERO;
    }
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

#[derive(Debug)]
pub struct Meter {
    phases: Vec<PhaseStats>,
    current: usize,
    started: Instant,
    cpu_started: Duration,
}

impl Default for Meter {
    fn default() -> Self {
        Self::new()
    }
}

impl Meter {
    pub fn new() -> Self {
        Meter {
            phases: vec![PhaseStats { name: "setup".into(), online: false, ..Default::default() }],
            current: 0,
            started: Instant::now(),
            cpu_started: thread_cpu_time(),
        }
    }

    /// Closes the running phase and starts (or resumes) `name`.
    pub fn begin(&mut self, name: &str, online: bool) {
        self.close();
        self.current = match self.phases.iter().position(|p| p.name == name) {
            Some(i) => i,
            None => {
                self.phases.push(PhaseStats { name: name.to_string(), online, ..Default::default() });
                self.phases.len() - 1
            }
        };
    }

    fn close(&mut self) {
        let now = Instant::now();
        let cpu = thread_cpu_time();
        let p = &mut self.phases[self.current];
        p.wall_secs += (now - self.started).as_secs_f64();
        p.cpu_secs += cpu.saturating_sub(self.cpu_started).as_secs_f64();
        self.started = now;
        self.cpu_started = cpu;
    }

    pub fn current_phase(&self) -> &str {
        &self.phases[self.current].name
    }

    pub(crate) fn round(&mut self) {
        self.phases[self.current].rounds += 1;
    }

    pub(crate) fn sent(&mut self, kind: PayloadKind, elems: u64, payload: usize, frame: usize) {
        let p = &mut self.phases[self.current];
        p.messages_out += 1;
        p.bytes_out += frame as u64;
        p.payload_bytes_out += payload as u64;
        match kind {
            PayloadKind::Field => p.field_elems_out += elems,
            PayloadKind::Scalar => p.scalar_elems_out += elems,
            PayloadKind::Point => p.point_elems_out += elems,
            PayloadKind::Bits => p.bit_words_out += elems,
            _ => {}
        }
    }

    pub(crate) fn received(&mut self, frame: usize) {
        let p = &mut self.phases[self.current];
        p.messages_in += 1;
        p.bytes_in += frame as u64;
    }

    /// Snapshot of all phases with the running one brought up to date.
    pub fn phases(&mut self) -> Vec<PhaseStats> {
        self.close();
        self.phases.clone()
    }

    /// Sum over every phase.
    pub fn totals(&mut self) -> PhaseStats {
        let mut t = PhaseStats { name: "total".into(), ..Default::default() };
        for p in self.phases() {
            t.accumulate(&p);
        }
        t
    }

    pub fn phase(&mut self, name: &str) -> Option<PhaseStats> {
        self.phases().into_iter().find(|p| p.name == name)
    }
}
