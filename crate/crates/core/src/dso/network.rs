//! DC network model, injection shift factors and electrical distances.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: u32,
    pub to: u32,
    /// Series reactance in per-unit.
    pub reactance: f64,
}

/// Buses, lines, the slack bus and the bus of every smart meter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub buses: Vec<u32>,
    pub slack: u32,
    pub lines: Vec<Line>,
    pub users: BTreeMap<String, u32>,
}

impl NetworkModel {
    pub fn from_json(s: &str) -> Result<Self> {
        let m: NetworkModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    fn bus_index(&self) -> HashMap<u32, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (*b, i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let idx = self.bus_index();
        if idx.len() != self.buses.len() {
            return Err(Error::ConfigInvalid("duplicate bus id".into()));
        }
        if !idx.contains_key(&self.slack) {
            return Err(Error::ConfigInvalid(format!("slack bus {} not in bus list", self.slack)));
        }
        for l in &self.lines {
            if !idx.contains_key(&l.from) || !idx.contains_key(&l.to) || l.from == l.to {
                return Err(Error::ConfigInvalid(format!("line {}-{} has a bad endpoint", l.from, l.to)));
            }
            if !(l.reactance > 0.0 && l.reactance.is_finite()) {
                return Err(Error::SingularNetwork(format!("line {}-{} has reactance {}", l.from, l.to, l.reactance)));
            }
        }
        for (u, b) in &self.users {
            if !idx.contains_key(b) {
                return Err(Error::ConfigInvalid(format!("meter {u} sits on unknown bus {b}")));
            }
        }
        // connectivity from the slack
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            adj[idx[&l.from]].push(idx[&l.to]);
            adj[idx[&l.to]].push(idx[&l.from]);
        }
        let mut seen = vec![false; n];
        let mut q = VecDeque::from([idx[&self.slack]]);
        seen[idx[&self.slack]] = true;
        while let Some(v) = q.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    q.push_back(w);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::SingularNetwork(format!("bus {} is not connected to the slack", self.buses[i])));
        }
        Ok(())
    }

    /// Radial feeder of `buses` buses with random reactances; meters
    /// `m0 .. m{users-1}` are spread round-robin over the non-slack buses.
    pub fn synthetic_radial<R: Rng + ?Sized>(buses: u32, users: usize, rng: &mut R) -> Self {
        assert!(buses >= 2);
        let ids: Vec<u32> = (1..=buses).collect();
        let lines = (2..=buses)
            .map(|b| Line { from: rng.gen_range(1..b), to: b, reactance: rng.gen_range(0.01..0.2) })
            .collect();
        let users = (0..users).map(|u| (format!("m{u}"), 2 + (u as u32 % (buses - 1)))).collect();
        NetworkModel { buses: ids, slack: 1, lines, users }
    }
}

/// Shift factors `phi[line][bus]` for injection at `bus` and withdrawal at the slack.
#[derive(Clone, Debug)]
pub struct PtdfMatrix {
    bus_index: HashMap<u32, usize>,
    pub phi: DMatrix<f64>,
}

impl PtdfMatrix {
    pub fn lines(&self) -> usize {
        self.phi.nrows()
    }

    pub fn column(&self, bus: u32) -> Option<Vec<f64>> {
        let k = *self.bus_index.get(&bus)?;
        Some(self.phi.column(k).iter().copied().collect())
    }

    /// `phi_{ij,line}` for a unit transfer from bus `i` to bus `j`.
    pub fn pairwise(&self, i: u32, j: u32) -> Option<Vec<f64>> {
        let a = self.column(i)?;
        let b = self.column(j)?;
        Some(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    }

    /// Electrical distance: absolute line factors summed over all lines.
    pub fn distance(&self, i: u32, j: u32) -> Option<f64> {
        Some(self.pairwise(i, j)?.iter().map(|v| v.abs()).sum())
    }
}

/// DC shift factors from the reduced susceptance matrix.
pub fn compute_ptdf(model: &NetworkModel) -> Result<PtdfMatrix> {
    model.validate()?;
    let idx = model.bus_index();
    let n = model.buses.len();
    let s = idx[&model.slack];
    // reduced position of every non-slack bus
    let red: Vec<Option<usize>> = (0..n).map(|k| if k == s { None } else { Some(k - (k > s) as usize) }).collect();
    let mut b = DMatrix::<f64>::zeros(n - 1, n - 1);
    for l in &model.lines {
        let y = 1.0 / l.reactance;
        let (f, t) = (red[idx[&l.from]], red[idx[&l.to]]);
        if let Some(f) = f {
            b[(f, f)] += y;
        }
        if let Some(t) = t {
            b[(t, t)] += y;
        }
        if let (Some(f), Some(t)) = (f, t) {
            b[(f, t)] -= y;
            b[(t, f)] -= y;
        }
    }
    let x = if n > 1 {
        b.lu().try_inverse().ok_or_else(|| Error::SingularNetwork("susceptance matrix is singular".into()))?
    } else {
        DMatrix::zeros(0, 0)
    };
    let angle = |bus: usize, inj: usize| -> f64 {
        match (red[bus], red[inj]) {
            (Some(r), Some(c)) => x[(r, c)],
            _ => 0.0,
        }
    };
    let mut phi = DMatrix::<f64>::zeros(model.lines.len(), n);
    for (li, l) in model.lines.iter().enumerate() {
        let (f, t) = (idx[&l.from], idx[&l.to]);
        for k in 0..n {
            phi[(li, k)] = (angle(f, k) - angle(t, k)) / l.reactance;
        }
    }
    Ok(PtdfMatrix { bus_index: idx, phi })
}
