//! Append-only registry of meter identities, persisted as JSON lines.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dso::tuples::{hex, unhex};
use crate::ec::{decode_point, encode_point, pad_point, ProjectivePoint, POINT_LEN};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryRow {
    pub meter: String,
    /// Compressed identity point, hex.
    pub id: String,
}

#[derive(Debug, Default)]
pub struct Registry {
    path: Option<PathBuf>,
    order: Vec<String>,
    ids: HashMap<String, ProjectivePoint>,
    by_point: HashMap<[u8; POINT_LEN], String>,
}

fn parse_id(b: &[u8]) -> Result<ProjectivePoint> {
    if b.len() != POINT_LEN {
        return Err(Error::OffCurve);
    }
    let p = decode_point(b)?;
    if p == ProjectivePoint::IDENTITY || p == pad_point() {
        return Err(Error::OffCurve);
    }
    Ok(p)
}

impl Registry {
    pub fn in_memory() -> Self {
        Registry::default()
    }

    /// Opens (or creates) a registry file and replays its rows.
    pub fn open(path: &Path) -> Result<Self> {
        let mut r = Registry { path: Some(path.to_path_buf()), ..Default::default() };
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: RegistryRow = serde_json::from_str(&line)?;
                let bytes = unhex(&row.id).ok_or_else(|| Error::Malformed(format!("registry id for {}", row.meter)))?;
                r.insert(row.meter, parse_id(&bytes)?)?;
            }
        }
        Ok(r)
    }

    fn insert(&mut self, meter: String, p: ProjectivePoint) -> Result<()> {
        let enc = encode_point(&p);
        if self.ids.contains_key(&meter) || self.by_point.contains_key(&enc) {
            return Err(Error::DuplicateIdentity);
        }
        self.by_point.insert(enc, meter.clone());
        self.ids.insert(meter.clone(), p);
        self.order.push(meter);
        Ok(())
    }

    /// Adds a meter with its identity bytes and appends the row to disk.
    pub fn register(&mut self, meter: &str, id: &[u8]) -> Result<ProjectivePoint> {
        let p = parse_id(id)?;
        self.insert(meter.to_string(), p)?;
        if let Some(path) = &self.path {
            let row = RegistryRow { meter: meter.to_string(), id: hex(id) };
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(&row)?)?;
        }
        Ok(p)
    }

    pub fn get(&self, meter: &str) -> Option<&ProjectivePoint> {
        self.ids.get(meter)
    }

    pub fn meter_of(&self, id: &ProjectivePoint) -> Option<&str> {
        self.by_point.get(&encode_point(id)).map(String::as_str)
    }

    /// Meters in registration order.
    pub fn meters(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}
