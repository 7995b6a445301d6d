//! Flattens the metering block of JSON reports into CSV rows.

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use plem::harness::{Metering, PhaseSummary};
use plem::{Error, Result};

#[derive(Deserialize)]
struct WithMetering {
    metering: Metering,
}

pub const HEADER: [&str; 14] = [
    "report",
    "users",
    "phase",
    "online",
    "rounds",
    "messages_out",
    "bytes_out",
    "bytes_in",
    "field_elems_out",
    "point_elems_out",
    "scalar_elems_out",
    "wall_secs",
    "cpu_secs",
    "mapping_tests",
];

fn row(report: &str, m: &Metering, p: &PhaseSummary) -> Vec<String> {
    vec![
        report.to_string(),
        m.users.to_string(),
        p.name.clone(),
        p.online.to_string(),
        p.rounds.to_string(),
        p.messages_out.to_string(),
        p.bytes_out.to_string(),
        p.bytes_in.to_string(),
        p.field_elems_out.to_string(),
        p.point_elems_out.to_string(),
        p.scalar_elems_out.to_string(),
        format!("{:.6}", p.wall_secs),
        format!("{:.6}", p.cpu_secs),
        m.mapping_tests.to_string(),
    ]
}

/// One row per phase plus the offline and online totals of every report.
pub fn reports_to_csv<W: Write>(reports: &[&Path], out: W) -> Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Malformed(e.to_string());
    w.write_record(HEADER).map_err(csv_err)?;
    let mut rows = 0;
    for path in reports {
        let text = std::fs::read_to_string(path)?;
        let r: WithMetering = serde_json::from_str(&text)
            .map_err(|e| Error::Malformed(format!("{}: no metering block ({e})", path.display())))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for p in r.metering.phases.iter().chain([&r.metering.offline, &r.metering.online]) {
            w.write_record(row(&name, &r.metering, p)).map_err(csv_err)?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}
