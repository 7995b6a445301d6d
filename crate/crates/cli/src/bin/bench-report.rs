use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use plem_cli::bench::reports_to_csv;

/// Collects the per-phase metering of JSON reports into one CSV table.
#[derive(Parser)]
#[command(name = "bench-report")]
struct Args {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let a = Args::parse();
    let paths: Vec<&std::path::Path> = a.reports.iter().map(|p| p.as_path()).collect();
    let r = match &a.out {
        Some(p) => std::fs::File::create(p).map_err(plem::Error::from).and_then(|f| reports_to_csv(&paths, f)),
        None => reports_to_csv(&paths, std::io::stdout().lock()),
    };
    match r {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench-report: {e}");
            ExitCode::FAILURE
        }
    }
}
