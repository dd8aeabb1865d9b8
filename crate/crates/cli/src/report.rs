use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiments::Report;

pub const CSV_NAME: &str = "report.csv";
pub const MANIFEST_NAME: &str = "manifest.json";

pub fn csv_bytes(report: &Report) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&report.header)?;
    for row in &report.rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn manifest(cfg: &ExperimentConfig, report: &Report, wall: Duration) -> Value {
    json!({
        "command": cfg.command.name(),
        "config": cfg.to_pairs(),
        "seed": cfg.seed,
        "threads": cfg.threads.unwrap_or_else(rayon::current_num_threads),
        "versions": { "rfmvm": rfmvm::VERSION, "rfmvm-cli": env!("CARGO_PKG_VERSION") },
        "wall_time_s": wall.as_secs_f64(),
        "columns": report.header,
        "rows": report.rows.len(),
        "summary": report.summary,
    })
}

/// Writes `report.csv` and `manifest.json` into `cfg.out_dir`, returning their paths.
pub fn write_outputs(cfg: &ExperimentConfig, report: &Report, wall: Duration) -> CliResult<(PathBuf, PathBuf)> {
    let dir: &Path = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let csv_path = dir.join(CSV_NAME);
    let man_path = dir.join(MANIFEST_NAME);
    std::fs::write(&csv_path, csv_bytes(report)?).map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    let text = serde_json::to_string_pretty(&manifest(cfg, report, wall)).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(&man_path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", man_path.display())))?;
    Ok((csv_path, man_path))
}
