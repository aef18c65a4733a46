//! Deterministic JSON and CSV writers.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A flat table: the CSV projection of every artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize, S: Serialize> {
    config_echo: &'a RunConfig,
    version: &'static str,
    #[serde(flatten)]
    body: &'a T,
    summary: &'a S,
    warnings: &'a [String],
}

/// Writes `<out>/<name>.<ext>`. JSON holds `{config_echo, version, ..body,
/// summary, warnings}`; CSV holds `table` only.
pub fn write_artifact<T: Serialize, S: Serialize>(
    cfg: &RunConfig,
    name: &str,
    body: &T,
    table: &Table,
    summary: &S,
    warnings: &[String],
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(format!("{name}.{}", cfg.format.extension()));
    match cfg.format {
        Format::Json => {
            let doc = Document { config_echo: cfg, version: VERSION, body, summary, warnings };
            let mut text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::from)?;
            text.push('\n');
            std::fs::write(&path, text)?;
        }
        Format::Csv => write_csv(&path, table)?,
    }
    Ok(path)
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(&table.columns).map_err(csv_io)?;
    for row in &table.rows {
        w.write_record(row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}
