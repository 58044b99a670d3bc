//! Result files: `results.json`, `cells.csv` and one `trace_<cell>.csv` per
//! fusion solve when iterates were retained.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::experiment::{CellRecord, RunRecord};

#[derive(Serialize)]
struct CsvCell<'a> {
    index: usize,
    lambda: Option<f64>,
    tau_fraction: Option<f64>,
    tau: Option<usize>,
    view: Option<usize>,
    restart: usize,
    restart_seed: u64,
    acc: Option<f64>,
    nmi: Option<f64>,
    purity: Option<f64>,
    inertia: Option<f64>,
    objective_final: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    wall_time_ms: f64,
    error: Option<&'a str>,
}

impl<'a> From<&'a CellRecord> for CsvCell<'a> {
    fn from(c: &'a CellRecord) -> Self {
        CsvCell {
            index: c.index,
            lambda: c.lambda,
            tau_fraction: c.tau_fraction,
            tau: c.tau,
            view: c.view,
            restart: c.restart,
            restart_seed: c.restart_seed,
            acc: c.acc,
            nmi: c.nmi,
            purity: c.purity,
            inertia: c.inertia,
            objective_final: c.objective_final,
            iterations: c.iterations,
            converged: c.converged,
            wall_time_ms: c.wall_time_ms,
            error: c.error.as_deref(),
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_rows<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Writes every result file into `out_dir`, creating it if needed, and
/// returns the paths written.
pub fn emit_results(record: &RunRecord, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if record.cells.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut written = Vec::new();

    let json = out_dir.join("results.json");
    std::fs::write(&json, record.to_json() + "\n").map_err(|e| HarnessError::io(&json, e))?;
    written.push(json);

    let cells = out_dir.join("cells.csv");
    write_rows(&cells, record.cells.iter().map(CsvCell::from))?;
    written.push(cells);

    for trace in &record.traces {
        let path = out_dir.join(format!("trace_{}.csv", trace.cell));
        write_rows(&path, &trace.rows)?;
        written.push(path);
    }
    Ok(written)
}
