use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::PanelResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::Config(format!("unknown format '{other}'; valid: csv, json"))),
        }
    }
}

/// One row of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub case: usize,
    pub estimator: String,
    pub state_index: usize,
    pub rmse: f64,
    pub mean_iterations: f64,
    pub seeds: usize,
    pub divergences: usize,
}

/// Long-format summary rows, one per estimator and state (1-based).
pub fn summary_rows(results: &[PanelResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for r in results {
        for e in &r.estimators {
            for (i, &v) in e.rmse.iter().enumerate() {
                rows.push(SummaryRow {
                    experiment: r.experiment.to_string(),
                    case: r.case,
                    estimator: e.name.clone(),
                    state_index: i + 1,
                    rmse: v,
                    mean_iterations: e.mean_iterations,
                    seeds: r.seeds.len(),
                    divergences: e.divergences,
                });
            }
        }
    }
    rows
}

/// Writes `header` lines prefixed with `# `, then the summary CSV.
pub fn write_summary_csv<W: Write>(results: &[PanelResult], header: &[String], mut out: W) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for row in summary_rows(results) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a summary CSV, skipping `#` header lines.
pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes seed-averaged channel variance traces as
/// `experiment, case, estimator, k, channel, lambda_est, lambda_true`.
/// Returns the number of data rows.
pub fn write_traces_csv<W: Write>(results: &[PanelResult], header: &[String], mut out: W) -> Result<usize> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["experiment", "case", "estimator", "k", "channel", "lambda_est", "lambda_true"])?;
    let mut rows = 0;
    for r in results {
        let Some(truth) = &r.lambda_true else { continue };
        for e in &r.estimators {
            let Some(trace) = &e.lambda_trace else { continue };
            for (k, (est, tru)) in trace.iter().zip(truth).enumerate() {
                for (c, (a, b)) in est.iter().zip(tru).enumerate() {
                    w.write_record([
                        r.experiment.to_string(),
                        r.case.to_string(),
                        e.name.clone(),
                        (k + 1).to_string(),
                        (c + 1).to_string(),
                        format!("{a:e}"),
                        format!("{b:e}"),
                    ])?;
                    rows += 1;
                }
            }
        }
    }
    w.flush()?;
    Ok(rows)
}

/// Path of the trace file written next to a summary file.
pub fn traces_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    path.with_file_name(format!("{stem}_lambda.csv"))
}

/// Writes results to `path`. CSV output also writes the traces, when any
/// were recorded, to [`traces_path`]; JSON output embeds everything.
pub fn export(results: &[PanelResult], path: &Path, format: ExportFormat, header: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut out = BufWriter::new(file);
    match format {
        ExportFormat::Csv => {
            write_summary_csv(results, header, &mut out)?;
            if results.iter().any(|r| r.lambda_true.is_some()) {
                let tp = traces_path(path);
                let f = File::create(&tp)
                    .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", tp.display()))))?;
                write_traces_csv(results, header, BufWriter::new(f))?;
            }
        }
        ExportFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                header: &'a [String],
                results: &'a [PanelResult],
            }
            serde_json::to_writer_pretty(&mut out, &Doc { header, results })?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}
