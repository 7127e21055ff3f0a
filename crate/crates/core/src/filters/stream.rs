use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::{Estimator, EstimatorKind, FilterConfig};
use crate::error::{Error, Result};
use crate::serde_mat;
use crate::statespace::LinearModel;

/// Everything the streaming filter needs: model, estimator and prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub model: LinearModel,
    pub filter: FilterConfig,
    #[serde(default, with = "serde_mat::option_vector", skip_serializing_if = "Option::is_none")]
    pub x0: Option<DVector<f64>>,
    #[serde(default, with = "serde_mat::option_matrix", skip_serializing_if = "Option::is_none")]
    pub p0: Option<DMatrix<f64>>,
}

impl StreamConfig {
    pub fn estimator(&self) -> Result<Estimator> {
        self.model.validate()?;
        let n = self.model.n();
        let x0 = self.x0.clone().unwrap_or_else(|| DVector::zeros(n));
        let p0 = self.p0.clone().unwrap_or_else(|| DMatrix::identity(n, n));
        Estimator::new(self.filter.clone(), &self.model, x0, p0)
    }
}

struct Columns {
    k: usize,
    y: Vec<usize>,
    u: Vec<usize>,
}

fn indexed(headers: &csv::StringRecord, prefix: &str) -> Vec<usize> {
    let mut cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(pos, h)| {
            h.trim()
                .strip_prefix(prefix)
                .and_then(|s| s.parse::<usize>().ok())
                .map(|idx| (idx, pos))
        })
        .collect();
    cols.sort();
    cols.into_iter().map(|(_, pos)| pos).collect()
}

fn columns(headers: &csv::StringRecord, model: &LinearModel) -> Result<Columns> {
    let k = headers
        .iter()
        .position(|h| h.trim() == "k")
        .ok_or_else(|| Error::Config("input header has no 'k' column".into()))?;
    let y = indexed(headers, "y_");
    if y.len() != model.m() {
        return Err(Error::Config(format!(
            "input header has {} measurement columns y_1..; model expects {}",
            y.len(),
            model.m()
        )));
    }
    let u = indexed(headers, "u_");
    if !u.is_empty() && u.len() != model.p() {
        return Err(Error::Config(format!("input header has {} input columns; model expects {}", u.len(), model.p())));
    }
    Ok(Columns { k, y, u })
}

fn parse_field(record: &csv::StringRecord, pos: usize, line: u64) -> Result<f64> {
    let raw = record
        .get(pos)
        .ok_or_else(|| Error::Config(format!("malformed row at line {line}: missing column {}", pos + 1)))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("malformed row at line {line}: cannot parse '{raw}'")))
}

/// Filters CSV measurements row by row.
///
/// Input columns are `k`, `y_1..y_m` and optionally `u_1..u_p`; the input of
/// a row drives the prediction into that row's measurement. Output columns
/// are `k`, `x_1..x_n`, `iterations`, `lambda_1..lambda_l`, plus
/// `reverted_1..reverted_l` for the switching estimator. Returns the number
/// of rows processed.
pub fn run_stream<R: Read, W: Write>(cfg: &StreamConfig, input: R, output: W) -> Result<usize> {
    let model = &cfg.model;
    let mut est = cfg.estimator()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let cols = columns(reader.headers()?, model)?;
    let mut writer = csv::Writer::from_writer(output);
    let l = model.channels();
    let with_reverted = cfg.filter.estimator == EstimatorKind::StkfAr2;
    let mut header = vec!["k".to_string()];
    header.extend((1..=model.n()).map(|i| format!("x_{i}")));
    header.push("iterations".into());
    header.extend((1..=l).map(|i| format!("lambda_{i}")));
    if with_reverted {
        header.extend((1..=l).map(|i| format!("reverted_{i}")));
    }
    writer.write_record(&header)?;

    let mut record = csv::StringRecord::new();
    let mut rows = 0;
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Config(format!("malformed row at line {line}: {e}"))
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(rows as u64 + 2);
        let k = parse_field(&record, cols.k, line)?;
        let y = DVector::from_iterator(
            cols.y.len(),
            cols.y.iter().map(|&p| parse_field(&record, p, line)).collect::<Result<Vec<_>>>()?,
        );
        let u = if cols.u.is_empty() {
            None
        } else {
            Some(DVector::from_vec(cols.u.iter().map(|&p| parse_field(&record, p, line)).collect::<Result<Vec<_>>>()?))
        };
        let diag = est.step(model, u.as_ref(), &y)?;
        let mut out = vec![format!("{k}")];
        out.extend(est.state().x.iter().map(|v| format!("{v:e}")));
        out.push(diag.iterations.to_string());
        out.extend(est.variance_estimate(&diag).iter().map(|v| format!("{v:e}")));
        if with_reverted {
            out.extend(diag.reverted.iter().map(|&r| (r as u8).to_string()));
        }
        writer.write_record(&out)?;
        rows += 1;
    }
    writer.flush()?;
    Ok(rows)
}
