//! Artifact writers. Every file is written to a temporary sibling and renamed
//! into place, so a reader never sees a partial artifact.
//!
//! CSV schemas (header row first, RFC 4180 quoting, shortest round-trip floats):
//!
//! * `qq_<method>.csv`: `level_index, level_norm, is_extreme, component, q_ref, q_cmp`
//! * `deviations.csv`: `method, subset, rows, max_abs, mean_abs, max_rel`
//! * `rates.csv`: `series, n, distance, slope, slope_se, theoretical_slope, count, grid_per_dim`
//! * `moments.csv`: `y, quantity, closed_form, oracle, oracle_se, z`
//! * `sample_<method>.csv`: `x0, …, x{d-1}`

use std::io::Write;
use std::path::Path;

use normex_core::compare::{DeviationStats, RateReport};
use normex_core::{LineDeviation, Method, QQRow, SampleMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".normex-")
        .tempfile_in(dir)
        .map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::io("<csv buffer>", e.into_error()))
}

pub fn qq_csv(rows: &[QQRow]) -> Result<Vec<u8>> {
    if rows.is_empty() {
        // keep the header so the schema is visible
        return Ok(b"level_index,level_norm,is_extreme,component,q_ref,q_cmp\n".to_vec());
    }
    csv_bytes(rows)
}

pub fn read_qq_csv(path: &Path) -> Result<Vec<QQRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => CliError::Input(format!("{}: {e}", path.display())),
        _ => CliError::Csv(e),
    })?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<QQRow>, _>>()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::Input(format!("{}: no rows", path.display())));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub method: Method,
    pub subset: String,
    pub rows: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub max_rel: f64,
}

impl DeviationRow {
    fn new(method: Method, subset: &str, s: &DeviationStats) -> Self {
        Self {
            method,
            subset: subset.into(),
            rows: s.rows,
            max_abs: s.max_abs,
            mean_abs: s.mean_abs,
            max_rel: s.max_rel,
        }
    }
}

pub fn deviation_rows(method: Method, dev: &LineDeviation) -> Vec<DeviationRow> {
    vec![
        DeviationRow::new(method, "overall", &dev.overall),
        DeviationRow::new(method, "extreme", &dev.extreme),
        DeviationRow::new(method, "moderate", &dev.moderate),
    ]
}

pub fn deviations_csv(rows: &[DeviationRow]) -> Result<Vec<u8>> {
    csv_bytes(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    /// A method name, or `noise_floor` for direct sum against direct sum.
    pub series: String,
    pub n: usize,
    pub distance: f64,
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub theoretical_slope: Option<f64>,
    pub count: usize,
    pub grid_per_dim: usize,
}

pub fn rate_rows(report: &RateReport) -> Vec<RateRow> {
    let mut out = Vec::new();
    for m in &report.methods {
        for p in &m.points {
            out.push(RateRow {
                series: m.method.name().into(),
                n: p.n,
                distance: p.distance,
                slope: Some(m.slope),
                slope_se: Some(m.slope_se),
                theoretical_slope: m.theoretical_slope,
                count: report.count,
                grid_per_dim: report.grid_per_dim,
            });
        }
    }
    for p in &report.noise_floor {
        out.push(RateRow {
            series: "noise_floor".into(),
            n: p.n,
            distance: p.distance,
            slope: None,
            slope_se: None,
            theoretical_slope: None,
            count: report.count,
            grid_per_dim: report.grid_per_dim,
        });
    }
    out
}

pub fn rates_csv(report: &RateReport) -> Result<Vec<u8>> {
    csv_bytes(rate_rows(report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub y: f64,
    pub quantity: String,
    pub closed_form: f64,
    pub oracle: f64,
    pub oracle_se: f64,
    pub z: f64,
}

pub fn moments_csv(rows: &[MomentRow]) -> Result<Vec<u8>> {
    csv_bytes(rows)
}

pub fn sample_csv(sample: &SampleMatrix) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((0..sample.cols()).map(|j| format!("x{j}")))?;
    for r in sample.iter_rows() {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::io("<csv buffer>", e.into_error()))
}

/// Reads a numeric CSV with a header row into a sample.
pub fn read_sample_csv(path: &Path) -> Result<SampleMatrix> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let cols = r.headers().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| CliError::Input(format!("{}: row {}: not a number: {field:?}", path.display(), i + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Input(format!("{}: no rows", path.display())));
    }
    SampleMatrix::from_vec(rows, cols, data).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
