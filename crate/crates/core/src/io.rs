//! CSV and JSON export. Floats are written with 17 significant digits so
//! files round-trip exactly and are byte-stable across runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::ErrorCurve;
use crate::continuum::{ContinuumResidual, Provenance};
use crate::error::{Error, Result};
use crate::kernels::{KernelResidual, KernelsN};
use crate::simulate::Trajectory;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Row-oriented CSV writer with a fixed header.
pub struct CsvTable {
    inner: csv::Writer<BufWriter<File>>,
    columns: usize,
}

impl CsvTable {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path)?;
        let mut inner = csv::WriterBuilder::new().from_writer(BufWriter::new(file));
        inner.write_record(header).map_err(csv_err)?;
        Ok(Self {
            inner,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        if fields.len() != self.columns {
            return Err(crate::error::mismatch("csv row", fields.len(), self.columns));
        }
        self.inner.write_record(fields).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Columns `i, x, xi, k`; `i` is 1-based and `i = n+1` is the `v` kernel.
/// Only the lower triangle `xi <= x` is written.
pub fn write_kernels_csv(path: &Path, kn: &KernelsN) -> Result<()> {
    let mut t = CsvTable::create(path, &["i", "x", "xi", "k"])?;
    let xs = kn.grid().points();
    for c in 0..=kn.n() {
        for (a, &x) in xs.iter().enumerate() {
            for (b, &xi) in xs[..=a].iter().enumerate() {
                t.row(&[(c + 1).to_string(), fmt_f64(x), fmt_f64(xi), fmt_f64(kn.at(c, a, b))])?;
            }
        }
    }
    t.finish()
}

/// JSON sidecar written next to a kernel CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSidecar {
    pub n: usize,
    pub m: usize,
    pub mode: String,
    pub params_hash: String,
    pub max_abs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<KernelResidual>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuum_residual: Option<ContinuumResidual>,
}

/// Columns `t, U, e_norm`.
pub fn write_trajectory_csv(path: &Path, tr: &Trajectory) -> Result<()> {
    let mut t = CsvTable::create(path, &["t", "U", "e_norm"])?;
    for ((time, u), e) in tr.times.iter().zip(&tr.controls).zip(tr.norms()) {
        t.row(&[fmt_f64(*time), fmt_f64(*u), fmt_f64(e)])?;
    }
    t.finish()
}

/// Columns `t, i, x, value` at the saved samples nearest to `times`;
/// `i = n+1` holds `v`.
pub fn write_snapshots_csv(path: &Path, tr: &Trajectory, times: &[f64]) -> Result<()> {
    let mut t = CsvTable::create(path, &["t", "i", "x", "value"])?;
    if tr.is_empty() {
        return t.finish();
    }
    let g = tr.grid();
    let mut picked: Vec<usize> = times.iter().map(|&s| tr.index_near(s)).collect();
    picked.dedup();
    for j in picked {
        let s = &tr.states[j];
        let tj = fmt_f64(tr.times[j]);
        for i in 1..=s.n() + 1 {
            let values = if i <= s.n() { s.u(i - 1) } else { s.v() };
            for (x, v) in g.points().iter().zip(values) {
                t.row(&[tj.clone(), i.to_string(), fmt_f64(*x), fmt_f64(*v)])?;
            }
        }
    }
    t.finish()
}

/// Columns `t, e`.
pub fn write_error_curve_csv(path: &Path, curve: &ErrorCurve) -> Result<()> {
    let mut t = CsvTable::create(path, &["t", "e"])?;
    for (time, e) in curve.times.iter().zip(&curve.values) {
        t.row(&[fmt_f64(*time), fmt_f64(*e)])?;
    }
    t.finish()
}
