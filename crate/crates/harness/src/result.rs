//! Per-replicate records, aggregated rows and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use adaptrate_core::posterior::fmt17;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::stats::{mean, standard_error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Adaptive,
    Periodic,
}

impl Arm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Adaptive => "adaptive",
            Arm::Periodic => "periodic",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Arm::Adaptive),
            "periodic" => Ok(Arm::Periodic),
            other => Err(HarnessError::Csv(format!("unknown arm `{other}`"))),
        }
    }
}

/// One replicate of one cell.
///
/// `x` and `y` locate the cell: the period (periodic arm), θ (tolerance
/// sweeps), the fixed rates (heatmaps), the ring size, or the Bernoulli
/// parameter and number of present links (structure sweeps). Unused
/// coordinates are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub variant: usize,
    pub arm: Arm,
    pub x: f64,
    pub y: f64,
    pub replicate: usize,
    pub h_true: Vec<f64>,
    pub n_samples: usize,
    pub converged: bool,
    pub capped: bool,
    pub mse: Vec<f64>,
    pub mae: f64,
    pub cap_hits: usize,
}

/// Mean and standard error over the replicates of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub study: String,
    pub variant: String,
    pub arm: Arm,
    pub x: f64,
    pub y: f64,
    pub replicates: usize,
    /// Replicates that stopped at the step cap.
    pub capped: usize,
    pub mean_ns: f64,
    pub se_ns: f64,
    pub mse_h0: f64,
    pub se_mse_h0: f64,
    /// NaN for one-rate models.
    pub mse_h1: f64,
    pub se_mse_h1: f64,
    pub mae: f64,
    pub se_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub name: String,
    pub rows: Vec<ResultRow>,
    pub replicates: Vec<ReplicateRecord>,
}

pub const HEADER: [&str; 15] = [
    "study",
    "variant",
    "arm",
    "x",
    "y",
    "replicates",
    "capped",
    "mean_ns",
    "se_ns",
    "mse_h0",
    "se_mse_h0",
    "mse_h1",
    "se_mse_h1",
    "mae",
    "se_mae",
];

fn key_cmp(a: &ReplicateRecord, b: &ReplicateRecord) -> std::cmp::Ordering {
    (a.variant, a.arm)
        .cmp(&(b.variant, b.arm))
        .then(a.x.total_cmp(&b.x))
        .then(a.y.total_cmp(&b.y))
        .then(a.replicate.cmp(&b.replicate))
}

fn same_cell(a: &ReplicateRecord, b: &ReplicateRecord) -> bool {
    a.variant == b.variant && a.arm == b.arm && a.x.total_cmp(&b.x).is_eq() && a.y.total_cmp(&b.y).is_eq()
}

/// Groups records into rows ordered by variant, arm, `x`, `y`; the result
/// does not depend on the order of `records`.
pub fn aggregate(study: &str, labels: &[String], records: &[ReplicateRecord]) -> Vec<ResultRow> {
    let mut sorted: Vec<&ReplicateRecord> = records.iter().collect();
    sorted.sort_by(|a, b| key_cmp(a, b));
    let mut rows = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && same_cell(sorted[start], sorted[end]) {
            end += 1;
        }
        let group = &sorted[start..end];
        let col = |f: &dyn Fn(&ReplicateRecord) -> f64| -> (f64, f64) {
            let xs: Vec<f64> = group.iter().map(|r| f(r)).collect();
            (mean(&xs), standard_error(&xs))
        };
        let (mean_ns, se_ns) = col(&|r| r.n_samples as f64);
        let (mse_h0, se_mse_h0) = col(&|r| r.mse[0]);
        let (mse_h1, se_mse_h1) = if group[0].mse.len() > 1 { col(&|r| r.mse[1]) } else { (f64::NAN, f64::NAN) };
        let (mae, se_mae) = col(&|r| r.mae);
        let first = group[0];
        rows.push(ResultRow {
            study: study.to_string(),
            variant: labels[first.variant].clone(),
            arm: first.arm,
            x: first.x,
            y: first.y,
            replicates: group.len(),
            capped: group.iter().filter(|r| r.capped).count(),
            mean_ns,
            se_ns,
            mse_h0,
            se_mse_h0,
            mse_h1,
            se_mse_h1,
            mae,
            se_mae,
        });
        start = end;
    }
    rows
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        fmt17(v)
    }
}

/// Writes the header and one line per row.
pub fn write_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER)?;
    for r in rows {
        out.write_record([
            r.study.clone(),
            r.variant.clone(),
            r.arm.as_str().into(),
            num(r.x),
            num(r.y),
            r.replicates.to_string(),
            r.capped.to_string(),
            num(r.mean_ns),
            num(r.se_ns),
            num(r.mse_h0),
            num(r.se_mse_h0),
            num(r.mse_h1),
            num(r.se_mse_h1),
            num(r.mae),
            num(r.se_mae),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

pub fn write_csv_file(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(rows, std::fs::File::create(path)?)
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(HarnessError::Csv(format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|e| HarnessError::Csv(format!("row {i}, column {}: {e}", HEADER[k])))
        };
        let u = |k: usize| -> Result<usize> {
            rec[k].parse::<usize>().map_err(|e| HarnessError::Csv(format!("row {i}, column {}: {e}", HEADER[k])))
        };
        rows.push(ResultRow {
            study: rec[0].to_string(),
            variant: rec[1].to_string(),
            arm: Arm::parse(&rec[2])?,
            x: f(3)?,
            y: f(4)?,
            replicates: u(5)?,
            capped: u(6)?,
            mean_ns: f(7)?,
            se_ns: f(8)?,
            mse_h0: f(9)?,
            se_mse_h0: f(10)?,
            mse_h1: f(11)?,
            se_mse_h1: f(12)?,
            mae: f(13)?,
            se_mae: f(14)?,
        });
    }
    Ok(rows)
}
