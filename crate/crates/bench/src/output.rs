//! CSV writers. Floats use Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes; absent values are empty cells.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sadmm_core::admm::{ProbeRecord, TraceRecord};
use sadmm_core::Result;

pub const TRACE_HEADER: [&str; 13] = [
    "k",
    "loss_F",
    "aug_lagrangian",
    "potential_P",
    "residual_norm",
    "dx_norm",
    "dy_norm",
    "dlam_norm",
    "stat_x",
    "stat_y",
    "stat_r",
    "grad_calls",
    "wall_time_s",
];

pub const PROBE_HEADER: [&str; 7] = ["k", "stat_x", "stat_y", "stat_r", "xi_x", "bias_measured", "bias_predicted"];

/// Plain notation in `[1e-4, 1e15)`, scientific outside it.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> sadmm_core::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => sadmm_core::Error::Parse {
            line: other.position().map_or(0, |p| p.line() as usize),
            msg: format!("{other:?}"),
        },
    }
}

pub fn write_trace<W: Write>(out: W, trace: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in trace {
        let st = r.stationarity.as_ref();
        w.write_record([
            r.k.to_string(),
            num(r.loss),
            num(r.aug_lagrangian),
            num(r.potential),
            num(r.residual_norm),
            num(r.dx_norm),
            num(r.dy_norm),
            num(r.dlam_norm),
            cell(st.map(|s| s.stat_x)),
            cell(st.map(|s| s.stat_y)),
            cell(st.map(|s| s.stat_r)),
            r.grad_calls.to_string(),
            cell(r.wall_time),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_probes<W: Write>(out: W, probes: &[ProbeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PROBE_HEADER).map_err(csv_err)?;
    for p in probes {
        w.write_record([
            p.k.to_string(),
            num(p.stationarity.stat_x),
            num(p.stationarity.stat_y),
            num(p.stationarity.stat_r),
            num(p.xi_x),
            cell(p.bias_measured),
            cell(p.bias_predicted),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Diverged,
    Failed,
}

/// One line of `summary.csv`. Everything except `final_accuracy` is read off
/// the last trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub seed: u64,
    /// `parameter=value` for sweep runs.
    pub setting: String,
    pub status: RunStatus,
    pub iterations: usize,
    pub grad_calls: u64,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub message: String,
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use sadmm_core::diagnostics::StationarityReport;

    fn record(k: usize, probed: bool) -> TraceRecord {
        TraceRecord {
            k,
            loss: 0.1,
            aug_lagrangian: 0.2,
            potential: 0.3,
            residual_norm: 1e-20,
            dx_norm: 0.0,
            dy_norm: 1.5,
            dlam_norm: 2.0,
            stationarity: probed.then(|| StationarityReport { stat_x: 1.0, stat_y: 2.0, stat_r: 3.0 }),
            grad_calls: 7,
            wall_time: None,
        }
    }

    #[test]
    fn trace_layout() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &[record(1, false), record(2, true)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER.join(","));
        assert_eq!(lines[1], "1,0.1,0.2,0.3,1e-20,0,1.5,2,,,,7,");
        assert_eq!(lines[2].split(',').nth(8), Some("1"));
        assert_eq!(lines[1].split(',').count(), TRACE_HEADER.len());
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, -0.0, 1.0, 0.1, 1e-4, 9.99e-5, 1e15, -3.25e200, 5e-324, f64::MAX] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits(), "{x}");
        }
        assert_eq!(num(1e-7), "1e-7");
        assert_eq!(num(0.25), "0.25");
    }

    #[test]
    fn summary_round_trip() {
        let rows = vec![
            SummaryRow {
                algorithm: "AH-SADMM".into(),
                seed: 3,
                setting: String::new(),
                status: RunStatus::Ok,
                iterations: 10,
                grad_calls: 100,
                final_loss: Some(0.25),
                final_accuracy: Some(0.9),
                wall_time_s: None,
                message: String::new(),
            },
            SummaryRow {
                algorithm: "SADMM".into(),
                seed: 4,
                setting: "s=1.5".into(),
                status: RunStatus::Diverged,
                iterations: 3,
                grad_calls: 12,
                final_loss: None,
                final_accuracy: None,
                wall_time_s: None,
                message: "||x|| = 1e9, too large".into(),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        write_summary(std::fs::File::create(&path).unwrap(), &rows).unwrap();
        assert_eq!(read_summary(&path).unwrap(), rows);
    }
}
