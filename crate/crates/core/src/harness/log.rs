//! Per-tick trajectory records and their CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controller::{ActuationPattern, ControllerWeights};
use crate::error::Result;
use crate::Vec2;

pub const CSV_HEADER: [&str; 7] = ["t_s", "x_mm", "y_mm", "tx_mm", "ty_mm", "pattern", "err_mm"];

/// One control tick: the particle position the decision was taken at, the
/// target chased, the pattern applied for the following tick, and the error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub tick: u64,
    pub t: f64,
    pub position: Vec2,
    pub target: Option<Vec2>,
    pub pattern: ActuationPattern,
    /// Magnitude of the velocity the pattern commands, mm/s.
    pub commanded_speed: f64,
    /// Distance to the target or reference path, mm.
    pub err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub label: String,
    pub seed: u64,
    pub weights: ControllerWeights,
    pub preset: String,
    pub current: f64,
    pub mode: String,
    /// False when the trial hit its timeout before finishing.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub meta: LogMeta,
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn new(meta: LogMeta) -> Self {
        TrajectoryLog {
            meta,
            rows: Vec::new(),
        }
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.rows.iter().map(|r| r.position).collect()
    }

    pub fn duration(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows_csv(&self.rows, out)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is ASCII"))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_rows_csv<'a, W: Write>(
    rows: impl IntoIterator<Item = &'a LogRow>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.position.x.to_string(),
            r.position.y.to_string(),
            opt(r.target.map(|t| t.x)),
            opt(r.target.map(|t| t.y)),
            r.pattern.bits().to_string(),
            opt(r.err),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut log = TrajectoryLog::new(LogMeta {
            label: "x".into(),
            seed: 1,
            weights: ControllerWeights::default(),
            preset: "unit".into(),
            current: 1.43,
            mode: "oracle".into(),
            complete: true,
        });
        log.rows.push(LogRow {
            tick: 0,
            t: 0.0,
            position: Vec2::new(-2.0, 0.25),
            target: Some(Vec2::new(-1.5, 0.0)),
            pattern: ActuationPattern::from_bits(0b101),
            commanded_speed: 1.0,
            err: Some(0.25),
        });
        log.rows.push(LogRow {
            tick: 1,
            t: 1.0 / 30.0,
            position: Vec2::zeros(),
            target: None,
            pattern: ActuationPattern::OFF,
            commanded_speed: 0.0,
            err: None,
        });
        let s = log.to_csv_string().unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t_s,x_mm,y_mm,tx_mm,ty_mm,pattern,err_mm");
        assert_eq!(lines[1], "0,-2,0.25,-1.5,0,5,0.25");
        assert_eq!(lines[2], format!("{},0,0,,,0,", 1.0 / 30.0));
    }
}
