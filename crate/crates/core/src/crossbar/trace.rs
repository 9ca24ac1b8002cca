use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{ArrayGeometry, CellAddress, Line};
use crate::device::Logic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub cell: CellAddress,
    pub from: Logic,
    pub to: Logic,
    pub t: f64,
}

/// One time point. Vectors are indexed like the owning trace's `lines` and
/// `devices`. Indeterminate voltages are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub line_voltage: Vec<f64>,
    pub line_current: Vec<f64>,
    pub device_current: Vec<f64>,
    pub device_voltage: Vec<f64>,
    pub kcl_residual: f64,
    pub max_branch_current: f64,
}

impl Sample {
    /// Instantaneous power delivered by every fixed-voltage line.
    pub fn source_power(&self) -> f64 {
        self.line_voltage
            .iter()
            .zip(&self.line_current)
            .filter(|(v, _)| v.is_finite())
            .map(|(v, i)| v * i)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub geometry: ArrayGeometry,
    pub lines: Vec<Line>,
    /// Cells whose word line is driven during the run.
    pub devices: Vec<CellAddress>,
    pub samples: Vec<Sample>,
    pub events: Vec<SwitchEvent>,
    pub dt: f64,
}

impl ExecutionTrace {
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn device_slot(&self, cell: CellAddress) -> Option<usize> {
        self.devices.iter().position(|&c| c == cell)
    }

    pub fn events_for(&self, cell: CellAddress) -> impl Iterator<Item = &SwitchEvent> {
        self.events.iter().filter(move |e| e.cell == cell)
    }

    /// Largest device-voltage magnitude seen by `cell`.
    pub fn peak_device_voltage(&self, cell: CellAddress) -> f64 {
        let Some(k) = self.device_slot(cell) else { return 0.0 };
        self.samples.iter().map(|s| s.device_voltage[k]).fold(0.0, f64::max)
    }

    /// Slots of devices that carry current at some sample.
    fn active_slots(&self) -> Vec<usize> {
        (0..self.devices.len())
            .filter(|&k| self.samples.iter().any(|s| s.device_current[k] != 0.0))
            .collect()
    }

    /// CSV with one row per sample: `t`, every line voltage, then current
    /// and voltage of every device that conducts during the run.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let active = self.active_slots();
        let mut header = vec!["t".to_string()];
        header.extend(self.lines.iter().map(|l| l.to_string()));
        for &k in &active {
            let c = self.devices[k];
            header.push(format!("{c}_i"));
            header.push(format!("{c}_v"));
        }
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![format!("{:e}", s.t)];
            for v in &s.line_voltage {
                row.push(if v.is_finite() { format!("{v:e}") } else { String::new() });
            }
            for &k in &active {
                row.push(format!("{:e}", s.device_current[k]));
                row.push(format!("{:e}", s.device_voltage[k]));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Sidecar list of `{cell, from, to, t}` records.
    pub fn events_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.events
                .iter()
                .map(|e| {
                    serde_json::json!({
                        "cell": { "row": e.cell.row, "col": e.cell.col },
                        "from": e.from.as_u8(),
                        "to": e.to.as_u8(),
                        "t": e.t,
                    })
                })
                .collect(),
        )
    }
}
