//! MAGIC protocols on the crossbar: SET/RESET initialization, READ, and
//! OR/NOT execution, plus truth-table and calibration harnesses.
//!
//! Execution drives the input rows' SLs while the shared BL floats as the
//! summing node; the output row's SL is grounded. Inputs therefore see a
//! TE-negative voltage and the output a TE-positive one.

mod engine;
mod harness;

pub use engine::{Engine, GateResult, OpOutcome, ReadOutcome};
pub use harness::{
    calibrate_margins, count_init_ops, run_case, run_truth_table, CalibrationCase, CalibrationError, CalibrationReport,
    CaseRun, GateKind, GateLayout, TruthTable,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossbar::{CellAddress, CrossbarError, Line, LineDrive};
use crate::device::Logic;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("{op}: {cell} must hold logic {expected} before execution")]
    Precondition {
        op: &'static str,
        cell: CellAddress,
        expected: u8,
    },
    #[error("{0}: at least one input cell is required")]
    NoInputs(&'static str),
    #[error("{op}: cells must share one column and use distinct rows")]
    Placement { op: &'static str },
    #[error("input `{0}` has no bound value")]
    Unbound(String),
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
}

/// Voltages and timings of every protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub set_peak_v: f64,
    pub set_gate_v: f64,
    pub set_duration_s: f64,
    pub reset_peak_v: f64,
    pub reset_gate_v: f64,
    pub reset_duration_s: f64,
    pub read_v: f64,
    pub read_gate_v: f64,
    pub read_duration_s: f64,
    pub or_exec_peak_v: f64,
    pub not_exec_peak_v: f64,
    /// x_in ramp as a fraction of the x1 ramp.
    pub not_input_ratio: f64,
    pub exec_gate_v: f64,
    pub exec_duration_s: f64,
    /// Time steps per protocol when `dt_s` is unset.
    pub steps: usize,
    pub dt_s: Option<f64>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            set_peak_v: 1.8,
            set_gate_v: 1.6,
            set_duration_s: 4e-3,
            reset_peak_v: 2.0,
            reset_gate_v: 5.0,
            reset_duration_s: 3.6e-3,
            read_v: 0.5,
            read_gate_v: 3.3,
            read_duration_s: 0.6e-6,
            or_exec_peak_v: 3.3,
            not_exec_peak_v: 1.5,
            not_input_ratio: 1.0 / 3.0,
            exec_gate_v: 3.3,
            exec_duration_s: 4e-3,
            steps: 2000,
            dt_s: None,
        }
    }
}

impl ProtocolParams {
    pub fn dt_for(&self, duration: f64) -> f64 {
        match self.dt_s {
            Some(dt) => dt.min(duration),
            None => duration / self.steps as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    X1,
    X2,
    Input,
    XIn,
    YOut,
}

/// Drive assignment for one protocol run. Lines not listed float.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub name: &'static str,
    pub drives: Vec<(Line, LineDrive)>,
    pub duration: f64,
    pub dt: f64,
    pub roles: Vec<(Role, CellAddress)>,
}

impl ProtocolSpec {
    pub fn drive(&self, line: Line) -> &LineDrive {
        static FLOATING: LineDrive = LineDrive::Floating;
        self.drives
            .iter()
            .find(|(l, _)| *l == line)
            .map_or(&FLOATING, |(_, d)| d)
    }

    pub fn cell(&self, role: Role) -> Option<CellAddress> {
        self.roles.iter().find(|(r, _)| *r == role).map(|(_, c)| *c)
    }
}

/// Value written by an `Init`: a constant or a primary input bound at run time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InitTarget {
    Const(Logic),
    Input(String),
}

impl InitTarget {
    pub fn resolve(&self, bindings: &BTreeMap<String, bool>) -> Result<Logic, ProtocolError> {
        match self {
            InitTarget::Const(l) => Ok(*l),
            InitTarget::Input(name) => bindings
                .get(name)
                .map(|&b| Logic::from_bool(b))
                .ok_or_else(|| ProtocolError::Unbound(name.clone())),
        }
    }
}

/// One step of a compiled or hand-written gate program.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MicroOp {
    Init {
        cell: CellAddress,
        target: InitTarget,
    },
    ExecOr {
        inputs: Vec<CellAddress>,
        output: CellAddress,
    },
    ExecNot {
        x1: CellAddress,
        x_in: CellAddress,
        y_out: CellAddress,
    },
    Read {
        cell: CellAddress,
    },
}

impl MicroOp {
    pub fn init(cell: CellAddress, logic: Logic) -> Self {
        MicroOp::Init {
            cell,
            target: InitTarget::Const(logic),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MicroOp::Init { .. } => "init",
            MicroOp::ExecOr { .. } => "exec_or",
            MicroOp::ExecNot { .. } => "exec_not",
            MicroOp::Read { .. } => "read",
        }
    }

    /// Cells in operand order, output last for exec ops.
    pub fn cells(&self) -> Vec<CellAddress> {
        match self {
            MicroOp::Init { cell, .. } | MicroOp::Read { cell } => vec![*cell],
            MicroOp::ExecOr { inputs, output } => inputs.iter().copied().chain([*output]).collect(),
            MicroOp::ExecNot { x1, x_in, y_out } => vec![*x1, *x_in, *y_out],
        }
    }

    pub fn output(&self) -> Option<CellAddress> {
        match self {
            MicroOp::ExecOr { output, .. } => Some(*output),
            MicroOp::ExecNot { y_out, .. } => Some(*y_out),
            _ => None,
        }
    }

    pub fn is_exec(&self) -> bool {
        self.output().is_some()
    }
}

/// Logical (device-free) evaluation of a program: the value each cell would
/// hold under ideal gate behavior. Returns the value observed by every op:
/// the written value for `Init`/exec ops, the stored value for `Read`.
pub fn interpret(ops: &[MicroOp], bindings: &BTreeMap<String, bool>) -> Result<Vec<Logic>, ProtocolError> {
    let mut cells: BTreeMap<CellAddress, Logic> = BTreeMap::new();
    let get = |cells: &BTreeMap<CellAddress, Logic>, c: &CellAddress| cells.get(c).copied().unwrap_or(Logic::Zero);
    let mut out = Vec::with_capacity(ops.len());
    for op in ops {
        let v = match op {
            MicroOp::Init { cell, target } => {
                let v = target.resolve(bindings)?;
                cells.insert(*cell, v);
                v
            }
            MicroOp::ExecOr { inputs, output } => {
                let v =
                    Logic::from_bool(get(&cells, output).as_bool() || inputs.iter().any(|c| get(&cells, c).as_bool()));
                cells.insert(*output, v);
                v
            }
            MicroOp::ExecNot { x_in, y_out, .. } => {
                let v = Logic::from_bool(get(&cells, y_out).as_bool() || !get(&cells, x_in).as_bool());
                cells.insert(*y_out, v);
                v
            }
            MicroOp::Read { cell } => get(&cells, cell),
        };
        out.push(v);
    }
    Ok(out)
}
