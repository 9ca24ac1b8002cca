use std::collections::BTreeMap;

use super::{InitTarget, MicroOp, ProtocolError, ProtocolParams, ProtocolSpec, Role};
use crate::crossbar::{run_transient, CellAddress, CrossbarState, ExecutionTrace, Line, LineDrive, Waveform};
use crate::device::Logic;

#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome {
    pub cell: CellAddress,
    pub logic: Logic,
    /// Device current sampled mid-pulse.
    pub current: f64,
    pub trace: ExecutionTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateResult {
    pub output: Logic,
    pub read_current: f64,
    pub switched: bool,
    pub exec_trace: ExecutionTrace,
    pub read: ReadOutcome,
}

/// Result of executing one [`MicroOp`].
#[derive(Debug, Clone, PartialEq)]
pub struct OpOutcome {
    pub trace: ExecutionTrace,
    pub read: Option<(Logic, f64)>,
}

/// Builds protocol drive schemes and runs them on a crossbar.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Engine {
    pub params: ProtocolParams,
}

impl Engine {
    pub fn new(params: ProtocolParams) -> Self {
        Engine { params }
    }

    /// TE ramp 0 -> 1.8 -> 0 V, gate 1.6 V, SL grounded.
    pub fn protocol_set(&self, cell: CellAddress) -> ProtocolSpec {
        let p = &self.params;
        let d = p.set_duration_s;
        ProtocolSpec {
            name: "set",
            drives: vec![
                (
                    Line::Bl(cell.col),
                    LineDrive::Driven(Waveform::triangle(p.set_peak_v, d)),
                ),
                (Line::Wl(cell.col), LineDrive::dc(p.set_gate_v, d)),
                (Line::Sl(cell.row), LineDrive::Grounded),
            ],
            duration: d,
            dt: p.dt_for(d),
            roles: vec![(Role::Target, cell)],
        }
    }

    /// Source ramp 0 -> 2 -> 0 V, gate 5 V, TE grounded.
    pub fn protocol_reset(&self, cell: CellAddress) -> ProtocolSpec {
        let p = &self.params;
        let d = p.reset_duration_s;
        ProtocolSpec {
            name: "reset",
            drives: vec![
                (
                    Line::Sl(cell.row),
                    LineDrive::Driven(Waveform::triangle(p.reset_peak_v, d)),
                ),
                (Line::Wl(cell.col), LineDrive::dc(p.reset_gate_v, d)),
                (Line::Bl(cell.col), LineDrive::Grounded),
            ],
            duration: d,
            dt: p.dt_for(d),
            roles: vec![(Role::Target, cell)],
        }
    }

    pub fn protocol_read(&self, cell: CellAddress) -> ProtocolSpec {
        let p = &self.params;
        let d = p.read_duration_s;
        ProtocolSpec {
            name: "read",
            drives: vec![
                (Line::Bl(cell.col), LineDrive::dc(p.read_v, d)),
                (Line::Wl(cell.col), LineDrive::dc(p.read_gate_v, d)),
                (Line::Sl(cell.row), LineDrive::Grounded),
            ],
            duration: d,
            dt: p.dt_for(d),
            roles: vec![(Role::Target, cell)],
        }
    }

    pub fn protocol_or(&self, inputs: &[CellAddress], output: CellAddress) -> Result<ProtocolSpec, ProtocolError> {
        if inputs.is_empty() {
            return Err(ProtocolError::NoInputs("exec_or"));
        }
        let cells: Vec<CellAddress> = inputs.iter().copied().chain([output]).collect();
        check_placement("exec_or", &cells)?;
        let p = &self.params;
        let d = p.exec_duration_s;
        let col = output.col;
        let mut drives = vec![
            (Line::Wl(col), LineDrive::dc(p.exec_gate_v, d)),
            (Line::Sl(output.row), LineDrive::Grounded),
        ];
        let mut roles = vec![(Role::YOut, output)];
        for (k, c) in inputs.iter().enumerate() {
            drives.push((
                Line::Sl(c.row),
                LineDrive::Driven(Waveform::triangle(p.or_exec_peak_v, d)),
            ));
            roles.push((
                match k {
                    0 => Role::X1,
                    1 => Role::X2,
                    _ => Role::Input,
                },
                *c,
            ));
        }
        Ok(ProtocolSpec {
            name: "exec_or",
            drives,
            duration: d,
            dt: p.dt_for(d),
            roles,
        })
    }

    pub fn protocol_not(
        &self,
        x1: CellAddress,
        x_in: CellAddress,
        y_out: CellAddress,
    ) -> Result<ProtocolSpec, ProtocolError> {
        check_placement("exec_not", &[x1, x_in, y_out])?;
        let p = &self.params;
        let d = p.exec_duration_s;
        Ok(ProtocolSpec {
            name: "exec_not",
            drives: vec![
                (Line::Wl(y_out.col), LineDrive::dc(p.exec_gate_v, d)),
                (
                    Line::Sl(x1.row),
                    LineDrive::Driven(Waveform::triangle(p.not_exec_peak_v, d)),
                ),
                (
                    Line::Sl(x_in.row),
                    LineDrive::Driven(Waveform::triangle(p.not_exec_peak_v * p.not_input_ratio, d)),
                ),
                (Line::Sl(y_out.row), LineDrive::Grounded),
            ],
            duration: d,
            dt: p.dt_for(d),
            roles: vec![(Role::X1, x1), (Role::XIn, x_in), (Role::YOut, y_out)],
        })
    }

    /// Applies `spec`, steps it and floats every line again.
    pub fn run(&self, state: &mut CrossbarState, spec: &ProtocolSpec) -> Result<ExecutionTrace, ProtocolError> {
        for (_, cell) in &spec.roles {
            state.geometry.check(*cell)?;
        }
        state.float_all();
        for (line, drive) in &spec.drives {
            state.set_drive(*line, drive.clone());
        }
        let trace = run_transient(state, spec.duration, spec.dt);
        state.float_all();
        Ok(trace?)
    }

    /// SET for logic 1, RESET for logic 0. Always runs the full protocol.
    pub fn init(
        &self,
        state: &mut CrossbarState,
        cell: CellAddress,
        logic: Logic,
    ) -> Result<ExecutionTrace, ProtocolError> {
        let spec = match logic {
            Logic::One => self.protocol_set(cell),
            Logic::Zero => self.protocol_reset(cell),
        };
        self.run(state, &spec)
    }

    /// Reads without disturbing the array: the pulse runs on a scratch copy.
    pub fn read(&self, state: &CrossbarState, cell: CellAddress) -> Result<ReadOutcome, ProtocolError> {
        state.geometry.check(cell)?;
        let mut scratch = state.clone();
        let trace = self.run(&mut scratch, &self.protocol_read(cell))?;
        let slot = trace.device_slot(cell).expect("read drives the target word line");
        let mid = &trace.samples[trace.samples.len() / 2];
        Ok(ReadOutcome {
            cell,
            logic: state.logic(cell),
            current: mid.device_current[slot],
            trace,
        })
    }

    pub fn exec_or(
        &self,
        state: &mut CrossbarState,
        inputs: &[CellAddress],
        output: CellAddress,
    ) -> Result<GateResult, ProtocolError> {
        let spec = self.protocol_or(inputs, output)?;
        require(state, "exec_or", output, Logic::Zero)?;
        self.gate(state, &spec, output)
    }

    pub fn exec_not(
        &self,
        state: &mut CrossbarState,
        x1: CellAddress,
        x_in: CellAddress,
        y_out: CellAddress,
    ) -> Result<GateResult, ProtocolError> {
        let spec = self.protocol_not(x1, x_in, y_out)?;
        require(state, "exec_not", x1, Logic::One)?;
        require(state, "exec_not", y_out, Logic::Zero)?;
        self.gate(state, &spec, y_out)
    }

    fn gate(
        &self,
        state: &mut CrossbarState,
        spec: &ProtocolSpec,
        output: CellAddress,
    ) -> Result<GateResult, ProtocolError> {
        let exec_trace = self.run(state, spec)?;
        let switched = exec_trace.events_for(output).next().is_some();
        let read = self.read(state, output)?;
        Ok(GateResult {
            output: read.logic,
            read_current: read.current,
            switched,
            exec_trace,
            read,
        })
    }

    /// Executes one micro-op. Exec ops do not read their output here; a
    /// schedule carries explicit `Read` ops for that.
    pub fn execute(
        &self,
        state: &mut CrossbarState,
        op: &MicroOp,
        bindings: &BTreeMap<String, bool>,
    ) -> Result<OpOutcome, ProtocolError> {
        match op {
            MicroOp::Init { cell, target } => {
                let logic = match target {
                    InitTarget::Const(l) => *l,
                    t => t.resolve(bindings)?,
                };
                Ok(OpOutcome {
                    trace: self.init(state, *cell, logic)?,
                    read: None,
                })
            }
            MicroOp::ExecOr { inputs, output } => {
                let spec = self.protocol_or(inputs, *output)?;
                require(state, "exec_or", *output, Logic::Zero)?;
                Ok(OpOutcome {
                    trace: self.run(state, &spec)?,
                    read: None,
                })
            }
            MicroOp::ExecNot { x1, x_in, y_out } => {
                let spec = self.protocol_not(*x1, *x_in, *y_out)?;
                require(state, "exec_not", *x1, Logic::One)?;
                require(state, "exec_not", *y_out, Logic::Zero)?;
                Ok(OpOutcome {
                    trace: self.run(state, &spec)?,
                    read: None,
                })
            }
            MicroOp::Read { cell } => {
                let r = self.read(state, *cell)?;
                Ok(OpOutcome {
                    read: Some((r.logic, r.current)),
                    trace: r.trace,
                })
            }
        }
    }
}

fn require(state: &CrossbarState, op: &'static str, cell: CellAddress, expected: Logic) -> Result<(), ProtocolError> {
    state.geometry.check(cell)?;
    if state.logic(cell) != expected {
        return Err(ProtocolError::Precondition {
            op,
            cell,
            expected: expected.as_u8(),
        });
    }
    Ok(())
}

fn check_placement(op: &'static str, cells: &[CellAddress]) -> Result<(), ProtocolError> {
    let col = cells[0].col;
    let mut rows: Vec<usize> = cells.iter().map(|c| c.row).collect();
    rows.sort_unstable();
    rows.dedup();
    if cells.iter().any(|c| c.col != col) || rows.len() != cells.len() {
        return Err(ProtocolError::Placement { op });
    }
    Ok(())
}
