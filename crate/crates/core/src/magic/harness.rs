use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Engine, MicroOp, ProtocolError, ProtocolParams, ReadOutcome};
use crate::crossbar::{ArrayGeometry, CellAddress, CrossbarState, ExecutionTrace, Solver};
use crate::device::{DeviceParams, Logic, TransistorParams, VariabilitySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Or,
    Not,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Or => 2,
            GateKind::Not => 1,
        }
    }

    pub fn ideal(self, inputs: &[bool]) -> bool {
        match self {
            GateKind::Or => inputs.iter().any(|&b| b),
            GateKind::Not => !inputs[0],
        }
    }

    /// All input combinations in table order ("00", "01", "10", "11").
    pub fn cases(self) -> Vec<Vec<bool>> {
        let n = self.arity();
        (0..1usize << n)
            .map(|m| (0..n).map(|k| m >> (n - 1 - k) & 1 == 1).collect())
            .collect()
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateKind::Or => "or",
            GateKind::Not => "not",
        })
    }
}

/// Cells used for single-gate demonstrations. All share one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateLayout {
    /// OR: x1, x2. NOT: x1 (LRS helper), x_in.
    pub a: CellAddress,
    pub b: CellAddress,
    pub out: CellAddress,
}

impl Default for GateLayout {
    fn default() -> Self {
        GateLayout {
            a: CellAddress::new(0, 0),
            b: CellAddress::new(1, 0),
            out: CellAddress::new(2, 0),
        }
    }
}

impl GateLayout {
    /// One `Init` per participating device followed by the execution op.
    pub fn program(&self, kind: GateKind, inputs: &[bool]) -> Vec<MicroOp> {
        match kind {
            GateKind::Or => vec![
                MicroOp::init(self.a, Logic::from_bool(inputs[0])),
                MicroOp::init(self.b, Logic::from_bool(inputs[1])),
                MicroOp::init(self.out, Logic::Zero),
                MicroOp::ExecOr {
                    inputs: vec![self.a, self.b],
                    output: self.out,
                },
            ],
            GateKind::Not => vec![
                MicroOp::init(self.a, Logic::One),
                MicroOp::init(self.b, Logic::from_bool(inputs[0])),
                MicroOp::init(self.out, Logic::Zero),
                MicroOp::ExecNot {
                    x1: self.a,
                    x_in: self.b,
                    y_out: self.out,
                },
            ],
        }
    }

    /// Cells holding gate inputs.
    pub fn input_cells(&self, kind: GateKind) -> Vec<CellAddress> {
        match kind {
            GateKind::Or => vec![self.a, self.b],
            GateKind::Not => vec![self.b],
        }
    }
}

/// Everything recorded while running one truth-table row.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRun {
    pub inputs: Vec<bool>,
    pub expected: bool,
    pub output: Logic,
    pub read_current: f64,
    pub switched: bool,
    pub init: Vec<(MicroOp, ExecutionTrace)>,
    pub exec_op: MicroOp,
    pub exec: ExecutionTrace,
    pub read: ReadOutcome,
}

impl CaseRun {
    pub fn correct(&self) -> bool {
        self.output.as_bool() == self.expected
    }

    pub fn label(&self) -> String {
        self.inputs.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub gate: GateKind,
    pub cases: Vec<CaseRun>,
}

impl TruthTable {
    pub fn all_correct(&self) -> bool {
        self.cases.iter().all(CaseRun::correct)
    }
}

/// Runs one case: full initialization, execution, output read.
pub fn run_case(
    engine: &Engine,
    state: &mut CrossbarState,
    kind: GateKind,
    layout: &GateLayout,
    inputs: &[bool],
) -> Result<CaseRun, ProtocolError> {
    let mut program = layout.program(kind, inputs);
    let exec_op = program.pop().expect("program ends with the exec op");
    let mut init = Vec::with_capacity(program.len());
    for op in program {
        let MicroOp::Init { cell, target } = &op else {
            unreachable!()
        };
        let logic = target.resolve(&Default::default())?;
        let trace = engine.init(state, *cell, logic)?;
        init.push((op, trace));
    }
    let result = match &exec_op {
        MicroOp::ExecOr { inputs, output } => engine.exec_or(state, inputs, *output)?,
        MicroOp::ExecNot { x1, x_in, y_out } => engine.exec_not(state, *x1, *x_in, *y_out)?,
        _ => unreachable!(),
    };
    Ok(CaseRun {
        inputs: inputs.to_vec(),
        expected: kind.ideal(inputs),
        output: result.output,
        read_current: result.read_current,
        switched: result.switched,
        init,
        exec_op,
        exec: result.exec_trace,
        read: result.read,
    })
}

/// Iterates every input combination on the same array.
pub fn run_truth_table(
    engine: &Engine,
    kind: GateKind,
    state: &mut CrossbarState,
    layout: &GateLayout,
) -> Result<TruthTable, ProtocolError> {
    let cases = kind
        .cases()
        .iter()
        .map(|inputs| run_case(engine, state, kind, layout, inputs))
        .collect::<Result<_, _>>()?;
    Ok(TruthTable { gate: kind, cases })
}

/// (SET count, RESET count) to initialize a two-input OR: one op per input
/// bit plus the output RESET.
pub fn count_init_ops(inputs: [bool; 2]) -> (usize, usize) {
    let n_set = inputs.iter().filter(|&&b| b).count();
    (n_set, 3 - n_set)
}

/// Static operating point of one gate case at the peak of the execution ramp.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationCase {
    pub gate: GateKind,
    pub inputs: String,
    pub expected: u8,
    pub observed: u8,
    /// Output-device voltage at the ramp peak, output held in HRS.
    pub peak_output_v: f64,
    /// Output current at the peak if the output were already in LRS.
    pub post_switch_i: f64,
    pub v_set_th: f64,
    pub i_hold: f64,
    pub v_margin_pct: f64,
    pub i_margin_pct: f64,
    /// Largest |device voltage| / current on an LRS input once the output is LRS.
    pub input_stress_v: f64,
    pub input_stress_i: f64,
    pub v_reset_th: f64,
    pub i_reset_min: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub cases: Vec<CalibrationCase>,
}

impl CalibrationReport {
    pub fn violations(&self) -> impl Iterator<Item = &CalibrationCase> {
        self.cases.iter().filter(|c| !c.pass)
    }
}

impl fmt::Display for CalibrationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<4} {:<3} {:>3} {:>3} {:>9} {:>10} {:>8} {:>8} {:>9} {:>10}  result",
            "gate", "in", "exp", "obs", "v_out[V]", "i_post[uA]", "v_marg%", "i_marg%", "stress[V]", "stress[uA]"
        )?;
        for c in &self.cases {
            writeln!(
                f,
                "{:<4} {:<3} {:>3} {:>3} {:>9.4} {:>10.3} {:>8.1} {:>8.1} {:>9.4} {:>10.3}  {}",
                c.gate.to_string(),
                c.inputs,
                c.expected,
                c.observed,
                c.peak_output_v,
                c.post_switch_i * 1e6,
                c.v_margin_pct,
                c.i_margin_pct,
                c.input_stress_v,
                c.input_stress_i * 1e6,
                if c.pass { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration failed:\n{0}")]
    Violations(CalibrationReport),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Runs all six gate cases on a zero-variance array built from `params` and
/// reports per-case operating margins. Any wrong truth-table entry is an error.
pub fn calibrate_margins(
    params: &DeviceParams,
    transistor: &TransistorParams,
    protocol: &ProtocolParams,
    geometry: ArrayGeometry,
) -> Result<CalibrationReport, CalibrationError> {
    let engine = Engine::new(protocol.clone());
    let layout = GateLayout::default();
    let fresh = || {
        CrossbarState::build(
            geometry,
            params,
            transistor.clone(),
            VariabilitySpec::nominal(params.r_hrs),
        )
        .map_err(ProtocolError::from)
    };
    let mut cases = Vec::new();
    for kind in [GateKind::Or, GateKind::Not] {
        for inputs in kind.cases() {
            let mut state = fresh()?;
            let run = run_case(&engine, &mut state, kind, &layout, &inputs)?;

            let mut probe = fresh()?;
            let program = layout.program(kind, &inputs);
            for op in &program[..program.len() - 1] {
                if let MicroOp::Init { cell, target } = op {
                    probe.force_logic(*cell, target.resolve(&Default::default())?);
                }
            }
            let exec = &program[program.len() - 1];
            let spec = match exec {
                MicroOp::ExecOr { inputs, output } => engine.protocol_or(inputs, *output)?,
                MicroOp::ExecNot { x1, x_in, y_out } => engine.protocol_not(*x1, *x_in, *y_out)?,
                _ => unreachable!(),
            };
            for (line, drive) in &spec.drives {
                probe.set_drive(*line, drive.clone());
            }
            let t_peak = spec.duration / 2.0;
            let out = layout.out;
            let mut solver = Solver::default();
            solver.load(&probe, t_peak).map_err(ProtocolError::from)?;
            let sol = solver.solve();
            let peak_output_v = sol.branch(out).map_or(0.0, |b| b.device_voltage);
            let post_switch_i = solver.hypothetical_current(out, params.r_lrs).unwrap_or(0.0).abs();

            probe.force_logic(out, Logic::One);
            solver.load(&probe, t_peak).map_err(ProtocolError::from)?;
            let stressed = solver.solve();
            let (mut input_stress_v, mut input_stress_i) = (0.0f64, 0.0f64);
            for cell in exec.cells().into_iter().filter(|c| *c != out) {
                if probe.logic(cell) == Logic::One {
                    if let Some(b) = stressed.branch(cell) {
                        if b.device_voltage < 0.0 {
                            input_stress_v = input_stress_v.max(-b.device_voltage);
                            input_stress_i = input_stress_i.max(b.current.abs());
                        }
                    }
                }
            }

            cases.push(CalibrationCase {
                gate: kind,
                inputs: run.label(),
                expected: run.expected as u8,
                observed: run.output.as_u8(),
                peak_output_v,
                post_switch_i,
                v_set_th: params.v_set_th,
                i_hold: params.i_hold,
                v_margin_pct: (peak_output_v / params.v_set_th - 1.0) * 100.0,
                i_margin_pct: (post_switch_i / params.i_hold - 1.0) * 100.0,
                input_stress_v,
                input_stress_i,
                v_reset_th: params.v_reset_th,
                i_reset_min: params.i_reset_min,
                pass: run.correct(),
            });
        }
    }
    let report = CalibrationReport { cases };
    if report.violations().next().is_some() {
        return Err(CalibrationError::Violations(report));
    }
    Ok(report)
}
