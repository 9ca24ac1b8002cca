use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::map::Schedule;
use crate::crossbar::{CellAddress, CrossbarState};
use crate::device::Logic;
use crate::energy::{
    coarse_cost, op_energy, CostTable, EnergyBreakdown, EnergyError, EnergyItem, ExecEnergy, Mode, Phase,
};
use crate::magic::{Engine, InitTarget, MicroOp, ProtocolError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("input `{0}` has no value")]
    UnboundInput(String),
    #[error("op {index} ({kind}): {source}")]
    Op {
        index: usize,
        kind: &'static str,
        #[source]
        source: ProtocolError,
    },
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReadRecord {
    pub op_index: usize,
    pub cell: CellAddress,
    pub logic: Logic,
    pub current_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleRun {
    pub output: Logic,
    pub reads: Vec<ReadRecord>,
    /// Switching events summed over every op.
    pub switch_events: usize,
    pub fine: EnergyBreakdown,
    pub coarse: EnergyBreakdown,
}

/// Runs every op on `state` and accounts its energy. The output is the last
/// read of the output cell, or the cell's state when the program never reads it.
pub fn simulate_schedule(
    schedule: &Schedule,
    assignment: &BTreeMap<String, bool>,
    state: &mut CrossbarState,
    engine: &Engine,
    costs: &CostTable,
    mode: Mode,
) -> Result<ScheduleRun, SimulationError> {
    if let Some(name) = schedule.inputs.iter().find(|n| !assignment.contains_key(*n)) {
        return Err(SimulationError::UnboundInput(name.clone()));
    }
    let mut reads = Vec::new();
    let mut items = Vec::with_capacity(schedule.ops.len());
    let mut switch_events = 0;
    for (index, op) in schedule.ops.iter().enumerate() {
        let outcome = engine
            .execute(state, op, assignment)
            .map_err(|source| SimulationError::Op {
                index,
                kind: op.kind(),
                source,
            })?;
        switch_events += outcome.trace.events.len();
        if let (MicroOp::Read { cell }, Some((logic, current))) = (op, outcome.read) {
            reads.push(ReadRecord {
                op_index: index,
                cell: *cell,
                logic,
                current_a: current,
            });
        }
        items.push(EnergyItem {
            op_index: index,
            kind: op.kind(),
            phase: match op {
                MicroOp::Init { .. } => Phase::Init,
                MicroOp::Read { .. } => Phase::Read,
                _ => Phase::Exec,
            },
            energy_nj: op_energy(op, &outcome.trace, state, mode),
            source: "simulated",
        });
    }
    let exec: Vec<f64> = items
        .iter()
        .filter(|i| i.phase == Phase::Exec)
        .map(|i| i.energy_nj)
        .collect();
    let coarse = coarse_cost(&schedule.ops, assignment, costs, mode, &ExecEnergy::Simulated(exec))?;
    let output = reads
        .iter()
        .rev()
        .find(|r| r.cell == schedule.output_cell)
        .map_or_else(|| state.logic(schedule.output_cell), |r| r.logic);
    Ok(ScheduleRun {
        output,
        reads,
        switch_events,
        fine: EnergyBreakdown::from_items(mode, items),
        coarse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetJson {
    Bit(u8),
    Input(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpJson {
    pub kind: String,
    pub cells: Vec<CellAddress>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleJson {
    pub inputs: Vec<String>,
    pub output_cell: CellAddress,
    pub ops: Vec<OpJson>,
}

#[derive(Debug, Error)]
pub enum ScheduleJsonError {
    #[error("invalid schedule JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("op {index}: {reason}")]
    Op { index: usize, reason: String },
}

impl From<&Schedule> for ScheduleJson {
    fn from(s: &Schedule) -> Self {
        let ops = s
            .ops
            .iter()
            .map(|op| OpJson {
                kind: op.kind().to_string(),
                cells: op.cells(),
                target: match op {
                    MicroOp::Init {
                        target: InitTarget::Const(l),
                        ..
                    } => Some(TargetJson::Bit(l.as_u8())),
                    MicroOp::Init {
                        target: InitTarget::Input(n),
                        ..
                    } => Some(TargetJson::Input(n.clone())),
                    _ => None,
                },
            })
            .collect();
        ScheduleJson {
            inputs: s.inputs.clone(),
            output_cell: s.output_cell,
            ops,
        }
    }
}

impl ScheduleJson {
    pub fn into_schedule(self) -> Result<Schedule, ScheduleJsonError> {
        let ops = self
            .ops
            .into_iter()
            .enumerate()
            .map(|(index, op)| {
                let err = |reason: String| ScheduleJsonError::Op { index, reason };
                let arity = |n: usize| {
                    if op.cells.len() == n {
                        Ok(())
                    } else {
                        Err(err(format!("{} takes {n} cells, got {}", op.kind, op.cells.len())))
                    }
                };
                match op.kind.as_str() {
                    "init" => {
                        arity(1)?;
                        let target = match &op.target {
                            Some(TargetJson::Bit(0)) => InitTarget::Const(Logic::Zero),
                            Some(TargetJson::Bit(1)) => InitTarget::Const(Logic::One),
                            Some(TargetJson::Input(n)) => InitTarget::Input(n.clone()),
                            Some(TargetJson::Bit(b)) => return Err(err(format!("init target {b} is not a bit"))),
                            None => return Err(err("init needs a target".into())),
                        };
                        Ok(MicroOp::Init {
                            cell: op.cells[0],
                            target,
                        })
                    }
                    "exec_or" => {
                        if op.cells.len() < 2 {
                            return Err(err("exec_or takes at least one input and an output".into()));
                        }
                        let (output, inputs) = op.cells.split_last().expect("checked");
                        Ok(MicroOp::ExecOr {
                            inputs: inputs.to_vec(),
                            output: *output,
                        })
                    }
                    "exec_not" => {
                        arity(3)?;
                        Ok(MicroOp::ExecNot {
                            x1: op.cells[0],
                            x_in: op.cells[1],
                            y_out: op.cells[2],
                        })
                    }
                    "read" => {
                        arity(1)?;
                        Ok(MicroOp::Read { cell: op.cells[0] })
                    }
                    other => Err(err(format!("unknown op kind `{other}`"))),
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Schedule {
            inputs: self.inputs,
            ops,
            nets: BTreeMap::new(),
            output_cell: self.output_cell,
        })
    }
}

impl Schedule {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScheduleJson::from(self)).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Schedule, ScheduleJsonError> {
        serde_json::from_str::<ScheduleJson>(text)?.into_schedule()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::ArrayGeometry;
    use crate::limc::{compile, evaluate_expr, parse_expr, CompileOptions};
    use crate::magic::ProtocolParams;

    fn engine() -> Engine {
        Engine::new(ProtocolParams {
            steps: 400,
            ..Default::default()
        })
    }

    fn run(src: &str, bits: &[(&str, bool)]) -> ScheduleRun {
        let s = compile(src, &CompileOptions::default()).unwrap();
        let m: BTreeMap<String, bool> = bits.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let mut state = CrossbarState::nominal(ArrayGeometry::default()).unwrap();
        simulate_schedule(&s, &m, &mut state, &engine(), &CostTable::default(), Mode::FullRamp).unwrap()
    }

    #[test]
    fn or_and_nor() {
        assert_eq!(run("a|b", &[("a", true), ("b", false)]).output, Logic::One);
        assert_eq!(run("!(a|b)", &[("a", false), ("b", false)]).output, Logic::One);
    }

    #[test]
    fn and_truth_table() {
        let e = parse_expr("a&b").unwrap();
        for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
            let m = BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)]);
            let r = run("a&b", &[("a", a), ("b", b)]);
            assert_eq!(r.output.as_bool(), evaluate_expr(&e, &m).unwrap());
        }
    }

    #[test]
    fn energy_accounting_is_consistent() {
        let r = run("a|b", &[("a", false), ("b", true)]);
        assert_eq!(r.fine.items.len(), 5);
        assert_eq!(r.coarse.init_nj, 312.0 + 2.0 * 1300.0);
        assert_eq!(r.coarse.exec_nj, r.fine.exec_nj);
        assert!(r.fine.init_nj > 0.0 && r.fine.read_nj > 0.0);
    }

    #[test]
    fn unbound_and_failing_op_index() {
        let s = compile("a|b", &CompileOptions::default()).unwrap();
        let mut state = CrossbarState::nominal(ArrayGeometry::default()).unwrap();
        let m = BTreeMap::from([("a".to_string(), true)]);
        let e = simulate_schedule(&s, &m, &mut state, &engine(), &CostTable::default(), Mode::FullRamp).unwrap_err();
        assert_eq!(e, SimulationError::UnboundInput("b".into()));

        let mut bad = s.clone();
        bad.ops.remove(2);
        let m = BTreeMap::from([("a".to_string(), true), ("b".to_string(), false)]);
        // Output cell still HRS from the fresh array, so drop its RESET and
        // pre-SET it to violate the precondition instead.
        state.force_logic(bad.output_cell, Logic::One);
        match simulate_schedule(&bad, &m, &mut state, &engine(), &CostTable::default(), Mode::FullRamp) {
            Err(SimulationError::Op { index, kind, .. }) => assert_eq!((index, kind), (2, "exec_or")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let s = compile("!(a^b)|c", &CompileOptions::default()).unwrap();
        let back = Schedule::from_json(&s.to_json()).unwrap();
        assert_eq!(back.ops, s.ops);
        assert_eq!(back.output_cell, s.output_cell);
        assert_eq!(back.inputs, s.inputs);
    }

    #[test]
    fn json_rejects_unknown_kind() {
        let text =
            r#"{"inputs":[],"output_cell":{"row":0,"col":0},"ops":[{"kind":"nimp","cells":[{"row":0,"col":0}]}]}"#;
        match Schedule::from_json(text) {
            Err(ScheduleJsonError::Op { index, reason }) => {
                assert_eq!(index, 0);
                assert!(reason.contains("nimp"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(Schedule::from_json("{"), Err(ScheduleJsonError::Json(_))));
        let text = r#"{"inputs":[],"output_cell":{"row":0,"col":0},"ops":[{"kind":"init","cells":[{"row":0,"col":0}],"target":2}]}"#;
        assert!(Schedule::from_json(text).is_err());
    }
}
