//! `limc`: Boolean expressions to MAGIC micro-op schedules.
//!
//! Pipeline: [`parse_expr`] -> [`lower_to_or_not`] -> [`allocate_and_emit`]
//! -> [`simulate_schedule`]. [`evaluate_expr`] is the reference semantics.

mod expr;
mod map;
mod sim;

pub use expr::{
    assignments, enumerate_exprs, evaluate_expr, is_or_not, lower_to_or_not, parse_expr, random_expr, var, Expr,
    ParseError, UnboundVariable,
};
pub use map::{allocate_and_emit, check_schedule, CompileOptions, MapError, Schedule, ScheduleError};
pub use sim::{
    simulate_schedule, OpJson, ReadRecord, ScheduleJson, ScheduleJsonError, ScheduleRun, SimulationError, TargetJson,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Parses, lowers and maps `src`; inputs are the expression's variables in
/// sorted order.
pub fn compile(src: &str, options: &CompileOptions) -> Result<Schedule, CompileError> {
    let e = parse_expr(src)?;
    compile_expr(&e, options)
}

pub fn compile_expr(e: &Expr, options: &CompileOptions) -> Result<Schedule, CompileError> {
    let lowered = lower_to_or_not(e);
    Ok(allocate_and_emit(&lowered, &e.variables(), options)?)
}
