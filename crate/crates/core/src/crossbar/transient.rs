use super::{CellAddress, CrossbarError, CrossbarState, ExecutionTrace, Line, LineDrive, Sample, Solver, SwitchEvent};
use crate::device::{reset_event_check, reset_margin, set_event_check, set_margin, Logic};

/// Steps the network from 0 to `duration`. Each step solves the network,
/// checks every conducting device for a SET (TE-positive, HRS) or RESET
/// (TE-negative, LRS) event, commits at most the one with the largest margin
/// and records the post-commit solution.
///
/// A non-integral `duration / dt` rounds the step count up; the last sample
/// sits exactly at `duration`.
pub fn run_transient(state: &mut CrossbarState, duration: f64, dt: f64) -> Result<ExecutionTrace, CrossbarError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CrossbarError::BadTimeStep(dt));
    }
    let steps = ((duration / dt) - 1e-9).ceil().max(0.0) as usize;
    let geometry = state.geometry;
    let devices: Vec<CellAddress> = geometry
        .cells()
        .filter(|c| matches!(state.drive(Line::Wl(c.col)), LineDrive::Driven(_)))
        .collect();
    let slot_of: Vec<Option<usize>> = {
        let mut v = vec![None; geometry.cell_count()];
        for (k, c) in devices.iter().enumerate() {
            v[geometry.index(*c)] = Some(k);
        }
        v
    };
    let mut trace = ExecutionTrace {
        geometry,
        lines: geometry.lines(),
        devices,
        samples: Vec::with_capacity(steps + 1),
        events: Vec::new(),
        dt,
    };
    let mut solver = Solver::default();

    for k in 0..=steps {
        let t = (k as f64 * dt).min(duration);
        solver.load(state, t)?;
        let mut sol = solver.solve();

        let mut best: Option<(f64, CellAddress, Logic)> = None;
        for b in &sol.branches {
            let params = *state.params(b.cell);
            let logic = state.logic(b.cell);
            let v = b.device_voltage;
            let candidate = match logic {
                Logic::Zero if v > 0.0 && v >= params.v_set_th => {
                    let i_post = solver.hypothetical_current(b.cell, params.r_lrs).unwrap_or(0.0).abs();
                    set_event_check(v, i_post, &params).then(|| (set_margin(v, i_post, &params), Logic::One))
                }
                Logic::One if v < 0.0 => {
                    reset_event_check(v, b.current, &params).then(|| (reset_margin(v, b.current, &params), Logic::Zero))
                }
                _ => None,
            };
            if let Some((margin, to)) = candidate {
                if best.is_none_or(|(m, _, _)| margin > m) {
                    best = Some((margin, b.cell, to));
                }
            }
        }
        if let Some((_, cell, to)) = best {
            let from = state.logic(cell);
            state.commit_switch(cell, to);
            solver.set_resistance(cell, state.device(cell).resistance);
            sol = solver.solve();
            trace.events.push(SwitchEvent { cell, from, to, t });
        }

        let n_dev = trace.devices.len();
        let mut sample = Sample {
            t,
            line_voltage: sol.line_voltages.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            line_current: sol.line_currents.clone(),
            device_current: vec![0.0; n_dev],
            device_voltage: vec![0.0; n_dev],
            kcl_residual: sol.kcl_residual,
            max_branch_current: sol.max_branch_current(),
        };
        for b in &sol.branches {
            if let Some(k) = slot_of[geometry.index(b.cell)] {
                sample.device_current[k] = b.current;
                sample.device_voltage[k] = b.device_voltage;
            }
        }
        trace.samples.push(sample);
    }
    Ok(trace)
}
