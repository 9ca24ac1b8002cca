use serde::Serialize;

use crate::crossbar::{CellAddress, ExecutionTrace};
use crate::device::{DeviceParams, Logic};

/// Integration interval inside a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseWindow {
    pub t_start: f64,
    pub t_end: f64,
    /// Switch event the window brackets, if any.
    pub event_time: Option<f64>,
    pub guard: f64,
}

impl PhaseWindow {
    pub fn full(trace: &ExecutionTrace) -> Self {
        PhaseWindow {
            t_start: 0.0,
            t_end: trace.duration(),
            event_time: None,
            guard: 0.0,
        }
    }

    pub fn span(t_start: f64, t_end: f64) -> Self {
        PhaseWindow {
            t_start,
            t_end,
            event_time: None,
            guard: 0.0,
        }
    }
}

/// What to integrate `v * i` over.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// Every fixed-voltage line: the energy delivered to the array.
    Sources,
    /// Dissipation in the listed memristors.
    Devices(Vec<CellAddress>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub energy_nj: f64,
    /// Set when the selection matched nothing in the trace.
    pub empty_selection: bool,
}

fn power_series(trace: &ExecutionTrace, selection: &Selection) -> (Vec<f64>, bool) {
    match selection {
        Selection::Sources => (trace.samples.iter().map(|s| s.source_power()).collect(), false),
        Selection::Devices(cells) => {
            let slots: Vec<usize> = cells.iter().filter_map(|c| trace.device_slot(*c)).collect();
            let p = trace
                .samples
                .iter()
                .map(|s| slots.iter().map(|&k| s.device_voltage[k] * s.device_current[k]).sum())
                .collect();
            (p, slots.is_empty())
        }
    }
}

/// Trapezoidal integral of the selected power over `window`, in nJ. Window
/// edges between samples use the linearly interpolated power, so splitting a
/// window anywhere is exactly additive.
pub fn integrate_energy(trace: &ExecutionTrace, window: &PhaseWindow, selection: &Selection) -> Integral {
    let (power, empty) = power_series(trace, selection);
    let times: Vec<f64> = trace.samples.iter().map(|s| s.t).collect();
    let (a, b) = (window.t_start, window.t_end);
    let mut joules = 0.0;
    for k in 1..times.len() {
        let (t0, t1) = (times[k - 1], times[k]);
        let lo = t0.max(a);
        let hi = t1.min(b);
        if hi <= lo {
            continue;
        }
        let at = |t: f64| power[k - 1] + (power[k] - power[k - 1]) * (t - t0) / (t1 - t0);
        joules += 0.5 * (at(lo) + at(hi)) * (hi - lo);
    }
    Integral {
        energy_nj: joules * 1e9,
        empty_selection: empty,
    }
}

/// Narrow window around the switching of `cell`: from the first sample where
/// its device voltage crosses the relevant threshold to `guard` after the
/// event, where `guard = 10 dt`. Without an event, the window is centred on
/// the sample of peak device power.
pub fn detect_optimal_window(trace: &ExecutionTrace, cell: CellAddress, params: &DeviceParams) -> PhaseWindow {
    let guard = 10.0 * trace.dt;
    let duration = trace.duration();
    let Some(slot) = trace.device_slot(cell) else {
        return PhaseWindow {
            t_start: 0.0,
            t_end: guard.min(duration),
            event_time: None,
            guard,
        };
    };
    if let Some(ev) = trace.events_for(cell).next() {
        let crossed = |v: f64| match ev.to {
            Logic::One => v >= params.v_set_th,
            Logic::Zero => -v >= params.v_reset_th,
        };
        let t_th = trace
            .samples
            .iter()
            .find(|s| crossed(s.device_voltage[slot]))
            .map_or(ev.t, |s| s.t.min(ev.t));
        let t_end = (ev.t + guard).min(duration);
        let t_start = if t_th < t_end {
            t_th
        } else {
            (t_end - trace.dt).max(0.0)
        };
        return PhaseWindow {
            t_start,
            t_end,
            event_time: Some(ev.t),
            guard,
        };
    }
    let peak = trace
        .samples
        .iter()
        .map(|s| (s.t, s.device_voltage[slot] * s.device_current[slot]))
        .fold((0.0, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best });
    PhaseWindow {
        t_start: (peak.0 - guard).max(0.0),
        t_end: (peak.0 + guard).min(duration),
        event_time: None,
        guard,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::{run_transient, ArrayGeometry, CrossbarState, Line, LineDrive, Waveform};

    /// Fixed resistor R = r_device + r_on between a driven BL and ground.
    fn ramp_over_resistor(v: f64, period: f64, r: f64, steps: usize) -> ExecutionTrace {
        let mut s = CrossbarState::nominal(ArrayGeometry::new(1, 1).unwrap()).unwrap();
        s.transistor.r_on = 1e3;
        let cell = CellAddress::new(0, 0);
        let r_dev = r - 1e3;
        // Thresholds out of reach so the device never switches.
        let p = DeviceParams {
            r_hrs: r_dev,
            r_lrs: r_dev / 10.0,
            v_set_th: 1e6,
            ..Default::default()
        };
        s.set_params(cell, p);
        s.device_mut(cell).resistance = r_dev;
        s.set_drive(Line::Bl(0), LineDrive::Driven(Waveform::triangle(v, period)));
        s.set_drive(Line::Sl(0), LineDrive::Grounded);
        s.set_drive(Line::Wl(0), LineDrive::dc(5.0, period));
        run_transient(&mut s, period, period / steps as f64).unwrap()
    }

    #[test]
    fn triangle_over_resistor_matches_closed_form() {
        let trace = ramp_over_resistor(2.0, 4e-3, 500e3, 2000);
        let e = integrate_energy(&trace, &PhaseWindow::full(&trace), &Selection::Sources);
        // V^2 T / (3 R) = 4 * 4e-3 / 1.5e6 J = 10.667 nJ.
        let exact: f64 = 4.0 * 4e-3 / (3.0 * 500e3) * 1e9;
        assert!((exact - 10.666_666_666).abs() < 1e-8);
        assert!(((e.energy_nj - exact) / exact).abs() < 1e-6);
        assert!(!e.empty_selection);
    }

    #[test]
    fn zero_voltage_and_empty_selection() {
        let trace = ramp_over_resistor(0.0, 1e-3, 100e3, 100);
        let e = integrate_energy(&trace, &PhaseWindow::full(&trace), &Selection::Sources);
        assert_eq!(e.energy_nj, 0.0);
        let e = integrate_energy(
            &trace,
            &PhaseWindow::full(&trace),
            &Selection::Devices(vec![CellAddress::new(5, 5)]),
        );
        assert_eq!(e.energy_nj, 0.0);
        assert!(e.empty_selection);
    }

    #[test]
    fn window_split_is_additive() {
        let trace = ramp_over_resistor(1.5, 2e-3, 300e3, 400);
        let full = integrate_energy(&trace, &PhaseWindow::full(&trace), &Selection::Sources).energy_nj;
        for cut in [1e-7, 3.33e-4, 1e-3, 1.234_567e-3, 1.999e-3] {
            let l = integrate_energy(&trace, &PhaseWindow::span(0.0, cut), &Selection::Sources).energy_nj;
            let r = integrate_energy(&trace, &PhaseWindow::span(cut, 2e-3), &Selection::Sources).energy_nj;
            // 1e-12 J = 1e-3 nJ
            assert!((full - l - r).abs() < 1e-3 * 1e-6, "{cut}");
        }
    }

    #[test]
    fn device_selection_excludes_transistor_loss() {
        let trace = ramp_over_resistor(2.0, 4e-3, 500e3, 2000);
        let all = integrate_energy(&trace, &PhaseWindow::full(&trace), &Selection::Sources).energy_nj;
        let dev = integrate_energy(
            &trace,
            &PhaseWindow::full(&trace),
            &Selection::Devices(vec![CellAddress::new(0, 0)]),
        )
        .energy_nj;
        assert!(((dev / all) - 499.0 / 500.0).abs() < 1e-9);
    }

    #[test]
    fn no_event_window_is_centred_on_peak_power() {
        let trace = ramp_over_resistor(2.0, 4e-3, 500e3, 2000);
        let w = detect_optimal_window(&trace, CellAddress::new(0, 0), &DeviceParams::default());
        assert!(w.event_time.is_none());
        assert!((w.t_start - (2e-3 - 20e-6)).abs() < 1e-12);
        assert!((w.t_end - (2e-3 + 20e-6)).abs() < 1e-12);
    }
}
