//! One test per acceptance criterion. Each prints a `criterion N: PASS|FAIL`
//! line (visible with `--nocapture`) and asserts.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use magicsim::characterize::{characterize, gate_yield};
use magicsim::crossbar::{
    run_transient, ArrayGeometry, CellAddress, CrossbarState, ExecutionTrace, Line, LineDrive, Waveform,
};
use magicsim::device::{DeviceParams, Logic, TransistorParams, VariabilitySpec};
use magicsim::energy::{
    coarse_cost, integrate_energy, or_program_with_reads, table4, CostTable, ExecEnergy, Mode, PhaseWindow, Selection,
    MEASURED,
};
use magicsim::limc::{
    assignments, compile_expr, enumerate_exprs, evaluate_expr, random_expr, simulate_schedule, CompileOptions, Expr,
};
use magicsim::magic::{run_case, run_truth_table, Engine, GateKind, GateLayout, ProtocolParams};

const ROWS: [[bool; 2]; 4] = [[false, false], [false, true], [true, false], [true, true]];

fn report(n: u32, ok: bool, detail: impl std::fmt::Display) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

fn engine() -> Engine {
    Engine::new(ProtocolParams::default())
}

fn nominal() -> CrossbarState {
    CrossbarState::nominal(ArrayGeometry::default()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn criterion_01_truth_tables() {
    let start = Instant::now();
    let engine = engine();
    let layout = GateLayout::default();
    let mut rows = Vec::new();
    for (kind, oracle) in [
        (GateKind::Or, (|x: &[bool]| x[0] || x[1]) as fn(&[bool]) -> bool),
        (GateKind::Not, |x: &[bool]| !x[0]),
    ] {
        let mut state = nominal();
        let table = run_truth_table(&engine, kind, &mut state, &layout).unwrap();
        for case in &table.cases {
            rows.push(case.output == Logic::from_bool(oracle(&case.inputs)));
        }
    }
    let elapsed = start.elapsed();
    let correct = rows.iter().filter(|&&r| r).count();
    report(
        1,
        rows.len() == 6 && correct == 6 && elapsed < Duration::from_secs(10),
        format!("{correct}/6 rows in {elapsed:.2?}"),
    );
}

/// Per-op constants recovered from the two all-same rows of the printed
/// initialization column: row 00 is three RESETs, row 11 two SETs and one
/// RESET.
fn derived_constants(mode: Mode) -> (f64, f64) {
    let init = MEASURED.get(mode).init_nj;
    let reset = init[0] / 3.0;
    let set = (init[3] - reset) / 2.0;
    (set, reset)
}

#[test]
fn criterion_02_init_column() {
    let table = CostTable::default();
    let layout = GateLayout::default();
    let mut misses = Vec::new();
    for mode in [Mode::FullRamp, Mode::Optimal] {
        let (set, reset) = derived_constants(mode);
        assert_eq!(
            (table.init(Logic::One, mode), table.init(Logic::Zero, mode)),
            (set, reset)
        );
        for (k, inputs) in ROWS.iter().enumerate() {
            let ops = or_program_with_reads(&layout, inputs);
            let b = coarse_cost(&ops, &BTreeMap::new(), &table, mode, &ExecEnergy::Measured(vec![0.0])).unwrap();
            // One init per input bit plus the output RESET.
            let n_set = inputs.iter().filter(|&&x| x).count() as f64;
            let oracle = n_set * set + (3.0 - n_set) * reset;
            let printed = MEASURED.get(mode).init_nj[k];
            if b.init_nj != printed || oracle != printed {
                misses.push(format!("{mode} row {k}: {} vs {printed}", b.init_nj));
            }
        }
    }
    report(2, misses.is_empty(), format!("8 init values, misses {misses:?}"));
}

#[test]
fn criterion_03_read_column() {
    let table = CostTable::default();
    let layout = GateLayout::default();
    let printed = MEASURED.full.read_nj;
    let mut worst: f64 = 0.0;
    for (k, inputs) in ROWS.iter().enumerate() {
        let ops = or_program_with_reads(&layout, inputs);
        let b = coarse_cost(
            &ops,
            &BTreeMap::new(),
            &table,
            Mode::FullRamp,
            &ExecEnergy::Measured(vec![0.0]),
        )
        .unwrap();
        // Both inputs are read back.
        let oracle: f64 = inputs.iter().map(|&x| if x { 5.4 } else { 0.056 }).sum();
        assert!(close(b.read_nj, oracle, 1e-12));
        worst = worst.max((b.read_nj - printed[k]).abs());
    }
    report(3, worst <= 0.06, format!("max |read - printed| = {worst:.4} nJ"));
}

#[test]
fn criterion_04_init_share_with_measured_exec() {
    let table = CostTable::default();
    let layout = GateLayout::default();
    let mut worst: f64 = 0.0;
    for mode in [Mode::FullRamp, Mode::Optimal] {
        let r = MEASURED.get(mode);
        for (k, inputs) in ROWS.iter().enumerate() {
            let ops = or_program_with_reads(&layout, inputs);
            let b = coarse_cost(
                &ops,
                &BTreeMap::new(),
                &table,
                mode,
                &ExecEnergy::Measured(vec![r.exec_nj[k]]),
            )
            .unwrap();
            let oracle = 100.0 * r.init_nj[k] / (r.init_nj[k] + r.exec_nj[k] + b.read_nj);
            assert!(close(b.percentages.init, oracle, 1e-9));
            worst = worst.max((b.percentages.init - r.init_pct[k]).abs());
        }
    }
    report(4, worst <= 1.5, format!("max |%init - printed| = {worst:.3} points"));
}

#[test]
fn criterion_05_optimal_split_and_ordering() {
    let t = table4(
        &engine(),
        &nominal(),
        &GateLayout::default(),
        &CostTable::default(),
        &[Mode::FullRamp, Mode::Optimal],
    )
    .unwrap();
    let mut shares = Vec::new();
    let mut split_ok = true;
    for row in ["00", "01", "10", "11"] {
        let p = t.cell(row, Mode::Optimal).unwrap().simulated.percentages;
        split_ok &= p.init >= 80.0 && p.read <= 1.0;
        shares.push(format!("{row}: init {:.1}% read {:.3}%", p.init, p.read));
    }
    let e = |row: &str| t.cell(row, Mode::FullRamp).unwrap().simulated.exec_nj;
    let ordered = e("00") < e("01").min(e("10")) && e("01").max(e("10")) < e("11");
    report(
        5,
        split_ok && ordered,
        format!(
            "[{}]; full-ramp exec 00 {:.1} < 01 {:.1} / 10 {:.1} < 11 {:.1} nJ",
            shares.join(", "),
            e("00"),
            e("01"),
            e("10"),
            e("11")
        ),
    );
}

/// Independent KCL from recorded device currents: every BL/SL node's net
/// branch current must equal the current its line delivers (zero when
/// floating).
fn kcl_violation(trace: &ExecutionTrace) -> Option<String> {
    for (k, s) in trace.samples.iter().enumerate() {
        let max_branch = s.device_current.iter().map(|i| i.abs()).fold(0.0, f64::max);
        for (li, line) in trace.lines.iter().enumerate() {
            let net: f64 = trace
                .devices
                .iter()
                .zip(&s.device_current)
                .map(|(c, &i)| match *line {
                    Line::Bl(col) if c.col == col => i,
                    Line::Sl(row) if c.row == row => -i,
                    _ => 0.0,
                })
                .sum();
            if matches!(line, Line::Wl(_)) {
                continue;
            }
            let residual = (net - s.line_current[li]).abs();
            if residual > 1e-9 * max_branch {
                return Some(format!(
                    "sample {k} {line:?}: residual {residual:e} vs max branch {max_branch:e}"
                ));
            }
        }
        if s.kcl_residual > 1e-9 * s.max_branch_current {
            return Some(format!("sample {k}: solver residual {:e}", s.kcl_residual));
        }
    }
    None
}

fn star_state(r_on: f64) -> CrossbarState {
    let mut s = nominal();
    s.transistor.r_on = r_on;
    s.force_logic(CellAddress::new(0, 0), Logic::One);
    s.force_logic(CellAddress::new(1, 0), Logic::One);
    s.set_drive(Line::Sl(0), LineDrive::dc(3.3, 1.0));
    s.set_drive(Line::Sl(1), LineDrive::dc(3.3, 1.0));
    s.set_drive(Line::Sl(2), LineDrive::Grounded);
    s.set_drive(Line::Wl(0), LineDrive::dc(3.3, 1.0));
    s
}

#[test]
fn criterion_06_solver_correctness() {
    let engine = engine();
    let layout = GateLayout::default();
    let mut traces = Vec::new();
    for kind in [GateKind::Or, GateKind::Not] {
        for inputs in kind.cases() {
            let mut state = nominal();
            let run = run_case(&engine, &mut state, kind, &layout, &inputs).unwrap();
            traces.extend(run.init.into_iter().map(|(_, t)| t));
            traces.push(run.exec);
            traces.push(run.read.trace);
        }
    }
    let samples: usize = traces.iter().map(|t| t.samples.len()).sum();
    let kcl = traces.iter().find_map(kcl_violation);

    // Two 3.3 V sources through LRS branches and a grounded HRS branch into BL0.
    let bl = ArrayGeometry::default().line_index(Line::Bl(0));
    let mut worst: f64 = 0.0;
    for r_on in [1e3, 10.0, 1e-9] {
        let g_in = 1.0 / (20e3 + r_on);
        let g_out = 1.0 / (200e3 + r_on);
        let oracle = 3.3 * 2.0 * g_in / (2.0 * g_in + g_out);
        let v = star_state(r_on).solve_instant(0.0).unwrap().line_voltages[bl].unwrap();
        worst = worst.max(((v - oracle) / oracle).abs());
    }
    report(
        6,
        kcl.is_none() && worst <= 1e-9,
        format!(
            "{samples} samples over {} traces, KCL {:?}; star rel err {worst:e}",
            traces.len(),
            kcl
        ),
    );
}

#[test]
fn criterion_07_triangle_energy_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let v: f64 = rng.random_range(0.1..3.0);
        let t: f64 = rng.random_range(1e-6..1e-2);
        // HRS values are whole multiples of 10 ohm inside the clip range.
        let r = 10.0 * rng.random_range(10_000u32..100_000) as f64;
        let geometry = ArrayGeometry::new(1, 1).unwrap();
        let transistor = TransistorParams {
            r_on: 1e-12,
            ..TransistorParams::default()
        };
        let base = DeviceParams {
            r_hrs: r,
            r_lrs: r / 10.0,
            v_set_th: 1e6,
            ..DeviceParams::default()
        };
        let mut state = CrossbarState::build(geometry, &base, transistor, VariabilitySpec::nominal(r)).unwrap();
        assert_eq!(state.device(CellAddress::new(0, 0)).resistance, r);
        state.set_drive(Line::Bl(0), LineDrive::Driven(Waveform::triangle(v, t)));
        state.set_drive(Line::Sl(0), LineDrive::Grounded);
        state.set_drive(Line::Wl(0), LineDrive::dc(5.0, t));
        let trace = run_transient(&mut state, t, t / 4000.0).unwrap();
        assert!(trace.events.is_empty());
        let e = integrate_energy(&trace, &PhaseWindow::full(&trace), &Selection::Sources).energy_nj * 1e-9;
        let closed = v * v * t / (3.0 * r);
        worst = worst.max(((e - closed) / closed).abs());
    }
    report(7, worst <= 1e-6, format!("10 triples, max rel err {worst:e}"));
}

fn check_expr(e: &Expr, engine: &Engine, costs: &CostTable, options: &CompileOptions) -> Result<usize, String> {
    let schedule = compile_expr(e, options).map_err(|err| format!("{e}: {err}"))?;
    let vars = e.variables();
    let all = assignments(&vars);
    for a in &all {
        let mut state = nominal();
        let run = simulate_schedule(&schedule, a, &mut state, engine, costs, Mode::FullRamp)
            .map_err(|err| format!("{e} {a:?}: {err}"))?;
        let want = evaluate_expr(e, a).unwrap();
        if run.output != Logic::from_bool(want) {
            return Err(format!("{e} {a:?}: simulated {:?}, expected {want}", run.output));
        }
    }
    Ok(all.len())
}

#[test]
fn criterion_08_compiler_equivalence() {
    let start = Instant::now();
    let engine = engine();
    let costs = CostTable::default();
    let options = CompileOptions::default();
    let vars = ["a", "b", "c", "d"];
    let mut exprs = enumerate_exprs(2, &vars);
    let enumerated = exprs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    exprs.extend((0..50).map(|_| random_expr(&mut rng, &vars, 6)));
    assert!(exprs.iter().all(|e| e.variables().len() <= 4 && e.depth() <= 6));

    let mut failures = Vec::new();
    let mut runs = 0;
    for e in &exprs {
        match check_expr(e, &engine, &costs, &options) {
            Ok(n) => runs += n,
            Err(msg) => failures.push(msg),
        }
    }
    let elapsed = start.elapsed();
    report(
        8,
        failures.is_empty() && elapsed < Duration::from_secs(300),
        format!(
            "{enumerated} enumerated + 50 random expressions, {runs} simulations, {elapsed:.1?}, failures {failures:?}"
        ),
    );
}

#[test]
fn criterion_09_variability_harness() {
    let engine = engine();
    let base = DeviceParams::default();
    let transistor = TransistorParams::default();
    let spec = VariabilitySpec::default();
    let a = characterize(&engine, &base, &transistor, &spec, 17, 100).unwrap();
    let b = characterize(&engine, &base, &transistor, &spec, 17, 100).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = a.write_to(da.path()).unwrap();
    let fb = b.write_to(db.path()).unwrap();
    let identical = fa
        .iter()
        .zip(&fb)
        .all(|(x, y)| std::fs::read(x).unwrap() == std::fs::read(y).unwrap());

    let in_range = a.hrs_samples.iter().all(|r| (1e5..=1e6).contains(r));
    let ratio_ok = a
        .devices
        .iter()
        .all(|d| d.r_hrs_ohm / d.r_lrs_ohm == 10.0 && d.ratio == 10.0);
    let yield_report = gate_yield(
        &engine,
        ArrayGeometry::default(),
        &base,
        &transistor,
        &spec,
        &GateLayout::default(),
        100,
    )
    .unwrap();
    let produced = yield_report.trials == 100 && yield_report.cases.len() == 6 && !yield_report.to_string().is_empty();
    report(
        9,
        identical && in_range && ratio_ok && a.hrs_samples.len() == 1700 && produced,
        format!(
            "byte-identical {identical}, {} HRS samples in range {in_range}, ratio 10 {ratio_ok}, yield all-six {}/100",
            a.hrs_samples.len(),
            yield_report.all_correct
        ),
    );
}

#[test]
fn criterion_10_isolation() {
    let engine = engine();
    let geometry = ArrayGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut disturbed = Vec::new();
    for trial in 0..100 {
        let spec = VariabilitySpec {
            seed: trial,
            ..VariabilitySpec::default()
        };
        let mut state =
            CrossbarState::build(geometry, &DeviceParams::default(), TransistorParams::default(), spec).unwrap();
        for cell in geometry.cells() {
            state.force_logic(cell, Logic::from_bool(rng.random_bool(0.5)));
        }
        let target = geometry.cell(rng.random_range(0..geometry.cell_count()));
        let logic = Logic::from_bool(rng.random_bool(0.5));
        let before: Vec<_> = geometry.cells().map(|c| *state.device(c)).collect();
        engine.init(&mut state, target, logic).unwrap();
        for (cell, old) in geometry.cells().zip(&before) {
            if cell != target && state.device(cell) != old {
                disturbed.push(format!("trial {trial}: init {target} disturbed {cell}"));
            }
        }
    }
    report(
        10,
        disturbed.is_empty(),
        format!("100 trials, disturbances {disturbed:?}"),
    );
}
