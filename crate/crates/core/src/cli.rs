//! Command-line front end. Exit codes: 0 success, 1 runtime failure or a
//! gate result that differs from the ideal gate, 2 usage or validation error.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::characterize::{characterize, gate_yield, YieldReport};
use crate::config::Config;
use crate::crossbar::{CellAddress, CrossbarState};
use crate::device::VariabilitySpec;
use crate::energy::{coarse_cost, fine_breakdown, table4, EnergyBreakdown, ExecEnergy, Mode, Table4};
use crate::limc::{check_schedule, compile, CompileError, CompileOptions, Schedule, ScheduleRun};
use crate::magic::{calibrate_margins, run_case, CalibrationError, Engine, GateKind, GateLayout, MicroOp};

#[derive(Debug, Parser)]
#[command(
    name = "magicsim",
    version,
    about = "MAGIC stateful-logic simulator for 1T1R RRAM crossbars"
)]
pub struct Cli {
    /// key=value configuration file (overrides $MAGICSIM_CONFIG)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo SET/RESET cycling; writes HRS/LRS CDFs
    Characterize(CharacterizeArgs),
    /// Run one OR/NOT gate with full initialization
    Gate(GateArgs),
    /// Compile and simulate a Boolean expression
    Run(RunArgs),
    /// Simulate a schedule JSON file
    Replay(ReplayArgs),
    /// Initialization/execution/read energy table for the two-input OR
    Table4(Table4Args),
    /// Operating margins of all six gate cases at nominal parameters
    Calibrate(JsonFlag),
    /// Gate-yield sweep over sampled arrays
    Yield(YieldArgs),
}

#[derive(Debug, Args)]
pub struct JsonFlag {
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    #[arg(long, default_value_t = 17)]
    pub devices: i64,
    #[arg(long, default_value_t = 100)]
    pub cycles: i64,
    /// Overrides variability.seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "characterize_out")]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GateArg {
    Or,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Optimal,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Full => Mode::FullRamp,
            ModeArg::Optimal => Mode::Optimal,
        }
    }
}

#[derive(Debug, Args)]
pub struct GateArgs {
    pub gate: GateArg,
    /// Input bits, e.g. 10 for OR or 1 for NOT
    #[arg(long)]
    pub inputs: String,
    #[arg(long, value_enum, default_value = "full")]
    pub mode: ModeArg,
    /// Directory for per-op trace CSVs
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
    /// Sample devices from the configured variability spec instead of nominal
    #[arg(long)]
    pub sampled: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub expr: String,
    /// Input values, e.g. a=1,b=0
    #[arg(long, default_value = "")]
    pub assign: String,
    #[arg(long, value_name = "FILE")]
    pub emit_schedule: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "full")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 2)]
    pub max_or_fanin: usize,
    /// Sample devices from the configured variability spec instead of nominal
    #[arg(long)]
    pub sampled: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub schedule: PathBuf,
    #[arg(long, default_value = "")]
    pub assign: String,
    #[arg(long, value_enum, default_value = "full")]
    pub mode: ModeArg,
    /// Sample devices from the configured variability spec instead of nominal
    #[arg(long)]
    pub sampled: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeSel {
    Full,
    Optimal,
    Both,
}

#[derive(Debug, Args)]
pub struct Table4Args {
    #[arg(long, value_enum, default_value = "both")]
    pub mode: ModeSel,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct YieldArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: i64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub json: bool,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn runtime(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    match writeln!(io::stdout(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(runtime(e)),
        _ => Ok(()),
    }
}

pub fn parse_bits(text: &str, arity: usize) -> Result<Vec<bool>, Failure> {
    let bits: Option<Vec<bool>> = text
        .chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect();
    match bits {
        Some(b) if b.len() == arity => Ok(b),
        _ => Err(usage(format!("--inputs must be {arity} binary digit(s), got `{text}`"))),
    }
}

pub fn parse_assign(text: &str) -> Result<BTreeMap<String, bool>, Failure> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("`{part}` is not name=0|1")))?;
        let v = match v.trim() {
            "0" => false,
            "1" => true,
            other => return Err(usage(format!("`{other}` is not 0 or 1"))),
        };
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn run(cli: Cli) -> Result<u8, Failure> {
    let config = Config::resolve(cli.config.as_deref()).map_err(|e| usage(e.to_string()))?;
    match cli.command {
        Command::Characterize(a) => cmd_characterize(&config, a),
        Command::Gate(a) => cmd_gate(&config, a),
        Command::Run(a) => cmd_run(&config, a),
        Command::Replay(a) => cmd_replay(&config, a),
        Command::Table4(a) => cmd_table4(&config, a),
        Command::Calibrate(a) => cmd_calibrate(&config, a),
        Command::Yield(a) => cmd_yield(&config, a),
    }
}

fn engine(config: &Config) -> Engine {
    Engine::new(config.protocol.clone())
}

/// Nominal array unless `sampled`, which draws devices from the configured
/// variability spec.
fn fresh_state(config: &Config, sampled: bool) -> Result<CrossbarState, Failure> {
    let spec = if sampled {
        config.variability
    } else {
        VariabilitySpec::nominal(config.device.r_hrs)
    };
    CrossbarState::build(config.geometry, &config.device, config.transistor.clone(), spec)
        .map_err(|e| usage(e.to_string()))
}

#[derive(Serialize)]
struct CharacterizeReport {
    seed: u64,
    devices: usize,
    cycles: usize,
    hrs_samples: usize,
    lrs_samples: usize,
    hrs_min_ohm: f64,
    hrs_max_ohm: f64,
    set_failures: usize,
    reset_failures: usize,
    files: Vec<String>,
}

fn cmd_characterize(config: &Config, a: CharacterizeArgs) -> Result<u8, Failure> {
    if a.devices <= 0 || a.cycles <= 0 {
        return Err(usage("--devices and --cycles must be positive"));
    }
    let mut spec = config.variability;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let c = characterize(
        &engine(config),
        &config.device,
        &config.transistor,
        &spec,
        a.devices as usize,
        a.cycles as usize,
    )
    .map_err(runtime)?;
    let files = c.write_to(&a.out).map_err(runtime)?;
    let (lo, hi) = c
        .hrs_samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &r| (l.min(r), h.max(r)));
    let report = CharacterizeReport {
        seed: spec.seed,
        devices: c.devices.len(),
        cycles: c.cycles,
        hrs_samples: c.hrs_samples.len(),
        lrs_samples: c.lrs_samples.len(),
        hrs_min_ohm: if c.hrs_samples.is_empty() { 0.0 } else { lo },
        hrs_max_ohm: if c.hrs_samples.is_empty() { 0.0 } else { hi },
        set_failures: c.set_failures(),
        reset_failures: c.devices.iter().map(|d| d.reset_failures).sum(),
        files: files.iter().map(|p| p.display().to_string()).collect(),
    };
    if a.json {
        print_json(&report)?;
    } else {
        println!(
            "{} devices x {} cycles (seed {}): {} HRS samples in [{:.0}, {:.0}] ohm, {} LRS samples",
            report.devices,
            report.cycles,
            report.seed,
            report.hrs_samples,
            report.hrs_min_ohm,
            report.hrs_max_ohm,
            report.lrs_samples
        );
        println!(
            "SET failures {}, RESET failures {}",
            report.set_failures, report.reset_failures
        );
        for f in &report.files {
            println!("wrote {f}");
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct GateReport {
    gate: String,
    inputs: String,
    expected: u8,
    output: u8,
    correct: bool,
    switched: bool,
    read_current_a: f64,
    fine: EnergyBreakdown,
    coarse: EnergyBreakdown,
    traces: Vec<String>,
}

fn cmd_gate(config: &Config, a: GateArgs) -> Result<u8, Failure> {
    let kind = match a.gate {
        GateArg::Or => GateKind::Or,
        GateArg::Not => GateKind::Not,
    };
    let inputs = parse_bits(&a.inputs, kind.arity())?;
    let mode: Mode = a.mode.into();
    let engine = engine(config);
    let layout = GateLayout::default();
    let mut state = fresh_state(config, a.sampled)?;
    let run = run_case(&engine, &mut state, kind, &layout, &inputs).map_err(runtime)?;

    let mut ops: Vec<MicroOp> = run.init.iter().map(|(op, _)| op.clone()).collect();
    ops.push(run.exec_op.clone());
    ops.push(MicroOp::Read { cell: layout.out });
    let mut traces: Vec<_> = run.init.iter().map(|(_, t)| t.clone()).collect();
    traces.push(run.exec.clone());
    traces.push(run.read.trace.clone());
    let fine = fine_breakdown(&ops, &traces, &state, mode).map_err(runtime)?;
    let exec = vec![fine.items[ops.len() - 2].energy_nj];
    let coarse = coarse_cost(
        &ops,
        &BTreeMap::new(),
        &config.energy,
        mode,
        &ExecEnergy::Simulated(exec),
    )
    .map_err(runtime)?;

    let mut written = Vec::new();
    if let Some(dir) = &a.trace_dir {
        std::fs::create_dir_all(dir).map_err(runtime)?;
        for (k, (op, trace)) in ops.iter().zip(&traces).enumerate() {
            let path = dir.join(format!("{k:02}_{}.csv", op.kind()));
            let f = std::fs::File::create(&path).map_err(runtime)?;
            trace.write_csv(io::BufWriter::new(f)).map_err(runtime)?;
            written.push(path.display().to_string());
        }
    }
    let report = GateReport {
        gate: kind.to_string(),
        inputs: run.label(),
        expected: u8::from(run.expected),
        output: run.output.as_u8(),
        correct: run.correct(),
        switched: run.switched,
        read_current_a: run.read_current,
        fine,
        coarse,
        traces: written,
    };
    if a.json {
        print_json(&report)?;
    } else {
        println!(
            "{} {}: output {} (expected {}) {}",
            report.gate,
            report.inputs,
            report.output,
            report.expected,
            if report.correct { "ok" } else { "MISMATCH" }
        );
        println!(
            "read current {:.3} uA, output switched: {}",
            report.read_current_a * 1e6,
            report.switched
        );
        print_breakdown("simulated", &report.fine);
        print_breakdown("cost table", &report.coarse);
        for t in &report.traces {
            println!("trace {t}");
        }
    }
    Ok(if report.correct { 0 } else { 1 })
}

fn print_breakdown(label: &str, b: &EnergyBreakdown) {
    println!(
        "{label} ({}): init {:.3} nJ ({:.1}%), exec {:.3} nJ ({:.1}%), read {:.4} nJ ({:.3}%), total {:.3} nJ",
        b.mode, b.init_nj, b.percentages.init, b.exec_nj, b.percentages.exec, b.read_nj, b.percentages.read, b.total_nj
    );
}

#[derive(Serialize)]
struct RunReport {
    expr: Option<String>,
    assignment: BTreeMap<String, bool>,
    output: u8,
    expected: Option<u8>,
    ops: usize,
    cells_used: usize,
    output_cell: CellAddress,
    reads: Vec<crate::limc::ReadRecord>,
    fine: EnergyBreakdown,
    coarse: EnergyBreakdown,
}

fn simulate(
    config: &Config,
    s: &Schedule,
    assignment: &BTreeMap<String, bool>,
    mode: Mode,
    sampled: bool,
) -> Result<ScheduleRun, Failure> {
    if let Some(extra) = assignment.keys().find(|k| !s.inputs.contains(k)) {
        return Err(usage(format!("`{extra}` is not an input of the expression")));
    }
    if let Some(missing) = s.inputs.iter().find(|n| !assignment.contains_key(*n)) {
        return Err(usage(format!("no value for input `{missing}`")));
    }
    let mut state = fresh_state(config, sampled)?;
    crate::limc::simulate_schedule(s, assignment, &mut state, &engine(config), &config.energy, mode).map_err(runtime)
}

fn report_run(report: &RunReport, json: bool) -> Result<(), Failure> {
    if json {
        return print_json(report);
    }
    if let Some(e) = &report.expr {
        println!("{e}");
    }
    println!(
        "output {}{} ({} ops, {} cells, output at {})",
        report.output,
        report.expected.map_or(String::new(), |x| format!(" (expected {x})")),
        report.ops,
        report.cells_used,
        report.output_cell
    );
    print_breakdown("simulated", &report.fine);
    print_breakdown("cost table", &report.coarse);
    Ok(())
}

fn cmd_run(config: &Config, a: RunArgs) -> Result<u8, Failure> {
    let options = CompileOptions {
        geometry: config.geometry,
        max_or_fanin: a.max_or_fanin,
    };
    let assignment = parse_assign(&a.assign)?;
    let schedule = compile(&a.expr, &options).map_err(|e| match e {
        CompileError::Parse(p) => usage(format!("{p}\n  {}\n  {}^", a.expr, " ".repeat(p.offset))),
        CompileError::Map(m) => runtime(m),
    })?;
    if let Some(path) = &a.emit_schedule {
        std::fs::write(path, schedule.to_json()).map_err(runtime)?;
    }
    let expr = crate::limc::parse_expr(&a.expr).expect("compiled above");
    let r = simulate(config, &schedule, &assignment, a.mode.into(), a.sampled)?;
    let expected = crate::limc::evaluate_expr(&expr, &assignment).map_err(runtime)?;
    let report = RunReport {
        expr: Some(expr.to_string()),
        assignment,
        output: r.output.as_u8(),
        expected: Some(u8::from(expected)),
        ops: schedule.ops.len(),
        cells_used: schedule.footprint().len(),
        output_cell: schedule.output_cell,
        reads: r.reads,
        fine: r.fine,
        coarse: r.coarse,
    };
    report_run(&report, a.json)?;
    Ok(if report.output == u8::from(expected) { 0 } else { 1 })
}

fn load_schedule(path: &Path) -> Result<Schedule, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Schedule::from_json(&text).map_err(|e| usage(e.to_string()))
}

fn cmd_replay(config: &Config, a: ReplayArgs) -> Result<u8, Failure> {
    let schedule = load_schedule(&a.schedule)?;
    check_schedule(&schedule, &config.geometry).map_err(|e| usage(format!("malformed schedule: {e}")))?;
    let assignment = parse_assign(&a.assign)?;
    let r = simulate(config, &schedule, &assignment, a.mode.into(), a.sampled)?;
    let report = RunReport {
        expr: None,
        assignment,
        output: r.output.as_u8(),
        expected: None,
        ops: schedule.ops.len(),
        cells_used: schedule.footprint().len(),
        output_cell: schedule.output_cell,
        reads: r.reads,
        fine: r.fine,
        coarse: r.coarse,
    };
    report_run(&report, a.json)?;
    Ok(0)
}

fn cmd_table4(config: &Config, a: Table4Args) -> Result<u8, Failure> {
    let modes: &[Mode] = match a.mode {
        ModeSel::Full => &[Mode::FullRamp],
        ModeSel::Optimal => &[Mode::Optimal],
        ModeSel::Both => &[Mode::FullRamp, Mode::Optimal],
    };
    let nominal = fresh_state(config, false)?;
    let t: Table4 =
        table4(&engine(config), &nominal, &GateLayout::default(), &config.energy, modes).map_err(runtime)?;
    if a.json {
        print_json(&t)?;
    } else {
        println!("{t}");
    }
    Ok(0)
}

fn cmd_calibrate(config: &Config, a: JsonFlag) -> Result<u8, Failure> {
    let (report, code) = match calibrate_margins(&config.device, &config.transistor, &config.protocol, config.geometry)
    {
        Ok(r) => (r, 0),
        Err(CalibrationError::Violations(r)) => (r, 1),
        Err(e) => return Err(runtime(e)),
    };
    if a.json {
        print_json(&report)?;
    } else {
        print!("{report}");
        let bad: Vec<String> = report.violations().map(|c| format!("{}{}", c.gate, c.inputs)).collect();
        if !bad.is_empty() {
            println!("violations: {}", bad.join(", "));
        }
    }
    Ok(code)
}

fn cmd_yield(config: &Config, a: YieldArgs) -> Result<u8, Failure> {
    if a.trials <= 0 {
        return Err(usage("--trials must be positive"));
    }
    let mut spec = config.variability;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let r: YieldReport = gate_yield(
        &engine(config),
        config.geometry,
        &config.device,
        &config.transistor,
        &spec,
        &GateLayout::default(),
        a.trials as usize,
    )
    .map_err(runtime)?;
    if a.json {
        print_json(&r)?;
    } else {
        println!("{r}");
    }
    Ok(0)
}
