//! Monte Carlo device cycling and gate-yield sweeps.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::crossbar::{ArrayGeometry, CellAddress, CrossbarError, CrossbarState};
use crate::device::{DeviceParams, DeviceState, Logic, TransistorParams, VariabilitySpec};
use crate::magic::{run_case, Engine, GateKind, GateLayout, ProtocolError};

#[derive(Debug, Error)]
pub enum CharacterizeError {
    #[error("{name} must be positive")]
    NonPositive { name: &'static str },
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceSummary {
    pub index: u64,
    pub r_hrs_ohm: f64,
    pub r_lrs_ohm: f64,
    pub ratio: f64,
    /// SET pulses that left the device in HRS.
    pub set_failures: usize,
    pub reset_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Characterization {
    pub seed: u64,
    pub cycles: usize,
    pub devices: Vec<DeviceSummary>,
    /// Resistance after every successful RESET, device-major.
    pub hrs_samples: Vec<f64>,
    /// Resistance after every successful SET, device-major.
    pub lrs_samples: Vec<f64>,
}

/// SET/RESET cycling of `devices` independently sampled cells, each on its
/// own 1x1 array. Device `i` uses sampling index `i` of `spec`.
pub fn characterize(
    engine: &Engine,
    base: &DeviceParams,
    transistor: &TransistorParams,
    spec: &VariabilitySpec,
    devices: usize,
    cycles: usize,
) -> Result<Characterization, CharacterizeError> {
    if devices == 0 {
        return Err(CharacterizeError::NonPositive { name: "devices" });
    }
    if cycles == 0 {
        return Err(CharacterizeError::NonPositive { name: "cycles" });
    }
    let cell = CellAddress::new(0, 0);
    let mut out = Characterization {
        seed: spec.seed,
        cycles,
        devices: Vec::with_capacity(devices),
        hrs_samples: Vec::with_capacity(devices * cycles),
        lrs_samples: Vec::with_capacity(devices * cycles),
    };
    for index in 0..devices as u64 {
        let params = spec.sample(base, index);
        let mut state = CrossbarState::build(ArrayGeometry::new(1, 1)?, base, transistor.clone(), *spec)?;
        state.set_params(cell, params);
        *state.device_mut(cell) = DeviceState::hrs(&params);
        state.reseed_jitter(index);
        let mut summary = DeviceSummary {
            index,
            r_hrs_ohm: params.r_hrs,
            r_lrs_ohm: params.r_lrs,
            ratio: params.r_hrs / params.r_lrs,
            set_failures: 0,
            reset_failures: 0,
        };
        for _ in 0..cycles {
            engine.init(&mut state, cell, Logic::One)?;
            if state.logic(cell) == Logic::One {
                out.lrs_samples.push(state.device(cell).resistance);
            } else {
                summary.set_failures += 1;
            }
            engine.init(&mut state, cell, Logic::Zero)?;
            if state.logic(cell) == Logic::Zero {
                out.hrs_samples.push(state.device(cell).resistance);
            } else {
                summary.reset_failures += 1;
            }
        }
        out.devices.push(summary);
    }
    Ok(out)
}

/// Empirical CDF: sorted values with `k / n` for the k-th (1-based) sample.
pub fn empirical_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(k, r)| (r, (k + 1) as f64 / n))
        .collect()
}

pub fn write_cdf_csv<W: Write>(mut w: W, samples: &[f64]) -> io::Result<()> {
    writeln!(w, "resistance_ohm,cdf")?;
    for (r, p) in empirical_cdf(samples) {
        writeln!(w, "{r},{p}")?;
    }
    Ok(())
}

/// Step plots of CDFs on a logarithmic resistance axis.
pub fn cdf_svg(series: &[(&str, &[f64])]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 56.0;
    const COLORS: [&str; 4] = ["#c0392b", "#2471a3", "#1e8449", "#7d3c98"];
    let all: Vec<f64> = series
        .iter()
        .flat_map(|(_, s)| s.iter().copied())
        .filter(|r| *r > 0.0)
        .collect();
    let (lo, hi) = all
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let (d0, d1) = if all.is_empty() {
        (3.0, 7.0)
    } else {
        (lo.log10().floor(), hi.log10().ceil().max(lo.log10().floor() + 1.0))
    };
    let x = |r: f64| M + (r.log10() - d0) / (d1 - d0) * (W - 2.0 * M);
    let y = |p: f64| H - M - p * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="black" points="{M},{} {M},{} {},{}"/>"#,
        M,
        H - M,
        W - M,
        H - M
    );
    for d in d0 as i32..=d1 as i32 {
        let px = x(10f64.powi(d));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{}" x2="{px:.1}" y2="{}" stroke="black"/><text x="{px:.1}" y="{}" font-size="12" text-anchor="middle">1e{d}</text>"#,
            H - M,
            H - M + 5.0,
            H - M + 20.0
        );
    }
    for k in 0..=4 {
        let p = k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="12" text-anchor="end">{p}</text>"#,
            M - 8.0,
            y(p) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">resistance (ohm)</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="13" transform="rotate(-90 16 {})" text-anchor="middle">CDF</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (name, samples)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = Vec::new();
        let mut prev = 0.0;
        for (r, p) in empirical_cdf(samples) {
            pts.push(format!("{:.1},{:.1}", x(r), y(prev)));
            pts.push(format!("{:.1},{:.1}", x(r), y(p)));
            prev = p;
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="13" fill="{color}">{name}</text>"#,
            W - M - 60.0,
            M + 18.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

impl Characterization {
    pub fn write_devices_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "index,r_hrs_ohm,r_lrs_ohm,ratio,set_failures,reset_failures")?;
        for d in &self.devices {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                d.index, d.r_hrs_ohm, d.r_lrs_ohm, d.ratio, d.set_failures, d.reset_failures
            )?;
        }
        Ok(())
    }

    /// Writes hrs_cdf.csv, lrs_cdf.csv, devices.csv and cdf.svg into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, CharacterizeError> {
        std::fs::create_dir_all(dir)?;
        let hrs = dir.join("hrs_cdf.csv");
        let lrs = dir.join("lrs_cdf.csv");
        let devices = dir.join("devices.csv");
        let svg = dir.join("cdf.svg");
        write_cdf_csv(io::BufWriter::new(std::fs::File::create(&hrs)?), &self.hrs_samples)?;
        write_cdf_csv(io::BufWriter::new(std::fs::File::create(&lrs)?), &self.lrs_samples)?;
        self.write_devices_csv(io::BufWriter::new(std::fs::File::create(&devices)?))?;
        std::fs::write(&svg, cdf_svg(&[("HRS", &self.hrs_samples), ("LRS", &self.lrs_samples)]))?;
        Ok(vec![hrs, lrs, devices, svg])
    }

    pub fn set_failures(&self) -> usize {
        self.devices.iter().map(|d| d.set_failures).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YieldCase {
    pub gate: GateKind,
    pub inputs: String,
    pub passed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YieldReport {
    pub trials: usize,
    pub seed: u64,
    pub cases: Vec<YieldCase>,
    /// Trials where all six gate cases were correct.
    pub all_correct: usize,
}

impl YieldReport {
    pub fn fraction(&self) -> f64 {
        self.all_correct as f64 / self.trials as f64
    }
}

impl std::fmt::Display for YieldReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "gate yield over {} sampled arrays (seed {})", self.trials, self.seed)?;
        for c in &self.cases {
            writeln!(
                f,
                "  {:<3} {:<2}  {:>4}/{}  {:5.1}%",
                c.gate.to_string(),
                c.inputs,
                c.passed,
                self.trials,
                100.0 * c.passed as f64 / self.trials as f64
            )?;
        }
        write!(
            f,
            "  all six cases correct: {}/{} ({:.1}%)",
            self.all_correct,
            self.trials,
            100.0 * self.fraction()
        )
    }
}

/// Runs the OR and NOT truth tables on `trials` arrays, trial `t` sampled
/// with seed `spec.seed + t`.
pub fn gate_yield(
    engine: &Engine,
    geometry: ArrayGeometry,
    base: &DeviceParams,
    transistor: &TransistorParams,
    spec: &VariabilitySpec,
    layout: &GateLayout,
    trials: usize,
) -> Result<YieldReport, CharacterizeError> {
    if trials == 0 {
        return Err(CharacterizeError::NonPositive { name: "trials" });
    }
    let mut cases: Vec<YieldCase> = [GateKind::Or, GateKind::Not]
        .iter()
        .flat_map(|&g| {
            g.cases().into_iter().map(move |c| YieldCase {
                gate: g,
                inputs: c.iter().map(|&b| if b { '1' } else { '0' }).collect(),
                passed: 0,
            })
        })
        .collect();
    let mut all_correct = 0;
    for t in 0..trials as u64 {
        let trial_spec = VariabilitySpec {
            seed: spec.seed.wrapping_add(t),
            ..*spec
        };
        let mut state = CrossbarState::build(geometry, base, transistor.clone(), trial_spec)?;
        let mut ok = Vec::new();
        for g in [GateKind::Or, GateKind::Not] {
            for inputs in g.cases() {
                ok.push(match run_case(engine, &mut state, g, layout, &inputs) {
                    Ok(run) => run.correct(),
                    // A failed initialization leaves the gate unrunnable.
                    Err(ProtocolError::Precondition { .. }) => false,
                    Err(e) => return Err(e.into()),
                });
            }
        }
        for (case, pass) in cases.iter_mut().zip(&ok) {
            case.passed += usize::from(*pass);
        }
        all_correct += usize::from(ok.iter().all(|&p| p));
    }
    Ok(YieldReport {
        trials,
        seed: spec.seed,
        cases,
        all_correct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{HRS_MAX_OHM, HRS_MIN_OHM};
    use crate::magic::ProtocolParams;

    fn engine() -> Engine {
        Engine::new(ProtocolParams {
            steps: 200,
            ..Default::default()
        })
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one() {
        let c = empirical_cdf(&[3.0, 1.0, 2.0]);
        assert_eq!(c, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
        assert!(empirical_cdf(&[]).is_empty());
    }

    #[test]
    fn cycling_stays_in_bounds() {
        let c = characterize(
            &engine(),
            &DeviceParams::default(),
            &TransistorParams::default(),
            &VariabilitySpec::default(),
            4,
            5,
        )
        .unwrap();
        assert!(c.hrs_samples.iter().all(|r| (HRS_MIN_OHM..=HRS_MAX_OHM).contains(r)));
        assert!(c.devices.iter().all(|d| d.ratio == 10.0));
        assert_eq!(
            c.hrs_samples.len() + c.devices.iter().map(|d| d.reset_failures).sum::<usize>(),
            20
        );
    }

    #[test]
    fn single_point() {
        let c = characterize(
            &engine(),
            &DeviceParams::default(),
            &TransistorParams::default(),
            &VariabilitySpec::nominal(2e5),
            1,
            1,
        )
        .unwrap();
        assert_eq!(c.hrs_samples, vec![2e5]);
        assert_eq!(c.lrs_samples, vec![2e4]);
        let mut out = Vec::new();
        write_cdf_csv(&mut out, &c.hrs_samples).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "resistance_ohm,cdf\n200000,1\n");
        assert!(cdf_svg(&[("HRS", &c.hrs_samples)]).starts_with("<svg"));
    }

    #[test]
    fn zero_counts_rejected() {
        let e = characterize(
            &engine(),
            &DeviceParams::default(),
            &TransistorParams::default(),
            &VariabilitySpec::default(),
            0,
            1,
        );
        assert!(matches!(e, Err(CharacterizeError::NonPositive { name: "devices" })));
    }

    #[test]
    fn nominal_yield_is_full() {
        let r = gate_yield(
            &engine(),
            ArrayGeometry::default(),
            &DeviceParams::default(),
            &TransistorParams::default(),
            &VariabilitySpec::nominal(2e5),
            &GateLayout::default(),
            2,
        )
        .unwrap();
        assert_eq!(r.cases.len(), 6);
        assert_eq!(r.all_correct, 2);
        assert!(r.to_string().contains("2/2"));
    }
}
