//! `key = value` configuration with dotted keys.
//!
//! ```text
//! # comments and blank lines are ignored
//! device.i_hold_a = 30e-6
//! transistor.compliance = 1.6:500e-6, 5:2e-3
//! sim.steps = 1000
//! ```

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::crossbar::ArrayGeometry;
use crate::device::{DeviceParams, TransistorParams, VariabilitySpec};
use crate::energy::CostTable;
use crate::magic::ProtocolParams;

pub const CONFIG_ENV: &str = "MAGICSIM_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub device: DeviceParams,
    pub transistor: TransistorParams,
    pub variability: VariabilitySpec,
    pub geometry: ArrayGeometry,
    pub protocol: ProtocolParams,
    pub energy: CostTable,
}

type Getter = fn(&Config) -> String;
type Setter = fn(&mut Config, &str) -> Result<(), String>;

fn num(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

fn count(v: &str) -> Result<usize, String> {
    v.parse().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn compliance(v: &str) -> Result<Vec<(f64, f64)>, String> {
    v.split(',')
        .map(|pair| {
            let (g, i) = pair
                .split_once(':')
                .ok_or_else(|| format!("`{}` is not gate:current", pair.trim()))?;
            Ok((num(g.trim())?, num(i.trim())?))
        })
        .collect()
}

macro_rules! f64_keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        &[$(
            (
                $key,
                (|c: &Config| c.$($field).+.to_string()) as Getter,
                (|c: &mut Config, v: &str| {
                    c.$($field).+ = num(v)?;
                    Ok(())
                }) as Setter,
            )
        ),*]
    };
}

const F64_KEYS: &[(&str, Getter, Setter)] = f64_keys! {
    "device.r_hrs_ohm" => device.r_hrs,
    "device.r_lrs_ohm" => device.r_lrs,
    "device.v_set_th_v" => device.v_set_th,
    "device.v_reset_th_v" => device.v_reset_th,
    "device.i_hold_a" => device.i_hold,
    "device.i_reset_min_a" => device.i_reset_min,
    "transistor.v_gate_on_v" => transistor.v_gate_on,
    "transistor.r_on_ohm" => transistor.r_on,
    "variability.hrs_log_mean" => variability.hrs_log_mean,
    "variability.hrs_log_sigma" => variability.hrs_log_sigma,
    "variability.c2c_sigma" => variability.c2c_sigma,
    "protocol.set_peak_v" => protocol.set_peak_v,
    "protocol.set_gate_v" => protocol.set_gate_v,
    "protocol.set_duration_s" => protocol.set_duration_s,
    "protocol.reset_peak_v" => protocol.reset_peak_v,
    "protocol.reset_gate_v" => protocol.reset_gate_v,
    "protocol.reset_duration_s" => protocol.reset_duration_s,
    "protocol.read_v" => protocol.read_v,
    "protocol.read_gate_v" => protocol.read_gate_v,
    "protocol.read_duration_s" => protocol.read_duration_s,
    "protocol.or_exec_peak_v" => protocol.or_exec_peak_v,
    "protocol.not_exec_peak_v" => protocol.not_exec_peak_v,
    "protocol.not_input_ratio" => protocol.not_input_ratio,
    "protocol.exec_gate_v" => protocol.exec_gate_v,
    "protocol.exec_duration_s" => protocol.exec_duration_s,
    "energy.set_full_nj" => energy.set_full_nj,
    "energy.reset_full_nj" => energy.reset_full_nj,
    "energy.set_opt_nj" => energy.set_opt_nj,
    "energy.reset_opt_nj" => energy.reset_opt_nj,
    "energy.read_lrs_nj" => energy.read_lrs_nj,
    "energy.read_hrs_nj" => energy.read_hrs_nj,
    "energy.read_lrs_opt_nj" => energy.read_lrs_opt_nj,
    "energy.read_hrs_opt_nj" => energy.read_hrs_opt_nj,
    "energy.set_duration_s" => energy.set_duration_s,
    "energy.reset_duration_s" => energy.reset_duration_s,
    "energy.read_duration_s" => energy.read_duration_s,
};

const OTHER_KEYS: &[(&str, Getter, Setter)] = &[
    (
        "transistor.compliance",
        |c| {
            c.transistor
                .compliance
                .iter()
                .map(|(g, i)| format!("{g}:{i}"))
                .collect::<Vec<_>>()
                .join(", ")
        },
        |c, v| {
            c.transistor.compliance = compliance(v)?;
            Ok(())
        },
    ),
    (
        "variability.hrs_median_ohm",
        |c| c.variability.hrs_log_mean.exp().to_string(),
        |c, v| {
            let r = num(v)?;
            if r <= 0.0 {
                return Err("must be positive".into());
            }
            c.variability.hrs_log_mean = r.ln();
            Ok(())
        },
    ),
    (
        "variability.seed",
        |c| c.variability.seed.to_string(),
        |c, v| {
            c.variability.seed = v.parse().map_err(|_| format!("`{v}` is not an unsigned integer"))?;
            Ok(())
        },
    ),
    (
        "geometry.rows",
        |c| c.geometry.rows.to_string(),
        |c, v| {
            c.geometry.rows = count(v)?;
            Ok(())
        },
    ),
    (
        "geometry.cols",
        |c| c.geometry.cols.to_string(),
        |c, v| {
            c.geometry.cols = count(v)?;
            Ok(())
        },
    ),
    (
        "sim.steps",
        |c| c.protocol.steps.to_string(),
        |c, v| {
            c.protocol.steps = count(v)?;
            Ok(())
        },
    ),
    (
        "sim.dt_s",
        |c| c.protocol.dt_s.map_or_else(|| "auto".into(), |d| d.to_string()),
        |c, v| {
            c.protocol.dt_s = if v == "auto" { None } else { Some(num(v)?) };
            Ok(())
        },
    ),
];

fn lookup(key: &str) -> Option<&'static (&'static str, Getter, Setter)> {
    F64_KEYS.iter().chain(OTHER_KEYS).find(|(k, _, _)| *k == key)
}

impl Config {
    /// Every accepted key.
    pub fn keys() -> impl Iterator<Item = &'static str> {
        F64_KEYS.iter().chain(OTHER_KEYS).map(|(k, _, _)| *k)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        lookup(key).map(|(_, get, _)| get(self))
    }

    /// Applies one key. Validation of the whole configuration happens in
    /// [`Config::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let (_, _, set) = lookup(key).ok_or_else(|| format!("unknown key `{key}`"))?;
        set(self, value)
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut c = Config::default();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let (_, _, set) = lookup(key).ok_or_else(|| ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            })?;
            set(&mut c, value).map_err(|message| ConfigError::Value {
                line,
                key: key.to_string(),
                message,
            })?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// `explicit` wins over `$MAGICSIM_CONFIG`; with neither, defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Config, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Config::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.device.validate().map_err(|e| invalid(&e))?;
        self.transistor.validate().map_err(|e| invalid(&e))?;
        self.variability.validate().map_err(|e| invalid(&e))?;
        self.geometry.validate().map_err(|e| invalid(&e))?;
        self.energy.validate().map_err(|e| invalid(&e))?;
        let p = &self.protocol;
        if p.steps == 0 {
            return Err(ConfigError::Invalid("sim.steps must be positive".into()));
        }
        if let Some(dt) = p.dt_s {
            if dt <= 0.0 {
                return Err(ConfigError::Invalid("sim.dt_s must be positive".into()));
            }
        }
        for (name, d) in [
            ("set", p.set_duration_s),
            ("reset", p.reset_duration_s),
            ("read", p.read_duration_s),
            ("exec", p.exec_duration_s),
        ] {
            if d <= 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "protocol.{name}_duration_s must be positive"
                )));
            }
        }
        if !(0.0..=1.0).contains(&p.not_input_ratio) {
            return Err(ConfigError::Invalid(
                "protocol.not_input_ratio must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Every key with its current value, parseable by [`Config::parse`].
    pub fn to_text(&self) -> String {
        Self::keys()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }
}
