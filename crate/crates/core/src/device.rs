//! Behavioral model of one Pt/TaOx/W/Pt memristor behind an access transistor.
//!
//! Switching is abrupt and binary: a device is either in its high resistive
//! state (logic 0) or its low resistive state (logic 1). Whether a switching
//! event commits is decided by [`set_event_check`] and [`reset_event_check`],
//! which combine a device-voltage threshold with a current criterion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed HRS/LRS ratio shared by every device.
pub const HRS_LRS_RATIO: f64 = 10.0;
/// Bounds applied to every sampled high-resistance value.
pub const HRS_MIN_OHM: f64 = 1e5;
pub const HRS_MAX_OHM: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("{name} must be strictly positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("r_hrs / r_lrs must be {HRS_LRS_RATIO}, got {0}")]
    Ratio(f64),
    #[error("compliance table must be non-empty and non-decreasing in both gate voltage and current")]
    Compliance,
}

fn positive(name: &'static str, value: f64) -> Result<(), DeviceError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(DeviceError::NonPositive { name, value })
    }
}

/// Logic level stored in a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Logic {
    /// High resistive state.
    Zero,
    /// Low resistive state.
    One,
}

impl Logic {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Logic::One
        } else {
            Logic::Zero
        }
    }

    pub fn as_bool(self) -> bool {
        self == Logic::One
    }

    pub fn as_u8(self) -> u8 {
        self.as_bool() as u8
    }
}

/// Resistances and switching criteria of one memristor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub r_hrs: f64,
    pub r_lrs: f64,
    /// Minimum TE-positive device voltage for a SET.
    pub v_set_th: f64,
    /// Minimum TE-negative device voltage magnitude for a RESET.
    pub v_reset_th: f64,
    /// Current the network must sustain through the freshly SET device.
    pub i_hold: f64,
    /// Current that must flow through the LRS device for a RESET to commit.
    pub i_reset_min: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        DeviceParams {
            r_hrs: 200e3,
            r_lrs: 20e3,
            v_set_th: 1.1,
            v_reset_th: 1.7,
            i_hold: 30e-6,
            i_reset_min: 80e-6,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        positive("r_hrs", self.r_hrs)?;
        positive("r_lrs", self.r_lrs)?;
        positive("v_set_th", self.v_set_th)?;
        positive("v_reset_th", self.v_reset_th)?;
        positive("i_hold", self.i_hold)?;
        positive("i_reset_min", self.i_reset_min)?;
        let ratio = self.r_hrs / self.r_lrs;
        if (ratio - HRS_LRS_RATIO).abs() > 1e-9 * HRS_LRS_RATIO {
            return Err(DeviceError::Ratio(ratio));
        }
        Ok(())
    }

    /// Geometric mean of the two nominal resistances.
    pub fn read_threshold(&self) -> f64 {
        (self.r_hrs * self.r_lrs).sqrt()
    }

    pub fn resistance_of(&self, logic: Logic) -> f64 {
        match logic {
            Logic::Zero => self.r_hrs,
            Logic::One => self.r_lrs,
        }
    }
}

/// Read classification: logic 1 iff `r` is strictly below the geometric-mean
/// threshold. Ties go to HRS.
pub fn logic_of_resistance(r: f64, params: &DeviceParams) -> Logic {
    assert!(r > 0.0, "resistance must be positive, got {r}");
    Logic::from_bool(r < params.read_threshold())
}

/// SET commits iff the device sees at least `v_set_th` and the network can
/// sustain `i_hold` through it once it is in LRS.
pub fn set_event_check(v_device: f64, i_post_switch: f64, params: &DeviceParams) -> bool {
    v_device >= params.v_set_th && i_post_switch >= params.i_hold
}

/// RESET commits iff the negative device voltage magnitude reaches
/// `v_reset_th` and the pre-switch current reaches `i_reset_min`.
pub fn reset_event_check(v_device: f64, i_pre_switch: f64, params: &DeviceParams) -> bool {
    let v = v_device.abs();
    v > 0.0 && v >= params.v_reset_th && i_pre_switch.abs() >= params.i_reset_min
}

/// How far past both SET criteria a device is; non-negative iff the SET fires.
pub fn set_margin(v_device: f64, i_post_switch: f64, params: &DeviceParams) -> f64 {
    (v_device / params.v_set_th).min(i_post_switch / params.i_hold) - 1.0
}

pub fn reset_margin(v_device: f64, i_pre_switch: f64, params: &DeviceParams) -> f64 {
    (v_device.abs() / params.v_reset_th).min(i_pre_switch.abs() / params.i_reset_min) - 1.0
}

/// Mutable state of a single memristor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub resistance: f64,
    /// Completed SET/RESET transitions.
    pub cycle_count: u64,
    pub pristine: bool,
}

impl DeviceState {
    /// A formed device sitting in HRS.
    pub fn hrs(params: &DeviceParams) -> Self {
        DeviceState {
            resistance: params.r_hrs,
            cycle_count: 0,
            pristine: false,
        }
    }

    pub fn pristine(params: &DeviceParams) -> Self {
        DeviceState {
            pristine: true,
            ..Self::hrs(params)
        }
    }

    /// Forming is a zero-cost one-time move into HRS.
    pub fn form(&mut self, params: &DeviceParams) {
        if self.pristine {
            self.pristine = false;
            self.resistance = params.r_hrs;
        }
    }

    pub fn logic(&self, params: &DeviceParams) -> Logic {
        logic_of_resistance(self.resistance, params)
    }
}

/// Access transistor: ideal switch with series on-resistance and a
/// gate-dependent compliance current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransistorParams {
    pub v_gate_on: f64,
    pub r_on: f64,
    /// (gate voltage, saturation current) pairs, linearly interpolated and
    /// held flat outside the table.
    pub compliance: Vec<(f64, f64)>,
}

impl Default for TransistorParams {
    fn default() -> Self {
        TransistorParams {
            v_gate_on: 0.7,
            r_on: 1e3,
            compliance: vec![(1.6, 500e-6), (5.0, 2e-3)],
        }
    }
}

impl TransistorParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        positive("v_gate_on", self.v_gate_on)?;
        positive("r_on", self.r_on)?;
        if self.compliance.is_empty() {
            return Err(DeviceError::Compliance);
        }
        for &(v, i) in &self.compliance {
            positive("compliance current", i)?;
            if !v.is_finite() {
                return Err(DeviceError::Compliance);
            }
        }
        let ok = self.compliance.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1);
        if !ok {
            return Err(DeviceError::Compliance);
        }
        Ok(())
    }

    pub fn conducts(&self, v_gate: f64) -> bool {
        v_gate >= self.v_gate_on
    }

    pub fn compliance_at(&self, v_gate: f64) -> f64 {
        let table = &self.compliance;
        let first = table[0];
        let last = table[table.len() - 1];
        if v_gate <= first.0 {
            return first.1;
        }
        if v_gate >= last.0 {
            return last.1;
        }
        for w in table.windows(2) {
            let ((v0, i0), (v1, i1)) = (w[0], w[1]);
            if v_gate <= v1 {
                return i0 + (i1 - i0) * (v_gate - v0) / (v1 - v0);
            }
        }
        last.1
    }
}

/// Device-to-device and cycle-to-cycle variability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariabilitySpec {
    pub hrs_log_mean: f64,
    pub hrs_log_sigma: f64,
    pub c2c_sigma: f64,
    pub seed: u64,
}

impl Default for VariabilitySpec {
    /// Median at the geometric centre of the observed HRS range.
    fn default() -> Self {
        VariabilitySpec {
            hrs_log_mean: (HRS_MIN_OHM * HRS_MAX_OHM).sqrt().ln(),
            hrs_log_sigma: 0.9,
            c2c_sigma: 0.05,
            seed: 7,
        }
    }
}

impl VariabilitySpec {
    /// Every device identical to `r_hrs`, no jitter.
    pub fn nominal(r_hrs: f64) -> Self {
        VariabilitySpec {
            hrs_log_mean: r_hrs.ln(),
            hrs_log_sigma: 0.0,
            c2c_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if !self.hrs_log_mean.is_finite() {
            return Err(DeviceError::NonPositive {
                name: "hrs_log_mean",
                value: self.hrs_log_mean,
            });
        }
        for (name, v) in [("hrs_log_sigma", self.hrs_log_sigma), ("c2c_sigma", self.c2c_sigma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DeviceError::NonPositive { name, value: v });
            }
        }
        Ok(())
    }

    /// Draws the parameters of device `index`. `r_lrs` is quantized to whole
    /// ohms so that `r_hrs / r_lrs` is exactly 10. Voltage thresholds come
    /// from `base`; the hold and RESET currents scale with LRS conductance,
    /// `i * base.r_lrs / r_lrs`, as a thinner filament needs less current.
    pub fn sample(&self, base: &DeviceParams, index: u64) -> DeviceParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let z: f64 = StandardNormal.sample(&mut rng);
        let r_hrs = clip_hrs((self.hrs_log_mean + self.hrs_log_sigma * z).exp());
        let r_lrs = (r_hrs / HRS_LRS_RATIO).round();
        let scale = base.r_lrs / r_lrs;
        DeviceParams {
            r_hrs: r_lrs * HRS_LRS_RATIO,
            r_lrs,
            i_hold: base.i_hold * scale,
            i_reset_min: base.i_reset_min * scale,
            ..*base
        }
    }

    /// Multiplicative lognormal jitter applied after a committed transition.
    pub fn jitter(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.c2c_sigma == 0.0 {
            return 1.0;
        }
        let z: f64 = StandardNormal.sample(rng);
        (self.c2c_sigma * z).exp()
    }
}

pub fn clip_hrs(r: f64) -> f64 {
    r.clamp(HRS_MIN_OHM, HRS_MAX_OHM)
}
