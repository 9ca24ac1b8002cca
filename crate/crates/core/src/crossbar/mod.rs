//! The 1T1R crossbar: topology, line drives and the per-cell device states.
//!
//! Cell `(row, col)` connects BL(col) to SL(row) through the memristor (TE on
//! the BL side) in series with the access transistor whose gate is WL(col).
//! Positive device voltage means the TE sits above the internal node, which
//! is the SET direction.

mod solver;
mod trace;
mod transient;
mod waveform;

pub use solver::{BranchSolution, NodeSolution, Solver};
pub use trace::{ExecutionTrace, Sample, SwitchEvent};
pub use transient::run_transient;
pub use waveform::{Waveform, WaveformError};

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceError, DeviceParams, DeviceState, Logic, TransistorParams, VariabilitySpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrossbarError {
    #[error("geometry must have at least one row and one column, got {rows}x{cols}")]
    EmptyGeometry { rows: usize, cols: usize },
    #[error("cell {0} is outside the array")]
    OutOfBounds(CellAddress),
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Source lines.
    pub rows: usize,
    /// Word/bit line pairs.
    pub cols: usize,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        ArrayGeometry { rows: 8, cols: 4 }
    }
}

impl ArrayGeometry {
    pub fn new(rows: usize, cols: usize) -> Result<Self, CrossbarError> {
        let g = ArrayGeometry { rows, cols };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), CrossbarError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(CrossbarError::EmptyGeometry {
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, cell: CellAddress) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    pub fn check(&self, cell: CellAddress) -> Result<(), CrossbarError> {
        if self.contains(cell) {
            Ok(())
        } else {
            Err(CrossbarError::OutOfBounds(cell))
        }
    }

    /// Row-major device index, also used as the sampler index.
    pub fn index(&self, cell: CellAddress) -> usize {
        cell.row * self.cols + cell.col
    }

    pub fn cell(&self, index: usize) -> CellAddress {
        CellAddress {
            row: index / self.cols,
            col: index % self.cols,
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = CellAddress> + '_ {
        (0..self.cell_count()).map(|i| self.cell(i))
    }

    pub fn line_count(&self) -> usize {
        2 * self.cols + self.rows
    }

    /// Lines in export order: WLs, SLs, BLs.
    pub fn lines(&self) -> Vec<Line> {
        (0..self.cols)
            .map(Line::Wl)
            .chain((0..self.rows).map(Line::Sl))
            .chain((0..self.cols).map(Line::Bl))
            .collect()
    }

    /// Position of `line` in [`ArrayGeometry::lines`].
    pub fn line_index(&self, line: Line) -> usize {
        match line {
            Line::Wl(c) => c,
            Line::Sl(r) => self.cols + r,
            Line::Bl(c) => self.cols + self.rows + c,
        }
    }
}

/// 0-based cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellAddress {
    pub row: usize,
    pub col: usize,
}

impl CellAddress {
    pub const fn new(row: usize, col: usize) -> Self {
        CellAddress { row, col }
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}c{}", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Line {
    Wl(usize),
    Sl(usize),
    Bl(usize),
}

impl fmt::Display for Line {
    /// 1-based names as printed on the array schematic.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Line::Wl(i) => write!(f, "WL{}", i + 1),
            Line::Sl(i) => write!(f, "SL{}", i + 1),
            Line::Bl(i) => write!(f, "BL{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum LineDrive {
    Driven(Waveform),
    Grounded,
    #[default]
    Floating,
}

impl LineDrive {
    pub fn dc(v: f64, duration: f64) -> Self {
        LineDrive::Driven(Waveform::dc(v, duration))
    }

    /// Fixed voltage at `t`, or `None` for a floating line.
    pub fn voltage_at(&self, t: f64) -> Result<Option<f64>, WaveformError> {
        match self {
            LineDrive::Driven(w) => w.eval(t).map(Some),
            LineDrive::Grounded => Ok(Some(0.0)),
            LineDrive::Floating => Ok(None),
        }
    }

    pub fn is_floating(&self) -> bool {
        matches!(self, LineDrive::Floating)
    }
}

/// Full crossbar: geometry, devices and line drives.
#[derive(Debug, Clone)]
pub struct CrossbarState {
    pub geometry: ArrayGeometry,
    pub transistor: TransistorParams,
    pub variability: VariabilitySpec,
    params: Vec<DeviceParams>,
    devices: Vec<DeviceState>,
    wl: Vec<LineDrive>,
    sl: Vec<LineDrive>,
    bl: Vec<LineDrive>,
    rng: ChaCha8Rng,
}

/// Stream reserved for cycle-to-cycle jitter so it never overlaps a device
/// sampling stream.
const JITTER_STREAM: u64 = u64::MAX;

impl CrossbarState {
    /// Samples every device (index = row * cols + col), puts it in HRS and
    /// leaves every line floating.
    pub fn build(
        geometry: ArrayGeometry,
        base: &DeviceParams,
        transistor: TransistorParams,
        spec: VariabilitySpec,
    ) -> Result<Self, CrossbarError> {
        geometry.validate()?;
        base.validate()?;
        transistor.validate()?;
        spec.validate()?;
        let params: Vec<DeviceParams> = (0..geometry.cell_count())
            .map(|i| spec.sample(base, i as u64))
            .collect();
        let devices = params.iter().map(DeviceState::hrs).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(JITTER_STREAM);
        Ok(CrossbarState {
            geometry,
            transistor,
            variability: spec,
            params,
            devices,
            wl: vec![LineDrive::Floating; geometry.cols],
            sl: vec![LineDrive::Floating; geometry.rows],
            bl: vec![LineDrive::Floating; geometry.cols],
            rng,
        })
    }

    /// Default geometry, nominal identical devices and no jitter.
    pub fn nominal(geometry: ArrayGeometry) -> Result<Self, CrossbarError> {
        let base = DeviceParams::default();
        Self::build(
            geometry,
            &base,
            TransistorParams::default(),
            VariabilitySpec::nominal(base.r_hrs),
        )
    }

    pub fn params(&self, cell: CellAddress) -> &DeviceParams {
        &self.params[self.geometry.index(cell)]
    }

    pub fn set_params(&mut self, cell: CellAddress, params: DeviceParams) {
        let i = self.geometry.index(cell);
        self.params[i] = params;
    }

    pub fn device(&self, cell: CellAddress) -> &DeviceState {
        &self.devices[self.geometry.index(cell)]
    }

    pub fn device_mut(&mut self, cell: CellAddress) -> &mut DeviceState {
        let i = self.geometry.index(cell);
        &mut self.devices[i]
    }

    pub fn devices(&self) -> &[DeviceState] {
        &self.devices
    }

    pub fn logic(&self, cell: CellAddress) -> Logic {
        self.device(cell).logic(self.params(cell))
    }

    /// Restarts cycle-to-cycle jitter on its own stream, so several arrays
    /// built from one spec draw independent jitter sequences.
    pub fn reseed_jitter(&mut self, stream: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.variability.seed ^ 0x6a09_e667_f3bc_c909);
        rng.set_stream(stream);
        self.rng = rng;
    }

    /// Overwrites a device's resistance with the nominal value for `logic`
    /// without running a protocol.
    pub fn force_logic(&mut self, cell: CellAddress, logic: Logic) {
        let r = self.params(cell).resistance_of(logic);
        self.device_mut(cell).resistance = r;
    }

    pub fn drive(&self, line: Line) -> &LineDrive {
        match line {
            Line::Wl(c) => &self.wl[c],
            Line::Sl(r) => &self.sl[r],
            Line::Bl(c) => &self.bl[c],
        }
    }

    pub fn set_drive(&mut self, line: Line, drive: LineDrive) {
        match line {
            Line::Wl(c) => self.wl[c] = drive,
            Line::Sl(r) => self.sl[r] = drive,
            Line::Bl(c) => self.bl[c] = drive,
        }
    }

    pub fn float_all(&mut self) {
        for d in self.wl.iter_mut().chain(self.sl.iter_mut()).chain(self.bl.iter_mut()) {
            *d = LineDrive::Floating;
        }
    }

    /// Longest duration among the driven waveforms.
    pub fn drive_duration(&self) -> f64 {
        self.wl
            .iter()
            .chain(&self.sl)
            .chain(&self.bl)
            .filter_map(|d| match d {
                LineDrive::Driven(w) => Some(w.duration()),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    /// Applies a committed transition: the device lands on the nominal
    /// resistance of `to`, scaled by cycle-to-cycle jitter.
    pub(crate) fn commit_switch(&mut self, cell: CellAddress, to: Logic) {
        let params = *self.params(cell);
        let jitter = self.variability.jitter(&mut self.rng);
        let mut r = params.resistance_of(to) * jitter;
        if to == Logic::Zero {
            r = crate::device::clip_hrs(r);
        }
        let dev = self.device_mut(cell);
        dev.resistance = r;
        dev.cycle_count += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_array_is_all_hrs() {
        let s = CrossbarState::nominal(ArrayGeometry::default()).unwrap();
        assert_eq!(s.devices().len(), 32);
        for cell in s.geometry.cells() {
            assert_eq!(s.device(cell).resistance, 200e3);
            assert_eq!(s.logic(cell), Logic::Zero);
        }
        for line in s.geometry.lines() {
            assert!(s.drive(line).is_floating());
        }
    }

    #[test]
    fn build_is_deterministic() {
        let g = ArrayGeometry::default();
        let spec = VariabilitySpec::default();
        let base = DeviceParams::default();
        let a = CrossbarState::build(g, &base, TransistorParams::default(), spec).unwrap();
        let b = CrossbarState::build(g, &base, TransistorParams::default(), spec).unwrap();
        assert_eq!(a.devices(), b.devices());
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn single_cell_and_empty_geometry() {
        let s = CrossbarState::nominal(ArrayGeometry::new(1, 1).unwrap()).unwrap();
        assert_eq!(s.devices().len(), 1);
        assert_eq!(
            ArrayGeometry::new(0, 4),
            Err(CrossbarError::EmptyGeometry { rows: 0, cols: 4 })
        );
    }

    #[test]
    fn line_names_and_order() {
        let g = ArrayGeometry::default();
        let names: Vec<String> = g.lines().iter().map(|l| l.to_string()).collect();
        assert_eq!(names[0], "WL1");
        assert_eq!(names[4], "SL1");
        assert_eq!(names[11], "SL8");
        assert_eq!(names[15], "BL4");
        for (i, l) in g.lines().into_iter().enumerate() {
            assert_eq!(g.line_index(l), i);
        }
    }
}
