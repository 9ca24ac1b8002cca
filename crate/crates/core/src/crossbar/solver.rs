//! Instantaneous nodal analysis of the crossbar.
//!
//! Unknowns are the floating BL/SL nodes. Each conducting 1T1R branch is a
//! conductance `1 / (r_device + r_on)` between its BL and SL; WL floating or
//! below `v_gate_on` opens it. A branch whose current would exceed the
//! gate-dependent compliance is replaced by a current source at the
//! compliance value and the system re-solved.

use super::{CellAddress, CrossbarError, CrossbarState};

/// Solution for one conducting branch. Current is positive from BL to SL
/// (TE to BE), the same direction as positive device voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSolution {
    pub cell: CellAddress,
    pub current: f64,
    pub device_voltage: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSolution {
    /// Indexed like [`super::ArrayGeometry::lines`]. `None` marks a WL that
    /// is floating or a BL/SL node with no conducting path to a fixed node.
    pub line_voltages: Vec<Option<f64>>,
    /// Current delivered by each line into the array.
    pub line_currents: Vec<f64>,
    pub branches: Vec<BranchSolution>,
    /// Largest |sum of currents| over the solved floating nodes.
    pub kcl_residual: f64,
}

impl NodeSolution {
    pub fn branch(&self, cell: CellAddress) -> Option<&BranchSolution> {
        self.branches.iter().find(|b| b.cell == cell)
    }

    pub fn max_branch_current(&self) -> f64 {
        self.branches.iter().map(|b| b.current.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    cell: CellAddress,
    bl: usize,
    sl: usize,
    r_device: f64,
    i_comp: f64,
}

/// Reusable workspace for repeated solves on one network snapshot.
#[derive(Debug, Default, Clone)]
pub struct Solver {
    /// Node layout: BL(c) = c, SL(r) = cols + r.
    fixed: Vec<Option<f64>>,
    wl: Vec<Option<f64>>,
    branches: Vec<Branch>,
    r_on: f64,
    cols: usize,
    rows: usize,
    // scratch
    unknown_of: Vec<Option<usize>>,
    reachable: Vec<bool>,
    matrix: Vec<f64>,
    rhs: Vec<f64>,
    voltages: Vec<Option<f64>>,
    clamp: Vec<f64>,
}

impl Solver {
    /// Captures the line voltages and conducting branches of `state` at `t`.
    pub fn load(&mut self, state: &CrossbarState, t: f64) -> Result<(), CrossbarError> {
        let g = state.geometry;
        self.cols = g.cols;
        self.rows = g.rows;
        self.r_on = state.transistor.r_on;
        self.fixed.clear();
        for c in 0..g.cols {
            self.fixed.push(state.drive(super::Line::Bl(c)).voltage_at(t)?);
        }
        for r in 0..g.rows {
            self.fixed.push(state.drive(super::Line::Sl(r)).voltage_at(t)?);
        }
        self.wl.clear();
        for c in 0..g.cols {
            self.wl.push(state.drive(super::Line::Wl(c)).voltage_at(t)?);
        }
        self.branches.clear();
        for c in 0..g.cols {
            let Some(vg) = self.wl[c] else { continue };
            if !state.transistor.conducts(vg) {
                continue;
            }
            let i_comp = state.transistor.compliance_at(vg);
            for r in 0..g.rows {
                let cell = CellAddress::new(r, c);
                self.branches.push(Branch {
                    cell,
                    bl: c,
                    sl: g.cols + r,
                    r_device: state.devices()[g.index(cell)].resistance,
                    i_comp,
                });
            }
        }
        Ok(())
    }

    pub fn conducting_cells(&self) -> impl Iterator<Item = CellAddress> + '_ {
        self.branches.iter().map(|b| b.cell)
    }

    /// Updates the resistance of a loaded branch, e.g. after a commit.
    pub fn set_resistance(&mut self, cell: CellAddress, r: f64) {
        if let Some(b) = self.branches.iter_mut().find(|b| b.cell == cell) {
            b.r_device = r;
        }
    }

    /// Current through `cell` if its device had resistance `r`, everything
    /// else unchanged. `None` if the cell does not conduct.
    pub fn hypothetical_current(&mut self, cell: CellAddress, r: f64) -> Option<f64> {
        let k = self.branches.iter().position(|b| b.cell == cell)?;
        let saved = self.branches[k].r_device;
        self.branches[k].r_device = r;
        let sol = self.solve();
        self.branches[k].r_device = saved;
        sol.branches.get(k).map(|b| b.current)
    }

    pub fn solve(&mut self) -> NodeSolution {
        let n_nodes = self.fixed.len();
        self.mark_reachable();

        // Unknown numbering.
        self.unknown_of.clear();
        self.unknown_of.resize(n_nodes, None);
        let mut n = 0;
        for node in 0..n_nodes {
            if self.fixed[node].is_none() && self.reachable[node] {
                self.unknown_of[node] = Some(n);
                n += 1;
            }
        }

        self.clamp.clear();
        self.clamp.resize(self.branches.len(), 0.0);
        let mut currents = vec![0.0; self.branches.len()];
        // Each pass clamps at least one more branch or terminates.
        for _ in 0..=self.branches.len() {
            self.solve_linear(n);
            let mut newly_clamped = false;
            for (k, b) in self.branches.iter().enumerate() {
                let i = if self.clamp[k] != 0.0 {
                    self.clamp[k]
                } else {
                    match (self.voltages[b.bl], self.voltages[b.sl]) {
                        (Some(vb), Some(vs)) => (vb - vs) / (b.r_device + self.r_on),
                        _ => 0.0,
                    }
                };
                if self.clamp[k] == 0.0 && i.abs() > b.i_comp {
                    self.clamp[k] = b.i_comp.copysign(i);
                    newly_clamped = true;
                }
                currents[k] = i;
            }
            if !newly_clamped {
                break;
            }
        }

        let mut line_currents = vec![0.0; self.cols * 2 + self.rows];
        let mut node_sum = vec![0.0; n_nodes];
        let mut branches = Vec::with_capacity(self.branches.len());
        for (k, b) in self.branches.iter().enumerate() {
            let i = currents[k];
            node_sum[b.bl] -= i;
            node_sum[b.sl] += i;
            branches.push(BranchSolution {
                cell: b.cell,
                current: i,
                device_voltage: i * b.r_device,
                clamped: self.clamp[k] != 0.0,
            });
        }
        let kcl_residual = node_sum
            .iter()
            .zip(&self.fixed)
            .filter(|(_, f)| f.is_none())
            .fold(0.0_f64, |m, (s, _)| m.max(s.abs()));
        // Export order: WLs, SLs, BLs. Fixed nodes inject what the array
        // draws; floating ones net zero.
        let mut line_voltages = Vec::with_capacity(line_currents.len());
        line_voltages.extend(self.wl.iter().copied());
        for r in 0..self.rows {
            let node = self.cols + r;
            line_voltages.push(self.voltages[node]);
            if self.fixed[node].is_some() {
                line_currents[self.cols + r] = -node_sum[node];
            }
        }
        for c in 0..self.cols {
            line_voltages.push(self.voltages[c]);
            if self.fixed[c].is_some() {
                line_currents[self.cols + self.rows + c] = -node_sum[c];
            }
        }
        NodeSolution {
            line_voltages,
            line_currents,
            branches,
            kcl_residual,
        }
    }

    /// Floating nodes connected through conducting branches to a fixed node.
    fn mark_reachable(&mut self) {
        let n_nodes = self.fixed.len();
        self.reachable.clear();
        self.reachable.extend(self.fixed.iter().map(|v| v.is_some()));
        loop {
            let mut changed = false;
            for b in &self.branches {
                if self.reachable[b.bl] != self.reachable[b.sl] {
                    self.reachable[b.bl] = true;
                    self.reachable[b.sl] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        debug_assert_eq!(self.reachable.len(), n_nodes);
    }

    fn solve_linear(&mut self, n: usize) {
        self.matrix.clear();
        self.matrix.resize(n * n, 0.0);
        self.rhs.clear();
        self.rhs.resize(n, 0.0);
        for (k, b) in self.branches.iter().enumerate() {
            let (ub, us) = (self.unknown_of[b.bl], self.unknown_of[b.sl]);
            if self.clamp[k] != 0.0 {
                // Current source from BL to SL.
                let i = self.clamp[k];
                if let Some(p) = ub {
                    self.rhs[p] -= i;
                }
                if let Some(q) = us {
                    self.rhs[q] += i;
                }
                continue;
            }
            let g = 1.0 / (b.r_device + self.r_on);
            match (ub, us) {
                (Some(p), Some(q)) => {
                    self.matrix[p * n + p] += g;
                    self.matrix[q * n + q] += g;
                    self.matrix[p * n + q] -= g;
                    self.matrix[q * n + p] -= g;
                }
                (Some(p), None) => {
                    self.matrix[p * n + p] += g;
                    if let Some(v) = self.fixed[b.sl] {
                        self.rhs[p] += g * v;
                    }
                }
                (None, Some(q)) => {
                    self.matrix[q * n + q] += g;
                    if let Some(v) = self.fixed[b.bl] {
                        self.rhs[q] += g * v;
                    }
                }
                (None, None) => {}
            }
        }
        let x = gaussian_solve(&mut self.matrix, &mut self.rhs, n);
        self.voltages.clear();
        for node in 0..self.fixed.len() {
            let v = match (self.fixed[node], self.unknown_of[node]) {
                (Some(v), _) => Some(v),
                (None, Some(u)) => x.map(|x| x[u]),
                (None, None) => None,
            };
            self.voltages.push(v);
        }
    }
}

/// Dense Gaussian elimination with partial pivoting, in place. Returns the
/// solution slice (stored in `b`), or `None` for a singular system.
fn gaussian_solve<'a>(a: &mut [f64], b: &'a mut [f64], n: usize) -> Option<&'a [f64]> {
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * b[k];
        }
        b[row] = s / a[row * n + row];
    }
    Some(b)
}

impl CrossbarState {
    pub fn solve_instant(&self, t: f64) -> Result<NodeSolution, CrossbarError> {
        let mut s = Solver::default();
        s.load(self, t)?;
        Ok(s.solve())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::{ArrayGeometry, Line, LineDrive};
    use crate::device::Logic;

    fn star(r_on: f64) -> CrossbarState {
        let mut s = CrossbarState::nominal(ArrayGeometry::default()).unwrap();
        s.transistor.r_on = r_on;
        s.force_logic(CellAddress::new(0, 0), Logic::One);
        s.force_logic(CellAddress::new(1, 0), Logic::One);
        s.set_drive(Line::Sl(0), LineDrive::dc(3.3, 1.0));
        s.set_drive(Line::Sl(1), LineDrive::dc(3.3, 1.0));
        s.set_drive(Line::Sl(2), LineDrive::Grounded);
        s.set_drive(Line::Wl(0), LineDrive::dc(3.3, 1.0));
        s
    }

    /// Hand nodal analysis of two 3.3 V sources through (r_lrs + r_on) and a
    /// ground return through (r_hrs + r_on) into one floating node.
    fn star_oracle(r_on: f64) -> f64 {
        let g_in = 1.0 / (20e3 + r_on);
        let g_out = 1.0 / (200e3 + r_on);
        3.3 * 2.0 * g_in / (2.0 * g_in + g_out)
    }

    #[test]
    fn star_network_matches_hand_analysis() {
        let bl = ArrayGeometry::default().line_index(Line::Bl(0));
        for r_on in [1e3, 1e-9] {
            let sol = star(r_on).solve_instant(0.0).unwrap();
            let v = sol.line_voltages[bl].unwrap();
            let want = star_oracle(r_on);
            assert!(((v - want) / want).abs() < 1e-9, "{v} vs {want}");
            assert!(sol.kcl_residual <= 1e-9 * sol.max_branch_current().max(1e-6));
        }
        assert!((star_oracle(1e3) - 3.136_170_212_765_957).abs() < 1e-12);
        assert!((star_oracle(0.0) - 3.142_857_142_857_143).abs() < 1e-12);
    }

    #[test]
    fn floating_rows_of_the_active_column_carry_no_current() {
        let sol = star(1e3).solve_instant(0.0).unwrap();
        let bl = sol.line_voltages[ArrayGeometry::default().line_index(Line::Bl(0))].unwrap();
        for r in 3..8 {
            let b = sol.branch(CellAddress::new(r, 0)).unwrap();
            assert!(b.current.abs() < 1e-18);
            let v = sol.line_voltages[ArrayGeometry::default().line_index(Line::Sl(r))].unwrap();
            assert!((v - bl).abs() < 1e-12);
        }
    }

    #[test]
    fn all_floating_means_no_current() {
        let s = CrossbarState::nominal(ArrayGeometry::default()).unwrap();
        let sol = s.solve_instant(0.0).unwrap();
        assert!(sol.branches.is_empty());
        assert!(sol.line_currents.iter().all(|&i| i == 0.0));
        assert!(sol.line_voltages.iter().all(|v| v.is_none()));
    }

    #[test]
    fn single_device_ohms_law() {
        let mut s = CrossbarState::nominal(ArrayGeometry::default()).unwrap();
        let cell = CellAddress::new(3, 2);
        s.force_logic(cell, Logic::One);
        s.set_drive(Line::Bl(2), LineDrive::dc(0.5, 1.0));
        s.set_drive(Line::Sl(3), LineDrive::Grounded);
        s.set_drive(Line::Wl(2), LineDrive::dc(3.3, 1.0));
        let sol = s.solve_instant(0.0).unwrap();
        let b = sol.branch(cell).unwrap();
        assert!((b.current - 0.5 / 21e3).abs() < 1e-15);
        assert!((b.device_voltage - 0.5 * 20.0 / 21.0).abs() < 1e-12);
        let g = s.geometry;
        assert!((sol.line_currents[g.line_index(Line::Bl(2))] - 0.5 / 21e3).abs() < 1e-15);
        assert!((sol.line_currents[g.line_index(Line::Sl(3))] + 0.5 / 21e3).abs() < 1e-15);
    }

    #[test]
    fn gate_below_threshold_or_floating_blocks_current() {
        let mut s = CrossbarState::nominal(ArrayGeometry::default()).unwrap();
        s.set_drive(Line::Bl(0), LineDrive::dc(1.0, 1.0));
        s.set_drive(Line::Sl(0), LineDrive::Grounded);
        s.set_drive(Line::Wl(0), LineDrive::dc(0.5, 1.0));
        assert!(s.solve_instant(0.0).unwrap().branches.is_empty());
        s.set_drive(Line::Wl(0), LineDrive::Floating);
        assert!(s.solve_instant(0.0).unwrap().branches.is_empty());
    }

    #[test]
    fn isolated_floating_node_is_indeterminate() {
        let mut s = CrossbarState::nominal(ArrayGeometry::new(2, 1).unwrap()).unwrap();
        s.set_drive(Line::Wl(0), LineDrive::dc(3.3, 1.0));
        let sol = s.solve_instant(0.0).unwrap();
        assert!(sol.line_voltages.iter().skip(1).all(|v| v.is_none()));
        assert!(sol.branches.iter().all(|b| b.current == 0.0));
    }

    #[test]
    fn compliance_clamps_branch_current() {
        let mut s = CrossbarState::nominal(ArrayGeometry::new(2, 1).unwrap()).unwrap();
        let cell = CellAddress::new(0, 0);
        s.force_logic(cell, Logic::One);
        // 20 V across 21 kOhm would be ~952 uA; gate at 1.6 V allows 500 uA.
        s.set_drive(Line::Bl(0), LineDrive::dc(20.0, 1.0));
        s.set_drive(Line::Sl(0), LineDrive::Grounded);
        s.set_drive(Line::Wl(0), LineDrive::dc(1.6, 1.0));
        let sol = s.solve_instant(0.0).unwrap();
        let b = sol.branch(cell).unwrap();
        assert!(b.clamped);
        assert!((b.current - 500e-6).abs() < 1e-15);
        assert!((b.device_voltage - 500e-6 * 20e3).abs() < 1e-9);
    }

    #[test]
    fn compliance_clamp_in_a_floating_network_keeps_kcl() {
        let mut s = CrossbarState::nominal(ArrayGeometry::new(3, 1).unwrap()).unwrap();
        s.force_logic(CellAddress::new(0, 0), Logic::One);
        s.force_logic(CellAddress::new(1, 0), Logic::One);
        s.set_drive(Line::Sl(0), LineDrive::dc(40.0, 1.0));
        s.set_drive(Line::Sl(1), LineDrive::Grounded);
        s.set_drive(Line::Sl(2), LineDrive::Grounded);
        s.set_drive(Line::Wl(0), LineDrive::dc(1.6, 1.0));
        let sol = s.solve_instant(0.0).unwrap();
        let b0 = sol.branch(CellAddress::new(0, 0)).unwrap();
        assert!(b0.clamped);
        assert!((b0.current + 500e-6).abs() < 1e-15);
        assert!(sol.kcl_residual <= 1e-9 * sol.max_branch_current());
    }
}
