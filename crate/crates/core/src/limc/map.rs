use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::expr::Expr;
use crate::crossbar::{ArrayGeometry, CellAddress};
use crate::device::Logic;
use crate::magic::{InitTarget, MicroOp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileOptions {
    pub geometry: ArrayGeometry,
    /// Widest OR the mapper may emit. Binary ORs of the lowered tree are
    /// merged up to this fan-in.
    pub max_or_fanin: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            geometry: ArrayGeometry::default(),
            max_or_fanin: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("no column has room for net `{net}` ({needed} free rows needed)")]
    Capacity { net: String, needed: usize },
    #[error("expression uses undeclared input `{0}`")]
    UndeclaredInput(String),
    #[error("expression is not in OR/NOT form")]
    NotLowered,
    #[error("max_or_fanin must be at least 2, got {0}")]
    FanIn(usize),
}

/// Executable program for one expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub inputs: Vec<String>,
    pub ops: Vec<MicroOp>,
    /// Cell each named net was placed in. Cells are reused once a net dies.
    pub nets: BTreeMap<String, CellAddress>,
    pub output_cell: CellAddress,
}

impl Schedule {
    pub fn exec_count(&self) -> usize {
        self.ops.iter().filter(|o| o.is_exec()).count()
    }

    pub fn count(&self, kind: &str) -> usize {
        self.ops.iter().filter(|o| o.kind() == kind).count()
    }

    /// Cells touched anywhere in the program.
    pub fn footprint(&self) -> BTreeSet<CellAddress> {
        self.ops.iter().flat_map(MicroOp::cells).collect()
    }
}

enum Node {
    Var(String),
    Not(Box<Node>),
    Or(Vec<Node>),
}

impl Node {
    fn build(e: &Expr, fanin: usize) -> Result<Node, MapError> {
        Ok(match e {
            Expr::Var(n) => Node::Var(n.clone()),
            Expr::Not(a) => Node::Not(Box::new(Node::build(a, fanin)?)),
            Expr::Or(a, b) => {
                let mut operands: Vec<&Expr> = vec![a, b];
                while operands.len() < fanin {
                    let Some(k) = operands.iter().position(|o| matches!(o, Expr::Or(..))) else {
                        break;
                    };
                    let Expr::Or(x, y) = operands[k] else { unreachable!() };
                    operands.splice(k..=k, [&**x, &**y]);
                }
                Node::Or(
                    operands
                        .into_iter()
                        .map(|o| Node::build(o, fanin))
                        .collect::<Result<_, _>>()?,
                )
            }
            _ => return Err(MapError::NotLowered),
        })
    }

    /// Cells needed to evaluate the subtree, Sethi-Ullman style.
    fn need(&self) -> usize {
        match self {
            Node::Var(_) => 1,
            Node::Not(x) => match **x {
                Node::Var(_) => 3,
                _ => x.need().max(3),
            },
            Node::Or(children) => {
                let mut needs: Vec<usize> = children.iter().map(Node::need).collect();
                needs.sort_unstable_by(|a, b| b.cmp(a));
                let gate = children.len() + 1;
                needs
                    .iter()
                    .enumerate()
                    .map(|(i, n)| n + i)
                    .max()
                    .unwrap_or(0)
                    .max(gate)
            }
        }
    }
}

struct Mapper {
    geometry: ArrayGeometry,
    /// Net occupying each cell, column-major.
    slots: Vec<Vec<Option<String>>>,
    ops: Vec<MicroOp>,
    nets: BTreeMap<String, CellAddress>,
    counter: usize,
}

impl Mapper {
    fn fresh(&mut self, stem: &str) -> String {
        self.counter += 1;
        format!("{stem}{}", self.counter)
    }

    fn free_in(&self, col: usize) -> usize {
        self.slots[col].iter().filter(|s| s.is_none()).count()
    }

    /// `pref` if it has `k` free rows, otherwise the roomiest column.
    fn pick_column(&self, pref: usize, k: usize, net: &str) -> Result<usize, MapError> {
        if self.free_in(pref) >= k {
            return Ok(pref);
        }
        (0..self.geometry.cols)
            .filter(|&c| self.free_in(c) >= k)
            .max_by_key(|&c| (self.free_in(c), std::cmp::Reverse(c)))
            .ok_or_else(|| MapError::Capacity {
                net: net.to_string(),
                needed: k,
            })
    }

    fn alloc(&mut self, col: usize, net: String) -> CellAddress {
        let row = self.slots[col]
            .iter()
            .position(Option::is_none)
            .expect("column capacity checked");
        let cell = CellAddress::new(row, col);
        self.slots[col][row] = Some(net.clone());
        self.nets.insert(net, cell);
        cell
    }

    fn release(&mut self, cell: CellAddress) {
        self.slots[cell.col][cell.row] = None;
    }

    fn init(&mut self, col: usize, stem: &str, target: InitTarget) -> CellAddress {
        let net = self.fresh(stem);
        let cell = self.alloc(col, net);
        self.ops.push(MicroOp::Init { cell, target });
        cell
    }

    fn input(&mut self, col: usize, name: &str) -> CellAddress {
        self.init(col, &format!("{name}#"), InitTarget::Input(name.to_string()))
    }

    /// Moves a net into `col` with a single-input OR.
    fn copy(&mut self, src: CellAddress, col: usize) -> CellAddress {
        let dst = self.init(col, "copy", InitTarget::Const(Logic::Zero));
        self.ops.push(MicroOp::ExecOr {
            inputs: vec![src],
            output: dst,
        });
        self.release(src);
        dst
    }

    fn gen(&mut self, node: &Node, pref: usize) -> Result<CellAddress, MapError> {
        match node {
            Node::Var(name) => {
                let col = self.pick_column(pref, 1, name)?;
                Ok(self.input(col, name))
            }
            Node::Not(x) => {
                let (col, x_in) = match &**x {
                    Node::Var(name) => {
                        let col = self.pick_column(pref, 3, name)?;
                        let x1 = self.init(col, "one", InitTarget::Const(Logic::One));
                        let x_in = self.input(col, name);
                        return Ok(self.not_gate(col, x1, x_in));
                    }
                    inner => {
                        let c = self.gen(inner, pref)?;
                        if self.free_in(c.col) >= 2 {
                            (c.col, c)
                        } else {
                            let label = format!("not({})", self.net_at(c));
                            let col = self.pick_column(pref, 3, &label)?;
                            let moved = self.copy(c, col);
                            (col, moved)
                        }
                    }
                };
                let x1 = self.init(col, "one", InitTarget::Const(Logic::One));
                Ok(self.not_gate(col, x1, x_in))
            }
            Node::Or(children) => {
                let mut inner: Vec<&Node> = children.iter().filter(|c| !matches!(c, Node::Var(_))).collect();
                inner.sort_by_key(|c| std::cmp::Reverse(c.need()));
                let leaves: Vec<&str> = children
                    .iter()
                    .filter_map(|c| match c {
                        Node::Var(n) => Some(n.as_str()),
                        _ => None,
                    })
                    .collect();
                let mut results = Vec::with_capacity(inner.len());
                let mut home = pref;
                for (i, child) in inner.iter().enumerate() {
                    let r = self.gen(child, home)?;
                    if i == 0 {
                        home = r.col;
                    }
                    results.push(r);
                }
                let col = self.or_column(&results, leaves.len(), home)?;
                let mut inputs = Vec::with_capacity(children.len());
                for r in results {
                    inputs.push(if r.col == col { r } else { self.copy(r, col) });
                }
                for name in leaves {
                    inputs.push(self.input(col, name));
                }
                let out = self.init(col, "n", InitTarget::Const(Logic::Zero));
                self.ops.push(MicroOp::ExecOr {
                    inputs: inputs.clone(),
                    output: out,
                });
                for c in inputs {
                    self.release(c);
                }
                Ok(out)
            }
        }
    }

    fn net_at(&self, cell: CellAddress) -> String {
        self.slots[cell.col][cell.row].clone().unwrap_or_default()
    }

    fn not_gate(&mut self, col: usize, x1: CellAddress, x_in: CellAddress) -> CellAddress {
        let y_out = self.init(col, "n", InitTarget::Const(Logic::Zero));
        self.ops.push(MicroOp::ExecNot { x1, x_in, y_out });
        self.release(x1);
        self.release(x_in);
        y_out
    }

    /// Column for an OR: the one already holding the most operands that can
    /// also take the leaves, the copies and the output.
    fn or_column(&self, results: &[CellAddress], leaves: usize, home: usize) -> Result<usize, MapError> {
        let fits = |c: usize| {
            let here = results.iter().filter(|r| r.col == c).count();
            let needed = leaves + 1 + results.len() - here;
            (self.free_in(c) >= needed).then_some(here)
        };
        (0..self.geometry.cols)
            .filter_map(|c| fits(c).map(|here| (here, c == home, std::cmp::Reverse(c), c)))
            .max()
            .map(|t| t.3)
            .ok_or_else(|| MapError::Capacity {
                net: format!("n{}", self.counter + 1),
                needed: leaves + 1 + results.len(),
            })
    }
}

/// Places a lowered (OR/NOT/Var) expression on the array and emits its
/// micro-ops, ending with a read of the output cell.
pub fn allocate_and_emit(e: &Expr, inputs: &[String], options: &CompileOptions) -> Result<Schedule, MapError> {
    if options.max_or_fanin < 2 {
        return Err(MapError::FanIn(options.max_or_fanin));
    }
    if let Some(v) = e.variables().into_iter().find(|v| !inputs.contains(v)) {
        return Err(MapError::UndeclaredInput(v));
    }
    let node = Node::build(e, options.max_or_fanin)?;
    let g = options.geometry;
    let mut m = Mapper {
        geometry: g,
        slots: vec![vec![None; g.rows]; g.cols],
        ops: Vec::new(),
        nets: BTreeMap::new(),
        counter: 0,
    };
    let out = m.gen(&node, 0)?;
    m.ops.push(MicroOp::Read { cell: out });
    Ok(Schedule {
        inputs: inputs.to_vec(),
        ops: m.ops,
        nets: m.nets,
        output_cell: out,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("op {op_index}: {reason}")]
pub struct ScheduleError {
    pub op_index: usize,
    pub reason: String,
}

#[derive(Clone, Copy, PartialEq)]
enum Written {
    Const(Logic),
    Value,
}

/// Static well-formedness: placement, defined operands, and the
/// initialization rule (exec outputs hold a fresh `Init(0)`, NOT's x1 a
/// fresh `Init(1)`).
pub fn check_schedule(s: &Schedule, geometry: &ArrayGeometry) -> Result<(), ScheduleError> {
    let mut cells: BTreeMap<CellAddress, Written> = BTreeMap::new();
    for (k, op) in s.ops.iter().enumerate() {
        let fail = |reason: String| Err(ScheduleError { op_index: k, reason });
        let touched = op.cells();
        if let Some(c) = touched.iter().find(|c| !geometry.contains(**c)) {
            return fail(format!("{c} is outside the array"));
        }
        if op.is_exec() {
            let col = touched[0].col;
            let rows: BTreeSet<usize> = touched.iter().map(|c| c.row).collect();
            if touched.iter().any(|c| c.col != col) || rows.len() != touched.len() {
                return fail("exec cells must share a column on distinct rows".into());
            }
        }
        match op {
            MicroOp::Init { cell, target } => {
                let w = match target {
                    InitTarget::Const(l) => Written::Const(*l),
                    InitTarget::Input(name) if s.inputs.contains(name) => Written::Value,
                    InitTarget::Input(name) => return fail(format!("input `{name}` is not declared")),
                };
                cells.insert(*cell, w);
            }
            MicroOp::ExecOr { inputs, output } => {
                if inputs.is_empty() {
                    return fail("exec_or needs at least one input".into());
                }
                if let Some(c) = inputs.iter().find(|c| !cells.contains_key(c)) {
                    return fail(format!("{c} is read before it is written"));
                }
                if cells.get(output) != Some(&Written::Const(Logic::Zero)) {
                    return fail(format!("output {output} lacks a preceding Init(0)"));
                }
                cells.insert(*output, Written::Value);
            }
            MicroOp::ExecNot { x1, x_in, y_out } => {
                if cells.get(x1) != Some(&Written::Const(Logic::One)) {
                    return fail(format!("x1 {x1} lacks a preceding Init(1)"));
                }
                if !cells.contains_key(x_in) {
                    return fail(format!("{x_in} is read before it is written"));
                }
                if cells.get(y_out) != Some(&Written::Const(Logic::Zero)) {
                    return fail(format!("output {y_out} lacks a preceding Init(0)"));
                }
                cells.insert(*y_out, Written::Value);
            }
            MicroOp::Read { cell } => {
                if !cells.contains_key(cell) {
                    return fail(format!("{cell} is read before it is written"));
                }
            }
        }
    }
    if !cells.contains_key(&s.output_cell) {
        return Err(ScheduleError {
            op_index: s.ops.len(),
            reason: format!("output cell {} is never written", s.output_cell),
        });
    }
    Ok(())
}
