//! Crossbar circuit construction.
//!
//! Every cell `(i, j)` owns a row node `r(i,j)` on wordline `i` and a column
//! node `c(i,j)` on bitline `j`, joined by a memristor branch. Each wordline is
//! a chain of `n` line segments starting at its terminal `rt(i)` (stub into
//! `r(i,0)`), each bitline a chain of `n` segments ending at its terminal
//! `ct(j)` (stub out of `c(n-1,j)`). The selected row terminal is the driver,
//! tied to an ideal source at `v_dd`; the selected column terminal is the sense
//! node, returned to ground through the load resistor. Unselected terminals
//! float or are grounded through `r_ground` depending on the strategy.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceError, DeviceParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("pattern must be {expected}x{expected}, got {rows} rows with lengths {cols:?}")]
    DimensionMismatch { expected: usize, rows: usize, cols: Vec<usize> },
    #[error("array size {0} outside supported range 1..=128")]
    UnsupportedSize(usize),
    #[error("target ({row}, {col}) lies outside the {n}x{n} array")]
    TargetOutOfRange { row: usize, col: usize, n: usize },
    #[error("invalid crossbar spec: {0}")]
    Invalid(String),
    #[error("pattern is not uniform and cannot be resized or keyed")]
    NonUniformPattern,
    #[error("unknown {what} `{value}`")]
    Parse { what: &'static str, value: String },
    #[error(transparent)]
    Device(#[from] DeviceError),
}

pub const MAX_ARRAY_SIZE: usize = 128;
/// Near-ideal grounding used for strategy and sense resistors.
pub const DEFAULT_R_GROUND: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metal {
    M3,
    M5,
    M6,
}

impl Metal {
    pub const ALL: [Metal; 3] = [Metal::M3, Metal::M5, Metal::M6];

    pub fn interconnect(self) -> InterconnectSpec {
        InterconnectSpec::for_metal(self)
    }
}

impl fmt::Display for Metal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metal::M3 => "M3",
            Metal::M5 => "M5",
            Metal::M6 => "M6",
        })
    }
}

impl FromStr for Metal {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "M3" => Ok(Metal::M3),
            "M5" => Ok(Metal::M5),
            "M6" => Ok(Metal::M6),
            _ => Err(TopologyError::Parse { what: "metal", value: s.to_string() }),
        }
    }
}

/// Per-unit-cell interconnect parasitics of one metal layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterconnectSpec {
    pub metal: Metal,
    /// Resistance of one unit-cell line segment, ohms.
    pub r_line: f64,
    /// Capacitance per segment, farads. Carried for reference only.
    pub c_line: f64,
    pub width_nm: f64,
    pub pitch_nm: f64,
    pub thickness_nm: f64,
}

impl InterconnectSpec {
    pub fn for_metal(metal: Metal) -> Self {
        let (width_nm, pitch_nm, thickness_nm, r_line, c_line_ff) = match metal {
            Metal::M3 => (16.0, 28.0, 49.0, 3.122, 3.871e-3),
            Metal::M5 => (16.0, 28.0, 28.0, 5.869, 2.871e-3),
            Metal::M6 => (40.0, 80.0, 80.0, 0.7396, 1.020e-2),
        };
        Self { metal, r_line, c_line: c_line_ff * 1e-15, width_nm, pitch_nm, thickness_nm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    /// Low-resistance state, logic one, amplitude `k_on`.
    Lrs,
    /// High-resistance state, logic zero, amplitude `k_off`.
    Hrs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    AllOnes,
    AllZeros,
    Custom,
}

impl PatternKind {
    pub fn label(self) -> &'static str {
        match self {
            PatternKind::AllOnes => "all-ones",
            PatternKind::AllZeros => "all-zeros",
            PatternKind::Custom => "custom",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PatternKind {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "all-ones" | "allones" | "ones" | "all-1s" => Ok(PatternKind::AllOnes),
            "all-zeros" | "allzeros" | "zeros" | "all-0s" => Ok(PatternKind::AllZeros),
            "custom" => Ok(PatternKind::Custom),
            _ => Err(TopologyError::Parse { what: "pattern", value: s.to_string() }),
        }
    }
}

/// Stored data of an `n x n` array, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStateMatrix {
    n: usize,
    states: Vec<CellState>,
}

impl CellStateMatrix {
    pub fn uniform(n: usize, state: CellState) -> Self {
        Self { n, states: vec![state; n * n] }
    }

    pub fn from_rows(rows: Vec<Vec<CellState>>) -> Result<Self, TopologyError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(TopologyError::DimensionMismatch {
                expected: n,
                rows: n,
                cols: rows.iter().map(Vec::len).collect(),
            });
        }
        Ok(Self { n, states: rows.into_iter().flatten().collect() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> CellState {
        self.states[row * self.n + col]
    }

    pub fn set(&mut self, row: usize, col: usize, state: CellState) {
        self.states[row * self.n + col] = state;
    }

    /// `AllOnes`/`AllZeros` when every cell agrees, `Custom` otherwise.
    pub fn kind(&self) -> PatternKind {
        match self.states.first() {
            Some(&first) if self.states.iter().all(|&s| s == first) => match first {
                CellState::Lrs => PatternKind::AllOnes,
                CellState::Hrs => PatternKind::AllZeros,
            },
            _ => PatternKind::Custom,
        }
    }

    /// Same uniform pattern at another size.
    pub fn resized(&self, n: usize) -> Result<Self, TopologyError> {
        match self.kind() {
            PatternKind::AllOnes => Ok(Self::uniform(n, CellState::Lrs)),
            PatternKind::AllZeros => Ok(Self::uniform(n, CellState::Hrs)),
            PatternKind::Custom => Err(TopologyError::NonUniformPattern),
        }
    }

    pub fn transposed(&self) -> Self {
        let n = self.n;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out.states[j * n + i] = self.states[i * n + j];
            }
        }
        out
    }
}

pub fn make_pattern(
    kind: PatternKind,
    n: usize,
    custom: Option<Vec<Vec<CellState>>>,
) -> Result<CellStateMatrix, TopologyError> {
    if n == 0 {
        return Err(TopologyError::UnsupportedSize(n));
    }
    match kind {
        PatternKind::AllOnes => Ok(CellStateMatrix::uniform(n, CellState::Lrs)),
        PatternKind::AllZeros => Ok(CellStateMatrix::uniform(n, CellState::Hrs)),
        PatternKind::Custom => {
            let rows = custom.ok_or_else(|| TopologyError::Invalid("custom pattern requires a grid".into()))?;
            let grid = CellStateMatrix::from_rows(rows.clone()).map_err(|_| TopologyError::DimensionMismatch {
                expected: n,
                rows: rows.len(),
                cols: rows.iter().map(Vec::len).collect(),
            })?;
            if grid.n != n {
                return Err(TopologyError::DimensionMismatch {
                    expected: n,
                    rows: rows.len(),
                    cols: rows.iter().map(Vec::len).collect(),
                });
            }
            Ok(grid)
        }
    }
}

/// Termination of unselected wordlines and bitlines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Floating rows and columns.
    #[serde(rename = "FRC")]
    Frc,
    /// Grounded rows, floating columns.
    #[serde(rename = "GRFC")]
    Grfc,
    /// Floating rows, grounded columns.
    #[serde(rename = "FRGC")]
    Frgc,
    /// Grounded rows and columns.
    #[serde(rename = "GRC")]
    Grc,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Frc, Strategy::Grfc, Strategy::Frgc, Strategy::Grc];

    pub fn grounds_rows(self) -> bool {
        matches!(self, Strategy::Grfc | Strategy::Grc)
    }

    pub fn grounds_columns(self) -> bool {
        matches!(self, Strategy::Frgc | Strategy::Grc)
    }

    /// The strategy obtained by exchanging the roles of rows and columns.
    pub fn transposed(self) -> Self {
        match self {
            Strategy::Grfc => Strategy::Frgc,
            Strategy::Frgc => Strategy::Grfc,
            s => s,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Frc => "FRC",
            Strategy::Grfc => "GRFC",
            Strategy::Frgc => "FRGC",
            Strategy::Grc => "GRC",
        })
    }
}

impl FromStr for Strategy {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FRC" => Ok(Strategy::Frc),
            "GRFC" => Ok(Strategy::Grfc),
            "FRGC" => Ok(Strategy::Frgc),
            "GRC" => Ok(Strategy::Grc),
            _ => Err(TopologyError::Parse { what: "strategy", value: s.to_string() }),
        }
    }
}

/// Which currents are combined into the reported sneak current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementMode {
    /// Mean current through the half-selected cells of the driven row.
    #[default]
    HalfSelectedMean,
    /// Source current minus target-cell current.
    SupplyMinusTarget,
    /// Load (sense) current minus target-cell current.
    SenseMinusTarget,
}

impl FromStr for MeasurementMode {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "half-selected-mean" | "half-selected" => Ok(MeasurementMode::HalfSelectedMean),
            "supply-minus-target" | "supply" => Ok(MeasurementMode::SupplyMinusTarget),
            "sense-minus-target" | "sense" => Ok(MeasurementMode::SenseMinusTarget),
            _ => Err(TopologyError::Parse { what: "measurement mode", value: s.to_string() }),
        }
    }
}

/// State forced onto the target cell when building a netlist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetState {
    Lrs,
    Hrs,
    FromPattern,
}

/// Full description of one read configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarSpec {
    pub pattern: CellStateMatrix,
    pub device: DeviceParams,
    pub interconnect: InterconnectSpec,
    pub strategy: Strategy,
    pub v_dd: f64,
    pub r_ground: f64,
    pub r_load: f64,
    /// Zero-based `(row, col)` of the cell being read.
    pub target: (usize, usize),
    pub measurement_mode: MeasurementMode,
}

/// Zero-based index of the center cell, `ceil(n/2)` counted from one.
pub fn center_index(n: usize) -> usize {
    n.div_ceil(2).saturating_sub(1)
}

impl CrossbarSpec {
    /// Spec with near-ideal grounding, target at the center cell and the
    /// default measurement mode.
    pub fn new(pattern: CellStateMatrix, device: DeviceParams, metal: Metal, strategy: Strategy, v_dd: f64) -> Self {
        let c = center_index(pattern.n());
        Self {
            pattern,
            device,
            interconnect: metal.interconnect(),
            strategy,
            v_dd,
            r_ground: DEFAULT_R_GROUND,
            r_load: DEFAULT_R_GROUND,
            target: (c, c),
            measurement_mode: MeasurementMode::default(),
        }
    }

    /// Uniform-pattern convenience constructor with default `k_off` and `alpha`.
    pub fn uniform(
        n: usize,
        kind: PatternKind,
        metal: Metal,
        strategy: Strategy,
        k_on: f64,
        v_dd: f64,
    ) -> Result<Self, TopologyError> {
        let pattern = make_pattern(kind, n, None)?;
        let device = DeviceParams::with_k_on(k_on)?;
        Ok(Self::new(pattern, device, metal, strategy, v_dd))
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    /// Resizes a uniform pattern and re-centers the target.
    pub fn with_size(&self, n: usize) -> Result<Self, TopologyError> {
        let mut out = self.clone();
        out.pattern = self.pattern.resized(n)?;
        let c = center_index(n);
        out.target = (c, c);
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let n = self.n();
        if n == 0 || n > MAX_ARRAY_SIZE {
            return Err(TopologyError::UnsupportedSize(n));
        }
        self.device.validate()?;
        let (row, col) = self.target;
        if row >= n || col >= n {
            return Err(TopologyError::TargetOutOfRange { row, col, n });
        }
        if !(self.r_ground > 0.0) || !self.r_ground.is_finite() {
            return Err(TopologyError::Invalid(format!("r_ground must be positive, got {}", self.r_ground)));
        }
        if !(self.r_load >= 0.0) || !self.r_load.is_finite() {
            return Err(TopologyError::Invalid(format!("r_load must be non-negative, got {}", self.r_load)));
        }
        if !(self.interconnect.r_line > 0.0) || !self.interconnect.r_line.is_finite() {
            return Err(TopologyError::Invalid(format!("r_line must be positive, got {}", self.interconnect.r_line)));
        }
        if !self.v_dd.is_finite() {
            return Err(TopologyError::Invalid("v_dd must be finite".into()));
        }
        if !(1.0..=3.0).contains(&self.v_dd) {
            log::warn!("v_dd = {} V lies outside the characterized 1-3 V range", self.v_dd);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchId(pub usize);

pub const GROUND: NodeId = NodeId(0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchKind {
    Memristor {
        k: f64,
        alpha: f64,
    },
    LineResistor(f64),
    StrategyResistor(f64),
    LoadResistor(f64),
    /// Ideal source; `from` is the positive terminal.
    VoltageSource(f64),
}

impl BranchKind {
    /// Resistance of linear resistor kinds.
    pub fn resistance(&self) -> Option<f64> {
        match *self {
            BranchKind::LineResistor(r) | BranchKind::StrategyResistor(r) | BranchKind::LoadResistor(r) => Some(r),
            _ => None,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            BranchKind::Memristor { .. } => "memristor",
            BranchKind::LineResistor(_) => "line",
            BranchKind::StrategyResistor(_) => "strategy",
            BranchKind::LoadResistor(_) => "load",
            BranchKind::VoltageSource(_) => "vsource",
        }
    }
}

/// A two-terminal element. Positive current flows `from -> to` through it,
/// except for sources where it flows out of `from` into the circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub kind: BranchKind,
    pub from: NodeId,
    pub to: NodeId,
}

/// Named branches and nodes of interest in a crossbar netlist.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Probes {
    pub source: Option<BranchId>,
    pub load: Option<BranchId>,
    pub target: Option<BranchId>,
    pub driver: Option<NodeId>,
    pub sense: Option<NodeId>,
    /// Cells sharing the driven row with the target, in column order.
    pub half_selected_row: Vec<BranchId>,
}

/// Node/branch graph. Node 0 is ground.
#[derive(Debug, Clone, PartialEq)]
pub struct Netlist {
    names: Vec<String>,
    branches: Vec<Branch>,
    pub probes: Probes,
}

impl Default for Netlist {
    fn default() -> Self {
        Self::new()
    }
}

impl Netlist {
    pub fn new() -> Self {
        Self { names: vec!["0".to_string()], branches: Vec::new(), probes: Probes::default() }
    }

    pub fn add_node(&mut self, name: impl Into<String>) -> NodeId {
        self.names.push(name.into());
        NodeId(self.names.len() - 1)
    }

    pub fn add_branch(&mut self, kind: BranchKind, from: NodeId, to: NodeId) -> BranchId {
        assert!(from.0 < self.names.len() && to.0 < self.names.len(), "branch endpoint out of range");
        self.branches.push(Branch { kind, from, to });
        BranchId(self.branches.len() - 1)
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.names[id.0]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name).map(NodeId)
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branches.get(id.0)
    }

    pub fn count(&self, pred: impl Fn(&BranchKind) -> bool) -> usize {
        self.branches.iter().filter(|b| pred(&b.kind)).count()
    }

    /// Nodes unreachable from ground through any branch.
    pub fn floating_nodes(&self) -> Vec<NodeId> {
        let mut adj = vec![Vec::new(); self.names.len()];
        for b in &self.branches {
            adj[b.from.0].push(b.to.0);
            adj[b.to.0].push(b.from.0);
        }
        let mut seen = vec![false; self.names.len()];
        let mut queue = VecDeque::from([GROUND.0]);
        seen[GROUND.0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        (0..self.names.len()).filter(|&i| !seen[i]).map(NodeId).collect()
    }

    /// Plain-text branch list: `kind from to value...`, one branch per line.
    pub fn write_branch_list<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# nodes {} branches {}", self.names.len(), self.branches.len())?;
        for b in &self.branches {
            let (from, to) = (self.node_name(b.from), self.node_name(b.to));
            match b.kind {
                BranchKind::Memristor { k, alpha } => {
                    writeln!(w, "{} {} {} {:.9e} {:.9e}", b.kind.tag(), from, to, k, alpha)?
                }
                BranchKind::LineResistor(v)
                | BranchKind::StrategyResistor(v)
                | BranchKind::LoadResistor(v)
                | BranchKind::VoltageSource(v) => writeln!(w, "{} {} {} {:.9e}", b.kind.tag(), from, to, v)?,
            }
        }
        Ok(())
    }

    pub fn branch_list(&self) -> String {
        let mut buf = Vec::new();
        self.write_branch_list(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("branch list is ASCII")
    }
}

/// Node ids of the cell grid, used by the builder and by tests.
#[derive(Debug, Clone)]
pub struct CrossbarNodes {
    pub n: usize,
    pub row: Vec<NodeId>,
    pub col: Vec<NodeId>,
    pub row_terminal: Vec<NodeId>,
    pub col_terminal: Vec<NodeId>,
}

impl CrossbarNodes {
    pub fn r(&self, i: usize, j: usize) -> NodeId {
        self.row[i * self.n + j]
    }

    pub fn c(&self, i: usize, j: usize) -> NodeId {
        self.col[i * self.n + j]
    }
}

pub fn build_crossbar(spec: &CrossbarSpec, target_state: TargetState) -> Result<Netlist, TopologyError> {
    build_crossbar_with_nodes(spec, target_state).map(|(net, _)| net)
}

pub fn build_crossbar_with_nodes(
    spec: &CrossbarSpec,
    target_state: TargetState,
) -> Result<(Netlist, CrossbarNodes), TopologyError> {
    spec.validate()?;
    let n = spec.n();
    let (t_row, t_col) = spec.target;
    let mut net = Netlist::new();

    // Row-major with row/column nodes interleaved keeps the natural ordering banded.
    let mut row = Vec::with_capacity(n * n);
    let mut col = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            row.push(net.add_node(format!("r{}_{}", i + 1, j + 1)));
            col.push(net.add_node(format!("c{}_{}", i + 1, j + 1)));
        }
    }
    let row_terminal: Vec<_> = (0..n).map(|i| net.add_node(format!("rt{}", i + 1))).collect();
    let col_terminal: Vec<_> = (0..n).map(|j| net.add_node(format!("ct{}", j + 1))).collect();
    let nodes = CrossbarNodes { n, row, col, row_terminal, col_terminal };

    let r_line = spec.interconnect.r_line;
    let alpha = spec.device.alpha;
    let mut half_selected_row = Vec::new();
    let mut target = None;
    for i in 0..n {
        for j in 0..n {
            let state = if (i, j) == (t_row, t_col) {
                match target_state {
                    TargetState::Lrs => CellState::Lrs,
                    TargetState::Hrs => CellState::Hrs,
                    TargetState::FromPattern => spec.pattern.get(i, j),
                }
            } else {
                spec.pattern.get(i, j)
            };
            let k = match state {
                CellState::Lrs => spec.device.k_on,
                CellState::Hrs => spec.device.k_off,
            };
            let id = net.add_branch(BranchKind::Memristor { k, alpha }, nodes.r(i, j), nodes.c(i, j));
            if i == t_row {
                if j == t_col {
                    target = Some(id);
                } else {
                    half_selected_row.push(id);
                }
            }
        }
    }

    for i in 0..n {
        net.add_branch(BranchKind::LineResistor(r_line), nodes.row_terminal[i], nodes.r(i, 0));
        for j in 1..n {
            net.add_branch(BranchKind::LineResistor(r_line), nodes.r(i, j - 1), nodes.r(i, j));
        }
    }
    for j in 0..n {
        for i in 1..n {
            net.add_branch(BranchKind::LineResistor(r_line), nodes.c(i - 1, j), nodes.c(i, j));
        }
        net.add_branch(BranchKind::LineResistor(r_line), nodes.c(n - 1, j), nodes.col_terminal[j]);
    }

    let driver = nodes.row_terminal[t_row];
    let sense = nodes.col_terminal[t_col];
    let source = net.add_branch(BranchKind::VoltageSource(spec.v_dd), driver, GROUND);
    let load = net.add_branch(BranchKind::LoadResistor(spec.r_load), sense, GROUND);

    if spec.strategy.grounds_rows() {
        for i in (0..n).filter(|&i| i != t_row) {
            net.add_branch(BranchKind::StrategyResistor(spec.r_ground), nodes.row_terminal[i], GROUND);
        }
    }
    if spec.strategy.grounds_columns() {
        for j in (0..n).filter(|&j| j != t_col) {
            net.add_branch(BranchKind::StrategyResistor(spec.r_ground), nodes.col_terminal[j], GROUND);
        }
    }

    net.probes = Probes {
        source: Some(source),
        load: Some(load),
        target,
        driver: Some(driver),
        sense: Some(sense),
        half_selected_row,
    };
    Ok((net, nodes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, kind: PatternKind, strategy: Strategy) -> CrossbarSpec {
        CrossbarSpec::uniform(n, kind, Metal::M3, strategy, 3e-8, 1.5).unwrap()
    }

    fn is_memristor(k: &BranchKind) -> bool {
        matches!(k, BranchKind::Memristor { .. })
    }
    fn is_line(k: &BranchKind) -> bool {
        matches!(k, BranchKind::LineResistor(_))
    }
    fn is_strategy(k: &BranchKind) -> bool {
        matches!(k, BranchKind::StrategyResistor(_))
    }

    #[test]
    fn interconnect_table() {
        let m3 = InterconnectSpec::for_metal(Metal::M3);
        assert_eq!((m3.width_nm, m3.pitch_nm, m3.thickness_nm, m3.r_line), (16.0, 28.0, 49.0, 3.122));
        assert!((m3.c_line - 3.871e-18).abs() < 1e-30);
        let m5 = InterconnectSpec::for_metal(Metal::M5);
        assert_eq!((m5.width_nm, m5.pitch_nm, m5.thickness_nm, m5.r_line), (16.0, 28.0, 28.0, 5.869));
        assert!((m5.c_line - 2.871e-18).abs() < 1e-30);
        let m6 = InterconnectSpec::for_metal(Metal::M6);
        assert_eq!((m6.width_nm, m6.pitch_nm, m6.thickness_nm, m6.r_line), (40.0, 80.0, 80.0, 0.7396));
        assert!((m6.c_line - 1.020e-17).abs() < 1e-30);
    }

    #[test]
    fn patterns() {
        let z = make_pattern(PatternKind::AllZeros, 4, None).unwrap();
        assert_eq!(z.n(), 4);
        assert!((0..4).all(|i| (0..4).all(|j| z.get(i, j) == CellState::Hrs)));
        let o = make_pattern(PatternKind::AllOnes, 8, None).unwrap();
        assert!((0..8).all(|i| (0..8).all(|j| o.get(i, j) == CellState::Lrs)));
        assert_eq!(o.kind(), PatternKind::AllOnes);

        let grid = vec![vec![CellState::Lrs, CellState::Hrs], vec![CellState::Hrs, CellState::Lrs]];
        let c = make_pattern(PatternKind::Custom, 2, Some(grid)).unwrap();
        assert_eq!(c.get(0, 0), CellState::Lrs);
        assert_eq!(c.get(0, 1), CellState::Hrs);
        assert_eq!(c.get(1, 0), CellState::Hrs);
        assert_eq!(c.get(1, 1), CellState::Lrs);
        assert_eq!(c.kind(), PatternKind::Custom);
        assert!(c.resized(4).is_err());
    }

    #[test]
    fn custom_pattern_dimension_mismatch() {
        let ragged = vec![vec![CellState::Lrs, CellState::Hrs], vec![CellState::Hrs]];
        assert!(matches!(
            make_pattern(PatternKind::Custom, 2, Some(ragged)),
            Err(TopologyError::DimensionMismatch { .. })
        ));
        let square = vec![vec![CellState::Lrs; 3]; 3];
        assert!(make_pattern(PatternKind::Custom, 2, Some(square)).is_err());
        assert!(make_pattern(PatternKind::Custom, 2, None).is_err());
    }

    #[test]
    fn smallest_instance() {
        let net = build_crossbar(&spec(1, PatternKind::AllOnes, Strategy::Frc), TargetState::FromPattern).unwrap();
        assert_eq!(net.count(is_memristor), 1);
        assert_eq!(net.count(is_line), 2);
        assert_eq!(net.count(|k| matches!(k, BranchKind::VoltageSource(_))), 1);
        assert_eq!(net.count(|k| matches!(k, BranchKind::LoadResistor(_))), 1);
        assert_eq!(net.count(is_strategy), 0);
        assert!(net.probes.half_selected_row.is_empty());
    }

    #[test]
    fn grc_three_by_three() {
        let net = build_crossbar(&spec(3, PatternKind::AllZeros, Strategy::Grc), TargetState::FromPattern).unwrap();
        assert_eq!(net.count(is_memristor), 9);
        assert_eq!(net.count(is_line), 18);
        let strategy: Vec<_> = net.branches().iter().filter(|b| is_strategy(&b.kind)).collect();
        assert_eq!(strategy.len(), 4);
        let rows = strategy.iter().filter(|b| net.node_name(b.from).starts_with("rt")).count();
        let cols = strategy.iter().filter(|b| net.node_name(b.from).starts_with("ct")).count();
        assert_eq!((rows, cols), (2, 2));
        // Target at the center cell, driven row 2 and sensed column 2.
        assert_eq!(net.node_name(net.probes.driver.unwrap()), "rt2");
        assert_eq!(net.node_name(net.probes.sense.unwrap()), "ct2");
    }

    #[test]
    fn grfc_grounds_only_rows() {
        let net = build_crossbar(&spec(8, PatternKind::AllOnes, Strategy::Grfc), TargetState::FromPattern).unwrap();
        assert_eq!(net.count(is_strategy), 7);
        assert!(net
            .branches()
            .iter()
            .filter(|b| is_strategy(&b.kind))
            .all(|b| net.node_name(b.from).starts_with("rt")));
    }

    #[test]
    fn counting_rules_hold_for_all_sizes() {
        for n in 1..=64 {
            for strategy in Strategy::ALL {
                let net = build_crossbar(&spec(n, PatternKind::AllOnes, strategy), TargetState::FromPattern).unwrap();
                assert_eq!(net.node_count(), 2 * n * n + 2 * n + 1);
                assert_eq!(net.count(is_memristor), n * n);
                assert_eq!(net.count(is_line), 2 * n * n);
                let grounded = usize::from(strategy.grounds_rows()) + usize::from(strategy.grounds_columns());
                assert_eq!(net.count(is_strategy), grounded * (n - 1));
                assert!(net.floating_nodes().is_empty(), "n={n} {strategy}");
                assert_eq!(net.probes.half_selected_row.len(), n - 1);
            }
        }
    }

    #[test]
    fn target_override() {
        let s = spec(4, PatternKind::AllZeros, Strategy::Frc);
        let net = build_crossbar(&s, TargetState::Lrs).unwrap();
        let t = net.branch(net.probes.target.unwrap()).unwrap();
        assert_eq!(t.kind, BranchKind::Memristor { k: 3e-8, alpha: 3.0 });
        let ones = net.count(|k| matches!(k, BranchKind::Memristor { k, .. } if *k == 3e-8));
        assert_eq!(ones, 1);
    }

    #[test]
    fn target_outside_grid_is_rejected() {
        let mut s = spec(4, PatternKind::AllZeros, Strategy::Frc);
        s.target = (4, 1);
        assert!(matches!(build_crossbar(&s, TargetState::FromPattern), Err(TopologyError::TargetOutOfRange { .. })));
    }

    #[test]
    fn center_target() {
        assert_eq!(center_index(1), 0);
        assert_eq!(center_index(3), 1);
        assert_eq!(center_index(8), 3);
        assert_eq!(center_index(9), 4);
    }

    #[test]
    fn branch_list_format() {
        let net = build_crossbar(&spec(1, PatternKind::AllOnes, Strategy::Frc), TargetState::FromPattern).unwrap();
        let text = net.branch_list();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "# nodes 5 branches 5");
        assert_eq!(lines[1], "memristor r1_1 c1_1 3.000000000e-8 3.000000000e0");
        assert_eq!(lines[2], "line rt1 r1_1 3.122000000e0");
        assert_eq!(lines[3], "line c1_1 ct1 3.122000000e0");
        assert_eq!(lines[4], "vsource rt1 0 1.500000000e0");
        assert_eq!(lines[5], "load ct1 0 1.000000000e-3");
    }

    /// Edge multiset of `net` after relabeling nodes through `map`. Source and
    /// load branches are both terminal-to-ground elements and compare equal.
    fn relabeled_edges(net: &Netlist, map: impl Fn(NodeId) -> String) -> Vec<String> {
        let mut edges: Vec<String> = net
            .branches()
            .iter()
            .map(|b| {
                let kind = match b.kind {
                    BranchKind::VoltageSource(_) | BranchKind::LoadResistor(_) => "terminal".to_string(),
                    k => format!("{k:?}"),
                };
                let (a, c) = (map(b.from), map(b.to));
                let (a, c) = if a <= c { (a, c) } else { (c, a) };
                format!("{kind}|{a}|{c}")
            })
            .collect();
        edges.sort();
        edges
    }

    #[test]
    fn transpose_produces_isomorphic_netlist() {
        // Row line i of A, walked from its terminal, maps onto column line
        // n-1-i of B walked towards its terminal: cell (i, j) -> (n-1-j, n-1-i).
        for n in [2, 3, 4, 5] {
            for strategy in Strategy::ALL {
                let a = spec(n, PatternKind::AllOnes, strategy);
                let mut b = a.clone();
                b.pattern = a.pattern.transposed();
                b.strategy = strategy.transposed();
                b.target = (n - 1 - a.target.1, n - 1 - a.target.0);
                let (na, ga) = build_crossbar_with_nodes(&a, TargetState::FromPattern).unwrap();
                let (nb, gb) = build_crossbar_with_nodes(&b, TargetState::FromPattern).unwrap();
                let mut image = vec![GROUND; na.node_count()];
                for i in 0..n {
                    for j in 0..n {
                        image[ga.r(i, j).0] = gb.c(n - 1 - j, n - 1 - i);
                        image[ga.c(i, j).0] = gb.r(n - 1 - j, n - 1 - i);
                    }
                    image[ga.row_terminal[i].0] = gb.col_terminal[n - 1 - i];
                    image[ga.col_terminal[i].0] = gb.row_terminal[n - 1 - i];
                }
                let mapped = relabeled_edges(&na, |id| nb.node_name(image[id.0]).to_string());
                let direct = relabeled_edges(&nb, |id| nb.node_name(id).to_string());
                assert_eq!(mapped, direct, "n={n} {strategy}");
            }
        }
    }
}
