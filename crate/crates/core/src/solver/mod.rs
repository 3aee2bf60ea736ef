//! DC operating point of a [`Netlist`].
//!
//! Unknowns are the voltages of every node whose potential is not fixed by
//! the source (known-voltage elimination). Each Newton step linearizes the
//! sinh devices, assembles the symmetric positive definite nodal Jacobian in
//! skyline storage and solves it by Cholesky after a bandwidth-reducing
//! reordering. Steps are halved while the KCL residual does not decrease; if
//! Newton still fails, the source is ramped up in equal increments.

mod sparse;

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::device::{conductance_unchecked, current_unchecked};
use crate::topology::{BranchId, BranchKind, Netlist, NodeId, GROUND};

use sparse::{envelope_size, reverse_cuthill_mckee, Skyline};

pub const DEFAULT_GMIN: f64 = 1e-15;
const POLISH_STEPS: usize = 2;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("netlist has no voltage source")]
    NoSource,
    #[error("netlist has {0} voltage sources, exactly one is supported")]
    MultipleSources(usize),
    #[error("voltage source must have one terminal on ground")]
    SourceNotGrounded,
    #[error("floating subgraph with no path to a fixed potential: {nodes:?}")]
    Floating { nodes: Vec<String> },
    #[error("unsupported zero-ohm branch between {from} and {to}")]
    UnsupportedShort { from: String, to: String },
    #[error("nodal matrix not positive definite at node {node}")]
    Singular { node: String },
    #[error("Newton did not converge after {iterations} iterations (max KCL residual {residual:.3e} A)")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("unknown branch id {0}")]
    UnknownBranch(usize),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Damping {
    None,
    LineHalving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Continuation {
    None,
    SourceStepping(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Absolute Newton step tolerance, volts.
    pub abs_tol: f64,
    /// Relative Newton step tolerance.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub damping: Damping,
    pub continuation: Continuation,
    /// Conductance from every unknown node to ground, siemens.
    pub gmin: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-9,
            max_iter: 200,
            damping: Damping::LineHalving,
            continuation: Continuation::SourceStepping(10),
            gmin: DEFAULT_GMIN,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<(), SolveError> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(SolveError::InvalidOptions("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(SolveError::InvalidOptions("max_iter must be at least 1".into()));
        }
        if !(self.gmin >= 0.0) || !self.gmin.is_finite() {
            return Err(SolveError::InvalidOptions("gmin must be finite and non-negative".into()));
        }
        if self.continuation == Continuation::SourceStepping(0) {
            return Err(SolveError::InvalidOptions("source stepping needs at least one step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    /// Indexed by [`NodeId`]; entry 0 is ground.
    pub node_voltages: Vec<f64>,
    /// Indexed by [`BranchId`].
    pub branch_currents: Vec<f64>,
    /// Newton iterations summed over all continuation stages.
    pub iterations: usize,
    /// Largest absolute KCL imbalance over the unknown nodes, amperes.
    pub max_kcl_residual: f64,
    pub converged: bool,
    pub gmin: f64,
    /// Nodes solved for; pinned nodes carry no `gmin` leak.
    #[serde(skip)]
    pub unknown: Vec<bool>,
}

impl SolveResult {
    pub fn voltage(&self, node: NodeId) -> f64 {
        self.node_voltages[node.0]
    }

    pub fn branch_current(&self, branch: BranchId) -> Result<f64, SolveError> {
        self.branch_currents.get(branch.0).copied().ok_or(SolveError::UnknownBranch(branch.0))
    }

    /// Net current leaving each node through its branches and `gmin`.
    /// Ground and source terminals carry the return current and are excluded
    /// from the KCL check by callers.
    pub fn kcl_imbalance(&self, net: &Netlist) -> Vec<f64> {
        let mut out = vec![0.0; net.node_count()];
        for (b, &i) in net.branches().iter().zip(&self.branch_currents) {
            match b.kind {
                BranchKind::VoltageSource(_) => {
                    // Delivers `i` out of `from` into the circuit.
                    out[b.from.0] -= i;
                    out[b.to.0] += i;
                }
                _ => {
                    out[b.from.0] += i;
                    out[b.to.0] -= i;
                }
            }
        }
        for (k, o) in out.iter_mut().enumerate() {
            if self.unknown[k] {
                *o += self.gmin * self.node_voltages[k];
            }
        }
        out
    }

    /// `(source power, power absorbed by all other elements including gmin)`.
    pub fn power_balance(&self, net: &Netlist) -> (f64, f64) {
        let mut supplied = 0.0;
        let mut absorbed = 0.0;
        for (b, &i) in net.branches().iter().zip(&self.branch_currents) {
            let dv = self.node_voltages[b.from.0] - self.node_voltages[b.to.0];
            match b.kind {
                BranchKind::VoltageSource(_) => supplied += dv * i,
                _ => absorbed += dv * i,
            }
        }
        absorbed += self
            .node_voltages
            .iter()
            .zip(&self.unknown)
            .filter(|(_, &u)| u)
            .map(|(v, _)| self.gmin * v * v)
            .sum::<f64>();
        (supplied, absorbed)
    }

    /// Converged node voltages as a JSON array of `{node, voltage}` records.
    pub fn write_voltage_map<W: Write>(&self, net: &Netlist, w: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Entry<'a> {
            node: &'a str,
            voltage: f64,
        }
        let entries: Vec<_> = self
            .node_voltages
            .iter()
            .enumerate()
            .map(|(k, &voltage)| Entry { node: net.node_name(NodeId(k)), voltage })
            .collect();
        serde_json::to_writer_pretty(w, &entries).map_err(io::Error::other)
    }
}

/// Current of `branch` in a solved circuit.
pub fn branch_current(result: &SolveResult, branch: BranchId) -> Result<f64, SolveError> {
    result.branch_current(branch)
}

/// Branch currents pinned by constraints rather than constitutive laws.
#[derive(Debug, Clone, Copy)]
enum Constraint {
    /// The supply; its current is recovered from the ground return.
    Source,
    /// Zero-ohm resistor; current `from -> to` obtained by KCL at `pinned`.
    Short { pinned: usize },
}

/// Netlist compiled into index form for repeated Newton iterations.
struct Plan<'a> {
    net: &'a Netlist,
    /// Fixed potential per node at full source value, `None` for unknowns.
    fixed: Vec<Option<f64>>,
    /// Node index -> position in the permuted unknown vector.
    slot: Vec<Option<usize>>,
    /// Permuted unknown position -> node index.
    nodes: Vec<usize>,
    constraints: Vec<(usize, Constraint)>,
    /// Nodes tied to ground through zero-ohm chains, ground included.
    grounded: Vec<bool>,
    matrix: Skyline,
    gmin: f64,
}

impl<'a> Plan<'a> {
    fn new(net: &'a Netlist, gmin: f64) -> Result<Self, SolveError> {
        let branches = net.branches();
        let sources: Vec<usize> = branches
            .iter()
            .enumerate()
            .filter(|(_, b)| matches!(b.kind, BranchKind::VoltageSource(_)))
            .map(|(k, _)| k)
            .collect();
        let src = match sources.as_slice() {
            [] => return Err(SolveError::NoSource),
            [one] => *one,
            many => return Err(SolveError::MultipleSources(many.len())),
        };
        let source = branches[src];
        let BranchKind::VoltageSource(v_src) = source.kind else { unreachable!() };
        if source.to != GROUND || source.from == GROUND {
            return Err(SolveError::SourceNotGrounded);
        }

        let n_nodes = net.node_count();
        let mut fixed = vec![None; n_nodes];
        fixed[GROUND.0] = Some(0.0);
        fixed[source.from.0] = Some(v_src);
        let mut constraints = vec![(src, Constraint::Source)];
        let mut pinned_by = vec![false; n_nodes];
        pinned_by[source.from.0] = true;
        let mut grounded = vec![false; n_nodes];
        grounded[GROUND.0] = true;

        // Zero-ohm resistors propagate fixed potentials.
        let shorts: Vec<usize> =
            branches.iter().enumerate().filter(|(_, b)| b.kind.resistance() == Some(0.0)).map(|(k, _)| k).collect();
        let mut pending = shorts.clone();
        loop {
            let before = pending.len();
            pending.retain(|&k| {
                let b = branches[k];
                match (fixed[b.from.0], fixed[b.to.0]) {
                    (Some(v), None) if !pinned_by[b.to.0] => {
                        fixed[b.to.0] = Some(v);
                        pinned_by[b.to.0] = true;
                        grounded[b.to.0] = grounded[b.from.0];
                        constraints.push((k, Constraint::Short { pinned: b.to.0 }));
                        false
                    }
                    (None, Some(v)) if !pinned_by[b.from.0] => {
                        fixed[b.from.0] = Some(v);
                        pinned_by[b.from.0] = true;
                        grounded[b.from.0] = grounded[b.to.0];
                        constraints.push((k, Constraint::Short { pinned: b.from.0 }));
                        false
                    }
                    _ => true,
                }
            });
            if pending.is_empty() || pending.len() == before {
                break;
            }
        }
        if let Some(&k) = pending.first() {
            let b = branches[k];
            return Err(SolveError::UnsupportedShort {
                from: net.node_name(b.from).to_string(),
                to: net.node_name(b.to).to_string(),
            });
        }

        // Every unknown must reach a fixed potential.
        let mut adj = vec![Vec::new(); n_nodes];
        for b in branches {
            adj[b.from.0].push(b.to.0);
            adj[b.to.0].push(b.from.0);
        }
        let mut reached: Vec<bool> = fixed.iter().map(Option::is_some).collect();
        let mut stack: Vec<usize> = (0..n_nodes).filter(|&k| reached[k]).collect();
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !reached[v] {
                    reached[v] = true;
                    stack.push(v);
                }
            }
        }
        let floating: Vec<String> =
            (0..n_nodes).filter(|&k| !reached[k]).map(|k| net.node_name(NodeId(k)).to_string()).collect();
        if !floating.is_empty() {
            return Err(SolveError::Floating { nodes: floating });
        }

        // Unknown numbering and coupling pattern.
        let unknown: Vec<usize> = (0..n_nodes).filter(|&k| fixed[k].is_none()).collect();
        let mut local = vec![usize::MAX; n_nodes];
        for (p, &k) in unknown.iter().enumerate() {
            local[k] = p;
        }
        let edges: Vec<(usize, usize)> = branches
            .iter()
            .filter(|b| fixed[b.from.0].is_none() && fixed[b.to.0].is_none() && b.from != b.to)
            .map(|b| (local[b.from.0], local[b.to.0]))
            .collect();
        let natural: Vec<usize> = (0..unknown.len()).collect();
        let rcm = reverse_cuthill_mckee(unknown.len(), &edges);
        let perm = if envelope_size(&rcm, &edges) < envelope_size(&natural, &edges) { rcm } else { natural };

        let mut slot = vec![None; n_nodes];
        let mut nodes = Vec::with_capacity(unknown.len());
        for (new, &old) in perm.iter().enumerate() {
            slot[unknown[old]] = Some(new);
            nodes.push(unknown[old]);
        }
        let permuted: Vec<(usize, usize)> = branches
            .iter()
            .filter_map(|b| match (slot[b.from.0], slot[b.to.0]) {
                (Some(a), Some(c)) if a != c => Some((a, c)),
                _ => None,
            })
            .collect();
        let matrix = Skyline::new(nodes.len(), &permuted);
        log::debug!("nodal system: {} unknowns, envelope {}", nodes.len(), matrix.profile());

        Ok(Self { net, fixed, slot, nodes, constraints, grounded, matrix, gmin })
    }

    /// Full node-voltage vector with fixed nodes at `scale` times their value.
    fn apply_fixed(&self, v: &mut [f64], scale: f64) {
        for (k, f) in self.fixed.iter().enumerate() {
            if let Some(x) = f {
                v[k] = x * scale;
            }
        }
    }

    #[inline]
    fn element_current(kind: &BranchKind, dv: f64, linear: bool) -> f64 {
        match *kind {
            BranchKind::Memristor { k, alpha } => {
                if linear {
                    k * alpha * dv
                } else {
                    current_unchecked(k, alpha, dv)
                }
            }
            BranchKind::LineResistor(r) | BranchKind::StrategyResistor(r) | BranchKind::LoadResistor(r) => dv / r,
            BranchKind::VoltageSource(_) => 0.0,
        }
    }

    #[inline]
    fn element_conductance(kind: &BranchKind, dv: f64, linear: bool) -> f64 {
        match *kind {
            BranchKind::Memristor { k, alpha } => {
                if linear {
                    k * alpha
                } else {
                    conductance_unchecked(k, alpha, dv)
                }
            }
            BranchKind::LineResistor(r) | BranchKind::StrategyResistor(r) | BranchKind::LoadResistor(r) => 1.0 / r,
            BranchKind::VoltageSource(_) => 0.0,
        }
    }

    fn is_active(&self, b: &crate::topology::Branch) -> bool {
        !matches!(b.kind, BranchKind::VoltageSource(_)) && b.kind.resistance() != Some(0.0)
    }

    /// KCL residual (current leaving each unknown node), in permuted order.
    fn residual(&self, v: &[f64], linear: bool, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for b in self.net.branches() {
            if !self.is_active(b) {
                continue;
            }
            let (sa, sb) = (self.slot[b.from.0], self.slot[b.to.0]);
            if sa.is_none() && sb.is_none() {
                continue;
            }
            let i = Self::element_current(&b.kind, v[b.from.0] - v[b.to.0], linear);
            if let Some(a) = sa {
                out[a] += i;
            }
            if let Some(c) = sb {
                out[c] -= i;
            }
        }
        for (p, &k) in self.nodes.iter().enumerate() {
            out[p] += self.gmin * v[k];
        }
    }

    fn assemble(&mut self, v: &[f64], linear: bool) {
        self.matrix.clear();
        for b in self.net.branches() {
            if !self.is_active(b) {
                continue;
            }
            let (sa, sb) = (self.slot[b.from.0], self.slot[b.to.0]);
            if sa.is_none() && sb.is_none() {
                continue;
            }
            let g = Self::element_conductance(&b.kind, v[b.from.0] - v[b.to.0], linear);
            if let Some(a) = sa {
                self.matrix.add(a, a, g);
            }
            if let Some(c) = sb {
                self.matrix.add(c, c, g);
            }
            if let (Some(a), Some(c)) = (sa, sb) {
                if a != c {
                    self.matrix.add(a, c, -g);
                }
            }
        }
        if self.gmin > 0.0 {
            for p in 0..self.nodes.len() {
                self.matrix.add(p, p, self.gmin);
            }
        }
    }

    fn factor_solve(&mut self, rhs: &mut [f64]) -> Result<(), SolveError> {
        self.matrix
            .factor()
            .map_err(|e| SolveError::Singular { node: self.net.node_name(NodeId(self.nodes[e.row])).to_string() })?;
        self.matrix.solve(rhs);
        Ok(())
    }

    /// Linear network with every device at its zero-bias conductance.
    fn initial_guess(&mut self, v: &mut [f64], scale: f64) -> Result<(), SolveError> {
        v.iter_mut().for_each(|x| *x = 0.0);
        self.apply_fixed(v, scale);
        let mut rhs = vec![0.0; self.nodes.len()];
        self.residual(v, true, &mut rhs);
        rhs.iter_mut().for_each(|x| *x = -*x);
        self.assemble(v, true);
        self.factor_solve(&mut rhs)?;
        for (p, &k) in self.nodes.iter().enumerate() {
            v[k] += rhs[p];
        }
        Ok(())
    }

    /// Damped Newton from the current contents of `v`.
    fn newton(&mut self, v: &mut [f64], opts: &SolveOptions, iterations: &mut usize) -> Result<bool, SolveError> {
        let m = self.nodes.len();
        let mut f = vec![0.0; m];
        let mut f_trial = vec![0.0; m];
        let mut dx = vec![0.0; m];
        let mut trial = v.to_vec();
        self.residual(v, false, &mut f);
        let mut norm = l2(&f);
        for _ in 0..opts.max_iter {
            *iterations += 1;
            self.assemble(v, false);
            dx.iter_mut().zip(&f).for_each(|(d, r)| *d = -r);
            self.factor_solve(&mut dx)?;

            let small = self.nodes.iter().zip(&dx).all(|(&k, d)| d.abs() <= opts.abs_tol + opts.rel_tol * v[k].abs());
            let mut t = 1.0;
            let mut halvings = 0;
            loop {
                for (&k, d) in self.nodes.iter().zip(&dx) {
                    trial[k] = v[k] + t * d;
                }
                self.residual(&trial, false, &mut f_trial);
                let trial_norm = l2(&f_trial);
                let accept = small
                    || opts.damping == Damping::None
                    || trial_norm < norm
                    || !trial_norm.is_finite() && halvings >= MAX_HALVINGS;
                if accept && trial_norm.is_finite() {
                    norm = trial_norm;
                    break;
                }
                if halvings >= MAX_HALVINGS {
                    // No decrease along the Newton direction; take the full step.
                    for (&k, d) in self.nodes.iter().zip(&dx) {
                        trial[k] = v[k] + d;
                    }
                    self.residual(&trial, false, &mut f_trial);
                    norm = l2(&f_trial);
                    break;
                }
                t *= 0.5;
                halvings += 1;
            }
            for &k in &self.nodes {
                v[k] = trial[k];
            }
            std::mem::swap(&mut f, &mut f_trial);
            if small {
                self.polish(v, &mut f, &mut norm)?;
                return Ok(true);
            }
            if !norm.is_finite() {
                return Ok(false);
            }
        }
        Ok(false)
    }

    /// Extra full Newton steps after convergence, kept only while they shrink
    /// the residual. Brings KCL down to round-off on weakly driven nodes.
    fn polish(&mut self, v: &mut [f64], f: &mut Vec<f64>, norm: &mut f64) -> Result<(), SolveError> {
        let mut dx = vec![0.0; self.nodes.len()];
        let mut trial = v.to_vec();
        let mut f_trial = vec![0.0; self.nodes.len()];
        for _ in 0..POLISH_STEPS {
            self.assemble(v, false);
            dx.iter_mut().zip(f.iter()).for_each(|(d, r)| *d = -r);
            self.factor_solve(&mut dx)?;
            for (&k, d) in self.nodes.iter().zip(&dx) {
                trial[k] = v[k] + d;
            }
            self.residual(&trial, false, &mut f_trial);
            let trial_norm = l2(&f_trial);
            if !(trial_norm < *norm) {
                break;
            }
            *norm = trial_norm;
            for &k in &self.nodes {
                v[k] = trial[k];
            }
            std::mem::swap(f, &mut f_trial);
        }
        Ok(())
    }

    fn branch_currents(&self, v: &[f64]) -> Vec<f64> {
        let branches = self.net.branches();
        let mut currents: Vec<f64> =
            branches
                .iter()
                .map(|b| {
                    if self.is_active(b) {
                        Self::element_current(&b.kind, v[b.from.0] - v[b.to.0], false)
                    } else {
                        0.0
                    }
                })
                .collect();
        // Currents leaving each node through active branches and gmin.
        let mut leaving = vec![0.0; self.net.node_count()];
        for (b, &i) in branches.iter().zip(&currents) {
            if self.is_active(b) {
                leaving[b.from.0] += i;
                leaving[b.to.0] -= i;
            }
        }
        // Outermost pins first so chained shorts see their downstream currents.
        for &(k, c) in self.constraints.iter().rev() {
            let b = branches[k];
            match c {
                Constraint::Source => {}
                Constraint::Short { pinned } => {
                    let i = if pinned == b.to.0 { leaving[pinned] } else { -leaving[pinned] };
                    currents[k] = i;
                    leaving[b.from.0] += i;
                    leaving[b.to.0] -= i;
                }
            }
        }
        // The source current is taken from the ground return. Ground-side
        // potentials sit near zero where f64 resolves small drops finely, so
        // this beats summing line currents at the driver.
        let leak: f64 = self.nodes.iter().map(|&k| self.gmin * v[k]).sum();
        let returned: f64 = -(0..leaving.len()).filter(|&k| self.grounded[k]).map(|k| leaving[k]).sum::<f64>();
        let src = self.constraints[0].0;
        currents[src] = returned + leak;
        currents
    }
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Computes the DC operating point of `net`.
pub fn solve_dc(net: &Netlist, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    opts.validate()?;
    let mut plan = Plan::new(net, opts.gmin)?;
    let mut v = vec![0.0; net.node_count()];
    let mut iterations = 0;

    plan.initial_guess(&mut v, 1.0)?;
    let mut ok = plan.newton(&mut v, opts, &mut iterations)?;
    if !ok {
        if let Continuation::SourceStepping(steps) = opts.continuation {
            log::debug!("Newton failed after {iterations} iterations, stepping the source in {steps} increments");
            plan.initial_guess(&mut v, 1.0 / steps as f64)?;
            ok = true;
            for s in 1..=steps {
                plan.apply_fixed(&mut v, s as f64 / steps as f64);
                if !plan.newton(&mut v, opts, &mut iterations)? {
                    ok = false;
                    break;
                }
            }
        }
    }

    let mut f = vec![0.0; plan.nodes.len()];
    plan.residual(&v, false, &mut f);
    let max_kcl_residual = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let branch_currents = plan.branch_currents(&v);
    let source_current = plan
        .constraints
        .iter()
        .find_map(|&(k, c)| matches!(c, Constraint::Source).then_some(branch_currents[k].abs()))
        .unwrap_or(0.0);
    let kcl_bound = 1e-12 * source_current.max(1.0);
    if !ok || !(max_kcl_residual <= kcl_bound) {
        return Err(SolveError::NonConvergence { iterations, residual: max_kcl_residual });
    }
    let mut unknown = vec![false; net.node_count()];
    plan.nodes.iter().for_each(|&k| unknown[k] = true);
    Ok(SolveResult {
        node_voltages: v,
        branch_currents,
        iterations,
        max_kcl_residual,
        converged: true,
        gmin: opts.gmin,
        unknown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn divider(r1: f64, r2: f64, v: f64) -> (Netlist, NodeId, BranchId) {
        let mut net = Netlist::new();
        let top = net.add_node("top");
        let mid = net.add_node("mid");
        net.add_branch(BranchKind::VoltageSource(v), top, GROUND);
        net.add_branch(BranchKind::LineResistor(r1), top, mid);
        let load = net.add_branch(BranchKind::LoadResistor(r2), mid, GROUND);
        (net, mid, load)
    }

    #[test]
    fn resistive_divider_converges_in_one_iteration() {
        let (net, mid, load) = divider(1000.0, 3000.0, 2.0);
        let res = solve_dc(&net, &SolveOptions { gmin: 0.0, ..Default::default() }).unwrap();
        assert_eq!(res.iterations, 1);
        assert!((res.voltage(mid) - 1.5).abs() < 1e-14);
        assert!((res.branch_current(load).unwrap() - 0.5e-3).abs() < 1e-17);
        assert!((res.branch_current(BranchId(0)).unwrap() - 0.5e-3).abs() < 1e-17);
    }

    #[test]
    fn zero_ohm_load_pins_node_to_ground() {
        let (net, mid, load) = divider(1000.0, 0.0, 2.0);
        let res = solve_dc(&net, &SolveOptions::default()).unwrap();
        assert_eq!(res.voltage(mid), 0.0);
        assert!((res.branch_current(load).unwrap() - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn structural_errors() {
        let mut net = Netlist::new();
        let a = net.add_node("a");
        net.add_branch(BranchKind::LineResistor(1.0), a, GROUND);
        assert_eq!(solve_dc(&net, &SolveOptions::default()), Err(SolveError::NoSource));

        let (mut net, _, _) = divider(1.0, 1.0, 1.0);
        let x = net.add_node("island_a");
        let y = net.add_node("island_b");
        net.add_branch(BranchKind::LineResistor(1.0), x, y);
        match solve_dc(&net, &SolveOptions::default()) {
            Err(SolveError::Floating { nodes }) => assert_eq!(nodes, vec!["island_a", "island_b"]),
            other => panic!("expected floating error, got {other:?}"),
        }

        let (mut net, _, _) = divider(1.0, 1.0, 1.0);
        let top = net.node_by_name("top").unwrap();
        net.add_branch(BranchKind::VoltageSource(1.0), top, GROUND);
        assert_eq!(solve_dc(&net, &SolveOptions::default()), Err(SolveError::MultipleSources(2)));
    }

    #[test]
    fn unknown_branch_lookup() {
        let (net, _, _) = divider(1.0, 1.0, 1.0);
        let res = solve_dc(&net, &SolveOptions::default()).unwrap();
        assert_eq!(branch_current(&res, BranchId(99)), Err(SolveError::UnknownBranch(99)));
    }

    #[test]
    fn invalid_options() {
        let (net, _, _) = divider(1.0, 1.0, 1.0);
        let opts = SolveOptions { max_iter: 0, ..Default::default() };
        assert!(matches!(solve_dc(&net, &opts), Err(SolveError::InvalidOptions(_))));
        let opts = SolveOptions { abs_tol: 0.0, ..Default::default() };
        assert!(matches!(solve_dc(&net, &opts), Err(SolveError::InvalidOptions(_))));
    }

    #[test]
    fn single_device_read() {
        // Scalar oracle: bisection on k sinh(alpha (v - x)) = x / r.
        let (k, alpha, vdd, r) = (1e-7, 3.0, 1.0, 0.001);
        let mut net = Netlist::new();
        let top = net.add_node("top");
        let s = net.add_node("s");
        net.add_branch(BranchKind::VoltageSource(vdd), top, GROUND);
        let dev = net.add_branch(BranchKind::Memristor { k, alpha }, top, s);
        net.add_branch(BranchKind::LoadResistor(r), s, GROUND);
        let res = solve_dc(&net, &SolveOptions { gmin: 0.0, ..Default::default() }).unwrap();
        let (mut lo, mut hi) = (0.0f64, vdd);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if k * (alpha * (vdd - mid)).sinh() - mid / r > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let expected = lo / r;
        let i = res.branch_current(dev).unwrap();
        assert!((i - expected).abs() <= 1e-12 * expected);
        // 1e-7 * sinh(3) = 1.001787e-6 A, reduced by the ~1 nV load drop.
        assert!((i - 1.001787e-6).abs() < 1e-11);
    }
}
