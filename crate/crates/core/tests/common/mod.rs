//! Independent reference solver used by the integration tests.
//!
//! Reads a netlist only through its textual branch list and solves the full
//! modified nodal system (node voltages plus the source current) by damped
//! secant fixed-point iteration with dense LU factorization. No code is
//! shared with the library solver.

#![allow(dead_code)]

pub mod check;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub enum Element {
    Memristor { k: f64, alpha: f64 },
    Resistor(f64),
    Source(f64),
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub element: Element,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone)]
pub struct Circuit {
    pub names: Vec<String>,
    pub branches: Vec<Branch>,
}

impl Circuit {
    /// Parses `kind from to value [alpha]` lines; node `0` is ground.
    pub fn parse(text: &str) -> Circuit {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut names = vec!["0".to_string()];
        index.insert("0".into(), 0);
        let mut node = |name: &str, names: &mut Vec<String>| {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                names.len() - 1
            })
        };
        let mut branches = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
            let f: Vec<&str> = line.split_whitespace().collect();
            let from = node(f[1], &mut names);
            let to = node(f[2], &mut names);
            let value: f64 = f[3].parse().unwrap();
            let element = match f[0] {
                "memristor" => Element::Memristor { k: value, alpha: f[4].parse().unwrap() },
                "line" | "strategy" | "load" => Element::Resistor(value),
                "vsource" => Element::Source(value),
                other => panic!("unknown element {other}"),
            };
            branches.push(Branch { element, from, to });
        }
        Circuit { names, branches }
    }

    pub fn node(&self, name: &str) -> usize {
        self.names.iter().position(|n| n == name).unwrap_or_else(|| panic!("no node {name}"))
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// By oracle node index; entry 0 is ground.
    pub voltages: Vec<f64>,
    /// Current out of the source's positive terminal.
    pub source_current: f64,
    pub iterations: usize,
}

impl OracleSolution {
    pub fn voltage(&self, c: &Circuit, name: &str) -> f64 {
        self.voltages[c.node(name)]
    }

    /// Current `from -> to` of branch `b` (source: delivered current).
    pub fn branch_current(&self, c: &Circuit, b: usize) -> f64 {
        let br = &c.branches[b];
        let dv = self.voltages[br.from] - self.voltages[br.to];
        match br.element {
            Element::Memristor { k, alpha } => k * (alpha * dv).sinh(),
            Element::Resistor(r) => dv / r,
            Element::Source(_) => self.source_current,
        }
    }
}

fn secant(k: f64, alpha: f64, dv: f64) -> f64 {
    let x = alpha * dv;
    if x.abs() < 1e-8 {
        k * alpha * (1.0 + x * x / 6.0)
    } else {
        k * x.sinh() / dv
    }
}

/// `x coth x`, the tangent-to-secant conductance ratio of a sinh device.
fn tangent_ratio(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x * x / 3.0
    } else {
        x / x.tanh()
    }
}

/// Net current leaving each unknown node plus the source constraint error.
fn residual(c: &Circuit, src: usize, v_src: f64, gmin: f64, x: &DVector<f64>) -> DVector<f64> {
    let n = c.names.len() - 1;
    let volt = |node: usize| if node == 0 { 0.0 } else { x[node - 1] };
    let mut f = DVector::<f64>::zeros(n + 1);
    for br in &c.branches {
        let dv = volt(br.from) - volt(br.to);
        let i = match br.element {
            Element::Memristor { k, alpha } => k * (alpha * dv).sinh(),
            Element::Resistor(r) => dv / r,
            // Delivered current enters the circuit at `from`.
            Element::Source(_) => -x[n],
        };
        if br.from != 0 {
            f[br.from - 1] += i;
        }
        if br.to != 0 {
            f[br.to - 1] -= i;
        }
    }
    for k in 0..n {
        f[k] += gmin * x[k];
    }
    let s = &c.branches[src];
    f[n] = volt(s.from) - volt(s.to) - v_src;
    f
}

pub fn solve(c: &Circuit, gmin: f64) -> OracleSolution {
    let n = c.names.len() - 1;
    let sources: Vec<usize> =
        (0..c.branches.len()).filter(|&b| matches!(c.branches[b].element, Element::Source(_))).collect();
    assert_eq!(sources.len(), 1, "oracle supports exactly one source");
    let src_idx = sources[0];
    let src = &c.branches[src_idx];
    let Element::Source(v_src) = src.element else { unreachable!() };
    let dim = n + 1;
    let mut x = DVector::<f64>::zeros(dim);
    let row = |node: usize| if node == 0 { None } else { Some(node - 1) };
    let mut quiet = 0;

    for it in 1..=100_000 {
        let volt = |node: usize, x: &DVector<f64>| if node == 0 { 0.0 } else { x[node - 1] };
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        let mut r_max = 1.0f64;
        for br in &c.branches {
            let g = match br.element {
                Element::Memristor { k, alpha } => {
                    let dv = volt(br.from, &x) - volt(br.to, &x);
                    r_max = r_max.max(tangent_ratio(alpha * dv));
                    secant(k, alpha, dv)
                }
                Element::Resistor(r) => 1.0 / r,
                Element::Source(_) => continue,
            };
            let (p, q) = (row(br.from), row(br.to));
            if let Some(p) = p {
                a[(p, p)] += g;
            }
            if let Some(q) = q {
                a[(q, q)] += g;
            }
            if let (Some(p), Some(q)) = (p, q) {
                a[(p, q)] -= g;
                a[(q, p)] -= g;
            }
        }
        for i in 0..n {
            a[(i, i)] += gmin;
        }
        if let Some(p) = row(src.from) {
            a[(p, n)] -= 1.0;
            a[(n, p)] += 1.0;
        }
        if let Some(q) = row(src.to) {
            a[(q, n)] += 1.0;
            a[(n, q)] -= 1.0;
        }
        let f = residual(c, src_idx, v_src, gmin, &x);
        let delta = a.lu().solve(&(-f)).expect("oracle system singular");
        let omega = 2.0 / (1.0 + r_max);
        let step = delta * omega;
        x += &step;
        let vmax = x.rows(0, n).amax().max(1.0);
        if step.rows(0, n).amax() <= 1e-15 * vmax {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet >= 5 {
            let mut voltages = vec![0.0];
            voltages.extend(x.rows(0, n).iter());
            return OracleSolution { voltages, source_current: x[n], iterations: it };
        }
    }
    panic!("oracle did not converge");
}
