//! Library-versus-oracle comparison shared by the solver tests and the
//! acceptance run.

use sneakpath::topology::build_crossbar;
use sneakpath::{
    solve_dc, BranchKind, CrossbarSpec, Metal, Netlist, NodeId, PatternKind, SolveOptions, SolveResult, Strategy,
    TargetState,
};

use super::{Circuit, OracleSolution};

pub const METALS: [Metal; 3] = [Metal::M3, Metal::M5, Metal::M6];
pub const PATTERNS: [PatternKind; 2] = [PatternKind::AllOnes, PatternKind::AllZeros];
pub const VOLTAGE_TOL: f64 = 1e-9;
pub const KCL_TOL: f64 = 1e-12;
pub const POWER_TOL: f64 = 1e-9;

pub fn solve_both(net: &Netlist, gmin: f64) -> (SolveResult, Circuit, OracleSolution) {
    let opts = SolveOptions { gmin, ..SolveOptions::default() };
    let result = solve_dc(net, &opts).unwrap();
    let circuit = Circuit::parse(&net.branch_list());
    let oracle = super::solve(&circuit, gmin);
    (result, circuit, oracle)
}

pub fn max_voltage_gap(net: &Netlist, result: &SolveResult, circuit: &Circuit, oracle: &OracleSolution) -> f64 {
    (1..net.node_count())
        .map(|k| {
            let name = net.node_name(NodeId(k));
            (result.voltage(NodeId(k)) - oracle.voltage(circuit, name)).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest KCL imbalance over the unknown nodes, scaled by `max(1 A, |I_src|)`.
pub fn max_scaled_kcl(net: &Netlist, result: &SolveResult) -> f64 {
    let imbalance = result.kcl_imbalance(net);
    let driver = net.probes.driver.unwrap();
    let i_src = net
        .branches()
        .iter()
        .zip(&result.branch_currents)
        .filter(|(b, _)| matches!(b.kind, BranchKind::VoltageSource(_)))
        .map(|(_, i)| i.abs())
        .fold(0.0, f64::max);
    let scale = i_src.max(1.0);
    (1..net.node_count()).filter(|&k| NodeId(k) != driver).map(|k| imbalance[k].abs() / scale).fold(0.0, f64::max)
}

/// Solves one array both ways and checks voltages, KCL, power balance and
/// the supply bounds.
pub fn check_point(
    n: usize,
    kind: PatternKind,
    metal: Metal,
    strategy: Strategy,
    k_on: f64,
    v_dd: f64,
) -> Result<(), String> {
    let label = format!("n={n} {kind} {strategy} {metal} k_on={k_on:e} v_dd={v_dd}");
    let s = CrossbarSpec::uniform(n, kind, metal, strategy, k_on, v_dd).map_err(|e| format!("{label}: {e}"))?;
    let net = build_crossbar(&s, TargetState::FromPattern).map_err(|e| format!("{label}: {e}"))?;
    let (result, circuit, oracle) = solve_both(&net, SolveOptions::default().gmin);
    let gap = max_voltage_gap(&net, &result, &circuit, &oracle);
    if gap > VOLTAGE_TOL {
        return Err(format!("{label}: voltage gap {gap:e}"));
    }
    let kcl = max_scaled_kcl(&net, &result);
    if kcl > KCL_TOL {
        return Err(format!("{label}: KCL residual {kcl:e}"));
    }
    let (supplied, absorbed) = result.power_balance(&net);
    if (supplied - absorbed).abs() > POWER_TOL * supplied.abs() {
        return Err(format!("{label}: power supplied {supplied:e} absorbed {absorbed:e}"));
    }
    if let Some(v) = result.node_voltages.iter().find(|&&v| v < -1e-12 || v > v_dd + 1e-12) {
        return Err(format!("{label}: voltage {v} outside the supply range"));
    }
    Ok(())
}

/// Every size up to 3, pattern, strategy and metal at three bias points.
pub fn check_small_grid() -> Result<usize, String> {
    let mut count = 0;
    for n in 1..=3 {
        for kind in PATTERNS {
            for strategy in Strategy::ALL {
                for metal in METALS {
                    for &(k_on, v_dd) in &[(1e-7, 3.0), (1e-9, 1.0), (5e-8, 2.0)] {
                        check_point(n, kind, metal, strategy, k_on, v_dd)?;
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(count)
}
