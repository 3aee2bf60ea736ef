//! Pattern, metal and margin invariants of the simulated metrics.

use sneakpath::metrics::{MarginConfig, Simulator};
use sneakpath::{CrossbarSpec, Metal, PatternKind, Strategy};

const METALS: [Metal; 3] = [Metal::M3, Metal::M5, Metal::M6];

fn spec(n: usize, kind: PatternKind, metal: Metal, strategy: Strategy, k_on: f64, v_dd: f64) -> CrossbarSpec {
    CrossbarSpec::uniform(n, kind, metal, strategy, k_on, v_dd).unwrap()
}

#[test]
fn all_ones_leaks_at_least_as_much_as_all_zeros() {
    let sim = Simulator::default();
    for strategy in Strategy::ALL {
        for metal in METALS {
            for n in [4, 8, 16] {
                for &(k_on, v_dd) in &[(1e-9, 1.0), (5e-8, 2.0), (1e-7, 3.0)] {
                    let ones = sim.sneak_current(&spec(n, PatternKind::AllOnes, metal, strategy, k_on, v_dd)).unwrap();
                    let zeros =
                        sim.sneak_current(&spec(n, PatternKind::AllZeros, metal, strategy, k_on, v_dd)).unwrap();
                    assert!(
                        ones >= zeros * (1.0 - 1e-9),
                        "{strategy} {metal} n={n} k_on={k_on:e} v_dd={v_dd}: {ones:e} < {zeros:e}"
                    );
                }
            }
        }
    }
}

#[test]
fn array_margin_is_non_negative() {
    let sim = Simulator::default();
    for strategy in Strategy::ALL {
        for kind in [PatternKind::AllOnes, PatternKind::AllZeros] {
            for n in [2, 5, 8] {
                for &(k_on, v_dd) in &[(3e-8, 1.5), (1e-7, 3.0)] {
                    let s = spec(n, kind, Metal::M3, strategy, k_on, v_dd);
                    let m = sim.array_margin(&s, &MarginConfig::for_spec(&s)).unwrap();
                    assert!(m.margin >= 0.0, "{strategy} {kind} n={n}: {m:?}");
                }
            }
        }
    }
}

#[test]
fn metal_layer_barely_matters_at_full_size() {
    let sim = Simulator::default();
    for kind in [PatternKind::AllOnes, PatternKind::AllZeros] {
        let (k_on, v_dd) = (5e-8, 2.0);
        let mut currents = Vec::new();
        let mut margins = Vec::new();
        let mut size_change = f64::INFINITY;
        for metal in METALS {
            let small = sim.sneak_current(&spec(4, kind, metal, Strategy::Frc, k_on, v_dd)).unwrap();
            let s = spec(64, kind, metal, Strategy::Frc, k_on, v_dd);
            let large = sim.sneak_current(&s).unwrap();
            size_change = size_change.min(large - small);
            currents.push(large);
            margins.push(sim.normalized_margin(&s, &MarginConfig::for_spec(&s)).unwrap());
        }
        let spread = |v: &[f64]| {
            let hi = v.iter().cloned().fold(f64::MIN, f64::max);
            let lo = v.iter().cloned().fold(f64::MAX, f64::min);
            (hi, lo)
        };
        let (hi, lo) = spread(&currents);
        assert!(hi - lo < 0.1 * size_change, "{kind}: metal spread {:e} vs size change {size_change:e}", hi - lo);
        let (hi, lo) = spread(&margins);
        assert!(hi - lo <= 0.05 * hi, "{kind}: margins {margins:?}");
    }
}
