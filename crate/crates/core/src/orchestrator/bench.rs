//! Per-point wall-time comparison of two backends.

use std::time::Duration;

use serde::Serialize;

use super::{time_per_call, ConfigError};
use crate::closed_form::CoefficientStore;
use crate::fitting::SweepGrid;
use crate::metrics::{Simulator, SneakModel};
use crate::topology::{CrossbarSpec, Metal, PatternKind, Strategy};
use crate::Error;

pub const MIN_REPETITIONS: usize = 5;

/// Timed window per repetition; short models are looped until it fills.
const WINDOW: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub size: usize,
    pub points: usize,
    pub repetitions: usize,
    /// Median seconds per point.
    pub reference_median_s: f64,
    pub model_median_s: f64,
    /// `reference_median_s / model_median_s`.
    pub speedup: f64,
    /// Standard deviation above half the median on either side.
    pub unstable: bool,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn spread_too_wide(v: &[f64], med: f64) -> bool {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    var.sqrt() > 0.5 * med
}

/// `points` specs of the given size, taking `(k_on, v_dd)` pairs from the
/// default grid in order (cycling when more are requested).
pub fn bench_specs(size: usize, points: usize) -> Result<Vec<CrossbarSpec>, Error> {
    let grid = SweepGrid::default();
    let pairs: Vec<(f64, f64)> = grid.k_on.iter().flat_map(|&k| grid.v_dd.iter().map(move |&v| (k, v))).collect();
    (0..points)
        .map(|i| {
            let (k, v) = pairs[i % pairs.len()];
            Ok(CrossbarSpec::uniform(size, PatternKind::AllOnes, Metal::M3, Strategy::Frc, k, v)?)
        })
        .collect()
}

/// Median per-point time of `reference` over `model` on the same specs.
pub fn benchmark_models(
    reference: &dyn SneakModel,
    model: &dyn SneakModel,
    specs: &[CrossbarSpec],
    repetitions: usize,
) -> Result<BenchReport, Error> {
    if repetitions < MIN_REPETITIONS {
        return Err(ConfigError::Invalid(format!("need at least {MIN_REPETITIONS} repetitions")).into());
    }
    if specs.is_empty() {
        return Err(ConfigError::Invalid("no benchmark points".into()).into());
    }
    // Warm-up pass; also surfaces evaluation errors before timing.
    for s in specs {
        reference.sneak_current(s)?;
        model.sneak_current(s)?;
    }
    let per_point = |m: &dyn SneakModel| {
        time_per_call(WINDOW, || {
            for s in specs {
                let _ = std::hint::black_box(m.sneak_current(std::hint::black_box(s)));
            }
        }) / specs.len() as f64
    };
    let mut ref_t = Vec::with_capacity(repetitions);
    let mut mod_t = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        ref_t.push(per_point(reference));
        mod_t.push(per_point(model));
    }
    let rm = median(&mut ref_t);
    let mm = median(&mut mod_t);
    Ok(BenchReport {
        size: specs[0].n(),
        points: specs.len(),
        repetitions,
        reference_median_s: rm,
        model_median_s: mm,
        speedup: rm / mm,
        unstable: spread_too_wide(&ref_t, rm) || spread_too_wide(&mod_t, mm),
    })
}

/// Simulator against the built-in surrogate on M3 all-ones FRC arrays.
pub fn benchmark_runtime(size: usize, points: usize, repetitions: usize) -> Result<BenchReport, Error> {
    let specs = bench_specs(size, points)?;
    benchmark_models(&Simulator::default(), &CoefficientStore::builtin(), &specs, repetitions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn spread_flag() {
        assert!(!spread_too_wide(&[1.0, 1.1, 0.9, 1.0, 1.0], 1.0));
        assert!(spread_too_wide(&[1.0, 5.0, 0.1, 1.0, 1.0], 1.0));
    }

    #[test]
    fn model_against_itself_is_near_one() {
        let store = CoefficientStore::builtin();
        let specs = bench_specs(8, 4).unwrap();
        let r = benchmark_models(&store, &store, &specs, 5).unwrap();
        assert!(r.speedup > 0.3 && r.speedup < 3.0, "{r:?}");
    }

    #[test]
    fn too_few_repetitions() {
        let store = CoefficientStore::builtin();
        let specs = bench_specs(4, 1).unwrap();
        assert!(benchmark_models(&store, &store, &specs, 4).is_err());
        assert!(benchmark_models(&store, &store, &[], 5).is_err());
    }
}
