//! Least-squares refit of closed-form coefficients from sweep data.
//!
//! `ln I` is regressed on the ten features. Columns are scaled to unit max
//! magnitude and the system is solved through an SVD, which also yields the
//! condition estimate and catches rank loss.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::closed_form::{dot, feature_vector, CoefficientKey, CoefficientSet, N_FEATURES};
use crate::metrics::SneakModel;
use crate::topology::CrossbarSpec;
use crate::Error;

/// Smallest singular value relative to the largest that still counts as full rank.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} usable samples, got {got}")]
    TooFewSamples { got: usize, needed: usize },
    #[error("samples mix coefficient keys {0} and {1}")]
    MixedKeys(CoefficientKey, CoefficientKey),
    #[error("rank-deficient design: {parameter} takes {distinct} distinct value(s), the quadratic model needs 3")]
    Degenerate { parameter: &'static str, distinct: usize },
    #[error("rank-deficient design (smallest/largest singular value {ratio:.3e})")]
    RankDeficient { ratio: f64 },
    #[error("ridge must be finite and non-negative, got {0}")]
    InvalidRidge(f64),
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("holdout point (size={size}, k_on={k_on:e}, v_dd={v_dd}) also appears in the training set")]
    Overlap { size: usize, k_on: f64, v_dd: f64 },
    #[error("sample has non-finite or non-positive input (size={size}, k_on={k_on:e}, v_dd={v_dd})")]
    BadInput { size: usize, k_on: f64, v_dd: f64 },
}

/// One simulated operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSample {
    pub size: usize,
    pub k_on: f64,
    pub v_dd: f64,
    pub i_sneak: f64,
    pub key: CoefficientKey,
}

impl SweepSample {
    fn same_point(&self, other: &SweepSample) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        self.size == other.size && close(self.k_on, other.k_on) && close(self.v_dd, other.v_dd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    /// Tikhonov weight on the column-scaled coefficients; 0 disables it.
    pub ridge: f64,
}

/// Relative error of the fitted model in current (not log) space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean_abs: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: CoefficientSet,
    /// On the training samples.
    pub residuals: ResidualStats,
    /// 2-norm condition number of the scaled normal matrix.
    pub condition: f64,
    pub samples_used: usize,
    pub excluded: usize,
}

/// Sizes, `k_on` and `v_dd` values whose Cartesian product forms a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub sizes: Vec<usize>,
    pub k_on: Vec<f64>,
    pub v_dd: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub size: usize,
    pub k_on: f64,
    pub v_dd: f64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            sizes: vec![4, 8, 16, 32, 64],
            k_on: vec![1e-9, 3e-8, 5e-8, 8e-8, 1e-7],
            v_dd: vec![1.0, 1.5, 2.0, 2.5, 3.0],
        }
    }
}

impl SweepGrid {
    /// Points ordered by size, then `k_on`, then `v_dd`.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.len());
        for &size in &self.sizes {
            for &k_on in &self.k_on {
                for &v_dd in &self.v_dd {
                    out.push(GridPoint { size, k_on, v_dd });
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.sizes.len() * self.k_on.len() * self.v_dd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Midpoints between consecutive grid values, paired along the diagonal
    /// so every holdout point moves all three parameters off the grid.
    pub fn midpoints(&self) -> Vec<GridPoint> {
        let mid = |v: &[f64], i: usize| 0.5 * (v[i] + v[i + 1]);
        let count = self.sizes.len().min(self.k_on.len()).min(self.v_dd.len()).saturating_sub(1);
        (0..count)
            .map(|i| GridPoint {
                size: (self.sizes[i] + self.sizes[i + 1]) / 2,
                k_on: mid(&self.k_on, i),
                v_dd: mid(&self.v_dd, i),
            })
            .collect()
    }
}

/// Evaluates `model` at each point, keyed by `base`. Runs on the current rayon pool.
pub fn generate_samples(
    model: &dyn SneakModel,
    base: &CrossbarSpec,
    points: &[GridPoint],
) -> Result<Vec<SweepSample>, Error> {
    let key = CoefficientKey::new(base.interconnect.metal, base.pattern.kind(), base.strategy);
    points
        .par_iter()
        .map(|p| {
            let spec = base.with_size(p.size)?;
            let spec = crate::metrics::Parameter::Kon.apply(&spec, p.k_on)?;
            let spec = crate::metrics::Parameter::Vdd.apply(&spec, p.v_dd)?;
            let i_sneak = model.sneak_current(&spec)?;
            Ok(SweepSample { size: p.size, k_on: p.k_on, v_dd: p.v_dd, i_sneak, key })
        })
        .collect()
}

fn distinct(mut values: Vec<f64>) -> usize {
    values.sort_by(f64::total_cmp);
    values.dedup();
    values.len()
}

pub fn fit_coefficients(samples: &[SweepSample]) -> Result<FitResult, FitError> {
    fit_with_options(samples, &FitOptions::default())
}

pub fn fit_with_options(samples: &[SweepSample], opts: &FitOptions) -> Result<FitResult, FitError> {
    if !(opts.ridge >= 0.0) || !opts.ridge.is_finite() {
        return Err(FitError::InvalidRidge(opts.ridge));
    }
    for s in samples {
        if s.size == 0 || !(s.k_on > 0.0) || !s.k_on.is_finite() || !s.v_dd.is_finite() {
            return Err(FitError::BadInput { size: s.size, k_on: s.k_on, v_dd: s.v_dd });
        }
    }
    let mut used: Vec<SweepSample> =
        samples.iter().copied().filter(|s| s.i_sneak > 0.0 && s.i_sneak.is_finite()).collect();
    let excluded = samples.len() - used.len();
    if excluded > 0 {
        log::warn!("excluded {excluded} sample(s) with non-positive or non-finite sneak current");
    }
    if used.len() < N_FEATURES {
        return Err(FitError::TooFewSamples { got: used.len(), needed: N_FEATURES });
    }
    let key = used[0].key;
    if let Some(other) = used.iter().find(|s| s.key != key) {
        return Err(FitError::MixedKeys(key, other.key));
    }
    for (parameter, values) in [
        ("size", used.iter().map(|s| s.size as f64).collect::<Vec<_>>()),
        ("k_on", used.iter().map(|s| s.k_on).collect()),
        ("v_dd", used.iter().map(|s| s.v_dd).collect()),
    ] {
        let d = distinct(values);
        if d < 3 {
            return Err(FitError::Degenerate { parameter, distinct: d });
        }
    }

    // Canonical order makes the result independent of input order.
    used.sort_by(|a, b| {
        a.size
            .cmp(&b.size)
            .then(a.k_on.total_cmp(&b.k_on))
            .then(a.v_dd.total_cmp(&b.v_dd))
            .then(a.i_sneak.total_cmp(&b.i_sneak))
    });

    let m = used.len();
    let extra = if opts.ridge > 0.0 { N_FEATURES } else { 0 };
    let mut x = DMatrix::<f64>::zeros(m + extra, N_FEATURES);
    let mut y = DVector::<f64>::zeros(m + extra);
    for (r, s) in used.iter().enumerate() {
        let f = feature_vector(s.size, s.k_on, s.v_dd).expect("inputs checked");
        for (c, v) in f.iter().enumerate() {
            x[(r, c)] = *v;
        }
        y[r] = s.i_sneak.ln();
    }
    let mut scale = [0.0; N_FEATURES];
    for (c, sc) in scale.iter_mut().enumerate() {
        *sc = x.column(c).rows(0, m).amax();
        if *sc == 0.0 {
            return Err(FitError::RankDeficient { ratio: 0.0 });
        }
        x.column_mut(c).scale_mut(1.0 / *sc);
    }
    if extra > 0 {
        let w = opts.ridge.sqrt();
        for c in 0..N_FEATURES {
            x[(m + c, c)] = w;
        }
    }

    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let ratio = smin / smax;
    if !(ratio > RANK_TOL) {
        return Err(FitError::RankDeficient { ratio });
    }
    let z = svd.solve(&y, 0.0).map_err(|_| FitError::RankDeficient { ratio })?;
    let mut c = [0.0; N_FEATURES];
    for j in 0..N_FEATURES {
        c[j] = z[j] / scale[j];
    }
    let coefficients = CoefficientSet { key, c };
    let residuals = residual_stats(&coefficients, &used);
    Ok(FitResult { coefficients, residuals, condition: (smax / smin).powi(2), samples_used: m, excluded })
}

fn relative_error(c: &CoefficientSet, s: &SweepSample) -> f64 {
    let f = feature_vector(s.size, s.k_on, s.v_dd).expect("inputs checked");
    (dot(&c.c, &f).exp() - s.i_sneak) / s.i_sneak
}

fn residual_stats(c: &CoefficientSet, samples: &[SweepSample]) -> ResidualStats {
    let mut max = 0.0f64;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for s in samples {
        let e = relative_error(c, s).abs();
        max = max.max(e);
        sum += e;
        sq += e * e;
    }
    let n = samples.len() as f64;
    ResidualStats { max, mean_abs: sum / n, rms: (sq / n).sqrt() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointError {
    pub size: usize,
    pub k_on: f64,
    pub v_dd: f64,
    pub simulated: f64,
    pub modeled: f64,
    /// `(modeled - simulated) / simulated * 100`.
    pub error_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub fit: FitResult,
    pub points: Vec<PointError>,
    pub max_abs_pct: f64,
    pub mean_abs_pct: f64,
}

/// Fits on `train` and reports the model error at every `holdout` point.
pub fn cross_validate(train: &[SweepSample], holdout: &[SweepSample]) -> Result<CrossValidation, FitError> {
    cross_validate_with(train, holdout, &FitOptions::default())
}

pub fn cross_validate_with(
    train: &[SweepSample],
    holdout: &[SweepSample],
    opts: &FitOptions,
) -> Result<CrossValidation, FitError> {
    if holdout.is_empty() {
        return Err(FitError::EmptyHoldout);
    }
    if let Some(h) = holdout.iter().find(|h| train.iter().any(|t| t.same_point(h))) {
        return Err(FitError::Overlap { size: h.size, k_on: h.k_on, v_dd: h.v_dd });
    }
    let fit = fit_with_options(train, opts)?;
    let mut points = Vec::with_capacity(holdout.len());
    for h in holdout {
        if !(h.i_sneak > 0.0) {
            log::warn!("skipping holdout point with non-positive sneak current {:e}", h.i_sneak);
            continue;
        }
        let f = feature_vector(h.size, h.k_on, h.v_dd).map_err(|_| FitError::BadInput {
            size: h.size,
            k_on: h.k_on,
            v_dd: h.v_dd,
        })?;
        let modeled = dot(&fit.coefficients.c, &f).exp();
        let error_pct = (modeled - h.i_sneak) / h.i_sneak * 100.0;
        points.push(PointError { size: h.size, k_on: h.k_on, v_dd: h.v_dd, simulated: h.i_sneak, modeled, error_pct });
    }
    if points.is_empty() {
        return Err(FitError::EmptyHoldout);
    }
    let max_abs_pct = points.iter().map(|p| p.error_pct.abs()).fold(0.0, f64::max);
    let mean_abs_pct = points.iter().map(|p| p.error_pct.abs()).sum::<f64>() / points.len() as f64;
    Ok(CrossValidation { fit, points, max_abs_pct, mean_abs_pct })
}
