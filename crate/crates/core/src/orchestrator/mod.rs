//! Sweeps, validation tables and runtime benchmarks over both backends.

mod bench;
mod config;
mod dataset;
mod validation;

use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use bench::{bench_specs, benchmark_models, benchmark_runtime, BenchReport, MIN_REPETITIONS};
pub use config::{
    ArraySection, BackendKind, ConfigError, DeviceSection, OutputSection, RunConfig, SolverSection, SweepSection,
};
pub use dataset::{format_sig9, read_dataset, write_dataset, DatasetRow, HEADER};
pub use validation::{
    gate_failures, published_points, published_table, validate, PublishedRow, Reference, ValidationRow,
    PUBLISHED_GATE_PCT,
};

use crate::closed_form::CoefficientStore;
use crate::metrics::{MarginConfig, Simulator, SneakModel};
use crate::topology::{CrossbarSpec, Metal, PatternKind, Strategy};
use crate::Error;

/// A concrete backend selected at run time.
#[derive(Debug, Clone)]
pub enum Backend {
    Simulator(Simulator),
    ClosedForm(CoefficientStore),
}

impl Backend {
    pub fn from_config(config: &RunConfig) -> Result<Self, Error> {
        Ok(match config.backend {
            BackendKind::Simulator => Backend::Simulator(Simulator::new(config.solve_options())),
            BackendKind::ClosedForm => Backend::ClosedForm(match &config.output.coefficients {
                Some(path) => CoefficientStore::load(path)?,
                None => CoefficientStore::builtin(),
            }),
        })
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Simulator(_) => BackendKind::Simulator,
            Backend::ClosedForm(_) => BackendKind::ClosedForm,
        }
    }
}

impl SneakModel for Backend {
    fn name(&self) -> &str {
        match self {
            Backend::Simulator(s) => s.name(),
            Backend::ClosedForm(c) => c.name(),
        }
    }

    fn sneak_current(&self, spec: &CrossbarSpec) -> Result<f64, Error> {
        match self {
            Backend::Simulator(s) => s.sneak_current(spec),
            Backend::ClosedForm(c) => c.sneak_current(spec),
        }
    }

    fn normalized_margin(&self, spec: &CrossbarSpec) -> Result<Option<f64>, Error> {
        match self {
            Backend::Simulator(s) => SneakModel::normalized_margin(s, spec),
            Backend::ClosedForm(c) => c.normalized_margin(spec),
        }
    }
}

/// One sweep point before evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub metal: Metal,
    pub pattern: PatternKind,
    pub strategy: Strategy,
    pub size: usize,
    pub k_on: f64,
    pub v_dd: f64,
}

/// Grid points ordered by metal, pattern, strategy, size, `k_on`, `v_dd`.
pub fn sweep_points(config: &RunConfig) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &metal in &config.array.metals {
        for &pattern in &config.array.patterns {
            for &strategy in &config.array.strategies {
                for p in config.sweep.grid().points() {
                    out.push(SweepPoint { metal, pattern, strategy, size: p.size, k_on: p.k_on, v_dd: p.v_dd });
                }
            }
        }
    }
    out
}

pub fn point_spec(config: &RunConfig, p: &SweepPoint) -> Result<CrossbarSpec, Error> {
    let pattern = crate::topology::make_pattern(p.pattern, p.size, None)?;
    let mut spec = CrossbarSpec::new(pattern, config.device(p.k_on)?, p.metal, p.strategy, p.v_dd);
    spec.r_ground = config.array.r_ground;
    spec.r_load = config.array.r_load;
    spec.measurement_mode = config.array.measurement_mode;
    Ok(spec)
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("cannot start worker pool: {e}")).into())
}

fn evaluate_point(config: &RunConfig, backend: &Backend, p: &SweepPoint) -> DatasetRow {
    let mut row = DatasetRow {
        metal: p.metal,
        pattern: p.pattern,
        strategy: p.strategy,
        size: p.size,
        k_on: p.k_on,
        v_dd: p.v_dd,
        r_line: p.metal.interconnect().r_line,
        backend: backend.kind(),
        i_sneak: None,
        margin: None,
        normalized_margin: None,
        error_pct: None,
        runtime_s: 0.0,
        converged: false,
    };
    let spec = match point_spec(config, p) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("sweep point {p:?} rejected: {e}");
            return row;
        }
    };
    let start = Instant::now();
    let outcome = (|| -> Result<(), Error> {
        row.i_sneak = Some(backend.sneak_current(&spec)?);
        if config.sweep.margins {
            if let Backend::Simulator(sim) = backend {
                let cfg = MarginConfig::for_spec(&spec);
                let m = sim.array_margin(&spec, &cfg)?.margin;
                let d = crate::metrics::noise_margin_device(&spec.device, spec.v_dd, cfg.r_load)?;
                row.margin = Some(m);
                row.normalized_margin = if d > 0.0 { Some(m / d) } else { None };
            }
        }
        Ok(())
    })();
    if config.output.timing {
        row.runtime_s = start.elapsed().as_secs_f64();
    }
    match outcome {
        Ok(()) => row.converged = true,
        Err(e) => {
            log::warn!("sweep point {p:?} failed: {e}");
            row.i_sneak = None;
            row.margin = None;
            row.normalized_margin = None;
        }
    }
    row
}

/// Evaluates every grid point on a bounded pool. Failed points stay in the
/// output with `converged = false`; row order is grid order.
pub fn run_sweep(config: &RunConfig) -> Result<Vec<DatasetRow>, Error> {
    config.validate()?;
    let backend = Backend::from_config(config)?;
    let points = sweep_points(config);
    let pool = thread_pool(config.workers)?;
    Ok(pool.install(|| points.par_iter().map(|p| evaluate_point(config, &backend, p)).collect()))
}

/// Mean wall time of one call, repeating `f` until at least `min_total` has elapsed.
pub(crate) fn time_per_call<T>(min_total: Duration, mut f: impl FnMut() -> T) -> f64 {
    let start = Instant::now();
    let mut calls = 0u64;
    loop {
        std::hint::black_box(f());
        calls += 1;
        let elapsed = start.elapsed();
        if elapsed >= min_total || calls >= 10_000_000 {
            return elapsed.as_secs_f64() / calls as f64;
        }
    }
}
