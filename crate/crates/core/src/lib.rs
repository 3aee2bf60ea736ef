//! Sneak-path analysis of passive memristor crossbar arrays.
//!
//! The crate couples a nonlinear DC simulator for `n x n` sinh-law crossbars
//! (with per-cell line resistance and four termination strategies) to an
//! exponential-of-quadratic surrogate for the sneak current, together with
//! noise-margin and sensitivity metrics and a sweep/validation harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod device;
pub mod fitting;
pub mod metrics;
pub mod orchestrator;
pub mod solver;
pub mod topology;

use thiserror::Error;

pub use closed_form::{
    eval_closed_form, feature_vector, ClosedFormError, CoefficientKey, CoefficientSet, CoefficientStore,
};
pub use device::{device_conductance, device_current, DeviceError, DeviceParams};
pub use fitting::{cross_validate, fit_coefficients, FitError, FitOptions, FitResult, SweepSample};
pub use metrics::{
    noise_margin_array, noise_margin_device, normalized_margin, relative_change_surface, sensitivity_ranking,
    sensitivity_size, sneak_current, MarginConfig, MetricsError, Parameter, SensitivityReport, Simulator, SneakModel,
};
pub use solver::{branch_current, solve_dc, Continuation, Damping, SolveError, SolveOptions, SolveResult};
pub use topology::{
    build_crossbar, make_pattern, BranchId, BranchKind, CellState, CellStateMatrix, CrossbarSpec, InterconnectSpec,
    MeasurementMode, Metal, Netlist, NodeId, PatternKind, Strategy, TargetState, TopologyError,
};

/// Any failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Config(#[from] orchestrator::ConfigError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
