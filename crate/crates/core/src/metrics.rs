//! Sneak current, noise margins and parameter sensitivities.
//!
//! The noise margin of a read is the separation of the sensed voltage between
//! the target in LRS and in HRS, `V_one - V_zero`, over a fixed background. It
//! is normalized by the margin of an isolated device driving the same load.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::closed_form::BOUNDS;
use crate::device::{current_unchecked, DeviceParams};
use crate::solver::{solve_dc, SolveOptions, SolveResult};
use crate::topology::{build_crossbar, CellStateMatrix, CrossbarSpec, MeasurementMode, Netlist, TargetState};
use crate::Error;

/// Negative sneak currents down to this value are treated as numerical noise.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("r_load must be positive, got {0}")]
    InvalidLoad(f64),
    #[error("device noise margin is zero, normalized margin undefined")]
    ZeroDeviceMargin,
    #[error("baseline metric is zero")]
    ZeroBaseline,
    #[error("grid is empty")]
    EmptyGrid,
    #[error("grid does not contain the base value {0}")]
    BaseNotInGrid(f64),
    #[error("netlist has no `{0}` probe")]
    MissingProbe(&'static str),
    #[error("background pattern is {got}x{got}, array is {expected}x{expected}")]
    BackgroundSize { expected: usize, got: usize },
    #[error("invalid value {value} for {parameter}")]
    InvalidValue { parameter: Parameter, value: f64 },
}

/// Sneak current of a solved netlist under `mode`.
pub fn measure_sneak(net: &Netlist, result: &SolveResult, mode: MeasurementMode) -> Result<f64, Error> {
    let probes = &net.probes;
    let target = || probes.target.ok_or(MetricsError::MissingProbe("target"));
    let raw = match mode {
        MeasurementMode::HalfSelectedMean => {
            let cells = &probes.half_selected_row;
            if cells.is_empty() {
                0.0
            } else {
                let mut sum = 0.0;
                for &b in cells {
                    sum += result.branch_current(b)?;
                }
                sum / cells.len() as f64
            }
        }
        MeasurementMode::SupplyMinusTarget => {
            let source = probes.source.ok_or(MetricsError::MissingProbe("source"))?;
            result.branch_current(source)? - result.branch_current(target()?)?
        }
        MeasurementMode::SenseMinusTarget => {
            let load = probes.load.ok_or(MetricsError::MissingProbe("load"))?;
            result.branch_current(load)? - result.branch_current(target()?)?
        }
    };
    if raw < 0.0 {
        if raw >= -CLAMP_TOL {
            return Ok(0.0);
        }
        log::warn!("negative sneak current {raw:.3e} A");
    }
    Ok(raw)
}

/// Load and background used for margin sensing.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginConfig {
    pub r_load: f64,
    /// Cell states of the array; the target entry is overridden per solve.
    pub background: CellStateMatrix,
}

impl MarginConfig {
    /// Spec's own pattern with the geometric-mean load.
    pub fn for_spec(spec: &CrossbarSpec) -> Self {
        Self { r_load: default_margin_load(&spec.device, spec.v_dd), background: spec.pattern.clone() }
    }

    fn validate(&self, n: usize) -> Result<(), MetricsError> {
        if !(self.r_load > 0.0) {
            return Err(MetricsError::InvalidLoad(self.r_load));
        }
        if self.background.n() != n {
            return Err(MetricsError::BackgroundSize { expected: n, got: self.background.n() });
        }
        Ok(())
    }
}

/// `sqrt(R_on R_off)` with both chord resistances taken at `v_dd / 2`.
pub fn default_margin_load(device: &DeviceParams, v_dd: f64) -> f64 {
    let v = (v_dd / 2.0).abs();
    let chord = |k: f64| {
        if v == 0.0 {
            1.0 / (k * device.alpha)
        } else {
            v / current_unchecked(k, device.alpha, v)
        }
    };
    (chord(device.k_on) * chord(device.k_off)).sqrt()
}

/// Sensed voltages of one array margin evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArrayMargin {
    pub v_one: f64,
    pub v_zero: f64,
    pub margin: f64,
}

/// Circuit-level backend: every evaluation is a DC solve.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Simulator {
    pub options: SolveOptions,
}

impl Simulator {
    pub fn new(options: SolveOptions) -> Self {
        Self { options }
    }

    pub fn solve(&self, spec: &CrossbarSpec, target: TargetState) -> Result<(Netlist, SolveResult), Error> {
        spec.validate()?;
        let net = build_crossbar(spec, target)?;
        let result = solve_dc(&net, &self.options)?;
        Ok((net, result))
    }

    pub fn sneak_current(&self, spec: &CrossbarSpec) -> Result<f64, Error> {
        let (net, result) = self.solve(spec, TargetState::FromPattern)?;
        measure_sneak(&net, &result, spec.measurement_mode)
    }

    pub fn array_margin(&self, spec: &CrossbarSpec, cfg: &MarginConfig) -> Result<ArrayMargin, Error> {
        cfg.validate(spec.n())?;
        let mut spec = spec.clone();
        spec.pattern = cfg.background.clone();
        spec.r_load = cfg.r_load;
        let sense = |state| -> Result<f64, Error> {
            let (net, result) = self.solve(&spec, state)?;
            let node = net.probes.sense.ok_or(MetricsError::MissingProbe("sense"))?;
            Ok(result.voltage(node))
        };
        let (one, zero) = rayon::join(|| sense(TargetState::Lrs), || sense(TargetState::Hrs));
        let (v_one, v_zero) = (one?, zero?);
        let margin = v_one - v_zero;
        if margin < -1e-12 * spec.v_dd.abs().max(1.0) {
            log::warn!("negative noise margin {margin:.3e} V; check array wiring");
        }
        Ok(ArrayMargin { v_one, v_zero, margin })
    }

    pub fn normalized_margin(&self, spec: &CrossbarSpec, cfg: &MarginConfig) -> Result<f64, Error> {
        let array = self.array_margin(spec, cfg)?.margin;
        let device = noise_margin_device(&spec.device, spec.v_dd, cfg.r_load)?;
        if device == 0.0 {
            return Err(MetricsError::ZeroDeviceMargin.into());
        }
        Ok(array / device)
    }
}

pub fn sneak_current(spec: &CrossbarSpec) -> Result<f64, Error> {
    Simulator::default().sneak_current(spec)
}

pub fn noise_margin_array(spec: &CrossbarSpec, cfg: &MarginConfig) -> Result<f64, Error> {
    Ok(Simulator::default().array_margin(spec, cfg)?.margin)
}

pub fn normalized_margin(spec: &CrossbarSpec, cfg: &MarginConfig) -> Result<f64, Error> {
    Simulator::default().normalized_margin(spec, cfg)
}

/// Voltage across `r_load` when one device of amplitude `k` drives it from `v_dd`.
pub fn divider_voltage(k: f64, alpha: f64, v_dd: f64, r_load: f64) -> Result<f64, MetricsError> {
    if !(r_load > 0.0) {
        return Err(MetricsError::InvalidLoad(r_load));
    }
    if v_dd < 0.0 {
        return divider_voltage(k, alpha, -v_dd, r_load).map(|v| -v);
    }
    // g is strictly decreasing with g(0) >= 0 >= g(v_dd).
    let g = |v: f64| current_unchecked(k, alpha, v_dd - v) - v / r_load;
    let dg = |v: f64| -k * alpha * (alpha * (v_dd - v)).cosh() - 1.0 / r_load;
    let (mut lo, mut hi) = (0.0, v_dd);
    let mut v = 0.5 * v_dd;
    for _ in 0..200 {
        let gv = g(v);
        if gv == 0.0 {
            return Ok(v);
        }
        if gv > 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        if hi - lo <= 1e-15 * v_dd.max(1e-300) {
            break;
        }
        let newton = v - gv / dg(v);
        v = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (hi - lo) < 4.0 * f64::EPSILON * v_dd {
            break;
        }
    }
    Ok(v)
}

/// `v_s(k_on) - v_s(k_off)` for an isolated device and load.
pub fn noise_margin_device(device: &DeviceParams, v_dd: f64, r_load: f64) -> Result<f64, MetricsError> {
    let on = divider_voltage(device.k_on, device.alpha, v_dd, r_load)?;
    let off = divider_voltage(device.k_off, device.alpha, v_dd, r_load)?;
    Ok(on - off)
}

/// `(metric_64 - metric_4) / metric_4`.
pub fn sensitivity_size(metric_4: f64, metric_64: f64) -> Result<f64, MetricsError> {
    if metric_4 == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok((metric_64 - metric_4) / metric_4)
}

/// Anything that predicts the sneak current of a crossbar spec.
pub trait SneakModel: Sync {
    fn name(&self) -> &str;

    fn sneak_current(&self, spec: &CrossbarSpec) -> Result<f64, Error>;

    /// Normalized noise margin, or `None` if the backend has no margin model.
    fn normalized_margin(&self, _spec: &CrossbarSpec) -> Result<Option<f64>, Error> {
        Ok(None)
    }
}

impl SneakModel for Simulator {
    fn name(&self) -> &str {
        "simulator"
    }

    fn sneak_current(&self, spec: &CrossbarSpec) -> Result<f64, Error> {
        Simulator::sneak_current(self, spec)
    }

    fn normalized_margin(&self, spec: &CrossbarSpec) -> Result<Option<f64>, Error> {
        Simulator::normalized_margin(self, spec, &MarginConfig::for_spec(spec)).map(Some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parameter {
    Vdd,
    Kon,
    Size,
}

impl Parameter {
    pub const ALL: [Parameter; 3] = [Parameter::Vdd, Parameter::Kon, Parameter::Size];

    /// Low and high end of the characterized range.
    pub fn range(self) -> (f64, f64) {
        match self {
            Parameter::Vdd => BOUNDS.v_dd,
            Parameter::Kon => BOUNDS.k_on,
            Parameter::Size => (BOUNDS.size.0 as f64, BOUNDS.size.1 as f64),
        }
    }

    /// Relative change of the input between the range ends. Size counts cells.
    pub fn input_factor(self) -> f64 {
        let (lo, hi) = self.range();
        match self {
            Parameter::Size => (hi * hi - lo * lo) / (lo * lo),
            _ => (hi - lo) / lo,
        }
    }

    pub fn get(self, spec: &CrossbarSpec) -> f64 {
        match self {
            Parameter::Vdd => spec.v_dd,
            Parameter::Kon => spec.device.k_on,
            Parameter::Size => spec.n() as f64,
        }
    }

    /// Copy of `spec` with this parameter set to `value`.
    pub fn apply(self, spec: &CrossbarSpec, value: f64) -> Result<CrossbarSpec, Error> {
        let invalid = MetricsError::InvalidValue { parameter: self, value };
        match self {
            Parameter::Vdd => {
                if !value.is_finite() {
                    return Err(invalid.into());
                }
                let mut out = spec.clone();
                out.v_dd = value;
                Ok(out)
            }
            Parameter::Kon => {
                let mut out = spec.clone();
                out.device = DeviceParams::new(value, spec.device.k_off, spec.device.alpha)?;
                Ok(out)
            }
            Parameter::Size => {
                if !(value >= 1.0) || value.fract() != 0.0 {
                    return Err(invalid.into());
                }
                Ok(spec.with_size(value as usize)?)
            }
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parameter::Vdd => "v_dd",
            Parameter::Kon => "k_on",
            Parameter::Size => "size",
        })
    }
}

impl FromStr for Parameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "").as_str() {
            "vdd" => Ok(Parameter::Vdd),
            "kon" => Ok(Parameter::Kon),
            "size" | "n" => Ok(Parameter::Size),
            _ => Err(format!("unknown parameter `{s}` (expected vdd, kon or size)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub value: f64,
    pub current_change_pct: f64,
    /// Change of the normalized margin; `None` for backends without margins.
    pub margin_change_pct: Option<f64>,
}

fn percent_change(x: f64, base: f64) -> f64 {
    if x == base {
        0.0
    } else {
        (x - base) / base * 100.0
    }
}

/// Percent change of sneak current and normalized margin as `param` moves
/// over `grid`, relative to the value in `base`.
pub fn relative_change_surface(
    model: &dyn SneakModel,
    base: &CrossbarSpec,
    param: Parameter,
    grid: &[f64],
) -> Result<Vec<SurfacePoint>, Error> {
    if grid.is_empty() {
        return Err(MetricsError::EmptyGrid.into());
    }
    let base_value = param.get(base);
    if !grid.iter().any(|&g| (g - base_value).abs() <= 1e-12 * base_value.abs()) {
        return Err(MetricsError::BaseNotInGrid(base_value).into());
    }
    let i0 = model.sneak_current(base)?;
    let m0 = model.normalized_margin(base)?;
    let mut out = Vec::with_capacity(grid.len());
    for &value in grid {
        let spec = param.apply(base, value)?;
        let i = model.sneak_current(&spec)?;
        let m = match m0 {
            Some(m0) => model.normalized_margin(&spec)?.map(|m| percent_change(m, m0)),
            None => None,
        };
        out.push(SurfacePoint { value, current_change_pct: percent_change(i, i0), margin_change_pct: m });
    }
    Ok(out)
}

/// Response of one output to moving one parameter across its range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactorSensitivity {
    pub parameter: Parameter,
    /// Relative change of the input (2, 99 and 255 for the default ranges).
    pub input_factor: f64,
    /// Relative change of the output.
    pub relative_change: f64,
    /// `relative_change / input_factor`; the ranking key.
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    /// Size-to-current sensitivity.
    pub z_i: f64,
    /// Size-to-margin sensitivity, when the backend models margins.
    pub z_n: Option<f64>,
    /// Sorted by descending `|sensitivity|`.
    pub current_rankings: Vec<FactorSensitivity>,
    pub margin_rankings: Option<Vec<FactorSensitivity>>,
}

impl SensitivityReport {
    pub fn current_order(&self) -> Vec<Parameter> {
        self.current_rankings.iter().map(|f| f.parameter).collect()
    }
}

fn rank(base: f64, highs: &[(Parameter, f64)]) -> Result<Vec<FactorSensitivity>, MetricsError> {
    let mut out = Vec::with_capacity(highs.len());
    for &(parameter, high) in highs {
        let relative_change = if high == base { 0.0 } else { sensitivity_size(base, high)? };
        let input_factor = parameter.input_factor();
        out.push(FactorSensitivity {
            parameter,
            input_factor,
            relative_change,
            sensitivity: relative_change / input_factor,
        });
    }
    // Stable: ties keep the v_dd, k_on, size order.
    out.sort_by(|a, b| b.sensitivity.abs().total_cmp(&a.sensitivity.abs()));
    Ok(out)
}

/// Moves each parameter from the low to the high end of its range with the
/// others held at their low ends, and ranks the parameters by output change
/// per unit of relative input change.
pub fn sensitivity_ranking(model: &dyn SneakModel, spec: &CrossbarSpec) -> Result<SensitivityReport, Error> {
    let mut low = spec.clone();
    for p in Parameter::ALL {
        low = p.apply(&low, p.range().0)?;
    }
    let i_low = model.sneak_current(&low)?;
    let m_low = model.normalized_margin(&low)?;
    let mut currents = Vec::new();
    let mut margins = Vec::new();
    for p in Parameter::ALL {
        let high = p.apply(&low, p.range().1)?;
        currents.push((p, model.sneak_current(&high)?));
        if m_low.is_some() {
            if let Some(m) = model.normalized_margin(&high)? {
                margins.push((p, m));
            }
        }
    }
    let size_high = |list: &[(Parameter, f64)]| list.iter().find(|(p, _)| *p == Parameter::Size).map(|&(_, v)| v);
    let z_i = if i_low == size_high(&currents).unwrap_or(i_low) {
        0.0
    } else {
        sensitivity_size(i_low, size_high(&currents).unwrap_or(i_low))?
    };
    let (z_n, margin_rankings) = match m_low {
        Some(m) if margins.len() == Parameter::ALL.len() => {
            let m64 = size_high(&margins).unwrap_or(m);
            let z = if m64 == m { 0.0 } else { sensitivity_size(m, m64)? };
            (Some(z), Some(rank(m, &margins)?))
        }
        _ => (None, None),
    };
    Ok(SensitivityReport { z_i, z_n, current_rankings: rank(i_low, &currents)?, margin_rankings })
}
