//! Run configuration: one TOML document with `device`, `array`, `sweep`,
//! `solver` and `output` sections. Every field has a default.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closed_form::BOUNDS;
use crate::device::{DeviceParams, DEFAULT_ALPHA, DEFAULT_K_OFF};
use crate::fitting::SweepGrid;
use crate::solver::SolveOptions;
use crate::topology::{MeasurementMode, Metal, PatternKind, Strategy, DEFAULT_R_GROUND, MAX_ARRAY_SIZE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    Simulator,
    ClosedForm,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Simulator => "simulator",
            BackendKind::ClosedForm => "closed-form",
        })
    }
}

impl FromStr for BackendKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "simulator" | "sim" => Ok(BackendKind::Simulator),
            "closed-form" | "closedform" | "model" => Ok(BackendKind::ClosedForm),
            _ => Err(ConfigError::Invalid(format!("unknown backend `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub k_off: f64,
    pub alpha: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        Self { k_off: DEFAULT_K_OFF, alpha: DEFAULT_ALPHA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub metals: Vec<Metal>,
    pub patterns: Vec<PatternKind>,
    pub strategies: Vec<Strategy>,
    pub r_ground: f64,
    pub r_load: f64,
    pub measurement_mode: MeasurementMode,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            metals: vec![Metal::M3],
            patterns: vec![PatternKind::AllOnes],
            strategies: vec![Strategy::Frc],
            r_ground: DEFAULT_R_GROUND,
            r_load: DEFAULT_R_GROUND,
            measurement_mode: MeasurementMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub sizes: Vec<usize>,
    pub k_on: Vec<f64>,
    pub v_dd: Vec<f64>,
    /// Also compute array and normalized margins (simulator only).
    pub margins: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        let g = SweepGrid::default();
        Self { sizes: g.sizes, k_on: g.k_on, v_dd: g.v_dd, margins: false }
    }
}

impl SweepSection {
    pub fn grid(&self) -> SweepGrid {
        SweepGrid { sizes: self.sizes.clone(), k_on: self.k_on.clone(), v_dd: self.v_dd.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub gmin: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolveOptions::default();
        Self { abs_tol: o.abs_tol, rel_tol: o.rel_tol, max_iter: o.max_iter, gmin: o.gmin }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Sweep dataset CSV; stdout when absent.
    pub dataset: Option<PathBuf>,
    /// Coefficient file for the closed-form backend; built-in tables when absent.
    pub coefficients: Option<PathBuf>,
    /// Fill `runtime_s` with wall time. Off gives byte-identical datasets.
    pub timing: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dataset: None, coefficients: None, timing: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendKind,
    /// Worker threads for sweeps; 0 uses every logical core.
    pub workers: usize,
    pub device: DeviceSection,
    pub array: ArraySection,
    pub sweep: SweepSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            abs_tol: self.solver.abs_tol,
            rel_tol: self.solver.rel_tol,
            max_iter: self.solver.max_iter,
            gmin: self.solver.gmin,
            ..SolveOptions::default()
        }
    }

    /// Device with the given `k_on` and this config's OFF state.
    pub fn device(&self, k_on: f64) -> Result<DeviceParams, ConfigError> {
        DeviceParams::new(k_on, self.device.k_off, self.device.alpha).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Hard errors for unusable values; warnings for values outside the
    /// characterized ranges.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let a = &self.array;
        let s = &self.sweep;
        for (name, empty) in [
            ("array.metals", a.metals.is_empty()),
            ("array.patterns", a.patterns.is_empty()),
            ("array.strategies", a.strategies.is_empty()),
            ("sweep.sizes", s.sizes.is_empty()),
            ("sweep.k_on", s.k_on.is_empty()),
            ("sweep.v_dd", s.v_dd.is_empty()),
        ] {
            if empty {
                return invalid(format!("{name} must not be empty"));
            }
        }
        if a.patterns.contains(&PatternKind::Custom) {
            return invalid("sweeps support only all-ones and all-zeros patterns".into());
        }
        if let Some(&n) = s.sizes.iter().find(|&&n| n == 0 || n > MAX_ARRAY_SIZE) {
            return invalid(format!("size {n} outside 1..={MAX_ARRAY_SIZE}"));
        }
        for &k in &s.k_on {
            self.device(k)?;
        }
        if let Some(v) = s.v_dd.iter().find(|v| !v.is_finite()) {
            return invalid(format!("v_dd {v} is not finite"));
        }
        if !(a.r_ground > 0.0) || !a.r_ground.is_finite() {
            return invalid(format!("array.r_ground must be positive, got {}", a.r_ground));
        }
        if !(a.r_load >= 0.0) || !a.r_load.is_finite() {
            return invalid(format!("array.r_load must be non-negative, got {}", a.r_load));
        }
        let o = &self.solver;
        if !(o.abs_tol > 0.0 && o.rel_tol > 0.0 && o.max_iter > 0 && o.gmin >= 0.0) {
            return invalid("solver tolerances and max_iter must be positive, gmin non-negative".into());
        }
        for &n in &s.sizes {
            if n < BOUNDS.size.0 || n > BOUNDS.size.1 {
                log::warn!("size {n} outside the characterized range {}..={}", BOUNDS.size.0, BOUNDS.size.1);
            }
        }
        for &k in &s.k_on {
            if !BOUNDS.violations(BOUNDS.size.0, k, BOUNDS.v_dd.0).is_empty() {
                log::warn!("k_on {k:e} outside the characterized range {:e}..{:e}", BOUNDS.k_on.0, BOUNDS.k_on.1);
            }
        }
        for &v in &s.v_dd {
            if !BOUNDS.violations(BOUNDS.size.0, BOUNDS.k_on.0, v).is_empty() {
                log::warn!("v_dd {v} outside the characterized range {}..{}", BOUNDS.v_dd.0, BOUNDS.v_dd.1);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.sweep.grid().len(), 125);
        c.validate().unwrap();
    }

    #[test]
    fn sections_parse() {
        let text = r#"
backend = "closed-form"
workers = 2

[device]
k_off = 2e-10

[array]
metals = ["M5", "M6"]
patterns = ["all-zeros"]
strategies = ["GRC"]
measurement_mode = "supply-minus-target"

[sweep]
sizes = [8]
k_on = [3e-8]
v_dd = [1.5]
margins = true
"#;
        let c = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(c.backend, BackendKind::ClosedForm);
        assert_eq!(c.array.metals, vec![Metal::M5, Metal::M6]);
        assert_eq!(c.array.strategies, vec![Strategy::Grc]);
        assert_eq!(c.array.measurement_mode, MeasurementMode::SupplyMinusTarget);
        assert_eq!(c.device.k_off, 2e-10);
        assert!(c.sweep.margins);
        c.validate().unwrap();
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn bad_documents() {
        assert!(matches!(RunConfig::from_toml_str("bogus = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::from_toml_str("[sweep]\nsizes = \"x\""), Err(ConfigError::Parse(_))));
        let mut c = RunConfig::default();
        c.sweep.sizes = vec![];
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
        c = RunConfig::default();
        c.sweep.k_on = vec![1e-11];
        assert!(c.validate().is_err());
        c = RunConfig::default();
        c.sweep.sizes = vec![500];
        assert!(c.validate().is_err());
    }

    #[test]
    fn out_of_range_values_only_warn() {
        let mut c = RunConfig::default();
        c.sweep.sizes = vec![2, 100];
        c.sweep.v_dd = vec![0.5, 4.0];
        c.sweep.k_on = vec![5e-7];
        c.validate().unwrap();
    }
}
