//! Nonlinear memristor I-V law.
//!
//! A cell is a memoryless two-terminal element conducting `I = K sinh(alpha V)`.
//! `K` plays the role of a conductance and selects the stored state: `k_on` for
//! the low-resistance state (logic one) and `k_off` for the high-resistance state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest `|alpha * v|` passed to `sinh`/`cosh`; beyond ~710 doubles overflow.
pub const MAX_EXPONENT: f64 = 700.0;

pub const DEFAULT_ALPHA: f64 = 3.0;
pub const DEFAULT_K_OFF: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("non-finite device input ({name} = {value})")]
    NonFinite { name: &'static str, value: f64 },
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
}

/// Sinh-law device parameters shared by every cell of an array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Amplitude in the ON (LRS) state, amperes.
    pub k_on: f64,
    /// Amplitude in the OFF (HRS) state, amperes.
    pub k_off: f64,
    /// Nonlinearity, 1/V.
    pub alpha: f64,
}

impl DeviceParams {
    /// Checked constructor. `k_on == k_off` is accepted so that degenerate
    /// margin cases can be expressed.
    pub fn new(k_on: f64, k_off: f64, alpha: f64) -> Result<Self, DeviceError> {
        let params = Self { k_on, k_off, alpha };
        params.validate()?;
        Ok(params)
    }

    /// ON amplitude `k_on` with the default OFF amplitude and nonlinearity.
    pub fn with_k_on(k_on: f64) -> Result<Self, DeviceError> {
        Self::new(k_on, DEFAULT_K_OFF, DEFAULT_ALPHA)
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        for (name, value) in [("k_on", self.k_on), ("k_off", self.k_off), ("alpha", self.alpha)] {
            if !value.is_finite() {
                return Err(DeviceError::NonFinite { name, value });
            }
        }
        if self.k_off <= 0.0 || self.alpha <= 0.0 {
            return Err(DeviceError::InvalidParams(format!(
                "k_off and alpha must be positive (k_off = {}, alpha = {})",
                self.k_off, self.alpha
            )));
        }
        if self.k_on < self.k_off {
            return Err(DeviceError::InvalidParams(format!(
                "k_on ({}) must not be below k_off ({})",
                self.k_on, self.k_off
            )));
        }
        Ok(())
    }

    pub fn current(&self, on: bool, v: f64) -> f64 {
        current_unchecked(if on { self.k_on } else { self.k_off }, self.alpha, v)
    }
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self { k_on: 1e-7, k_off: DEFAULT_K_OFF, alpha: DEFAULT_ALPHA }
    }
}

fn check(k: f64, alpha: f64, v: f64) -> Result<(), DeviceError> {
    for (name, value) in [("k", k), ("alpha", alpha), ("v", v)] {
        if !value.is_finite() {
            return Err(DeviceError::NonFinite { name, value });
        }
    }
    Ok(())
}

/// `k * sinh(alpha * v)`.
pub fn device_current(k: f64, alpha: f64, v: f64) -> Result<f64, DeviceError> {
    check(k, alpha, v)?;
    Ok(current_unchecked(k, alpha, v))
}

/// Small-signal conductance `dI/dV = k * alpha * cosh(alpha * v)`.
pub fn device_conductance(k: f64, alpha: f64, v: f64) -> Result<f64, DeviceError> {
    check(k, alpha, v)?;
    Ok(conductance_unchecked(k, alpha, v))
}

#[inline]
fn clamp_exponent(x: f64) -> f64 {
    if x.abs() > MAX_EXPONENT {
        log::warn!("device exponent {x:.3e} saturated at +/-{MAX_EXPONENT}");
        x.clamp(-MAX_EXPONENT, MAX_EXPONENT)
    } else {
        x
    }
}

#[inline]
pub(crate) fn current_unchecked(k: f64, alpha: f64, v: f64) -> f64 {
    k * clamp_exponent(alpha * v).sinh()
}

#[inline]
pub(crate) fn conductance_unchecked(k: f64, alpha: f64, v: f64) -> f64 {
    k * alpha * clamp_exponent(alpha * v).cosh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_bias_current_is_zero() {
        assert_eq!(device_current(1e-10, 3.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn current_at_one_and_a_half_volts() {
        // sinh(4.5) = 45.00301115...
        let i = device_current(3e-8, 3.0, 1.5).unwrap();
        assert_relative_eq!(i, 3e-8 * 45.003_011_151_991_6, max_relative = 1e-12);
        assert_relative_eq!(i, 1.3501e-6, max_relative = 1e-4);
    }

    #[test]
    fn conductance_values() {
        assert_relative_eq!(device_conductance(1e-10, 3.0, 0.0).unwrap(), 3e-10, max_relative = 1e-15);
        // cosh(4.5) = 45.01412014...
        let g = device_conductance(3e-8, 3.0, 1.5).unwrap();
        assert_relative_eq!(g, 9e-8 * 45.014_120_148_530_1, max_relative = 1e-12);
        assert_relative_eq!(g, 4.0512e-6, max_relative = 1e-4);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        assert!(matches!(device_current(f64::NAN, 3.0, 1.0), Err(DeviceError::NonFinite { name: "k", .. })));
        assert!(device_current(1e-9, 3.0, f64::INFINITY).is_err());
        assert!(device_conductance(1e-9, f64::NEG_INFINITY, 0.1).is_err());
    }

    #[test]
    fn huge_bias_saturates_instead_of_overflowing() {
        let i = device_current(1e-10, 3.0, 1e4).unwrap();
        assert!(i.is_finite());
        assert_eq!(i, 1e-10 * MAX_EXPONENT.sinh());
    }

    #[test]
    fn params_validation() {
        assert!(DeviceParams::new(1e-7, 1e-10, 3.0).is_ok());
        assert!(DeviceParams::new(1e-10, 1e-10, 3.0).is_ok());
        assert!(DeviceParams::new(1e-11, 1e-10, 3.0).is_err());
        assert!(DeviceParams::new(1e-7, 0.0, 3.0).is_err());
        assert!(DeviceParams::new(1e-7, 1e-10, -1.0).is_err());
    }

    #[test]
    fn small_signal_regime_is_linear() {
        let (k, alpha) = (5e-8, 3.0);
        let v = 0.17 / alpha * 0.999;
        let i = device_current(k, alpha, v).unwrap();
        assert!((i - k * alpha * v).abs() / i < 0.01);
    }

    proptest! {
        #[test]
        fn current_is_odd(k in 1e-12f64..1e-6, alpha in 0.5f64..5.0, v in -3.0f64..3.0) {
            let a = device_current(k, alpha, v).unwrap();
            let b = device_current(k, alpha, -v).unwrap();
            prop_assert_eq!(a, -b);
        }

        #[test]
        fn conductance_is_even_and_positive(k in 1e-12f64..1e-6, alpha in 0.5f64..5.0, v in -3.0f64..3.0) {
            let a = device_conductance(k, alpha, v).unwrap();
            prop_assert_eq!(a, device_conductance(k, alpha, -v).unwrap());
            prop_assert!(a > 0.0);
        }

        #[test]
        fn conductance_matches_central_difference(k in 1e-10f64..1e-7, v in -3.0f64..3.0) {
            let alpha = 3.0;
            let h = 1e-6;
            let fd = (device_current(k, alpha, v + h).unwrap() - device_current(k, alpha, v - h).unwrap()) / (2.0 * h);
            let g = device_conductance(k, alpha, v).unwrap();
            prop_assert!((fd - g).abs() <= 1e-6 * g, "fd {} vs g {}", fd, g);
        }

        #[test]
        fn current_increases_in_v_and_k(k in 1e-10f64..1e-7, v in -3.0f64..3.0, dv in 1e-6f64..0.5, scale in 1.001f64..10.0) {
            let alpha = 3.0;
            let base = device_current(k, alpha, v).unwrap();
            prop_assert!(device_current(k, alpha, v + dv).unwrap() > base);
            if v > 0.0 {
                prop_assert!(device_current(k * scale, alpha, v).unwrap() > base);
            }
        }
    }
}
