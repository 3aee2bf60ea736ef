//! Exponential-of-quadratic surrogate for the sneak current.
//!
//! `I = exp(c . f(S, ln K_on, V_dd))` with the ten features returned by
//! [`feature_vector`]. `S` is the row count of the square array.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::SneakModel;
use crate::topology::{CrossbarSpec, Metal, PatternKind, Strategy, TopologyError};

pub const N_FEATURES: usize = 10;
pub const SCHEMA_VERSION: u32 = 1;

/// Region over which the built-in coefficients were characterized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub size: (usize, usize),
    pub k_on: (f64, f64),
    pub v_dd: (f64, f64),
}

pub const BOUNDS: Bounds = Bounds { size: (4, 64), k_on: (1e-9, 1e-7), v_dd: (1.0, 3.0) };

impl Bounds {
    /// Names of the parameters lying outside the box.
    pub fn violations(&self, size: usize, k_on: f64, v_dd: f64) -> Vec<&'static str> {
        let mut out = Vec::new();
        if size < self.size.0 || size > self.size.1 {
            out.push("size");
        }
        // Small slack so grid values written in decimal are not flagged.
        let inside = |x: f64, (lo, hi): (f64, f64)| x >= lo * (1.0 - 1e-12) && x <= hi * (1.0 + 1e-12);
        if !inside(k_on, self.k_on) {
            out.push("k_on");
        }
        if !inside(v_dd, self.v_dd) {
            out.push("v_dd");
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error("k_on must be positive and finite, got {0}")]
    NonPositiveKon(f64),
    #[error("size must be at least 1")]
    ZeroSize,
    #[error("v_dd must be finite, got {0}")]
    NonFiniteVdd(f64),
    #[error("no coefficient set for {0}")]
    MissingKey(CoefficientKey),
    #[error("coefficient file: {0}")]
    Format(String),
    #[error("unsupported coefficient schema version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
}

/// `[S^2, S ln K, S V, S, (ln K)^2, V ln K, ln K, V^2, V, 1]`.
pub fn feature_vector(size: usize, k_on: f64, v_dd: f64) -> Result<[f64; N_FEATURES], ClosedFormError> {
    if size == 0 {
        return Err(ClosedFormError::ZeroSize);
    }
    if !(k_on > 0.0) || !k_on.is_finite() {
        return Err(ClosedFormError::NonPositiveKon(k_on));
    }
    if !v_dd.is_finite() {
        return Err(ClosedFormError::NonFiniteVdd(v_dd));
    }
    Ok(features_raw(size as f64, k_on.ln(), v_dd))
}

#[inline]
pub(crate) fn features_raw(s: f64, l: f64, v: f64) -> [f64; N_FEATURES] {
    [s * s, s * l, s * v, s, l * l, l * v, l, v * v, v, 1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoefficientKey {
    pub metal: Metal,
    pub pattern: PatternKind,
    pub strategy: Strategy,
}

impl CoefficientKey {
    pub fn new(metal: Metal, pattern: PatternKind, strategy: Strategy) -> Self {
        Self { metal, pattern, strategy }
    }

    /// The 24 keys in table order: metal, then pattern, then strategy.
    pub fn all() -> Vec<CoefficientKey> {
        let mut out = Vec::with_capacity(24);
        for metal in Metal::ALL {
            for pattern in [PatternKind::AllOnes, PatternKind::AllZeros] {
                for strategy in Strategy::ALL {
                    out.push(Self::new(metal, pattern, strategy));
                }
            }
        }
        out
    }
}

impl fmt::Display for CoefficientKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.metal, self.pattern, self.strategy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSet {
    pub key: CoefficientKey,
    pub c: [f64; N_FEATURES],
}

impl CoefficientSet {
    /// Natural log of the modeled current.
    pub fn exponent(&self, size: usize, k_on: f64, v_dd: f64) -> Result<f64, ClosedFormError> {
        let f = feature_vector(size, k_on, v_dd)?;
        Ok(dot(&self.c, &f))
    }
}

#[inline]
pub(crate) fn dot(c: &[f64; N_FEATURES], f: &[f64; N_FEATURES]) -> f64 {
    c.iter().zip(f).map(|(a, b)| a * b).sum()
}

/// Modeled sneak current, amperes. Points outside [`BOUNDS`] are evaluated
/// but logged as extrapolation.
pub fn eval_closed_form(coeffs: &CoefficientSet, size: usize, k_on: f64, v_dd: f64) -> Result<f64, ClosedFormError> {
    let exponent = coeffs.exponent(size, k_on, v_dd)?;
    let outside = BOUNDS.violations(size, k_on, v_dd);
    if !outside.is_empty() {
        log::warn!(
            "extrapolating {} at size={size}, k_on={k_on:e}, v_dd={v_dd}: {} outside the characterized range",
            coeffs.key,
            outside.join(", ")
        );
    }
    Ok(exponent.exp())
}

/// Coefficient sets indexed by key. Immutable once built.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoefficientStore {
    sets: BTreeMap<CoefficientKey, [f64; N_FEATURES]>,
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    schema_version: u32,
    #[serde(default, rename = "set")]
    sets: Vec<SetRecord>,
}

#[derive(Serialize, Deserialize)]
struct SetRecord {
    metal: Metal,
    pattern: PatternKind,
    strategy: Strategy,
    c: Vec<f64>,
}

impl CoefficientStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// The published coefficient tables.
    pub fn builtin() -> Self {
        let mut store = Self::new();
        for &(metal, pattern, strategy, c) in BUILTIN {
            store.insert(CoefficientSet { key: CoefficientKey::new(metal, pattern, strategy), c });
        }
        store
    }

    pub fn insert(&mut self, set: CoefficientSet) {
        self.sets.insert(set.key, set.c);
    }

    pub fn get(&self, key: CoefficientKey) -> Result<CoefficientSet, ClosedFormError> {
        self.sets.get(&key).map(|&c| CoefficientSet { key, c }).ok_or(ClosedFormError::MissingKey(key))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = CoefficientSet> + '_ {
        self.sets.iter().map(|(&key, &c)| CoefficientSet { key, c })
    }

    pub fn to_toml(&self) -> String {
        let file = StoreFile {
            schema_version: SCHEMA_VERSION,
            sets: self
                .iter()
                .map(|s| SetRecord {
                    metal: s.key.metal,
                    pattern: s.key.pattern,
                    strategy: s.key.strategy,
                    c: s.c.to_vec(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("coefficient store serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ClosedFormError> {
        let file: StoreFile = toml::from_str(text).map_err(|e| ClosedFormError::Format(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(ClosedFormError::SchemaVersion { found: file.schema_version });
        }
        let mut store = Self::new();
        for rec in file.sets {
            let key = CoefficientKey::new(rec.metal, rec.pattern, rec.strategy);
            let c: [f64; N_FEATURES] = rec.c.as_slice().try_into().map_err(|_| {
                ClosedFormError::Format(format!("{key}: expected {N_FEATURES} coefficients, got {}", rec.c.len()))
            })?;
            if c.iter().any(|x| !x.is_finite()) {
                return Err(ClosedFormError::Format(format!("{key}: non-finite coefficient")));
            }
            store.insert(CoefficientSet { key, c });
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_toml(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), crate::Error> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }
}

impl SneakModel for CoefficientStore {
    fn name(&self) -> &str {
        "closed-form"
    }

    fn sneak_current(&self, spec: &CrossbarSpec) -> Result<f64, crate::Error> {
        let pattern = spec.pattern.kind();
        if pattern == PatternKind::Custom {
            return Err(TopologyError::NonUniformPattern.into());
        }
        let set = self.get(CoefficientKey::new(spec.interconnect.metal, pattern, spec.strategy))?;
        Ok(eval_closed_form(&set, spec.n(), spec.device.k_on, spec.v_dd)?)
    }
}

#[rustfmt::skip]
const BUILTIN: &[(Metal, PatternKind, Strategy, [f64; N_FEATURES])] = &[
    (Metal::M3, PatternKind::AllOnes, Strategy::Frc, [-2.765766e-04, -3.552098e-05, 4.599539e-03, 1.722779e-02, -4.296973e-04, -1.275372e-03, 9.867175e-01, -1.056307e-01, 1.529703e+00, -1.154712e+00]),
    (Metal::M3, PatternKind::AllOnes, Strategy::Grfc, [-5.271610e-04, -7.224109e-04, 2.568702e-03, 3.588961e-02, -9.912720e-03, -2.229373e-02, 6.749072e-01, -1.838965e-01, 1.871899e+00, -3.592643e+00]),
    (Metal::M3, PatternKind::AllOnes, Strategy::Frgc, [-3.118053e-05, -9.791516e-04, -3.942867e-03, -1.070919e-02, -3.415353e-02, -1.746779e-01, -2.319980e-02, -3.936425e-01, 1.029943e+00, -8.795638e+00]),
    (Metal::M3, PatternKind::AllOnes, Strategy::Grc, [-3.422062e-05, -9.441148e-04, -3.851644e-03, -9.972648e-03, -3.305335e-02, -1.730254e-01, 1.489677e-02, -3.919864e-01, 1.054458e+00, -8.468067e+00]),
    (Metal::M3, PatternKind::AllZeros, Strategy::Frc, [-2.768951e-04, -2.337750e-05, 4.602914e-03, 1.747226e-02, -1.110902e-03, -1.192496e-03, -3.901237e-02, -1.029701e-01, 1.521661e+00, -2.441334e+01]),
    (Metal::M3, PatternKind::AllZeros, Strategy::Grfc, [-5.173225e-04, -7.911723e-05, 4.479660e-03, 4.457329e-02, -1.103802e-03, -3.191236e-03, -3.450177e-02, -1.556039e-01, 2.102373e+00, -2.416504e+01]),
    (Metal::M3, PatternKind::AllZeros, Strategy::Frgc, [6.728880e-08, -1.496197e-04, -8.406540e-04, -1.435455e-03, -2.031960e-03, -6.087109e-03, -6.308356e-02, -2.579691e-02, 2.995661e+00, -2.428478e+01]),
    (Metal::M3, PatternKind::AllZeros, Strategy::Grc, [7.209101e-08, -1.496397e-04, -8.401264e-04, -1.437187e-03, -2.030510e-03, -6.086547e-03, -6.303070e-02, -2.578021e-02, 2.995596e+00, -2.428423e+01]),
    (Metal::M5, PatternKind::AllOnes, Strategy::Frc, [-2.764303e-04, -5.936502e-05, 4.487461e-03, 1.695349e-02, -7.048080e-04, -2.179162e-03, 9.783429e-01, -1.081555e-01, 1.524105e+00, -1.225103e+00]),
    (Metal::M5, PatternKind::AllOnes, Strategy::Grfc, [-5.369728e-04, -1.011910e-03, 1.771752e-03, 3.218355e-02, -1.162975e-02, -2.706075e-02, 6.228614e-01, -1.901170e-01, 1.817728e+00, -4.002326e+00]),
    (Metal::M5, PatternKind::AllOnes, Strategy::Frgc, [-3.317372e-05, -1.426496e-03, -5.595220e-03, -1.690781e-02, -3.488875e-02, -1.823875e-01, -3.333252e-02, -3.993790e-01, 9.227569e-01, -8.767657e+00]),
    (Metal::M5, PatternKind::AllOnes, Strategy::Grc, [-3.607482e-05, -1.405009e-03, -5.549250e-03, -1.636382e-02, -3.399748e-02, -1.810900e-01, -2.208753e-03, -3.982103e-01, 9.431813e-01, -8.499305e+00]),
    (Metal::M5, PatternKind::AllZeros, Strategy::Frc, [-2.795334e-04, -4.490970e-05, 4.561308e-03, 1.732497e-02, -2.417057e-04, -1.532339e-03, -5.741777e-03, -1.062961e-01, 1.527636e+00, -2.411070e+01]),
    (Metal::M5, PatternKind::AllZeros, Strategy::Grfc, [-5.162575e-04, -1.323556e-04, 4.208091e-03, 4.394577e-02, -1.852363e-03, -5.523961e-03, -5.769302e-02, -1.624248e-01, 2.088758e+00, -2.436257e+01]),
    (Metal::M5, PatternKind::AllZeros, Strategy::Frgc, [1.109504e-06, -2.524449e-04, -1.425890e-03, -2.493809e-03, -3.402301e-03, -1.053107e-02, -1.051583e-01, -4.035391e-02, 2.976207e+00, -2.464774e+01]),
    (Metal::M5, PatternKind::AllZeros, Strategy::Grc, [1.100590e-06, -2.524109e-04, -1.425737e-03, -2.492790e-03, -3.402806e-03, -1.053004e-02, -1.051793e-01, -4.034864e-02, 2.976206e+00, -2.464794e+01]),
    (Metal::M6, PatternKind::AllOnes, Strategy::Frc, [-2.765330e-04, -9.275605e-06, 4.723620e-03, 1.751128e-02, -1.186960e-04, -3.378056e-04, 9.963053e-01, -1.029360e-01, 1.534969e+00, -1.073100e+00]),
    (Metal::M6, PatternKind::AllOnes, Strategy::Grfc, [-5.136305e-04, -3.903261e-04, 3.578035e-03, 3.976450e-02, -7.747277e-03, -1.659931e-02, 7.411125e-01, -1.751892e-01, 1.929448e+00, -3.058583e+00]),
    (Metal::M6, PatternKind::AllOnes, Strategy::Frgc, [-1.469021e-05, -3.335456e-04, -1.398252e-03, -3.205943e-03, -3.295507e-02, -1.633178e-01, -5.549090e-03, -3.814526e-01, 1.164724e+00, -8.790361e+00]),
    (Metal::M6, PatternKind::AllOnes, Strategy::Grc, [-1.697019e-05, -2.664594e-04, -1.188272e-03, -2.113479e-03, -3.143524e-02, -1.609204e-01, 4.635883e-02, -3.785520e-01, 1.196345e+00, -8.344802e+00]),
    (Metal::M6, PatternKind::AllZeros, Strategy::Frc, [-2.744689e-04, -1.905130e-05, 4.644600e-03, 1.729086e-02, -6.912710e-04, -5.466582e-05, -2.498576e-02, -1.014793e-01, 1.538061e+00, -2.429351e+01]),
    (Metal::M6, PatternKind::AllZeros, Strategy::Grfc, [-5.168549e-04, -2.198834e-05, 4.760412e-03, 4.514727e-02, -2.288891e-04, -7.376962e-04, -6.894301e-03, -1.482829e-01, 2.116129e+00, -2.392658e+01]),
    (Metal::M6, PatternKind::AllZeros, Strategy::Frgc, [-1.772653e-07, -3.958725e-05, -2.236606e-04, -3.611497e-04, -5.495305e-04, -1.586451e-03, -1.715344e-02, -1.070043e-02, 3.012977e+00, -2.388512e+01]),
    (Metal::M6, PatternKind::AllZeros, Strategy::Grc, [-1.834111e-07, -3.958864e-05, -2.236878e-04, -3.607864e-04, -5.487445e-04, -1.588074e-03, -1.712207e-02, -1.069628e-02, 3.012930e+00, -2.388481e+01]),
];
