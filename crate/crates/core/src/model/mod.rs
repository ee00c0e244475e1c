//! Loss models `f(x, u)` evaluated at `u = εy`.
//!
//! A [`LossModel`] exposes the partial gradient in the second slot, `∂f/∂u`,
//! never `∂F/∂y`: the `ε` chain-rule factor is applied exactly once, by the
//! consumer (the SGD engine, the slow ODE, the SDE drift).
//!
//! Built-in families are created from a [`ModelSpec`] by [`build_model`].

mod families;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use families::{DoubleWellSlow, MultiMinFast, PinchedValley, Quadratic, ScalarCoupled};

/// Tolerance for eigenvalue-based SPD validation.
pub const SPD_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model family `{0}` (expected one of: {known})", known = FAMILIES.join(", "))]
    UnknownFamily(String),
    #[error("parameter `{name}` must be symmetric positive definite (min eigenvalue {min_eig:e})")]
    NotSpd { name: String, min_eig: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("unknown parameter `{param}` for family `{family}`")]
    UnknownParam { family: String, param: String },
    #[error("non-finite loss at a perturbed point (coordinate {coordinate})")]
    NonFinite { coordinate: usize },
}

/// Registered family names.
pub const FAMILIES: [&str; 5] = [
    "quadratic",
    "scalar-coupled",
    "pinched-valley",
    "double-well-slow",
    "multi-min-fast",
];

/// Partitioned iterate `z = [x; y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl StateVector {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Result<Self, ModelError> {
        if x.is_empty() || y.is_empty() {
            return Err(ModelError::Dimension(format!(
                "state needs d >= 1 and s >= 1 (got d = {}, s = {})",
                x.len(),
                y.len()
            )));
        }
        let state = Self { x, y };
        if !state.is_finite() {
            return Err(ModelError::InvalidParam {
                name: "state".into(),
                reason: "entries must be finite".into(),
            });
        }
        Ok(state)
    }

    pub fn from_slices(x: &[f64], y: &[f64]) -> Result<Self, ModelError> {
        Self::new(DVector::from_column_slice(x), DVector::from_column_slice(y))
    }

    pub fn dim_x(&self) -> usize {
        self.x.len()
    }

    pub fn dim_y(&self) -> usize {
        self.y.len()
    }

    /// `[x; y]`, length `d + s`.
    pub fn concat(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.x.len() + self.y.len());
        z.rows_mut(0, self.x.len()).copy_from(&self.x);
        z.rows_mut(self.x.len(), self.y.len()).copy_from(&self.y);
        z
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }

    /// Slow argument `u = εy`.
    pub fn u(&self, eps: f64) -> DVector<f64> {
        &self.y * eps
    }
}

/// A local minimum of the slow objective `u ↦ f(λ(u), u)`, in `u` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowMinimum {
    pub u: DVector<f64>,
    pub value: f64,
    pub global: bool,
}

/// Loss `f(x, u)`. Implementations must be pure: every method is a
/// deterministic function of its arguments, so models can be shared across
/// concurrent workers.
pub trait LossModel: Send + Sync {
    fn name(&self) -> &str;
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64;
    /// `∂f/∂x`, length `d`.
    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `∂f/∂u` (second slot), length `s`.
    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `∂²f/∂x²`, `d × d`.
    fn hess_xx(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    /// `∂²f/∂x∂u`, `d × s`; entry `(i, j)` is `∂(∂f/∂x_i)/∂u_j`.
    fn hess_ux(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    /// Analytic `argmin_x f(·, u)` when available.
    fn oracle_lambda(&self, _u: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
    /// Local minima of the slow objective, global ones flagged.
    fn slow_minima(&self) -> Option<Vec<SlowMinimum>> {
        None
    }
    /// Canonical description used for configuration hashing.
    fn fingerprint(&self) -> String;
}

/// A named scalar, vector or row-major matrix parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

/// Family name plus parameter table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

impl ModelSpec {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: ParamValue) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn scalar(self, key: &str, value: f64) -> Self {
        self.with(key, ParamValue::Scalar(value))
    }

    pub fn matrix(self, key: &str, rows: &[&[f64]]) -> Self {
        self.with(key, ParamValue::Matrix(rows.iter().map(|r| r.to_vec()).collect()))
    }
}

/// Instantiate a built-in family.
pub fn build_model(spec: &ModelSpec) -> Result<Box<dyn LossModel>, ModelError> {
    let p = Params::new(spec);
    let model: Box<dyn LossModel> = match spec.name.as_str() {
        "quadratic" => Box::new(Quadratic::from_params(&p)?),
        "scalar-coupled" => {
            p.allow(&[])?;
            Box::new(ScalarCoupled)
        }
        "pinched-valley" => Box::new(PinchedValley::from_params(&p)?),
        "double-well-slow" => Box::new(DoubleWellSlow::from_params(&p)?),
        "multi-min-fast" => Box::new(MultiMinFast::from_params(&p)?),
        other => return Err(ModelError::UnknownFamily(other.to_string())),
    };
    Ok(model)
}

/// Typed access to a [`ModelSpec`] parameter table.
pub(crate) struct Params<'a> {
    spec: &'a ModelSpec,
}

impl<'a> Params<'a> {
    fn new(spec: &'a ModelSpec) -> Self {
        Self { spec }
    }

    pub(crate) fn allow(&self, known: &[&str]) -> Result<(), ModelError> {
        for key in self.spec.params.keys() {
            if !known.contains(&key.as_str()) {
                return Err(ModelError::UnknownParam {
                    family: self.spec.name.clone(),
                    param: key.clone(),
                });
            }
        }
        Ok(())
    }

    pub(crate) fn is_scalar(&self, key: &str) -> bool {
        matches!(self.spec.params.get(key), Some(ParamValue::Scalar(_)))
    }

    pub(crate) fn scalar(&self, key: &str, default: f64) -> Result<f64, ModelError> {
        match self.spec.params.get(key) {
            None => Ok(default),
            Some(ParamValue::Scalar(v)) if v.is_finite() => Ok(*v),
            Some(_) => Err(ModelError::InvalidParam {
                name: key.into(),
                reason: "expected a finite scalar".into(),
            }),
        }
    }

    pub(crate) fn dim(&self, key: &str, default: usize) -> Result<usize, ModelError> {
        let v = self.scalar(key, default as f64)?;
        if v < 1.0 || v.fract() != 0.0 {
            return Err(ModelError::InvalidParam {
                name: key.into(),
                reason: "expected a positive integer".into(),
            });
        }
        Ok(v as usize)
    }

    /// Matrix parameter; a scalar `c` means `c·I` (rectangular when `rows != cols`).
    pub(crate) fn matrix(
        &self,
        key: &str,
        rows: Option<usize>,
        cols: Option<usize>,
    ) -> Result<Option<DMatrix<f64>>, ModelError> {
        let Some(value) = self.spec.params.get(key) else {
            return Ok(None);
        };
        let m = match value {
            ParamValue::Scalar(c) => {
                let (r, k) = (rows.unwrap_or(1), cols.unwrap_or(1));
                let mut m = DMatrix::zeros(r, k);
                for i in 0..r.min(k) {
                    m[(i, i)] = *c;
                }
                m
            }
            ParamValue::Vector(v) => {
                // A bare vector is a column (`rows × 1`) unless a single row is expected.
                if rows == Some(1) {
                    DMatrix::from_row_slice(1, v.len(), v)
                } else {
                    DMatrix::from_column_slice(v.len(), 1, v)
                }
            }
            ParamValue::Matrix(rows_data) => {
                let r = rows_data.len();
                let k = rows_data.first().map_or(0, Vec::len);
                if r == 0 || k == 0 || rows_data.iter().any(|row| row.len() != k) {
                    return Err(ModelError::Dimension(format!(
                        "`{key}` must be a non-empty rectangular matrix"
                    )));
                }
                DMatrix::from_fn(r, k, |i, j| rows_data[i][j])
            }
        };
        if m.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParam {
                name: key.into(),
                reason: "entries must be finite".into(),
            });
        }
        if let Some(r) = rows {
            if m.nrows() != r {
                return Err(ModelError::Dimension(format!(
                    "`{key}` has {} rows, expected {r}",
                    m.nrows()
                )));
            }
        }
        if let Some(k) = cols {
            if m.ncols() != k {
                return Err(ModelError::Dimension(format!(
                    "`{key}` has {} columns, expected {k}",
                    m.ncols()
                )));
            }
        }
        Ok(Some(m))
    }
}

/// Reject non-symmetric or not positive definite matrices.
pub fn check_spd(name: &str, m: &DMatrix<f64>) -> Result<(), ModelError> {
    if !m.is_square() {
        return Err(ModelError::Dimension(format!("`{name}` must be square")));
    }
    check_symmetric(name, m)?;
    let min_eig = min_eigenvalue(m);
    if !(min_eig > SPD_TOL) {
        return Err(ModelError::NotSpd {
            name: name.into(),
            min_eig,
        });
    }
    Ok(())
}

pub(crate) fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<(), ModelError> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(ModelError::InvalidParam {
            name: name.into(),
            reason: "matrix must be symmetric".into(),
        });
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// `F(z) = f(x, εy)`.
pub fn full_loss(model: &dyn LossModel, state: &StateVector, eps: f64) -> f64 {
    model.eval(&state.x, &state.u(eps))
}

/// Central finite-difference check of `grad_x` and `grad_u` at `(x, u)`.
///
/// Returns the max over coordinates of `|fd − analytic| / max(1, |analytic|)`.
pub fn grad_check(model: &dyn LossModel, x: &DVector<f64>, u: &DVector<f64>, step: f64) -> Result<f64, ModelError> {
    if !(step > 0.0) {
        return Err(ModelError::InvalidParam {
            name: "step".into(),
            reason: "must be > 0".into(),
        });
    }
    let gx = model.grad_x(x, u);
    let gu = model.grad_u(x, u);
    let d = x.len();
    let mut worst: f64 = 0.0;
    for i in 0..d + u.len() {
        let (mut xp, mut xm, mut up, mut um) = (x.clone(), x.clone(), u.clone(), u.clone());
        let analytic = if i < d {
            xp[i] += step;
            xm[i] -= step;
            gx[i]
        } else {
            up[i - d] += step;
            um[i - d] -= step;
            gu[i - d]
        };
        let fp = model.eval(&xp, &up);
        let fm = model.eval(&xm, &um);
        if !fp.is_finite() || !fm.is_finite() {
            return Err(ModelError::NonFinite { coordinate: i });
        }
        let fd = (fp - fm) / (2.0 * step);
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1.0));
    }
    Ok(worst)
}
