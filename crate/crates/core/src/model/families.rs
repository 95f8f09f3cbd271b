//! Closed families of model coefficients.
//!
//! Each coefficient of the game (diffusion, drift, running and terminal
//! costs, auxiliary bounded drift) is drawn from a small closed enumeration
//! of families with checkable regularity. The `Custom` variants are the
//! escape hatch for tabulated callbacks; they are accepted everywhere but
//! their regularity can only be probed statistically, never certified.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Euclidean norm of a slice.
pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

type MatrixFn = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;
type VectorFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type ScalarFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync>;
type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

// ---------------------------------------------------------------------------
// Diffusion
// ---------------------------------------------------------------------------

/// Diffusion coefficient `sigma(t, x)`, an invertible m-by-m matrix.
///
/// * `Constant`: a fixed invertible matrix; the inverse is computed once at
///   construction.
/// * `AffineBounded`: diagonal with entries `base_j + amplitude_j * tanh(x_j)`.
///   Requiring `base_j > |amplitude_j|` keeps every entry in a positive
///   interval, so the matrix is bounded, Lipschitz in `x`, and has a bounded
///   inverse.
/// * `Custom`: tabulated callback; inverted numerically at every use and only
///   validated statistically.
#[derive(Clone)]
pub enum DiffusionSpec {
    Constant {
        matrix: DMatrix<f64>,
        inverse: DMatrix<f64>,
    },
    AffineBounded {
        base: Vec<f64>,
        amplitude: Vec<f64>,
    },
    Custom {
        dim: usize,
        eval: MatrixFn,
    },
}

impl DiffusionSpec {
    /// Constant diffusion. Fails if the matrix is not square or not
    /// invertible.
    pub fn constant(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidSpec(format!(
                "constant diffusion must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let inverse = matrix.clone().try_inverse().ok_or(Error::SingularDiffusion {
            t: 0.0,
            x: vec![0.0; matrix.nrows()],
        })?;
        Ok(DiffusionSpec::Constant { matrix, inverse })
    }

    /// Identity diffusion in dimension `dim`.
    pub fn identity(dim: usize) -> Self {
        let eye = DMatrix::identity(dim, dim);
        DiffusionSpec::Constant { inverse: eye.clone(), matrix: eye }
    }

    /// Diagonal bounded-oscillation diffusion `diag(base_j + amplitude_j tanh(x_j))`.
    pub fn affine_bounded(base: Vec<f64>, amplitude: Vec<f64>) -> Result<Self> {
        if base.is_empty() || base.len() != amplitude.len() {
            return Err(Error::InvalidSpec(
                "affine-bounded diffusion needs matching nonempty base/amplitude".into(),
            ));
        }
        for (j, (&a, &b)) in base.iter().zip(&amplitude).enumerate() {
            if !(a > b.abs()) {
                return Err(Error::Assumption {
                    assumption: "A1",
                    detail: format!(
                        "affine-bounded diffusion entry {j}: base {a} must exceed |amplitude| {}",
                        b.abs()
                    ),
                });
            }
        }
        Ok(DiffusionSpec::AffineBounded { base, amplitude })
    }

    /// Tabulated diffusion callback (statistical-only validation).
    pub fn custom<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        DiffusionSpec::Custom { dim, eval: Arc::new(eval) }
    }

    pub fn dim(&self) -> usize {
        match self {
            DiffusionSpec::Constant { matrix, .. } => matrix.nrows(),
            DiffusionSpec::AffineBounded { base, .. } => base.len(),
            DiffusionSpec::Custom { dim, .. } => *dim,
        }
    }

    /// Dense matrix value at `(t, x)`.
    pub fn matrix(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        match self {
            DiffusionSpec::Constant { matrix, .. } => matrix.clone(),
            DiffusionSpec::AffineBounded { base, amplitude } => {
                let m = base.len();
                DMatrix::from_fn(m, m, |r, c| {
                    if r == c { base[r] + amplitude[r] * x[r].tanh() } else { 0.0 }
                })
            }
            DiffusionSpec::Custom { eval, .. } => eval(t, x),
        }
    }

    /// Dense inverse at `(t, x)`; errors when singular (custom family only;
    /// the closed families are invertible by construction).
    pub fn inverse_matrix(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            DiffusionSpec::Constant { inverse, .. } => Ok(inverse.clone()),
            DiffusionSpec::AffineBounded { base, amplitude } => {
                let m = base.len();
                Ok(DMatrix::from_fn(m, m, |r, c| {
                    if r == c { 1.0 / (base[r] + amplitude[r] * x[r].tanh()) } else { 0.0 }
                }))
            }
            DiffusionSpec::Custom { eval, .. } => eval(t, x)
                .try_inverse()
                .ok_or_else(|| Error::SingularDiffusion { t, x: x.to_vec() }),
        }
    }

    /// `out = sigma(t, x) * v` without allocating for the closed families.
    pub fn mul_into(&self, t: f64, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            DiffusionSpec::Constant { matrix, .. } => mat_mul_into(matrix, v, out),
            DiffusionSpec::AffineBounded { base, amplitude } => {
                for j in 0..base.len() {
                    out[j] = (base[j] + amplitude[j] * x[j].tanh()) * v[j];
                }
            }
            DiffusionSpec::Custom { eval, .. } => mat_mul_into(&eval(t, x), v, out),
        }
    }

    /// `out = sigma(t, x)^{-1} * v`; errors when singular.
    pub fn inv_mul_into(&self, t: f64, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            DiffusionSpec::Constant { inverse, .. } => {
                mat_mul_into(inverse, v, out);
                Ok(())
            }
            DiffusionSpec::AffineBounded { base, amplitude } => {
                for j in 0..base.len() {
                    out[j] = v[j] / (base[j] + amplitude[j] * x[j].tanh());
                }
                Ok(())
            }
            DiffusionSpec::Custom { .. } => {
                let inv = self.inverse_matrix(t, x)?;
                mat_mul_into(&inv, v, out);
                Ok(())
            }
        }
    }

    /// `out = sigma(t, x)^T * v` (maps a state-space gradient to the noise
    /// coordinates used by the control maps).
    pub fn transpose_mul_into(&self, t: f64, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            DiffusionSpec::Constant { matrix, .. } => mat_left_mul_into(v, matrix, out),
            DiffusionSpec::AffineBounded { base, amplitude } => {
                for j in 0..base.len() {
                    out[j] = (base[j] + amplitude[j] * x[j].tanh()) * v[j];
                }
            }
            DiffusionSpec::Custom { eval, .. } => mat_left_mul_into(v, &eval(t, x), out),
        }
    }

    /// `out = row^T * sigma(t, x)^{-1}` (left multiplication by a row vector).
    pub fn left_inv_mul_into(&self, t: f64, x: &[f64], row: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            DiffusionSpec::Constant { inverse, .. } => {
                mat_left_mul_into(row, inverse, out);
                Ok(())
            }
            DiffusionSpec::AffineBounded { base, amplitude } => {
                for j in 0..base.len() {
                    out[j] = row[j] / (base[j] + amplitude[j] * x[j].tanh());
                }
                Ok(())
            }
            DiffusionSpec::Custom { .. } => {
                let inv = self.inverse_matrix(t, x)?;
                mat_left_mul_into(row, &inv, out);
                Ok(())
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            DiffusionSpec::Constant { .. } => "constant",
            DiffusionSpec::AffineBounded { .. } => "affine-bounded",
            DiffusionSpec::Custom { .. } => "custom",
        }
    }

    pub(crate) fn descriptor(&self) -> CoefficientDescriptor {
        match self {
            DiffusionSpec::Constant { matrix, .. } => CoefficientDescriptor {
                family: "constant".into(),
                data: matrix.iter().copied().collect(),
            },
            DiffusionSpec::AffineBounded { base, amplitude } => CoefficientDescriptor {
                family: "affine-bounded".into(),
                data: base.iter().chain(amplitude).copied().collect(),
            },
            DiffusionSpec::Custom { dim, .. } => CoefficientDescriptor {
                family: "custom".into(),
                data: vec![*dim as f64],
            },
        }
    }
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DiffusionSpec::{}(dim = {})", self.family_name(), self.dim())
    }
}

fn mat_mul_into(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    for r in 0..m.nrows() {
        let mut acc = 0.0;
        for c in 0..m.ncols() {
            acc += m[(r, c)] * v[c];
        }
        out[r] = acc;
    }
}

fn mat_left_mul_into(row: &[f64], m: &DMatrix<f64>, out: &mut [f64]) {
    for c in 0..m.ncols() {
        let mut acc = 0.0;
        for r in 0..m.nrows() {
            acc += row[r] * m[(r, c)];
        }
        out[c] = acc;
    }
}

// ---------------------------------------------------------------------------
// Drift
// ---------------------------------------------------------------------------

/// Game drift `f(t, x, u, v)` of linear growth in `x`.
///
/// * `Zero`: identically zero.
/// * `Affine`: `constant + state * x + control_u * u + control_v * v`.
/// * `Custom`: tabulated callback with declared control dimensions.
#[derive(Clone)]
pub enum DriftSpec {
    Zero {
        dim: usize,
    },
    Affine {
        constant: Vec<f64>,
        state: DMatrix<f64>,
        control_u: DMatrix<f64>,
        control_v: DMatrix<f64>,
    },
    Custom {
        dim: usize,
        dim_u: usize,
        dim_v: usize,
        eval: VectorFn,
    },
}

impl DriftSpec {
    pub fn zero(dim: usize) -> Self {
        DriftSpec::Zero { dim }
    }

    pub fn affine(
        constant: Vec<f64>,
        state: DMatrix<f64>,
        control_u: DMatrix<f64>,
        control_v: DMatrix<f64>,
    ) -> Result<Self> {
        let m = constant.len();
        if m == 0 {
            return Err(Error::InvalidSpec("affine drift needs dim >= 1".into()));
        }
        if state.nrows() != m || state.ncols() != m {
            return Err(Error::InvalidSpec(format!(
                "affine drift state block must be {m}x{m}, got {}x{}",
                state.nrows(),
                state.ncols()
            )));
        }
        if control_u.nrows() != m || control_v.nrows() != m {
            return Err(Error::InvalidSpec(
                "affine drift control blocks must have dim rows".into(),
            ));
        }
        Ok(DriftSpec::Affine { constant, state, control_u, control_v })
    }

    pub fn custom<F>(dim: usize, dim_u: usize, dim_v: usize, eval: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        DriftSpec::Custom { dim, dim_u, dim_v, eval: Arc::new(eval) }
    }

    pub fn dim(&self) -> usize {
        match self {
            DriftSpec::Zero { dim } => *dim,
            DriftSpec::Affine { constant, .. } => constant.len(),
            DriftSpec::Custom { dim, .. } => *dim,
        }
    }

    /// Control dimensions `(d_u, d_v)` accepted by this drift, when the
    /// family constrains them.
    pub fn control_dims(&self) -> Option<(usize, usize)> {
        match self {
            DriftSpec::Zero { .. } => None,
            DriftSpec::Affine { control_u, control_v, .. } => {
                Some((control_u.ncols(), control_v.ncols()))
            }
            DriftSpec::Custom { dim_u, dim_v, .. } => Some((*dim_u, *dim_v)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DriftSpec::Zero { .. })
    }

    /// `out = f(t, x, u, v)`.
    pub fn eval_into(&self, t: f64, x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            DriftSpec::Zero { dim } => out[..*dim].fill(0.0),
            DriftSpec::Affine { constant, state, control_u, control_v } => {
                let m = constant.len();
                for r in 0..m {
                    let mut acc = constant[r];
                    for c in 0..m {
                        acc += state[(r, c)] * x[c];
                    }
                    for c in 0..control_u.ncols() {
                        acc += control_u[(r, c)] * u[c];
                    }
                    for c in 0..control_v.ncols() {
                        acc += control_v[(r, c)] * v[c];
                    }
                    out[r] = acc;
                }
            }
            DriftSpec::Custom { eval, dim, .. } => {
                let val = eval(t, x, u, v);
                out[..*dim].copy_from_slice(&val[..*dim]);
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            DriftSpec::Zero { .. } => "zero",
            DriftSpec::Affine { .. } => "affine",
            DriftSpec::Custom { .. } => "custom",
        }
    }

    pub(crate) fn descriptor(&self) -> CoefficientDescriptor {
        match self {
            DriftSpec::Zero { dim } => {
                CoefficientDescriptor { family: "zero".into(), data: vec![*dim as f64] }
            }
            DriftSpec::Affine { constant, state, control_u, control_v } => {
                let mut data: Vec<f64> = constant.clone();
                data.extend(state.iter());
                data.extend(control_u.iter());
                data.extend(control_v.iter());
                CoefficientDescriptor { family: "affine".into(), data }
            }
            DriftSpec::Custom { dim, dim_u, dim_v, .. } => CoefficientDescriptor {
                family: "custom".into(),
                data: vec![*dim as f64, *dim_u as f64, *dim_v as f64],
            },
        }
    }
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DriftSpec::{}(dim = {})", self.family_name(), self.dim())
    }
}

// ---------------------------------------------------------------------------
// Running cost
// ---------------------------------------------------------------------------

/// Running cost `h(t, x, u, v)` of sub-quadratic growth in `x`.
#[derive(Clone)]
pub enum CostSpec {
    Constant {
        value: f64,
    },
    /// `coeff * min(|x|, clip)^exponent`: bounded, so any growth constant
    /// at least `coeff * clip^exponent` dominates it.
    ClippedPower {
        coeff: f64,
        exponent: f64,
        clip: f64,
    },
    /// `u_weight |u|^2 + v_weight |v|^2 + state_coeff |x|^state_power`
    /// with `state_power < 2` enforced at construction.
    QuadraticControls {
        u_weight: f64,
        v_weight: f64,
        state_coeff: f64,
        state_power: f64,
    },
    Custom {
        eval: ScalarFn,
    },
}

impl CostSpec {
    pub fn constant(value: f64) -> Self {
        CostSpec::Constant { value }
    }

    pub fn clipped_power(coeff: f64, exponent: f64, clip: f64) -> Result<Self> {
        if !(clip > 0.0) || !(exponent >= 0.0) {
            return Err(Error::InvalidSpec(
                "clipped-power cost needs clip > 0 and exponent >= 0".into(),
            ));
        }
        Ok(CostSpec::ClippedPower { coeff, exponent, clip })
    }

    pub fn quadratic_controls(
        u_weight: f64,
        v_weight: f64,
        state_coeff: f64,
        state_power: f64,
    ) -> Result<Self> {
        if !(state_power < 2.0) || !(state_power >= 0.0) {
            return Err(Error::Assumption {
                assumption: "A2",
                detail: format!(
                    "running-cost state power must lie in [0, 2) for sub-quadratic growth, got {state_power}"
                ),
            });
        }
        Ok(CostSpec::QuadraticControls { u_weight, v_weight, state_coeff, state_power })
    }

    pub fn custom<F>(eval: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        CostSpec::Custom { eval: Arc::new(eval) }
    }

    pub fn eval(&self, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        match self {
            CostSpec::Constant { value } => *value,
            CostSpec::ClippedPower { coeff, exponent, clip } => {
                coeff * norm(x).min(*clip).powf(*exponent)
            }
            CostSpec::QuadraticControls { u_weight, v_weight, state_coeff, state_power } => {
                let nu = norm(u);
                let nv = norm(v);
                u_weight * nu * nu + v_weight * nv * nv + state_coeff * norm(x).powf(*state_power)
            }
            CostSpec::Custom { eval } => eval(t, x, u, v),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, CostSpec::Constant { value } if *value == 0.0)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            CostSpec::Constant { .. } => "constant",
            CostSpec::ClippedPower { .. } => "clipped-power",
            CostSpec::QuadraticControls { .. } => "quadratic-controls",
            CostSpec::Custom { .. } => "custom",
        }
    }

    pub(crate) fn descriptor(&self) -> CoefficientDescriptor {
        match self {
            CostSpec::Constant { value } => {
                CoefficientDescriptor { family: "constant".into(), data: vec![*value] }
            }
            CostSpec::ClippedPower { coeff, exponent, clip } => CoefficientDescriptor {
                family: "clipped-power".into(),
                data: vec![*coeff, *exponent, *clip],
            },
            CostSpec::QuadraticControls { u_weight, v_weight, state_coeff, state_power } => {
                CoefficientDescriptor {
                    family: "quadratic-controls".into(),
                    data: vec![*u_weight, *v_weight, *state_coeff, *state_power],
                }
            }
            CostSpec::Custom { .. } => {
                CoefficientDescriptor { family: "custom".into(), data: vec![] }
            }
        }
    }
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CostSpec::{}", self.family_name())
    }
}

// ---------------------------------------------------------------------------
// Terminal cost
// ---------------------------------------------------------------------------

/// Terminal cost `g(x)` of sub-quadratic growth.
#[derive(Clone)]
pub enum TerminalSpec {
    Constant { value: f64 },
    /// `gradient . x`; linear growth dominated by `|gradient| (1 + |x|^gamma)`
    /// for any exponent `gamma > 1`.
    Linear { gradient: Vec<f64> },
    ClippedPower { coeff: f64, exponent: f64, clip: f64 },
    Custom { eval: TerminalFn },
}

impl TerminalSpec {
    pub fn constant(value: f64) -> Self {
        TerminalSpec::Constant { value }
    }

    pub fn linear(gradient: Vec<f64>) -> Result<Self> {
        if gradient.is_empty() {
            return Err(Error::InvalidSpec("linear terminal cost needs a gradient".into()));
        }
        Ok(TerminalSpec::Linear { gradient })
    }

    pub fn clipped_power(coeff: f64, exponent: f64, clip: f64) -> Result<Self> {
        if !(clip > 0.0) || !(exponent >= 0.0) {
            return Err(Error::InvalidSpec(
                "clipped-power terminal cost needs clip > 0 and exponent >= 0".into(),
            ));
        }
        Ok(TerminalSpec::ClippedPower { coeff, exponent, clip })
    }

    pub fn custom<F>(eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        TerminalSpec::Custom { eval: Arc::new(eval) }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TerminalSpec::Constant { value } => *value,
            TerminalSpec::Linear { gradient } => {
                gradient.iter().zip(x).map(|(g, xi)| g * xi).sum()
            }
            TerminalSpec::ClippedPower { coeff, exponent, clip } => {
                coeff * norm(x).min(*clip).powf(*exponent)
            }
            TerminalSpec::Custom { eval } => eval(x),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            TerminalSpec::Constant { .. } => "constant",
            TerminalSpec::Linear { .. } => "linear",
            TerminalSpec::ClippedPower { .. } => "clipped-power",
            TerminalSpec::Custom { .. } => "custom",
        }
    }

    pub(crate) fn descriptor(&self) -> CoefficientDescriptor {
        match self {
            TerminalSpec::Constant { value } => {
                CoefficientDescriptor { family: "constant".into(), data: vec![*value] }
            }
            TerminalSpec::Linear { gradient } => {
                CoefficientDescriptor { family: "linear".into(), data: gradient.clone() }
            }
            TerminalSpec::ClippedPower { coeff, exponent, clip } => CoefficientDescriptor {
                family: "clipped-power".into(),
                data: vec![*coeff, *exponent, *clip],
            },
            TerminalSpec::Custom { .. } => {
                CoefficientDescriptor { family: "custom".into(), data: vec![] }
            }
        }
    }
}

impl fmt::Debug for TerminalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TerminalSpec::{}", self.family_name())
    }
}

// ---------------------------------------------------------------------------
// Auxiliary bounded drift
// ---------------------------------------------------------------------------

/// Control-free auxiliary drift `b(t, x)`, bounded and Lipschitz. Used by the
/// simulation engine for reference dynamics and by the density diagnostics.
#[derive(Clone)]
pub enum BoundedDriftSpec {
    Zero { dim: usize },
    Constant { value: Vec<f64> },
    /// `b_j(x) = clamp(gain * x_j, -bound, bound)`: Lipschitz with constant
    /// `|gain|` and bounded by `bound * sqrt(dim)`.
    ClippedLinear { dim: usize, gain: f64, bound: f64 },
    Custom { dim: usize, eval: MatrixFreeVectorFn },
}

type MatrixFreeVectorFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

impl BoundedDriftSpec {
    pub fn zero(dim: usize) -> Self {
        BoundedDriftSpec::Zero { dim }
    }

    pub fn constant(value: Vec<f64>) -> Result<Self> {
        if value.is_empty() {
            return Err(Error::InvalidSpec("constant bounded drift needs dim >= 1".into()));
        }
        Ok(BoundedDriftSpec::Constant { value })
    }

    pub fn clipped_linear(dim: usize, gain: f64, bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::Assumption {
                assumption: "A4",
                detail: format!("clipped-linear drift needs a positive bound, got {bound}"),
            });
        }
        Ok(BoundedDriftSpec::ClippedLinear { dim, gain, bound })
    }

    pub fn custom<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        BoundedDriftSpec::Custom { dim, eval: Arc::new(eval) }
    }

    pub fn dim(&self) -> usize {
        match self {
            BoundedDriftSpec::Zero { dim } => *dim,
            BoundedDriftSpec::Constant { value } => value.len(),
            BoundedDriftSpec::ClippedLinear { dim, .. } => *dim,
            BoundedDriftSpec::Custom { dim, .. } => *dim,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BoundedDriftSpec::Zero { .. })
    }

    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            BoundedDriftSpec::Zero { dim } => out[..*dim].fill(0.0),
            BoundedDriftSpec::Constant { value } => out[..value.len()].copy_from_slice(value),
            BoundedDriftSpec::ClippedLinear { dim, gain, bound } => {
                for j in 0..*dim {
                    out[j] = (gain * x[j]).clamp(-bound, *bound);
                }
            }
            BoundedDriftSpec::Custom { dim, eval } => {
                let val = eval(t, x);
                out[..*dim].copy_from_slice(&val[..*dim]);
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            BoundedDriftSpec::Zero { .. } => "zero",
            BoundedDriftSpec::Constant { .. } => "constant",
            BoundedDriftSpec::ClippedLinear { .. } => "clipped-linear",
            BoundedDriftSpec::Custom { .. } => "custom",
        }
    }

    pub(crate) fn descriptor(&self) -> CoefficientDescriptor {
        match self {
            BoundedDriftSpec::Zero { dim } => {
                CoefficientDescriptor { family: "zero".into(), data: vec![*dim as f64] }
            }
            BoundedDriftSpec::Constant { value } => {
                CoefficientDescriptor { family: "constant".into(), data: value.clone() }
            }
            BoundedDriftSpec::ClippedLinear { dim, gain, bound } => CoefficientDescriptor {
                family: "clipped-linear".into(),
                data: vec![*dim as f64, *gain, *bound],
            },
            BoundedDriftSpec::Custom { dim, .. } => {
                CoefficientDescriptor { family: "custom".into(), data: vec![*dim as f64] }
            }
        }
    }
}

impl fmt::Debug for BoundedDriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoundedDriftSpec::{}(dim = {})", self.family_name(), self.dim())
    }
}

// ---------------------------------------------------------------------------
// Control grids
// ---------------------------------------------------------------------------

/// Finite action set of one player: pairwise distinct points in `R^d`,
/// addressed by index `0..len`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlGrid {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl ControlGrid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSpec("control grid must be nonempty".into()));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidSpec("control grid points must have dim >= 1".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::InvalidSpec(format!(
                    "control grid point {i} has dim {}, expected {dim}",
                    p.len()
                )));
            }
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidSpec(format!("control grid point {i} is not finite")));
            }
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i] == points[j] {
                    return Err(Error::InvalidSpec(format!(
                        "control grid points {i} and {j} coincide: {:?}",
                        points[i]
                    )));
                }
            }
        }
        Ok(ControlGrid { dim, points })
    }

    /// 1-d grid from scalar values.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        ControlGrid::new(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|p| p.as_slice())
    }

    /// Index of a control value: first an exact match, then a tolerant match
    /// with absolute/relative slack 1e-9 (covers values re-read from text).
    pub fn index_of(&self, value: &[f64]) -> Option<usize> {
        if value.len() != self.dim {
            return None;
        }
        if let Some(i) = self.points.iter().position(|p| p.as_slice() == value) {
            return Some(i);
        }
        self.points.iter().position(|p| {
            p.iter()
                .zip(value)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())))
        })
    }

    /// Largest Euclidean norm over the grid. Used in growth-bound checks.
    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(|p| norm(p)).fold(0.0, f64::max)
    }

    pub(crate) fn descriptor(&self) -> Vec<Vec<f64>> {
        self.points.clone()
    }
}

/// Serializable summary of one coefficient, used for hashing and manifests.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientDescriptor {
    pub family: String,
    pub data: Vec<f64>,
}
