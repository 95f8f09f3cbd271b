//! Regression bases for the conditional expectations of the backward solver.
//!
//! Two families:
//!
//! * [`RegressionBasis::Polynomial`] — all monomials of total degree up to
//!   `degree`; the default (degree 3) for state dimension one or two.
//! * [`RegressionBasis::PiecewiseLinear`] — an intercept, the coordinates,
//!   and per-axis hinge functions `(x_j - q)_+` anchored at sample
//!   quantiles; the default in higher dimension, where total-degree
//!   polynomial bases grow too fast.
//!
//! A [`NodeRegression`] factors the normal equations of the design matrix
//! once per time node and is then reused for every response regressed at
//! that node (the conditional mean, each martingale-increment component,
//! and every inner refinement sweep). Normal-equation accumulation is
//! sequential in path order so results do not depend on the worker count.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Basis family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionBasis {
    /// Monomials of total degree `<= degree`.
    Polynomial { degree: usize },
    /// Intercept, coordinates, and `n_knots` quantile hinges per axis.
    PiecewiseLinear { n_knots: usize },
}

impl RegressionBasis {
    /// Degree-3 polynomials for `dim <= 2`, four hinges per axis otherwise.
    pub fn default_for_dim(dim: usize) -> Self {
        if dim <= 2 {
            RegressionBasis::Polynomial { degree: 3 }
        } else {
            RegressionBasis::PiecewiseLinear { n_knots: 4 }
        }
    }

    /// Number of features the basis produces in dimension `dim`.
    pub fn n_features(&self, dim: usize) -> usize {
        match *self {
            RegressionBasis::Polynomial { degree } => n_monomials(dim, degree),
            RegressionBasis::PiecewiseLinear { n_knots } => 1 + dim + dim * n_knots,
        }
    }

    /// Binds the basis to a sample of states (piecewise-linear knots are
    /// placed at per-axis sample quantiles).
    pub fn fit(&self, states: ArrayView2<'_, f64>) -> Result<FittedBasis> {
        let dim = states.ncols();
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                detail: "cannot build a basis over zero coordinates".into(),
            });
        }
        let terms = match *self {
            RegressionBasis::Polynomial { degree } => {
                if degree == 0 {
                    return Err(Error::InvalidParameter {
                        name: "degree",
                        detail: "polynomial basis needs degree >= 1".into(),
                    });
                }
                BasisTerms::Monomials(monomial_powers(dim, degree))
            }
            RegressionBasis::PiecewiseLinear { n_knots } => {
                if n_knots == 0 {
                    return Err(Error::InvalidParameter {
                        name: "n_knots",
                        detail: "piecewise-linear basis needs at least one knot per axis".into(),
                    });
                }
                let mut knots = Vec::with_capacity(dim);
                for j in 0..dim {
                    let mut column: Vec<f64> = states.column(j).iter().copied().collect();
                    column.sort_by(|a, b| a.partial_cmp(b).expect("finite states"));
                    let qs: Vec<f64> = (1..=n_knots)
                        .map(|l| {
                            crate::stats::sorted_quantile(
                                &column,
                                l as f64 / (n_knots as f64 + 1.0),
                            )
                        })
                        .collect();
                    knots.push(qs);
                }
                BasisTerms::Hinges { knots }
            }
        };
        Ok(FittedBasis { dim, terms })
    }
}

#[derive(Debug, Clone)]
enum BasisTerms {
    /// Exponent vectors, one per monomial.
    Monomials(Vec<Vec<u8>>),
    /// Per-axis hinge anchors.
    Hinges { knots: Vec<Vec<f64>> },
}

/// A basis bound to a concrete sample (knots resolved).
#[derive(Debug, Clone)]
pub struct FittedBasis {
    dim: usize,
    terms: BasisTerms,
}

impl FittedBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_features(&self) -> usize {
        match &self.terms {
            BasisTerms::Monomials(powers) => powers.len(),
            BasisTerms::Hinges { knots } => 1 + self.dim + knots.iter().map(Vec::len).sum::<usize>(),
        }
    }

    /// Writes the feature vector of `x` into `out` (the first feature is
    /// always the constant 1).
    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.n_features());
        match &self.terms {
            BasisTerms::Monomials(powers) => {
                for (slot, alpha) in out.iter_mut().zip(powers) {
                    let mut v = 1.0;
                    for (j, &a) in alpha.iter().enumerate() {
                        for _ in 0..a {
                            v *= x[j];
                        }
                    }
                    *slot = v;
                }
            }
            BasisTerms::Hinges { knots } => {
                out[0] = 1.0;
                out[1..1 + self.dim].copy_from_slice(x);
                let mut idx = 1 + self.dim;
                for (j, axis_knots) in knots.iter().enumerate() {
                    for &q in axis_knots {
                        out[idx] = (x[j] - q).max(0.0);
                        idx += 1;
                    }
                }
            }
        }
    }

    /// Evaluates a fitted function `features(x) . coeffs` at a fresh point.
    pub fn eval(&self, coeffs: &[f64], x: &[f64]) -> f64 {
        let mut phi = vec![0.0; self.n_features()];
        self.features_into(x, &mut phi);
        phi.iter().zip(coeffs).map(|(a, b)| a * b).sum()
    }

    /// Writes the gradient of the fitted function `features(x) . coeffs`
    /// into `out`. Hinge features use the one-sided derivative from the
    /// right at their kinks.
    pub fn eval_gradient_into(&self, coeffs: &[f64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        out.fill(0.0);
        match &self.terms {
            BasisTerms::Monomials(powers) => {
                for (alpha, &c) in powers.iter().zip(coeffs) {
                    for (j, &a) in alpha.iter().enumerate() {
                        if a == 0 {
                            continue;
                        }
                        let mut v = a as f64 * c;
                        for _ in 1..a {
                            v *= x[j];
                        }
                        for (l, &b) in alpha.iter().enumerate() {
                            if l == j {
                                continue;
                            }
                            for _ in 0..b {
                                v *= x[l];
                            }
                        }
                        out[j] += v;
                    }
                }
            }
            BasisTerms::Hinges { knots } => {
                for j in 0..self.dim {
                    out[j] = coeffs[1 + j];
                }
                let mut idx = 1 + self.dim;
                for (j, axis_knots) in knots.iter().enumerate() {
                    for &q in axis_knots {
                        if x[j] >= q {
                            out[j] += coeffs[idx];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }

    /// Serializable description, sufficient to rebuild the basis when
    /// exported solution tables are reloaded.
    pub fn descriptor(&self) -> BasisDescriptor {
        match &self.terms {
            BasisTerms::Monomials(powers) => BasisDescriptor {
                family: "polynomial".into(),
                dim: self.dim,
                degree: Some(
                    powers.iter().map(|a| a.iter().map(|&p| p as usize).sum()).max().unwrap_or(0),
                ),
                knots: None,
            },
            BasisTerms::Hinges { knots } => BasisDescriptor {
                family: "piecewise-linear".into(),
                dim: self.dim,
                degree: None,
                knots: Some(knots.clone()),
            },
        }
    }

    /// Rebuilds a basis from its [`BasisDescriptor`].
    pub fn from_descriptor(desc: &BasisDescriptor) -> Result<Self> {
        match desc.family.as_str() {
            "polynomial" => {
                let degree = desc.degree.ok_or_else(|| Error::MalformedArtifact {
                    path: "basis descriptor".into(),
                    detail: "polynomial family without a degree".into(),
                })?;
                if desc.dim == 0 || degree == 0 {
                    return Err(Error::MalformedArtifact {
                        path: "basis descriptor".into(),
                        detail: format!("bad polynomial shape dim={} degree={degree}", desc.dim),
                    });
                }
                Ok(FittedBasis {
                    dim: desc.dim,
                    terms: BasisTerms::Monomials(monomial_powers(desc.dim, degree)),
                })
            }
            "piecewise-linear" => {
                let knots = desc.knots.clone().ok_or_else(|| Error::MalformedArtifact {
                    path: "basis descriptor".into(),
                    detail: "piecewise-linear family without knots".into(),
                })?;
                if knots.len() != desc.dim || desc.dim == 0 {
                    return Err(Error::MalformedArtifact {
                        path: "basis descriptor".into(),
                        detail: format!(
                            "expected {} knot axes, found {}",
                            desc.dim,
                            knots.len()
                        ),
                    });
                }
                Ok(FittedBasis { dim: desc.dim, terms: BasisTerms::Hinges { knots } })
            }
            other => Err(Error::MalformedArtifact {
                path: "basis descriptor".into(),
                detail: format!("unknown basis family `{other}`"),
            }),
        }
    }
}

/// Portable description of a [`FittedBasis`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub family: String,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub knots: Option<Vec<Vec<f64>>>,
}

/// Exponent vectors of all monomials in `dim` variables with total degree
/// `<= degree`, ordered by total degree then lexicographically.
fn monomial_powers(dim: usize, degree: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut current = vec![0u8; dim];
    for total in 0..=degree {
        emit_powers(&mut out, &mut current, 0, total);
    }
    out
}

fn emit_powers(out: &mut Vec<Vec<u8>>, current: &mut Vec<u8>, axis: usize, remaining: usize) {
    if axis + 1 == current.len() {
        current[axis] = remaining as u8;
        out.push(current.clone());
        current[axis] = 0;
        return;
    }
    for a in (0..=remaining).rev() {
        current[axis] = a as u8;
        emit_powers(out, current, axis + 1, remaining - a);
    }
    current[axis] = 0;
}

fn n_monomials(dim: usize, degree: usize) -> usize {
    // C(dim + degree, degree)
    let mut n = 1usize;
    for i in 1..=degree {
        n = n * (dim + i) / i;
    }
    n
}

/// Ridge strengths tried in order when the plain normal equations are not
/// positive definite.
const RIDGE_LADDER: [f64; 3] = [1e-8, 1e-4, 1.0];

/// Least-squares machinery for one time node: the design matrix and a
/// Cholesky factor of the normal equations, reused across responses.
pub struct NodeRegression {
    design: Array2<f64>,
    chol: Cholesky<f64, Dyn>,
    ridge_used: bool,
}

impl NodeRegression {
    /// Builds the design matrix over the sample (rows in parallel) and
    /// factors the normal equations (sequential accumulation).
    pub fn new(basis: &FittedBasis, states: ArrayView2<'_, f64>) -> Result<Self> {
        let n = states.nrows();
        let nf = basis.n_features();
        if n == 0 {
            return Err(Error::TooFewPaths { what: "regression sample", required: 1, actual: 0 });
        }
        let mut design = Array2::zeros((n, nf));
        par::for_each_row_mut(&mut design, |p, mut row| {
            let x = states.row(p);
            basis.features_into(
                x.as_slice().expect("contiguous state row"),
                row.as_slice_mut().expect("contiguous design row"),
            );
        });

        let mut gram = DMatrix::zeros(nf, nf);
        for p in 0..n {
            let row = design.row(p);
            let row = row.as_slice().expect("contiguous design row");
            for a in 0..nf {
                for b in a..nf {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..nf {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }

        let mut ridge_used = false;
        let chol = match Cholesky::new(gram.clone()) {
            Some(c) => c,
            None => {
                ridge_used = true;
                let mut found = None;
                for lambda in RIDGE_LADDER {
                    let mut damped = gram.clone();
                    for a in 0..nf {
                        damped[(a, a)] += lambda * (1.0 + gram[(a, a)]);
                    }
                    if let Some(c) = Cholesky::new(damped) {
                        found = Some(c);
                        break;
                    }
                }
                found.ok_or_else(|| Error::InvalidParameter {
                    name: "basis",
                    detail: "normal equations not positive definite even with ridge damping"
                        .into(),
                })?
            }
        };

        Ok(NodeRegression { design, chol, ridge_used })
    }

    pub fn ridge_used(&self) -> bool {
        self.ridge_used
    }

    pub fn n_samples(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.design.ncols()
    }

    /// Least-squares coefficients for response `y`.
    pub fn fit(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.design.nrows(), "one response per sample row");
        let nf = self.design.ncols();
        let mut rhs = DVector::zeros(nf);
        for (p, &yp) in y.iter().enumerate() {
            let row = self.design.row(p);
            let row = row.as_slice().expect("contiguous design row");
            for a in 0..nf {
                rhs[a] += row[a] * yp;
            }
        }
        self.chol.solve_mut(&mut rhs);
        rhs.as_slice().to_vec()
    }

    /// Writes the fitted values `design . coeffs` into `out`.
    pub fn predict_into(&self, coeffs: &[f64], out: &mut [f64]) {
        assert_eq!(out.len(), self.design.nrows());
        assert_eq!(coeffs.len(), self.design.ncols());
        for (p, slot) in out.iter_mut().enumerate() {
            let row = self.design.row(p);
            let row = row.as_slice().expect("contiguous design row");
            *slot = row.iter().zip(coeffs).map(|(a, b)| a * b).sum();
        }
    }
}
