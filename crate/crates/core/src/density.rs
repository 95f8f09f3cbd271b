//! Transition-density diagnostics.
//!
//! Under uniform ellipticity and bounded drift the transition density of
//! the state admits two-sided Aronson-type Gaussian bounds: constants
//! `C1, C2` and rates `Lambda >= lambda > 0` with
//!
//! ```text
//! C1^{-1} s^{-m/2} exp(-Lambda |z - x|^2 / s)
//!     <= p(t, x; t + s, z) <=
//! C2 s^{-m/2} exp(-lambda |z - x|^2 / s)
//! ```
//!
//! This module estimates the density by a product-Gaussian kernel at one
//! grid node and *fits* such a band to the estimate. The fit is honest in
//! the sense that it can fail: slopes are tied to the least-squares decay
//! rate of `ln p` against `|z - x|^2 / s` (times fixed multipliers), and
//! the intercepts may move away from the fitted line only by a bounded
//! amount. A genuinely Gaussian-like sample always fits inside the band;
//! a sample with a material heavy tail or a cratered bulk forces a larger
//! intercept adjustment than allowed, uncovered lattice points remain, and
//! the check reports failure instead of silently widening the band.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::sde::PathBundle;
use crate::stats;

/// Rectangular product lattice with trapezoid quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    axes: Vec<Vec<f64>>,
}

impl Lattice {
    /// Builds a lattice from per-axis node lists (each strictly increasing,
    /// at least two nodes).
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidParameter {
                name: "axes",
                detail: "lattice needs at least one axis".into(),
            });
        }
        for (j, axis) in axes.iter().enumerate() {
            if axis.len() < 2 {
                return Err(Error::InvalidParameter {
                    name: "axes",
                    detail: format!("axis {j} needs at least two nodes"),
                });
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) || !axis.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "axes",
                    detail: format!("axis {j} must be finite and strictly increasing"),
                });
            }
        }
        Ok(Lattice { axes })
    }

    /// Uniform lattice centered at `center` with the given half-width and
    /// node count per axis.
    pub fn centered(center: &[f64], half_width: f64, points_per_axis: usize) -> Result<Self> {
        if !(half_width > 0.0) || points_per_axis < 2 {
            return Err(Error::InvalidParameter {
                name: "lattice",
                detail: format!(
                    "need positive half-width and >= 2 points, got {half_width} and \
                     {points_per_axis}"
                ),
            });
        }
        let axes = center
            .iter()
            .map(|&c| {
                (0..points_per_axis)
                    .map(|i| {
                        c - half_width
                            + 2.0 * half_width * i as f64 / (points_per_axis - 1) as f64
                    })
                    .collect()
            })
            .collect();
        Lattice::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis(&self, j: usize) -> &[f64] {
        &self.axes[j]
    }

    /// Coordinates of flat index `i` (row-major, last axis fastest).
    pub fn point(&self, i: usize) -> Vec<f64> {
        let mut rem = i;
        let mut out = vec![0.0; self.dim()];
        for j in (0..self.dim()).rev() {
            let n = self.axes[j].len();
            out[j] = self.axes[j][rem % n];
            rem /= n;
        }
        out
    }

    fn axis_weights(axis: &[f64]) -> Vec<f64> {
        let n = axis.len();
        let mut w = vec![0.0; n];
        w[0] = (axis[1] - axis[0]) / 2.0;
        w[n - 1] = (axis[n - 1] - axis[n - 2]) / 2.0;
        for i in 1..n - 1 {
            w[i] = (axis[i + 1] - axis[i - 1]) / 2.0;
        }
        w
    }

    /// Trapezoid weight of flat index `i` (product of axis weights).
    pub fn weight(&self, i: usize) -> f64 {
        let mut rem = i;
        let mut w = 1.0;
        for j in (0..self.dim()).rev() {
            let axis = &self.axes[j];
            let n = axis.len();
            let idx = rem % n;
            rem /= n;
            w *= Self::axis_weights(axis)[idx];
        }
        w
    }

    /// Trapezoid integral of point values over the lattice box.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len(), "one value per lattice point");
        let weights = self.weights();
        values.iter().zip(&weights).map(|(v, w)| v * w).sum()
    }

    /// All trapezoid weights, flat-indexed.
    pub fn weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = self.axes.iter().map(|a| Self::axis_weights(a)).collect();
        let mut out = vec![1.0; self.len()];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut rem = i;
            for j in (0..self.dim()).rev() {
                let n = self.axes[j].len();
                *slot *= per_axis[j][rem % n];
                rem /= n;
            }
        }
        out
    }
}

/// Kernel density estimate of the state at one grid node.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub lattice: Lattice,
    /// Observation time.
    pub s: f64,
    /// Start time of the transition (bundle start).
    pub origin_t: f64,
    /// Start state of the transition.
    pub origin_x: Vec<f64>,
    /// Per-axis kernel bandwidths.
    pub bandwidths: Vec<f64>,
    /// Density values, one per lattice point (flat-indexed).
    pub values: Vec<f64>,
    pub n_paths: usize,
}

impl DensityEstimate {
    /// Trapezoid mass over the lattice box (should be close to 1 when the
    /// box captures the distribution).
    pub fn mass(&self) -> f64 {
        self.lattice.integrate(&self.values)
    }

    pub fn mass_defect(&self) -> f64 {
        (self.mass() - 1.0).abs()
    }
}

/// Minimum sample size for a density estimate.
pub const MIN_DENSITY_PATHS: usize = 1000;

/// Product-Gaussian KDE of `paths` at grid node `node`, evaluated on
/// `lattice`. Bandwidths follow the per-axis normal reference rule
/// `h_j = sd_j (4 / (m + 2))^{1/(m+4)} n^{-1/(m+4)}`.
pub fn estimate_density(
    paths: &PathBundle,
    node: usize,
    lattice: &Lattice,
) -> Result<DensityEstimate> {
    let m = paths.dim;
    let n = paths.n_paths;
    if lattice.dim() != m {
        return Err(Error::LatticeMismatch(format!(
            "lattice dimension {} does not match state dimension {m}",
            lattice.dim()
        )));
    }
    if n < MIN_DENSITY_PATHS {
        return Err(Error::TooFewPaths {
            what: "density estimate",
            required: MIN_DENSITY_PATHS,
            actual: n,
        });
    }
    if node == 0 || node > paths.grid.n_steps {
        return Err(Error::InvalidParameter {
            name: "node",
            detail: format!(
                "density is estimated at interior/terminal nodes 1..={}, got {node}",
                paths.grid.n_steps
            ),
        });
    }

    let mut bandwidths = vec![0.0; m];
    for j in 0..m {
        let column: Vec<f64> = (0..n).map(|p| paths.state(p, node)[j]).collect();
        let sd = stats::std_dev(&column);
        if !(sd > 0.0) {
            return Err(Error::InvalidParameter {
                name: "paths",
                detail: format!("state coordinate {j} is degenerate at node {node}"),
            });
        }
        bandwidths[j] =
            sd * (4.0 / (m as f64 + 2.0)).powf(1.0 / (m as f64 + 4.0))
                * (n as f64).powf(-1.0 / (m as f64 + 4.0));
    }

    let norm: f64 =
        bandwidths.iter().map(|h| h * (2.0 * std::f64::consts::PI).sqrt()).product::<f64>()
            * n as f64;
    let bw = &bandwidths;
    let values: Vec<f64> = par::map_indexed(lattice.len(), |i| {
        let z = lattice.point(i);
        let mut acc = 0.0;
        for p in 0..n {
            let x = paths.state(p, node);
            let mut e = 0.0;
            for j in 0..m {
                let d = (z[j] - x[j]) / bw[j];
                e += d * d;
            }
            acc += (-0.5 * e).exp();
        }
        acc / norm
    });

    Ok(DensityEstimate {
        lattice: lattice.clone(),
        s: paths.grid.node_time(node),
        origin_t: paths.grid.t_start,
        origin_x: paths.state(0, 0).to_vec(),
        bandwidths,
        values,
        n_paths: n,
    })
}

/// How the Gaussian band is fitted to an estimate.
#[derive(Debug, Clone, Copy)]
pub struct FitStrategy {
    /// Lower-bound rate is this multiple of the fitted decay rate.
    pub lower_slope_mult: f64,
    /// Upper-bound rate is this multiple of the fitted decay rate.
    pub upper_slope_mult: f64,
    /// Largest allowed drop of the lower intercept below the fitted line
    /// (in log units).
    pub max_lower_deflation_ln: f64,
    /// Largest allowed rise of the upper intercept above the fitted line
    /// (in log units). This is the clamp that catches heavy tails.
    pub max_upper_inflation_ln: f64,
    /// Lattice points below this fraction of the peak are left out of the
    /// fit (their log-values are dominated by kernel noise).
    pub fit_floor_rel: f64,
    /// Required fraction of fit points inside the band.
    pub min_coverage: f64,
}

impl Default for FitStrategy {
    fn default() -> Self {
        FitStrategy {
            lower_slope_mult: 3.0,
            upper_slope_mult: 0.8,
            max_lower_deflation_ln: 6.0,
            max_upper_inflation_ln: 1.5,
            fit_floor_rel: 1e-3,
            min_coverage: 0.99,
        }
    }
}

/// Outcome of the Gaussian-band fit.
#[derive(Debug, Clone, Serialize)]
pub struct AronsonReport {
    /// Least-squares decay rate of `ln p` against `|z - x|^2 / s`.
    pub c_hat: f64,
    /// Fitted log-intercept.
    pub a_fit: f64,
    /// Lower-bound rate (`lower_slope_mult * c_hat`).
    pub rate_lower: f64,
    /// Upper-bound rate (`upper_slope_mult * c_hat`).
    pub rate_upper: f64,
    /// Lower/upper log-intercepts after construction and clamping.
    pub a_lower: f64,
    pub a_upper: f64,
    pub lower_clamped: bool,
    pub upper_clamped: bool,
    pub n_fit_points: usize,
    /// Fit points strictly below the lower bound / above the upper bound.
    pub n_below: usize,
    pub n_above: usize,
    /// Fraction of fit points inside the band.
    pub coverage: f64,
    /// Lower bound does not exceed the upper bound at any lattice point.
    pub ordering_ok: bool,
    pub passed: bool,
}

/// Fits the two-sided Gaussian band to a density estimate.
///
/// Intercepts are constructed so the band covers every fit point, then
/// clamped to a bounded distance from the fitted line; when the clamp
/// binds, uncovered points remain and coverage drops. `passed` requires a
/// positive decay rate, ordering of the bounds, and coverage at least
/// `min_coverage`.
pub fn check_aronson_envelope(
    est: &DensityEstimate,
    strategy: &FitStrategy,
) -> Result<AronsonReport> {
    let s = est.s - est.origin_t;
    debug_assert!(s > 0.0);
    let peak = est.values.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::InvalidParameter {
            name: "estimate",
            detail: "density estimate is identically zero on the lattice".into(),
        });
    }
    let floor = strategy.fit_floor_rel * peak;

    // (rho, ln p) over fit points, rho = |z - x|^2 / s.
    let mut rho = Vec::new();
    let mut logs = Vec::new();
    for (i, &v) in est.values.iter().enumerate() {
        if v >= floor {
            let z = est.lattice.point(i);
            let r2: f64 =
                z.iter().zip(&est.origin_x).map(|(a, b)| (a - b) * (a - b)).sum();
            rho.push(r2 / s);
            logs.push(v.ln());
        }
    }
    let nf = rho.len();
    if nf < 8 {
        return Err(Error::TooFewPaths { what: "band fit points", required: 8, actual: nf });
    }

    // Least squares ln p = a - c rho.
    let mr = stats::mean(&rho);
    let ml = stats::mean(&logs);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..nf {
        sxx += (rho[i] - mr) * (rho[i] - mr);
        sxy += (rho[i] - mr) * (logs[i] - ml);
    }
    if !(sxx > 0.0) {
        return Err(Error::InvalidParameter {
            name: "estimate",
            detail: "all fit points sit at the same radius; cannot fit a decay rate".into(),
        });
    }
    let c_hat = -sxy / sxx;
    let a_fit = ml + c_hat * mr;

    let rate_lower = strategy.lower_slope_mult * c_hat;
    let rate_upper = strategy.upper_slope_mult * c_hat;

    // Largest lower intercept below all points, smallest upper intercept
    // above all points; then clamp.
    let mut a_lower = f64::INFINITY;
    let mut a_upper = f64::NEG_INFINITY;
    for i in 0..nf {
        a_lower = a_lower.min(logs[i] + rate_lower * rho[i]);
        a_upper = a_upper.max(logs[i] + rate_upper * rho[i]);
    }
    let mut lower_clamped = false;
    let mut upper_clamped = false;
    if a_lower < a_fit - strategy.max_lower_deflation_ln {
        a_lower = a_fit - strategy.max_lower_deflation_ln;
        lower_clamped = true;
    }
    if a_upper > a_fit + strategy.max_upper_inflation_ln {
        a_upper = a_fit + strategy.max_upper_inflation_ln;
        upper_clamped = true;
    }

    const SLACK: f64 = 1e-12;
    let mut n_below = 0;
    let mut n_above = 0;
    for i in 0..nf {
        if logs[i] < a_lower - rate_lower * rho[i] - SLACK {
            n_below += 1;
        }
        if logs[i] > a_upper - rate_upper * rho[i] + SLACK {
            n_above += 1;
        }
    }
    let coverage = 1.0 - (n_below + n_above) as f64 / nf as f64;

    // Ordering at every lattice point (not only fit points).
    let mut ordering_ok = true;
    for i in 0..est.lattice.len() {
        let z = est.lattice.point(i);
        let r2: f64 = z.iter().zip(&est.origin_x).map(|(a, b)| (a - b) * (a - b)).sum();
        let r = r2 / s;
        if a_lower - rate_lower * r > a_upper - rate_upper * r + SLACK {
            ordering_ok = false;
            break;
        }
    }

    let passed = c_hat > 0.0 && ordering_ok && coverage >= strategy.min_coverage;
    Ok(AronsonReport {
        c_hat,
        a_fit,
        rate_lower,
        rate_upper,
        a_lower,
        a_upper,
        lower_clamped,
        upper_clamped,
        n_fit_points: nf,
        n_below,
        n_above,
        coverage,
        ordering_ok,
        passed,
    })
}

/// Relative denominator floor of [`domination_ratio`].
pub const DOMINATION_FLOOR_REL: f64 = 1e-3;

/// Largest numerator-mass fraction that may sit on floored denominator
/// points before the ratio is declared inconclusive.
pub const DOMINATION_EXCLUDED_LIMIT: f64 = 0.01;

/// `L^q` comparison of two densities on a shared lattice.
#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    pub q: f64,
    pub delta: f64,
    /// `( integral (num/den)^q den dz )^{1/q}` over retained points.
    pub value: f64,
    /// Fraction of numerator mass on excluded (floored) points.
    pub excluded_mass: f64,
    /// False when too much numerator mass was excluded for the value to
    /// mean anything.
    pub conclusive: bool,
}

/// Measures how strongly `num` is dominated by `den` in `L^q(den)`:
/// the `q`-norm of the likelihood ratio. Identical estimates give
/// `mass^{1/q}`. Points where the denominator falls below a relative
/// floor are excluded; if they carry more than 1% of the numerator's
/// mass the report is marked inconclusive.
pub fn domination_ratio(
    num: &DensityEstimate,
    den: &DensityEstimate,
    q: f64,
    delta: f64,
) -> Result<DominationReport> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::InvalidParameter {
            name: "q",
            detail: format!("norm order must be finite and >= 1, got {q}"),
        });
    }
    if num.lattice != den.lattice {
        return Err(Error::LatticeMismatch("estimates use different lattices".into()));
    }
    if num.s != den.s || num.origin_t != den.origin_t {
        return Err(Error::LatticeMismatch(format!(
            "estimates observe different times: {} vs {}",
            num.s, den.s
        )));
    }
    if !(delta > 0.0) || num.s - num.origin_t < delta {
        return Err(Error::InvalidParameter {
            name: "delta",
            detail: format!(
                "need observation time at least delta={delta} past the origin, have {}",
                num.s - num.origin_t
            ),
        });
    }

    let weights = num.lattice.weights();
    let den_peak = den.values.iter().cloned().fold(0.0, f64::max);
    let floor = DOMINATION_FLOOR_REL * den_peak;
    let mut acc = 0.0;
    let mut num_mass = 0.0;
    let mut excluded = 0.0;
    for i in 0..num.values.len() {
        let w = weights[i];
        num_mass += w * num.values[i];
        if den.values[i] < floor {
            excluded += w * num.values[i];
        } else {
            acc += w * den.values[i] * (num.values[i] / den.values[i]).powf(q);
        }
    }
    let excluded_mass = if num_mass > 0.0 { excluded / num_mass } else { 0.0 };
    Ok(DominationReport {
        q,
        delta,
        value: acc.powf(1.0 / q),
        excluded_mass,
        conclusive: excluded_mass <= DOMINATION_EXCLUDED_LIMIT,
    })
}

/// Bootstrap standard errors of the density values: resamples paths with
/// replacement (fixed bandwidths), recomputes the KDE, and reports the
/// per-point standard deviation across replicas.
pub fn bootstrap_se(
    est: &DensityEstimate,
    paths: &PathBundle,
    node: usize,
    n_boot: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_boot < 2 {
        return Err(Error::InvalidParameter {
            name: "n_boot",
            detail: "need at least two bootstrap replicas".into(),
        });
    }
    let n = paths.n_paths;
    let m = paths.dim;
    let bw = &est.bandwidths;
    let norm: f64 =
        bw.iter().map(|h| h * (2.0 * std::f64::consts::PI).sqrt()).product::<f64>() * n as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(stats::mix_seed(seed, 0xB007));
    let mut acc = vec![0.0; est.lattice.len()];
    let mut acc_sq = vec![0.0; est.lattice.len()];
    for _ in 0..n_boot {
        let draw: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let replica: Vec<f64> = par::map_indexed(est.lattice.len(), |i| {
            let z = est.lattice.point(i);
            let mut sum = 0.0;
            for &p in &draw {
                let x = paths.state(p, node);
                let mut e = 0.0;
                for j in 0..m {
                    let d = (z[j] - x[j]) / bw[j];
                    e += d * d;
                }
                sum += (-0.5 * e).exp();
            }
            sum / norm
        });
        for (i, v) in replica.into_iter().enumerate() {
            acc[i] += v;
            acc_sq[i] += v * v;
        }
    }
    let b = n_boot as f64;
    Ok((0..est.lattice.len())
        .map(|i| {
            let mean = acc[i] / b;
            let var = (acc_sq[i] / b - mean * mean).max(0.0) * b / (b - 1.0);
            var.sqrt()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ControlGrid, CostSpec, DiffusionSpec, DriftSpec, GameModel, ModelConstants, TerminalSpec,
    };
    use crate::sde::{simulate_driftless, TimeGrid};
    use approx::assert_relative_eq;
    use ndarray::Array3;

    fn unit_model() -> GameModel {
        GameModel::new(
            1.0,
            vec![0.0],
            DiffusionSpec::identity(1),
            DriftSpec::zero(1),
            [CostSpec::constant(0.0), CostSpec::constant(0.0)],
            [TerminalSpec::constant(0.0), TerminalSpec::constant(0.0)],
            [ControlGrid::scalar(&[0.0]).unwrap(), ControlGrid::scalar(&[0.0]).unwrap()],
            1.0,
            ModelConstants::new(2.0, 1.0, 0.5, 0.5, 1.0, 1.0, 1.0, 1.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn trapezoid_weights_integrate_constants_exactly() {
        let lat = Lattice::centered(&[0.0], 5.0, 101).unwrap();
        assert_relative_eq!(lat.integrate(&vec![1.0; 101]), 10.0, epsilon = 1e-12);
        let lat2 = Lattice::centered(&[0.0, 1.0], 2.0, 11).unwrap();
        assert_eq!(lat2.len(), 121);
        assert_relative_eq!(lat2.integrate(&vec![1.0; 121]), 16.0, epsilon = 1e-12);
    }

    #[test]
    fn lattice_point_round_trips_row_major() {
        let lat = Lattice::new(vec![vec![0.0, 1.0], vec![10.0, 20.0, 30.0]]).unwrap();
        assert_eq!(lat.len(), 6);
        assert_eq!(lat.point(0), vec![0.0, 10.0]);
        assert_eq!(lat.point(2), vec![0.0, 30.0]);
        assert_eq!(lat.point(5), vec![1.0, 30.0]);
    }

    #[test]
    fn heat_kernel_band_passes() {
        // Driftless unit diffusion from 0: X_1 ~ N(0, 1).
        let model = unit_model();
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let paths = simulate_driftless(&model, grid, 20_000, 13).unwrap();
        let lat = Lattice::centered(&[0.0], 5.0, 101).unwrap();
        let est = estimate_density(&paths, 8, &lat).unwrap();
        assert!(est.mass_defect() < 0.02, "mass defect {}", est.mass_defect());
        let report = check_aronson_envelope(&est, &FitStrategy::default()).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.c_hat > 0.3 && report.c_hat < 0.7, "c_hat {}", report.c_hat);
    }

    #[test]
    fn contaminated_tail_fails_the_band() {
        // 95% standard normal bulk, 5% spread far out: the upper intercept
        // clamp binds and coverage collapses.
        let model = unit_model();
        let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let n = 4000;
        let mut paths = simulate_driftless(&model, grid, n, 29).unwrap();
        let mut states = Array3::zeros((n, 2, 1));
        for p in 0..n {
            let z = paths.state(p, 1)[0];
            states[(p, 1, 0)] = if p % 20 == 0 {
                let sign = if p % 40 == 0 { 1.0 } else { -1.0 };
                sign * (6.0 + (p % 200) as f64 / 50.0)
            } else {
                z
            };
        }
        paths.states = states;
        let lat = Lattice::centered(&[0.0], 12.0, 121).unwrap();
        let est = estimate_density(&paths, 1, &lat).unwrap();
        let report = check_aronson_envelope(&est, &FitStrategy::default()).unwrap();
        assert!(!report.passed, "{report:?}");
        assert!(report.upper_clamped);
    }

    #[test]
    fn domination_of_identical_estimates_is_mass_root() {
        let model = unit_model();
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let paths = simulate_driftless(&model, grid, 5_000, 3).unwrap();
        // Narrow box: no lattice point falls below the denominator floor,
        // so the ratio of an estimate against itself is exactly the
        // retained-mass root.
        let lat = Lattice::centered(&[0.0], 2.0, 41).unwrap();
        let est = estimate_density(&paths, 4, &lat).unwrap();
        let report = domination_ratio(&est, &est, 1.5, 0.5).unwrap();
        assert!(report.conclusive);
        assert_eq!(report.excluded_mass, 0.0);
        assert_relative_eq!(report.value, est.mass().powf(1.0 / 1.5), epsilon = 1e-10);
        // Wide box: far-tail points sit under the floor and are excluded,
        // but they carry too little mass to spoil the verdict.
        let wide = Lattice::centered(&[0.0], 5.0, 81).unwrap();
        let est_w = estimate_density(&paths, 4, &wide).unwrap();
        let report_w = domination_ratio(&est_w, &est_w, 1.5, 0.5).unwrap();
        assert!(report_w.conclusive);
        assert!(report_w.excluded_mass > 0.0 && report_w.excluded_mass < 0.01);
        // Mismatched lattice is rejected.
        let other = Lattice::centered(&[0.0], 4.0, 81).unwrap();
        let est2 = estimate_density(&paths, 4, &other).unwrap();
        assert!(matches!(
            domination_ratio(&est_w, &est2, 1.5, 0.5),
            Err(Error::LatticeMismatch(_))
        ));
    }

    #[test]
    fn density_needs_enough_paths_and_interior_node() {
        let model = unit_model();
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let small = simulate_driftless(&model, grid, 100, 3).unwrap();
        let lat = Lattice::centered(&[0.0], 5.0, 11).unwrap();
        assert!(matches!(
            estimate_density(&small, 4, &lat),
            Err(Error::TooFewPaths { .. })
        ));
        let ok = simulate_driftless(&model, grid, 1500, 3).unwrap();
        assert!(estimate_density(&ok, 0, &lat).is_err());
        assert!(estimate_density(&ok, 4, &lat).is_ok());
    }

    #[test]
    fn bootstrap_se_scales_with_density() {
        let model = unit_model();
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let paths = simulate_driftless(&model, grid, 2_000, 17).unwrap();
        let lat = Lattice::centered(&[0.0], 4.0, 17).unwrap();
        let est = estimate_density(&paths, 2, &lat).unwrap();
        let se = bootstrap_se(&est, &paths, 2, 16, 5).unwrap();
        assert_eq!(se.len(), 17);
        assert!(se.iter().all(|v| v.is_finite() && *v >= 0.0));
        // Error near the peak exceeds error in the far tail.
        assert!(se[8] > se[0]);
    }
}
