//! Exponential change-of-measure weights.
//!
//! For a kernel `phi(t, x)` the discrete Doleans-Dade exponential along a
//! path is
//!
//! ```text
//! zeta_0 = 1,    zeta_{k+1} = zeta_k * exp( phi_k . dB_k - |phi_k|^2 dt / 2 )
//! ```
//!
//! and `E[zeta_T] = 1` whenever the kernel is integrable enough. Weighting
//! driftless paths by `zeta_T` reproduces expectations under the dynamics
//! with drift `sigma * phi`; with `phi = sigma^{-1} f(., ., u, v)` that is
//! exactly the controlled game dynamics, which is how payoffs are evaluated
//! without re-simulating per control.
//!
//! Everything is accumulated in log space. A path whose log-weight leaves
//! `[-700, 700]` at any node is flagged and excluded from estimators (the
//! flag count is reported); exponentiation happens only at the point of use.

use ndarray::Array2;
use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::feedback::FeedbackControls;
use crate::model::{GameModel, Player};
use crate::par;
use crate::sde::PathBundle;
use crate::stats;

/// Absolute log-weight beyond which a path is flagged.
pub const LOG_WEIGHT_LIMIT: f64 = 700.0;

/// Girsanov kernel `phi(t, x)`.
#[derive(Clone)]
pub enum IntegrandSpec {
    /// `phi == 0`: weights are identically one.
    Zero,
    /// Constant kernel.
    Constant(Vec<f64>),
    /// `phi = sigma^{-1}(t, x) f(t, x, u, v)` with controls from a feedback
    /// map: the kernel that turns driftless paths into controlled ones.
    GameDrift { feedback: FeedbackControls },
    /// Arbitrary kernel `(step, t, x) -> phi`.
    Custom(Arc<dyn Fn(usize, f64, &[f64]) -> Vec<f64> + Send + Sync>),
}

impl IntegrandSpec {
    pub fn game_drift(feedback: FeedbackControls) -> Self {
        IntegrandSpec::GameDrift { feedback }
    }

    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(usize, f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        IntegrandSpec::Custom(Arc::new(f))
    }

    /// Writes `phi(t_k, x)` into `out`.
    fn eval_into(
        &self,
        model: &GameModel,
        k: usize,
        t: f64,
        x: &[f64],
        out: &mut [f64],
        f_buf: &mut [f64],
    ) -> Result<()> {
        match self {
            IntegrandSpec::Zero => out.fill(0.0),
            IntegrandSpec::Constant(c) => out.copy_from_slice(c),
            IntegrandSpec::GameDrift { feedback } => {
                let (ui, vi) = feedback.eval_indices(model, k, t, x)?;
                let u = model.grid(Player::One).point(ui);
                let v = model.grid(Player::Two).point(vi);
                model.drift_into(t, x, u, v, f_buf);
                model.sigma().inv_mul_into(t, x, f_buf, out)?;
            }
            IntegrandSpec::Custom(f) => out.copy_from_slice(&f(k, t, x)),
        }
        Ok(())
    }
}

/// Per-path, per-node weight process.
#[derive(Debug, Clone)]
pub struct WeightSeries {
    pub n_paths: usize,
    pub n_nodes: usize,
    /// `log zeta` at every node; row `p`, column `k`.
    log_weights: Array2<f64>,
    /// Paths whose log-weight left the admissible window.
    pub flagged: Vec<bool>,
    pub n_flagged: usize,
}

impl WeightSeries {
    /// `zeta` of path `p` at node `k` (exactly 1 at the start node).
    pub fn weight(&self, p: usize, k: usize) -> f64 {
        self.log_weights[(p, k)].exp()
    }

    pub fn log_weight(&self, p: usize, k: usize) -> f64 {
        self.log_weights[(p, k)]
    }

    pub fn is_flagged(&self, p: usize) -> bool {
        self.flagged[p]
    }

    /// Terminal weights of all paths (flagged ones included; filter with
    /// [`WeightSeries::is_flagged`]).
    pub fn terminal_weights(&self) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.weight(p, self.n_nodes - 1)).collect()
    }

    pub fn n_used(&self) -> usize {
        self.n_paths - self.n_flagged
    }
}

/// Accumulates the Doleans-Dade exponential of `integrand` along each path.
pub fn dolean_dade(
    model: &GameModel,
    paths: &PathBundle,
    integrand: &IntegrandSpec,
) -> Result<WeightSeries> {
    let n = paths.grid.n_steps;
    let m = paths.dim;
    let dt = paths.grid.dt();

    let rows: Vec<(Vec<f64>, bool)> = par::try_map_indexed(paths.n_paths, |p| -> Result<_> {
        let mut row = vec![0.0; n + 1];
        let mut phi = vec![0.0; m];
        let mut f_buf = vec![0.0; m];
        let mut flagged = false;
        let mut acc = 0.0;
        for k in 0..n {
            let t = paths.grid.node_time(k);
            let x = paths.state(p, k);
            integrand.eval_into(model, k, t, x, &mut phi, &mut f_buf)?;
            let db = paths.increment(p, k);
            let mut dot = 0.0;
            let mut sq = 0.0;
            for j in 0..m {
                dot += phi[j] * db[j];
                sq += phi[j] * phi[j];
            }
            acc += dot - 0.5 * sq * dt;
            row[k + 1] = acc;
            if acc.abs() > LOG_WEIGHT_LIMIT {
                flagged = true;
            }
        }
        Ok((row, flagged))
    })?;

    let mut log_weights = Array2::zeros((paths.n_paths, n + 1));
    let mut flagged = vec![false; paths.n_paths];
    let mut n_flagged = 0;
    for (p, (row, flag)) in rows.into_iter().enumerate() {
        log_weights
            .row_mut(p)
            .as_slice_mut()
            .expect("contiguous")
            .copy_from_slice(&row);
        flagged[p] = flag;
        if flag {
            n_flagged += 1;
        }
    }

    Ok(WeightSeries { n_paths: paths.n_paths, n_nodes: n + 1, log_weights, flagged, n_flagged })
}

/// One probed moment order.
#[derive(Debug, Clone, Serialize)]
pub struct LpProbeEntry {
    pub p: f64,
    /// Empirical `E[zeta_T^p]` over unflagged paths.
    pub estimate: f64,
    /// Same estimate from the first half of the sample.
    pub half_estimate: f64,
    pub finite: bool,
    /// Estimate moves by less than 10% when the sample is halved.
    pub stable: bool,
}

/// Report of [`probe_lp_bound`].
#[derive(Debug, Clone, Serialize)]
pub struct LpBoundReport {
    pub entries: Vec<LpProbeEntry>,
    /// Largest probed order whose estimate is finite and stable.
    pub largest_stable_p: Option<f64>,
    pub n_used: usize,
    pub n_flagged: usize,
}

/// Probes for which orders `p` in `(1, 2)` the terminal weight appears to
/// have a finite `p`-th moment: the estimate must be finite and move by less
/// than 10% when the sample is halved.
pub fn probe_lp_bound(weights: &WeightSeries, p_grid: &[f64]) -> Result<LpBoundReport> {
    for &p in p_grid {
        if !(p > 1.0 && p < 2.0) {
            return Err(Error::InvalidParameter {
                name: "p",
                detail: format!("moment orders must lie strictly in (1, 2), got {p}"),
            });
        }
    }
    let logs: Vec<f64> = (0..weights.n_paths)
        .filter(|&p| !weights.is_flagged(p))
        .map(|p| weights.log_weight(p, weights.n_nodes - 1))
        .collect();
    if logs.is_empty() {
        return Err(Error::AllPathsFlagged { n_paths: weights.n_paths });
    }
    let half = logs.len() / 2;
    let mut entries = Vec::with_capacity(p_grid.len());
    let mut largest: Option<f64> = None;
    for &p in p_grid {
        let full: Vec<f64> = logs.iter().map(|&l| (p * l).exp()).collect();
        let estimate = stats::mean(&full);
        let half_estimate = if half > 0 { stats::mean(&full[..half]) } else { estimate };
        let finite = estimate.is_finite() && half_estimate.is_finite();
        let stable = finite && (estimate - half_estimate).abs() <= 0.10 * estimate.abs();
        if stable {
            largest = Some(largest.map_or(p, |cur: f64| cur.max(p)));
        }
        entries.push(LpProbeEntry { p, estimate, half_estimate, finite, stable });
    }
    Ok(LpBoundReport {
        entries,
        largest_stable_p: largest,
        n_used: logs.len(),
        n_flagged: weights.n_flagged,
    })
}

/// Weighted mean over unflagged paths.
#[derive(Debug, Clone, Serialize)]
pub struct ReweightedMean {
    pub value: f64,
    /// Jackknife standard error of the weighted mean.
    pub std_error: f64,
    pub n_used: usize,
    pub n_flagged: usize,
}

/// Mean of `weight_T * value` over unflagged paths with jackknife standard
/// error. Errors when every path is flagged.
pub fn reweighted_mean(values: &[f64], weights: &WeightSeries) -> Result<ReweightedMean> {
    assert_eq!(values.len(), weights.n_paths, "one value per path");
    let products: Vec<f64> = (0..weights.n_paths)
        .filter(|&p| !weights.is_flagged(p))
        .map(|p| weights.weight(p, weights.n_nodes - 1) * values[p])
        .collect();
    if products.is_empty() {
        return Err(Error::AllPathsFlagged { n_paths: weights.n_paths });
    }
    let (value, std_error) = stats::mean_and_se(&products);
    Ok(ReweightedMean {
        value,
        std_error,
        n_used: products.len(),
        n_flagged: weights.n_flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ControlGrid, CostSpec, DiffusionSpec, DriftSpec, ModelConstants, TerminalSpec,
    };
    use crate::sde::{simulate_driftless, TimeGrid};

    fn model() -> GameModel {
        GameModel::new(
            1.0,
            vec![0.0],
            DiffusionSpec::identity(1),
            DriftSpec::zero(1),
            [CostSpec::constant(0.0), CostSpec::constant(0.0)],
            [TerminalSpec::constant(0.0), TerminalSpec::constant(0.0)],
            [ControlGrid::scalar(&[0.0]).unwrap(), ControlGrid::scalar(&[0.0]).unwrap()],
            1.0,
            ModelConstants::new(2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_kernel_gives_unit_weights_exactly() {
        let m = model();
        let paths =
            simulate_driftless(&m, TimeGrid::new(0.0, 1.0, 10).unwrap(), 32, 5).unwrap();
        let w = dolean_dade(&m, &paths, &IntegrandSpec::Zero).unwrap();
        for p in 0..32 {
            for k in 0..=10 {
                assert_eq!(w.weight(p, k), 1.0);
            }
            assert!(!w.is_flagged(p));
        }
        assert_eq!(w.n_flagged, 0);
    }

    #[test]
    fn start_weight_is_one_and_weights_positive() {
        let m = model();
        let paths =
            simulate_driftless(&m, TimeGrid::new(0.0, 1.0, 10).unwrap(), 64, 6).unwrap();
        let w = dolean_dade(&m, &paths, &IntegrandSpec::Constant(vec![1.5])).unwrap();
        for p in 0..64 {
            assert_eq!(w.weight(p, 0), 1.0);
            for k in 0..=10 {
                assert!(w.weight(p, k) > 0.0);
            }
        }
    }

    #[test]
    fn huge_kernel_flags_paths() {
        let m = model();
        let paths =
            simulate_driftless(&m, TimeGrid::new(0.0, 1.0, 10).unwrap(), 16, 5).unwrap();
        // |phi|^2 dt / 2 alone walks the log-weight far below -700.
        let w = dolean_dade(&m, &paths, &IntegrandSpec::Constant(vec![200.0])).unwrap();
        assert_eq!(w.n_flagged, 16);
        assert!(reweighted_mean(&vec![1.0; 16], &w).is_err());
    }

    #[test]
    fn probe_rejects_orders_outside_open_interval() {
        let m = model();
        let paths =
            simulate_driftless(&m, TimeGrid::new(0.0, 1.0, 4).unwrap(), 8, 5).unwrap();
        let w = dolean_dade(&m, &paths, &IntegrandSpec::Zero).unwrap();
        assert!(probe_lp_bound(&w, &[1.0]).is_err());
        assert!(probe_lp_bound(&w, &[2.0]).is_err());
        let report = probe_lp_bound(&w, &[1.5]).unwrap();
        assert_eq!(report.largest_stable_p, Some(1.5));
        assert_eq!(report.entries[0].estimate, 1.0);
    }
}
