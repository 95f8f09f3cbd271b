//! Monte Carlo payoff evaluation under feedback controls.
//!
//! The payoff of player `i` under a feedback pair is the expectation of
//!
//! ```text
//! exp( sum_k h_i(t_k, X_k, u_k, v_k) dt  +  g_i(X_N) )
//! ```
//!
//! with risk-scaled costs and left-endpoint quadrature on the simulation
//! grid. Two independent estimators are provided:
//!
//! * [`eval_payoff_direct`] simulates the controlled dynamics and averages
//!   the exponential payoff;
//! * [`eval_payoff_reweighted`] simulates the *driftless* dynamics and
//!   reweights by the terminal change-of-measure weight of the control
//!   drift. On the shared grid the per-step Gaussian measure change is
//!   exact, so the two estimators agree in expectation and differ only by
//!   Monte Carlo noise — which makes their comparison a genuine
//!   cross-check of the weight machinery rather than a bias test.
//!
//! Payoff exponents above 700 cannot be exponentiated in `f64`; such paths
//! are flagged and excluded, and the run errors out if more than 0.1% of
//! paths are flagged, because then the tail is material and no finite-
//! sample mean should be trusted.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feedback::FeedbackControls;
use crate::girsanov::{dolean_dade, IntegrandSpec};
use crate::model::{GameModel, Player};
use crate::par;
use crate::sde::{simulate_controlled, simulate_driftless, PathBundle, TimeGrid};
use crate::stats;

/// Largest payoff exponent that is exponentiated; beyond it the path is
/// flagged.
pub const OVERFLOW_EXPONENT: f64 = 700.0;

/// Largest tolerated fraction of flagged paths.
pub const OVERFLOW_BUDGET_FRAC: f64 = 0.001;

/// One payoff estimate.
#[derive(Debug, Clone, Serialize)]
pub struct PayoffEstimate {
    pub player: Player,
    pub value: f64,
    /// Jackknife standard error over the unflagged paths.
    pub std_error: f64,
    pub n_paths: usize,
    pub n_flagged: usize,
    /// `"direct"` or `"reweighted"`.
    pub method: &'static str,
}

/// Per-path exponential payoffs of both players over one bundle.
#[derive(Debug, Clone)]
pub struct PathPayoffs {
    /// `values[i][p] = exp(payoff exponent)` (garbage where flagged).
    pub values: [Vec<f64>; 2],
    /// A path is flagged when either player's exponent overflows, so that
    /// paired comparisons stay aligned across players.
    pub flagged: Vec<bool>,
    pub n_flagged: usize,
}

/// Evaluates the per-path payoffs of both players along `paths` under
/// `feedback`. Recorded control indices are reused when the bundle was
/// simulated under controls; otherwise the feedback is evaluated at each
/// node (the reweighted estimator does this on driftless paths).
pub fn payoff_per_path(
    model: &GameModel,
    paths: &PathBundle,
    feedback: &FeedbackControls,
) -> Result<PathPayoffs> {
    let n = paths.grid.n_steps;
    let dt = paths.grid.dt();

    let per_path: Vec<([f64; 2], bool)> =
        par::try_map_indexed(paths.n_paths, |p| -> Result<([f64; 2], bool)> {
            let mut acc = [0.0f64; 2];
            for k in 0..n {
                let t = paths.grid.node_time(k);
                let x = paths.state(p, k);
                let (ui, vi) = match &paths.control_indices {
                    Some(c) => (c[(p, k, 0)] as usize, c[(p, k, 1)] as usize),
                    None => feedback.eval_indices(model, k, t, x)?,
                };
                let u = model.grid(Player::One).point(ui);
                let v = model.grid(Player::Two).point(vi);
                for (i, player) in Player::BOTH.into_iter().enumerate() {
                    acc[i] += model.running_cost(player, t, x, u, v) * dt;
                }
            }
            let x_end = paths.state(p, n);
            for (i, player) in Player::BOTH.into_iter().enumerate() {
                acc[i] += model.terminal_cost(player, x_end);
            }
            let flagged = acc[0] > OVERFLOW_EXPONENT || acc[1] > OVERFLOW_EXPONENT;
            Ok(([acc[0].exp(), acc[1].exp()], flagged))
        })?;

    let mut values = [vec![0.0; paths.n_paths], vec![0.0; paths.n_paths]];
    let mut flagged = vec![false; paths.n_paths];
    let mut n_flagged = 0;
    for (p, (vals, flag)) in per_path.into_iter().enumerate() {
        values[0][p] = vals[0];
        values[1][p] = vals[1];
        flagged[p] = flag;
        if flag {
            n_flagged += 1;
        }
    }
    Ok(PathPayoffs { values, flagged, n_flagged })
}

pub(crate) fn check_overflow_budget(n_flagged: usize, n_paths: usize) -> Result<()> {
    let limit = (OVERFLOW_BUDGET_FRAC * n_paths as f64).floor() as usize;
    if n_flagged > limit {
        return Err(Error::OverflowBudgetExceeded { n_flagged, n_paths, limit });
    }
    Ok(())
}

pub(crate) fn estimates_from(
    payoffs: &PathPayoffs,
    extra_flags: Option<&[bool]>,
    weights: Option<&[f64]>,
    n_paths: usize,
    method: &'static str,
) -> Result<[PayoffEstimate; 2]> {
    let is_flagged = |p: usize| {
        payoffs.flagged[p] || extra_flags.map_or(false, |f| f[p])
    };
    let n_flagged = (0..n_paths).filter(|&p| is_flagged(p)).count();
    check_overflow_budget(n_flagged, n_paths)?;
    if n_flagged == n_paths {
        return Err(Error::AllPathsFlagged { n_paths });
    }
    let mut out = Vec::with_capacity(2);
    for i in 0..2 {
        let sample: Vec<f64> = (0..n_paths)
            .filter(|&p| !is_flagged(p))
            .map(|p| weights.map_or(1.0, |w| w[p]) * payoffs.values[i][p])
            .collect();
        let (value, std_error) = stats::mean_and_se(&sample);
        out.push(PayoffEstimate {
            player: Player::BOTH[i],
            value,
            std_error,
            n_paths,
            n_flagged,
            method,
        });
    }
    Ok([out.remove(0), out.remove(0)])
}

/// Direct estimator: simulate under the feedback, average exponential
/// payoffs.
pub fn eval_payoff_direct(
    model: &GameModel,
    feedback: &FeedbackControls,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<[PayoffEstimate; 2]> {
    if n_paths < 2 {
        return Err(Error::TooFewPaths { what: "payoff estimate", required: 2, actual: n_paths });
    }
    let paths = simulate_controlled(model, feedback, grid, n_paths, seed)?;
    let payoffs = payoff_per_path(model, &paths, feedback)?;
    estimates_from(&payoffs, None, None, n_paths, "direct")
}

/// Change-of-measure estimator: simulate the driftless dynamics with the
/// same seed discipline, weight terminal payoffs by the exponential
/// martingale of the control drift.
pub fn eval_payoff_reweighted(
    model: &GameModel,
    feedback: &FeedbackControls,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<[PayoffEstimate; 2]> {
    if n_paths < 2 {
        return Err(Error::TooFewPaths { what: "payoff estimate", required: 2, actual: n_paths });
    }
    let paths = simulate_driftless(model, grid, n_paths, seed)?;
    let weights = dolean_dade(model, &paths, &IntegrandSpec::game_drift(feedback.clone()))?;
    let payoffs = payoff_per_path(model, &paths, feedback)?;
    let w = weights.terminal_weights();
    estimates_from(&payoffs, Some(&weights.flagged), Some(&w), n_paths, "reweighted")
}

/// Agreement check between a solved starting value and an independent
/// Monte Carlo payoff.
#[derive(Debug, Clone, Serialize)]
pub struct RepresentationCheck {
    pub player: Player,
    /// Exponential starting value from the backward solver.
    pub y0_exp: f64,
    pub y0_exp_std_error: f64,
    /// Independent payoff estimate under the candidate feedback.
    pub payoff: f64,
    pub payoff_std_error: f64,
    pub difference: f64,
    /// `sqrt(se_y^2 + se_payoff^2)`.
    pub combined_se: f64,
    /// Allowed multiple of the combined standard error.
    pub tol_se: f64,
    pub passed: bool,
}

/// Tests `|y0_exp - payoff| <= tol_se * combined standard error`.
pub fn check_bsde_representation(
    y0_exp: f64,
    y0_exp_std_error: f64,
    payoff: &PayoffEstimate,
    tol_se: f64,
) -> RepresentationCheck {
    let difference = (y0_exp - payoff.value).abs();
    let combined_se =
        (y0_exp_std_error * y0_exp_std_error + payoff.std_error * payoff.std_error).sqrt();
    RepresentationCheck {
        player: payoff.player,
        y0_exp,
        y0_exp_std_error,
        payoff: payoff.value,
        payoff_std_error: payoff.std_error,
        difference,
        combined_se,
        tol_se,
        passed: difference <= tol_se * combined_se,
    }
}
