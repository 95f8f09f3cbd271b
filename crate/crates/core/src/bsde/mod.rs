//! Backward least-squares Monte Carlo solver for the coupled value system.
//!
//! The solver computes, on a fixed time grid and a cloud of driftless
//! forward paths, the exponentials `ybar_i(t_k, x) = exp(y_i)` of the two
//! players' value processes together with their martingale integrands
//! `zbar_i`. Working on exponentials keeps the terminal condition exact
//! (`ybar_N = exp(g_i-scaled)`), turns the multiplicative risk structure
//! into a linear-quadratic regression problem, and guarantees positivity up
//! to statistical noise, which a floor at `eps_pos` cleans up (flooring is
//! counted; too many hits marks the run as low-confidence instead of
//! silently proceeding).
//!
//! One backward step at node `k`:
//!
//! 1. regress `ybar_{k+1} dB_k / dt` on the basis at `X_k` to get the
//!    integrand `zbar_k` (fitted values are used everywhere downstream),
//! 2. regress `ybar_{k+1}` itself to get the conditional mean,
//! 3. add `dt` times the clipped driver of [`generator`], evaluated at the
//!    fitted arguments; the driver needs `ybar_k` which is not known yet,
//!    so a short inner iteration is used: the first pass feeds the
//!    conditional mean, later passes feed the previous pass's output.
//!
//! At the first node every path sits at the same starting point, so the
//! regression matrix is singular by construction and conditional
//! expectations degenerate to plain means; the solver special-cases this
//! instead of relying on ridge rescue.
//!
//! Per-node coefficient tables (including a terminal fit) are exported so
//! that an independent verification run can rebuild the candidate feedback
//! without re-solving; [`SolutionTables`] round-trips through a directory
//! of CSV files plus a JSON header, with every number printed exactly.

pub mod basis;
pub mod generator;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::feedback::{FeedbackControls, FeedbackTag};
use crate::hamiltonian::build_isaacs_map;
use crate::model::{GameModel, Player};
use crate::par;
use crate::sde::{PathBundle, TimeGrid};
use crate::stats;

use basis::{BasisDescriptor, FittedBasis, NodeRegression};
use generator::TransformedGenerator;

pub use basis::RegressionBasis;
pub use generator::GeneratorControls;

/// Tuning knobs of the backward solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverParams {
    /// Truncation level of the driver ladder.
    pub ladder_level: u32,
    /// Inner driver-argument iterations per node (at least 1).
    pub picard_iters: usize,
    /// Positivity floor applied to the exponentials.
    pub eps_pos: f64,
    /// Floor-hit fraction above which the run is marked low-confidence.
    pub floor_warn_frac: f64,
    /// Multiplier on the theoretical growth constant in envelope checks.
    pub envelope_margin: f64,
    /// Regression basis; `None` picks a default from the state dimension.
    pub basis: Option<RegressionBasis>,
    /// Keep per-path value arrays (needed by ladder-convergence reports).
    pub keep_path_values: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            ladder_level: 16,
            picard_iters: 2,
            eps_pos: 1e-12,
            floor_warn_frac: 0.01,
            envelope_margin: 1.5,
            basis: None,
            keep_path_values: false,
        }
    }
}

impl SolverParams {
    fn validate(&self) -> Result<()> {
        if self.picard_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "picard_iters",
                detail: "at least one driver iteration is required".into(),
            });
        }
        if !(self.eps_pos > 0.0 && self.eps_pos < 1.0) {
            return Err(Error::InvalidParameter {
                name: "eps_pos",
                detail: format!("positivity floor must lie in (0, 1), got {}", self.eps_pos),
            });
        }
        if !(self.floor_warn_frac > 0.0 && self.floor_warn_frac <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "floor_warn_frac",
                detail: "warn fraction must lie in (0, 1]".into(),
            });
        }
        if !(self.envelope_margin >= 1.0) {
            return Err(Error::InvalidParameter {
                name: "envelope_margin",
                detail: "envelope margin below 1 would reject exact solutions".into(),
            });
        }
        Ok(())
    }
}

/// Positivity-floor bookkeeping.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FloorStats {
    pub n_hits: usize,
    pub n_values: usize,
}

impl FloorStats {
    pub fn fraction(&self) -> f64 {
        if self.n_values == 0 {
            0.0
        } else {
            self.n_hits as f64 / self.n_values as f64
        }
    }
}

/// One-step martingale residual summary at a node.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualNode {
    pub node: usize,
    pub t: f64,
    /// Sample mean of the residual, per player (should be ~0).
    pub mean: [f64; 2],
    /// Root-mean-square residual, per player.
    pub rms: [f64; 2],
}

/// Per-path value arrays retained when `keep_path_values` is set.
#[derive(Debug, Clone)]
pub struct PathValues {
    /// `ybar` per player: node-major, `(n_nodes, n_paths)`.
    pub y_exp: [Array2<f64>; 2],
    /// Fitted `zbar` per player: `(n_steps, n_paths, dim)`.
    pub z_exp: [Array3<f64>; 2],
}

/// Output of [`solve_backward`].
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    grid: TimeGrid,
    n_paths: usize,
    dim: usize,
    model_hash: String,
    eps_pos: f64,
    y0_exp: [f64; 2],
    y0_exp_se: [f64; 2],
    bases: Vec<FittedBasis>,
    state_boxes: Vec<Vec<[f64; 2]>>,
    y_log_coeffs: [Vec<Vec<f64>>; 2],
    z_coeffs: [Vec<Vec<Vec<f64>>>; 2],
    floor: FloorStats,
    ridge_nodes: usize,
    low_confidence: bool,
    residuals: Vec<ResidualNode>,
    path_values: Option<PathValues>,
}

impl BsdeSolution {
    /// Value process at the start, `y_i(0) = ln ybar_i(0)`.
    pub fn y0(&self, player: Player) -> f64 {
        self.y0_exp[player.index()].ln()
    }

    /// Exponential value at the start (this is the quantity the payoff
    /// evaluators estimate directly).
    pub fn y0_exp(&self, player: Player) -> f64 {
        self.y0_exp[player.index()]
    }

    /// Monte Carlo standard-error proxy for [`BsdeSolution::y0_exp`]: the
    /// standard error of the first conditional-mean estimate.
    pub fn y0_exp_std_error(&self, player: Player) -> f64 {
        self.y0_exp_se[player.index()]
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn floor_stats(&self) -> FloorStats {
        self.floor
    }

    /// Nodes where the regression needed ridge damping.
    pub fn ridge_nodes(&self) -> usize {
        self.ridge_nodes
    }

    /// True when the positivity floor engaged on more than the configured
    /// fraction of values; estimates should then be treated as suspect.
    pub fn low_confidence(&self) -> bool {
        self.low_confidence
    }

    pub fn martingale_residuals(&self) -> &[ResidualNode] {
        &self.residuals
    }

    pub fn path_values(&self) -> Option<&PathValues> {
        self.path_values.as_ref()
    }

    /// Portable coefficient tables (basis, per-node coefficients, header).
    pub fn tables(&self) -> SolutionTables {
        SolutionTables {
            model_hash: self.model_hash.clone(),
            grid: self.grid,
            dim: self.dim,
            n_paths: self.n_paths,
            eps_pos: self.eps_pos,
            y0_exp: self.y0_exp,
            y0_exp_std_error: self.y0_exp_se,
            low_confidence: self.low_confidence,
            bases: self.bases.clone(),
            state_boxes: self.state_boxes.clone(),
            y_log_coeffs: self.y_log_coeffs.clone(),
            z_coeffs: self.z_coeffs.clone(),
        }
    }
}

/// Runs the backward recursion over a driftless forward bundle.
pub fn solve_backward(
    model: &GameModel,
    paths: &PathBundle,
    controls: GeneratorControls,
    params: &SolverParams,
) -> Result<BsdeSolution> {
    params.validate()?;
    let pn = paths.n_paths;
    let n = paths.grid.n_steps;
    let m = paths.dim;
    let dt = paths.grid.dt();
    if m != model.dim() {
        return Err(Error::InvalidParameter {
            name: "paths",
            detail: format!("bundle dimension {m} does not match model dimension {}", model.dim()),
        });
    }
    if pn < 2 {
        return Err(Error::TooFewPaths { what: "backward solver sample", required: 2, actual: pn });
    }

    let basis_spec = params.basis.unwrap_or_else(|| RegressionBasis::default_for_dim(m));
    let nf = basis_spec.n_features(m);
    let generator = TransformedGenerator::new(model, controls, params.ladder_level)?;

    let mut bases: Vec<Option<FittedBasis>> = (0..=n).map(|_| None).collect();
    // Componentwise central 1%-99% sample band per node; exported so later
    // table evaluations can pin queries to the region where the regression
    // has real support. Polynomial fits are trustworthy inside the bulk of
    // the design but their values and especially their derivatives degrade
    // in the extreme sample tail, so the box deliberately excludes it.
    let state_boxes: Vec<Vec<[f64; 2]>> = (0..=n)
        .map(|k| {
            let mut col = vec![0.0f64; pn];
            (0..m)
                .map(|j| {
                    for (p, slot) in col.iter_mut().enumerate() {
                        *slot = paths.state(p, k)[j];
                    }
                    col.sort_by(|a, b| a.total_cmp(b));
                    [stats::sorted_quantile(&col, 0.01), stats::sorted_quantile(&col, 0.99)]
                })
                .collect()
        })
        .collect();
    let mut y_log_coeffs: [Vec<Vec<f64>>; 2] = [vec![Vec::new(); n + 1], vec![Vec::new(); n + 1]];
    let mut z_coeffs: [Vec<Vec<Vec<f64>>>; 2] = [vec![Vec::new(); n], vec![Vec::new(); n]];
    let mut residuals: Vec<ResidualNode> =
        (0..n).map(|k| ResidualNode { node: k, t: 0.0, mean: [0.0; 2], rms: [0.0; 2] }).collect();
    let mut ridge_nodes = 0usize;
    let mut floor = FloorStats { n_hits: 0, n_values: 0 };
    let mut keep = if params.keep_path_values {
        Some(PathValues {
            y_exp: [Array2::zeros((n + 1, pn)), Array2::zeros((n + 1, pn))],
            z_exp: [Array3::zeros((n, pn, m)), Array3::zeros((n, pn, m))],
        })
    } else {
        None
    };

    // Terminal values are exact, not regressed; the terminal fit below is
    // export-only (envelope checks and verification evaluate it). Exported
    // value tables live in log coordinates: a least-squares fit of the
    // exponential itself can undershoot zero in thin tails, while the
    // exponential of a log fit stays positive everywhere.
    let mut y_next: [Vec<f64>; 2] = [
        par::map_indexed(pn, |p| model.terminal_cost(Player::One, paths.state(p, n)).exp()),
        par::map_indexed(pn, |p| model.terminal_cost(Player::Two, paths.state(p, n)).exp()),
    ];
    let log_response = |values: &[f64], eps: f64| -> Vec<f64> {
        values.iter().map(|&v| v.max(eps).ln()).collect()
    };
    {
        let states_n = paths.states_at(n);
        let fb = basis_spec.fit(states_n)?;
        let reg = NodeRegression::new(&fb, states_n)?;
        if reg.ridge_used() {
            ridge_nodes += 1;
        }
        for i in 0..2 {
            y_log_coeffs[i][n] = reg.fit(&log_response(&y_next[i], params.eps_pos));
        }
        bases[n] = Some(fb);
    }
    if let Some(pv) = keep.as_mut() {
        for i in 0..2 {
            pv.y_exp[i].row_mut(n).as_slice_mut().expect("contiguous").copy_from_slice(&y_next[i]);
        }
    }

    let mut y0_exp = [0.0f64; 2];
    let mut y0_se = [0.0f64; 2];

    for k in (0..n).rev() {
        let t = paths.grid.node_time(k);
        if k > 0 {
            let states_k = paths.states_at(k);
            let fb = basis_spec.fit(states_k)?;
            let reg = NodeRegression::new(&fb, states_k)?;
            if reg.ridge_used() {
                ridge_nodes += 1;
            }

            // Martingale integrands: regress ybar_{k+1} dB_k / dt.
            let mut z_fit = [Array2::zeros((pn, m)), Array2::zeros((pn, m))];
            let mut col = vec![0.0; pn];
            for i in 0..2 {
                let mut per_dim = Vec::with_capacity(m);
                for j in 0..m {
                    let y = &y_next[i];
                    let resp: Vec<f64> =
                        par::map_indexed(pn, |p| y[p] * paths.increment(p, k)[j] / dt);
                    let coeffs = reg.fit(&resp);
                    reg.predict_into(&coeffs, &mut col);
                    for p in 0..pn {
                        z_fit[i][(p, j)] = col[p];
                    }
                    per_dim.push(coeffs);
                }
                z_coeffs[i][k] = per_dim;
            }

            // Conditional means of ybar_{k+1}.
            let mut cmean = [vec![0.0; pn], vec![0.0; pn]];
            for i in 0..2 {
                let coeffs = reg.fit(&y_next[i]);
                reg.predict_into(&coeffs, &mut cmean[i]);
            }

            // Inner driver iterations.
            let mut args = [cmean[0].clone(), cmean[1].clone()];
            let mut y_new = [vec![0.0; pn], vec![0.0; pn]];
            for sweep in 0..params.picard_iters {
                let a0 = &args[0];
                let a1 = &args[1];
                let zf = &z_fit;
                let g: Vec<[f64; 2]> = par::try_map_indexed(pn, |p| {
                    let mut scratch = generator.scratch();
                    let x = paths.state(p, k);
                    let z1 = zf[0].row(p);
                    let z2 = zf[1].row(p);
                    let out = generator.eval(
                        &mut scratch,
                        k,
                        t,
                        x,
                        [a0[p], a1[p]],
                        z1.as_slice().expect("contiguous"),
                        z2.as_slice().expect("contiguous"),
                    )?;
                    Ok::<_, Error>(out.g)
                })?;
                for i in 0..2 {
                    for p in 0..pn {
                        y_new[i][p] = cmean[i][p] + dt * g[p][i];
                    }
                }
                if sweep + 1 == params.picard_iters {
                    for y in y_new.iter_mut() {
                        for v in y.iter_mut() {
                            floor.n_values += 1;
                            if *v < params.eps_pos {
                                *v = params.eps_pos;
                                floor.n_hits += 1;
                            }
                        }
                    }
                } else {
                    for i in 0..2 {
                        args[i].clone_from(&y_new[i]);
                        for v in args[i].iter_mut() {
                            if *v < params.eps_pos {
                                *v = params.eps_pos;
                            }
                        }
                    }
                }
            }

            // One-step residual ybar_{k+1} - E-fit - zbar-fit . dB.
            let mut mean_r = [0.0; 2];
            let mut rms_r = [0.0; 2];
            for i in 0..2 {
                let mut sum = 0.0;
                let mut sq = 0.0;
                for p in 0..pn {
                    let mut zdb = 0.0;
                    let db = paths.increment(p, k);
                    for j in 0..m {
                        zdb += z_fit[i][(p, j)] * db[j];
                    }
                    let r = y_next[i][p] - cmean[i][p] - zdb;
                    sum += r;
                    sq += r * r;
                }
                mean_r[i] = sum / pn as f64;
                rms_r[i] = (sq / pn as f64).sqrt();
            }
            residuals[k] = ResidualNode { node: k, t, mean: mean_r, rms: rms_r };

            for i in 0..2 {
                y_log_coeffs[i][k] = reg.fit(&log_response(&y_new[i], params.eps_pos));
            }
            bases[k] = Some(fb);
            if let Some(pv) = keep.as_mut() {
                for i in 0..2 {
                    pv.y_exp[i]
                        .row_mut(k)
                        .as_slice_mut()
                        .expect("contiguous")
                        .copy_from_slice(&y_new[i]);
                    for p in 0..pn {
                        for j in 0..m {
                            pv.z_exp[i][(k, p, j)] = z_fit[i][(p, j)];
                        }
                    }
                }
            }
            y_next = y_new;
        } else {
            // First node: all paths start at the same point, so conditional
            // expectations are plain means and the design matrix would be
            // singular; bypass regression entirely.
            let fb = basis_spec.fit(paths.states_at(0))?;
            let x0 = paths.state(0, 0).to_vec();

            let mut z0 = [vec![0.0; m], vec![0.0; m]];
            for i in 0..2 {
                let mut per_dim = Vec::with_capacity(m);
                for j in 0..m {
                    let y = &y_next[i];
                    let resp: Vec<f64> =
                        par::map_indexed(pn, |p| y[p] * paths.increment(p, 0)[j] / dt);
                    z0[i][j] = stats::mean(&resp);
                    let mut coeffs = vec![0.0; nf];
                    coeffs[0] = z0[i][j];
                    per_dim.push(coeffs);
                }
                z_coeffs[i][0] = per_dim;
            }

            let mut cm = [0.0; 2];
            for i in 0..2 {
                let (value, se) = stats::mean_and_se(&y_next[i]);
                cm[i] = value;
                y0_se[i] = se;
            }

            let mut args = cm;
            let mut y0 = cm;
            let mut scratch = generator.scratch();
            for sweep in 0..params.picard_iters {
                let out = generator.eval(&mut scratch, 0, t, &x0, args, &z0[0], &z0[1])?;
                for i in 0..2 {
                    y0[i] = cm[i] + dt * out.g[i];
                }
                if sweep + 1 == params.picard_iters {
                    for v in y0.iter_mut() {
                        floor.n_values += 1;
                        if *v < params.eps_pos {
                            *v = params.eps_pos;
                            floor.n_hits += 1;
                        }
                    }
                } else {
                    args = [y0[0].max(params.eps_pos), y0[1].max(params.eps_pos)];
                }
            }

            let mut mean_r = [0.0; 2];
            let mut rms_r = [0.0; 2];
            for i in 0..2 {
                let mut sum = 0.0;
                let mut sq = 0.0;
                for p in 0..pn {
                    let mut zdb = 0.0;
                    let db = paths.increment(p, 0);
                    for j in 0..m {
                        zdb += z0[i][j] * db[j];
                    }
                    let r = y_next[i][p] - cm[i] - zdb;
                    sum += r;
                    sq += r * r;
                }
                mean_r[i] = sum / pn as f64;
                rms_r[i] = (sq / pn as f64).sqrt();
            }
            residuals[0] = ResidualNode { node: 0, t, mean: mean_r, rms: rms_r };

            for i in 0..2 {
                let mut coeffs = vec![0.0; nf];
                coeffs[0] = y0[i].max(params.eps_pos).ln();
                y_log_coeffs[i][0] = coeffs;
            }
            bases[0] = Some(fb);
            if let Some(pv) = keep.as_mut() {
                for i in 0..2 {
                    pv.y_exp[i].row_mut(0).fill(y0[i]);
                    for p in 0..pn {
                        for j in 0..m {
                            pv.z_exp[i][(0, p, j)] = z0[i][j];
                        }
                    }
                }
            }
            y0_exp = y0;
        }
    }

    let low_confidence = floor.fraction() > params.floor_warn_frac;
    Ok(BsdeSolution {
        grid: paths.grid,
        n_paths: pn,
        dim: m,
        model_hash: model.hash(),
        eps_pos: params.eps_pos,
        y0_exp,
        y0_exp_se: y0_se,
        bases: bases.into_iter().map(|b| b.expect("every node fitted")).collect(),
        state_boxes,
        y_log_coeffs,
        z_coeffs,
        floor,
        ridge_nodes,
        low_confidence,
        residuals,
        path_values: keep,
    })
}

/// Reloadable per-node coefficient tables of a solved system.
#[derive(Debug, Clone)]
pub struct SolutionTables {
    pub model_hash: String,
    pub grid: TimeGrid,
    pub dim: usize,
    pub n_paths: usize,
    pub eps_pos: f64,
    pub y0_exp: [f64; 2],
    pub y0_exp_std_error: [f64; 2],
    pub low_confidence: bool,
    bases: Vec<FittedBasis>,
    state_boxes: Vec<Vec<[f64; 2]>>,
    y_log_coeffs: [Vec<Vec<f64>>; 2],
    z_coeffs: [Vec<Vec<Vec<f64>>>; 2],
}

#[derive(Serialize, Deserialize)]
struct SolutionMeta {
    format: String,
    model_hash: String,
    dim: usize,
    n_paths: usize,
    n_steps: usize,
    t_start: f64,
    t_end: f64,
    eps_pos: f64,
    y0_exp: [f64; 2],
    y0_exp_std_error: [f64; 2],
    low_confidence: bool,
    n_features: usize,
    bases: Vec<BasisDescriptor>,
    /// Componentwise `[lo, hi]` of the regression sample per node; table
    /// evaluations clamp queries into this box.
    state_boxes: Vec<Vec<[f64; 2]>>,
}

/// Format tag written into `meta.json`; bumped on layout changes.
pub const SOLUTION_FORMAT: &str = "rsg-solution-v1";
/// Value-surface coefficients file inside a solution directory.
pub const Y_COEFFS_FILE: &str = "y_log_coeffs.csv";
/// Martingale-integrand coefficients file inside a solution directory.
pub const Z_COEFFS_FILE: &str = "z_exp_coeffs.csv";
/// Metadata file inside a solution directory.
pub const META_FILE: &str = "meta.json";

impl SolutionTables {
    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn basis(&self, k: usize) -> &FittedBasis {
        &self.bases[k]
    }

    /// Componentwise sample range of the regression design at node `k`.
    pub fn state_box(&self, k: usize) -> &[[f64; 2]] {
        &self.state_boxes[k]
    }

    /// Pins a query state into the node-`k` sample box. Fits are
    /// least-squares approximations over that box; outside it they are
    /// uncontrolled extrapolations, so evaluation uses the nearest point
    /// the regression actually saw.
    fn clamp_state<'a>(&self, k: usize, x: &'a [f64], buf: &'a mut Vec<f64>) -> &'a [f64] {
        let bx = &self.state_boxes[k];
        if x.iter().zip(bx).all(|(&v, b)| v >= b[0] && v <= b[1]) {
            return x;
        }
        buf.clear();
        buf.extend(x.iter().zip(bx).map(|(&v, b)| v.clamp(b[0], b[1])));
        buf
    }

    /// Fitted `ln ybar_i(t_k, x)`; the tables store the value surface in
    /// log coordinates so the exponential below is positive everywhere.
    pub fn y_log_at(&self, player: Player, k: usize, x: &[f64]) -> f64 {
        let mut buf = Vec::new();
        let x = self.clamp_state(k, x, &mut buf);
        self.bases[k].eval(&self.y_log_coeffs[player.index()][k], x)
    }

    /// Fitted `ybar_i(t_k, x)`.
    pub fn y_exp_at(&self, player: Player, k: usize, x: &[f64]) -> f64 {
        self.y_log_at(player, k, x).exp()
    }

    /// Gradient of the fitted `ln ybar_i(t_k, .)` at `x`, written into
    /// `out`. Queries outside the sample box use its nearest point, so the
    /// reported gradient is constant along clamped directions.
    pub fn y_log_gradient_into(&self, player: Player, k: usize, x: &[f64], out: &mut [f64]) {
        let mut buf = Vec::new();
        let x = self.clamp_state(k, x, &mut buf);
        self.bases[k].eval_gradient_into(&self.y_log_coeffs[player.index()][k], x, out);
    }

    /// Fitted `zbar_i(t_k, x)` written into `out` (defined for `k < n_steps`).
    pub fn z_exp_at(&self, player: Player, k: usize, x: &[f64], out: &mut [f64]) {
        let mut buf = Vec::new();
        let x = self.clamp_state(k, x, &mut buf);
        let rows = &self.z_coeffs[player.index()][k];
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.bases[k].eval(&rows[j], x);
        }
    }

    /// Writes `meta.json`, `y_log_coeffs.csv` and `z_exp_coeffs.csv` into
    /// `dir` (created if absent). Floats are printed exactly.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let n = self.n_steps();
        let meta = SolutionMeta {
            format: SOLUTION_FORMAT.into(),
            model_hash: self.model_hash.clone(),
            dim: self.dim,
            n_paths: self.n_paths,
            n_steps: n,
            t_start: self.grid.t_start,
            t_end: self.grid.t_end,
            eps_pos: self.eps_pos,
            y0_exp: self.y0_exp,
            y0_exp_std_error: self.y0_exp_std_error,
            low_confidence: self.low_confidence,
            n_features: self.bases[0].n_features(),
            bases: self.bases.iter().map(|b| b.descriptor()).collect(),
            state_boxes: self.state_boxes.clone(),
        };
        fs::write(
            dir.join(META_FILE),
            serde_json::to_string_pretty(&meta).expect("serializable meta"),
        )?;

        let mut w = BufWriter::new(fs::File::create(dir.join(Y_COEFFS_FILE))?);
        writeln!(w, "player,node,time,index,value")?;
        for i in 0..2 {
            for k in 0..=n {
                for (idx, c) in self.y_log_coeffs[i][k].iter().enumerate() {
                    writeln!(
                        w,
                        "{},{k},{},{idx},{}",
                        i + 1,
                        stats::fmt_g17(self.grid.node_time(k)),
                        stats::fmt_g17(*c)
                    )?;
                }
            }
        }
        w.flush()?;

        let mut w = BufWriter::new(fs::File::create(dir.join(Z_COEFFS_FILE))?);
        writeln!(w, "player,node,time,dim,index,value")?;
        for i in 0..2 {
            for k in 0..n {
                for (j, row) in self.z_coeffs[i][k].iter().enumerate() {
                    for (idx, c) in row.iter().enumerate() {
                        writeln!(
                            w,
                            "{},{k},{},{j},{idx},{}",
                            i + 1,
                            stats::fmt_g17(self.grid.node_time(k)),
                            stats::fmt_g17(*c)
                        )?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reloads tables previously written by [`SolutionTables::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta: SolutionMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)
            .map_err(|e| Error::MalformedArtifact {
                path: meta_path.display().to_string(),
                detail: e.to_string(),
            })?;
        if meta.format != SOLUTION_FORMAT {
            return Err(Error::MalformedArtifact {
                path: meta_path.display().to_string(),
                detail: format!("unknown solution format `{}`", meta.format),
            });
        }
        let n = meta.n_steps;
        if meta.bases.len() != n + 1 {
            return Err(Error::MalformedArtifact {
                path: meta_path.display().to_string(),
                detail: format!("expected {} basis descriptors, found {}", n + 1, meta.bases.len()),
            });
        }
        let bases: Vec<FittedBasis> =
            meta.bases.iter().map(FittedBasis::from_descriptor).collect::<Result<_>>()?;
        if meta.state_boxes.len() != n + 1
            || meta.state_boxes.iter().any(|bx| bx.len() != meta.dim)
            || meta.state_boxes.iter().flatten().any(|b| !(b[0] <= b[1]))
        {
            return Err(Error::MalformedArtifact {
                path: meta_path.display().to_string(),
                detail: "state boxes are missing, misshapen or unordered".into(),
            });
        }
        let nf = meta.n_features;
        let grid = TimeGrid::new(meta.t_start, meta.t_end, n)?;

        let mut y_log_coeffs: [Vec<Vec<f64>>; 2] =
            [vec![vec![f64::NAN; nf]; n + 1], vec![vec![f64::NAN; nf]; n + 1]];
        let y_path = dir.join(Y_COEFFS_FILE);
        for (lineno, line) in fs::read_to_string(&y_path)?.lines().enumerate().skip(1) {
            let bad = |detail: String| Error::MalformedArtifact {
                path: y_path.display().to_string(),
                detail: format!("line {}: {detail}", lineno + 1),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", fields.len())));
            }
            let player: usize = fields[0].parse().map_err(|_| bad("bad player".into()))?;
            let k: usize = fields[1].parse().map_err(|_| bad("bad node".into()))?;
            let idx: usize = fields[3].parse().map_err(|_| bad("bad index".into()))?;
            let value: f64 = fields[4].parse().map_err(|_| bad("bad value".into()))?;
            if !(1..=2).contains(&player) || k > n || idx >= nf {
                return Err(bad("coordinates out of range".into()));
            }
            y_log_coeffs[player - 1][k][idx] = value;
        }

        let mut z_coeffs: [Vec<Vec<Vec<f64>>>; 2] = [
            vec![vec![vec![f64::NAN; nf]; meta.dim]; n],
            vec![vec![vec![f64::NAN; nf]; meta.dim]; n],
        ];
        let z_path = dir.join(Z_COEFFS_FILE);
        for (lineno, line) in fs::read_to_string(&z_path)?.lines().enumerate().skip(1) {
            let bad = |detail: String| Error::MalformedArtifact {
                path: z_path.display().to_string(),
                detail: format!("line {}: {detail}", lineno + 1),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", fields.len())));
            }
            let player: usize = fields[0].parse().map_err(|_| bad("bad player".into()))?;
            let k: usize = fields[1].parse().map_err(|_| bad("bad node".into()))?;
            let j: usize = fields[3].parse().map_err(|_| bad("bad dim".into()))?;
            let idx: usize = fields[4].parse().map_err(|_| bad("bad index".into()))?;
            let value: f64 = fields[5].parse().map_err(|_| bad("bad value".into()))?;
            if !(1..=2).contains(&player) || k >= n || j >= meta.dim || idx >= nf {
                return Err(bad("coordinates out of range".into()));
            }
            z_coeffs[player - 1][k][j][idx] = value;
        }

        for i in 0..2 {
            if y_log_coeffs[i].iter().flatten().any(|v| v.is_nan())
                || z_coeffs[i].iter().flatten().flatten().any(|v| v.is_nan())
            {
                return Err(Error::MalformedArtifact {
                    path: dir.display().to_string(),
                    detail: "coefficient tables are incomplete".into(),
                });
            }
        }

        Ok(SolutionTables {
            model_hash: meta.model_hash,
            grid,
            dim: meta.dim,
            n_paths: meta.n_paths,
            eps_pos: meta.eps_pos,
            y0_exp: meta.y0_exp,
            y0_exp_std_error: meta.y0_exp_std_error,
            low_confidence: meta.low_confidence,
            bases,
            state_boxes: meta.state_boxes,
            y_log_coeffs,
            z_coeffs,
        })
    }
}

/// Builds the candidate equilibrium feedback from solved tables: gradient
/// surrogates `zbar_i / ybar_i` feed the pointwise equilibrium map at
/// every `(t_k, x)` query. The denominator is the exponential of the
/// fitted log-surface, positive by construction, and both fits pin the
/// query into the node's sample box, so queries beyond the fitted support
/// reuse the nearest supported point instead of extrapolating.
pub fn extract_feedback(model: &GameModel, tables: &SolutionTables) -> Result<FeedbackControls> {
    if tables.model_hash != model.hash() {
        return Err(Error::MalformedArtifact {
            path: "solution tables".into(),
            detail: format!(
                "tables were produced for model {} but evaluation asked for {}",
                tables.model_hash,
                model.hash()
            ),
        });
    }
    let isaacs = build_isaacs_map(model);
    let tables = tables.clone();
    let m = tables.dim;
    let n = tables.n_steps();
    Ok(FeedbackControls::from_fn(FeedbackTag::FromBsde, "solved-feedback", move |k, t, x| {
        let k = k.min(n.saturating_sub(1));
        let mut p = vec![0.0; m];
        let mut q = vec![0.0; m];
        tables.z_exp_at(Player::One, k, x, &mut p);
        tables.z_exp_at(Player::Two, k, x, &mut q);
        let y1 = tables.y_exp_at(Player::One, k, x);
        let y2 = tables.y_exp_at(Player::Two, k, x);
        for j in 0..m {
            p[j] /= y1;
            q[j] /= y2;
        }
        let point = isaacs.eval(t, x, &p, &q)?;
        Ok((point.u, point.v))
    }))
}

/// Outcome of the fitted-value growth check.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    /// Constant `C` of the admissible band `|ln ybar| <= C (1 + |x|^gamma)`.
    pub c_bound: f64,
    pub gamma: f64,
    pub n_checked: usize,
    pub n_violations: usize,
    pub worst_ratio: f64,
    pub worst: Option<EnvelopeWitness>,
    pub passed: bool,
}

/// Worst point seen by the envelope check.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeWitness {
    pub player: u8,
    pub node: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub log_value: f64,
    pub bound: f64,
}

/// Checks that the fitted values respect the growth the cost bounds
/// imply: `|ln ybar_i(t_k, x)| <= C (1 + |x|^gamma)` at every regression
/// node and path, with `C = margin * theta * (c_g + T c_h)`. The check
/// reads the exported log-value fit directly, so both collapsed and
/// exploding fits show up as violations.
pub fn growth_envelope(
    model: &GameModel,
    paths: &PathBundle,
    tables: &SolutionTables,
    margin: f64,
) -> EnvelopeReport {
    let constants = model.constants();
    let c_bound =
        margin * model.theta() * (constants.c_g + model.horizon() * constants.c_h);
    let gamma = constants.gamma;
    // Absolute slack for float fuzz around exactly attained bounds (e.g.
    // identically-one exponentials under zero costs).
    const SLACK: f64 = 1e-9;

    let n = paths.grid.n_steps;
    let pn = paths.n_paths;
    let mut n_violations = 0usize;
    let mut worst_ratio = 0.0f64;
    let mut worst: Option<EnvelopeWitness> = None;

    for k in 0..=n {
        let t = paths.grid.node_time(k);
        let evals: Vec<[f64; 3]> = par::map_indexed(pn, |p| {
            let x = paths.state(p, k);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let bound = c_bound * (1.0 + norm.powf(gamma));
            let l1 = tables.y_log_at(Player::One, k, x).abs();
            let l2 = tables.y_log_at(Player::Two, k, x).abs();
            [l1, l2, bound]
        });
        for (p, vals) in evals.iter().enumerate() {
            let bound = vals[2];
            for i in 0..2 {
                let log_value = vals[i];
                if log_value > bound + SLACK {
                    n_violations += 1;
                }
                // Ratio uses the slack-free bound; guard zero bounds.
                let ratio = if bound > 0.0 { log_value / bound } else { log_value / SLACK };
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst = Some(EnvelopeWitness {
                        player: (i + 1) as u8,
                        node: k,
                        t,
                        x: paths.state(p, k).to_vec(),
                        log_value,
                        bound,
                    });
                }
            }
        }
    }

    EnvelopeReport {
        c_bound,
        gamma,
        n_checked: (n + 1) * pn * 2,
        n_violations,
        worst_ratio,
        worst,
        passed: n_violations == 0,
    }
}

/// Gap between two consecutive truncation levels.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LadderGap {
    pub from_level: u32,
    pub to_level: u32,
    /// Largest (over nodes and players) mean absolute `ybar` difference.
    pub y_gap: f64,
    /// Largest (over players) time-integrated mean squared `zbar` difference.
    pub z_gap: f64,
}

/// Result of solving the same system at increasing truncation levels.
#[derive(Debug, Clone, Serialize)]
pub struct LadderReport {
    pub levels: Vec<u32>,
    pub gaps: Vec<LadderGap>,
    /// Gaps are nonincreasing in both metrics.
    pub passed: bool,
}

/// Solves the system at each truncation level and measures how much the
/// per-path solutions still move between consecutive levels; stabilized
/// truncation shows up as nonincreasing gaps.
pub fn ladder_convergence(
    model: &GameModel,
    paths: &PathBundle,
    controls: &GeneratorControls,
    params: &SolverParams,
    levels: &[u32],
) -> Result<LadderReport> {
    if levels.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "levels",
            detail: "need at least two truncation levels to measure a gap".into(),
        });
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            name: "levels",
            detail: format!("levels must be strictly increasing, got {levels:?}"),
        });
    }
    let mut solved = Vec::with_capacity(levels.len());
    for &level in levels {
        let mut p = *params;
        p.ladder_level = level;
        p.keep_path_values = true;
        solved.push(solve_backward(model, paths, controls.clone(), &p)?);
    }

    let n = paths.grid.n_steps;
    let pn = paths.n_paths;
    let m = paths.dim;
    let dt = paths.grid.dt();
    let mut gaps = Vec::with_capacity(levels.len() - 1);
    for (pair, w) in solved.windows(2).enumerate() {
        let a = w[0].path_values().expect("kept");
        let b = w[1].path_values().expect("kept");
        let mut y_gap = 0.0f64;
        let mut z_gap = 0.0f64;
        for i in 0..2 {
            for k in 0..=n {
                let mut acc = 0.0;
                for p in 0..pn {
                    acc += (a.y_exp[i][(k, p)] - b.y_exp[i][(k, p)]).abs();
                }
                y_gap = y_gap.max(acc / pn as f64);
            }
            let mut integral = 0.0;
            for k in 0..n {
                let mut acc = 0.0;
                for p in 0..pn {
                    for j in 0..m {
                        let d = a.z_exp[i][(k, p, j)] - b.z_exp[i][(k, p, j)];
                        acc += d * d;
                    }
                }
                integral += dt * acc / pn as f64;
            }
            z_gap = z_gap.max(integral);
        }
        gaps.push(LadderGap {
            from_level: levels[pair],
            to_level: levels[pair + 1],
            y_gap,
            z_gap,
        });
    }
    let passed = gaps.windows(2).all(|w| w[1].y_gap <= w[0].y_gap && w[1].z_gap <= w[0].z_gap);
    Ok(LadderReport { levels: levels.to_vec(), gaps, passed })
}
