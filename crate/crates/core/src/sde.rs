//! Path simulation engine.
//!
//! Euler-Maruyama on a uniform grid for three kinds of dynamics sharing one
//! step kernel:
//!
//! * driftless reference dynamics `dX = sigma(t, X) dB` (the measure the
//!   backward solver regresses under),
//! * auxiliary bounded-drift dynamics `dX = b(t, X) dt + sigma dB`,
//! * controlled game dynamics `dX = f(t, X, u, v) dt + sigma dB` with the
//!   controls supplied by a feedback map and recorded per step.
//!
//! Reproducibility contract: path `p` draws its noise from a counter-based
//! substream keyed by `(seed, p)`, so results are a function of `(model,
//! grid, n_paths, seed)` alone. Worker count only changes who fills which
//! row, never the bytes. Because all three simulators share the step kernel
//! and the draw order, `b == 0` and `f == 0` reproduce the driftless bundle
//! exactly for equal seeds.

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::feedback::FeedbackControls;
use crate::model::{BoundedDriftSpec, DiffusionSpec, GameModel};
use crate::par;
use crate::stats;

/// Uniform time grid on `[t_start, t_end]` with `n_steps` steps
/// (`n_steps + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end > t_start) {
            return Err(Error::InvalidParameter {
                name: "time_grid",
                detail: format!("need t_end > t_start, got [{t_start}, {t_end}]"),
            });
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "time_grid",
                detail: "need at least one step".into(),
            });
        }
        Ok(TimeGrid { t_start, t_end, n_steps })
    }

    /// Grid over the whole model horizon `[0, T]`.
    pub fn over_horizon(model: &GameModel, n_steps: usize) -> Result<Self> {
        TimeGrid::new(0.0, model.horizon(), n_steps)
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

      /// Time of node `k`, `k = 0..=n_steps`.
    pub fn node_time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }
}

/// A batch of simulated paths plus the Brownian increments that drove them.
///
/// Shapes: `increments` is `(n_paths, n_steps, dim)`, `states` is
/// `(n_paths, n_steps + 1, dim)` with node 0 holding the start state.
/// Conceptually the path is frozen at the start state before `t_start`.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub dim: usize,
    pub seed: u64,
    pub increments: Array3<f64>,
    pub states: Array3<f64>,
    /// Grid indices `(u, v)` actually applied at each step by
    /// [`simulate_controlled`]; `None` for uncontrolled dynamics.
    pub control_indices: Option<Array3<u32>>,
}

impl PathBundle {
    /// State of path `p` at node `k` as a contiguous slice.
    pub fn state(&self, p: usize, k: usize) -> &[f64] {
        let start = (p * self.states.shape()[1] + k) * self.dim;
        &self.states.as_slice().expect("states are contiguous")[start..start + self.dim]
    }

    /// Brownian increment of path `p` over step `k`.
    pub fn increment(&self, p: usize, k: usize) -> &[f64] {
        let start = (p * self.grid.n_steps + k) * self.dim;
        &self.increments.as_slice().expect("increments are contiguous")[start..start + self.dim]
    }

    /// All states at node `k` as an `(n_paths, dim)` view.
    pub fn states_at(&self, k: usize) -> ndarray::ArrayView2<'_, f64> {
        self.states.index_axis(ndarray::Axis(1), k)
    }

    /// Copy of the bundle with one of `n_blocks` balanced contiguous path
    /// blocks removed; path `p` belongs to block `p * n_blocks / n_paths`.
    /// Used by jackknife resampling of solver outputs.
    pub fn without_block(&self, block: usize, n_blocks: usize) -> PathBundle {
        assert!(n_blocks >= 2, "need at least two blocks");
        assert!(block < n_blocks, "block index out of range");
        let keep: Vec<usize> =
            (0..self.n_paths).filter(|&p| p * n_blocks / self.n_paths != block).collect();
        PathBundle {
            grid: self.grid,
            n_paths: keep.len(),
            dim: self.dim,
            seed: self.seed,
            increments: self.increments.select(ndarray::Axis(0), &keep),
            states: self.states.select(ndarray::Axis(0), &keep),
            control_indices: self
                .control_indices
                .as_ref()
                .map(|c| c.select(ndarray::Axis(0), &keep)),
        }
    }

    /// Writes the bundle in the documented little-endian binary layout:
    /// magic `RSGBUN01`, then `n_paths`, `n_steps`, `dim`, `seed` (u64),
    /// `t_start`, `t_end` (f64), `flags` (u64, bit 0 = controls present),
    /// then increments, states, and optional control indices (u32), all in
    /// row-major order.
    pub fn write_binary<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"RSGBUN01")?;
        for v in [self.n_paths as u64, self.grid.n_steps as u64, self.dim as u64, self.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.grid.t_start.to_le_bytes())?;
        w.write_all(&self.grid.t_end.to_le_bytes())?;
        let flags: u64 = if self.control_indices.is_some() { 1 } else { 0 };
        w.write_all(&flags.to_le_bytes())?;
        for &v in self.increments.as_slice().expect("contiguous") {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in self.states.as_slice().expect("contiguous") {
            w.write_all(&v.to_le_bytes())?;
        }
        if let Some(c) = &self.control_indices {
            for &v in c.as_slice().expect("contiguous") {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a bundle written by [`PathBundle::write_binary`].
    pub fn read_binary<R: std::io::Read>(r: &mut R) -> Result<Self> {
        let bad = |detail: &str| Error::MalformedArtifact {
            path: "<path bundle stream>".into(),
            detail: detail.into(),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"RSGBUN01" {
            return Err(bad("bad magic"));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let n_paths = read_u64(r)? as usize;
        let n_steps = read_u64(r)? as usize;
        let dim = read_u64(r)? as usize;
        let seed = read_u64(r)?;
        let t_start = f64::from_le_bytes(read_u64(r)?.to_le_bytes());
        let t_end = f64::from_le_bytes(read_u64(r)?.to_le_bytes());
        let flags = read_u64(r)?;
        if n_paths == 0 || n_steps == 0 || dim == 0 {
            return Err(bad("zero dimension in header"));
        }
        let grid = TimeGrid::new(t_start, t_end, n_steps)
            .map_err(|e| bad(&format!("bad grid: {e}")))?;
        let read_f64s = |r: &mut R, n: usize| -> Result<Vec<f64>> {
            let mut out = vec![0.0; n];
            let mut b = [0u8; 8];
            for slot in out.iter_mut() {
                r.read_exact(&mut b)?;
                *slot = f64::from_le_bytes(b);
            }
            Ok(out)
        };
        let incs = read_f64s(r, n_paths * n_steps * dim)?;
        let states = read_f64s(r, n_paths * (n_steps + 1) * dim)?;
        let increments = Array3::from_shape_vec((n_paths, n_steps, dim), incs)
            .map_err(|e| bad(&format!("increment shape: {e}")))?;
        let states = Array3::from_shape_vec((n_paths, n_steps + 1, dim), states)
            .map_err(|e| bad(&format!("state shape: {e}")))?;
        let control_indices = if flags & 1 == 1 {
            let mut raw = vec![0u32; n_paths * n_steps * 2];
            let mut b = [0u8; 4];
            for slot in raw.iter_mut() {
                r.read_exact(&mut b)?;
                *slot = u32::from_le_bytes(b);
            }
            Some(
                Array3::from_shape_vec((n_paths, n_steps, 2), raw)
                    .map_err(|e| bad(&format!("control shape: {e}")))?,
            )
        } else {
            None
        };
        Ok(PathBundle { grid, n_paths, dim, seed, increments, states, control_indices })
    }
}

/// RNG for one path: a counter-based substream of the bundle seed.
pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Draws the full increment row of one path: `n_steps * dim` normals scaled
/// by `sqrt(dt)`, in step-major order. Every simulator uses this exact
/// order, so equal seeds mean equal noise across dynamics.
fn draw_increments(seed: u64, path: usize, n_steps: usize, dim: usize, sqrt_dt: f64, out: &mut [f64]) {
    let mut rng = path_rng(seed, path);
    for slot in out.iter_mut().take(n_steps * dim) {
        let z: f64 = StandardNormal.sample(&mut rng);
        *slot = z * sqrt_dt;
    }
}

/// One Euler step: `x_next = x + drift * dt + sigma(t, x) * db`, writing over
/// `x`. `diff_buf` is scratch for the diffusion product. Shared by every
/// simulator so that zero drift reproduces the driftless arithmetic bit for
/// bit.
#[inline]
fn euler_step(
    sigma: &DiffusionSpec,
    t: f64,
    dt: f64,
    x: &mut [f64],
    drift: &[f64],
    db: &[f64],
    diff_buf: &mut [f64],
) {
    sigma.mul_into(t, x, db, diff_buf);
    for j in 0..x.len() {
        x[j] += drift[j] * dt + diff_buf[j];
    }
}

/// Simulates the driftless reference dynamics from the model's initial state.
pub fn simulate_driftless(
    model: &GameModel,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_driftless_from(model, model.x0(), grid, n_paths, seed)
}

/// Driftless dynamics from an explicit start state (used by the density
/// diagnostics to launch bundles from interior points `(t_1, x_1)`).
pub fn simulate_driftless_from(
    model: &GameModel,
    x_start: &[f64],
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_uncontrolled(model, None, x_start, grid, n_paths, seed)
}

/// Simulates `dX = b(t, X) dt + sigma dB` from the model's initial state.
pub fn simulate_bounded_drift(
    model: &GameModel,
    b: &BoundedDriftSpec,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_bounded_drift_from(model, b, model.x0(), grid, n_paths, seed)
}

/// Bounded-drift dynamics from an explicit start state.
pub fn simulate_bounded_drift_from(
    model: &GameModel,
    b: &BoundedDriftSpec,
    x_start: &[f64],
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    if b.dim() != model.dim() {
        return Err(Error::InvalidSpec(format!(
            "bounded drift dimension {} does not match state dimension {}",
            b.dim(),
            model.dim()
        )));
    }
    simulate_uncontrolled(model, Some(b), x_start, grid, n_paths, seed)
}

fn simulate_uncontrolled(
    model: &GameModel,
    b: Option<&BoundedDriftSpec>,
    x_start: &[f64],
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    check_sim_args(model, x_start, n_paths)?;
    let m = model.dim();
    let n = grid.n_steps;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let sigma = model.sigma();

    let mut states = Array3::zeros((n_paths, n + 1, m));
    let mut increments = Array3::zeros((n_paths, n, m));
    par::for_each_path_mut(&mut states, &mut increments, |p, mut s_row, mut d_row| {
        let d_slice = d_row.as_slice_mut().expect("contiguous");
        draw_increments(seed, p, n, m, sqrt_dt, d_slice);
        let s_slice = s_row.as_slice_mut().expect("contiguous");
        s_slice[..m].copy_from_slice(x_start);
        let mut x = x_start.to_vec();
        let mut drift = vec![0.0; m];
        let mut diff_buf = vec![0.0; m];
        for k in 0..n {
            let t = grid.node_time(k);
            if let Some(b) = b {
                b.eval_into(t, &x, &mut drift);
            }
            let db = &d_slice[k * m..(k + 1) * m];
            euler_step(sigma, t, dt, &mut x, &drift, db, &mut diff_buf);
            s_slice[(k + 1) * m..(k + 2) * m].copy_from_slice(&x);
        }
    });

    Ok(PathBundle { grid, n_paths, dim: m, seed, increments, states, control_indices: None })
}

/// Simulates the controlled game dynamics, recording the grid indices of the
/// controls applied at every step. The feedback map must return grid
/// members; anything else is an error naming the offending point.
pub fn simulate_controlled(
    model: &GameModel,
    feedback: &FeedbackControls,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_controlled_from(model, feedback, model.x0(), grid, n_paths, seed)
}

/// Controlled dynamics from an explicit start state.
pub fn simulate_controlled_from(
    model: &GameModel,
    feedback: &FeedbackControls,
    x_start: &[f64],
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    check_sim_args(model, x_start, n_paths)?;
    let m = model.dim();
    let n = grid.n_steps;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let sigma = model.sigma();

    struct PathRow {
        states: Vec<f64>,
        incs: Vec<f64>,
        ctrl: Vec<u32>,
    }

    let rows: Vec<PathRow> = par::try_map_indexed(n_paths, |p| -> Result<PathRow> {
        let mut incs = vec![0.0; n * m];
        draw_increments(seed, p, n, m, sqrt_dt, &mut incs);
        let mut states = vec![0.0; (n + 1) * m];
        states[..m].copy_from_slice(x_start);
        let mut ctrl = vec![0u32; n * 2];
        let mut x = x_start.to_vec();
        let mut drift = vec![0.0; m];
        let mut diff_buf = vec![0.0; m];
        for k in 0..n {
            let t = grid.node_time(k);
            let (ui, vi) = feedback.eval_indices(model, k, t, &x)?;
            let u = model.grid(crate::model::Player::One).point(ui);
            let v = model.grid(crate::model::Player::Two).point(vi);
            ctrl[2 * k] = ui as u32;
            ctrl[2 * k + 1] = vi as u32;
            model.drift_into(t, &x, u, v, &mut drift);
            let db = &incs[k * m..(k + 1) * m];
            euler_step(sigma, t, dt, &mut x, &drift, db, &mut diff_buf);
            states[(k + 1) * m..(k + 2) * m].copy_from_slice(&x);
        }
        Ok(PathRow { states, incs, ctrl })
    })?;

    let mut states = Array3::zeros((n_paths, n + 1, m));
    let mut increments = Array3::zeros((n_paths, n, m));
    let mut controls = Array3::zeros((n_paths, n, 2));
    for (p, row) in rows.into_iter().enumerate() {
        states
            .index_axis_mut(ndarray::Axis(0), p)
            .as_slice_mut()
            .expect("contiguous")
            .copy_from_slice(&row.states);
        increments
            .index_axis_mut(ndarray::Axis(0), p)
            .as_slice_mut()
            .expect("contiguous")
            .copy_from_slice(&row.incs);
        controls
            .index_axis_mut(ndarray::Axis(0), p)
            .as_slice_mut()
            .expect("contiguous")
            .copy_from_slice(&row.ctrl);
    }

    Ok(PathBundle {
        grid,
        n_paths,
        dim: m,
        seed,
        increments,
        states,
        control_indices: Some(controls),
    })
}

fn check_sim_args(model: &GameModel, x_start: &[f64], n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::TooFewPaths { what: "simulation", required: 1, actual: 0 });
    }
    if x_start.len() != model.dim() {
        return Err(Error::InvalidSpec(format!(
            "start state has dimension {}, model has {}",
            x_start.len(),
            model.dim()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Moment diagnostics
// ---------------------------------------------------------------------------

/// One polynomial moment estimate of the running supremum.
#[derive(Debug, Clone, Serialize)]
pub struct SupMoment {
    pub q: f64,
    /// Empirical `E[ sup_k |X_k|^{2q} ]`.
    pub estimate: f64,
    pub std_error: f64,
    pub finite: bool,
}

/// Exponential moment estimate of the running supremum.
#[derive(Debug, Clone, Serialize)]
pub struct ExpMoment {
    pub lambda: f64,
    pub l: f64,
    /// Empirical `E[ exp(lambda * sup_k |X_k|^l) ]`.
    pub estimate: f64,
    pub std_error: f64,
    pub finite: bool,
}

/// Report of [`moment_diagnostics`].
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub n_paths: usize,
    pub sup_moments: Vec<SupMoment>,
    pub exp_moment: ExpMoment,
}

impl MomentReport {
    pub fn all_finite(&self) -> bool {
        self.sup_moments.iter().all(|m| m.finite) && self.exp_moment.finite
    }
}

/// Estimates polynomial moments `E[sup|X|^{2q}]` for each `q` in `q_list`
/// and the exponential moment `E[exp(lambda sup|X|^l)]`. Requires
/// `lambda > 0` and `l` in `[1, 2)`; non-finite estimates are flagged, not
/// raised.
pub fn moment_diagnostics(
    paths: &PathBundle,
    q_list: &[f64],
    lambda: f64,
    l: f64,
) -> Result<MomentReport> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            detail: format!("must be positive, got {lambda}"),
        });
    }
    if !(1.0..2.0).contains(&l) {
        return Err(Error::InvalidParameter {
            name: "l",
            detail: format!("exponential moment order must lie in [1, 2), got {l}"),
        });
    }
    for &q in q_list {
        if !(q > 0.0) {
            return Err(Error::InvalidParameter {
                name: "q",
                detail: format!("moment orders must be positive, got {q}"),
            });
        }
    }

    let sups: Vec<f64> = par::map_indexed(paths.n_paths, |p| {
        let mut sup = 0.0f64;
        for k in 0..paths.grid.n_nodes() {
            let n = crate::model::norm(paths.state(p, k));
            sup = sup.max(n);
        }
        sup
    });

    let mut sup_moments = Vec::with_capacity(q_list.len());
    for &q in q_list {
        let vals: Vec<f64> = sups.iter().map(|s| s.powf(2.0 * q)).collect();
        let (est, se) = stats::mean_and_se(&vals);
        sup_moments.push(SupMoment { q, estimate: est, std_error: se, finite: est.is_finite() });
    }
    let exp_vals: Vec<f64> = sups.iter().map(|s| (lambda * s.powf(l)).exp()).collect();
    let (est, se) = stats::mean_and_se(&exp_vals);
    let exp_moment =
        ExpMoment { lambda, l, estimate: est, std_error: se, finite: est.is_finite() };

    Ok(MomentReport { n_paths: paths.n_paths, sup_moments, exp_moment })
}

/// Means of each state coordinate at every node, `(n_nodes, dim)`. Used by
/// consistency tests against deterministic averaged dynamics.
pub fn node_means(paths: &PathBundle) -> Array2<f64> {
    let n_nodes = paths.grid.n_nodes();
    let mut out = Array2::zeros((n_nodes, paths.dim));
    for k in 0..n_nodes {
        for p in 0..paths.n_paths {
            let x = paths.state(p, k);
            for j in 0..paths.dim {
                out[(k, j)] += x[j];
            }
        }
    }
    out.mapv_inplace(|v| v / paths.n_paths as f64);
    out
}
