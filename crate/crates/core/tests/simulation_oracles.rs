//! The forward simulator against independent re-derivations: a bitwise
//! Euler replay, a Runge-Kutta mean oracle, and first-order refinement
//! coupling on shared noise.

use nalgebra::DMatrix;
use rsg_core::feedback::FeedbackControls;
use rsg_core::model::{
    ControlGrid, CostSpec, DiffusionSpec, DriftSpec, GameModel, ModelConstants, TerminalSpec,
};
use rsg_core::sde::{node_means, simulate_controlled, TimeGrid};

const DRIFT_CONST: f64 = 0.1;
const DRIFT_STATE: f64 = 0.5;
const DRIFT_U: f64 = 0.8;
const DRIFT_V: f64 = -0.3;
const SIGMA: f64 = 0.7;
const U_STAR: f64 = 0.5;
const V_STAR: f64 = -1.0;

fn affine_model() -> GameModel {
    GameModel::new(
        1.0,
        vec![0.2],
        DiffusionSpec::constant(DMatrix::from_element(1, 1, SIGMA)).unwrap(),
        DriftSpec::affine(
            vec![DRIFT_CONST],
            DMatrix::from_element(1, 1, DRIFT_STATE),
            DMatrix::from_element(1, 1, DRIFT_U),
            DMatrix::from_element(1, 1, DRIFT_V),
        )
        .unwrap(),
        [
            CostSpec::quadratic_controls(1.0, 0.0, 0.0, 0.0).unwrap(),
            CostSpec::quadratic_controls(0.0, 1.0, 0.0, 0.0).unwrap(),
        ],
        [TerminalSpec::constant(0.0), TerminalSpec::constant(0.0)],
        [
            ControlGrid::scalar(&[0.0, U_STAR]).unwrap(),
            ControlGrid::scalar(&[V_STAR, 0.0]).unwrap(),
        ],
        0.5,
        ModelConstants::new(2.0, 3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap(),
    )
    .unwrap()
}

fn drift(x: f64, u: f64, v: f64) -> f64 {
    DRIFT_CONST + DRIFT_STATE * x + DRIFT_U * u + DRIFT_V * v
}

#[test]
fn controlled_chain_replays_bitwise() {
    // The recorded bundle must satisfy the Euler recursion exactly:
    // X_{k+1} = X_k + f(X_k, u, v) dt + sigma dB_k, where the recorded
    // increments are the Brownian increments themselves.
    let model = affine_model();
    let grid = TimeGrid::over_horizon(&model, 16).unwrap();
    let feedback = FeedbackControls::constant(&model, 1, 0).unwrap(); // u = 0.5, v = -1
    let paths = simulate_controlled(&model, &feedback, grid, 64, 91).unwrap();
    let dt = grid.dt();
    for p in 0..64 {
        let mut x = 0.2;
        assert_eq!(paths.state(p, 0)[0], x);
        for k in 0..16 {
            let db = paths.increment(p, k)[0];
            // Same association as the simulator: x += drift dt + sigma dB.
            x += drift(x, U_STAR, V_STAR) * dt + (0.0 + SIGMA * db);
            assert_eq!(
                paths.state(p, k + 1)[0].to_bits(),
                x.to_bits(),
                "path {p} node {}",
                k + 1
            );
        }
    }
}

#[test]
fn node_means_track_runge_kutta_oracle() {
    // The mean of the controlled chain solves dm/dt = f(m, u*, v*), which
    // an RK4 integrator solves to far higher accuracy than either the
    // Euler discretization (O(dt)) or the Monte Carlo error.
    let model = affine_model();
    let n_steps = 64;
    let n_paths = 40_000;
    let grid = TimeGrid::over_horizon(&model, n_steps).unwrap();
    let feedback = FeedbackControls::constant(&model, 1, 0).unwrap();
    let paths = simulate_controlled(&model, &feedback, grid, n_paths, 5150).unwrap();
    let means = node_means(&paths);

    let dt = grid.dt();
    let mut m = 0.2;
    for k in 0..=n_steps {
        if k > 0 {
            let f = |y: f64| drift(y, U_STAR, V_STAR);
            let k1 = f(m);
            let k2 = f(m + 0.5 * dt * k1);
            let k3 = f(m + 0.5 * dt * k2);
            let k4 = f(m + dt * k3);
            m += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        // MC error of the mean ~ sd/sqrt(P) <= sigma sqrt(t) e^{Bt}/200;
        // Euler mean bias ~ e^{BT} B^2 t dt / 2. Both comfortably inside
        // the tolerance below.
        let tol = 3.0 * SIGMA * 2.0 / (n_paths as f64).sqrt() + 0.012 * grid.node_time(k);
        assert!(
            (means[(k, 0)] - m).abs() < tol,
            "node {k}: sim mean {} vs RK4 {m}",
            means[(k, 0)]
        );
    }
}

#[test]
fn refinement_on_shared_noise_converges_at_first_order() {
    // Coarsen one fine bundle by summing increments; with constant
    // diffusion the strong gap between consecutive dyadic resolutions
    // shrinks by about half per refinement.
    let model = affine_model();
    let fine_steps = 64;
    let n_paths = 4_000;
    let grid = TimeGrid::over_horizon(&model, fine_steps).unwrap();
    let feedback = FeedbackControls::constant(&model, 1, 0).unwrap();
    let paths = simulate_controlled(&model, &feedback, grid, n_paths, 777).unwrap();
    let fine_dt = grid.dt();

    // Terminal state of the Euler chain at `steps` resolution driven by
    // the aggregated Brownian increments of the fine bundle.
    let terminal_at = |steps: usize, p: usize| -> f64 {
        let ratio = fine_steps / steps;
        let dt = 1.0 / steps as f64;
        let mut x = 0.2;
        for k in 0..steps {
            let mut dw = 0.0;
            for j in 0..ratio {
                dw += paths.increment(p, k * ratio + j)[0] * fine_dt.sqrt();
            }
            x += drift(x, U_STAR, V_STAR) * dt + SIGMA * dw;
        }
        x
    };

    let rms_gap = |coarse: usize| -> f64 {
        let mut acc = 0.0;
        for p in 0..n_paths {
            let d = terminal_at(coarse, p) - terminal_at(2 * coarse, p);
            acc += d * d;
        }
        (acc / n_paths as f64).sqrt()
    };

    let g8 = rms_gap(8);
    let g16 = rms_gap(16);
    let ratio = g8 / g16;
    assert!(
        (1.6..=2.6).contains(&ratio),
        "first-order coupling expects gap ratio near 2, got {ratio} ({g8} / {g16})"
    );
}
