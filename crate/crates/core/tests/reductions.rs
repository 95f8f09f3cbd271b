//! Structural reductions the solver must respect: a game with an inert
//! opponent collapses to optimal control, a player-symmetric game yields
//! equal values, and relabeling the players mirrors the solution.

use nalgebra::DMatrix;
use rsg_core::bsde::{
    extract_feedback, solve_backward, GeneratorControls, RegressionBasis, SolverParams,
};
use rsg_core::feedback::FeedbackControls;
use rsg_core::hamiltonian::build_isaacs_map;
use rsg_core::model::{
    ControlGrid, CostSpec, DiffusionSpec, DriftSpec, GameModel, ModelConstants, TerminalSpec,
};
use rsg_core::nash::{verify_nash, DeviationSpec};
use rsg_core::payoff::eval_payoff_direct;
use rsg_core::sde::{simulate_driftless, TimeGrid};
use rsg_core::Player;

/// Player 2 has a single null control and no influence anywhere: the
/// game is player 1's control problem. Costs are `u^2` with a linear
/// terminal `0.8 x`, so the value gradient is 0.8 everywhere and the
/// optimal feedback over the grid is the constant that minimises
/// `0.8 u + u^2`, namely `u = -0.5` (the next action takes over only
/// below gradient 0.2, far from 0.8).
fn one_player_model() -> GameModel {
    GameModel::new(
        1.0,
        vec![0.0],
        DiffusionSpec::identity(1),
        DriftSpec::affine(
            vec![0.0],
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap(),
        [
            CostSpec::quadratic_controls(1.0, 0.0, 0.0, 1.0).unwrap(),
            CostSpec::constant(0.0),
        ],
        [TerminalSpec::linear(vec![0.8]).unwrap(), TerminalSpec::constant(0.0)],
        [
            ControlGrid::scalar(&[-0.5, 0.3, 2.0]).unwrap(),
            ControlGrid::scalar(&[0.0]).unwrap(),
        ],
        1.0,
        ModelConstants::new(2.0, 2.0, 1.5, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap(),
    )
    .unwrap()
}

#[test]
fn inert_opponent_reduces_to_optimal_control() {
    let model = one_player_model();
    let grid = TimeGrid::over_horizon(&model, 20).unwrap();
    let paths = simulate_driftless(&model, grid, 20_000, 808).unwrap();
    let controls = GeneratorControls::Equilibrium(build_isaacs_map(&model));
    // Piecewise-linear fits track the exponential-shaped responses much
    // better than global polynomials over a +-4 sigma design.
    let params = SolverParams {
        basis: Some(RegressionBasis::PiecewiseLinear { n_knots: 10 }),
        ..SolverParams::default()
    };
    let solution = solve_backward(&model, &paths, controls, &params).unwrap();
    let candidate = extract_feedback(&model, &solution.tables()).unwrap();

    // Paired comparison against every constant control of player 1.
    let suite: Vec<DeviationSpec> = (0..model.grid(Player::One).len())
        .map(|i| DeviationSpec::Constant { player: Player::One, index: i })
        .collect();
    let cert = verify_nash(&model, &candidate, &suite, grid, 20_000, 112, 3.0).unwrap();
    assert!(
        cert.passed,
        "candidate lost to a constant control: worst score {}",
        cert.worst_score
    );

    // Unpaired exhaustive search agrees within Monte Carlo noise.
    let candidate_cost = eval_payoff_direct(&model, &candidate, grid, 20_000, 113).unwrap();
    let mut best_constant = f64::INFINITY;
    let mut best_se = f64::NAN;
    for i in 0..model.grid(Player::One).len() {
        let constant = FeedbackControls::constant(&model, i, 0).unwrap();
        let est = eval_payoff_direct(&model, &constant, grid, 20_000, 114).unwrap();
        if est[0].value < best_constant {
            best_constant = est[0].value;
            best_se = est[0].std_error;
        }
    }
    let slack = 3.0 * (candidate_cost[0].std_error + best_se);
    assert!(
        candidate_cost[0].value <= best_constant + slack,
        "candidate {} should not lose to best constant {} by more than {slack}",
        candidate_cost[0].value,
        best_constant
    );

    // A deliberately bad candidate must fail the same certificate.
    let bad = FeedbackControls::constant(&model, 2, 0).unwrap(); // u = 2 always
    let bad_cert = verify_nash(&model, &bad, &suite, grid, 20_000, 112, 3.0).unwrap();
    assert!(!bad_cert.passed, "constant u=2 cannot be optimal here");
    assert!(bad_cert.deviations.iter().any(|d| d.margin < 0.0 && !d.passed));
}

/// Exchanging the players maps this model to itself.
fn symmetric_model() -> GameModel {
    let grid = || ControlGrid::scalar(&[-1.0, 0.0, 1.0]).unwrap();
    GameModel::new(
        1.0,
        vec![0.1],
        DiffusionSpec::identity(1),
        DriftSpec::affine(
            vec![0.0],
            DMatrix::from_element(1, 1, -0.1),
            DMatrix::from_element(1, 1, 0.7),
            DMatrix::from_element(1, 1, 0.7),
        )
        .unwrap(),
        [
            CostSpec::quadratic_controls(1.0, 0.3, 0.2, 1.0).unwrap(),
            CostSpec::quadratic_controls(0.3, 1.0, 0.2, 1.0).unwrap(),
        ],
        [TerminalSpec::linear(vec![0.4]).unwrap(), TerminalSpec::linear(vec![0.4]).unwrap()],
        [grid(), grid()],
        0.8,
        ModelConstants::new(2.0, 2.0, 1.5, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap(),
    )
    .unwrap()
}

#[test]
fn symmetric_game_yields_equal_values() {
    let model = symmetric_model();
    let grid = TimeGrid::over_horizon(&model, 16).unwrap();
    let paths = simulate_driftless(&model, grid, 10_000, 21).unwrap();
    let controls = GeneratorControls::Equilibrium(build_isaacs_map(&model));
    let solution = solve_backward(&model, &paths, controls, &SolverParams::default()).unwrap();
    // Both players run through identical recursions, so the values agree
    // to the bit.
    assert_eq!(
        solution.y0_exp(Player::One).to_bits(),
        solution.y0_exp(Player::Two).to_bits(),
        "y0: {} vs {}",
        solution.y0(Player::One),
        solution.y0(Player::Two)
    );
}

/// The same game with the player labels exchanged.
fn asymmetric_pair() -> (GameModel, GameModel) {
    let grid1 = &[-1.0, 0.0, 1.0][..];
    let grid2 = &[-0.5, 0.0, 0.5][..];
    let forward = GameModel::new(
        1.0,
        vec![0.1],
        DiffusionSpec::constant(DMatrix::from_element(1, 1, 1.2)).unwrap(),
        DriftSpec::affine(
            vec![0.05],
            DMatrix::from_element(1, 1, -0.2),
            DMatrix::from_element(1, 1, 0.9),
            DMatrix::from_element(1, 1, -0.6),
        )
        .unwrap(),
        [
            CostSpec::quadratic_controls(1.0, 0.2, 0.3, 1.2).unwrap(),
            CostSpec::quadratic_controls(0.1, 0.8, 0.15, 1.2).unwrap(),
        ],
        [TerminalSpec::linear(vec![0.5]).unwrap(), TerminalSpec::linear(vec![-0.25]).unwrap()],
        [ControlGrid::scalar(grid1).unwrap(), ControlGrid::scalar(grid2).unwrap()],
        0.7,
        ModelConstants::new(2.0, 2.0, 1.5, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap(),
    )
    .unwrap();
    let swapped = GameModel::new(
        1.0,
        vec![0.1],
        DiffusionSpec::constant(DMatrix::from_element(1, 1, 1.2)).unwrap(),
        DriftSpec::affine(
            vec![0.05],
            DMatrix::from_element(1, 1, -0.2),
            DMatrix::from_element(1, 1, -0.6),
            DMatrix::from_element(1, 1, 0.9),
        )
        .unwrap(),
        [
            CostSpec::quadratic_controls(0.8, 0.1, 0.15, 1.2).unwrap(),
            CostSpec::quadratic_controls(0.2, 1.0, 0.3, 1.2).unwrap(),
        ],
        [TerminalSpec::linear(vec![-0.25]).unwrap(), TerminalSpec::linear(vec![0.5]).unwrap()],
        [ControlGrid::scalar(grid2).unwrap(), ControlGrid::scalar(grid1).unwrap()],
        0.7,
        ModelConstants::new(2.0, 2.0, 1.5, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap(),
    )
    .unwrap();
    (forward, swapped)
}

#[test]
fn player_relabeling_mirrors_values() {
    let (forward, swapped) = asymmetric_pair();
    let grid = TimeGrid::over_horizon(&forward, 16).unwrap();
    let solve = |model: &GameModel| {
        let paths = simulate_driftless(model, grid, 10_000, 66).unwrap();
        let controls = GeneratorControls::Equilibrium(build_isaacs_map(model));
        solve_backward(model, &paths, controls, &SolverParams::default()).unwrap()
    };
    let a = solve(&forward);
    let b = solve(&swapped);
    // Identical driftless paths (same diffusion, same seed); only the
    // labels moved. Accumulation order inside coefficient evaluations
    // differs, so agreement is to roundoff rather than bitwise.
    for (pa, pb) in [(Player::One, Player::Two), (Player::Two, Player::One)] {
        let ya = a.y0_exp(pa);
        let yb = b.y0_exp(pb);
        assert!(
            (ya - yb).abs() <= 1e-9 * ya.abs().max(1.0),
            "{pa:?} forward {ya} vs {pb:?} swapped {yb}"
        );
    }
}
