//! Temporary exploration harness; deleted before release.

use nalgebra::DMatrix;
use rsg_core::bsde::{solve_backward, GeneratorControls, SolverParams};
use rsg_core::feedback::FeedbackControls;
use rsg_core::model::{
    ControlGrid, CostSpec, DiffusionSpec, DriftSpec, GameModel, ModelConstants, TerminalSpec,
};
use rsg_core::payoff::eval_payoff_direct;
use rsg_core::sde::{simulate_driftless, TimeGrid};
use rsg_core::Player;

fn build(drift_const: f64, drift_state: f64, state_cost: f64, theta: f64) -> GameModel {
    let cost = if state_cost > 0.0 {
        CostSpec::quadratic_controls(0.0, 0.0, state_cost, 1.2).unwrap()
    } else {
        CostSpec::constant(0.0)
    };
    GameModel::new(
        1.0,
        vec![0.0],
        DiffusionSpec::identity(1),
        DriftSpec::affine(
            vec![drift_const],
            DMatrix::from_element(1, 1, drift_state),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        )
        .unwrap(),
        [cost.clone(), cost],
        [
            TerminalSpec::linear(vec![0.4]).unwrap(),
            TerminalSpec::linear(vec![0.4]).unwrap(),
        ],
        [ControlGrid::scalar(&[0.0]).unwrap(), ControlGrid::scalar(&[0.0]).unwrap()],
        theta,
        ModelConstants::new(2.0, 1.5, 2.0, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap(),
    )
    .unwrap()
}

/// Localize the systematic negative gap: which generator term carries it?
#[test]
fn probe_isolation() {
    let cases = [
        ("zero generator   ", build(0.0, 0.0, 0.0, 0.5)),
        ("const drift      ", build(0.3, 0.0, 0.0, 0.5)),
        ("affine drift     ", build(0.1, 0.25, 0.0, 0.5)),
        ("state cost only  ", build(0.0, 0.0, 0.25, 0.5)),
        ("drift + cost     ", build(0.1, 0.25, 0.25, 0.5)),
    ];
    for (label, model) in &cases {
        let feedback = FeedbackControls::constant(model, 0, 0).unwrap();
        let grid = TimeGrid::over_horizon(model, 25).unwrap();
        let payoffs = eval_payoff_direct(model, &feedback, grid, 1_000_000, 9_999).unwrap();
        let mut gaps = Vec::new();
        for path_seed in 0..8u64 {
            let paths = simulate_driftless(model, grid, 40_000, 1_000 + path_seed).unwrap();
            let solution = solve_backward(
                model,
                &paths,
                GeneratorControls::Fixed(feedback.clone()),
                &SolverParams::default(),
            )
            .unwrap();
            gaps.push(solution.y0_exp(Player::One) - payoffs[0].value);
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let sd = (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>()
            / (gaps.len() - 1) as f64)
            .sqrt();
        println!(
            "{label}: mean gap {mean:+.3e} (sd {sd:.1e}, se of mean {:.1e}, Jse {:.1e})",
            sd / (gaps.len() as f64).sqrt(),
            payoffs[0].std_error
        );
    }
}
