//! Randomized invariants: the static Nash scanner against an independent
//! brute force, positivity and normalization of exponential weights,
//! parallel/sequential agreement, regression stability, truncation
//! plateau nesting, and certificate monotonicity in the tolerance.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rsg_core::bsde::basis::{NodeRegression, RegressionBasis};
use rsg_core::bsde::generator::{GeneratorControls, TransformedGenerator};
use rsg_core::girsanov::{dolean_dade, IntegrandSpec};
use rsg_core::hamiltonian::{build_isaacs_map, solve_static_nash, StaticGame};
use rsg_core::model::{
    ControlGrid, CostSpec, DiffusionSpec, DriftSpec, GameModel, ModelConstants, TerminalSpec,
};
use rsg_core::nash::{default_deviation_suite, verify_nash};
use rsg_core::par;
use rsg_core::sde::{simulate_driftless, TimeGrid};

/// Exhaustive Nash search, written independently of the library scan:
/// enumerate every cell and test the two defining inequalities directly.
fn brute_force_nash(a1: &DMatrix<f64>, a2: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (n1, n2) = a1.shape();
    let mut out = Vec::new();
    for i in 0..n1 {
        for j in 0..n2 {
            let best_row = (0..n1).all(|k| a1[(i, j)] <= a1[(k, j)]);
            let best_col = (0..n2).all(|l| a2[(i, j)] <= a2[(i, l)]);
            if best_row && best_col {
                out.push((i, j));
            }
        }
    }
    out
}

fn game_strategy(integer_valued: bool) -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (1usize..=12, 1usize..=12).prop_flat_map(move |(n1, n2)| {
        let cell = if integer_valued {
            // Small integer range forces plenty of exact ties.
            (0i32..4).prop_map(|v| v as f64).boxed()
        } else {
            (-10.0f64..10.0).boxed()
        };
        (
            proptest::collection::vec(cell.clone(), n1 * n2),
            proptest::collection::vec(cell, n1 * n2),
        )
            .prop_map(move |(c1, c2)| {
                (
                    DMatrix::from_row_slice(n1, n2, &c1),
                    DMatrix::from_row_slice(n1, n2, &c2),
                )
            })
    })
}

proptest! {
    #[test]
    fn nash_scan_matches_brute_force_continuous((a1, a2) in game_strategy(false)) {
        let expected = brute_force_nash(&a1, &a2);
        let game = StaticGame::new(a1, a2).unwrap();
        match solve_static_nash(&game) {
            Ok(point) => {
                prop_assert_eq!(expected.first(), Some(&(point.row, point.col)));
                prop_assert_eq!(point.multiplicity, expected.len());
            }
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }

    #[test]
    fn nash_scan_matches_brute_force_with_ties((a1, a2) in game_strategy(true)) {
        let expected = brute_force_nash(&a1, &a2);
        let game = StaticGame::new(a1, a2).unwrap();
        match solve_static_nash(&game) {
            Ok(point) => {
                prop_assert_eq!(expected.first(), Some(&(point.row, point.col)));
                prop_assert_eq!(point.multiplicity, expected.len());
            }
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }
}

fn plain_model() -> GameModel {
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn weights_start_at_one_and_stay_positive(
        c in -0.8f64..0.8,
        seed in any::<u64>(),
    ) {
        let model = plain_model();
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let paths = simulate_driftless(&model, grid, 512, seed).unwrap();
        let weights = dolean_dade(&model, &paths, &IntegrandSpec::Constant(vec![c])).unwrap();
        for p in 0..512 {
            prop_assert_eq!(weights.weight(p, 0), 1.0);
            for k in 0..=8 {
                prop_assert!(weights.weight(p, k) > 0.0);
            }
        }
        let terminal = weights.terminal_weights();
        let mean = terminal.iter().sum::<f64>() / terminal.len() as f64;
        prop_assert!((mean - 1.0).abs() < 0.5, "E[zeta_T] = {}", mean);
    }

    #[test]
    fn parallel_map_matches_sequential(seed in any::<u64>(), n in 1usize..200) {
        let f = |i: usize| {
            let x = (i as f64 + (seed % 1024) as f64) * 0.37;
            x.sin() * x.exp().min(1e6)
        };
        prop_assert_eq!(par::map_indexed(n, f), par::map_indexed_seq(n, f));
    }

    #[test]
    fn regression_fits_stay_finite(
        scale in 0.01f64..1e3,
        seed in any::<u64>(),
    ) {
        use ndarray::Array2;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 64;
        let states =
            Array2::from_shape_fn((n, 1), |_| rng.gen_range(-scale..scale));
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
        let basis = RegressionBasis::default_for_dim(1);
        let fitted = basis.fit(states.view()).unwrap();
        let reg = NodeRegression::new(&fitted, states.view()).unwrap();
        let coeffs = reg.fit(&y);
        prop_assert!(coeffs.iter().all(|c| c.is_finite()));
        for p in 0..n {
            let x = [states[(p, 0)]];
            prop_assert!(fitted.eval(&coeffs, &x).is_finite());
        }
    }
}

fn control_coupled_model() -> GameModel {
    GameModel::new(
        1.0,
        vec![0.0],
        DiffusionSpec::constant(DMatrix::from_element(1, 1, 2.0)).unwrap(),
        DriftSpec::affine(
            vec![0.0],
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap(),
        [
            CostSpec::quadratic_controls(1.0, 0.0, 0.0, 0.0).unwrap(),
            CostSpec::quadratic_controls(0.0, 1.0, 0.0, 0.0).unwrap(),
        ],
        [TerminalSpec::linear(vec![0.2]).unwrap(), TerminalSpec::linear(vec![0.2]).unwrap()],
        [
            ControlGrid::scalar(&[0.0, 0.5, 1.0]).unwrap(),
            ControlGrid::scalar(&[0.0, 0.5, 1.0]).unwrap(),
        ],
        1.0,
        ModelConstants::new(2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Inside the common plateau (radius within the smaller level, state
    /// within the clamp box, values above the floor) every truncation
    /// level computes the identical generator, bit for bit — the property
    /// that makes the level ladder meaningful.
    #[test]
    fn truncation_levels_agree_on_the_plateau(
        x in -5.0f64..5.0,
        y1 in 0.2f64..2.0,
        y2 in 0.2f64..2.0,
        z1 in -2.0f64..2.0,
        z2 in -2.0f64..2.0,
        t in 0.0f64..1.0,
    ) {
        let model = control_coupled_model();
        let isaacs = build_isaacs_map(&model);
        let low =
            TransformedGenerator::new(&model, GeneratorControls::Equilibrium(isaacs.clone()), 8)
                .unwrap();
        let high =
            TransformedGenerator::new(&model, GeneratorControls::Equilibrium(isaacs), 32).unwrap();
        let mut s_low = low.scratch();
        let mut s_high = high.scratch();
        let a = low
            .eval(&mut s_low, 0, t, &[x], [y1, y2], &[z1], &[z2])
            .unwrap();
        let b = high
            .eval(&mut s_high, 0, t, &[x], [y1, y2], &[z1], &[z2])
            .unwrap();
        prop_assert_eq!(a.g[0].to_bits(), b.g[0].to_bits());
        prop_assert_eq!(a.g[1].to_bits(), b.g[1].to_bits());
        prop_assert_eq!(a.u_index, b.u_index);
        prop_assert_eq!(a.v_index, b.v_index);
        prop_assert_eq!(a.ramp, 1.0);
        prop_assert_eq!(b.ramp, 1.0);
    }
}

#[test]
fn certificate_verdict_is_monotone_in_tolerance() {
    let model = control_coupled_model();
    let grid = TimeGrid::over_horizon(&model, 8).unwrap();
    let candidate = rsg_core::feedback::FeedbackControls::constant(&model, 0, 0).unwrap();
    let suite = default_deviation_suite(&model, 5, 2);
    let tight = verify_nash(&model, &candidate, &suite, grid, 2_000, 31, 0.25).unwrap();
    let loose = verify_nash(&model, &candidate, &suite, grid, 2_000, 31, 3.0).unwrap();
    // Same seed: the sampled margins are identical...
    for (a, b) in tight.deviations.iter().zip(&loose.deviations) {
        assert_eq!(a.margin.to_bits(), b.margin.to_bits());
        assert_eq!(a.paired_se.to_bits(), b.paired_se.to_bits());
        // ...and a pass at the tight tolerance implies one at the loose.
        assert!(!a.passed || b.passed);
    }
    assert_eq!(tight.worst_score.to_bits(), loose.worst_score.to_bits());
}
