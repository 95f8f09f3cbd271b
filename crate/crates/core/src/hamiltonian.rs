//! Hamiltonians and pointwise grid equilibria.
//!
//! For gradients `p`, `q` the player Hamiltonians are
//!
//! ```text
//! H_1(t, x, p, u, v) = p . sigma^{-1}(t, x) f(t, x, u, v) + h_1(t, x, u, v)
//! H_2(t, x, q, u, v) = q . sigma^{-1}(t, x) f(t, x, u, v) + h_2(t, x, u, v)
//! ```
//!
//! (costs already carry the risk-sensitivity rescaling). Restricted to the
//! control grids these define a bimatrix game in which both players
//! minimize; a pure Nash point of that game is the pointwise equilibrium
//! selection the backward solver plugs into its generator. Pure points need
//! not exist; that is surfaced as an error carrying the evaluation point,
//! never patched over.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GameModel, Player};

/// Bimatrix minimization game on the control grids: `a1[(i, j)]` is player
/// 1's Hamiltonian at `(u_i, v_j)`, `a2` player 2's. Player 1 picks the row,
/// player 2 the column, each minimizing their own entry.
#[derive(Debug, Clone)]
pub struct StaticGame {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
}

/// Pure Nash point of a [`StaticGame`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashPoint {
    pub row: usize,
    pub col: usize,
    /// Player 1's value at the point.
    pub h1: f64,
    /// Player 2's value at the point.
    pub h2: f64,
    /// Number of pure Nash cells in the game; the lexicographically first
    /// one is returned.
    pub multiplicity: usize,
}

/// Marker error: the static game has no pure Nash cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoPureEquilibrium;

impl std::fmt::Display for NoPureEquilibrium {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("no pure Nash equilibrium")
    }
}

impl std::error::Error for NoPureEquilibrium {}

impl StaticGame {
    pub fn new(a1: DMatrix<f64>, a2: DMatrix<f64>) -> Result<Self> {
        if a1.nrows() == 0 || a1.ncols() == 0 {
            return Err(Error::InvalidSpec("static game must be nonempty".into()));
        }
        if a1.shape() != a2.shape() {
            return Err(Error::InvalidSpec(format!(
                "payoff matrices differ in shape: {:?} vs {:?}",
                a1.shape(),
                a2.shape()
            )));
        }
        if a1.iter().chain(a2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("payoff matrices must be finite".into()));
        }
        Ok(StaticGame { a1, a2 })
    }
}

/// Finds the lexicographically first pure Nash cell of the minimization
/// game, together with the total number of Nash cells.
///
/// A cell `(i, j)` qualifies iff `a1[(i, j)]` attains the column minimum of
/// column `j` and `a2[(i, j)]` attains the row minimum of row `i`. The scan
/// precomputes those minima and visits cells in row-major order, so ties are
/// broken toward the smallest `(row, col)`.
pub fn solve_static_nash(game: &StaticGame) -> std::result::Result<NashPoint, NoPureEquilibrium> {
    let (n1, n2) = game.a1.shape();
    let mut col_min = vec![f64::INFINITY; n2];
    for j in 0..n2 {
        for i in 0..n1 {
            col_min[j] = col_min[j].min(game.a1[(i, j)]);
        }
    }
    let mut row_min = vec![f64::INFINITY; n1];
    for i in 0..n1 {
        for j in 0..n2 {
            row_min[i] = row_min[i].min(game.a2[(i, j)]);
        }
    }
    let mut first: Option<(usize, usize)> = None;
    let mut multiplicity = 0usize;
    for i in 0..n1 {
        for j in 0..n2 {
            if game.a1[(i, j)] == col_min[j] && game.a2[(i, j)] == row_min[i] {
                multiplicity += 1;
                if first.is_none() {
                    first = Some((i, j));
                }
            }
        }
    }
    match first {
        Some((row, col)) => Ok(NashPoint {
            row,
            col,
            h1: game.a1[(row, col)],
            h2: game.a2[(row, col)],
            multiplicity,
        }),
        None => Err(NoPureEquilibrium),
    }
}

/// Evaluates one player's Hamiltonian at explicit controls. `grad` is the
/// player's own gradient argument (`p` for player 1, `q` for player 2).
pub fn eval_hamiltonian(
    model: &GameModel,
    player: Player,
    t: f64,
    x: &[f64],
    grad: &[f64],
    u: &[f64],
    v: &[f64],
) -> Result<f64> {
    let m = model.dim();
    let mut w = vec![0.0; m];
    model.sigma().left_inv_mul_into(t, x, grad, &mut w)?;
    let mut f = vec![0.0; m];
    model.drift_into(t, x, u, v, &mut f);
    let transport: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
    Ok(transport + model.running_cost(player, t, x, u, v))
}

/// Pointwise equilibrium selection `(t, x, p, q) -> (u*, v*, H_1*, H_2*)`.
///
/// Evaluation is pure and thread-safe: no caching, identical inputs always
/// produce identical outputs regardless of call order or worker count.
#[derive(Debug, Clone)]
pub struct IsaacsMap {
    model: GameModel,
}

/// Equilibrium controls and Hamiltonian values at one evaluation point.
#[derive(Debug, Clone)]
pub struct IsaacsPoint {
    pub u_index: usize,
    pub v_index: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `H_1(t, x, p, u*, v*)`.
    pub h1: f64,
    /// `H_2(t, x, q, u*, v*)`.
    pub h2: f64,
    /// Nash-cell count of the underlying static game.
    pub multiplicity: usize,
}

/// Builds the equilibrium map of a model.
pub fn build_isaacs_map(model: &GameModel) -> IsaacsMap {
    IsaacsMap { model: model.clone() }
}

impl IsaacsMap {
    pub fn model(&self) -> &GameModel {
        &self.model
    }

    /// Assembles the bimatrix Hamiltonian game at `(t, x, p, q)`. The drift
    /// is evaluated once per control pair and shared by both matrices.
    pub fn static_game(&self, t: f64, x: &[f64], p: &[f64], q: &[f64]) -> Result<StaticGame> {
        let model = &self.model;
        let m = model.dim();
        let n1 = model.grid(Player::One).len();
        let n2 = model.grid(Player::Two).len();
        let mut w1 = vec![0.0; m];
        let mut w2 = vec![0.0; m];
        model.sigma().left_inv_mul_into(t, x, p, &mut w1)?;
        model.sigma().left_inv_mul_into(t, x, q, &mut w2)?;
        let mut a1 = DMatrix::zeros(n1, n2);
        let mut a2 = DMatrix::zeros(n1, n2);
        let mut f = vec![0.0; m];
        for i in 0..n1 {
            let u = model.grid(Player::One).point(i);
            for j in 0..n2 {
                let v = model.grid(Player::Two).point(j);
                model.drift_into(t, x, u, v, &mut f);
                let mut t1 = 0.0;
                let mut t2 = 0.0;
                for d in 0..m {
                    t1 += w1[d] * f[d];
                    t2 += w2[d] * f[d];
                }
                a1[(i, j)] = t1 + model.running_cost(Player::One, t, x, u, v);
                a2[(i, j)] = t2 + model.running_cost(Player::Two, t, x, u, v);
            }
        }
        StaticGame::new(a1, a2)
    }

    /// Equilibrium controls at `(t, x, p, q)`; errors with the full point if
    /// the grid game has no pure Nash cell.
    pub fn eval(&self, t: f64, x: &[f64], p: &[f64], q: &[f64]) -> Result<IsaacsPoint> {
        let game = self.static_game(t, x, p, q)?;
        let nash = solve_static_nash(&game).map_err(|NoPureEquilibrium| Error::NoEquilibrium {
            t,
            x: x.to_vec(),
            p: p.to_vec(),
            q: q.to_vec(),
        })?;
        Ok(IsaacsPoint {
            u_index: nash.row,
            v_index: nash.col,
            u: self.model.grid(Player::One).point(nash.row).to_vec(),
            v: self.model.grid(Player::Two).point(nash.col).to_vec(),
            h1: nash.h1,
            h2: nash.h2,
            multiplicity: nash.multiplicity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ControlGrid, CostSpec, DiffusionSpec, DriftSpec, ModelConstants, TerminalSpec,
    };

    /// m = 1, sigma = 2, f = u + v, h_1 = u^2, h_2 = v^2.
    fn hand_model() -> GameModel {
        GameModel::new(
            1.0,
            vec![0.0],
            DiffusionSpec::constant(DMatrix::from_row_slice(1, 1, &[2.0])).unwrap(),
            DriftSpec::affine(
                vec![0.0],
                DMatrix::zeros(1, 1),
                DMatrix::from_row_slice(1, 1, &[1.0]),
                DMatrix::from_row_slice(1, 1, &[1.0]),
            )
            .unwrap(),
            [
                CostSpec::quadratic_controls(1.0, 0.0, 0.0, 0.0).unwrap(),
                CostSpec::quadratic_controls(0.0, 1.0, 0.0, 0.0).unwrap(),
            ],
            [TerminalSpec::constant(0.0), TerminalSpec::constant(0.0)],
            [
                ControlGrid::scalar(&[0.0, 0.5]).unwrap(),
                ControlGrid::scalar(&[0.0, 0.5]).unwrap(),
            ],
            1.0,
            ModelConstants::new(3.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn hamiltonian_hand_value() {
        // H_1 = p sigma^{-1} (u + v) + u^2 = 1 * 0.5 * 1.0 + 0.25 = 0.75.
        let model = hand_model();
        let h = eval_hamiltonian(&model, Player::One, 0.0, &[0.0], &[1.0], &[0.5], &[0.5])
            .unwrap();
        assert!((h - 0.75).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_example_selects_origin() {
        let game = StaticGame::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 3.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 1.0, 3.0]),
        )
        .unwrap();
        let nash = solve_static_nash(&game).unwrap();
        assert_eq!((nash.row, nash.col), (0, 0));
        assert_eq!(nash.multiplicity, 1);
        assert_eq!(nash.h1, 0.0);
        assert_eq!(nash.h2, 0.0);
    }

    #[test]
    fn matching_pennies_has_no_pure_point() {
        let game = StaticGame::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(solve_static_nash(&game), Err(NoPureEquilibrium));
    }

    #[test]
    fn ties_break_lexicographically() {
        // All-zero game: every cell is an equilibrium; (0, 0) wins.
        let game =
            StaticGame::new(DMatrix::zeros(3, 4), DMatrix::zeros(3, 4)).unwrap();
        let nash = solve_static_nash(&game).unwrap();
        assert_eq!((nash.row, nash.col), (0, 0));
        assert_eq!(nash.multiplicity, 12);
    }

    #[test]
    fn isaacs_map_reports_missing_equilibrium_with_point() {
        // Costs produce a matching-pennies pattern, so no pure point exists.
        let mut model = hand_model();
        let pennies1 = |u: &[f64], v: &[f64]| {
            if (u[0] > 0.0) == (v[0] > 0.0) {
                1.0
            } else {
                0.0
            }
        };
        let pennies2 = move |u: &[f64], v: &[f64]| 1.0 - pennies1(u, v);
        model = GameModel::new(
            model.horizon(),
            model.x0().to_vec(),
            DiffusionSpec::identity(1),
            DriftSpec::zero(1),
            [
                CostSpec::custom(move |_, _, u, v| pennies1(u, v)),
                CostSpec::custom(move |_, _, u, v| pennies2(u, v)),
            ],
            [TerminalSpec::constant(0.0), TerminalSpec::constant(0.0)],
            [
                ControlGrid::scalar(&[0.0, 0.5]).unwrap(),
                ControlGrid::scalar(&[0.0, 0.5]).unwrap(),
            ],
            1.0,
            *model.constants(),
        )
        .unwrap();
        let map = build_isaacs_map(&model);
        let err = map.eval(0.25, &[0.5], &[1.0], &[1.0]).unwrap_err();
        match err {
            Error::NoEquilibrium { t, x, .. } => {
                assert_eq!(t, 0.25);
                assert_eq!(x, vec![0.5]);
            }
            other => panic!("expected NoEquilibrium, got {other:?}"),
        }
    }

    #[test]
    fn equilibrium_of_hand_model_is_joint_zero() {
        // With p = q = 0 the transport term vanishes and each player
        // minimizes their own square: (0, 0).
        let model = hand_model();
        let map = build_isaacs_map(&model);
        let pt = map.eval(0.0, &[0.0], &[0.0], &[0.0]).unwrap();
        assert_eq!((pt.u_index, pt.v_index), (0, 0));
        // With p strongly negative player 1 wants a large drift: u = 0.5.
        let pt = map.eval(0.0, &[0.0], &[-10.0], &[0.0]).unwrap();
        assert_eq!(pt.u_index, 1);
    }
}
