//! Markovian feedback controls.
//!
//! A [`FeedbackControls`] maps a grid node `(t_k, x)` to a pair of controls,
//! one per player, that must be members of the model's control grids. The
//! simulation engine resolves the returned values to grid indices and
//! rejects anything off-grid. Each instance carries a provenance tag
//! (constant, table, or extracted from a backward solution) that is recorded
//! in payoff reports and Nash certificates.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{GameModel, Player};
use crate::stats;

/// Provenance of a feedback map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum FeedbackTag {
    Constant,
    Table,
    FromBsde,
}

impl FeedbackTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackTag::Constant => "constant",
            FeedbackTag::Table => "table",
            FeedbackTag::FromBsde => "from-bsde",
        }
    }
}

impl fmt::Display for FeedbackTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

type FeedbackFn = Arc<dyn Fn(usize, f64, &[f64]) -> Result<(Vec<f64>, Vec<f64>)> + Send + Sync>;

/// A joint feedback map `(t_k, x) -> (u, v)`.
#[derive(Clone)]
pub struct FeedbackControls {
    tag: FeedbackTag,
    label: String,
    func: FeedbackFn,
}

impl FeedbackControls {
    /// Constant controls given by grid indices.
    pub fn constant(model: &GameModel, u_idx: usize, v_idx: usize) -> Result<Self> {
        let g1 = model.grid(Player::One);
        let g2 = model.grid(Player::Two);
        if u_idx >= g1.len() || v_idx >= g2.len() {
            return Err(Error::InvalidParameter {
                name: "control index",
                detail: format!(
                    "indices ({u_idx}, {v_idx}) outside grids of size ({}, {})",
                    g1.len(),
                    g2.len()
                ),
            });
        }
        let u = g1.point(u_idx).to_vec();
        let v = g2.point(v_idx).to_vec();
        let label = format!("constant(u[{u_idx}], v[{v_idx}])");
        Ok(FeedbackControls {
            tag: FeedbackTag::Constant,
            label,
            func: Arc::new(move |_, _, _| Ok((u.clone(), v.clone()))),
        })
    }

    /// Seeded measurable table: each player's control index is a hash of
    /// `(seed, step, coarse state cell)`. Deterministic, state-dependent,
    /// and intentionally structureless; used as a deviation generator.
    pub fn random_table(model: &GameModel, seed: u64) -> Self {
        let n1 = model.grid(Player::One).len();
        let n2 = model.grid(Player::Two).len();
        let g1: Vec<Vec<f64>> = model.grid(Player::One).points().map(|p| p.to_vec()).collect();
        let g2: Vec<Vec<f64>> = model.grid(Player::Two).points().map(|p| p.to_vec()).collect();
        FeedbackControls {
            tag: FeedbackTag::Table,
            label: format!("random-table(seed = {seed})"),
            func: Arc::new(move |k, _t, x| {
                let h = hash_cell(seed, k, x);
                let ui = (h % n1 as u64) as usize;
                let vi = (stats::splitmix64(h) % n2 as u64) as usize;
                Ok((g1[ui].clone(), g2[vi].clone()))
            }),
        }
    }

    /// Wraps an arbitrary map. The closure must return grid members.
    pub fn from_fn<F>(tag: FeedbackTag, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(usize, f64, &[f64]) -> Result<(Vec<f64>, Vec<f64>)> + Send + Sync + 'static,
    {
        FeedbackControls { tag, label: label.into(), func: Arc::new(f) }
    }

    /// Joint map that takes `player`'s control from `replacement` and the
    /// other player's control from `self`. This is how unilateral
    /// deviations are built.
    pub fn with_player_from(&self, player: Player, replacement: &FeedbackControls) -> Self {
        let base = self.func.clone();
        let repl = replacement.func.clone();
        let label = format!("{} with player {} from {}", self.label, player, replacement.label);
        FeedbackControls {
            tag: FeedbackTag::Table,
            label,
            func: Arc::new(move |k, t, x| {
                let (bu, bv) = base(k, t, x)?;
                let (ru, rv) = repl(k, t, x)?;
                Ok(match player {
                    Player::One => (ru, bv),
                    Player::Two => (bu, rv),
                })
            }),
        }
    }

    /// Time-shifted copy: at step `k` plays the controls this map would play
    /// at step `k - 1` (step 0 unchanged).
    pub fn lagged(&self) -> Self {
        let base = self.func.clone();
        FeedbackControls {
            tag: self.tag,
            label: format!("{} lagged by one step", self.label),
            func: Arc::new(move |k, t, x| base(k.saturating_sub(1), t, x)),
        }
    }

    pub fn tag(&self) -> FeedbackTag {
        self.tag
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Raw control values at a node.
    pub fn eval(&self, k: usize, t: f64, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        (self.func)(k, t, x)
    }

    /// Control values resolved to grid indices; errors if either value is
    /// not a grid member.
    pub fn eval_indices(
        &self,
        model: &GameModel,
        k: usize,
        t: f64,
        x: &[f64],
    ) -> Result<(usize, usize)> {
        let (u, v) = self.eval(k, t, x)?;
        let ui = model.grid(Player::One).index_of(&u).ok_or_else(|| Error::OutOfGridControl {
            player: 1,
            t,
            x: x.to_vec(),
            control: u.clone(),
        })?;
        let vi = model.grid(Player::Two).index_of(&v).ok_or_else(|| Error::OutOfGridControl {
            player: 2,
            t,
            x: x.to_vec(),
            control: v,
        })?;
        Ok((ui, vi))
    }
}

impl fmt::Debug for FeedbackControls {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeedbackControls({}, {})", self.tag, self.label)
    }
}

fn hash_cell(seed: u64, k: usize, x: &[f64]) -> u64 {
    // Cells of side 0.5 make the table piecewise constant in the state.
    let mut h = stats::splitmix64(seed ^ 0xA076_1D64_78BD_642F);
    h = stats::splitmix64(h ^ k as u64);
    for &c in x {
        let cell = (c / 0.5).floor() as i64 as u64;
        h = stats::splitmix64(h ^ cell);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ControlGrid, CostSpec, DiffusionSpec, DriftSpec, GameModel, ModelConstants, TerminalSpec,
    };

    fn model() -> GameModel {
        GameModel::new(
            1.0,
            vec![0.0],
            DiffusionSpec::identity(1),
            DriftSpec::zero(1),
            [CostSpec::constant(0.0), CostSpec::constant(0.0)],
            [TerminalSpec::constant(0.0), TerminalSpec::constant(0.0)],
            [
                ControlGrid::scalar(&[-1.0, 0.0, 1.0]).unwrap(),
                ControlGrid::scalar(&[0.25, 0.75]).unwrap(),
            ],
            1.0,
            ModelConstants::new(2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constant_feedback_resolves_to_its_indices() {
        let m = model();
        let fb = FeedbackControls::constant(&m, 2, 0).unwrap();
        assert_eq!(fb.eval_indices(&m, 0, 0.0, &[0.3]).unwrap(), (2, 0));
        assert_eq!(fb.tag(), FeedbackTag::Constant);
        assert!(FeedbackControls::constant(&m, 3, 0).is_err());
    }

    #[test]
    fn off_grid_controls_are_rejected() {
        let m = model();
        let fb = FeedbackControls::from_fn(FeedbackTag::Table, "bad", |_, _, _| {
            Ok((vec![0.5], vec![0.25]))
        });
        let err = fb.eval_indices(&m, 0, 0.0, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::OutOfGridControl { player: 1, .. }));
    }

    #[test]
    fn player_override_replaces_one_side() {
        let m = model();
        let base = FeedbackControls::constant(&m, 0, 0).unwrap();
        let repl = FeedbackControls::constant(&m, 2, 1).unwrap();
        let dev1 = base.with_player_from(Player::One, &repl);
        assert_eq!(dev1.eval_indices(&m, 0, 0.0, &[0.0]).unwrap(), (2, 0));
        let dev2 = base.with_player_from(Player::Two, &repl);
        assert_eq!(dev2.eval_indices(&m, 0, 0.0, &[0.0]).unwrap(), (0, 1));
    }

    #[test]
    fn random_table_is_deterministic_and_in_grid() {
        let m = model();
        let a = FeedbackControls::random_table(&m, 9);
        let b = FeedbackControls::random_table(&m, 9);
        let c = FeedbackControls::random_table(&m, 10);
        let mut saw_different = false;
        for k in 0..20 {
            let x = [k as f64 * 0.37 - 3.0];
            let ia = a.eval_indices(&m, k, 0.0, &x).unwrap();
            assert_eq!(ia, b.eval_indices(&m, k, 0.0, &x).unwrap());
            if ia != c.eval_indices(&m, k, 0.0, &x).unwrap() {
                saw_different = true;
            }
        }
        assert!(saw_different, "different seeds should give different tables");
    }

    #[test]
    fn lagged_feedback_shifts_steps() {
        let m = model();
        let fb = FeedbackControls::from_fn(FeedbackTag::Table, "step-dependent", {
            let g1: Vec<Vec<f64>> = m.grid(Player::One).points().map(|p| p.to_vec()).collect();
            let g2: Vec<Vec<f64>> = m.grid(Player::Two).points().map(|p| p.to_vec()).collect();
            move |k, _, _| Ok((g1[k % 3].clone(), g2[k % 2].clone()))
        });
        let lag = fb.lagged();
        assert_eq!(lag.eval_indices(&m, 0, 0.0, &[0.0]).unwrap(), (0, 0));
        assert_eq!(lag.eval_indices(&m, 1, 0.0, &[0.0]).unwrap(), (0, 0));
        assert_eq!(lag.eval_indices(&m, 2, 0.0, &[0.0]).unwrap(), (1, 1));
    }
}
