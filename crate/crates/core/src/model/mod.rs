//! Game model: coefficients, constants, and assumption validation.
//!
//! A [`GameModel`] bundles everything the numerical layers need about one
//! two-player risk-sensitive game on `[0, T]`:
//!
//! * state dynamics `dX = f(t, X, u, v) dt + sigma(t, X) dB` in `R^m`,
//! * running costs `h_i(t, x, u, v)` and terminal costs `g_i(x)` per player,
//! * finite control grids for both players,
//! * the risk-sensitivity parameter `theta` (each player's payoff is
//!   `E[exp(theta * (int h_i dt + g_i(X_T)))]`),
//! * the regularity constants of the standing assumptions:
//!   - A1: `sigma` Lipschitz (constant `c_1`), bounded with bounded inverse
//!     (`|sigma| + |sigma^-1| <= c_sigma`), uniformly elliptic;
//!   - A2: `|f| <= c_f (1 + |x|)`, `|h_i| <= c_h (1 + |x|^gamma)`,
//!     `|g_i| <= c_g (1 + |x|^gamma)` with `gamma` strictly inside `(1, 2)`;
//!   - A3: the control-grid Hamiltonian games admit a pure Nash point
//!     (probed statistically, enforced pointwise by the solver);
//!   - A4: the auxiliary drift `b` is Lipschitz (`c_2`) and bounded (`c_b`).
//!
//! The solver normalizes `theta` away by rescaling: all cost evaluations
//! exposed by [`GameModel::running_cost`] and [`GameModel::terminal_cost`]
//! are already multiplied by `theta`, and every downstream quantity (value
//! processes, payoffs) refers to the rescaled problem.

mod families;
mod validate;

pub use families::{
    BoundedDriftSpec, CoefficientDescriptor, ControlGrid, CostSpec, DiffusionSpec, DriftSpec,
    TerminalSpec,
};
pub use validate::{
    validate_model, validate_model_with, AssumptionCheck, ProbeSettings, ValidationReport,
};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) use families::norm;

/// Player label. Indexes cost pairs and control grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::One, Player::Two];

    /// Zero-based index into per-player arrays.
    pub fn index(self) -> usize {
        match self {
            Player::One => 0,
            Player::Two => 1,
        }
    }

    /// One-based label used in file formats and messages.
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }

    pub fn from_number(n: u8) -> Result<Player> {
        match n {
            1 => Ok(Player::One),
            2 => Ok(Player::Two),
            _ => Err(Error::InvalidParameter {
                name: "player",
                detail: format!("must be 1 or 2, got {n}"),
            }),
        }
    }
}

impl std::fmt::Display for Player {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Regularity constants of assumptions A1, A2 and A4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelConstants {
    /// Bound on `|sigma| + |sigma^{-1}|` (A1).
    pub c_sigma: f64,
    /// Linear growth constant of the drift `f` (A2).
    pub c_f: f64,
    /// Growth constant of the running costs (A2).
    pub c_h: f64,
    /// Growth constant of the terminal costs (A2).
    pub c_g: f64,
    /// Bound on the auxiliary drift `b` (A4).
    pub c_b: f64,
    /// Lipschitz constant of `sigma` in `x` (A1).
    pub c_1: f64,
    /// Lipschitz constant of the auxiliary drift `b` (A4).
    pub c_2: f64,
    /// Growth exponent of the costs; must lie strictly inside `(1, 2)`.
    pub gamma: f64,
}

impl ModelConstants {
    pub fn new(
        c_sigma: f64,
        c_f: f64,
        c_h: f64,
        c_g: f64,
        c_b: f64,
        c_1: f64,
        c_2: f64,
        gamma: f64,
    ) -> Result<Self> {
        let all = [
            ("c_sigma", c_sigma),
            ("c_f", c_f),
            ("c_h", c_h),
            ("c_g", c_g),
            ("c_b", c_b),
            ("c_1", c_1),
            ("c_2", c_2),
        ];
        for (name, v) in all {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "constant {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if !(gamma > 1.0 && gamma < 2.0) {
            return Err(Error::Assumption {
                assumption: "A2",
                detail: format!("growth exponent gamma must lie strictly in (1, 2), got {gamma}"),
            });
        }
        Ok(ModelConstants { c_sigma, c_f, c_h, c_g, c_b, c_1, c_2, gamma })
    }

    /// Ellipticity floor implied by A1: `sigma sigma^T >= eps I` with
    /// `eps = c_sigma^{-2}`.
    pub fn ellipticity_floor(&self) -> f64 {
        1.0 / (self.c_sigma * self.c_sigma)
    }
}

/// Immutable description of one two-player risk-sensitive game.
#[derive(Debug, Clone)]
pub struct GameModel {
    dim: usize,
    horizon: f64,
    x0: Vec<f64>,
    sigma: DiffusionSpec,
    drift: DriftSpec,
    running_costs: [CostSpec; 2],
    terminal_costs: [TerminalSpec; 2],
    control_grids: [ControlGrid; 2],
    theta: f64,
    constants: ModelConstants,
    bounded_drift: Option<BoundedDriftSpec>,
}

impl GameModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        horizon: f64,
        x0: Vec<f64>,
        sigma: DiffusionSpec,
        drift: DriftSpec,
        running_costs: [CostSpec; 2],
        terminal_costs: [TerminalSpec; 2],
        control_grids: [ControlGrid; 2],
        theta: f64,
        constants: ModelConstants,
    ) -> Result<Self> {
        let dim = x0.len();
        if dim == 0 {
            return Err(Error::InvalidSpec("state dimension must be >= 1".into()));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidSpec(format!("horizon must be positive, got {horizon}")));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "theta",
                detail: format!("risk-sensitivity parameter must be positive, got {theta}"),
            });
        }
        if sigma.dim() != dim {
            return Err(Error::InvalidSpec(format!(
                "diffusion dimension {} does not match state dimension {dim}",
                sigma.dim()
            )));
        }
        if drift.dim() != dim {
            return Err(Error::InvalidSpec(format!(
                "drift dimension {} does not match state dimension {dim}",
                drift.dim()
            )));
        }
        if let Some((du, dv)) = drift.control_dims() {
            if control_grids[0].dim() != du || control_grids[1].dim() != dv {
                return Err(Error::InvalidSpec(format!(
                    "drift expects control dims ({du}, {dv}), grids have ({}, {})",
                    control_grids[0].dim(),
                    control_grids[1].dim()
                )));
            }
        }
        Ok(GameModel {
            dim,
            horizon,
            x0,
            sigma,
            drift,
            running_costs,
            terminal_costs,
            control_grids,
            theta,
            constants,
            bounded_drift: None,
        })
    }

    /// Attaches an auxiliary bounded drift (assumption A4) used by the
    /// reference dynamics and the density diagnostics.
    pub fn with_bounded_drift(mut self, b: BoundedDriftSpec) -> Result<Self> {
        if b.dim() != self.dim {
            return Err(Error::InvalidSpec(format!(
                "bounded drift dimension {} does not match state dimension {}",
                b.dim(),
                self.dim
            )));
        }
        self.bounded_drift = Some(b);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    pub fn sigma(&self) -> &DiffusionSpec {
        &self.sigma
    }

    pub fn drift(&self) -> &DriftSpec {
        &self.drift
    }

    pub fn bounded_drift(&self) -> Option<&BoundedDriftSpec> {
        self.bounded_drift.as_ref()
    }

    pub fn grid(&self, player: Player) -> &ControlGrid {
        &self.control_grids[player.index()]
    }

    pub fn control_dim(&self, player: Player) -> usize {
        self.control_grids[player.index()].dim()
    }

    /// `out = f(t, x, u, v)`.
    pub fn drift_into(&self, t: f64, x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
        self.drift.eval_into(t, x, u, v, out);
    }

    /// Running cost of `player`, already rescaled by `theta`.
    pub fn running_cost(&self, player: Player, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        self.theta * self.running_costs[player.index()].eval(t, x, u, v)
    }

    /// Terminal cost of `player`, already rescaled by `theta`.
    pub fn terminal_cost(&self, player: Player, x: &[f64]) -> f64 {
        self.theta * self.terminal_costs[player.index()].eval(x)
    }

    /// Unscaled running cost, as specified. Growth checks use this.
    pub fn raw_running_cost(&self, player: Player, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        self.running_costs[player.index()].eval(t, x, u, v)
    }

    /// Unscaled terminal cost, as specified.
    pub fn raw_terminal_cost(&self, player: Player, x: &[f64]) -> f64 {
        self.terminal_costs[player.index()].eval(x)
    }

    pub fn running_cost_spec(&self, player: Player) -> &CostSpec {
        &self.running_costs[player.index()]
    }

    pub fn terminal_cost_spec(&self, player: Player) -> &TerminalSpec {
        &self.terminal_costs[player.index()]
    }

    /// True when the game drift is identically zero, in which case the
    /// reference (driftless) dynamics and the controlled dynamics coincide.
    pub fn has_zero_drift(&self) -> bool {
        self.drift.is_zero()
    }

    /// Serializable summary of every coefficient (closures reduced to a
    /// `custom` tag). Feeds the model hash and run manifests.
    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            dim: self.dim,
            horizon: self.horizon,
            x0: self.x0.clone(),
            theta: self.theta,
            sigma: self.sigma.descriptor(),
            drift: self.drift.descriptor(),
            running_costs: [self.running_costs[0].descriptor(), self.running_costs[1].descriptor()],
            terminal_costs: [
                self.terminal_costs[0].descriptor(),
                self.terminal_costs[1].descriptor(),
            ],
            control_grids: [self.control_grids[0].descriptor(), self.control_grids[1].descriptor()],
            constants: self.constants,
            bounded_drift: self.bounded_drift.as_ref().map(|b| b.descriptor()),
        }
    }

    /// Hex SHA-256 of the canonical JSON descriptor. Identifies the model in
    /// manifests and CSV rows.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.descriptor()).expect("descriptor serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

/// Serializable mirror of a [`GameModel`]'s data.
#[derive(Debug, Clone, Serialize)]
pub struct ModelDescriptor {
    pub dim: usize,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub theta: f64,
    pub sigma: CoefficientDescriptor,
    pub drift: CoefficientDescriptor,
    pub running_costs: [CoefficientDescriptor; 2],
    pub terminal_costs: [CoefficientDescriptor; 2],
    pub control_grids: [Vec<Vec<f64>>; 2],
    pub constants: ModelConstants,
    pub bounded_drift: Option<CoefficientDescriptor>,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_model() -> GameModel {
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
    fn gamma_outside_open_interval_is_an_a2_failure() {
        for gamma in [1.0, 2.0, 0.5, 2.5] {
            let err = ModelConstants::new(2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, gamma).unwrap_err();
            assert!(matches!(err, Error::Assumption { assumption: "A2", .. }), "gamma {gamma}");
        }
        assert!(ModelConstants::new(2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.999).is_ok());
    }

    #[test]
    fn theta_rescales_costs() {
        let mut m = toy_model();
        m.theta = 2.0;
        m.running_costs[0] = CostSpec::constant(0.7);
        m.terminal_costs[1] = TerminalSpec::linear(vec![3.0]).unwrap();
        assert_eq!(m.running_cost(Player::One, 0.0, &[0.0], &[0.0], &[0.0]), 1.4);
        assert_eq!(m.raw_running_cost(Player::One, 0.0, &[0.0], &[0.0], &[0.0]), 0.7);
        assert_eq!(m.terminal_cost(Player::Two, &[2.0]), 12.0);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = toy_model();
        let b = toy_model();
        assert_eq!(a.hash(), b.hash());
        let mut c = toy_model();
        c.theta = 1.5;
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let bad = GameModel::new(
            1.0,
            vec![0.0, 0.0],
            DiffusionSpec::identity(1),
            DriftSpec::zero(2),
            [CostSpec::constant(0.0), CostSpec::constant(0.0)],
            [TerminalSpec::constant(0.0), TerminalSpec::constant(0.0)],
            [ControlGrid::scalar(&[0.0]).unwrap(), ControlGrid::scalar(&[0.0]).unwrap()],
            1.0,
            ModelConstants::new(2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap(),
        );
        assert!(bad.is_err());
    }
}
