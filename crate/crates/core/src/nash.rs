//! Statistical equilibrium verification by unilateral deviations.
//!
//! A candidate feedback pair is accepted as an approximate Nash point when
//! no tested unilateral deviation lowers the deviating player's cost by
//! more than statistical noise: with costs to minimize, the margin
//!
//! ```text
//! margin = J_i(deviation) - J_i(candidate)
//! ```
//!
//! must satisfy `margin >= -k * se` for every deviation, where `se` is the
//! standard error of the *paired* estimate. Pairing matters: baseline and
//! deviation runs reuse the same underlying Gaussian increments (same seed,
//! same path-indexed streams), so the difference is computed path by path
//! and common noise cancels instead of inflating the error bar. On a model
//! where a deviation changes nothing, every pathwise difference is exactly
//! zero — not merely small.
//!
//! The certificate is evidence over the tested deviation set, not a proof:
//! enlarging the suite (more grid constants, more random tables) tightens
//! it. The default suite contains every constant control of the deviating
//! player, a lag-one copy of the candidate itself, and seeded random
//! feedback tables.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feedback::FeedbackControls;
use crate::model::{GameModel, Player};
use crate::payoff::{self, PayoffEstimate};
use crate::sde::{simulate_controlled, TimeGrid};
use crate::stats;

/// A deviation strategy, resolved against the candidate at verification
/// time.
#[derive(Debug, Clone)]
pub enum DeviationSpec {
    /// The deviating player plays one fixed grid point throughout.
    Constant { player: Player, index: usize },
    /// The deviating player plays the candidate's own control, one step
    /// stale — a cheap probe of time-consistency.
    LaggedCandidate { player: Player },
    /// The deviating player plays a seeded random lookup table.
    RandomTable { player: Player, seed: u64 },
}

impl DeviationSpec {
    pub fn player(&self) -> Player {
        match *self {
            DeviationSpec::Constant { player, .. }
            | DeviationSpec::LaggedCandidate { player }
            | DeviationSpec::RandomTable { player, .. } => player,
        }
    }

    pub fn label(&self) -> String {
        match self {
            DeviationSpec::Constant { player, index } => {
                format!("p{}-constant-{index}", player.number())
            }
            DeviationSpec::LaggedCandidate { player } => {
                format!("p{}-lagged-candidate", player.number())
            }
            DeviationSpec::RandomTable { player, seed } => {
                format!("p{}-random-table-{seed}", player.number())
            }
        }
    }

    /// Builds the full feedback pair in which only this spec's player
    /// deviates from `candidate`.
    pub fn resolve(&self, model: &GameModel, candidate: &FeedbackControls) -> Result<FeedbackControls> {
        let source = match *self {
            DeviationSpec::Constant { player, index } => match player {
                Player::One => FeedbackControls::constant(model, index, 0)?,
                Player::Two => FeedbackControls::constant(model, 0, index)?,
            },
            DeviationSpec::LaggedCandidate { .. } => candidate.lagged(),
            DeviationSpec::RandomTable { seed, .. } => FeedbackControls::random_table(model, seed),
        };
        Ok(candidate.with_player_from(self.player(), &source))
    }
}

/// Default deviation suite: all constant controls of either player, the
/// lag-one candidate, and `n_random` seeded tables alternating players.
pub fn default_deviation_suite(model: &GameModel, seed: u64, n_random: usize) -> Vec<DeviationSpec> {
    let mut suite = Vec::new();
    for player in Player::BOTH {
        for index in 0..model.grid(player).len() {
            suite.push(DeviationSpec::Constant { player, index });
        }
    }
    for player in Player::BOTH {
        suite.push(DeviationSpec::LaggedCandidate { player });
    }
    for i in 0..n_random {
        let player = Player::BOTH[i % 2];
        suite.push(DeviationSpec::RandomTable { player, seed: stats::mix_seed(seed, i as u64) });
    }
    suite
}

/// Result of one tested deviation.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationOutcome {
    pub player: Player,
    pub label: String,
    /// Candidate cost of the deviating player (over the paired sample).
    pub baseline_value: f64,
    /// Cost after the unilateral deviation.
    pub deviation_value: f64,
    /// `deviation_value - baseline_value`, estimated pathwise.
    pub margin: f64,
    /// Jackknife standard error of the pathwise differences.
    pub paired_se: f64,
    /// `margin / paired_se`; infinite when the difference is exactly
    /// deterministic.
    pub score: f64,
    pub n_used: usize,
    pub n_flagged: usize,
    pub passed: bool,
}

/// Equilibrium evidence for a candidate feedback.
#[derive(Debug, Clone, Serialize)]
pub struct NashCertificate {
    /// Direct payoff estimates of both players under the candidate.
    pub baseline: [PayoffEstimate; 2],
    pub deviations: Vec<DeviationOutcome>,
    /// Margins must clear `-k_sigma` paired standard errors.
    pub k_sigma: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Smallest score over all deviations.
    pub worst_score: f64,
    pub passed: bool,
}

/// Tests every deviation in `suite` against `candidate` with paired
/// sampling and returns the assembled certificate.
pub fn verify_nash(
    model: &GameModel,
    candidate: &FeedbackControls,
    suite: &[DeviationSpec],
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    k_sigma: f64,
) -> Result<NashCertificate> {
    if suite.is_empty() {
        return Err(Error::InvalidParameter {
            name: "suite",
            detail: "equilibrium verification needs at least one deviation".into(),
        });
    }
    if !(k_sigma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "k_sigma",
            detail: format!("tolerance multiplier must be positive, got {k_sigma}"),
        });
    }
    if n_paths < 2 {
        return Err(Error::TooFewPaths { what: "paired verification", required: 2, actual: n_paths });
    }

    let base_bundle = simulate_controlled(model, candidate, grid, n_paths, seed)?;
    let base = payoff::payoff_per_path(model, &base_bundle, candidate)?;
    let baseline = payoff::estimates_from(&base, None, None, n_paths, "direct")?;

    let mut deviations = Vec::with_capacity(suite.len());
    let mut worst_score = f64::INFINITY;
    let mut passed = true;
    for spec in suite {
        let player = spec.player();
        let i = player.index();
        let deviated = spec.resolve(model, candidate)?;
        // Same seed: identical increments, so differences pair path by path.
        let dev_bundle = simulate_controlled(model, &deviated, grid, n_paths, seed)?;
        let dev = payoff::payoff_per_path(model, &dev_bundle, &deviated)?;

        let diffs: Vec<f64> = (0..n_paths)
            .filter(|&p| !base.flagged[p] && !dev.flagged[p])
            .map(|p| dev.values[i][p] - base.values[i][p])
            .collect();
        let n_flagged = n_paths - diffs.len();
        payoff::check_overflow_budget(n_flagged, n_paths)?;
        if diffs.is_empty() {
            return Err(Error::AllPathsFlagged { n_paths });
        }
        let (margin, paired_se) = stats::mean_and_se(&diffs);
        let base_mean = stats::mean(
            &(0..n_paths)
                .filter(|&p| !base.flagged[p] && !dev.flagged[p])
                .map(|p| base.values[i][p])
                .collect::<Vec<_>>(),
        );
        let score = if paired_se > 0.0 {
            margin / paired_se
        } else if margin >= 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        let ok = margin >= -k_sigma * paired_se;
        passed &= ok;
        worst_score = worst_score.min(score);
        deviations.push(DeviationOutcome {
            player,
            label: spec.label(),
            baseline_value: base_mean,
            deviation_value: base_mean + margin,
            margin,
            paired_se,
            score,
            n_used: diffs.len(),
            n_flagged,
            passed: ok,
        });
    }

    Ok(NashCertificate {
        baseline,
        deviations,
        k_sigma,
        n_paths,
        seed,
        worst_score,
        passed,
    })
}
