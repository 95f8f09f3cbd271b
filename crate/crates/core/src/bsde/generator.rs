//! Transformed-generator ladder for the backward solver.
//!
//! The solver works on the exponentials `ybar_i = exp(y_i)` with martingale
//! integrands `zbar_i = ybar_i * z_i`, so the untruncated driver would be
//!
//! ```text
//! G_i = zbar_i . sigma^{-1}(t, x) f(t, x, u*, v*) + ybar_i h_i(t, x, u*, v*)
//! ```
//!
//! with the controls `(u*, v*)` read off the pointwise equilibrium map at
//! gradient arguments `zbar_i / ybar_i`. Running costs here are the
//! risk-scaled ones, so no explicit risk parameter appears.
//!
//! Monte Carlo estimates of `(ybar, zbar)` are unbounded, so the driver is
//! evaluated through a truncation ladder indexed by a level `n`:
//!
//! * the state is clamped coordinatewise to `[-n, n]`,
//! * `ybar` is floored at `1/n` inside the generator arguments,
//! * the whole driver is multiplied by a ramp in the *unclamped* radius
//!   `r = sqrt(ybar_1^2 + ybar_2^2 + |zbar_1|^2 + |zbar_2|^2)`: the ramp is
//!   `1` for `r <= n`, `0` for `r >= 2n`, and linear in between.
//!
//! On any compact where the arguments stay inside the ramp plateau and the
//! floor is inactive the clipped and unclipped drivers agree exactly, which
//! is what makes successive ladder levels converge (and is asserted by
//! tests). Each level keeps the driver bounded and Lipschitz, so the inner
//! least-squares recursion is well posed at every level.

use crate::error::{Error, Result};
use crate::feedback::FeedbackControls;
use crate::hamiltonian::IsaacsMap;
use crate::model::{GameModel, Player};

/// Where the generator takes its controls from.
#[derive(Clone)]
pub enum GeneratorControls {
    /// Pointwise Nash controls of the grid Hamiltonian game.
    Equilibrium(IsaacsMap),
    /// Controls frozen to a feedback map; the two equations decouple.
    Fixed(FeedbackControls),
}

/// Ramp factor at truncation level `n` and radius `r`.
pub fn ramp(level: f64, r: f64) -> f64 {
    if r <= level {
        1.0
    } else if r >= 2.0 * level {
        0.0
    } else {
        (2.0 * level - r) / level
    }
}

/// Reusable buffers for generator evaluation (one per worker).
pub struct GeneratorScratch {
    xhat: Vec<f64>,
    f: Vec<f64>,
    phi: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

/// One generator evaluation.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorOutput {
    /// Driver values for the two players.
    pub g: [f64; 2],
    pub u_index: usize,
    pub v_index: usize,
    /// Ramp factor that multiplied the drivers (0 means fully truncated).
    pub ramp: f64,
}

/// The clipped driver at a fixed truncation level.
pub struct TransformedGenerator {
    model: GameModel,
    controls: GeneratorControls,
    level: u32,
}

impl TransformedGenerator {
    pub fn new(model: &GameModel, controls: GeneratorControls, level: u32) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidParameter {
                name: "level",
                detail: "truncation level must be at least 1".into(),
            });
        }
        Ok(TransformedGenerator { model: model.clone(), controls, level })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn scratch(&self) -> GeneratorScratch {
        let m = self.model.dim();
        GeneratorScratch {
            xhat: vec![0.0; m],
            f: vec![0.0; m],
            phi: vec![0.0; m],
            p: vec![0.0; m],
            q: vec![0.0; m],
        }
    }

    /// Clipped driver at node `k`, time `t`, state `x`, exponential values
    /// `ybar` and integrands `zbar_1`, `zbar_2`.
    pub fn eval(
        &self,
        s: &mut GeneratorScratch,
        k: usize,
        t: f64,
        x: &[f64],
        ybar: [f64; 2],
        zbar1: &[f64],
        zbar2: &[f64],
    ) -> Result<GeneratorOutput> {
        let n = f64::from(self.level);
        let m = self.model.dim();
        debug_assert_eq!(x.len(), m);

        // Radius of the *unclamped* arguments drives the ramp.
        let mut r2 = ybar[0] * ybar[0] + ybar[1] * ybar[1];
        for j in 0..m {
            r2 += zbar1[j] * zbar1[j] + zbar2[j] * zbar2[j];
        }
        let ramp_factor = ramp(n, r2.sqrt());
        if ramp_factor == 0.0 {
            return Ok(GeneratorOutput { g: [0.0, 0.0], u_index: 0, v_index: 0, ramp: 0.0 });
        }

        for j in 0..m {
            s.xhat[j] = x[j].clamp(-n, n);
        }
        let yhat = [ybar[0].max(1.0 / n), ybar[1].max(1.0 / n)];

        let (ui, vi) = match &self.controls {
            GeneratorControls::Equilibrium(map) => {
                for j in 0..m {
                    s.p[j] = zbar1[j] / yhat[0];
                    s.q[j] = zbar2[j] / yhat[1];
                }
                let point = map.eval(t, &s.xhat, &s.p, &s.q)?;
                (point.u_index, point.v_index)
            }
            GeneratorControls::Fixed(feedback) => {
                feedback.eval_indices(&self.model, k, t, &s.xhat)?
            }
        };
        let u = self.model.grid(Player::One).point(ui);
        let v = self.model.grid(Player::Two).point(vi);

        self.model.drift_into(t, &s.xhat, u, v, &mut s.f);
        self.model.sigma().inv_mul_into(t, &s.xhat, &s.f, &mut s.phi)?;

        let mut g = [0.0; 2];
        for (i, (zbar, ybar_h)) in [(zbar1, yhat[0]), (zbar2, yhat[1])].into_iter().enumerate() {
            let mut transport = 0.0;
            for j in 0..m {
                transport += zbar[j] * s.phi[j];
            }
            let h = self.model.running_cost(Player::BOTH[i], t, &s.xhat, u, v);
            g[i] = (transport + ybar_h * h) * ramp_factor;
        }
        Ok(GeneratorOutput { g, u_index: ui, v_index: vi, ramp: ramp_factor })
    }

    /// Untruncated driver (no clamp, floor, or ramp). Requires `ybar > 0`;
    /// used by tests that pin down where the ladder levels must agree.
    pub fn eval_unclipped(
        &self,
        s: &mut GeneratorScratch,
        k: usize,
        t: f64,
        x: &[f64],
        ybar: [f64; 2],
        zbar1: &[f64],
        zbar2: &[f64],
    ) -> Result<[f64; 2]> {
        if ybar[0] <= 0.0 || ybar[1] <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "ybar",
                detail: format!("untruncated driver needs positive exponentials, got {ybar:?}"),
            });
        }
        let m = self.model.dim();
        let (ui, vi) = match &self.controls {
            GeneratorControls::Equilibrium(map) => {
                for j in 0..m {
                    s.p[j] = zbar1[j] / ybar[0];
                    s.q[j] = zbar2[j] / ybar[1];
                }
                let point = map.eval(t, x, &s.p, &s.q)?;
                (point.u_index, point.v_index)
            }
            GeneratorControls::Fixed(feedback) => feedback.eval_indices(&self.model, k, t, x)?,
        };
        let u = self.model.grid(Player::One).point(ui);
        let v = self.model.grid(Player::Two).point(vi);
        self.model.drift_into(t, x, u, v, &mut s.f);
        self.model.sigma().inv_mul_into(t, x, &s.f, &mut s.phi)?;
        let mut g = [0.0; 2];
        for (i, (zbar, yb)) in [(zbar1, ybar[0]), (zbar2, ybar[1])].into_iter().enumerate() {
            let mut transport = 0.0;
            for j in 0..m {
                transport += zbar[j] * s.phi[j];
            }
            let h = self.model.running_cost(Player::BOTH[i], t, x, u, v);
            g[i] = transport + yb * h;
        }
        Ok(g)
    }
}
