//! TOML model configuration.
//!
//! A config file declares the game in terms of the built-in coefficient
//! families; everything a [`GameModel`] needs is spelled out explicitly,
//! so a file pins the model exactly and two runs on the same file solve
//! the same game. Syntax or schema violations surface as
//! [`Error::Config`]; structurally valid files that break a standing
//! assumption fail later, in model construction or validation, with
//! [`Error::Assumption`].
//!
//! ```toml
//! [model]
//! horizon = 1.0
//! x0 = [0.0]
//! theta = 0.5
//!
//! [sigma]
//! family = "constant"
//! matrix = [[1.0]]
//!
//! [drift]
//! family = "affine"
//! constant = [0.0]
//! state = [[0.0]]
//! control1 = [[1.0]]
//! control2 = [[1.0]]
//!
//! [cost.1]
//! family = "quadratic-controls"
//! u_weight = 1.0
//! v_weight = 0.0
//! state_coeff = 0.5
//! state_power = 1.5
//!
//! # ... [cost.2], [terminal.1], [terminal.2], [controls.1], [controls.2],
//! # [constants], optional [bounded_drift] and [probe]
//! ```

use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{
    BoundedDriftSpec, ControlGrid, CostSpec, DiffusionSpec, DriftSpec, GameModel, ModelConstants,
    ProbeSettings, TerminalSpec,
};

/// A complete example accepted by [`parse_config`]; parsed in tests so it
/// cannot rot.
pub const EXAMPLE: &str = r#"
[model]
horizon = 1.0
x0 = [0.0]
theta = 0.5

[sigma]
family = "constant"
matrix = [[1.0]]

[drift]
family = "affine"
constant = [0.0]
state = [[0.0]]
control1 = [[1.0]]
control2 = [[1.0]]

[cost.1]
family = "quadratic-controls"
u_weight = 1.0
v_weight = 0.0
state_coeff = 0.5
state_power = 1.5

[cost.2]
family = "quadratic-controls"
u_weight = 0.0
v_weight = 1.0
state_coeff = 0.25
state_power = 1.5

[terminal.1]
family = "linear"
gradient = [0.5]

[terminal.2]
family = "constant"
value = 0.0

[controls.1]
points = [[-1.0], [0.0], [1.0]]

[controls.2]
points = [[-1.0], [0.0], [1.0]]

[constants]
c_sigma = 2.0
c_f = 2.0
c_h = 2.0
c_g = 1.0
c_b = 1.0
c_1 = 1.0
c_2 = 1.0
gamma = 1.5
"#;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: ModelSection,
    sigma: SigmaSection,
    #[serde(default)]
    drift: Option<DriftSection>,
    cost: PlayerPair<CostSection>,
    terminal: PlayerPair<TerminalSection>,
    controls: PlayerPair<ControlsSection>,
    constants: ConstantsSection,
    #[serde(default)]
    bounded_drift: Option<BoundedDriftSection>,
    #[serde(default)]
    probe: Option<ProbeSection>,
}

#[derive(Debug, Deserialize)]
struct PlayerPair<T> {
    #[serde(rename = "1")]
    one: T,
    #[serde(rename = "2")]
    two: T,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    horizon: f64,
    x0: Vec<f64>,
    theta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SigmaSection {
    family: String,
    #[serde(default)]
    matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    base: Option<Vec<f64>>,
    #[serde(default)]
    amplitude: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriftSection {
    family: String,
    #[serde(default)]
    constant: Option<Vec<f64>>,
    #[serde(default)]
    state: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    control1: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    control2: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    family: String,
    #[serde(default)]
    value: Option<f64>,
    #[serde(default)]
    coeff: Option<f64>,
    #[serde(default)]
    exponent: Option<f64>,
    #[serde(default)]
    clip: Option<f64>,
    #[serde(default)]
    u_weight: Option<f64>,
    #[serde(default)]
    v_weight: Option<f64>,
    #[serde(default)]
    state_coeff: Option<f64>,
    #[serde(default)]
    state_power: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TerminalSection {
    family: String,
    #[serde(default)]
    value: Option<f64>,
    #[serde(default)]
    gradient: Option<Vec<f64>>,
    #[serde(default)]
    coeff: Option<f64>,
    #[serde(default)]
    exponent: Option<f64>,
    #[serde(default)]
    clip: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlsSection {
    points: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsSection {
    c_sigma: f64,
    c_f: f64,
    c_h: f64,
    c_g: f64,
    c_b: f64,
    c_1: f64,
    c_2: f64,
    gamma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundedDriftSection {
    family: String,
    #[serde(default)]
    value: Option<Vec<f64>>,
    #[serde(default)]
    gain: Option<f64>,
    #[serde(default)]
    bound: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeSection {
    #[serde(default)]
    n_points: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    half_width: Option<f64>,
    #[serde(default)]
    gradient_half_width: Option<f64>,
    #[serde(default)]
    tolerance: Option<f64>,
}

/// A parsed, schema-valid configuration.
#[derive(Debug)]
pub struct GameConfig {
    file: ConfigFile,
}

/// Parses TOML text. Syntax errors, unknown keys, and missing sections
/// all map to [`Error::Config`].
pub fn parse_config(text: &str) -> Result<GameConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    Ok(GameConfig { file })
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<GameConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn config_err(section: &str, detail: impl std::fmt::Display) -> Error {
    Error::Config(format!("[{section}]: {detail}"))
}

fn require<T>(section: &str, key: &str, value: Option<T>) -> Result<T> {
    value.ok_or_else(|| config_err(section, format!("missing key `{key}`")))
}

fn to_matrix(section: &str, key: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(config_err(section, format!("`{key}` must be a nonempty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(config_err(section, format!("`{key}` rows have unequal lengths")));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

impl GameConfig {
    /// Builds the game model this file declares.
    pub fn build_model(&self) -> Result<GameModel> {
        let f = &self.file;
        let dim = f.model.x0.len();

        let sigma = match f.sigma.family.as_str() {
            "constant" => {
                let rows = require("sigma", "matrix", f.sigma.matrix.as_ref())?;
                DiffusionSpec::constant(to_matrix("sigma", "matrix", rows)?)?
            }
            "affine-bounded" => {
                let base = require("sigma", "base", f.sigma.base.clone())?;
                let amplitude = require("sigma", "amplitude", f.sigma.amplitude.clone())?;
                DiffusionSpec::affine_bounded(base, amplitude)?
            }
            other => {
                return Err(config_err(
                    "sigma",
                    format!("unknown family `{other}` (expected constant | affine-bounded)"),
                ))
            }
        };

        let drift = match &f.drift {
            None => DriftSpec::zero(dim),
            Some(d) => match d.family.as_str() {
                "zero" => DriftSpec::zero(dim),
                "affine" => {
                    let constant =
                        d.constant.clone().unwrap_or_else(|| vec![0.0; dim]);
                    let state = match &d.state {
                        Some(rows) => to_matrix("drift", "state", rows)?,
                        None => DMatrix::zeros(dim, dim),
                    };
                    let control1 =
                        to_matrix("drift", "control1", require("drift", "control1", d.control1.as_ref())?)?;
                    let control2 =
                        to_matrix("drift", "control2", require("drift", "control2", d.control2.as_ref())?)?;
                    DriftSpec::affine(constant, state, control1, control2)?
                }
                other => {
                    return Err(config_err(
                        "drift",
                        format!("unknown family `{other}` (expected zero | affine)"),
                    ))
                }
            },
        };

        let cost = |section: &str, c: &CostSection| -> Result<CostSpec> {
            match c.family.as_str() {
                "constant" => Ok(CostSpec::constant(require(section, "value", c.value)?)),
                "clipped-power" => CostSpec::clipped_power(
                    require(section, "coeff", c.coeff)?,
                    require(section, "exponent", c.exponent)?,
                    require(section, "clip", c.clip)?,
                ),
                "quadratic-controls" => CostSpec::quadratic_controls(
                    c.u_weight.unwrap_or(0.0),
                    c.v_weight.unwrap_or(0.0),
                    c.state_coeff.unwrap_or(0.0),
                    c.state_power.unwrap_or(0.0),
                ),
                other => Err(config_err(
                    section,
                    format!(
                        "unknown family `{other}` (expected constant | clipped-power | \
                         quadratic-controls)"
                    ),
                )),
            }
        };
        let running_costs = [cost("cost.1", &f.cost.one)?, cost("cost.2", &f.cost.two)?];

        let terminal = |section: &str, t: &TerminalSection| -> Result<TerminalSpec> {
            match t.family.as_str() {
                "constant" => Ok(TerminalSpec::constant(require(section, "value", t.value)?)),
                "linear" => TerminalSpec::linear(require(section, "gradient", t.gradient.clone())?),
                "clipped-power" => TerminalSpec::clipped_power(
                    require(section, "coeff", t.coeff)?,
                    require(section, "exponent", t.exponent)?,
                    require(section, "clip", t.clip)?,
                ),
                other => Err(config_err(
                    section,
                    format!("unknown family `{other}` (expected constant | linear | clipped-power)"),
                )),
            }
        };
        let terminal_costs =
            [terminal("terminal.1", &f.terminal.one)?, terminal("terminal.2", &f.terminal.two)?];

        let control_grids = [
            ControlGrid::new(f.controls.one.points.clone())?,
            ControlGrid::new(f.controls.two.points.clone())?,
        ];

        let constants = ModelConstants::new(
            f.constants.c_sigma,
            f.constants.c_f,
            f.constants.c_h,
            f.constants.c_g,
            f.constants.c_b,
            f.constants.c_1,
            f.constants.c_2,
            f.constants.gamma,
        )?;

        let model = GameModel::new(
            f.model.horizon,
            f.model.x0.clone(),
            sigma,
            drift,
            running_costs,
            terminal_costs,
            control_grids,
            f.model.theta,
            constants,
        )?;

        match &f.bounded_drift {
            None => Ok(model),
            Some(b) => {
                let spec = match b.family.as_str() {
                    "zero" => BoundedDriftSpec::zero(dim),
                    "constant" => BoundedDriftSpec::constant(require(
                        "bounded_drift",
                        "value",
                        b.value.clone(),
                    )?)?,
                    "clipped-linear" => BoundedDriftSpec::clipped_linear(
                        dim,
                        require("bounded_drift", "gain", b.gain)?,
                        require("bounded_drift", "bound", b.bound)?,
                    )?,
                    other => {
                        return Err(config_err(
                            "bounded_drift",
                            format!(
                                "unknown family `{other}` (expected zero | constant | \
                                 clipped-linear)"
                            ),
                        ))
                    }
                };
                model.with_bounded_drift(spec)
            }
        }
    }

    /// Probe settings for model validation, with file overrides applied
    /// over the defaults.
    pub fn probe_settings(&self) -> ProbeSettings {
        let mut s = ProbeSettings::default();
        if let Some(p) = &self.file.probe {
            if let Some(n) = p.n_points {
                s.n_points = n;
            }
            if let Some(v) = p.seed {
                s.seed = v;
            }
            if let Some(v) = p.half_width {
                s.half_width = v;
            }
            if let Some(v) = p.gradient_half_width {
                s.gradient_half_width = v;
            }
            if let Some(v) = p.tolerance {
                s.tolerance = v;
            }
        }
        s
    }
}
