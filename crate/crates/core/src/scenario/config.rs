//! TOML scenario schema. Unknown keys are rejected everywhere.
//!
//! Matrices are written either as a scalar (a multiple of the identity) or as
//! an array of rows. Gains are `n_x × n_y`, so a single-output gain is a
//! column written as `[[a], [b]]` or, for convenience, a flat list `[a, b]`.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::hybrid::GrazingPolicy;

use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    /// Resolves against an expected shape; `Flat` is read as a column when
    /// `cols == 1`, or as a diagonal for square shapes.
    pub fn to_matrix(&self, rows: usize, cols: usize, field: &str) -> Result<DMatrix<f64>, ScenarioError> {
        let shape_err = |got: String| ScenarioError::config(field, format!("expected a {rows}x{cols} matrix, got {got}"));
        let m = match self {
            MatrixSpec::Scalar(s) if rows == cols => DMatrix::identity(rows, cols) * *s,
            MatrixSpec::Scalar(_) => return Err(shape_err("a scalar".into())),
            MatrixSpec::Flat(v) if cols == 1 && v.len() == rows => DMatrix::from_column_slice(rows, 1, v),
            MatrixSpec::Flat(v) if rows == cols && v.len() == rows => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v)),
            MatrixSpec::Flat(v) => return Err(shape_err(format!("a flat list of {}", v.len()))),
            MatrixSpec::Rows(r) => {
                if r.len() != rows || r.iter().any(|row| row.len() != cols) {
                    return Err(shape_err(format!("{} rows", r.len())));
                }
                DMatrix::from_fn(rows, cols, |i, j| r[i][j])
            }
        };
        if m.iter().any(|v| !v.is_finite()) {
            return Err(ScenarioError::config(field, "entries must be finite"));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlantSpec {
    VanDerPol {
        #[serde(default = "default_sat")]
        sat_level: f64,
    },
    Battery {
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(default = "default_r")]
        r: f64,
        #[serde(default = "default_capacity")]
        capacity_ah: f64,
        #[serde(default = "default_r_int")]
        r_int: f64,
        /// OCV table (`soc_percent,voltage`); the bundled curve when absent.
        ocv_csv: Option<PathBuf>,
    },
    Linear {
        a: MatrixSpec,
        #[serde(default)]
        b: Option<MatrixSpec>,
        c: MatrixSpec,
        n_x: usize,
        #[serde(default)]
        n_u: usize,
        #[serde(default = "one")]
        n_y: usize,
    },
}

fn default_sat() -> f64 {
    10.0
}
fn default_tau() -> f64 {
    7.0
}
fn default_r() -> f64 {
    0.5e-3
}
fn default_capacity() -> f64 {
    25.0
}
fn default_r_int() -> f64 {
    1e-3
}
fn one() -> usize {
    1
}

/// High-gain structure shared by `high-gain` modes and the feasibility check.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighGainSpec {
    /// Eigenvalues placed for `A − DC`.
    pub eigenvalues: [f64; 2],
    /// Lipschitz constant of the nonlinearity.
    pub lipschitz: f64,
    /// Lipschitz constant of the output map.
    #[serde(default = "one_f")]
    pub output_lipschitz: f64,
}

fn one_f() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModeSpec {
    HighGain { h: f64 },
    Constant { gain: MatrixSpec },
    Ekf {
        r: MatrixSpec,
        q: MatrixSpec,
        alpha: f64,
        #[serde(default)]
        p0: Option<MatrixSpec>,
        #[serde(default)]
        ceiling: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TieBreakSpec {
    Named(String),
    Seeded { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisorSpec {
    pub nu: f64,
    pub lambda1: MatrixSpec,
    pub lambda2: MatrixSpec,
    pub epsilon: f64,
    /// `r`: 0 or 1.
    pub reset: u8,
    /// Scenario constant `α` bounding `ν`.
    pub alpha: f64,
    #[serde(default = "one")]
    pub sigma0: usize,
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub tie_break: Option<TieBreakSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_event_tol")]
    pub event_tol: f64,
    pub t_end: f64,
    #[serde(default)]
    pub grazing: GrazingPolicy,
    #[serde(default)]
    pub max_jumps: Option<usize>,
}

fn default_step() -> f64 {
    1e-3
}
fn default_event_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PerMode<T> {
    Shared(T),
    Each(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub x: Vec<f64>,
    /// One estimate shared by every mode, or one per mode.
    pub xhat: PerMode<Vec<f64>>,
    pub eta: PerMode<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    None,
    PiecewiseLinear { seed: u64, interval: f64, amplitude: f64 },
    Sinusoid { amplitude: f64, frequency: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSpec {
    None,
    Constant { value: f64 },
    /// Repeating synthetic drive cycle covering the horizon.
    SyntheticPhev,
    /// `time_s,current_A` table.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsSpec {
    #[serde(default = "no_noise")]
    pub noise: NoiseSpec,
    #[serde(default = "no_input")]
    pub input: InputSpec,
}

fn no_noise() -> NoiseSpec {
    NoiseSpec::None
}
fn no_input() -> InputSpec {
    InputSpec::None
}

impl Default for SignalsSpec {
    fn default() -> Self {
        Self { noise: NoiseSpec::None, input: InputSpec::None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpecToml {
    /// Sampling interval per estimate component; the draw is shared by all modes.
    pub xhat_box: Vec<[f64; 2]>,
    /// Draw a fresh noise seed per run.
    #[serde(default = "yes")]
    pub vary_noise: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainDesignSpec {
    /// Flattened initial gains tried besides the constant gains of the modes.
    #[serde(default)]
    pub init_gains: Vec<Vec<f64>>,
    #[serde(default)]
    pub theta: f64,
    #[serde(default = "one_f")]
    pub q_weight: f64,
    pub horizon: f64,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default = "default_iters")]
    pub iters: usize,
    /// `[lo, hi]` per flattened gain entry.
    #[serde(default)]
    pub bounds: Vec<[f64; 2]>,
}

fn default_iters() -> usize {
    60
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub plant: PlantSpec,
    #[serde(default)]
    pub high_gain: Option<HighGainSpec>,
    pub modes: Vec<ModeSpec>,
    pub supervisor: SupervisorSpec,
    pub solver: SolverSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub signals: SignalsSpec,
    #[serde(default)]
    pub montecarlo: Option<MonteCarloSpecToml>,
    #[serde(default)]
    pub gain_design: Option<GainDesignSpec>,
    /// Directory relative paths resolve against; set by [`ScenarioConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            ScenarioError::Config(m) => ScenarioError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn reset(&self) -> bool {
        self.supervisor.reset == 1
    }

    /// Range checks that do not need the assembled plant.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let s = &self.supervisor;
        if !(s.alpha > 0.0) {
            return Err(ScenarioError::config("supervisor.alpha", "alpha must be positive"));
        }
        if !(s.nu > 0.0 && s.nu <= s.alpha) {
            return Err(ScenarioError::config(
                "supervisor.nu",
                format!("nu = {} violates the constraint nu in (0, alpha] with alpha = {}", s.nu, s.alpha),
            ));
        }
        if !(s.epsilon > 0.0) {
            return Err(ScenarioError::config("supervisor.epsilon", "epsilon must be positive"));
        }
        if s.reset > 1 {
            return Err(ScenarioError::config("supervisor.reset", "reset must be 0 or 1"));
        }
        if self.modes.len() < 2 {
            return Err(ScenarioError::config("modes", "at least two modes (N + 1 >= 2) are required"));
        }
        if !(1..=self.modes.len()).contains(&s.sigma0) {
            return Err(ScenarioError::config("supervisor.sigma0", format!("must be in 1..={}", self.modes.len())));
        }
        let etas: Vec<f64> = match &self.initial.eta {
            PerMode::Shared(e) => vec![*e],
            PerMode::Each(v) => {
                if v.len() != self.modes.len() {
                    return Err(ScenarioError::config("initial.eta", "one value per mode is required"));
                }
                v.clone()
            }
        };
        if etas.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err(ScenarioError::config("initial.eta", "monitor initial values must be nonnegative"));
        }
        if let PerMode::Each(v) = &self.initial.xhat {
            if v.len() != self.modes.len() {
                return Err(ScenarioError::config("initial.xhat", "one estimate per mode is required"));
            }
        }
        let needs_hg = self.modes.iter().any(|m| matches!(m, ModeSpec::HighGain { .. }));
        if needs_hg && self.high_gain.is_none() {
            return Err(ScenarioError::config("high_gain", "required by high-gain modes"));
        }
        if !(self.solver.t_end > 0.0) || !(self.solver.step > 0.0) {
            return Err(ScenarioError::config("solver", "t_end and step must be positive"));
        }
        if let Some(mc) = &self.montecarlo {
            if mc.xhat_box.iter().any(|b| !(b[0] <= b[1])) {
                return Err(ScenarioError::config("montecarlo.xhat_box", "each interval needs lower <= upper"));
            }
        }
        Ok(())
    }
}
