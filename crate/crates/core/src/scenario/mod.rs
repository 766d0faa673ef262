//! Scenario configuration, runs, Monte-Carlo batches, feasibility checks and
//! gain design, as driven by the `hmo` command line.

mod batch;
mod config;
mod report;

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::gain_design::{self, GainDesignError, GainDesignProblem};
use crate::hybrid::{solve, HybridArc, SolveError, SolverConfig};
use crate::metrics::RunReport;
use crate::observer::{
    assumption2_constants, high_gain_gain, lambda_max, place_double_integrator, verify_assumption1_highgain, EkfParams,
    GainProvider, HighGainCheck, ObserverError, ObserverMode, PlantCopy,
};
use crate::plant::{
    load_current_profile, piecewise_linear_noise, synthetic_phev_profile, Battery, BatteryParams, FnSignal, LinearPlant,
    OcvCurve, Plant, Signal, SignalBundle, Sinusoid, VanDerPol, VanDerPolParams, Zero,
};
use crate::supervisor::{assemble, MultiObserver, SupervisorConfig, TieBreak};

pub use batch::{montecarlo, run_config_for, thread_pool, Aggregate, McRow, MonteCarloResult, MonteCarloSpec};
pub use config::{
    GainDesignSpec, HighGainSpec, InitialSpec, InputSpec, MatrixSpec, ModeSpec, MonteCarloSpecToml, NoiseSpec, PerMode,
    PlantSpec, ScenarioConfig, SignalsSpec, SolverSpec, SupervisorSpec, TieBreakSpec,
};
pub use report::{render_svg, trace_header, write_trace, write_trace_file};

/// Bundled case-study configurations.
pub const VDP_CONFIG: &str = include_str!("../../configs/vdp.toml");
pub const BATTERY_CONFIG: &str = include_str!("../../configs/battery.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(#[from] SolveError),
    #[error("check failed: {0}")]
    Check(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("gain design: {0}")]
    Design(#[from] GainDesignError),
}

impl ScenarioError {
    pub fn config(field: &str, msg: impl fmt::Display) -> Self {
        ScenarioError::Config(format!("{field}: {msg}"))
    }

    /// Process exit code for the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) | ScenarioError::Design(_) => 2,
            ScenarioError::Solver(_) => 3,
            ScenarioError::Check(_) => 4,
            ScenarioError::Output(_) => 1,
        }
    }
}

/// A configuration resolved into plant, observer modes and signals.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub plant: Arc<dyn Plant>,
    pub model: Arc<PlantCopy>,
    pub gains: Vec<GainProvider>,
    pub input: Arc<dyn Signal>,
    pub noise: Arc<dyn Signal>,
}

/// Output of one solved scenario.
pub struct RunOutput {
    pub system: MultiObserver,
    pub arc: HybridArc,
    pub report: RunReport,
}

impl RunOutput {
    /// Largest `η_σ − η₁` over all samples.
    pub fn max_eta_excess(&self) -> f64 {
        let lay = self.system.layout();
        self.arc
            .samples
            .iter()
            .map(|s| s.state[lay.eta(lay.sigma_of(&s.state))] - s.state[lay.eta(0)])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_eta(&self) -> f64 {
        let lay = self.system.layout();
        self.arc
            .samples
            .iter()
            .flat_map(|s| s.state.as_slice()[lay.etas()].to_vec())
            .fold(f64::INFINITY, f64::min)
    }
}

fn build_plant(cfg: &ScenarioConfig) -> Result<Arc<dyn Plant>, ScenarioError> {
    Ok(match &cfg.plant {
        PlantSpec::VanDerPol { sat_level } => {
            if !(*sat_level > 0.0) {
                return Err(ScenarioError::config("plant.sat_level", "must be positive"));
            }
            Arc::new(VanDerPol::new(VanDerPolParams { sat_level: *sat_level }))
        }
        PlantSpec::Battery { tau, r, capacity_ah, r_int, ocv_csv } => {
            if !(*tau > 0.0 && *r > 0.0 && *capacity_ah > 0.0 && *r_int >= 0.0) {
                return Err(ScenarioError::config("plant", "battery parameters must be positive"));
            }
            let curve = match ocv_csv {
                Some(p) => OcvCurve::from_csv(&cfg.resolve(p)).map_err(|e| ScenarioError::config("plant.ocv_csv", e))?,
                None => OcvCurve::default_curve(),
            };
            Arc::new(Battery::new(BatteryParams {
                tau: *tau,
                r: *r,
                capacity_ah: *capacity_ah,
                r_int: *r_int,
                ocv_curve: Some(curve),
            }))
        }
        PlantSpec::Linear { a, b, c, n_x, n_u, n_y } => {
            let a = a.to_matrix(*n_x, *n_x, "plant.a")?;
            let b = match b {
                Some(b) => b.to_matrix(*n_x, *n_u, "plant.b")?,
                None => DMatrix::zeros(*n_x, *n_u),
            };
            let c = c.to_matrix(*n_y, *n_x, "plant.c")?;
            Arc::new(LinearPlant::new(a, b, c).map_err(|e| ScenarioError::config("plant", e))?)
        }
    })
}

fn build_gains(cfg: &ScenarioConfig, n_x: usize, n_y: usize) -> Result<Vec<GainProvider>, ScenarioError> {
    cfg.modes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let field = |f: &str| format!("modes[{}].{f}", i + 1);
            Ok(match m {
                ModeSpec::HighGain { h } => {
                    let hg = cfg.high_gain.as_ref().expect("validated");
                    if n_x != 2 || n_y != 1 {
                        return Err(ScenarioError::config(&field("kind"), "high-gain modes need a two-state, single-output plant"));
                    }
                    let d = place_double_integrator((hg.eigenvalues[0], hg.eigenvalues[1]))
                        .map_err(|e| ScenarioError::config("high_gain.eigenvalues", e))?;
                    GainProvider::Constant(high_gain_gain(*h, &d))
                }
                ModeSpec::Constant { gain } => GainProvider::Constant(gain.to_matrix(n_x, n_y, &field("gain"))?),
                ModeSpec::Ekf { r, q, alpha, p0, ceiling } => {
                    let r = r.to_matrix(n_y, n_y, &field("r"))?;
                    let q = q.to_matrix(n_x, n_x, &field("q"))?;
                    let p0 = match p0 {
                        Some(p) => p.to_matrix(n_x, n_x, &field("p0"))?,
                        None => DMatrix::identity(n_x, n_x),
                    };
                    if r.clone().try_inverse().is_none() {
                        return Err(ScenarioError::config(&field("r"), "must be invertible"));
                    }
                    if !(*alpha >= 0.0) {
                        return Err(ScenarioError::config(&field("alpha"), "must be nonnegative"));
                    }
                    let mut params = EkfParams { r, q, alpha: *alpha, p0, ceiling: 1e12 };
                    if let Some(c) = ceiling {
                        params.ceiling = *c;
                    }
                    GainProvider::Ekf(params)
                }
            })
        })
        .collect()
}

fn build_input(cfg: &ScenarioConfig, n_u: usize) -> Result<Arc<dyn Signal>, ScenarioError> {
    let scalar_only = |what: &str| {
        if n_u != 1 {
            Err(ScenarioError::config("signals.input", format!("{what} needs a single-input plant, plant has {n_u} inputs")))
        } else {
            Ok(())
        }
    };
    Ok(match &cfg.signals.input {
        InputSpec::None => Arc::new(Zero(n_u)),
        InputSpec::Constant { value } => {
            let v = *value;
            Arc::new(FnSignal::new(n_u, move |_| DVector::from_element(n_u, v)))
        }
        InputSpec::SyntheticPhev => {
            scalar_only("synthetic-phev")?;
            Arc::new(synthetic_phev_profile(cfg.solver.t_end))
        }
        InputSpec::Csv { path } => {
            scalar_only("csv input")?;
            Arc::new(load_current_profile(&cfg.resolve(path)).map_err(|e| ScenarioError::config("signals.input.path", e))?)
        }
    })
}

fn build_noise(cfg: &ScenarioConfig, n_w: usize) -> Result<Arc<dyn Signal>, ScenarioError> {
    let scalar = |kind: &str| {
        if n_w != 1 {
            Err(ScenarioError::config("signals.noise", format!("{kind} noise needs a single noise channel")))
        } else {
            Ok(())
        }
    };
    Ok(match &cfg.signals.noise {
        NoiseSpec::None => Arc::new(Zero(n_w)),
        NoiseSpec::PiecewiseLinear { seed, interval, amplitude } => {
            scalar("piecewise-linear")?;
            if !(*interval > 0.0) {
                return Err(ScenarioError::config("signals.noise.interval", "must be positive"));
            }
            Arc::new(piecewise_linear_noise(*seed, *interval, *amplitude))
        }
        NoiseSpec::Sinusoid { amplitude, frequency } => {
            scalar("sinusoid")?;
            Arc::new(Sinusoid { amplitude: *amplitude, frequency: *frequency })
        }
    })
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let plant = build_plant(&config)?;
        let (n_x, n_y) = (plant.n_x(), plant.n_y());
        let gains = build_gains(&config, n_x, n_y)?;
        let input = build_input(&config, plant.n_u())?;
        let noise = build_noise(&config, plant.n_w())?;
        let model = Arc::new(PlantCopy::new(plant.clone()));
        if config.initial.x.len() != n_x {
            return Err(ScenarioError::config("initial.x", format!("expected {n_x} entries")));
        }
        let xhat_ok = match &config.initial.xhat {
            PerMode::Shared(v) => v.len() == n_x,
            PerMode::Each(vs) => vs.iter().all(|v| v.len() == n_x),
        };
        if !xhat_ok {
            return Err(ScenarioError::config("initial.xhat", format!("estimates need {n_x} entries")));
        }
        if let Some(mc) = &config.montecarlo {
            if mc.xhat_box.len() != n_x {
                return Err(ScenarioError::config("montecarlo.xhat_box", format!("expected {n_x} intervals")));
            }
        }
        Ok(Self { config, plant, model, gains, input, noise })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_config(ScenarioConfig::load(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        Self::from_config(ScenarioConfig::parse(text)?)
    }

    pub fn supervisor_config(&self) -> Result<SupervisorConfig, ScenarioError> {
        let s = &self.config.supervisor;
        let (n_x, n_y) = (self.plant.n_x(), self.plant.n_y());
        let tie_break = match &s.tie_break {
            None => TieBreak::LowestIndex,
            Some(TieBreakSpec::Named(n)) if n == "lowest-index" => TieBreak::LowestIndex,
            Some(TieBreakSpec::Named(n)) => {
                return Err(ScenarioError::config("supervisor.tie_break", format!("unknown policy {n:?}")));
            }
            Some(TieBreakSpec::Seeded { seed }) => TieBreak::SeededRandom(*seed),
        };
        let cfg = SupervisorConfig {
            nu: s.nu,
            lambda1: s.lambda1.to_matrix(n_y, n_y, "supervisor.lambda1")?,
            lambda2: s.lambda2.to_matrix(n_x, n_x, "supervisor.lambda2")?,
            epsilon: s.epsilon,
            reset: self.config.reset(),
            tie_break,
            zeta: s.zeta,
        };
        cfg.validate(n_x, n_y).map_err(|e| ScenarioError::config("supervisor", e))?;
        Ok(cfg)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.config.solver;
        let mut c = SolverConfig { step: s.step, event_tol: s.event_tol, t_end: s.t_end, grazing: s.grazing, ..SolverConfig::default() };
        if let Some(m) = s.max_jumps {
            c.max_jumps = m;
        }
        c
    }

    pub fn system(&self) -> Result<MultiObserver, ScenarioError> {
        let modes = self.gains.iter().map(|g| ObserverMode::new(self.model.clone(), g.clone())).collect();
        let signals = SignalBundle::new(self.input.clone(), Arc::new(Zero(self.plant.n_v())), self.noise.clone());
        assemble(self.plant.clone(), modes, self.supervisor_config()?, signals).map_err(|e| ScenarioError::config("modes", e))
    }

    pub fn initial_xhats(&self) -> Vec<DVector<f64>> {
        let n = self.gains.len();
        match &self.config.initial.xhat {
            PerMode::Shared(v) => vec![DVector::from_column_slice(v); n],
            PerMode::Each(vs) => vs.iter().map(|v| DVector::from_column_slice(v)).collect(),
        }
    }

    pub fn initial_etas(&self) -> Vec<f64> {
        match &self.config.initial.eta {
            PerMode::Shared(e) => vec![*e; self.gains.len()],
            PerMode::Each(v) => v.clone(),
        }
    }

    pub fn initial_state(&self, sys: &MultiObserver) -> Result<DVector<f64>, ScenarioError> {
        let x0 = DVector::from_column_slice(&self.config.initial.x);
        sys.initial_state(&x0, &self.initial_xhats(), &self.initial_etas(), self.config.supervisor.sigma0)
            .map_err(|e| ScenarioError::config("initial", e))
    }

    pub fn run(&self) -> Result<RunOutput, ScenarioError> {
        let system = self.system()?;
        let q0 = self.initial_state(&system)?;
        let arc = solve(&system, &q0, &self.solver_config())?;
        let report = RunReport::from_arc(&arc, system.layout());
        Ok(RunOutput { system, arc, report })
    }
}

/// Solves a scenario given its configuration.
pub fn run_config(cfg: &ScenarioConfig) -> Result<RunOutput, ScenarioError> {
    Scenario::from_config(cfg.clone())?.run()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighGainReport {
    pub check: HighGainCheck,
    pub h1: f64,
    pub margin: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl HighGainReport {
    pub fn passed(&self) -> bool {
        self.margin >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub high_gain: Option<HighGainReport>,
    pub nu: f64,
    pub alpha: f64,
    /// `λ_max(P₀)` of EKF modes, for reference.
    pub ekf_modes: Vec<(usize, f64)>,
}

impl AssumptionReport {
    pub fn nu_ok(&self) -> bool {
        self.nu > 0.0 && self.nu <= self.alpha
    }

    pub fn passed(&self) -> bool {
        self.nu_ok() && self.high_gain.as_ref().is_none_or(HighGainReport::passed)
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = |b: bool| if b { "PASS" } else { "FAIL" };
        match &self.high_gain {
            Some(hg) => {
                let c = &hg.check;
                writeln!(f, "nominal high-gain observer")?;
                writeln!(f, "  D            = [{:.6}, {:.6}]", c.d[0], c.d[1])?;
                writeln!(f, "  P            = [[{:.6}, {:.6}], [{:.6}, {:.6}]]", c.p[(0, 0)], c.p[(0, 1)], c.p[(1, 0)], c.p[(1, 1)])?;
                writeln!(f, "  residual     = {:.3e}", c.residual)?;
                writeln!(f, "  lambda_max P = {:.6}", c.lambda_max)?;
                writeln!(f, "  lambda_min P = {:.6}", c.lambda_min)?;
                writeln!(f, "  h1*          = {:.4}", c.h_star)?;
                writeln!(f, "  delta1       = {:.6}", hg.delta1)?;
                writeln!(f, "  delta2       = {:.6}", hg.delta2)?;
                writeln!(f, "  h1 >= h1*    : {} (h1 = {}, margin {:+.2})", verdict(hg.passed()), hg.h1, hg.margin)?;
            }
            None => writeln!(f, "nominal high-gain observer: not applicable, check skipped")?,
        }
        for (k, lm) in &self.ekf_modes {
            writeln!(f, "mode {k}: EKF, lambda_max(P0) = {lm:.6}")?;
        }
        write!(f, "nu <= alpha  : {} (nu = {}, alpha = {})", verdict(self.nu_ok()), self.nu, self.alpha)
    }
}

/// High-gain feasibility of the nominal mode and the `ν ≤ α` condition.
pub fn verify_assumptions(cfg: &ScenarioConfig) -> Result<AssumptionReport, ScenarioError> {
    let high_gain = match (&cfg.modes[0], &cfg.high_gain) {
        (ModeSpec::HighGain { h }, Some(hg)) => {
            let check = verify_assumption1_highgain((hg.eigenvalues[0], hg.eigenvalues[1]), hg.lipschitz).map_err(|e| match e {
                ObserverError::NotHurwitz(_) => ScenarioError::config("high_gain.eigenvalues", e),
                other => ScenarioError::Check(other.to_string()),
            })?;
            let (delta1, delta2) = assumption2_constants(hg.output_lipschitz, &check.p);
            Some(HighGainReport { h1: *h, margin: h - check.h_star, delta1, delta2, check })
        }
        _ => None,
    };
    let ekf_modes = cfg
        .modes
        .iter()
        .enumerate()
        .filter_map(|(i, m)| match m {
            ModeSpec::Ekf { p0, .. } => {
                let n = cfg.initial.x.len();
                let p = p0.as_ref().map_or(Ok(DMatrix::identity(n, n)), |p| p.to_matrix(n, n, "p0"));
                Some(p.map(|p| (i + 1, lambda_max(&p))))
            }
            _ => None,
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AssumptionReport { high_gain, nu: cfg.supervisor.nu, alpha: cfg.supervisor.alpha, ekf_modes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOutcome {
    pub gain: DMatrix<f64>,
    pub cost: f64,
    /// Worst-case cost of the nominal mode's gain, when it is constant.
    pub nominal_cost: Option<f64>,
    /// Initial gains with their worst-case costs.
    pub initial: Vec<(DMatrix<f64>, f64)>,
}

/// Builds the gain-design problem of a scenario for a scenario bank.
pub fn design_problem(scn: &Scenario, bank: Vec<gain_design::DesignScenario>) -> Result<GainDesignProblem, ScenarioError> {
    let spec = scn
        .config
        .gain_design
        .as_ref()
        .ok_or_else(|| ScenarioError::config("gain_design", "section required for design-gains"))?;
    let n = scn.plant.n_x();
    let xhat0 = scn.initial_xhats().swap_remove(0);
    let p = GainDesignProblem {
        plant: scn.plant.clone(),
        model: scn.model.clone(),
        x0: DVector::from_column_slice(&scn.config.initial.x),
        xhat0,
        u: scn.input.clone(),
        scenario_bank: bank,
        theta: spec.theta,
        q_weight: DMatrix::identity(n, n) * spec.q_weight,
        horizon: spec.horizon,
        step: spec.step.unwrap_or(scn.config.solver.step),
        bounds: spec.bounds.iter().map(|b| (b[0], b[1])).collect(),
    };
    p.validate()?;
    Ok(p)
}

/// Min-max search seeded from every constant mode gain plus configured extras.
pub fn design_gains(scn: &Scenario, bank: Vec<gain_design::DesignScenario>) -> Result<DesignOutcome, ScenarioError> {
    let p = design_problem(scn, bank)?;
    let spec = scn.config.gain_design.as_ref().expect("checked by design_problem");
    let (rows, cols) = p.gain_shape();
    let mut inits: Vec<DMatrix<f64>> = scn
        .gains
        .iter()
        .filter_map(|g| match g {
            GainProvider::Constant(l) => Some(l.clone()),
            GainProvider::Ekf(_) => None,
        })
        .collect();
    for (i, g) in spec.init_gains.iter().enumerate() {
        if g.len() != rows * cols {
            return Err(ScenarioError::config(&format!("gain_design.init_gains[{}]", i + 1), format!("expected {} entries", rows * cols)));
        }
        inits.push(gain_design::unflatten_gain(g, rows, cols));
    }
    let initial: Vec<(DMatrix<f64>, f64)> = inits.iter().map(|g| (g.clone(), gain_design::worst_case_cost(&p, g))).collect();
    let nominal_cost = match &scn.gains[0] {
        GainProvider::Constant(l) => Some(gain_design::worst_case_cost(&p, l)),
        GainProvider::Ekf(_) => None,
    };
    let (gain, cost) = gain_design::minmax_gain_search(&p, &inits, spec.iters)?;
    Ok(DesignOutcome { gain, cost, nominal_cost, initial })
}
