//! Browser bindings: a Van der Pol run, the high-gain feasibility check and a
//! single application of the switching rule.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;

use wasm_bindgen::prelude::*;

use hmo_core::metrics::{error_norms, Estimate};
use hmo_core::observer::verify_assumption1_highgain;
use hmo_core::scenario::{NoiseSpec, PerMode, Scenario, ScenarioConfig, VDP_CONFIG};
use hmo_core::supervisor::{apply_reset, jump_guard, select_mode, SupervisorState, TieBreak};

const MAX_POINTS: usize = 2000;

/// Decimated traces of one run plus a text summary.
#[wasm_bindgen]
pub struct VdpTrace {
    t: Vec<f64>,
    e1: Vec<f64>,
    esigma: Vec<f64>,
    sigma: Vec<f64>,
    j1: Vec<f64>,
    jsigma: Vec<f64>,
    summary: String,
}

#[wasm_bindgen]
impl VdpTrace {
    pub fn t(&self) -> Vec<f64> {
        self.t.clone()
    }
    pub fn e1(&self) -> Vec<f64> {
        self.e1.clone()
    }
    pub fn esigma(&self) -> Vec<f64> {
        self.esigma.clone()
    }
    pub fn sigma(&self) -> Vec<f64> {
        self.sigma.clone()
    }
    pub fn j1(&self) -> Vec<f64> {
        self.j1.clone()
    }
    pub fn jsigma(&self) -> Vec<f64> {
        self.jsigma.clone()
    }
    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

/// Bundled Van der Pol case with a chosen initial estimate, reset rule,
/// horizon and noise.
#[wasm_bindgen]
pub fn simulate_vdp(xhat1: f64, xhat2: f64, reset: bool, t_end: f64, noise_amplitude: f64, seed: u64) -> Result<VdpTrace, String> {
    let mut cfg = ScenarioConfig::parse(VDP_CONFIG).map_err(|e| e.to_string())?;
    if !(t_end > 0.0 && t_end <= 60.0) {
        return Err("horizon must lie in (0, 60] s".into());
    }
    cfg.solver.t_end = t_end;
    cfg.supervisor.reset = reset as u8;
    cfg.initial.xhat = PerMode::Shared(vec![xhat1, xhat2]);
    cfg.signals.noise = if noise_amplitude > 0.0 {
        NoiseSpec::PiecewiseLinear { seed, interval: 0.01, amplitude: noise_amplitude }
    } else {
        NoiseSpec::None
    };
    let out = Scenario::from_config(cfg).and_then(|s| s.run()).map_err(|e| e.to_string())?;
    let lay = out.system.layout();
    let e1 = error_norms(&out.arc, lay, Estimate::Nominal);
    let es = error_norms(&out.arc, lay, Estimate::Sigma);
    let n = out.arc.samples.len();
    let stride = n.div_ceil(MAX_POINTS).max(1);
    let keep: Vec<usize> = (0..n).step_by(stride).chain(std::iter::once(n - 1)).collect();
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let t: Vec<f64> = out.arc.samples.iter().map(|s| s.time.t).collect();
    let sigma: Vec<f64> = out.arc.samples.iter().map(|s| (lay.sigma_of(&s.state) + 1) as f64).collect();
    Ok(VdpTrace {
        t: pick(&t),
        e1: pick(&e1),
        esigma: pick(&es),
        sigma: pick(&sigma),
        j1: pick(&out.report.j_1_trace),
        jsigma: pick(&out.report.j_sigma_trace),
        summary: out.report.to_string(),
    })
}

/// Places `A − DC` at the given eigenvalues and reports the high-gain threshold.
#[wasm_bindgen]
pub fn check_high_gain(eig1: f64, eig2: f64, lipschitz: f64, h1: f64) -> Result<String, String> {
    let c = verify_assumption1_highgain((eig1, eig2), lipschitz).map_err(|e| e.to_string())?;
    let mut s = String::new();
    let _ = writeln!(s, "D            = [{:.6}, {:.6}]", c.d[0], c.d[1]);
    let _ = writeln!(s, "P            = [[{:.6}, {:.6}], [{:.6}, {:.6}]]", c.p[(0, 0)], c.p[(0, 1)], c.p[(1, 0)], c.p[(1, 1)]);
    let _ = writeln!(s, "residual     = {:.3e}", c.residual);
    let _ = writeln!(s, "lambda_max P = {:.6}", c.lambda_max);
    let _ = writeln!(s, "h1*          = {:.4}", c.h_star);
    let verdict = if h1 >= c.h_star { "feasible" } else { "below threshold" };
    let _ = write!(s, "h1 = {h1}: {verdict} (margin {:+.2})", h1 - c.h_star);
    Ok(s)
}

/// One switch from monitors `eta`, active mode `sigma` (1-based) and monitor
/// rates; estimates are taken to be the mode index so resets are visible.
#[wasm_bindgen]
pub fn switch_step(eta: Vec<f64>, sigma: usize, rates: Vec<f64>, reset: bool, epsilon: f64) -> Result<String, String> {
    let n = eta.len();
    if n < 2 || rates.len() != n {
        return Err("need at least two monitors and one rate per monitor".into());
    }
    if sigma == 0 || sigma > n {
        return Err(format!("sigma must lie in 1..={n}"));
    }
    if !(epsilon > 0.0) {
        return Err("epsilon must be positive".into());
    }
    let s0 = sigma - 1;
    let guard = jump_guard(&eta, s0);
    if guard > 0.0 {
        return Ok(format!("guard = {guard:.6} > 0: flow continues, no switch"));
    }
    let state = SupervisorState {
        x: vec![0.0].into(),
        xhat: (1..=n).map(|k| vec![k as f64].into()).collect(),
        eta: eta.clone(),
        sigma: s0,
        gain_states: vec![Vec::new(); n],
        xf: None,
    };
    let next = select_mode(&eta, s0, &rates, TieBreak::LowestIndex, 0.0);
    let post = apply_reset(&state, next, reset, epsilon);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ");
    let xh: Vec<f64> = post.xhat.iter().map(|v| v[0]).collect();
    Ok(format!(
        "guard = {guard:.6}: switch {sigma} -> {}\neta+  = [{}]\nxhat+ = [{}] (mode k starts at k)",
        next + 1,
        fmt(&post.eta),
        fmt(&xh)
    ))
}
