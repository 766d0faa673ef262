//! Offline min-max design of additional observer gains.
//!
//! A candidate gain is scored by simulating the plant together with a single
//! observer copy and integrating the discounted quadratic estimation error
//! `∫ e^{−ϑs} eᵀ Q e ds`. The worst case is taken over a finite bank of
//! disturbance/noise scenarios, and a bounded Nelder-Mead search minimizes it.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::hybrid::{solve, HybridSystemDef, SolverConfig};
use crate::observer::PlantCopy;
use crate::plant::{piecewise_linear_noise, Plant, Signal, Sinusoid, Zero};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainDesignError {
    #[error("scenario bank is empty")]
    EmptyBank,
    #[error("invalid design problem: {0}")]
    Invalid(String),
    #[error("at least one initial gain is required")]
    NoInitialGain,
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}, line {line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
}

/// One `(v, w)` realization of the bank.
#[derive(Clone)]
pub struct DesignScenario {
    pub name: String,
    pub v: Arc<dyn Signal>,
    pub w: Arc<dyn Signal>,
}

impl std::fmt::Debug for DesignScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DesignScenario").field("name", &self.name).finish_non_exhaustive()
    }
}

impl DesignScenario {
    pub fn zero(plant: &dyn Plant) -> Self {
        Self { name: "zero".into(), v: Arc::new(Zero(plant.n_v())), w: Arc::new(Zero(plant.n_w())) }
    }
}

/// Piecewise-linear measurement-noise scenarios, one per seed, no disturbance.
pub fn noise_family(plant: &dyn Plant, seeds: &[u64], interval: f64, amplitude: f64) -> Vec<DesignScenario> {
    seeds
        .iter()
        .map(|&s| DesignScenario {
            name: format!("noise-{s}"),
            v: Arc::new(Zero(plant.n_v())),
            w: Arc::new(piecewise_linear_noise(s, interval, amplitude)),
        })
        .collect()
}

#[derive(Clone)]
pub struct GainDesignProblem {
    pub plant: Arc<dyn Plant>,
    pub model: Arc<PlantCopy>,
    pub x0: DVector<f64>,
    pub xhat0: DVector<f64>,
    pub u: Arc<dyn Signal>,
    pub scenario_bank: Vec<DesignScenario>,
    /// Discount rate `ϑ ≥ 0`.
    pub theta: f64,
    pub q_weight: DMatrix<f64>,
    pub horizon: f64,
    pub step: f64,
    /// Box on each flattened gain entry (row-major); empty means unbounded.
    pub bounds: Vec<(f64, f64)>,
}

impl GainDesignProblem {
    pub fn gain_shape(&self) -> (usize, usize) {
        (self.plant.n_x(), self.plant.n_y())
    }

    pub fn validate(&self) -> Result<(), GainDesignError> {
        let bad = |m: String| Err(GainDesignError::Invalid(m));
        if self.scenario_bank.is_empty() {
            return Err(GainDesignError::EmptyBank);
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.step > 0.0 && self.step < self.horizon) {
            return bad(format!("step must lie in (0, horizon), got {}", self.step));
        }
        if !(self.theta >= 0.0) {
            return bad(format!("discount rate must be nonnegative, got {}", self.theta));
        }
        let n = self.plant.n_x();
        if self.x0.len() != n || self.xhat0.len() != n || self.q_weight.shape() != (n, n) {
            return bad("x0, xhat0 and Q must match the plant state dimension".into());
        }
        if self.u.dim() != self.plant.n_u() {
            return bad("input signal dimension does not match the plant".into());
        }
        for s in &self.scenario_bank {
            if s.v.dim() != self.plant.n_v() || s.w.dim() != self.plant.n_w() {
                return bad(format!("scenario {} has wrong signal dimensions", s.name));
            }
        }
        let (r, c) = self.gain_shape();
        if !self.bounds.is_empty() && self.bounds.len() != r * c {
            return bad(format!("expected {} gain bounds, got {}", r * c, self.bounds.len()));
        }
        if self.bounds.iter().any(|b| !(b.0 <= b.1)) {
            return bad("gain bounds must satisfy lower <= upper".into());
        }
        Ok(())
    }

    fn clamp(&self, theta: &[f64]) -> Vec<f64> {
        if self.bounds.is_empty() {
            return theta.to_vec();
        }
        theta.iter().zip(&self.bounds).map(|(&x, &(lo, hi))| x.clamp(lo, hi)).collect()
    }
}

/// Row-major flattening of an `n_x × n_y` gain.
pub fn flatten_gain(l: &DMatrix<f64>) -> Vec<f64> {
    l.transpose().as_slice().to_vec()
}

pub fn unflatten_gain(theta: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, theta)
}

/// Discounted quadratic error cost of gain `l` under one scenario; `+∞` when
/// the co-simulation diverges.
pub fn evaluate_gain_cost(p: &GainDesignProblem, l: &DMatrix<f64>, scenario: &DesignScenario) -> f64 {
    let n = p.plant.n_x();
    let (plant, model, l_owned, u) = (p.plant.clone(), p.model.clone(), l.clone(), p.u.clone());
    let (v, w) = (scenario.v.clone(), scenario.w.clone());
    let sys = HybridSystemDef::flow_only(2 * n, move |t, z| {
        let x = z.rows(0, n).into_owned();
        let xh = z.rows(n, n).into_owned();
        let ut = u.eval(t);
        let y = plant.output(&x, &ut, &w.eval(t));
        let injection = &l_owned * (y - model.output(&xh, &ut));
        let mut dz = DVector::zeros(2 * n);
        dz.rows_mut(0, n).copy_from(&plant.dynamics(&x, &ut, &v.eval(t)));
        dz.rows_mut(n, n).copy_from(&model.dynamics(&xh, &ut, &injection));
        dz
    });
    let mut z0 = DVector::zeros(2 * n);
    z0.rows_mut(0, n).copy_from(&p.x0);
    z0.rows_mut(n, n).copy_from(&p.xhat0);
    let cfg = SolverConfig { step: p.step, event_tol: p.step * 1e-6, t_end: p.horizon, ..SolverConfig::default() };
    let Ok(arc) = solve(&sys, &z0, &cfg) else {
        return f64::INFINITY;
    };
    let integrand = |z: &DVector<f64>, t: f64| {
        let e = z.rows(0, n) - z.rows(n, n);
        (-p.theta * t).exp() * (e.transpose() * &p.q_weight * &e)[(0, 0)]
    };
    let mut cost = 0.0;
    for w in arc.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        cost += 0.5 * (b.time.t - a.time.t) * (integrand(&a.state, a.time.t) + integrand(&b.state, b.time.t));
    }
    if cost.is_finite() {
        cost
    } else {
        f64::INFINITY
    }
}

/// Maximum of [`evaluate_gain_cost`] over the scenario bank.
pub fn worst_case_cost(p: &GainDesignProblem, l: &DMatrix<f64>) -> f64 {
    p.scenario_bank
        .par_iter()
        .map(|s| evaluate_gain_cost(p, l, s))
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

/// Nelder-Mead on a box: candidates are clamped before evaluation.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], scale: &[f64], iters: usize, clamp: &dyn Fn(&[f64]) -> Vec<f64>) -> (Vec<f64>, f64) {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let c = clamp(x);
        let v = f(&c);
        (c, if v.is_nan() { f64::INFINITY } else { v })
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push(eval(x0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += scale[i];
        let mut vertex = eval(&x);
        if vertex.0 == simplex[0].0 {
            // Clamped onto the start point; step the other way.
            x[i] = x0[i] - scale[i];
            vertex = eval(&x);
        }
        simplex.push(vertex);
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    for _ in 0..iters {
        order(&mut simplex);
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let spread = simplex.iter().skip(1).map(|v| {
            v.0.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        }).fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-12 * (1.0 + best.abs()) && spread <= 1e-9 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|i| simplex[..n].iter().map(|v| v.0[i]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|i| centroid[i] + t * (simplex[n].0[i] - centroid[i])).collect() };
        let reflected = eval(&along(-1.0));
        if reflected.1 < simplex[0].1 {
            let expanded = eval(&along(-2.0));
            simplex[n] = if expanded.1 < reflected.1 { expanded } else { reflected };
        } else if reflected.1 < simplex[n - 1].1 {
            simplex[n] = reflected;
        } else {
            let contracted = if reflected.1 < simplex[n].1 { eval(&along(-0.5)) } else { eval(&along(0.5)) };
            if contracted.1 < simplex[n].1.min(reflected.1) {
                simplex[n] = contracted;
            } else {
                let best_x = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = v.0.iter().zip(&best_x).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    *v = eval(&shrunk);
                }
            }
        }
    }
    order(&mut simplex);
    simplex.swap_remove(0)
}

/// Minimizes [`worst_case_cost`] from each initial gain in turn and returns the
/// best gain found with its worst-case cost.
pub fn minmax_gain_search(
    p: &GainDesignProblem,
    init_gains: &[DMatrix<f64>],
    iters: usize,
) -> Result<(DMatrix<f64>, f64), GainDesignError> {
    p.validate()?;
    if init_gains.is_empty() {
        return Err(GainDesignError::NoInitialGain);
    }
    let (rows, cols) = p.gain_shape();
    if let Some(g) = init_gains.iter().find(|g| g.shape() != (rows, cols)) {
        return Err(GainDesignError::Invalid(format!("initial gain is {:?}, expected ({rows}, {cols})", g.shape())));
    }
    let objective = |theta: &[f64]| worst_case_cost(p, &unflatten_gain(theta, rows, cols));
    let clamp = |theta: &[f64]| p.clamp(theta);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for g in init_gains {
        let x0 = flatten_gain(g);
        let scale: Vec<f64> = x0
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let s = if x != 0.0 { 0.1 * x.abs() } else { 0.1 };
                match p.bounds.get(i) {
                    Some(&(lo, hi)) if hi > lo => s.min(0.25 * (hi - lo)),
                    _ => s,
                }
            })
            .collect();
        let found = nelder_mead(&objective, &x0, &scale, iters, &clamp);
        if best.as_ref().is_none_or(|b| found.1 < b.1) {
            best = Some(found);
        }
    }
    let (theta, cost) = best.expect("at least one restart");
    Ok((unflatten_gain(&theta, rows, cols), cost))
}

/// Writes one flattened gain per row, followed by its worst-case cost.
pub fn write_gain_bank(path: &Path, gains: &[(DMatrix<f64>, f64)]) -> Result<(), GainDesignError> {
    let io = |e: csv::Error| GainDesignError::Io { path: path.display().to_string(), reason: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    if let Some((g, _)) = gains.first() {
        let mut header: Vec<String> = (0..g.nrows())
            .flat_map(|i| (0..g.ncols()).map(move |j| format!("L{}_{}", i + 1, j + 1)))
            .collect();
        header.push("worst_case_cost".into());
        w.write_record(&header).map_err(io)?;
    }
    for (g, cost) in gains {
        let mut row: Vec<String> = flatten_gain(g).iter().map(|v| v.to_string()).collect();
        row.push(cost.to_string());
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| GainDesignError::Io { path: path.display().to_string(), reason: e.to_string() })
}

/// Reads a gain bank written by [`write_gain_bank`]; only `L…` columns are used.
pub fn read_gain_bank(path: &Path, rows: usize, cols: usize) -> Result<Vec<DMatrix<f64>>, GainDesignError> {
    let p = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| GainDesignError::Io { path: p.clone(), reason: e.to_string() })?;
    let header = r.headers().map_err(|e| GainDesignError::Io { path: p.clone(), reason: e.to_string() })?.clone();
    let idx: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with('L')).map(|(i, _)| i).collect();
    if idx.len() != rows * cols {
        return Err(GainDesignError::Malformed { path: p, line: 1, reason: format!("expected {} gain columns, found {}", rows * cols, idx.len()) });
    }
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| GainDesignError::Malformed { path: p.clone(), line, reason: e.to_string() })?;
        let vals = idx
            .iter()
            .map(|&i| rec.get(i).unwrap_or("").trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| GainDesignError::Malformed { path: p.clone(), line, reason: e.to_string() })?;
        out.push(unflatten_gain(&vals, rows, cols));
    }
    Ok(out)
}

/// Reads a scenario bank. Columns: `scenario,signal,kind,seed,amplitude,param`,
/// with `signal` one of `v`/`w` and `kind` one of `zero`, `piecewise-linear`
/// (`param` = knot interval) or `sinusoid` (`param` = angular frequency).
/// Signals not listed for a scenario are zero.
pub fn read_scenario_bank(path: &Path, plant: &dyn Plant) -> Result<Vec<DesignScenario>, GainDesignError> {
    let text = std::fs::read_to_string(path).map_err(|e| GainDesignError::Io { path: path.display().to_string(), reason: e.to_string() })?;
    parse_scenario_bank(&text, plant).map_err(|(line, reason)| GainDesignError::Malformed { path: path.display().to_string(), line, reason })
}

pub fn parse_scenario_bank(text: &str, plant: &dyn Plant) -> Result<Vec<DesignScenario>, (usize, String)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let expected = ["scenario", "signal", "kind", "seed", "amplitude", "param"];
    let header = r.headers().map_err(|e| (1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != expected {
        return Err((1, format!("header must be {}", expected.join(","))));
    }
    let mut bank: Vec<DesignScenario> = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| (line, e.to_string()))?;
        let num = |i: usize| -> Result<f64, (usize, String)> {
            let s = rec.get(i).unwrap_or("");
            if s.is_empty() {
                Ok(0.0)
            } else {
                s.parse().map_err(|_| (line, format!("column {} is not a number: {s:?}", expected[i])))
            }
        };
        let name = rec.get(0).unwrap_or("").to_string();
        let which = rec.get(1).unwrap_or("");
        let dim = match which {
            "v" => plant.n_v(),
            "w" => plant.n_w(),
            other => return Err((line, format!("signal must be v or w, got {other:?}"))),
        };
        let signal: Arc<dyn Signal> = match rec.get(2).unwrap_or("") {
            "zero" => Arc::new(Zero(dim)),
            "piecewise-linear" | "sinusoid" if dim != 1 => {
                return Err((line, format!("{which} has dimension {dim}; noise families are scalar")));
            }
            "piecewise-linear" => {
                let seed = rec.get(3).unwrap_or("").parse::<u64>().map_err(|_| (line, "seed must be a nonnegative integer".to_string()))?;
                let interval = num(5)?;
                if !(interval > 0.0) {
                    return Err((line, "knot interval must be positive".into()));
                }
                Arc::new(piecewise_linear_noise(seed, interval, num(4)?))
            }
            "sinusoid" => Arc::new(Sinusoid { amplitude: num(4)?, frequency: num(5)? }),
            other => return Err((line, format!("unknown signal kind {other:?}"))),
        };
        let idx = match bank.iter().position(|s| s.name == name) {
            Some(i) => i,
            None => {
                bank.push(DesignScenario { name: name.clone(), ..DesignScenario::zero(plant) });
                bank.len() - 1
            }
        };
        if which == "v" {
            bank[idx].v = signal;
        } else {
            bank[idx].w = signal;
        }
    }
    Ok(bank)
}

/// Renders a bank in the format read by [`parse_scenario_bank`] for
/// piecewise-linear noise families.
pub fn noise_bank_csv(seeds: &[u64], interval: f64, amplitude: f64) -> String {
    let mut s = String::from("scenario,signal,kind,seed,amplitude,param\n");
    for seed in seeds {
        let _ = writeln!(s, "noise-{seed},w,piecewise-linear,{seed},{amplitude},{interval}");
    }
    s
}
