//! Monitoring variables, mode selection, reset rule and the assembled
//! multi-observer hybrid system.
//!
//! State layout of the assembled system (mode indices are 1-based in the
//! layout, in `σ` and in [`SwitchEvent`]):
//!
//! ```text
//! [ x | x̂₁ | … | x̂_{N+1} | η₁ … η_{N+1} | gain-internal | x_f? | σ ]
//! ```
//!
//! Gain-internal states are the packed upper triangles of the EKF
//! covariances, in mode order. `σ` is stored as a real number with zero flow.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hybrid::{HybridArc, HybridSystem, HybridTime};
use crate::observer::{ekf_gain_flow, lambda_max, pack_symmetric, unpack_symmetric, GainProvider, ObserverMode, PlantCopy};
use crate::plant::{Plant, SignalBundle};

/// Absolute tolerance under which two monitors count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupervisorError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid supervisor configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    LowestIndex,
    SeededRandom(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisorConfig {
    pub nu: f64,
    pub lambda1: DMatrix<f64>,
    pub lambda2: DMatrix<f64>,
    pub epsilon: f64,
    pub reset: bool,
    pub tie_break: TieBreak,
    pub zeta: Option<f64>,
}

fn is_psd(m: &DMatrix<f64>, strict: bool) -> bool {
    if m.nrows() != m.ncols() || (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return false;
    }
    let min = SymmetricEigen::new(m.clone()).eigenvalues.min();
    if strict {
        min > 0.0
    } else {
        min >= -1e-12
    }
}

impl SupervisorConfig {
    pub fn validate(&self, n_x: usize, n_y: usize) -> Result<(), SupervisorError> {
        let bad = |m: String| Err(SupervisorError::InvalidConfig(m));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.lambda1.shape() != (n_y, n_y) {
            return Err(SupervisorError::DimensionMismatch(format!("Lambda1 must be {n_y}x{n_y}")));
        }
        if self.lambda2.shape() != (n_x, n_x) {
            return Err(SupervisorError::DimensionMismatch(format!("Lambda2 must be {n_x}x{n_x}")));
        }
        if !is_psd(&self.lambda1, false) || !is_psd(&self.lambda2, false) {
            return bad("Lambda1 and Lambda2 must be symmetric positive semidefinite".into());
        }
        if !is_psd(&self.lambda1, true) && !is_psd(&self.lambda2, true) {
            return bad("at least one of Lambda1, Lambda2 must be positive definite".into());
        }
        if let Some(z) = self.zeta {
            if !(z > 0.0) {
                return bad(format!("zeta must be positive, got {z}"));
            }
        }
        Ok(())
    }
}

/// `g = −ν η + ẽᵀ(Λ₁ + LᵀΛ₂L)ẽ` with `ẽ = y − ŷ`.
pub fn eta_flow(eta: f64, gain: &DMatrix<f64>, y: &DVector<f64>, yhat: &DVector<f64>, cfg: &SupervisorConfig) -> f64 {
    let e = y - yhat;
    let weight = &cfg.lambda1 + gain.transpose() * &cfg.lambda2 * gain;
    -cfg.nu * eta + (e.transpose() * weight * &e)[(0, 0)]
}

/// Discounted integral of a forcing trace on a uniform grid:
/// `e^{−νt}η₀ + ∫₀ᵗ e^{−ν(t−s)} q(s) ds`, trapezoid rule.
pub fn eta_closed_form(eta0: f64, forcing: &[f64], dt: f64, nu: f64) -> f64 {
    let n = forcing.len();
    if n == 0 {
        return eta0;
    }
    let t = (n - 1) as f64 * dt;
    let mut integral = 0.0;
    for i in 0..n - 1 {
        let a = (-nu * (t - i as f64 * dt)).exp() * forcing[i];
        let b = (-nu * (t - (i + 1) as f64 * dt)).exp() * forcing[i + 1];
        integral += 0.5 * dt * (a + b);
    }
    (-nu * t).exp() * eta0 + integral
}

/// `min_{k≠σ} η_k − η_σ` (`σ` 0-based). Non-positive exactly on the jump set.
pub fn jump_guard(eta: &[f64], sigma: usize) -> f64 {
    let others = eta
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != sigma)
        .map(|(_, &e)| e)
        .fold(f64::INFINITY, f64::min);
    others - eta[sigma]
}

/// Selection rule: among the monitor minimizers over `k ≠ σ`, the one with the
/// smallest monitor rate. All indices 0-based.
pub fn select_mode(eta: &[f64], sigma: usize, rates: &[f64], tie_break: TieBreak, t: f64) -> usize {
    let min_eta = eta
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != sigma)
        .map(|(_, &e)| e)
        .fold(f64::INFINITY, f64::min);
    let pi: Vec<usize> = (0..eta.len())
        .filter(|&k| k != sigma && eta[k] <= min_eta + TIE_TOL)
        .collect();
    let min_rate = pi.iter().map(|&k| rates[k]).fold(f64::INFINITY, f64::min);
    let rate_tol = 1e-12 * min_rate.abs().max(1.0);
    let best: Vec<usize> = pi.into_iter().filter(|&k| rates[k] <= min_rate + rate_tol).collect();
    match tie_break {
        TieBreak::LowestIndex => best[0],
        TieBreak::SeededRandom(seed) => {
            if best.len() == 1 {
                best[0]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t.to_bits());
                best[rng.random_range(0..best.len())]
            }
        }
    }
}

/// Unpacked view of the assembled state.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisorState {
    pub x: DVector<f64>,
    pub xhat: Vec<DVector<f64>>,
    pub eta: Vec<f64>,
    /// 0-based active mode.
    pub sigma: usize,
    /// Packed covariance per mode (empty for constant gains).
    pub gain_states: Vec<Vec<f64>>,
    pub xf: Option<DVector<f64>>,
}

/// Reset rule applied at a switch to `sigma_plus` (0-based; mode 0 is the
/// nominal observer). Returns the post-jump state.
///
/// `x`, `x̂₁`, `η₁`, `η_{σ⁺}`, gain states and `x_f` are kept. For the other
/// additional modes `x̂_k⁺ = (1−r)x̂_k + r x̂_{σ⁺}` and
/// `η_k⁺ = (1−r)η_k + r η_{k*} + ε` with `η_{k*} = min_{j≠σ⁺} η_j`.
pub fn apply_reset(s: &SupervisorState, sigma_plus: usize, reset: bool, epsilon: f64) -> SupervisorState {
    let mut next = s.clone();
    let n = s.eta.len();
    let eta_star = jump_guard(&s.eta, sigma_plus) + s.eta[sigma_plus];
    let eta_star_pre = s.eta[sigma_plus];
    if reset && (eta_star - eta_star_pre).abs() > TIE_TOL {
        log::debug!(
            "reset source monitor differs between readings: min over k != sigma+ is {eta_star}, eta_sigma+ is {eta_star_pre}"
        );
    }
    for k in 1..n {
        if reset {
            next.xhat[k] = s.xhat[sigma_plus].clone();
        }
        if k != sigma_plus {
            let base = if reset { eta_star } else { s.eta[k] };
            next.eta[k] = base + epsilon;
        }
    }
    next.sigma = sigma_plus;
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEvent {
    pub time: HybridTime,
    /// 1-based.
    pub sigma_before: usize,
    /// 1-based.
    pub sigma_after: usize,
    pub eta_before: Vec<f64>,
    pub eta_after: Vec<f64>,
    pub reset_applied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub n_x: usize,
    pub n_modes: usize,
    /// Packed-covariance range per mode inside the full state.
    gain_ranges: Vec<Option<Range<usize>>>,
    n_gain: usize,
    pub has_filter: bool,
}

impl StateLayout {
    pub fn new(n_x: usize, gains: &[GainProvider], has_filter: bool) -> Self {
        let n_modes = gains.len();
        let mut off = n_x * (n_modes + 1) + n_modes;
        let start = off;
        let gain_ranges = gains
            .iter()
            .map(|g| {
                let d = g.internal_dim(n_x);
                (d > 0).then(|| {
                    let r = off..off + d;
                    off += d;
                    r
                })
            })
            .collect();
        Self { n_x, n_modes, gain_ranges, n_gain: off - start, has_filter }
    }

    pub fn plant(&self) -> Range<usize> {
        0..self.n_x
    }

    /// 0-based mode.
    pub fn mode(&self, k: usize) -> Range<usize> {
        let s = self.n_x * (k + 1);
        s..s + self.n_x
    }

    pub fn eta(&self, k: usize) -> usize {
        self.n_x * (self.n_modes + 1) + k
    }

    pub fn etas(&self) -> Range<usize> {
        let s = self.eta(0);
        s..s + self.n_modes
    }

    pub fn gain_state(&self, k: usize) -> Option<Range<usize>> {
        self.gain_ranges[k].clone()
    }

    pub fn filter(&self) -> Option<Range<usize>> {
        self.has_filter.then(|| {
            let s = self.etas().end + self.n_gain;
            s..s + self.n_x
        })
    }

    pub fn sigma(&self) -> usize {
        self.dim() - 1
    }

    pub fn dim(&self) -> usize {
        self.n_x * (self.n_modes + 1) + self.n_modes + self.n_gain + if self.has_filter { self.n_x } else { 0 } + 1
    }

    /// Active mode (0-based) of a packed state.
    pub fn sigma_of(&self, q: &DVector<f64>) -> usize {
        q[self.sigma()].round() as usize - 1
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_x).map(|i| format!("x{}", i + 1)).collect();
        for k in 0..self.n_modes {
            names.extend((0..self.n_x).map(|i| format!("xhat{}_{}", k + 1, i + 1)));
        }
        names.extend((0..self.n_modes).map(|k| format!("eta{}", k + 1)));
        for (k, r) in self.gain_ranges.iter().enumerate() {
            if let Some(r) = r {
                let mut idx = 0;
                for i in 0..self.n_x {
                    for j in i..self.n_x {
                        names.push(format!("P{}_{}{}", k + 1, i + 1, j + 1));
                        idx += 1;
                    }
                }
                debug_assert_eq!(idx, r.len());
            }
        }
        if self.has_filter {
            names.extend((0..self.n_x).map(|i| format!("xf_{}", i + 1)));
        }
        names.push("sigma".into());
        names
    }

    pub fn unpack(&self, q: &DVector<f64>) -> SupervisorState {
        SupervisorState {
            x: q.rows_range(self.plant()).into_owned(),
            xhat: (0..self.n_modes).map(|k| q.rows_range(self.mode(k)).into_owned()).collect(),
            eta: q.rows_range(self.etas()).iter().copied().collect(),
            sigma: self.sigma_of(q),
            gain_states: (0..self.n_modes)
                .map(|k| self.gain_state(k).map_or_else(Vec::new, |r| q.as_slice()[r].to_vec()))
                .collect(),
            xf: self.filter().map(|r| q.rows_range(r).into_owned()),
        }
    }

    pub fn pack(&self, s: &SupervisorState) -> DVector<f64> {
        let mut q = DVector::zeros(self.dim());
        q.rows_range_mut(self.plant()).copy_from(&s.x);
        for k in 0..self.n_modes {
            q.rows_range_mut(self.mode(k)).copy_from(&s.xhat[k]);
            q[self.eta(k)] = s.eta[k];
            if let Some(r) = self.gain_state(k) {
                q.as_mut_slice()[r].copy_from_slice(&s.gain_states[k]);
            }
        }
        if let (Some(r), Some(xf)) = (self.filter(), &s.xf) {
            q.rows_range_mut(r).copy_from(xf);
        }
        q[self.sigma()] = (s.sigma + 1) as f64;
        q
    }
}

/// Plant, N+1 observer modes, monitors and selection signal as one hybrid system.
pub struct MultiObserver {
    plant: Arc<dyn Plant>,
    model: Arc<PlantCopy>,
    gains: Vec<GainProvider>,
    cfg: SupervisorConfig,
    signals: SignalBundle,
    layout: StateLayout,
}

/// Per-mode quantities evaluated at one instant.
struct ModeEval {
    y: DVector<f64>,
    u: DVector<f64>,
    innovations: Vec<DVector<f64>>,
    gains: Vec<DMatrix<f64>>,
    /// Jacobians for modes with a time-varying gain.
    jac: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>>,
}

/// Builds the multi-observer. Mode 1 is the nominal observer; all modes must
/// share the same observer structure.
pub fn assemble(
    plant: Arc<dyn Plant>,
    modes: Vec<ObserverMode>,
    cfg: SupervisorConfig,
    signals: SignalBundle,
) -> Result<MultiObserver, SupervisorError> {
    let mismatch = |m: String| Err(SupervisorError::DimensionMismatch(m));
    if modes.len() < 2 {
        return Err(SupervisorError::InvalidConfig(format!(
            "at least two modes (nominal plus one additional) are required, got {}",
            modes.len()
        )));
    }
    let model = modes[0].model.clone();
    if modes.iter().any(|m| !Arc::ptr_eq(&m.model, &model)) {
        return Err(SupervisorError::InvalidConfig("all modes must share the nominal observer structure".into()));
    }
    let (n_x, n_y) = (plant.n_x(), plant.n_y());
    if model.n_x() != n_x || model.n_y() != n_y {
        return mismatch("observer structure does not match the plant".into());
    }
    for (k, m) in modes.iter().enumerate() {
        match &m.gain {
            GainProvider::Constant(l) if l.shape() != (n_x, n_y) => {
                return mismatch(format!("gain of mode {} is {:?}, expected ({n_x}, {n_y})", k + 1, l.shape()));
            }
            GainProvider::Ekf(p) if p.q.shape() != (n_x, n_x) || p.p0.shape() != (n_x, n_x) || p.r.shape() != (n_y, n_y) => {
                return mismatch(format!("EKF matrices of mode {} have wrong shapes", k + 1));
            }
            _ => {}
        }
    }
    if signals.u.dim() != plant.n_u() || signals.v.dim() != plant.n_v() || signals.w.dim() != plant.n_w() {
        return mismatch("signal dimensions do not match the plant".into());
    }
    cfg.validate(n_x, n_y)?;
    let gains: Vec<GainProvider> = modes.into_iter().map(|m| m.gain).collect();
    let layout = StateLayout::new(n_x, &gains, cfg.zeta.is_some());
    Ok(MultiObserver { plant, model, gains, cfg, signals, layout })
}

impl MultiObserver {
    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn config(&self) -> &SupervisorConfig {
        &self.cfg
    }

    pub fn gains(&self) -> &[GainProvider] {
        &self.gains
    }

    pub fn plant(&self) -> &Arc<dyn Plant> {
        &self.plant
    }

    /// Packs an initial condition; `sigma0` is 1-based. EKF covariances start
    /// at their configured `P₀`, the filtered estimate at `x̂_σ`.
    pub fn initial_state(
        &self,
        x0: &DVector<f64>,
        xhat0: &[DVector<f64>],
        eta0: &[f64],
        sigma0: usize,
    ) -> Result<DVector<f64>, SupervisorError> {
        let n = self.layout.n_modes;
        if xhat0.len() != n || eta0.len() != n {
            return Err(SupervisorError::DimensionMismatch(format!("expected {n} mode initial conditions")));
        }
        if x0.len() != self.layout.n_x || xhat0.iter().any(|v| v.len() != self.layout.n_x) {
            return Err(SupervisorError::DimensionMismatch("initial state length".into()));
        }
        if !(1..=n).contains(&sigma0) {
            return Err(SupervisorError::InvalidConfig(format!("sigma(0,0) must be in 1..={n}")));
        }
        if eta0.iter().any(|&e| !(e >= 0.0)) {
            return Err(SupervisorError::InvalidConfig("initial monitors must be nonnegative".into()));
        }
        let s = SupervisorState {
            x: x0.clone(),
            xhat: xhat0.to_vec(),
            eta: eta0.to_vec(),
            sigma: sigma0 - 1,
            gain_states: self
                .gains
                .iter()
                .map(|g| match g {
                    GainProvider::Constant(_) => Vec::new(),
                    GainProvider::Ekf(p) => pack_symmetric(&p.p0),
                })
                .collect(),
            xf: self.cfg.zeta.map(|_| xhat0[sigma0 - 1].clone()),
        };
        Ok(self.layout.pack(&s))
    }

    fn evaluate(&self, t: f64, s: &SupervisorState) -> ModeEval {
        let u = self.signals.u.eval(t);
        let w = self.signals.w.eval(t);
        let y = self.plant.output(&s.x, &u, &w);
        let n_x = self.layout.n_x;
        let mut innovations = Vec::with_capacity(self.gains.len());
        let mut gains = Vec::with_capacity(self.gains.len());
        let mut jac = Vec::with_capacity(self.gains.len());
        for (k, g) in self.gains.iter().enumerate() {
            let xhat = &s.xhat[k];
            innovations.push(&y - self.model.output(xhat, &u));
            match g {
                GainProvider::Constant(l) => {
                    gains.push(l.clone());
                    jac.push(None);
                }
                GainProvider::Ekf(p) => {
                    let (a, c) = self.model.jacobians(xhat, &u);
                    let cov = unpack_symmetric(&s.gain_states[k], n_x);
                    let r_inv = p.r.clone().try_inverse().expect("EKF R must be invertible");
                    gains.push(&cov * c.transpose() * r_inv);
                    jac.push(Some((a, c)));
                }
            }
        }
        ModeEval { y, u, innovations, gains, jac }
    }

    fn rates_from(&self, s: &SupervisorState, ev: &ModeEval) -> Vec<f64> {
        (0..self.gains.len())
            .map(|k| {
                let yhat = &ev.y - &ev.innovations[k];
                eta_flow(s.eta[k], &ev.gains[k], &ev.y, &yhat, &self.cfg)
            })
            .collect()
    }

    /// Monitor rates `g_k` of every mode at `(t, q)`.
    pub fn eta_rates(&self, t: f64, q: &DVector<f64>) -> Vec<f64> {
        let s = self.layout.unpack(q);
        let ev = self.evaluate(t, &s);
        self.rates_from(&s, &ev)
    }

    /// Gain of every mode at `(t, q)`.
    pub fn current_gains(&self, t: f64, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let s = self.layout.unpack(q);
        self.evaluate(t, &s).gains
    }

    /// Measured output `y(t)` for plant state in `q`.
    pub fn measured_output(&self, t: f64, q: &DVector<f64>) -> DVector<f64> {
        let x = q.rows_range(self.layout.plant()).into_owned();
        self.plant.output(&x, &self.signals.u.eval(t), &self.signals.w.eval(t))
    }

    /// Jump map on an unpacked state; also returns the switch record.
    pub fn apply_jump(&self, t: f64, s: &SupervisorState) -> (SupervisorState, SwitchEvent) {
        let ev = self.evaluate(t, s);
        let rates = self.rates_from(s, &ev);
        let sigma_plus = select_mode(&s.eta, s.sigma, &rates, self.cfg.tie_break, t);
        let next = apply_reset(s, sigma_plus, self.cfg.reset, self.cfg.epsilon);
        let event = SwitchEvent {
            time: HybridTime::new(t, 0),
            sigma_before: s.sigma + 1,
            sigma_after: sigma_plus + 1,
            eta_before: s.eta.clone(),
            eta_after: next.eta.clone(),
            reset_applied: self.cfg.reset,
        };
        (next, event)
    }

    /// Switch records recovered from the jump events of a solved arc.
    pub fn switch_log(&self, arc: &HybridArc) -> Vec<SwitchEvent> {
        arc.jump_events
            .iter()
            .map(|e| {
                let pre = self.layout.unpack(&e.pre);
                let post = self.layout.unpack(&e.post);
                SwitchEvent {
                    time: e.time,
                    sigma_before: pre.sigma + 1,
                    sigma_after: post.sigma + 1,
                    eta_before: pre.eta,
                    eta_after: post.eta,
                    reset_applied: self.cfg.reset,
                }
            })
            .collect()
    }
}

impl HybridSystem for MultiObserver {
    fn state_dim(&self) -> usize {
        self.layout.dim()
    }

    fn flow(&self, t: f64, q: &DVector<f64>) -> DVector<f64> {
        let s = self.layout.unpack(q);
        let ev = self.evaluate(t, &s);
        let v = self.signals.v.eval(t);
        let mut dq = DVector::zeros(self.layout.dim());
        dq.rows_range_mut(self.layout.plant()).copy_from(&self.plant.dynamics(&s.x, &ev.u, &v));
        let rates = self.rates_from(&s, &ev);
        for k in 0..self.gains.len() {
            let injection = &ev.gains[k] * &ev.innovations[k];
            dq.rows_range_mut(self.layout.mode(k)).copy_from(&self.model.dynamics(&s.xhat[k], &ev.u, &injection));
            dq[self.layout.eta(k)] = rates[k];
            if let (GainProvider::Ekf(p), Some((a, c)), Some(r)) = (&self.gains[k], &ev.jac[k], self.layout.gain_state(k)) {
                let cov = unpack_symmetric(&s.gain_states[k], self.layout.n_x);
                let (p_dot, _) = ekf_gain_flow(p, &cov, a, c);
                dq.as_mut_slice()[r].copy_from_slice(&pack_symmetric(&p_dot));
            }
        }
        if let (Some(r), Some(zeta), Some(xf)) = (self.layout.filter(), self.cfg.zeta, &s.xf) {
            dq.rows_range_mut(r).copy_from(&((&s.xhat[s.sigma] - xf) * zeta));
        }
        dq
    }

    fn jump(&self, t: f64, q: &DVector<f64>) -> DVector<f64> {
        let s = self.layout.unpack(q);
        let (next, _) = self.apply_jump(t, &s);
        self.layout.pack(&next)
    }

    fn guard(&self, _t: f64, q: &DVector<f64>) -> f64 {
        let etas = &q.as_slice()[self.layout.etas()];
        jump_guard(etas, self.layout.sigma_of(q))
    }

    /// Jumps inside the jump set, except on exact ties (within [`TIE_TOL`])
    /// from which flow stays in the flow set: there the solution keeps
    /// flowing unless a tied mode has a strictly smaller monitor rate.
    fn must_jump(&self, t: f64, q: &DVector<f64>) -> bool {
        let g = self.guard(t, q);
        if g < -TIE_TOL {
            return true;
        }
        if g > TIE_TOL {
            return false;
        }
        let sigma = self.layout.sigma_of(q);
        let etas = &q.as_slice()[self.layout.etas()];
        let rates = self.eta_rates(t, q);
        (0..etas.len()).any(|k| k != sigma && etas[k] <= etas[sigma] + TIE_TOL && rates[k] < rates[sigma])
    }

    fn check_state(&self, _t: f64, q: &DVector<f64>) -> Result<(), String> {
        for (k, g) in self.gains.iter().enumerate() {
            if let (GainProvider::Ekf(p), Some(r)) = (g, self.layout.gain_state(k)) {
                let cov = unpack_symmetric(&q.as_slice()[r], self.layout.n_x);
                let lm = lambda_max(&cov);
                if !(lm <= p.ceiling) {
                    return Err(format!(
                        "mode {}: {}",
                        k + 1,
                        crate::observer::ObserverError::CovarianceDivergence { lambda_max: lm, ceiling: p.ceiling }
                    ));
                }
            }
        }
        Ok(())
    }
}
