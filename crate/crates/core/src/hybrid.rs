//! Fixed-step simulation of hybrid systems with inputs.
//!
//! A hybrid system flows according to `flow` while it is outside the jump set
//! and is reset by `jump` when it enters it. Solutions are sampled on a hybrid
//! time domain: every sample carries `(t, j)` where `t` is ordinary time and
//! `j` counts the jumps taken so far.
//!
//! Flow is integrated with classical RK4 at a fixed step. When the jump
//! predicate becomes true at the end of a step, the crossing is localized by
//! bisection on the sub-step length, so the reported event time is within
//! `event_tol` of the first instant the predicate holds.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::DVector;
use thiserror::Error;

/// Point of a hybrid time domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridTime {
    pub t: f64,
    pub j: usize,
}

impl HybridTime {
    pub fn new(t: f64, j: usize) -> Self {
        Self { t, j }
    }
}

impl PartialOrd for HybridTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.t.partial_cmp(&other.t)? {
            Ordering::Equal => Some(self.j.cmp(&other.j)),
            ord => Some(ord),
        }
    }
}

impl fmt::Display for HybridTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(t = {:.6}, j = {})", self.t, self.j)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("state became non-finite at {at}")]
    NonFiniteState { at: HybridTime },
    #[error("jump predicate switched on and off within one step ending at t = {t}; reduce the step")]
    StepTooLarge { t: f64 },
    #[error("more than {limit} consecutive jumps at t = {t}")]
    ZenoSuspected { t: f64, limit: usize },
    #[error("initial state or configuration invalid: {0}")]
    InvalidInput(String),
    #[error("model failure at {at}: {reason}")]
    Model { at: HybridTime, reason: String },
}

/// A hybrid system with its exogenous signals already bound in.
///
/// The guard is positive strictly inside the flow set, zero on the boundary and
/// negative inside the jump set. `must_jump` decides whether the solver has to
/// jump from a given state; the default is `guard <= 0`. Systems whose flow and
/// jump sets overlap on the boundary may override it to let solutions keep
/// flowing where flow is still possible.
pub trait HybridSystem: Send + Sync {
    fn state_dim(&self) -> usize;

    fn flow(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;

    fn jump(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;

    fn guard(&self, t: f64, x: &DVector<f64>) -> f64;

    fn must_jump(&self, t: f64, x: &DVector<f64>) -> bool {
        self.guard(t, x) <= 0.0
    }

    /// Called after every accepted flow step; an `Err` aborts the solve.
    fn check_state(&self, _t: f64, _x: &DVector<f64>) -> Result<(), String> {
        Ok(())
    }
}

type FlowFn = dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync;
type GuardFn = dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync;

/// Closure-backed [`HybridSystem`].
pub struct HybridSystemDef {
    pub state_dim: usize,
    pub flow_map: Box<FlowFn>,
    pub jump_map: Box<FlowFn>,
    pub guard: Box<GuardFn>,
}

impl HybridSystemDef {
    pub fn new(
        state_dim: usize,
        flow_map: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jump_map: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        guard: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            state_dim,
            flow_map: Box::new(flow_map),
            jump_map: Box::new(jump_map),
            guard: Box::new(guard),
        }
    }

    /// A system that only flows.
    pub fn flow_only(
        state_dim: usize,
        flow_map: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self::new(state_dim, flow_map, |_, x| x.clone(), |_, _| 1.0)
    }
}

impl HybridSystem for HybridSystemDef {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn flow(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.flow_map)(t, x)
    }

    fn jump(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.jump_map)(t, x)
    }

    fn guard(&self, t: f64, x: &DVector<f64>) -> f64 {
        (self.guard)(t, x)
    }
}

/// What to do when the jump predicate holds at a step's midpoint but at
/// neither of its ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrazingPolicy {
    /// Fail with [`SolveError::StepTooLarge`].
    #[default]
    Error,
    /// Localize the crossing inside the first half of the step.
    Localize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub step: f64,
    pub event_tol: f64,
    pub t_end: f64,
    pub max_jumps: usize,
    pub max_consecutive_jumps: usize,
    /// Bisection keeps refining past `event_tol` while the guard at the
    /// bracketing state is below `-guard_tol` and time resolution allows it.
    pub guard_tol: f64,
    pub grazing: GrazingPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            event_tol: 1e-10,
            t_end: 1.0,
            max_jumps: 1_000_000,
            max_consecutive_jumps: 4,
            guard_tol: 1e-10,
            grazing: GrazingPolicy::Error,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::InvalidInput(m.to_string()));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if !(self.event_tol > 0.0 && self.event_tol < self.step) {
            return bad("event_tol must lie in (0, step)");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive");
        }
        if self.max_jumps == 0 || self.max_consecutive_jumps == 0 {
            return bad("max_jumps and max_consecutive_jumps must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: HybridTime,
    pub state: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    /// Hybrid time of the pre-jump state.
    pub time: HybridTime,
    pub pre: DVector<f64>,
    pub post: DVector<f64>,
}

/// A solution sampled on its hybrid time domain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HybridArc {
    pub samples: Vec<Sample>,
    pub jump_events: Vec<JumpEvent>,
    /// Set when the solve stopped because `max_jumps` was reached.
    pub truncated: bool,
}

impl HybridArc {
    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.samples.last().map(|s| &s.state)
    }

    pub fn final_time(&self) -> Option<HybridTime> {
        self.samples.last().map(|s| s.time)
    }

    pub fn jump_count(&self) -> usize {
        self.jump_events.len()
    }

    /// Checks that consecutive samples advance in exactly one of `t` or `j`.
    pub fn is_valid_domain(&self) -> bool {
        self.samples.windows(2).all(|w| {
            let (a, b) = (w[0].time, w[1].time);
            (b.t > a.t && b.j == a.j) || (b.t == a.t && b.j == a.j + 1)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub state: DVector<f64>,
    pub t_event: f64,
    pub hit_guard: bool,
}

fn rk4_step<S: HybridSystem + ?Sized>(
    sys: &S,
    t: f64,
    x: &DVector<f64>,
    k1: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let k2 = sys.flow(t + 0.5 * h, &(x + k1 * (0.5 * h)));
    let k3 = sys.flow(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = sys.flow(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn all_finite(x: &DVector<f64>) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Shrinks `[lo, hi]` (sub-step lengths from `t`) until `hi` is the first
/// sub-step at which the system must jump, to within `event_tol`.
fn locate_crossing<S: HybridSystem + ?Sized>(
    sys: &S,
    t: f64,
    x: &DVector<f64>,
    k1: &DVector<f64>,
    mut hi: f64,
    mut x_hi: DVector<f64>,
    cfg: &SolverConfig,
) -> (f64, DVector<f64>) {
    let mut lo = 0.0;
    let resolution = 4.0 * f64::EPSILON * t.abs().max(1.0);
    for _ in 0..200 {
        let width = hi - lo;
        if width <= resolution {
            break;
        }
        if width <= cfg.event_tol && sys.guard(t + hi, &x_hi) >= -cfg.guard_tol {
            break;
        }
        let mid = lo + 0.5 * width;
        let x_mid = rk4_step(sys, t, x, k1, mid);
        if sys.must_jump(t + mid, &x_mid) {
            hi = mid;
            x_hi = x_mid;
        } else {
            lo = mid;
        }
    }
    (t + hi, x_hi)
}

/// Flows from `(t0, x0)` until `cfg.t_end` or the first time the jump
/// predicate holds. Every accepted step is passed to `record`.
fn flow_segment<S, R>(
    sys: &S,
    x0: &DVector<f64>,
    t0: f64,
    j: usize,
    cfg: &SolverConfig,
    mut record: R,
) -> Result<FlowOutcome, SolveError>
where
    S: HybridSystem + ?Sized,
    R: FnMut(f64, &DVector<f64>),
{
    let mut x = x0.clone();
    let mut t = t0;
    let mut f_cur = sys.flow(t, &x);
    let mut k = 0usize;
    loop {
        let remaining = cfg.t_end - t;
        if remaining <= 1e-12 * cfg.t_end.max(1.0) {
            return Ok(FlowOutcome { state: x, t_event: t, hit_guard: false });
        }
        k += 1;
        // Absolute step times avoid drift from repeated addition.
        let t_next = (t0 + k as f64 * cfg.step).min(cfg.t_end);
        let h = t_next - t;
        let x_next = rk4_step(sys, t, &x, &f_cur, h);
        if !all_finite(&x_next) {
            return Err(SolveError::NonFiniteState { at: HybridTime::new(t_next, j) });
        }

        if sys.must_jump(t_next, &x_next) {
            let (t_ev, x_ev) = locate_crossing(sys, t, &x, &f_cur, h, x_next, cfg);
            record(t_ev, &x_ev);
            return Ok(FlowOutcome { state: x_ev, t_event: t_ev, hit_guard: true });
        }

        let f_next = sys.flow(t_next, &x_next);
        // Cubic Hermite midpoint from the end-point derivatives.
        let x_mid_est = (&x + &x_next) * 0.5 + (&f_cur - &f_next) * (h / 8.0);
        if sys.must_jump(t + 0.5 * h, &x_mid_est) {
            let x_mid = rk4_step(sys, t, &x, &f_cur, 0.5 * h);
            if sys.must_jump(t + 0.5 * h, &x_mid) {
                match cfg.grazing {
                    GrazingPolicy::Error => return Err(SolveError::StepTooLarge { t: t_next }),
                    GrazingPolicy::Localize => {
                        let (t_ev, x_ev) =
                            locate_crossing(sys, t, &x, &f_cur, 0.5 * h, x_mid, cfg);
                        record(t_ev, &x_ev);
                        return Ok(FlowOutcome { state: x_ev, t_event: t_ev, hit_guard: true });
                    }
                }
            }
        }

        sys.check_state(t_next, &x_next)
            .map_err(|reason| SolveError::Model { at: HybridTime::new(t_next, j), reason })?;
        record(t_next, &x_next);
        t = t_next;
        x = x_next;
        f_cur = f_next;
    }
}

/// Integrates the flow from `(t0, state)` until `cfg.t_end` or a guard
/// crossing.
pub fn integrate_flow<S: HybridSystem + ?Sized>(
    sys: &S,
    state: &DVector<f64>,
    t0: f64,
    cfg: &SolverConfig,
) -> Result<FlowOutcome, SolveError> {
    flow_segment(sys, state, t0, 0, cfg, |_, _| {})
}

pub fn execute_jump<S: HybridSystem + ?Sized>(sys: &S, state: &DVector<f64>, t: f64) -> DVector<f64> {
    sys.jump(t, state)
}

/// Computes a maximal solution from `x0` on `[0, cfg.t_end]`.
pub fn solve<S: HybridSystem + ?Sized>(
    sys: &S,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<HybridArc, SolveError> {
    cfg.validate()?;
    if x0.len() != sys.state_dim() {
        return Err(SolveError::InvalidInput(format!(
            "initial state has length {}, system expects {}",
            x0.len(),
            sys.state_dim()
        )));
    }
    if !all_finite(x0) {
        return Err(SolveError::NonFiniteState { at: HybridTime::new(0.0, 0) });
    }

    let mut arc = HybridArc::default();
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut j = 0usize;
    arc.samples.push(Sample { time: HybridTime::new(t, j), state: x.clone() });

    loop {
        let mut cascade = 0usize;
        while sys.must_jump(t, &x) {
            if j >= cfg.max_jumps {
                arc.truncated = true;
                return Ok(arc);
            }
            cascade += 1;
            if cascade > cfg.max_consecutive_jumps {
                return Err(SolveError::ZenoSuspected { t, limit: cfg.max_consecutive_jumps });
            }
            let post = execute_jump(sys, &x, t);
            if !all_finite(&post) {
                return Err(SolveError::NonFiniteState { at: HybridTime::new(t, j + 1) });
            }
            arc.jump_events.push(JumpEvent {
                time: HybridTime::new(t, j),
                pre: x,
                post: post.clone(),
            });
            j += 1;
            arc.samples.push(Sample { time: HybridTime::new(t, j), state: post.clone() });
            x = post;
        }

        if cfg.t_end - t <= 1e-12 * cfg.t_end.max(1.0) {
            return Ok(arc);
        }

        let samples = &mut arc.samples;
        let outcome = flow_segment(sys, &x, t, j, cfg, |ts, xs| {
            samples.push(Sample { time: HybridTime::new(ts, j), state: xs.clone() });
        })?;
        t = outcome.t_event;
        x = outcome.state;
        if !outcome.hit_guard {
            return Ok(arc);
        }
    }
}
