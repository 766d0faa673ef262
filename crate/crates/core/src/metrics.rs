//! Costs, error statistics and switching diagnostics over solved arcs.

use std::fmt;

use crate::hybrid::{HybridArc, HybridTime};
use crate::supervisor::{StateLayout, TIE_TOL};

/// Which estimate an error statistic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimate {
    Nominal,
    /// The active mode at each sample.
    Sigma,
    /// A fixed mode, 1-based.
    Mode(usize),
}

/// Cumulative integral of a per-sample integrand, trapezoid rule within flow
/// intervals; jumps carry the running value over.
fn hybrid_integral(arc: &HybridArc, integrand: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(arc.samples.len());
    let mut acc = 0.0;
    let mut prev = None;
    for (i, s) in arc.samples.iter().enumerate() {
        let f = integrand(i);
        if let Some((tp, jp, fp)) = prev {
            if s.time.j == jp {
                acc += 0.5 * (s.time.t - tp) * (f + fp);
            }
        }
        out.push(acc);
        prev = Some((s.time.t, s.time.j, f));
    }
    out
}

/// `J_σ`: integral of the active monitor along the arc.
pub fn cost_sigma(arc: &HybridArc, layout: &StateLayout) -> Vec<f64> {
    hybrid_integral(arc, |i| {
        let q = &arc.samples[i].state;
        q[layout.eta(layout.sigma_of(q))]
    })
}

/// `J₁`: integral of the nominal monitor along the arc.
pub fn cost_nominal(arc: &HybridArc, layout: &StateLayout) -> Vec<f64> {
    hybrid_integral(arc, |i| arc.samples[i].state[layout.eta(0)])
}

/// Euclidean norm of `x − x̂` for the chosen estimate at every sample.
pub fn error_norms(arc: &HybridArc, layout: &StateLayout, which: Estimate) -> Vec<f64> {
    arc.samples
        .iter()
        .map(|s| {
            let q = &s.state;
            let k = match which {
                Estimate::Nominal => 0,
                Estimate::Sigma => layout.sigma_of(q),
                Estimate::Mode(k) => k - 1,
            };
            let x = q.rows_range(layout.plant());
            let xh = q.rows_range(layout.mode(k));
            (x - xh).norm()
        })
        .collect()
}

/// Indices of samples counted as flow samples: pre-jump samples are dropped so
/// that every jump instant is counted once, with the post-jump selection.
fn flow_sample_indices(arc: &HybridArc) -> impl Iterator<Item = usize> + '_ {
    let n = arc.samples.len();
    (0..n).filter(move |&i| i + 1 >= n || arc.samples[i + 1].time.j == arc.samples[i].time.j)
}

/// `(MAE, RMSE)` of `|e|` averaged over flow samples.
pub fn error_stats(arc: &HybridArc, layout: &StateLayout, which: Estimate) -> (f64, f64) {
    let norms = error_norms(arc, layout, which);
    stats_of(flow_sample_indices(arc).map(|i| norms[i]))
}

fn stats_of(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut abs, mut sq) = (0usize, 0.0, 0.0);
    for e in values {
        n += 1;
        abs += e.abs();
        sq += e * e;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    (abs / n as f64, (sq / n as f64).sqrt())
}

/// `100·(1 − σ/nominal)`; zero when the nominal metric is zero.
pub fn improvement_pct(nominal: f64, sigma: f64) -> f64 {
    if nominal == 0.0 {
        0.0
    } else {
        100.0 * (1.0 - sigma / nominal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwellDiagnostics {
    pub max_consecutive_jumps: usize,
    /// Shortest flow between two distinct jump instants; the arc length when
    /// fewer than two instants carry jumps.
    pub min_intercluster_flow: f64,
    pub cluster_count: usize,
}

/// Groups jump times into clusters of equal `t`, returning `(t, size)`.
pub fn jump_clusters(jump_times: &[f64]) -> Vec<(f64, usize)> {
    let mut clusters: Vec<(f64, usize)> = Vec::new();
    for &t in jump_times {
        match clusters.last_mut() {
            Some((tc, n)) if *tc == t => *n += 1,
            _ => clusters.push((t, 1)),
        }
    }
    clusters
}

pub fn dwell_from_times(jump_times: &[f64], horizon: f64) -> DwellDiagnostics {
    let clusters = jump_clusters(jump_times);
    let min_flow = clusters
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))))
        .unwrap_or(horizon);
    DwellDiagnostics {
        max_consecutive_jumps: clusters.iter().map(|c| c.1).max().unwrap_or(0),
        min_intercluster_flow: min_flow,
        cluster_count: clusters.len(),
    }
}

pub fn dwell_diagnostics(arc: &HybridArc) -> DwellDiagnostics {
    let times: Vec<f64> = arc.jump_events.iter().map(|e| e.time.t).collect();
    let horizon = match (arc.samples.first(), arc.samples.last()) {
        (Some(a), Some(b)) => b.time.t - a.time.t,
        _ => 0.0,
    };
    dwell_from_times(&times, horizon)
}

/// Average dwell-time check `j′ − j ≤ (t′ − t)/τ + 2` over all ordered pairs
/// of domain points. The binding pairs run from just before one jump to just
/// after a later one, so it reduces to `max_{a≤b} f_b − f_a ≤ 1` with
/// `f_n = n − t_n/τ`.
pub fn average_dwell_time_holds(jump_times: &[f64], tau: f64) -> bool {
    let mut min_f = f64::INFINITY;
    for (n, &t) in jump_times.iter().enumerate() {
        let f = n as f64 - t / tau;
        min_f = min_f.min(f);
        if f - min_f > 1.0 + 1e-12 {
            return false;
        }
    }
    true
}

/// Earliest sample where the active monitor is strictly below the nominal one.
pub fn strict_improvement_time(arc: &HybridArc, layout: &StateLayout) -> Option<HybridTime> {
    arc.samples.iter().find_map(|s| {
        let q = &s.state;
        (q[layout.eta(layout.sigma_of(q))] < q[layout.eta(0)] - TIE_TOL).then_some(s.time)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub times: Vec<HybridTime>,
    pub j_sigma_trace: Vec<f64>,
    pub j_1_trace: Vec<f64>,
    pub mae_nominal: f64,
    pub mae_sigma: f64,
    pub rmse_nominal: f64,
    pub rmse_sigma: f64,
    pub improvement_mae_pct: f64,
    pub improvement_rmse_pct: f64,
    pub switch_count: usize,
    pub min_intercluster_flow: f64,
    pub max_consecutive_jumps: usize,
    pub strict_improvement_time: Option<HybridTime>,
}

impl RunReport {
    pub fn from_arc(arc: &HybridArc, layout: &StateLayout) -> Self {
        let (mae_nominal, rmse_nominal) = error_stats(arc, layout, Estimate::Nominal);
        let (mae_sigma, rmse_sigma) = error_stats(arc, layout, Estimate::Sigma);
        let dwell = dwell_diagnostics(arc);
        Self {
            times: arc.samples.iter().map(|s| s.time).collect(),
            j_sigma_trace: cost_sigma(arc, layout),
            j_1_trace: cost_nominal(arc, layout),
            mae_nominal,
            mae_sigma,
            rmse_nominal,
            rmse_sigma,
            improvement_mae_pct: improvement_pct(mae_nominal, mae_sigma),
            improvement_rmse_pct: improvement_pct(rmse_nominal, rmse_sigma),
            switch_count: arc.jump_count(),
            min_intercluster_flow: dwell.min_intercluster_flow,
            max_consecutive_jumps: dwell.max_consecutive_jumps,
            strict_improvement_time: strict_improvement_time(arc, layout),
        }
    }

    pub fn csv_header() -> &'static [&'static str] {
        &[
            "mae_nominal",
            "mae_sigma",
            "rmse_nominal",
            "rmse_sigma",
            "improvement_mae_pct",
            "improvement_rmse_pct",
            "switch_count",
            "min_intercluster_flow",
            "max_consecutive_jumps",
            "strict_improvement_t",
            "strict_improvement_j",
        ]
    }

    pub fn csv_row(&self) -> Vec<String> {
        let (st, sj) = match self.strict_improvement_time {
            Some(h) => (h.t.to_string(), h.j.to_string()),
            None => (String::new(), String::new()),
        };
        vec![
            self.mae_nominal.to_string(),
            self.mae_sigma.to_string(),
            self.rmse_nominal.to_string(),
            self.rmse_sigma.to_string(),
            self.improvement_mae_pct.to_string(),
            self.improvement_rmse_pct.to_string(),
            self.switch_count.to_string(),
            self.min_intercluster_flow.to_string(),
            self.max_consecutive_jumps.to_string(),
            st,
            sj,
        ]
    }

    /// Largest `J_σ − J₁` over the arc; nonpositive when costs are dominated.
    pub fn max_cost_excess(&self) -> f64 {
        self.j_sigma_trace
            .iter()
            .zip(&self.j_1_trace)
            .map(|(s, n)| s - n)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "             MAE          RMSE")?;
        writeln!(f, "nominal  {:>12.6} {:>12.6}", self.mae_nominal, self.rmse_nominal)?;
        writeln!(f, "sigma    {:>12.6} {:>12.6}", self.mae_sigma, self.rmse_sigma)?;
        writeln!(f, "improv.% {:>12.2} {:>12.2}", self.improvement_mae_pct, self.improvement_rmse_pct)?;
        writeln!(f, "switches: {}  max cascade: {}  min flow between switches: {:.6} s",
            self.switch_count, self.max_consecutive_jumps, self.min_intercluster_flow)?;
        if let (Some(js), Some(j1)) = (self.j_sigma_trace.last(), self.j_1_trace.last()) {
            writeln!(f, "J_sigma(T) = {js:.6}  J_1(T) = {j1:.6}")?;
        }
        match self.strict_improvement_time {
            Some(h) => write!(f, "strict improvement from {h}"),
            None => write!(f, "no strict improvement"),
        }
    }
}
