use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{config::NoiseSpec, PerMode, RunOutput, ScenarioConfig, ScenarioError};
use crate::metrics::{improvement_pct, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloSpec {
    pub runs: usize,
    pub seed: u64,
    /// Overrides the configured reset rule.
    pub reset: Option<bool>,
}

/// One successful run of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub run: usize,
    pub xhat0: Vec<f64>,
    pub noise_seed: Option<u64>,
    pub report: RunReport,
    pub max_eta_excess: f64,
    pub min_eta: f64,
}

#[derive(Debug)]
pub struct MonteCarloResult {
    pub reset: bool,
    pub rows: Vec<McRow>,
    pub failures: Vec<(usize, ScenarioError)>,
}

/// Thread pool honoring `HMO_THREADS`.
pub fn thread_pool() -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("HMO_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()).filter(|&n| n > 0) {
        b = b.num_threads(n);
    }
    b.build().expect("thread pool")
}

/// Configuration of run `i`: the shared estimate is drawn from the box and,
/// if enabled, the noise seed is redrawn. Depends only on `(seed, i)`.
pub fn run_config_for(cfg: &ScenarioConfig, spec: &MonteCarloSpec, i: usize) -> Result<(ScenarioConfig, Vec<f64>, Option<u64>), ScenarioError> {
    let mc = cfg.montecarlo.as_ref().ok_or_else(|| ScenarioError::config("montecarlo", "section required for montecarlo"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(i as u64);
    let xhat0: Vec<f64> = mc.xhat_box.iter().map(|b| if b[0] == b[1] { b[0] } else { rng.random_range(b[0]..b[1]) }).collect();
    let noise_seed = rng.next_u64();
    let mut c = cfg.clone();
    c.initial.xhat = PerMode::Shared(xhat0.clone());
    if let Some(r) = spec.reset {
        c.supervisor.reset = r as u8;
    }
    let mut used_seed = None;
    if let NoiseSpec::PiecewiseLinear { seed, .. } = &mut c.signals.noise {
        if mc.vary_noise {
            *seed = noise_seed;
        }
        used_seed = Some(*seed);
    }
    Ok((c, xhat0, used_seed))
}

fn row(run: usize, xhat0: Vec<f64>, noise_seed: Option<u64>, out: RunOutput) -> McRow {
    McRow { run, xhat0, noise_seed, max_eta_excess: out.max_eta_excess(), min_eta: out.min_eta(), report: out.report }
}

/// Runs a batch in parallel; failed runs are collected and the batch continues.
pub fn montecarlo(cfg: &ScenarioConfig, spec: &MonteCarloSpec) -> Result<MonteCarloResult, ScenarioError> {
    if spec.runs == 0 {
        return Err(ScenarioError::config("runs", "must be at least 1"));
    }
    // Surface configuration problems once, up front.
    let (first, _, _) = run_config_for(cfg, spec, 0)?;
    super::Scenario::from_config(first)?.system()?;

    let results: Vec<(usize, Result<McRow, ScenarioError>)> = thread_pool().install(|| {
        (0..spec.runs)
            .into_par_iter()
            .map(|i| {
                let r = run_config_for(cfg, spec, i).and_then(|(c, xh, ns)| super::run_config(&c).map(|o| row(i, xh, ns, o)));
                (i, r)
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!("run {i} failed: {e}");
                failures.push((i, e));
            }
        }
    }
    Ok(MonteCarloResult { reset: spec.reset.unwrap_or(cfg.reset()), rows, failures })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mae_nominal: f64,
    pub mae_sigma: f64,
    pub rmse_nominal: f64,
    pub rmse_sigma: f64,
}

impl Aggregate {
    pub fn improvement_mae_pct(&self) -> f64 {
        improvement_pct(self.mae_nominal, self.mae_sigma)
    }
    pub fn improvement_rmse_pct(&self) -> f64 {
        improvement_pct(self.rmse_nominal, self.rmse_sigma)
    }
}

impl MonteCarloResult {
    /// Averages over successful runs; improvements are taken on the averages.
    pub fn aggregate(&self) -> Aggregate {
        let n = self.rows.len().max(1) as f64;
        let mean = |f: fn(&RunReport) -> f64| self.rows.iter().map(|r| f(&r.report)).sum::<f64>() / n;
        Aggregate {
            mae_nominal: mean(|r| r.mae_nominal),
            mae_sigma: mean(|r| r.mae_sigma),
            rmse_nominal: mean(|r| r.rmse_nominal),
            rmse_sigma: mean(|r| r.rmse_sigma),
        }
    }

    pub fn csv_header() -> Vec<String> {
        let mut h = vec!["run".to_string(), "noise_seed".into()];
        h.extend(RunReport::csv_header().iter().map(|s| s.to_string()));
        h.extend(["max_eta_excess".into(), "min_eta".into(), "xhat0".into()]);
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut v = vec![r.run.to_string(), r.noise_seed.map_or(String::new(), |s| s.to_string())];
                v.extend(r.report.csv_row());
                v.push(r.max_eta_excess.to_string());
                v.push(r.min_eta.to_string());
                v.push(r.xhat0.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "));
                v
            })
            .collect()
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), ScenarioError> {
        let err = |e: csv::Error| ScenarioError::Output(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(Self::csv_header()).map_err(err)?;
        for r in self.csv_rows() {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|e| ScenarioError::Output(e.to_string()))
    }
}

impl fmt::Display for MonteCarloResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.aggregate();
        writeln!(f, "{} runs, {} failed, reset r = {}", self.rows.len() + self.failures.len(), self.failures.len(), self.reset as u8)?;
        writeln!(f, "            e_1        e_sigma     % improv.")?;
        writeln!(f, "MAE   {:>11.4} {:>12.4} {:>12.2}", a.mae_nominal, a.mae_sigma, a.improvement_mae_pct())?;
        write!(f, "RMSE  {:>11.4} {:>12.4} {:>12.2}", a.rmse_nominal, a.rmse_sigma, a.improvement_rmse_pct())?;
        for (i, e) in &self.failures {
            write!(f, "\nrun {i}: {e}")?;
        }
        Ok(())
    }
}
