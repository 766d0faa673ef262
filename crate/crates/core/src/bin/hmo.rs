use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hmo_core::gain_design::{read_scenario_bank, write_gain_bank};
use hmo_core::scenario::{
    design_gains, montecarlo, render_svg, verify_assumptions, write_trace_file, MonteCarloSpec, Scenario, ScenarioConfig,
    ScenarioError,
};

/// Hybrid multi-observer simulations.
#[derive(Parser)]
#[command(name = "hmo", version)]
struct Cli {
    /// Turn failed checks into exit code 4.
    #[arg(long, global = true)]
    check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write its trace.
    Run {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also render error, cost and mode plots.
        #[arg(long)]
        svg: bool,
    },
    /// Batch of runs over random initial estimates.
    Montecarlo {
        config: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
        reset: Option<u8>,
        /// Per-run CSV table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nominal-observer feasibility and monitor-rate checks.
    VerifyAssumptions { config: PathBuf },
    /// Min-max design of an additional gain over a scenario bank.
    DesignGains {
        config: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, default_value = "gains.csv")]
        out: PathBuf,
    },
}

fn check(enabled: bool, ok: bool, what: &str) -> Result<(), ScenarioError> {
    if enabled && !ok {
        Err(ScenarioError::Check(what.to_string()))
    } else {
        Ok(())
    }
}

fn execute(cli: Cli) -> Result<(), ScenarioError> {
    match cli.command {
        Command::Run { config, out, svg } => {
            let scn = Scenario::load(&config)?;
            let res = scn.run()?;
            std::fs::create_dir_all(&out).map_err(|e| ScenarioError::Output(format!("{}: {e}", out.display())))?;
            write_trace_file(&out.join("trace.csv"), &res.arc, &res.system, &res.report)?;
            if svg {
                let text = render_svg(&res.arc, &res.system, &res.report);
                std::fs::write(out.join("plot.svg"), text).map_err(|e| ScenarioError::Output(e.to_string()))?;
            }
            println!("{}", res.report);
            let excess = res.max_eta_excess();
            println!("max eta_sigma - eta_1 = {excess:.3e}");
            check(cli.check, excess <= 1e-9 && res.report.max_cost_excess() <= 1e-9, "monitor dominance violated")
        }
        Command::Montecarlo { config, runs, seed, reset, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let res = montecarlo(&cfg, &MonteCarloSpec { runs, seed, reset: reset.map(|r| r == 1) })?;
            if let Some(path) = out {
                res.write_csv(&path)?;
            }
            println!("{res}");
            let dominated = res.rows.iter().all(|r| r.max_eta_excess <= 1e-9);
            check(cli.check, res.failures.is_empty() && dominated, "failed runs or monitor dominance violated")
        }
        Command::VerifyAssumptions { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            let report = verify_assumptions(&cfg)?;
            println!("{report}");
            check(cli.check, report.passed(), "assumption check failed")
        }
        Command::DesignGains { config, bank, out } => {
            let scn = Scenario::load(&config)?;
            let bank = read_scenario_bank(&bank, scn.plant.as_ref())?;
            let res = design_gains(&scn, bank)?;
            write_gain_bank(&out, &[(res.gain.clone(), res.cost)])?;
            for (g, c) in &res.initial {
                println!("initial {:?}: worst-case cost {c:.6e}", g.as_slice());
            }
            println!("designed {:?}: worst-case cost {:.6e}", res.gain.as_slice(), res.cost);
            let ok = res.nominal_cost.is_none_or(|n| res.cost <= n);
            if let Some(n) = res.nominal_cost {
                println!("nominal worst-case cost {n:.6e}");
            }
            check(cli.check, ok, "designed gain is worse than the nominal gain")
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hmo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
