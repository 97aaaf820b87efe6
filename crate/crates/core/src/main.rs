use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use idleq::fluid_model::FluidModel;
use idleq::harness::{self, ExperimentConfig, HarnessError, PolicyRecord};

#[derive(Parser)]
#[command(
    name = "idleq",
    version,
    about = "Fluid control, simulation and fluid-model integration for many-server queues with abandonment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Pistar,
    Nonidle,
    Rest,
}

impl PolicyArg {
    fn record(self) -> PolicyRecord {
        match self {
            PolicyArg::Pistar => PolicyRecord::Pistar,
            PolicyArg::Nonidle => PolicyRecord::Nonidle,
            PolicyArg::Rest => PolicyRecord::Rest { rest_duration: None },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StartArg {
    Empty,
    Invariant,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fluid control problem and print the cost breakdown.
    SolveFluid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the N-server system and report long-run cost estimates.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "pistar")]
        policy: PolicyArg,
        /// Number of servers; defaults to every value in the config.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        burn_in: Option<f64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the fluid model and write its trajectory.
    FluidIntegrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "pistar")]
        policy: PolicyArg,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        dx: Option<f64>,
        /// Initial state: empty, or the invariant state of the optimal design.
        #[arg(long, value_enum, default_value = "empty")]
        start: StartArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (N, policy) pair of the config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact M/M/N+M figures under thinning at p*.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        /// Admission probability; defaults to p*.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn cli_error(field: &str, message: String) -> HarnessError {
    HarnessError::Config { field: field.into(), line: None, message }
}

fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    ExperimentConfig::load(path)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::SolveFluid { config, out } => {
            let cfg = load(&config)?;
            let design = harness::solve_design(&cfg)?;
            print!("{}", harness::design_table(&cfg, &design)?);
            if let Some(path) = out {
                harness::write_design_csv(File::create(path)?, &cfg, &design)?;
            }
        }
        Command::Simulate { config, policy, n, horizon, burn_in, reps, seed, out } => {
            let mut cfg = load(&config)?;
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            if let Some(b) = burn_in {
                cfg.burn_in = b;
            }
            if let Some(r) = reps {
                if r == 0 {
                    return Err(cli_error("--reps", "at least one replication is required".into()));
                }
                cfg.replications = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if !(cfg.horizon > cfg.burn_in && cfg.burn_in >= 0.0) {
                return Err(cli_error(
                    "--horizon",
                    format!("horizon {} must exceed burn-in {} >= 0", cfg.horizon, cfg.burn_in),
                ));
            }
            let ns = match n {
                Some(0) => return Err(cli_error("--n", "at least one server is required".into())),
                Some(n) => vec![n],
                None => cfg.n_values.clone(),
            };
            let design = harness::solve_design(&cfg)?;
            let record = policy.record();
            let rows = ns
                .into_iter()
                .map(|n| harness::run_cell(&cfg, &design, n, &record, true))
                .collect::<Result<Vec<_>, _>>()?;
            harness::write_simulation_csv(output(&out)?, &rows)?;
        }
        Command::FluidIntegrate { config, policy, horizon, dx, start, out } => {
            let cfg = load(&config)?;
            let horizon = horizon.unwrap_or(cfg.fluid_horizon);
            let dx = dx.unwrap_or(cfg.dx);
            if !(dx > 0.0 && dx.is_finite()) {
                return Err(cli_error("--dx", format!("grid spacing {dx} must be positive")));
            }
            if !(horizon >= 0.0 && horizon.is_finite()) {
                return Err(cli_error("--horizon", format!("horizon {horizon} must be >= 0")));
            }
            let design = harness::solve_design(&cfg)?;
            let record = policy.record();
            let traj = match start {
                StartArg::Empty => harness::integrate_fluid(&cfg, &design, &record, horizon, dx)?,
                StartArg::Invariant => {
                    let model = FluidModel::new(&cfg.service, &cfg.patience, dx)?;
                    let (rate, rule) = harness::fluid_policy(&record, &cfg, &design);
                    let p = rate / cfg.lambda;
                    let b = design.b_star.min(idleq::fluid_control::busy_limit(cfg.lambda, cfg.mu(), p));
                    let init = model.invariant_state(b, p, cfg.lambda)?;
                    model.integrate(&init, horizon, rate, rule, Some(&cfg.cost))?
                }
            };
            harness::write_trajectory_csv(output(&out)?, &traj)?;
        }
        Command::Sweep { config, reps, seed, out } => {
            let mut cfg = load(&config)?;
            if let Some(r) = reps {
                if r == 0 {
                    return Err(cli_error("--reps", "at least one replication is required".into()));
                }
                cfg.replications = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (design, rows) = harness::convergence_sweep(&cfg, true)?;
            harness::write_sweep_csv(output(&out)?, &design, &rows)?;
        }
        Command::Oracle { config, n, p, out } => {
            let cfg = load(&config)?;
            let p = match p {
                Some(p) if !(p > 0.0 && p <= 1.0) => {
                    return Err(cli_error("--p", format!("admission probability {p} outside (0, 1]")))
                }
                Some(p) => p,
                None => harness::solve_design(&cfg)?.p_star,
            };
            let ns = match n {
                Some(0) => return Err(cli_error("--n", "at least one server is required".into())),
                Some(n) => vec![n],
                None => cfg.n_values.clone(),
            };
            let rows = ns.into_iter().map(|n| harness::oracle_for(&cfg, n, p)).collect::<Result<Vec<_>, _>>()?;
            harness::write_oracle_csv(output(&out)?, &rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("idleq: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
