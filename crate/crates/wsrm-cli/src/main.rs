use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use wsrm::harness::{
    replay, run_experiment, ExperimentConfig, ExperimentReport, Execution, Manifest,
};
use wsrm::network::realize;
use wsrm::oracles::{grid_search, water_filling_with_floor, DEFAULT_GRID_POINTS};
use wsrm::rng::trial_seed;
use wsrm::spca::run;
use wsrm::subproblem::Method;

#[derive(Parser)]
#[command(name = "wsrm", version, about = "Multicell weighted sum-rate maximization by SPCA")]
struct Cli {
    /// more log output (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Overrides {
    /// base seed for trial seed derivation
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// gm or tree
    #[arg(long)]
    method: Option<Method>,
    /// floor on the SINR proxy v
    #[arg(long)]
    epsilon: Option<f64>,
    /// artifact directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// run trials on the calling thread
    #[arg(long)]
    sequential: bool,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            config.experiment.seed = s;
        }
        if let Some(t) = self.trials {
            config.experiment.trials = t;
        }
        if let Some(m) = self.method {
            config.spca.method = m;
        }
        if let Some(e) = self.epsilon {
            config.spca.epsilon = e;
        }
    }

    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo trials of one configuration
    Run {
        config: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// every point of the config's [sweep] axis
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// solve a conic program in the text format
    Solve {
        program: PathBuf,
        /// write the solution as JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// reference solutions
    #[command(subcommand)]
    Oracle(Oracle),
    /// re-run an artifact directory from its manifest and compare hashes
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value = "replay")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Oracle {
    /// water-filling over parallel channels
    Wf {
        /// comma-separated channel gains |h|^2
        #[arg(long, value_delimiter = ',', required = true)]
        gains: Vec<f64>,
        /// power budget in watts
        #[arg(long)]
        p_max: f64,
        /// keep every channel at SNR >= floor
        #[arg(long, default_value_t = 0.0)]
        floor: f64,
    },
    /// exhaustive power grid on a tiny single-antenna scenario, next to SPCA
    Grid {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// trial index under the base seed
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
        #[arg(long)]
        epsilon: Option<f64>,
    },
}

fn load(path: &Path, o: &Overrides) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    o.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn summarize(report: &ExperimentReport, out: &Path) {
    for (value, a) in &report.points {
        let at = value.map(|v| format!(" @ {v}")).unwrap_or_default();
        println!(
            "{}{at}: {} = {:.4} ± {:.4} bits/s/Hz over {}/{} trials, {} converged, {:.1} iterations",
            report.manifest.config.experiment.name,
            a.metric,
            a.mean_wsr,
            a.std_wsr,
            a.succeeded,
            a.trials,
            a.converged,
            a.mean_iterations
        );
    }
    println!("artifacts in {}", out.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, o } => {
            let mut c = load(&config, &o)?;
            if c.sweep.take().is_some() {
                log::warn!("ignoring [sweep] in {}; use `wsrm sweep`", config.display());
            }
            let report = run_experiment(&c, &o.out, o.execution())?;
            summarize(&report, &o.out);
        }
        Command::Sweep { config, o } => {
            let c = load(&config, &o)?;
            if c.sweep.is_none() {
                bail!("{} has no [sweep] section", config.display());
            }
            let report = run_experiment(&c, &o.out, o.execution())?;
            summarize(&report, &o.out);
        }
        Command::Solve { program, out } => {
            let text = std::fs::read_to_string(&program)
                .with_context(|| format!("reading {}", program.display()))?;
            let prog = conic::text::read_program(&text)
                .with_context(|| format!("parsing {}", program.display()))?;
            let sol = conic::solve(&prog, &conic::SolverSettings::default())?;
            let check = conic::residuals(&prog, &sol);
            let json = serde_json::json!({
                "status": sol.status.to_string(),
                "iterations": sol.iterations,
                "primal_objective": sol.primal_objective,
                "dual_objective": sol.dual_objective,
                "worst_residual": check.worst(),
                "x": sol.x,
                "y": sol.y,
            });
            let body = serde_json::to_string_pretty(&json)? + "\n";
            match out {
                Some(p) => std::fs::write(&p, body)?,
                None => print!("{body}"),
            }
            eprintln!("{} after {} iterations", sol.status, sol.iterations);
        }
        Command::Oracle(Oracle::Wf {
            gains,
            p_max,
            floor,
        }) => {
            let wf = water_filling_with_floor(&gains, p_max, floor)?;
            println!("{}", serde_json::to_string_pretty(&wf)?);
        }
        Command::Oracle(Oracle::Grid {
            config,
            seed,
            trial,
            points,
            epsilon,
        }) => {
            let mut c = ExperimentConfig::load(&config)?;
            if let Some(e) = epsilon {
                c.spca.epsilon = e;
            }
            let network = c.network.to_config()?;
            let seed = trial_seed(seed.unwrap_or(c.experiment.seed), trial);
            let (scenario, channels) = realize(&network, seed)?;
            let grid = grid_search(&channels, &scenario.assignment, &network, points)?;
            let spca = run(&scenario, &channels, &c.spca.options(false));
            let json = serde_json::json!({
                "seed": seed,
                "grid": grid,
                "spca_wsr": spca.as_ref().ok().map(|r| r.wsr),
                "spca_error": spca.as_ref().err().map(|e| e.to_string()),
            });
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        Command::Replay { manifest, out } => {
            let m = Manifest::load(&manifest)?;
            let report = replay(&m, &out, Execution::Parallel)?;
            if report.identical() {
                println!("replay identical: {} files", report.compared);
            } else {
                println!("replay differs in {} of {} files:", report.mismatched.len(), report.compared);
                for f in &report.mismatched {
                    println!("  {f}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
