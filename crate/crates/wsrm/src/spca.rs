//! The outer SPCA loop: channel-matched initialization, repeated subproblem
//! solves and `θ` updates until the weighted sum-rate settles.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use conic::{text, ConicSolver, InteriorPoint, SolverError, SolverSettings, Status};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::network::{Assignment, ChannelSet, NetworkConfig, Scenario};
use crate::rates::{
    check_feasibility, hg, interference, per_bs_power, weighted_sum_rate, BeamformerSet,
    LinkIndex, RateError,
};
use crate::subproblem::{
    build_subproblem, estimator_gap, extract_solution, link_weights, scale_weights, BuildError,
    Method, SpcaState, StateError, WeightVector,
};

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITERATIONS: usize = 50;
pub const DEFAULT_MARGIN: f64 = 0.01;
/// non-optimal inner solves with residuals at most this are accepted
pub const ACCEPT_RESIDUAL: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum SpcaError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: SolverError,
    },
    #[error(
        "the first subproblem is infeasible ({status}); the starting point from channel-matched \
         initialization does not satisfy v >= epsilon on every link{}",
        dump_note(.dump)
    )]
    InitialInfeasible {
        status: Status,
        dump: Option<PathBuf>,
    },
    #[error("iteration {iteration}: subproblem solve ended with {status} (residual {residual:.3e}){}", dump_note(.dump))]
    NotOptimal {
        iteration: usize,
        status: Status,
        residual: f64,
        dump: Option<PathBuf>,
    },
    #[error("writing subproblem dump: {0}")]
    Dump(#[from] io::Error),
    #[error("invalid option {field}: {reason}")]
    Option { field: &'static str, reason: String },
}

fn dump_note(dump: &Option<PathBuf>) -> String {
    match dump {
        Some(p) => format!("; program written to {}", p.display()),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    /// floor `v ≥ ε`
    pub epsilon: f64,
    /// stop when the relative WSR change drops below this
    pub tol: f64,
    pub max_iterations: usize,
    pub method: Method,
    /// the smallest scaled weight is `1 + margin`
    pub margin: f64,
    /// write every subproblem to `<dir>/iter_NNN.txt`
    pub dump_dir: Option<PathBuf>,
    /// record wall-clock seconds per iteration
    pub timing: bool,
    #[serde(skip)]
    pub solver: SolverSettings,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            epsilon: DEFAULT_EPSILON,
            tol: DEFAULT_TOL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            method: Method::default(),
            margin: DEFAULT_MARGIN,
            dump_dir: None,
            timing: false,
            solver: SolverSettings::default(),
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<(), SpcaError> {
        let bad = |field, reason: &str| {
            Err(SpcaError::Option {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", "must be positive");
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol", "must be positive");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max-iterations",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: String,
    pub iterations: usize,
    pub objective: f64,
    pub residual: f64,
}

/// One point of the trajectory. Iteration 0 is the initial beamformers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// true weighted sum-rate of the beams, bits/s/Hz
    pub wsr: f64,
    /// `Σ log2 r / s`, the rate the subproblem certifies; never above `wsr`
    pub surrogate: f64,
    pub powers: Vec<f64>,
    /// largest `|Im(h g)|` over links
    pub max_imag: f64,
    /// largest `G(ζ, v, θ) − √v·ζ` over links, at the `θ` of this solve
    pub tightness: f64,
    /// the objective as the method reads it
    pub objective: f64,
    pub solver: Option<SolverStats>,
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub epsilon: f64,
    pub tol: f64,
    pub termination: Termination,
    pub iterations: usize,
    pub wsr: f64,
    pub powers: Vec<f64>,
    pub trajectory: Vec<IterationRecord>,
    pub beams: BeamformerSet,
    pub state: SpcaState,
    pub weights: WeightVector,
    /// inner solves accepted although not optimal
    pub warnings: Vec<String>,
}

impl RunResult {
    pub fn wsr_trajectory(&self) -> Vec<f64> {
        self.trajectory.iter().map(|r| r.wsr).collect()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// Channel-matched start: `g = √(P/N)·hᴴ/‖h‖`, then `ζ`, `v`, `r`, `θ`
/// consistent with those beams, with `v` clamped up to `ε` before `θ = √v/ζ`.
/// Links with a zero direct channel get a zero beam.
pub fn initialize(
    channels: &ChannelSet,
    assignment: &Assignment,
    config: &NetworkConfig,
    weights: &WeightVector,
    epsilon: f64,
) -> Result<(SpcaState, BeamformerSet), SpcaError> {
    let (cells, subs, nt) = (config.cells, config.subcarriers, config.antennas);
    let links = cells * subs;
    let mut beams = BeamformerSet::zeros(cells, subs, nt);
    crate::rates::check_shapes(channels, &beams, assignment)?;
    if weights.delta.len() != links {
        return Err(StateError::Length {
            expected: links,
            found: weights.delta.len(),
        }
        .into());
    }
    for link in LinkIndex::all(cells, subs) {
        let h = channels.toward(assignment, link.m, link.m, link.n);
        let norm = h.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt();
        if norm > 0.0 {
            let a = (config.p_max[link.m] / subs as f64).sqrt() / norm;
            for (g, c) in beams.get_mut(link.m, link.n).iter_mut().zip(h) {
                *g = c.conj() * a;
            }
        }
    }
    let mut state = SpcaState {
        theta: vec![0.0; links],
        r: vec![0.0; links],
        zeta: vec![0.0; links],
        v: vec![0.0; links],
        iteration: 0,
        epsilon,
    };
    for link in LinkIndex::all(cells, subs) {
        let t = link.t;
        let zeta = (1.0 + interference(channels, &beams, assignment, link.m, link.n)).sqrt();
        let amp = hg(channels.toward(assignment, link.m, link.m, link.n), beams.get(link.m, link.n)).norm();
        let gamma = (amp / zeta).powi(2);
        state.zeta[t] = zeta;
        state.r[t] = (1.0 + gamma).powf(weights.delta[t]);
        // θ from the clamped v: G(ζ, ε, θ) is smallest at θ = √ε/ζ, so a
        // link starting below the floor asks for the least amplitude it can
        state.v[t] = gamma.max(epsilon);
        state.theta[t] = state.v[t].sqrt() / zeta;
    }
    state.validate(links)?;
    Ok((state, beams))
}

/// What one inner solve produced.
#[derive(Debug, Clone)]
pub struct Step {
    pub state: SpcaState,
    pub beams: BeamformerSet,
    pub record: IterationRecord,
    pub warning: Option<String>,
}

/// Problem data shared by every iteration of one run.
pub struct Instance<'a> {
    pub channels: &'a ChannelSet,
    pub assignment: &'a Assignment,
    pub config: &'a NetworkConfig,
    pub weights: WeightVector,
}

impl<'a> Instance<'a> {
    pub fn new(
        channels: &'a ChannelSet,
        assignment: &'a Assignment,
        config: &'a NetworkConfig,
        margin: f64,
    ) -> Result<Self, SpcaError> {
        config.validate().map_err(|e| SpcaError::Option {
            field: "network",
            reason: e.to_string(),
        })?;
        let weights = scale_weights(&link_weights(config, assignment), margin)?;
        Ok(Instance {
            channels,
            assignment,
            config,
            weights,
        })
    }

    fn wsr(&self, beams: &BeamformerSet) -> Result<f64, RateError> {
        Ok(weighted_sum_rate(self.channels, beams, self.assignment, &self.config.weights)?.wsr)
    }

    fn surrogate(&self, r: &[f64]) -> f64 {
        // sort so the sum does not depend on link order
        let mut logs: Vec<f64> = r.iter().map(|x| x.max(f64::MIN_POSITIVE).log2()).collect();
        logs.sort_by(f64::total_cmp);
        logs.iter().sum::<f64>() / self.weights.scale
    }

    fn powers(&self, beams: &BeamformerSet) -> Vec<f64> {
        (0..self.config.cells).map(|m| per_bs_power(beams, m)).collect()
    }

    fn max_imag(&self, beams: &BeamformerSet) -> f64 {
        LinkIndex::all(self.config.cells, self.config.subcarriers)
            .map(|l| {
                hg(self.channels.toward(self.assignment, l.m, l.m, l.n), beams.get(l.m, l.n))
                    .im
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Record of the initial point.
    pub fn initial_record(
        &self,
        state: &SpcaState,
        beams: &BeamformerSet,
    ) -> Result<IterationRecord, SpcaError> {
        Ok(IterationRecord {
            iteration: 0,
            wsr: self.wsr(beams)?,
            surrogate: self.surrogate(&state.r),
            powers: self.powers(beams),
            max_imag: self.max_imag(beams),
            tightness: 0.0,
            objective: f64::NAN,
            solver: None,
            wall_time: None,
        })
    }

    /// Builds and solves the subproblem at `state`, then moves `θ` to
    /// `√v/ζ` at the optimum.
    pub fn iterate(
        &self,
        state: &SpcaState,
        options: &RunOptions,
        solver: &dyn ConicSolver,
    ) -> Result<Step, SpcaError> {
        let started = Instant::now();
        let iteration = state.iteration + 1;
        let sub = build_subproblem(
            self.channels,
            self.assignment,
            &self.weights,
            state,
            self.config,
            options.method,
        )?;
        let dump = match &options.dump_dir {
            Some(dir) => Some(dump_program(dir, iteration, &sub.program)?),
            None => None,
        };
        let sol = solver
            .solve(&sub.program, &options.solver)
            .map_err(|source| SpcaError::Solver { iteration, source })?;
        let residual = sol.worst_residual();
        let mut warning = None;
        match sol.status {
            Status::Optimal => {}
            Status::AlmostOptimal | Status::MaxIterations | Status::NumericalFailure
                if residual <= ACCEPT_RESIDUAL =>
            {
                let msg = format!(
                    "iteration {iteration}: accepted {} inner solve with residual {residual:.3e}",
                    sol.status
                );
                log::warn!("{msg}");
                warning = Some(msg);
            }
            Status::PrimalInfeasible | Status::AlmostPrimalInfeasible if iteration == 1 => {
                return Err(SpcaError::InitialInfeasible {
                    status: sol.status,
                    dump,
                })
            }
            status => {
                return Err(SpcaError::NotOptimal {
                    iteration,
                    status,
                    residual,
                    dump,
                })
            }
        }

        let ext = extract_solution(&sol.x, &sub).map_err(BuildError::from)?;
        let links = state.links();
        let mut next = SpcaState {
            theta: vec![0.0; links],
            r: ext.r.clone(),
            zeta: vec![0.0; links],
            v: vec![0.0; links],
            iteration,
            epsilon: state.epsilon,
        };
        let mut tightness = 0.0f64;
        for t in 0..links {
            // solver noise can leave ζ or v a hair below their bounds
            let zeta = ext.zeta[t].max(1.0);
            let v = ext.v[t].max(state.epsilon);
            if !sub.degenerate[t] {
                tightness = tightness.max(estimator_gap(zeta, v, state.theta[t]));
            }
            next.zeta[t] = zeta;
            next.v[t] = v;
            next.theta[t] = v.sqrt() / zeta;
            next.r[t] = ext.r[t].max(f64::MIN_POSITIVE);
        }
        next.validate(links)?;
        let record = IterationRecord {
            iteration,
            wsr: self.wsr(&ext.beams)?,
            surrogate: self.surrogate(&next.r),
            powers: self.powers(&ext.beams),
            max_imag: self.max_imag(&ext.beams),
            tightness,
            objective: sub.reported_objective(ext.psi),
            solver: Some(SolverStats {
                status: sol.status.to_string(),
                iterations: sol.iterations,
                objective: sol.primal_objective,
                residual,
            }),
            wall_time: options.timing.then(|| started.elapsed().as_secs_f64()),
        };
        Ok(Step {
            state: next,
            beams: ext.beams,
            record,
            warning,
        })
    }
}

fn dump_program(dir: &Path, iteration: usize, prog: &conic::ConicProgram) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("iter_{iteration:03}.txt"));
    std::fs::write(&path, text::write_program(prog))?;
    Ok(path)
}

/// Relative change `|b − a| / max(|a|, 1e-12)`.
pub fn relative_change(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs().max(1e-12)
}

/// Runs SPCA on one realized scenario with the built-in solver.
pub fn run(
    scenario: &Scenario,
    channels: &ChannelSet,
    options: &RunOptions,
) -> Result<RunResult, SpcaError> {
    run_with(&InteriorPoint, scenario, channels, options)
}

pub fn run_with(
    solver: &dyn ConicSolver,
    scenario: &Scenario,
    channels: &ChannelSet,
    options: &RunOptions,
) -> Result<RunResult, SpcaError> {
    options.validate()?;
    let inst = Instance::new(channels, &scenario.assignment, &scenario.config, options.margin)?;
    let (mut state, mut beams) = initialize(
        channels,
        &scenario.assignment,
        &scenario.config,
        &inst.weights,
        options.epsilon,
    )?;
    let mut trajectory = vec![inst.initial_record(&state, &beams)?];
    let mut warnings = Vec::new();
    let mut termination = Termination::MaxIterations;
    while state.iteration < options.max_iterations {
        let step = inst.iterate(&state, options, solver)?;
        let prev = trajectory.last().expect("initial record").wsr;
        let change = relative_change(prev, step.record.wsr);
        log::debug!(
            "iteration {}: wsr {:.6} (change {change:.2e})",
            step.record.iteration,
            step.record.wsr
        );
        warnings.extend(step.warning);
        trajectory.push(step.record);
        state = step.state;
        beams = step.beams;
        if change < options.tol {
            termination = Termination::Converged;
            break;
        }
    }
    let last = trajectory.last().expect("initial record");
    debug_assert!(check_feasibility(&beams, &scenario.config, 1e-6).is_feasible());
    Ok(RunResult {
        method: options.method,
        epsilon: options.epsilon,
        tol: options.tol,
        termination,
        iterations: state.iteration,
        wsr: last.wsr,
        powers: last.powers.clone(),
        beams,
        state,
        weights: inst.weights,
        trajectory,
        warnings,
    })
}

/// CSV rendering of a float: shortest round-trip digits, exponent form
/// for very large or small magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Trajectory CSV: `iteration,wsr,surrogate,power_0..,solver_status,
/// solver_iterations,solver_residual,max_imag,tightness` and, with timing,
/// a trailing `wall_time` column.
pub fn write_trajectory_csv<W: io::Write>(
    result: &RunResult,
    out: W,
    timing: bool,
) -> csv::Result<()> {
    let cells = result.powers.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string(), "wsr".into(), "surrogate".into()];
    header.extend((0..cells).map(|m| format!("power_{m}")));
    header.extend(
        ["solver_status", "solver_iterations", "solver_residual", "max_imag", "tightness"]
            .map(String::from),
    );
    if timing {
        header.push("wall_time".into());
    }
    w.write_record(&header)?;
    for rec in &result.trajectory {
        let mut row = vec![
            rec.iteration.to_string(),
            num(rec.wsr),
            num(rec.surrogate),
        ];
        row.extend(rec.powers.iter().copied().map(num));
        match &rec.solver {
            Some(s) => {
                row.push(s.status.clone());
                row.push(s.iterations.to_string());
                row.push(num(s.residual));
            }
            None => row.extend(["initial".to_string(), "0".into(), "0".into()]),
        }
        row.push(num(rec.max_imag));
        row.push(num(rec.tightness));
        if timing {
            row.push(rec.wall_time.map_or(String::new(), num));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
