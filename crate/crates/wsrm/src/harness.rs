//! Experiment runner: declarative configs, Monte-Carlo trials, CSV and
//! manifest artifacts, replay.
//!
//! An artifact directory looks like
//!
//! ```text
//! out/
//!   manifest.json
//!   aggregate.csv
//!   trials.csv                 (plain runs)
//!   trials/trial_0000.csv      trajectory of each successful trial
//!   trials/trial_0000.json     full run result
//!   point_00/...               one subdirectory per sweep value
//! ```
//!
//! Column meanings are in `docs/csv_schemas.md`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::network::{dbw_to_watts, realize, GainModel, NetworkConfig};
use crate::rates::check_feasibility;
use crate::rng::trial_seed;
use crate::spca::{num, run, write_trajectory_csv, RunOptions, RunResult, Termination};
use crate::subproblem::Method;

pub const MANIFEST_FORMAT: &str = "wsrm-manifest";
pub const MANIFEST_VERSION: u32 = 1;
/// Version of every CSV layout written here; bumped on any column change.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub cells: usize,
    pub users_per_cell: usize,
    pub subcarriers: usize,
    pub antennas: usize,
    /// common budget in dBW; alternatively `p_max` in watts per BS
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max_dbw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<Vec<f64>>,
    #[serde(default = "default_spacing")]
    pub inter_bs_distance: f64,
    #[serde(default = "default_inner")]
    pub annulus_inner: f64,
    #[serde(default = "default_outer")]
    pub annulus_outer: f64,
    /// `weights[k][m]`; all ones when absent
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub gain_model: GainModel,
}

fn default_spacing() -> f64 {
    1000.0
}
fn default_inner() -> f64 {
    500.0
}
fn default_outer() -> f64 {
    1000.0
}

impl NetworkSection {
    pub fn to_config(&self) -> Result<NetworkConfig, HarnessError> {
        let p_max = match (&self.p_max_dbw, &self.p_max) {
            (Some(dbw), None) => vec![dbw_to_watts(*dbw); self.cells],
            (None, Some(w)) => w.clone(),
            _ => {
                return Err(HarnessError::Invalid(
                    "network: give exactly one of p_max_dbw and p_max".into(),
                ))
            }
        };
        let config = NetworkConfig {
            cells: self.cells,
            users_per_cell: self.users_per_cell,
            subcarriers: self.subcarriers,
            antennas: self.antennas,
            p_max,
            inter_bs_distance: self.inter_bs_distance,
            annulus_inner: self.annulus_inner,
            annulus_outer: self.annulus_outer,
            weights: self
                .weights
                .clone()
                .unwrap_or_else(|| vec![vec![1.0; self.cells]; self.users_per_cell]),
            gain_model: self.gain_model,
        };
        config
            .validate()
            .map_err(|e| HarnessError::Invalid(format!("network: {e}")))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpcaSection {
    #[serde(default = "d_eps")]
    pub epsilon: f64,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_imax")]
    pub max_iterations: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "d_margin")]
    pub margin: f64,
}

fn d_eps() -> f64 {
    crate::spca::DEFAULT_EPSILON
}
fn d_tol() -> f64 {
    crate::spca::DEFAULT_TOL
}
fn d_imax() -> usize {
    crate::spca::DEFAULT_MAX_ITERATIONS
}
fn d_margin() -> f64 {
    crate::spca::DEFAULT_MARGIN
}

impl Default for SpcaSection {
    fn default() -> Self {
        SpcaSection {
            epsilon: d_eps(),
            tol: d_tol(),
            max_iterations: d_imax(),
            method: Method::default(),
            margin: d_margin(),
        }
    }
}

impl SpcaSection {
    pub fn options(&self, timing: bool) -> RunOptions {
        RunOptions {
            epsilon: self.epsilon,
            tol: self.tol,
            max_iterations: self.max_iterations,
            method: self.method,
            margin: self.margin,
            timing,
            ..RunOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "d_name")]
    pub name: String,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// adds a `wall_time` column to trajectory CSVs, which makes them
    /// differ between runs
    #[serde(default)]
    pub timing: bool,
}

fn d_name() -> String {
    "experiment".into()
}
fn d_trials() -> usize {
    1
}
fn d_seed() -> u64 {
    1
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            name: d_name(),
            trials: d_trials(),
            seed: d_seed(),
            timing: false,
        }
    }
}

/// One sweep axis; each value runs the full set of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max_dbw: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    PMaxDbw,
    Epsilon,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::PMaxDbw => "p_max_dbw",
            Axis::Epsilon => "epsilon",
        })
    }
}

impl SweepSection {
    pub fn axis(&self) -> Result<(Axis, &[f64]), HarnessError> {
        match (&self.p_max_dbw, &self.epsilon) {
            (Some(v), None) => Ok((Axis::PMaxDbw, v)),
            (None, Some(v)) => Ok((Axis::Epsilon, v)),
            _ => Err(HarnessError::Invalid(
                "sweep: give exactly one of p_max_dbw and epsilon".into(),
            )),
        }
    }
}

/// A whole experiment in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSection,
    #[serde(default)]
    pub spca: SpcaSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.network.to_config()?;
        if self.experiment.trials == 0 {
            return Err(HarnessError::Invalid("experiment.trials must be at least 1".into()));
        }
        self.spca
            .options(false)
            .validate()
            .map_err(|e| HarnessError::Invalid(format!("spca: {e}")))?;
        if let Some(sweep) = &self.sweep {
            let (_, values) = sweep.axis()?;
            if values.is_empty() {
                return Err(HarnessError::Invalid("sweep: no values".into()));
            }
        }
        Ok(())
    }

    /// The desk-scale scenario with default SPCA options.
    pub fn desk() -> Self {
        ExperimentConfig {
            network: NetworkSection {
                cells: 3,
                users_per_cell: 2,
                subcarriers: 8,
                antennas: 2,
                p_max_dbw: Some(20.0),
                p_max: None,
                inter_bs_distance: default_spacing(),
                annulus_inner: default_inner(),
                annulus_outer: default_outer(),
                weights: None,
                gain_model: GainModel::default(),
            },
            spca: SpcaSection::default(),
            experiment: ExperimentSection {
                name: "desk".into(),
                ..ExperimentSection::default()
            },
            sweep: None,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    fn equal_weights(&self) -> bool {
        self.network
            .weights
            .as_ref()
            .is_none_or(|w| w.iter().flatten().all(|&x| x == 1.0))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// How trials are scheduled. Results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// a rayon pool when the `parallel` feature is on, else sequential
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub result: Option<RunResult>,
    pub error: Option<String>,
}

impl TrialOutcome {
    pub fn wsr(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.wsr)
    }
}

fn run_trial(
    network: &NetworkConfig,
    options: &RunOptions,
    base_seed: u64,
    trial: usize,
) -> TrialOutcome {
    let seed = trial_seed(base_seed, trial as u64);
    let result = realize(network, seed)
        .map_err(|e| e.to_string())
        .and_then(|(scenario, channels)| {
            run(&scenario, &channels, options).map_err(|e| e.to_string())
        });
    match result {
        Ok(r) => TrialOutcome {
            trial,
            seed,
            result: Some(r),
            error: None,
        },
        Err(e) => {
            log::warn!("trial {trial} (seed {seed}) failed: {e}");
            TrialOutcome {
                trial,
                seed,
                result: None,
                error: Some(e),
            }
        }
    }
}

/// Runs `trials` independent trials; the output is ordered by trial index.
pub fn run_trials(
    network: &NetworkConfig,
    options: &RunOptions,
    trials: usize,
    base_seed: u64,
    exec: Execution,
) -> Vec<TrialOutcome> {
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..trials)
                .into_par_iter()
                .map(|t| run_trial(network, options, base_seed, t))
                .collect()
        }
        _ => (0..trials)
            .map(|t| run_trial(network, options, base_seed, t))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: String,
    pub trials: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub converged: usize,
    pub mean_wsr: f64,
    pub std_wsr: f64,
    pub min_wsr: f64,
    pub max_wsr: f64,
    pub mean_iterations: f64,
}

/// Sum of values in ascending order, so the result does not depend on the
/// order the values arrive in.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

pub fn aggregate(outcomes: &[TrialOutcome], equal_weights: bool) -> Aggregate {
    let results: Vec<&RunResult> = outcomes.iter().filter_map(|o| o.result.as_ref()).collect();
    let n = results.len();
    let mut wsr: Vec<f64> = results.iter().map(|r| r.wsr).collect();
    let mean = if n > 0 { ordered_sum(&mut wsr) / n as f64 } else { f64::NAN };
    let mut sq: Vec<f64> = wsr.iter().map(|w| (w - mean).powi(2)).collect();
    let std = if n > 1 { (ordered_sum(&mut sq) / (n - 1) as f64).sqrt() } else { 0.0 };
    let mut iters: Vec<f64> = results.iter().map(|r| r.iterations as f64).collect();
    Aggregate {
        metric: if equal_weights {
            "average sum-rate (w=1)".into()
        } else {
            "average weighted sum-rate".into()
        },
        trials: outcomes.len(),
        succeeded: n,
        failed: outcomes.len() - n,
        converged: results
            .iter()
            .filter(|r| r.termination == Termination::Converged)
            .count(),
        mean_wsr: mean,
        std_wsr: std,
        min_wsr: wsr.iter().copied().fold(f64::NAN, f64::min),
        max_wsr: wsr.iter().copied().fold(f64::NAN, f64::max),
        mean_iterations: if n > 0 { ordered_sum(&mut iters) / n as f64 } else { f64::NAN },
    }
}

/// Monte-Carlo statistics for one configuration.
pub fn monte_carlo(
    config: &ExperimentConfig,
    exec: Execution,
) -> Result<(Vec<TrialOutcome>, Aggregate), HarnessError> {
    let network = config.network.to_config()?;
    let options = config.spca.options(config.experiment.timing);
    let outcomes = run_trials(
        &network,
        &options,
        config.experiment.trials,
        config.experiment.seed,
        exec,
    );
    let agg = aggregate(&outcomes, config.equal_weights());
    Ok((outcomes, agg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub csv_schema: u32,
    pub code_version: String,
    pub config_sha256: String,
    /// the effective configuration, overrides applied
    pub config: ExperimentConfig,
    pub base_seed: u64,
    pub trial_seeds: Vec<u64>,
    /// relative path → SHA-256 of every artifact written
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(HarnessError::Invalid(format!(
                "{}: unsupported manifest {} v{}",
                path.display(),
                m.format,
                m.version
            )));
        }
        Ok(m)
    }
}

struct Writer<'a> {
    root: &'a Path,
    files: BTreeMap<String, String>,
}

impl Writer<'_> {
    fn put(&mut self, rel: &str, bytes: &[u8]) -> Result<(), HarnessError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
        self.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }
}

const TRIALS_HEADER: [&str; 12] = [
    "trial",
    "seed",
    "status",
    "termination",
    "iterations",
    "initial_wsr",
    "final_wsr",
    "final_surrogate",
    "max_power_ratio",
    "max_imag",
    "tightness",
    "error",
];

fn trials_csv(outcomes: &[TrialOutcome], network: &NetworkConfig) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRIALS_HEADER)?;
    for o in outcomes {
        let row = match &o.result {
            Some(r) => {
                let last = r.trajectory.last().expect("trajectory has the initial point");
                let ratio = check_feasibility(&r.beams, network, f64::INFINITY)
                    .powers
                    .iter()
                    .zip(&network.p_max)
                    .map(|(p, cap)| p / cap)
                    .fold(0.0, f64::max);
                vec![
                    o.trial.to_string(),
                    o.seed.to_string(),
                    "ok".into(),
                    r.termination.to_string(),
                    r.iterations.to_string(),
                    num(r.trajectory[0].wsr),
                    num(r.wsr),
                    num(last.surrogate),
                    num(ratio),
                    num(last.max_imag),
                    num(last.tightness),
                    String::new(),
                ]
            }
            None => {
                let mut row = vec![o.trial.to_string(), o.seed.to_string(), "failed".into()];
                row.extend(std::iter::repeat_n(String::new(), 8));
                row.push(o.error.clone().unwrap_or_default());
                row
            }
        };
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
}

const AGGREGATE_HEADER: [&str; 13] = [
    "axis",
    "value",
    "metric",
    "trials",
    "succeeded",
    "failed",
    "converged",
    "mean_wsr",
    "std_wsr",
    "min_wsr",
    "max_wsr",
    "mean_iterations",
    "method",
];

fn aggregate_row(axis: &str, value: &str, a: &Aggregate, method: Method) -> Vec<String> {
    vec![
        axis.to_string(),
        value.to_string(),
        a.metric.clone(),
        a.trials.to_string(),
        a.succeeded.to_string(),
        a.failed.to_string(),
        a.converged.to_string(),
        num(a.mean_wsr),
        num(a.std_wsr),
        num(a.min_wsr),
        num(a.max_wsr),
        num(a.mean_iterations),
        method.to_string(),
    ]
}

fn write_point(
    out: &mut Writer<'_>,
    prefix: &str,
    outcomes: &[TrialOutcome],
    network: &NetworkConfig,
    timing: bool,
) -> Result<(), HarnessError> {
    out.put(&format!("{prefix}trials.csv"), &trials_csv(outcomes, network)?)?;
    for o in outcomes {
        if let Some(r) = &o.result {
            let mut buf = Vec::new();
            write_trajectory_csv(r, &mut buf, timing)?;
            out.put(&format!("{prefix}trials/trial_{:04}.csv", o.trial), &buf)?;
            out.put(
                &format!("{prefix}trials/trial_{:04}.json", o.trial),
                r.to_json()?.as_bytes(),
            )?;
        }
    }
    Ok(())
}

/// Summary of one `run_experiment` call.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub manifest: Manifest,
    /// `(axis value, aggregate)`; a single `None` entry without a sweep
    pub points: Vec<(Option<f64>, Aggregate)>,
}

/// Runs the experiment (every sweep point if the config has a sweep) and
/// writes its artifacts under `out`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out: &Path,
    exec: Execution,
) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut writer = Writer {
        root: out,
        files: BTreeMap::new(),
    };
    let mut agg = csv::Writer::from_writer(Vec::new());
    agg.write_record(AGGREGATE_HEADER)?;
    let mut points = Vec::new();
    match &config.sweep {
        None => {
            let network = config.network.to_config()?;
            let (outcomes, a) = monte_carlo(config, exec)?;
            write_point(&mut writer, "", &outcomes, &network, config.experiment.timing)?;
            agg.write_record(aggregate_row("none", "", &a, config.spca.method))?;
            points.push((None, a));
        }
        Some(sweep) => {
            let (axis, values) = sweep.axis()?;
            for (i, &value) in values.iter().enumerate() {
                let point = point_config(config, axis, value);
                let network = point.network.to_config()?;
                let (outcomes, a) = monte_carlo(&point, exec)?;
                let prefix = format!("point_{i:02}/");
                write_point(&mut writer, &prefix, &outcomes, &network, config.experiment.timing)?;
                agg.write_record(aggregate_row(
                    &axis.to_string(),
                    &num(value),
                    &a,
                    config.spca.method,
                ))?;
                points.push((Some(value), a));
            }
        }
    }
    let agg_bytes = agg.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    writer.put("aggregate.csv", &agg_bytes)?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        csv_schema: CSV_SCHEMA_VERSION,
        code_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config.hash(),
        config: config.clone(),
        base_seed: config.experiment.seed,
        trial_seeds: (0..config.experiment.trials)
            .map(|t| trial_seed(config.experiment.seed, t as u64))
            .collect(),
        files: writer.files,
    };
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_err(&path))?;
    Ok(ExperimentReport { manifest, points })
}

/// Config of a single sweep point: the axis value substituted, sweep removed.
pub fn point_config(config: &ExperimentConfig, axis: Axis, value: f64) -> ExperimentConfig {
    let mut c = config.clone();
    c.sweep = None;
    match axis {
        Axis::PMaxDbw => {
            c.network.p_max_dbw = Some(value);
            c.network.p_max = None;
        }
        Axis::Epsilon => c.spca.epsilon = value,
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub compared: usize,
    /// files whose hash differs from the manifest, or that are missing
    pub mismatched: Vec<String>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Re-runs the experiment recorded in a manifest into `out` and compares
/// every artifact hash.
pub fn replay(manifest: &Manifest, out: &Path, exec: Execution) -> Result<ReplayReport, HarnessError> {
    if manifest.config.hash() != manifest.config_sha256 {
        return Err(HarnessError::Invalid(
            "manifest config does not match its recorded hash".into(),
        ));
    }
    let report = run_experiment(&manifest.config, out, exec)?;
    let mut mismatched: Vec<String> = manifest
        .files
        .iter()
        .filter(|(name, hash)| report.manifest.files.get(*name) != Some(*hash))
        .map(|(name, _)| name.clone())
        .collect();
    mismatched.extend(
        report
            .manifest
            .files
            .keys()
            .filter(|k| !manifest.files.contains_key(*k))
            .cloned(),
    );
    Ok(ReplayReport {
        compared: manifest.files.len(),
        mismatched,
    })
}
