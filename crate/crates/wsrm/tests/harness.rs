use std::fs;
use std::path::Path;

use wsrm::harness::{
    aggregate, replay, run_experiment, run_trials, Execution, ExperimentConfig, HarnessError,
    Manifest,
};

fn small(trials: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk();
    c.network.cells = 2;
    c.network.users_per_cell = 1;
    c.network.subcarriers = 4;
    c.network.antennas = 2;
    c.experiment.trials = trials;
    c.experiment.seed = 17;
    c.spca.tol = 1e-6;
    c.spca.max_iterations = 100;
    c
}

fn read_tree(root: &Path, manifest: &Manifest) -> Vec<(String, Vec<u8>)> {
    manifest
        .files
        .keys()
        .map(|rel| (rel.clone(), fs::read(root.join(rel)).unwrap()))
        .collect()
}

#[test]
fn reruns_are_byte_identical_across_schedules() {
    let config = small(6);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&config, a.path(), Execution::Parallel).unwrap();
    let rb = run_experiment(&config, b.path(), Execution::Sequential).unwrap();
    assert_eq!(ra.manifest.files, rb.manifest.files);
    assert_eq!(read_tree(a.path(), &ra.manifest), read_tree(b.path(), &rb.manifest));
    assert_eq!(
        fs::read(a.path().join("manifest.json")).unwrap(),
        fs::read(b.path().join("manifest.json")).unwrap()
    );
}

#[test]
fn manifest_replays_to_the_same_hashes() {
    let config = small(3);
    let a = tempfile::tempdir().unwrap();
    run_experiment(&config, a.path(), Execution::Parallel).unwrap();
    let manifest = Manifest::load(&a.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.trial_seeds.len(), 3);
    assert!(manifest.files.contains_key("aggregate.csv"));
    assert!(manifest.files.contains_key("trials/trial_0002.json"));
    let b = tempfile::tempdir().unwrap();
    let report = replay(&manifest, b.path(), Execution::Sequential).unwrap();
    assert!(report.identical(), "{:?}", report.mismatched);
    assert_eq!(report.compared, manifest.files.len());

    // a tampered artifact hash is reported by name
    let mut bad = manifest.clone();
    bad.files.insert("aggregate.csv".into(), "0".repeat(64));
    let c = tempfile::tempdir().unwrap();
    let report = replay(&bad, c.path(), Execution::Sequential).unwrap();
    assert_eq!(report.mismatched, vec!["aggregate.csv".to_string()]);

    // so is a config that no longer matches its hash
    let mut edited = manifest;
    edited.config.experiment.trials = 4;
    assert!(matches!(replay(&edited, c.path(), Execution::Sequential), Err(HarnessError::Invalid(_))));
}

#[test]
fn single_trial_aggregate() {
    let config = small(1);
    let net = config.network.to_config().unwrap();
    let outcomes = run_trials(&net, &config.spca.options(false), 1, 17, Execution::Sequential);
    let agg = aggregate(&outcomes, true);
    assert_eq!((agg.trials, agg.succeeded, agg.failed), (1, 1, 0));
    let w = outcomes[0].wsr().unwrap();
    assert_eq!((agg.mean_wsr, agg.min_wsr, agg.max_wsr, agg.std_wsr), (w, w, w, 0.0));
    assert_eq!(agg.metric, "average sum-rate (w=1)");
}

#[test]
fn weighted_networks_report_weighted_metric() {
    let mut config = small(1);
    config.network.weights = Some(vec![vec![1.0, 2.0]]);
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&config, dir.path(), Execution::Sequential).unwrap();
    assert_eq!(report.points[0].1.metric, "average weighted sum-rate");
}

#[test]
fn mean_rate_grows_with_power() {
    let mut config = small(4);
    config.sweep = Some(wsrm::harness::SweepSection {
        p_max_dbw: Some(vec![-10.0, 0.0, 10.0, 20.0]),
        epsilon: None,
    });
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&config, dir.path(), Execution::Parallel).unwrap();
    let means: Vec<f64> = report.points.iter().map(|(_, a)| a.mean_wsr).collect();
    assert_eq!(means.len(), 4);
    for w in means.windows(2) {
        assert!(w[1] >= w[0], "{means:?}");
    }
    let text = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().nth(1).unwrap().starts_with("p_max_dbw,-10.0,"));
    assert!(dir.path().join("point_03/trials.csv").exists());
}

#[test]
fn failed_trials_are_recorded_and_the_run_goes_on() {
    let mut config = ExperimentConfig::desk();
    config.experiment.trials = 3;
    config.experiment.seed = 5;
    config.spca.epsilon = 0.1;
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&config, dir.path(), Execution::Parallel).unwrap();
    let agg = &report.points[0].1;
    assert_eq!(agg.trials, 3);
    assert!(agg.failed >= 1, "{agg:?}");
    let mut rdr = csv::Reader::from_path(dir.path().join("trials.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let failed: Vec<_> = rows.iter().filter(|r| &r[2] == "failed").collect();
    assert_eq!(failed.len(), agg.failed);
    for r in failed {
        assert!(r[11].contains("infeasible"), "{r:?}");
        assert!(!dir.path().join(format!("trials/trial_{:04}.csv", &r[0].parse::<usize>().unwrap())).exists());
    }
}

#[test]
fn config_errors_are_specific() {
    let base = "[network]\ncells = 2\nusers_per_cell = 1\nsubcarriers = 2\nantennas = 1\n";
    let ok = format!("{base}p_max_dbw = 10.0\n");
    ExperimentConfig::parse(&ok, "ok.toml").unwrap();

    let unknown = format!("{ok}colour = 3\n");
    let err = ExperimentConfig::parse(&unknown, "x.toml").unwrap_err().to_string();
    assert!(err.starts_with("x.toml") && err.contains("colour"), "{err}");

    let both = format!("{ok}p_max = [1.0, 1.0]\n");
    let err = ExperimentConfig::parse(&both, "x.toml").unwrap_err().to_string();
    assert!(err.contains("exactly one of p_max_dbw and p_max"), "{err}");

    let few_users = format!("{base}p_max_dbw = 10.0\nsubcarriers = 0\n");
    assert!(ExperimentConfig::parse(&few_users, "x.toml").is_err());

    let sweep = format!("{ok}[sweep]\np_max_dbw = [0.0]\nepsilon = [0.1]\n");
    let err = ExperimentConfig::parse(&sweep, "x.toml").unwrap_err().to_string();
    assert!(err.contains("sweep"), "{err}");

    let zero = format!("{ok}[experiment]\ntrials = 0\n");
    let err = ExperimentConfig::parse(&zero, "x.toml").unwrap_err().to_string();
    assert!(err.contains("trials"), "{err}");

    let eps = format!("{ok}[spca]\nepsilon = -1.0\n");
    let err = ExperimentConfig::parse(&eps, "x.toml").unwrap_err().to_string();
    assert!(err.contains("epsilon"), "{err}");
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = ExperimentConfig::load(&path).unwrap();
            assert_eq!(ExperimentConfig::parse(&c.to_toml(), "round trip").unwrap(), c);
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
