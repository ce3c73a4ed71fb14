use num_complex::Complex64;
use proptest::prelude::*;

use wsrm::network::{realize, GainModel, NetworkConfig, ScenarioDocument};
use wsrm::rates::{check_feasibility, sinr, weighted_sum_rate, BeamformerSet, LinkIndex};
use wsrm::spca::{initialize, Instance, RunOptions};
use wsrm::subproblem::{
    build_subproblem, estimator_gap, extract_solution, link_weights, scale_weights,
    upper_estimate, Method,
};

fn small_config() -> impl Strategy<Value = NetworkConfig> {
    (1usize..=3, 1usize..=2, 0usize..=3, 1usize..=2, 1.0f64..200.0).prop_map(
        |(cells, users, extra, antennas, p)| {
            NetworkConfig::uniform(cells, users, users + extra, antennas, p)
        },
    )
}

fn random_beams(cells: usize, subs: usize, nt: usize, seed: u64) -> BeamformerSet {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut b = BeamformerSet::zeros(cells, subs, nt);
    for m in 0..cells {
        for n in 0..subs {
            for g in b.get_mut(m, n) {
                *g = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            }
        }
    }
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn users_sit_in_their_annulus(config in small_config(), seed in any::<u64>()) {
        let (scenario, channels) = realize(&config, seed).unwrap();
        for m in 0..config.cells {
            for k in 0..config.users_per_cell {
                let d = scenario.distances[m * config.users_per_cell + k][m];
                prop_assert!(d >= config.annulus_inner - 1e-9 && d <= config.annulus_outer + 1e-9);
            }
        }
        prop_assert!(channels.is_finite());
        prop_assert!(channels.matches(&scenario.assignment));
    }

    #[test]
    fn schedule_is_a_partition_covering_every_user(config in small_config(), seed in any::<u64>()) {
        let (scenario, _) = realize(&config, seed).unwrap();
        let a = &scenario.assignment;
        for m in 0..config.cells {
            let mut all: Vec<usize> = (0..config.users_per_cell)
                .flat_map(|k| a.subcarriers_of(m, k))
                .collect();
            for k in 0..config.users_per_cell {
                prop_assert!(!a.subcarriers_of(m, k).is_empty());
            }
            all.sort_unstable();
            prop_assert_eq!(all, (0..config.subcarriers).collect::<Vec<_>>());
        }
    }

    #[test]
    fn realization_is_a_function_of_the_seed(config in small_config(), seed in any::<u64>()) {
        let a = realize(&config, seed).unwrap();
        let b = realize(&config, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let doc = ScenarioDocument::new(a.0, a.1);
        let back = ScenarioDocument::from_json(&doc.to_json()).unwrap();
        prop_assert_eq!(back, doc);
    }

    #[test]
    fn sinr_ignores_beam_phase(
        config in small_config(), seed in any::<u64>(), phase in 0.0f64..6.3,
        pick in any::<prop::sample::Index>(),
    ) {
        let (scenario, ch) = realize(&config, seed).unwrap();
        let a = &scenario.assignment;
        let beams = random_beams(config.cells, config.subcarriers, config.antennas, seed);
        let before = weighted_sum_rate(&ch, &beams, a, &config.weights).unwrap();
        let t = pick.index(config.links());
        let link = LinkIndex::from_flat(t, config.subcarriers);
        let mut rotated = beams.clone();
        let rot = Complex64::from_polar(1.0, phase);
        for g in rotated.get_mut(link.m, link.n) {
            *g *= rot;
        }
        let after = weighted_sum_rate(&ch, &rotated, a, &config.weights).unwrap();
        for (x, y) in before.sinr.iter().zip(&after.sinr) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12));
        }
        let direct = sinr(&ch, &beams, a, link).unwrap();
        prop_assert!((direct - before.sinr[t]).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn wsr_grows_with_weights(
        config in small_config(), seed in any::<u64>(),
        bump in 0.0f64..3.0, pick in any::<prop::sample::Index>(),
    ) {
        let (scenario, ch) = realize(&config, seed).unwrap();
        let beams = random_beams(config.cells, config.subcarriers, config.antennas, seed ^ 1);
        let base = weighted_sum_rate(&ch, &beams, &scenario.assignment, &config.weights).unwrap();
        let mut w = config.weights.clone();
        let i = pick.index(config.total_users());
        w[i % config.users_per_cell][i / config.users_per_cell] += bump;
        let more = weighted_sum_rate(&ch, &beams, &scenario.assignment, &w).unwrap();
        prop_assert!(more.wsr >= base.wsr - 1e-12);
        prop_assert!(base.link_rates.iter().all(|c| *c >= 0.0));
    }

    #[test]
    fn wsr_grows_with_direct_power(config in small_config(), seed in any::<u64>(), scale in 1.0f64..4.0) {
        // single cell: no interference, so scaling a beam up can only help
        let config = NetworkConfig { cells: 1, p_max: vec![config.p_max[0]], weights: vec![vec![1.0]; config.users_per_cell], ..config };
        let (scenario, ch) = realize(&config, seed).unwrap();
        let beams = random_beams(1, config.subcarriers, config.antennas, seed);
        let mut louder = beams.clone();
        for g in louder.get_mut(0, 0) {
            *g *= scale;
        }
        let a = weighted_sum_rate(&ch, &beams, &scenario.assignment, &config.weights).unwrap().wsr;
        let b = weighted_sum_rate(&ch, &louder, &scenario.assignment, &config.weights).unwrap().wsr;
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn upper_estimate_dominates(zeta in 1.0f64..50.0, v in 0.0f64..100.0, theta in 1e-4f64..100.0) {
        let g = upper_estimate(zeta, v, theta);
        prop_assert!(g >= v.sqrt() * zeta * (1.0 - 1e-12));
        let matched = v.sqrt() / zeta;
        if matched > 0.0 {
            prop_assert!(estimator_gap(zeta, v, matched) <= 1e-12 * (1.0 + v.sqrt() * zeta));
        }
        prop_assert!((estimator_gap(zeta, v, theta) - (g - v.sqrt() * zeta)).abs() <= 1e-9 * g.max(1.0));
    }

    #[test]
    fn scaled_weights_clear_one(w in prop::collection::vec(0.01f64..10.0, 1..20), margin in 1e-4f64..1.0) {
        let s = scale_weights(&w, margin).unwrap();
        let min = s.delta.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!((min - (1.0 + margin)).abs() < 1e-12);
        for ((d, q), wi) in s.delta.iter().zip(&s.q).zip(&w) {
            prop_assert!((d * q - 1.0).abs() < 1e-12);
            prop_assert!((d - s.scale * wi).abs() < 1e-12 * d);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // any solution of the subproblem is a restriction of the true problem:
    // its beams are within budget, phase-aligned, and deliver at least the
    // SINR that the rate variables claim
    #[test]
    fn subproblem_optimum_is_truly_achievable(config in small_config(), seed in any::<u64>(), tree in any::<bool>()) {
        let (scenario, ch) = realize(&config, seed).unwrap();
        let a = &scenario.assignment;
        let w = scale_weights(&link_weights(&config, a), 0.01).unwrap();
        let (state, _) = initialize(&ch, a, &config, &w, 1e-4).unwrap();
        let method = if tree { Method::ProductTree } else { Method::Gm };
        let sub = build_subproblem(&ch, a, &w, &state, &config, method).unwrap();
        let sol = conic::solve(&sub.program, &Default::default()).unwrap();
        prop_assume!(sol.status == conic::Status::Optimal);
        let ext = extract_solution(&sol.x, &sub).unwrap();
        prop_assert!(check_feasibility(&ext.beams, &config, 1e-6).is_feasible());
        let rates = weighted_sum_rate(&ch, &ext.beams, a, &config.weights).unwrap();
        for t in 0..config.links() {
            let claimed = ext.r[t].max(1.0).powf(w.q[t]) - 1.0;
            prop_assert!(claimed <= rates.sinr[t] * (1.0 + 1e-5) + 1e-6,
                "link {t}: r^q - 1 = {claimed}, sinr = {}", rates.sinr[t]);
            prop_assert!(ext.v[t] <= rates.sinr[t] * (1.0 + 1e-5) + 1e-6);
        }
    }

    // the initial point meets every budget with equality and reproduces the
    // closed forms for the state
    #[test]
    fn initialization_is_channel_matched(config in small_config(), seed in any::<u64>()) {
        let (scenario, ch) = realize(&config, seed).unwrap();
        let a = &scenario.assignment;
        let inst = Instance::new(&ch, a, &config, 0.01).unwrap();
        let eps = RunOptions::default().epsilon;
        let (state, beams) = initialize(&ch, a, &config, &inst.weights, eps).unwrap();
        let rep = check_feasibility(&beams, &config, 1e-9);
        for (p, cap) in rep.powers.iter().zip(&config.p_max) {
            prop_assert!((p - cap).abs() <= 1e-9 * cap);
        }
        let rates = weighted_sum_rate(&ch, &beams, a, &config.weights).unwrap();
        for t in 0..config.links() {
            let gamma = rates.sinr[t];
            prop_assert!((state.r[t] - (1.0 + gamma).powf(inst.weights.delta[t])).abs() <= 1e-9 * state.r[t]);
            prop_assert!((state.v[t] - gamma.max(eps)).abs() <= 1e-9 * state.v[t]);
            prop_assert!((state.theta[t] - state.v[t].sqrt() / state.zeta[t]).abs() <= 1e-12);
        }
        state.validate(config.links()).unwrap();
    }
}

#[test]
fn shadowed_rayleigh_power_has_the_lognormal_mean() {
    // E|h|² = path loss · E[Φ], E[Φ] = exp((σ ln10 / 10)² / 2) with σ² = 8
    let mut config = NetworkConfig::uniform(1, 1, 4000, 1, 1.0);
    config.annulus_inner = 400.0;
    config.annulus_outer = 400.0;
    let (_, ch) = realize(&config, 3).unwrap();
    let pl = wsrm::network::path_loss(400.0);
    let mean: f64 = (0..config.subcarriers)
        .map(|n| ch.get(0, 0, n)[0].norm_sqr() / pl)
        .sum::<f64>()
        / config.subcarriers as f64;
    let expect = (8.0 * (10f64.ln() / 10.0).powi(2) / 2.0).exp();
    assert!((mean - expect).abs() < 0.1 * expect, "mean {mean} vs {expect}");
}

#[test]
fn amplitude_model_scales_by_path_loss_and_shadowing() {
    // same draws, so h_amp = h_pow · √(pl·Φ) with 10·log10 Φ ~ N(0, 8)
    let mut config = NetworkConfig::uniform(1, 1, 4000, 1, 1.0);
    config.annulus_inner = 400.0;
    config.annulus_outer = 400.0;
    let (_, power) = realize(&config, 9).unwrap();
    config.gain_model = GainModel::Amplitude;
    let (_, amp) = realize(&config, 9).unwrap();
    let pl = wsrm::network::path_loss(400.0);
    let db: Vec<f64> = (0..config.subcarriers)
        .map(|n| {
            let (a, p) = (amp.get(0, 0, n)[0], power.get(0, 0, n)[0]);
            assert!((a.arg() - p.arg()).abs() < 1e-9);
            10.0 * (a.norm_sqr() / p.norm_sqr() / pl).log10()
        })
        .collect();
    let n = db.len() as f64;
    let mean = db.iter().sum::<f64>() / n;
    let var = db.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 0.2, "mean {mean}");
    assert!((var - 8.0).abs() < 0.8, "variance {var}");
}
