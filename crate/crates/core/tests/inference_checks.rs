mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{graph_from, rel_close};
use ruirl::generative::{trajectory_log_prob, Trajectory};
use ruirl::inference::{
    acceptance_probability, grid_init, log_likelihood, mh_step, product_grid, run_mh, ChainState, Dataset,
    InferenceError, LikelihoodModel, MhConfig, OnDemandCache,
};
use ruirl::network::LocationId;
use ruirl::rucore::{solve_value, RewardParams, SolverConfig};
use ruirl::synth::{make_corpus, make_world, SynthSpec, SynthWorld};

fn world(n_trips: usize) -> (SynthWorld, SynthSpec) {
    let spec = SynthSpec {
        n_trips,
        ..SynthSpec::default()
    };
    (make_world(&spec).unwrap(), spec)
}

fn corpus(w: &SynthWorld, spec: &SynthSpec, seed: u64) -> Dataset {
    make_corpus(w, spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn prefix(data: &Dataset, n: usize) -> Dataset {
    Dataset::new(data.trajectories()[..n].to_vec())
}

/// Log-likelihood by summing full per-step log-probabilities, independent of
/// the sufficient-statistic path in `LikelihoodModel`.
fn stepwise_log_lik(w: &SynthWorld, data: &Dataset, params: &RewardParams, solver: &SolverConfig) -> f64 {
    let mut total = 0.0;
    for &d in data.destinations() {
        let vt = solve_value(&w.graph, params, d, solver).unwrap();
        for t in data.trajectories().iter().filter(|t| t.destination() == d) {
            total += trajectory_log_prob(&w.graph, params, &vt, t).unwrap();
        }
    }
    total
}

#[test]
fn single_successor_chain_has_zero_log_likelihood() {
    let g = graph_from(4, &[(0, 1, 1.0, 2.0), (1, 2, 1.0, 2.0), (2, 3, 1.0, 2.0), (3, 0, 1.0, 2.0)]);
    let t = Trajectory::from_locations(vec![LocationId(0), LocationId(1), LocationId(2)]).unwrap();
    let data = Dataset::new(vec![t]);
    let ll = log_likelihood(&g, &[0.0, 0.0], &data, &mut OnDemandCache::default(), &SolverConfig::default()).unwrap();
    assert!(ll.abs() < 1e-12, "{ll}");
}

#[test]
fn duplicated_data_doubles_log_likelihood() {
    let (w, spec) = world(200);
    let data = corpus(&w, &spec, 1);
    let mut doubled = data.trajectories().to_vec();
    doubled.extend_from_slice(data.trajectories());
    let solver = SolverConfig::default();
    let one = LikelihoodModel::new(&w.graph, &data, solver).unwrap().log_likelihood(&[1.0, 2.0]).unwrap();
    let two = LikelihoodModel::new(&w.graph, &Dataset::new(doubled), solver)
        .unwrap()
        .log_likelihood(&[1.0, 2.0])
        .unwrap();
    assert!(rel_close(two, 2.0 * one, 1e-12), "{two} vs {}", 2.0 * one);
}

#[test]
fn acceptance_ratio_matches_direct_likelihood_ratio() {
    let (w, spec) = world(150);
    let data = corpus(&w, &spec, 2);
    let solver = SolverConfig {
        tolerance: 1e-12,
        max_iterations: 100_000,
    };
    let model = LikelihoodModel::new(&w.graph, &data, solver).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let a = vec![rng.random_range(0.5..1.5), rng.random_range(1.5..2.5)];
        let b = vec![a[0] + rng.random_range(-0.02..0.02), a[1] + rng.random_range(-0.02..0.02)];
        let (la, lb) = (model.log_likelihood(&a).unwrap(), model.log_likelihood(&b).unwrap());
        let unit = |beta: &[f64]| RewardParams::unit(beta.to_vec()).unwrap();
        let (da, db) = (
            stepwise_log_lik(&w, &data, &unit(&a), &solver),
            stepwise_log_lik(&w, &data, &unit(&b), &solver),
        );
        let direct = (db - da).exp().min(1.0);
        let used = acceptance_probability(la, lb, true);
        assert!((used - direct).abs() < 1e-9, "{used} vs {direct}");
    }
}

#[test]
fn proposals_outside_support_have_zero_acceptance() {
    assert_eq!(acceptance_probability(-10.0, 5.0, false), 0.0);
    assert_eq!(acceptance_probability(-10.0, f64::NEG_INFINITY, true), 0.0);
    assert_eq!(acceptance_probability(-10.0, -10.0, true), 1.0);
}

#[test]
fn log_two_gain_is_always_accepted() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let count = |delta: f64, rng: &mut ChaCha8Rng| {
        let rho = acceptance_probability(0.0, delta, true);
        (0..n).filter(|_| rng.random::<f64>() < rho).count() as f64 / n as f64
    };
    let up = count(std::f64::consts::LN_2, &mut rng);
    assert_eq!(up, 1.0);
    // the reverse move is accepted half the time
    let down = count(-std::f64::consts::LN_2, &mut rng);
    let se = (0.25 / n as f64).sqrt();
    assert!((down - 0.5).abs() < 3.0 * se, "{down}");
}

#[test]
fn cache_tracks_current_beta_after_every_step() {
    let (w, spec) = world(300);
    let data = corpus(&w, &spec, 4);
    let solver = SolverConfig::default();
    let model = LikelihoodModel::new(&w.graph, &data, solver).unwrap();
    let init = vec![1.0, 2.0];
    let cache = model.solve(&init, None).unwrap();
    let mut state = ChainState {
        log_posterior: model.evaluate(&cache),
        beta: init,
        cache,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut accepted = 0;
    for iter in 0..150 {
        let out = mh_step(&model, &mut state, &[0.05, 0.05], &mut rng);
        accepted += usize::from(out.accepted);
        assert_eq!(state.cache.beta, state.beta);
        assert!(state.beta.iter().all(|b| *b >= 0.0));
        if iter % 10 == 0 {
            let fresh = model.solve(&state.beta, None).unwrap();
            for (a, b) in fresh.tables.iter().zip(&state.cache.tables) {
                for (x, y) in a.values.iter().zip(&b.values) {
                    assert!(x == y || (x - y).abs() < 1e-6, "{x} vs {y}");
                }
            }
            assert_eq!(state.log_posterior, model.evaluate(&state.cache));
        }
    }
    assert!(accepted > 0);
}

#[test]
fn chain_bookkeeping_and_determinism() {
    let (w, spec) = world(200);
    let data = corpus(&w, &spec, 6);
    let solver = SolverConfig::default();
    let cfg = MhConfig {
        n_iter: 60,
        burn_in: 20,
        ..MhConfig::new(vec![0.5, 0.5], 9)
    };
    let a = run_mh(&w.graph, &data, &cfg, &solver, &[1.0, 2.0]).unwrap();
    let b = run_mh(&w.graph, &data, &cfg, &solver, &[1.0, 2.0]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.samples.len(), 61);
    assert_eq!(a.log_posteriors.len(), 61);
    assert_eq!(a.accepted.len(), 61);
    assert!(a.samples.iter().flatten().all(|x| *x >= 0.0));
    let bad = run_mh(&w.graph, &data, &cfg, &solver, &[-1.0, 2.0]);
    assert!(matches!(bad, Err(InferenceError::NonFiniteInit)));
}

#[test]
fn rescaling_leaves_chain_log_likelihoods_unchanged() {
    let (w, spec) = world(80);
    let data = corpus(&w, &spec, 7);
    let solver = SolverConfig {
        tolerance: 1e-12,
        max_iterations: 100_000,
    };
    let cfg = MhConfig {
        n_iter: 40,
        burn_in: 10,
        ..MhConfig::new(vec![0.1, 0.1], 1)
    };
    let chain = run_mh(&w.graph, &data, &cfg, &solver, &[1.0, 2.0]).unwrap();
    for beta in chain.samples.iter().step_by(5) {
        let base = stepwise_log_lik(&w, &data, &RewardParams::unit(beta.clone()).unwrap(), &solver);
        for b in [0.5, 2.0, 10.0] {
            let scaled = RewardParams::new(b, beta.iter().map(|x| b * x).collect(), 1.0).unwrap();
            let ll = stepwise_log_lik(&w, &data, &scaled, &solver);
            assert!(rel_close(ll, base, 1e-9), "b={b}: {ll} vs {base}");
        }
    }
}

#[test]
fn grid_init_lands_in_the_cell_of_the_truth() {
    let (w, spec) = world(3000);
    let data = corpus(&w, &spec, 8);
    let model = LikelihoodModel::new(&w.graph, &data, SolverConfig::default()).unwrap();
    let levels = [0.25, 0.75, 1.25, 1.75, 2.25, 2.75];
    let best = grid_init(&model, &product_grid(&levels, 2)).unwrap();
    // β* = (1, 2) lies in [0.75, 1.25] × [1.75, 2.25]
    assert!([0.75, 1.25].contains(&best[0]) && [1.75, 2.25].contains(&best[1]), "{best:?}");

    assert_eq!(grid_init(&model, &[vec![3.0, 3.0]]).unwrap(), vec![3.0, 3.0]);
    let with_bad = vec![vec![-1.0, 2.0], vec![5.0, 5.0]];
    assert_eq!(grid_init(&model, &with_bad).unwrap(), vec![5.0, 5.0]);
    assert!(matches!(grid_init(&model, &[vec![-1.0, 0.0]]), Err(InferenceError::AllInfeasible)));
}

#[test]
fn posterior_sd_shrinks_as_data_doubles() {
    let (w, spec) = world(4000);
    let all = corpus(&w, &spec, 10);
    let solver = SolverConfig::default();
    let cfg = MhConfig {
        n_iter: 3000,
        burn_in: 1000,
        ..MhConfig::new(vec![0.05, 0.05], 11)
    };
    let sds: Vec<Vec<f64>> = [500, 1000, 2000, 4000]
        .iter()
        .map(|&n| {
            run_mh(&w.graph, &prefix(&all, n), &cfg, &solver, &spec.true_beta)
                .unwrap()
                .posterior_sd()
        })
        .collect();
    for k in 0..2 {
        for pair in sds.windows(2) {
            assert!(pair[1][k] < pair[0][k], "beta_{} sd sequence {:?}", k + 1, sds);
        }
    }
}
