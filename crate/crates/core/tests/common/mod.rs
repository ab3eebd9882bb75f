//! Graph builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ruirl::generative::Trajectory;
use ruirl::network::{LocationId, Sensor, SensorGraph};
use ruirl::rucore::{solve_value, RewardParams, RuError, SolverConfig, ValueTable};

pub const TIGHT: SolverConfig = SolverConfig {
    tolerance: 1e-12,
    max_iterations: 100_000,
};

pub fn sensors(n: usize) -> Vec<Sensor> {
    (0..n)
        .map(|i| Sensor {
            id: format!("s{i:02}"),
            node: format!("n{i}"),
            lat: 0.0,
            lon: 0.0,
        })
        .collect()
}

/// Graph from `(from, to, dist_km, time_min)` tuples.
pub fn graph_from(n: usize, edges: &[(usize, usize, f64, f64)]) -> SensorGraph {
    let e = edges
        .iter()
        .map(|&(a, b, d, t)| (LocationId(a), LocationId(b), vec![d, t]))
        .collect();
    SensorGraph::from_edges(sensors(n), 2, e).unwrap()
}

/// Ring plus up to three random chords per state.
pub fn random_graph(rng: &mut ChaCha8Rng, max_states: usize) -> SensorGraph {
    let n = rng.random_range(4..=max_states);
    let mut pairs = BTreeSet::new();
    for i in 0..n {
        pairs.insert((i, (i + 1) % n));
        for _ in 0..rng.random_range(0..=3) {
            let j = rng.random_range(0..n);
            if j != i {
                pairs.insert((i, j));
            }
        }
    }
    let edges: Vec<_> = pairs
        .into_iter()
        .map(|(a, b)| (a, b, rng.random_range(0.1..2.0), rng.random_range(0.1..3.0)))
        .collect();
    graph_from(n, &edges)
}

pub fn random_params(rng: &mut ChaCha8Rng, gamma: f64) -> RewardParams {
    RewardParams::new(
        rng.random_range(0.5..2.0),
        vec![rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)],
        gamma,
    )
    .unwrap()
}

/// Draws graphs until the soft values are finite; at γ = 1 dense cheap
/// cycles make the path sum infinite and the solver reports `Diverged`.
pub fn well_posed(
    rng: &mut ChaCha8Rng,
    max_states: usize,
    gamma: f64,
) -> (SensorGraph, RewardParams, LocationId, ValueTable) {
    loop {
        let g = random_graph(rng, max_states);
        let params = random_params(rng, gamma);
        let d = LocationId(rng.random_range(0..g.len()));
        match solve_value(&g, &params, d, &TIGHT) {
            Ok(vt) => return (g, params, d, vt),
            Err(RuError::Diverged { .. }) => continue,
            Err(e) => panic!("{e}"),
        }
    }
}

/// Uniform random walk from a random origin until it first hits `d`.
pub fn random_walk(rng: &mut ChaCha8Rng, g: &SensorGraph, d: LocationId) -> Trajectory {
    loop {
        let o = LocationId(rng.random_range(0..g.len()));
        if o == d {
            continue;
        }
        let mut path = vec![o];
        let mut s = o;
        while s != d && path.len() < 200 {
            s = *g.successors(s).choose(rng).unwrap();
            path.push(s);
        }
        if s == d {
            return Trajectory::from_locations(path).unwrap();
        }
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
