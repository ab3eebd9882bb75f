//! Synthetic grid worlds and corpora sampled under known parameters.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::generative::{sample_trajectory_with, GenError, OdDistribution, Trajectory};
use crate::inference::Dataset;
use crate::network::{
    derive_sensor_graph, reachable_to, sensor_distances, LocationId, NetworkError, RoadNetwork, RoadNode, Sensor,
    SensorDistances, SensorGraph, SuccessorPolicy,
};
use crate::rucore::{RewardModel, RewardParams, RuError, SolverConfig, ValueTable};

/// Grid spacing in degrees used for the synthetic coordinates.
const CELL_DEG: f64 = 0.01;
/// Pace ranges (minutes per km) for ordinary streets and arterials.
const STREET_PACE: (f64, f64) = (1.5, 2.5);
const ARTERIAL_PACE: (f64, f64) = (0.3, 0.5);
const LENGTH_KM: (f64, f64) = (0.5, 1.5);
/// Offset between consecutive synthetic trip start times, in seconds.
const TRIP_SPACING_S: i64 = 86_400;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("no origin can reach any other sensor")]
    NoOdPairs,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Ru(#[from] RuError),
    #[error(transparent)]
    Gen(#[from] GenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdMode {
    Uniform,
    /// A few hub sensors attract most of the demand.
    Hub,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub grid_size: usize,
    pub n_sensors: usize,
    pub k_successors: usize,
    pub true_beta: Vec<f64>,
    pub n_trips: usize,
    pub od_mode: OdMode,
    pub seed: u64,
    /// Every `n`-th row and column is a fast road. `None` disables arterials.
    pub arterial_every: Option<usize>,
    /// Drop sampled trips with fewer locations than this.
    pub min_len: Option<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            grid_size: 8,
            n_sensors: 30,
            k_successors: 4,
            true_beta: vec![1.0, 2.0],
            n_trips: 5000,
            od_mode: OdMode::Uniform,
            seed: 1,
            arterial_every: Some(3),
            min_len: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.grid_size < 2 {
            return bad(format!("grid_size must be at least 2, got {}", self.grid_size));
        }
        if self.n_sensors < 2 || self.n_sensors > self.grid_size * self.grid_size {
            return bad(format!(
                "n_sensors must lie in [2, {}], got {}",
                self.grid_size * self.grid_size,
                self.n_sensors
            ));
        }
        if self.k_successors == 0 {
            return bad("k_successors must be positive".into());
        }
        if self.true_beta.len() != 2 || self.true_beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return bad(format!("true_beta must be two non-negative reals, got {:?}", self.true_beta));
        }
        if self.arterial_every == Some(0) {
            return bad("arterial_every must be positive".into());
        }
        Ok(())
    }

    /// Longest rollout accepted by the corpus sampler.
    pub fn max_len(&self) -> usize {
        4 * self.n_sensors
    }
}

pub struct SynthWorld {
    pub road: RoadNetwork,
    pub graph: SensorGraph,
    pub params: RewardParams,
    pub distances: SensorDistances,
}

fn node_id(r: usize, c: usize) -> String {
    format!("n{r}_{c}")
}

/// Bidirectional grid with one random length per street segment and an
/// independent pace per direction, so time tracks length within each road
/// class. Arterials are several times faster than ordinary streets.
pub fn grid_road<R: Rng + ?Sized>(grid_size: usize, arterial_every: Option<usize>, rng: &mut R) -> Result<RoadNetwork, NetworkError> {
    let mut nodes = Vec::with_capacity(grid_size * grid_size);
    for r in 0..grid_size {
        for c in 0..grid_size {
            nodes.push(RoadNode {
                id: node_id(r, c),
                lat: r as f64 * CELL_DEG,
                lon: c as f64 * CELL_DEG,
            });
        }
    }
    let arterial = |line: usize| arterial_every.is_some_and(|k| line % k == 0);
    let mut arcs = Vec::new();
    for r in 0..grid_size {
        for c in 0..grid_size {
            for (r2, c2, fast) in [(r, c + 1, arterial(r)), (r + 1, c, arterial(c))] {
                if r2 >= grid_size || c2 >= grid_size {
                    continue;
                }
                let len = rng.random_range(LENGTH_KM.0..LENGTH_KM.1);
                let pace = if fast { ARTERIAL_PACE } else { STREET_PACE };
                let (a, b) = (node_id(r, c), node_id(r2, c2));
                arcs.push((a.clone(), b.clone(), len, len * rng.random_range(pace.0..pace.1)));
                arcs.push((b, a, len, len * rng.random_range(pace.0..pace.1)));
            }
        }
    }
    RoadNetwork::new(nodes, arcs)
}

/// Grid road network, randomly placed sensors, the derived sensor graph and
/// the ground-truth parameters (`α = γ = 1`).
pub fn make_world(spec: &SynthSpec) -> Result<SynthWorld, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let road = grid_road(spec.grid_size, spec.arterial_every, &mut rng)?;
    let mut picks = sample(&mut rng, spec.grid_size * spec.grid_size, spec.n_sensors).into_vec();
    picks.sort_unstable();
    let sensors: Vec<Sensor> = picks
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let node = &road.nodes()[n];
            Sensor {
                id: format!("s{i:03}"),
                node: node.id.clone(),
                lat: node.lat,
                lon: node.lon,
            }
        })
        .collect();
    let distances = sensor_distances(&road, &sensors)?;
    let graph = derive_sensor_graph(&road, sensors, SuccessorPolicy::KNearest(spec.k_successors))?;
    let params = RewardParams::unit(spec.true_beta.clone())?;
    Ok(SynthWorld {
        road,
        graph,
        params,
        distances,
    })
}

/// OD distribution over all pairs `o ≠ d` with `d` reachable from `o`.
/// In hub mode the first few sensors (by a seeded draw) get ten times the
/// weight as destinations.
pub fn od_distribution(graph: &SensorGraph, mode: OdMode, seed: u64) -> Result<OdDistribution, SynthError> {
    let n = graph.len();
    let hubs: Vec<usize> = match mode {
        OdMode::Uniform => Vec::new(),
        OdMode::Hub => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            sample(&mut rng, n, n.div_ceil(10).min(n)).into_vec()
        }
    };
    let mut weights = BTreeMap::new();
    for d in graph.locations() {
        let w = if hubs.contains(&d.0) { 10.0 } else { 1.0 };
        for o in reachable_to(graph, d) {
            if o != d {
                weights.insert((o, d), w);
            }
        }
    }
    let total: f64 = weights.values().sum();
    if weights.is_empty() {
        return Err(SynthError::NoOdPairs);
    }
    for w in weights.values_mut() {
        *w /= total;
    }
    Ok(OdDistribution::new(weights)?)
}

/// Samples `spec.n_trips` trips under the world's true parameters. Trip `i`
/// draws from stream `i` of a generator seeded from `rng`, so the corpus does
/// not depend on thread scheduling. Timestamps follow the edge travel times.
pub fn make_corpus<R: Rng + ?Sized>(world: &SynthWorld, spec: &SynthSpec, rng: &mut R) -> Result<Dataset, SynthError> {
    if spec.n_trips == 0 {
        return Ok(Dataset::default());
    }
    let base: u64 = rng.random();
    let graph = &world.graph;
    let od = od_distribution(graph, spec.od_mode, base)?;
    let model = RewardModel::new(graph, world.params.clone())?;
    let mut dests: Vec<LocationId> = od.pairs().iter().map(|p| p.1).collect();
    dests.sort_unstable();
    dests.dedup();
    let solver = SolverConfig::default();
    let tables: BTreeMap<LocationId, ValueTable> = dests
        .par_iter()
        .map(|&d| model.solve(d, &solver).map(|vt| (d, vt)))
        .collect::<Result<_, _>>()?;
    let max_len = spec.max_len();
    let time_col = crate::network::Metric::Time.feature_index();
    let trips: Vec<Option<(String, Trajectory)>> = (0..spec.n_trips)
        .into_par_iter()
        .map(|i| {
            let mut trip_rng = ChaCha8Rng::seed_from_u64(base);
            trip_rng.set_stream(i as u64 + 2);
            let (o, d) = od.sample(&mut trip_rng);
            let path = sample_trajectory_with(&model, &tables[&d], o, &mut trip_rng, max_len)?;
            if spec.min_len.is_some_and(|m| path.len() < m) {
                return Ok(None);
            }
            let mut t = i as i64 * TRIP_SPACING_S;
            let mut ts = vec![t];
            for w in path.locations().windows(2) {
                let e = graph.edge_index(w[0], w[1]).expect("sampled step is an edge");
                t += ((graph.edge_features(e)[time_col] * 60.0).round() as i64).max(1);
                ts.push(t);
            }
            let traj = Trajectory::new(path.locations().to_vec(), Some(ts))?;
            Ok(Some((format!("trip{i:06}"), traj)))
        })
        .collect::<Result<_, SynthError>>()?;
    Ok(Dataset::from_pairs(trips.into_iter().flatten().collect()))
}
