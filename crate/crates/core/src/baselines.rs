//! Comparison predictors: nearest neighbour by distance or by time,
//! first-order Markov, and uniform choice among the ten nearest successors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::NextLocationPredictor;
use crate::generative::Trajectory;
use crate::inference::Dataset;
use crate::network::{LocationId, Metric, SensorGraph};

/// Size of the neighbourhood the random baseline draws from.
pub const RANDOM_NEIGHBORHOOD: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("location {0} has no successors")]
    NoSuccessor(LocationId),
}

/// Successor of `s` minimising the chosen edge feature; ties go to the
/// smaller id.
pub fn nn_predict(graph: &SensorGraph, s: LocationId, metric: Metric) -> Result<LocationId, BaselineError> {
    let col = metric.feature_index();
    graph
        .edge_range(s)
        .min_by(|&a, &b| {
            graph.edge_features(a)[col]
                .total_cmp(&graph.edge_features(b)[col])
                .then(graph.edge_target(a).cmp(&graph.edge_target(b)))
        })
        .map(|e| graph.edge_target(e))
        .ok_or(BaselineError::NoSuccessor(s))
}

/// The `min(k, |A_s|)` successors nearest by road distance, ties by id.
pub fn nearest_successors(graph: &SensorGraph, s: LocationId, k: usize) -> Vec<LocationId> {
    let col = Metric::Distance.feature_index();
    let mut edges: Vec<usize> = graph.edge_range(s).collect();
    edges.sort_by(|&a, &b| {
        graph.edge_features(a)[col]
            .total_cmp(&graph.edge_features(b)[col])
            .then(graph.edge_target(a).cmp(&graph.edge_target(b)))
    });
    edges.into_iter().take(k).map(|e| graph.edge_target(e)).collect()
}

/// Uniform draw among the ten nearest successors of `s`.
pub fn random_predict<R: Rng + ?Sized>(graph: &SensorGraph, s: LocationId, rng: &mut R) -> Result<LocationId, BaselineError> {
    let near = nearest_successors(graph, s, RANDOM_NEIGHBORHOOD);
    if near.is_empty() {
        return Err(BaselineError::NoSuccessor(s));
    }
    Ok(near[rng.random_range(0..near.len())])
}

/// Transition counts of a training corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkovModel {
    pub transition_counts: BTreeMap<(LocationId, LocationId), u64>,
    pub row_totals: BTreeMap<LocationId, u64>,
    /// Observed transitions that are not edges of the sensor graph.
    pub off_graph: BTreeSet<(LocationId, LocationId)>,
}

impl MarkovModel {
    pub fn count(&self, from: LocationId, to: LocationId) -> u64 {
        self.transition_counts.get(&(from, to)).copied().unwrap_or(0)
    }

    /// Flags counted transitions that are missing from `graph`.
    pub fn flag_off_graph(&mut self, graph: &SensorGraph) {
        self.off_graph = self
            .transition_counts
            .keys()
            .filter(|(a, b)| graph.edge_index(*a, *b).is_none())
            .copied()
            .collect();
    }
}

pub fn markov_fit(data: &Dataset) -> MarkovModel {
    let mut model = MarkovModel::default();
    for t in data.trajectories() {
        for w in t.locations().windows(2) {
            *model.transition_counts.entry((w[0], w[1])).or_default() += 1;
            *model.row_totals.entry(w[0]).or_default() += 1;
        }
    }
    model
}

/// Most frequent observed successor of `s`; unseen states fall back to the
/// distance nearest neighbour.
pub fn markov_predict(model: &MarkovModel, graph: &SensorGraph, s: LocationId) -> Result<LocationId, BaselineError> {
    if model.row_totals.get(&s).copied().unwrap_or(0) == 0 {
        return nn_predict(graph, s, Metric::Distance);
    }
    let mut best: Option<(u64, LocationId)> = None;
    for (&(_, to), &c) in model
        .transition_counts
        .range((s, LocationId(0))..=(s, LocationId(usize::MAX)))
    {
        if best.is_none_or(|(b, _)| c > b) {
            best = Some((c, to));
        }
    }
    Ok(best.expect("row total > 0").1)
}

/// Writes `markov_model.csv`: `from_sensor,to_sensor,count`.
pub fn write_markov_model(path: &Path, model: &MarkovModel, graph: &SensorGraph) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["from_sensor", "to_sensor", "count"])?;
    for (&(a, b), c) in &model.transition_counts {
        w.write_record([graph.sensor_id(a), graph.sensor_id(b), &c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn per_prefix(traj: &Trajectory, mut f: impl FnMut(LocationId) -> Option<LocationId>) -> Vec<Option<LocationId>> {
    let locs = traj.locations();
    locs[..locs.len() - 1].iter().map(|s| f(*s)).collect()
}

pub struct NearestNeighbor<'g> {
    pub graph: &'g SensorGraph,
    pub metric: Metric,
}

impl NextLocationPredictor for NearestNeighbor<'_> {
    fn name(&self) -> String {
        match self.metric {
            Metric::Distance => "NN (distance)".into(),
            Metric::Time => "NN (time)".into(),
        }
    }

    fn predict_steps(&self, _: usize, traj: &Trajectory) -> Vec<Option<LocationId>> {
        per_prefix(traj, |s| nn_predict(self.graph, s, self.metric).ok())
    }
}

pub struct MarkovPredictor<'g> {
    pub graph: &'g SensorGraph,
    pub model: MarkovModel,
}

impl NextLocationPredictor for MarkovPredictor<'_> {
    fn name(&self) -> String {
        "Markov".into()
    }

    fn predict_steps(&self, _: usize, traj: &Trajectory) -> Vec<Option<LocationId>> {
        per_prefix(traj, |s| markov_predict(&self.model, self.graph, s).ok())
    }
}

/// Random baseline; trajectory `i` draws from stream `i` of a generator
/// seeded with `seed`, so results do not depend on evaluation order.
pub struct RandomNeighbor<'g> {
    pub graph: &'g SensorGraph,
    pub seed: u64,
}

impl NextLocationPredictor for RandomNeighbor<'_> {
    fn name(&self) -> String {
        "Random".into()
    }

    fn predict_steps(&self, traj_index: usize, traj: &Trajectory) -> Vec<Option<LocationId>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(traj_index as u64);
        per_prefix(traj, |s| random_predict(self.graph, s, &mut rng).ok())
    }
}
