//! Online next-location prediction marginalised over posterior samples of β
//! and over candidate destinations.
//!
//! For a prefix `s_0..s_t` the predictive distribution is the Monte Carlo
//! estimate
//!
//! ```text
//! p̂(s' | s_0:t) ∝ Σ_i Σ_d p(s' | s_t, d, β_i) · p(s_1:t | s_0, d, β_i) · p(d | s_0)
//! ```
//!
//! Weights are kept in log space per `(sample, destination)` pair and are
//! updated one observed step at a time.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::eval::NextLocationPredictor;
use crate::generative::Trajectory;
use crate::inference::Dataset;
use crate::network::{LocationId, SensorGraph};
use crate::rucore::{RewardModel, RewardParams, RuError, SolverConfig, ValueTable};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no posterior samples")]
    NoSamples,
    #[error("location {0} has no successors")]
    NoSuccessor(LocationId),
    #[error("location {0} is not in the graph")]
    UnknownLocation(LocationId),
    #[error("prefix has zero probability under every sample and destination")]
    AllWeightsZero,
    #[error(transparent)]
    Ru(#[from] RuError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorMode {
    /// Relative frequency of each destination given the origin.
    Informed,
    /// Uniform over all training destinations.
    Uninformed,
}

/// `p(d | origin)` over the training destinations.
#[derive(Debug, Clone, PartialEq)]
pub struct DestinationPrior {
    mode: PriorMode,
    destinations: Vec<LocationId>,
    by_origin: BTreeMap<LocationId, Vec<f64>>,
    uniform: Vec<f64>,
}

impl DestinationPrior {
    pub fn mode(&self) -> PriorMode {
        self.mode
    }

    pub fn destinations(&self) -> &[LocationId] {
        &self.destinations
    }

    /// Conditional distribution for `origin`, aligned with
    /// [`Self::destinations`]. Unseen origins fall back to uniform.
    pub fn probs_for(&self, origin: LocationId) -> &[f64] {
        self.by_origin.get(&origin).unwrap_or(&self.uniform)
    }
}

pub fn build_destination_prior(data: &Dataset, mode: PriorMode) -> Result<DestinationPrior, PredictError> {
    if data.is_empty() {
        return Err(PredictError::EmptyDataset);
    }
    let destinations = data.destinations().to_vec();
    let uniform = vec![1.0 / destinations.len() as f64; destinations.len()];
    let mut by_origin = BTreeMap::new();
    if mode == PriorMode::Informed {
        let mut counts: BTreeMap<LocationId, Vec<u64>> = BTreeMap::new();
        for t in data.trajectories() {
            let k = destinations.binary_search(&t.destination()).expect("destination set");
            counts
                .entry(t.origin())
                .or_insert_with(|| vec![0; destinations.len()])[k] += 1;
        }
        for (o, c) in counts {
            let total: u64 = c.iter().sum();
            by_origin.insert(o, c.iter().map(|x| *x as f64 / total as f64).collect());
        }
    }
    Ok(DestinationPrior {
        mode,
        destinations,
        by_origin,
        uniform,
    })
}

/// Posterior samples with their solved value tables for every destination.
#[derive(Debug)]
pub struct PredictorState<'g> {
    graph: &'g SensorGraph,
    samples: Vec<Vec<f64>>,
    models: Vec<RewardModel<'g>>,
    /// `tables[i][k]`: sample `i`, destination `prior.destinations()[k]`.
    tables: Vec<Vec<ValueTable>>,
    prior: DestinationPrior,
}

impl<'g> PredictorState<'g> {
    /// Solves one value table per (sample, destination) with α = γ = 1.
    /// Samples are sorted so results do not depend on their input order.
    pub fn new(
        graph: &'g SensorGraph,
        mut samples: Vec<Vec<f64>>,
        prior: DestinationPrior,
        solver: &SolverConfig,
    ) -> Result<Self, PredictError> {
        if samples.is_empty() {
            return Err(PredictError::NoSamples);
        }
        samples.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let models = samples
            .iter()
            .map(|b| RewardModel::new(graph, RewardParams::unit(b.clone())?))
            .collect::<Result<Vec<_>, RuError>>()?;
        let masks: Vec<Vec<bool>> = prior
            .destinations()
            .iter()
            .map(|d| graph.reachable_mask(*d))
            .collect();
        let tables = models
            .par_iter()
            .map(|m| {
                prior
                    .destinations()
                    .iter()
                    .zip(&masks)
                    .map(|(d, mask)| m.solve_from(*d, mask, solver, None))
                    .collect::<Result<Vec<_>, RuError>>()
            })
            .collect::<Result<Vec<_>, RuError>>()?;
        Ok(Self {
            graph,
            samples,
            models,
            tables,
            prior,
        })
    }

    pub fn graph(&self) -> &'g SensorGraph {
        self.graph
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn prior(&self) -> &DestinationPrior {
        &self.prior
    }

    pub fn session(&self, origin: LocationId) -> Result<PredictionSession<'_, 'g>, PredictError> {
        PredictionSession::start(self, origin)
    }
}

/// Incremental predictor for one trajectory being observed.
#[derive(Debug, Clone)]
pub struct PredictionSession<'s, 'g> {
    state: &'s PredictorState<'g>,
    current: LocationId,
    /// `log_w[i * |D| + k]`.
    log_w: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'s, 'g> PredictionSession<'s, 'g> {
    pub fn start(state: &'s PredictorState<'g>, origin: LocationId) -> Result<Self, PredictError> {
        if !state.graph.contains(origin) {
            return Err(PredictError::UnknownLocation(origin));
        }
        let prior = state.prior.probs_for(origin);
        let mut log_w = Vec::with_capacity(state.samples.len() * prior.len());
        for tables in &state.tables {
            for (vt, p) in tables.iter().zip(prior) {
                log_w.push(if vt.is_reachable(origin) { p.ln() } else { f64::NEG_INFINITY });
            }
        }
        Ok(Self {
            state,
            current: origin,
            log_w,
            scratch: Vec::new(),
        })
    }

    pub fn current(&self) -> LocationId {
        self.current
    }

    /// Multiplies every weight by `p(next | current, d, β_i)`. Destinations
    /// already reached cannot be left, so their weight drops to zero.
    pub fn observe(&mut self, next: LocationId) -> Result<(), PredictError> {
        let graph = self.state.graph;
        if !graph.contains(next) {
            return Err(PredictError::UnknownLocation(next));
        }
        let cur = self.current;
        let n_dest = self.state.prior.destinations().len();
        match graph.successors(cur).binary_search(&next) {
            Err(_) => self.log_w.iter_mut().for_each(|w| *w = f64::NEG_INFINITY),
            Ok(pos) => {
                for (i, (model, tables)) in self.state.models.iter().zip(&self.state.tables).enumerate() {
                    for (k, vt) in tables.iter().enumerate() {
                        let w = &mut self.log_w[i * n_dest + k];
                        if *w == f64::NEG_INFINITY {
                            continue;
                        }
                        if vt.destination == cur
                            || model
                                .choice_log_probabilities_into(vt, cur, &mut self.scratch)
                                .is_err()
                        {
                            *w = f64::NEG_INFINITY;
                            continue;
                        }
                        *w += self.scratch[pos];
                    }
                }
            }
        }
        self.current = next;
        Ok(())
    }

    /// Predictive distribution over `successors(current)`, ascending id.
    pub fn distribution(&mut self) -> Result<Vec<f64>, PredictError> {
        let graph = self.state.graph;
        let cur = self.current;
        let n_succ = graph.successors(cur).len();
        if n_succ == 0 {
            return Err(PredictError::NoSuccessor(cur));
        }
        let n_dest = self.state.prior.destinations().len();
        let live = |k: usize, w: f64| w > f64::NEG_INFINITY && self.state.prior.destinations()[k] != cur;
        let m = self
            .log_w
            .iter()
            .enumerate()
            .filter(|(j, w)| live(j % n_dest, **w))
            .map(|(_, w)| *w)
            .fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return Err(PredictError::AllWeightsZero);
        }
        let mut numer = vec![0.0; n_succ];
        let mut denom = 0.0;
        for (i, (model, tables)) in self.state.models.iter().zip(&self.state.tables).enumerate() {
            for (k, vt) in tables.iter().enumerate() {
                let lw = self.log_w[i * n_dest + k];
                if !live(k, lw) {
                    continue;
                }
                if model
                    .choice_log_probabilities_into(vt, cur, &mut self.scratch)
                    .is_err()
                {
                    continue;
                }
                let w = (lw - m).exp();
                denom += w;
                for (acc, lp) in numer.iter_mut().zip(&self.scratch) {
                    *acc += w * lp.exp();
                }
            }
        }
        if denom == 0.0 {
            return Err(PredictError::AllWeightsZero);
        }
        numer.iter_mut().for_each(|x| *x /= denom);
        Ok(numer)
    }

    /// Argmax of [`Self::distribution`] with its probability; ties go to the
    /// smaller location id.
    pub fn predict(&mut self) -> Result<(LocationId, f64), PredictError> {
        let probs = self.distribution()?;
        let succ = self.state.graph.successors(self.current);
        Ok(argmax_ascending(succ, &probs))
    }
}

pub(crate) fn argmax_ascending(ids: &[LocationId], scores: &[f64]) -> (LocationId, f64) {
    let mut best = 0;
    for k in 1..scores.len() {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    (ids[best], scores[best])
}

fn session_for_prefix<'s, 'g>(
    state: &'s PredictorState<'g>,
    partial: &Trajectory,
) -> Result<PredictionSession<'s, 'g>, PredictError> {
    let mut session = state.session(partial.origin())?;
    for &loc in &partial.locations()[1..] {
        session.observe(loc)?;
    }
    Ok(session)
}

/// Predictive probabilities for the location following `partial`, over
/// `successors(last(partial))`.
pub fn predictive_next_prob(state: &PredictorState<'_>, partial: &Trajectory) -> Result<Vec<f64>, PredictError> {
    session_for_prefix(state, partial)?.distribution()
}

pub fn predict_next(state: &PredictorState<'_>, partial: &Trajectory) -> Result<LocationId, PredictError> {
    Ok(session_for_prefix(state, partial)?.predict()?.0)
}

/// Predictions for every step of `traj`: entry `t` predicts `s_{t+1}` from
/// `s_0..s_t`.
pub fn predict_along(state: &PredictorState<'_>, traj: &Trajectory) -> Vec<Result<(LocationId, f64), PredictError>> {
    let locs = traj.locations();
    let steps = locs.len() - 1;
    let mut out = Vec::with_capacity(steps);
    let Ok(mut session) = state.session(traj.origin()) else {
        out.resize_with(steps, || Err(PredictError::UnknownLocation(traj.origin())));
        return out;
    };
    for t in 0..steps {
        out.push(session.predict());
        if let Err(e) = session.observe(locs[t + 1]) {
            out.push(Err(e));
            out.resize_with(steps, || Err(PredictError::AllWeightsZero));
            out.truncate(steps);
            break;
        }
    }
    out
}

/// Adapter so the posterior predictor can be scored alongside the baselines.
pub struct RuIrlPredictor<'s, 'g> {
    pub state: &'s PredictorState<'g>,
    pub label: String,
}

impl NextLocationPredictor for RuIrlPredictor<'_, '_> {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn predict_steps(&self, _: usize, traj: &Trajectory) -> Vec<Option<LocationId>> {
        predict_along(self.state, traj)
            .into_iter()
            .map(|r| r.ok().map(|(l, _)| l))
            .collect()
    }
}

/// One row of `predictions.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub trip_id: String,
    pub step: usize,
    pub observed_next: String,
    pub predicted_next: Option<String>,
    pub prob_of_prediction: Option<f64>,
}

/// Writes `predictions.csv`:
/// `trip_id,step,observed_next,predicted_next,prob_of_prediction`. Failed
/// predictions leave the last two columns empty.
pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<(), PredictError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trip_id", "step", "observed_next", "predicted_next", "prob_of_prediction"])?;
    for r in rows {
        w.write_record([
            r.trip_id.clone(),
            r.step.to_string(),
            r.observed_next.clone(),
            r.predicted_next.clone().unwrap_or_default(),
            r.prob_of_prediction.map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
