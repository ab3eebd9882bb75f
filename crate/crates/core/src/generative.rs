//! The trajectory generative model: origin-destination sampling, rollouts
//! under the logit policy, and exact trajectory log-likelihoods.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use thiserror::Error;

use crate::network::{LocationId, SensorGraph};
use crate::rucore::{RewardModel, RewardParams, RuError, ValueTable};

/// Rejected rollouts allowed before [`sample_trajectory`] gives up.
pub const RETRY_CAP: usize = 100;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("step {from} -> {to} is not an edge of the sensor graph")]
    InfeasibleStep { from: LocationId, to: LocationId },
    #[error("trajectory ends at {found}, value table is for destination {expected}")]
    WrongDestination {
        expected: LocationId,
        found: LocationId,
    },
    #[error("the simplified likelihood requires gamma = 1, got {0}")]
    GammaNotOne(f64),
    #[error("no rollout of at most {max_len} locations after {attempts} attempts")]
    RetryCapExceeded { attempts: usize, max_len: usize },
    #[error("invalid origin-destination distribution: {0}")]
    InvalidOd(String),
    #[error("{file}:{line}: malformed record: {reason}")]
    MalformedRecord {
        file: String,
        line: u64,
        reason: String,
    },
    #[error(transparent)]
    Ru(#[from] RuError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// An ordered sequence of sensor locations, optionally timestamped (epoch
/// seconds).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    locations: Vec<LocationId>,
    timestamps: Option<Vec<i64>>,
}

impl Trajectory {
    pub fn new(locations: Vec<LocationId>, timestamps: Option<Vec<i64>>) -> Result<Self, GenError> {
        if locations.is_empty() {
            return Err(GenError::InvalidTrajectory("a trajectory needs at least one location".into()));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != locations.len() {
                return Err(GenError::InvalidTrajectory(format!(
                    "{} locations but {} timestamps",
                    locations.len(),
                    ts.len()
                )));
            }
            if ts.windows(2).any(|w| w[1] <= w[0]) {
                return Err(GenError::InvalidTrajectory("timestamps must be strictly increasing".into()));
            }
        }
        Ok(Self {
            locations,
            timestamps,
        })
    }

    pub fn from_locations(locations: Vec<LocationId>) -> Result<Self, GenError> {
        Self::new(locations, None)
    }

    pub fn locations(&self) -> &[LocationId] {
        &self.locations
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn origin(&self) -> LocationId {
        self.locations[0]
    }

    pub fn destination(&self) -> LocationId {
        *self.locations.last().expect("non-empty")
    }

    /// Every consecutive pair must be an edge of `graph`.
    pub fn check_feasible(&self, graph: &SensorGraph) -> Result<(), GenError> {
        if let Some(bad) = self.locations.iter().find(|l| !graph.contains(**l)) {
            return Err(GenError::InvalidTrajectory(format!("unknown location {bad}")));
        }
        for w in self.locations.windows(2) {
            if graph.edge_index(w[0], w[1]).is_none() {
                return Err(GenError::InfeasibleStep {
                    from: w[0],
                    to: w[1],
                });
            }
        }
        Ok(())
    }
}

/// Probability table over origin-destination pairs (`o != d`).
#[derive(Debug, Clone)]
pub struct OdDistribution {
    pairs: Vec<(LocationId, LocationId)>,
    probs: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl OdDistribution {
    pub fn new(entries: BTreeMap<(LocationId, LocationId), f64>) -> Result<Self, GenError> {
        if entries.is_empty() {
            return Err(GenError::InvalidOd("empty support".into()));
        }
        let mut pairs = Vec::with_capacity(entries.len());
        let mut probs = Vec::with_capacity(entries.len());
        for ((o, d), p) in entries {
            if o == d {
                return Err(GenError::InvalidOd(format!("pair ({o}, {d}) has o = d")));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(GenError::InvalidOd(format!("probability {p} for ({o}, {d})")));
            }
            pairs.push((o, d));
            probs.push(p);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(GenError::InvalidOd(format!("probabilities sum to {total}")));
        }
        let sampler = WeightedIndex::new(&probs).map_err(|e| GenError::InvalidOd(e.to_string()))?;
        Ok(Self {
            pairs,
            probs,
            sampler,
        })
    }

    pub fn uniform(pairs: impl IntoIterator<Item = (LocationId, LocationId)>) -> Result<Self, GenError> {
        let pairs: Vec<_> = pairs.into_iter().collect();
        let p = 1.0 / pairs.len().max(1) as f64;
        Self::new(pairs.into_iter().map(|k| (k, p)).collect())
    }

    /// Relative frequencies of `(origin, destination)` among trajectories with
    /// at least one step.
    pub fn from_corpus<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> Result<Self, GenError> {
        let mut counts: BTreeMap<(LocationId, LocationId), u64> = BTreeMap::new();
        for t in trajectories {
            if t.origin() != t.destination() {
                *counts.entry((t.origin(), t.destination())).or_default() += 1;
            }
        }
        let total: u64 = counts.values().sum();
        Self::new(
            counts
                .into_iter()
                .map(|(k, c)| (k, c as f64 / total as f64))
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[(LocationId, LocationId)] {
        &self.pairs
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (LocationId, LocationId) {
        self.pairs[self.sampler.sample(rng)]
    }
}

pub fn sample_od<R: Rng + ?Sized>(od: &OdDistribution, rng: &mut R) -> (LocationId, LocationId) {
    od.sample(rng)
}

/// Rolls out a trajectory from `o` to `vt.destination`, rejecting rollouts
/// longer than `max_len` locations and retrying up to [`RETRY_CAP`] times.
pub fn sample_trajectory_with<R: Rng + ?Sized>(
    model: &RewardModel<'_>,
    vt: &ValueTable,
    o: LocationId,
    rng: &mut R,
    max_len: usize,
) -> Result<Trajectory, GenError> {
    let graph = model.graph();
    let d = vt.destination;
    if !graph.contains(o) {
        return Err(RuError::UnknownLocation(o).into());
    }
    if o == d {
        return Trajectory::from_locations(vec![d]);
    }
    if !vt.is_reachable(o) {
        return Err(RuError::NoFeasibleSuccessor(o).into());
    }
    let mut logp = Vec::new();
    for _ in 0..RETRY_CAP {
        let mut path = vec![o];
        let mut s = o;
        while s != d && path.len() < max_len {
            model.choice_log_probabilities_into(vt, s, &mut logp)?;
            let succ = graph.successors(s);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = None;
            for (k, lp) in logp.iter().enumerate() {
                let p = lp.exp();
                if p > 0.0 {
                    pick = Some(k);
                    acc += p;
                    if u < acc {
                        break;
                    }
                }
            }
            s = succ[pick.ok_or(RuError::NoFeasibleSuccessor(s))?];
            path.push(s);
        }
        if s == d {
            return Trajectory::from_locations(path);
        }
    }
    Err(GenError::RetryCapExceeded {
        attempts: RETRY_CAP,
        max_len,
    })
}

pub fn sample_trajectory<R: Rng + ?Sized>(
    graph: &SensorGraph,
    params: &RewardParams,
    vt: &ValueTable,
    o: LocationId,
    rng: &mut R,
    max_len: usize,
) -> Result<Trajectory, GenError> {
    let model = RewardModel::new(graph, params.clone())?;
    sample_trajectory_with(&model, vt, o, rng, max_len)
}

fn check_endpoint(vt: &ValueTable, traj: &Trajectory) -> Result<(), GenError> {
    if traj.destination() != vt.destination {
        return Err(GenError::WrongDestination {
            expected: vt.destination,
            found: traj.destination(),
        });
    }
    Ok(())
}

/// `Σ_t log p(s_{t+1} | s_t)` under the logit policy. Any step leaving the
/// destination before the end has probability zero.
pub fn trajectory_log_prob_with(
    model: &RewardModel<'_>,
    vt: &ValueTable,
    traj: &Trajectory,
) -> Result<f64, GenError> {
    check_endpoint(vt, traj)?;
    traj.check_feasible(model.graph())?;
    let graph = model.graph();
    let mut logp = Vec::new();
    let mut total = 0.0;
    for w in traj.locations().windows(2) {
        let (s, next) = (w[0], w[1]);
        if s == vt.destination || !vt.is_reachable(s) {
            return Ok(f64::NEG_INFINITY);
        }
        model.choice_log_probabilities_into(vt, s, &mut logp)?;
        let k = graph
            .successors(s)
            .binary_search(&next)
            .map_err(|_| GenError::InfeasibleStep { from: s, to: next })?;
        total += logp[k];
    }
    Ok(total)
}

pub fn trajectory_log_prob(
    graph: &SensorGraph,
    params: &RewardParams,
    vt: &ValueTable,
    traj: &Trajectory,
) -> Result<f64, GenError> {
    trajectory_log_prob_with(&RewardModel::new(graph, params.clone())?, vt, traj)
}

/// Closed form for γ = 1: `(Σ_t r(s_t, s_{t+1}) − v(s_0)) / α`.
pub fn trajectory_log_prob_simplified_with(
    model: &RewardModel<'_>,
    vt: &ValueTable,
    traj: &Trajectory,
) -> Result<f64, GenError> {
    let params = model.params();
    if params.gamma() != 1.0 {
        return Err(GenError::GammaNotOne(params.gamma()));
    }
    check_endpoint(vt, traj)?;
    traj.check_feasible(model.graph())?;
    let locs = traj.locations();
    if locs[..locs.len() - 1].contains(&vt.destination) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total_reward = 0.0;
    for w in locs.windows(2) {
        total_reward += model.reward(w[0], w[1])?;
    }
    Ok((total_reward - vt.value(traj.origin())) / params.alpha())
}

pub fn trajectory_log_prob_simplified(
    graph: &SensorGraph,
    params: &RewardParams,
    vt: &ValueTable,
    traj: &Trajectory,
) -> Result<f64, GenError> {
    trajectory_log_prob_simplified_with(&RewardModel::new(graph, params.clone())?, vt, traj)
}

/// Writes `trajectories.csv` (`trip_id,seq,sensor_id,timestamp`); the
/// timestamp column is empty for untimed trajectories.
pub fn write_trajectories<'a>(
    path: &Path,
    graph: &SensorGraph,
    trips: impl IntoIterator<Item = (&'a str, &'a Trajectory)>,
) -> Result<(), GenError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trip_id", "seq", "sensor_id", "timestamp"])?;
    for (id, t) in trips {
        for (seq, loc) in t.locations().iter().enumerate() {
            let ts = t
                .timestamps()
                .map(|ts| ts[seq].to_string())
                .unwrap_or_default();
            w.write_record([id, &seq.to_string(), graph.sensor_id(*loc), &ts])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `trajectories.csv`. Trips are returned in order of first
/// appearance; rows of a trip must carry `seq = 0, 1, 2, ...`.
pub fn read_trajectories(path: &Path, graph: &SensorGraph) -> Result<Vec<(String, Trajectory)>, GenError> {
    let file = path.display().to_string();
    let bad = |line: u64, reason: String| GenError::MalformedRecord {
        file: file.clone(),
        line,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, (Vec<LocationId>, Vec<Option<i64>>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() < 3 {
            return Err(bad(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let trip = rec[0].trim().to_string();
        let seq: usize = rec[1]
            .trim()
            .parse()
            .map_err(|_| bad(line, format!("bad seq {:?}", &rec[1])))?;
        let loc = graph
            .location_of(rec[2].trim())
            .ok_or_else(|| bad(line, format!("unknown sensor id {:?}", &rec[2])))?;
        let ts = match rec.get(3).map(str::trim) {
            None | Some("") => None,
            Some(raw) => Some(
                raw.parse::<i64>()
                    .map_err(|_| bad(line, format!("bad timestamp {raw:?}")))?,
            ),
        };
        let entry = rows.entry(trip.clone()).or_insert_with(|| {
            order.push(trip.clone());
            (Vec::new(), Vec::new())
        });
        if entry.0.len() != seq {
            return Err(bad(line, format!("trip {trip}: expected seq {}, found {seq}", entry.0.len())));
        }
        entry.0.push(loc);
        entry.1.push(ts);
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let (locs, ts) = rows.remove(&id).expect("recorded trip");
        let timestamps = if ts.iter().all(Option::is_some) {
            Some(ts.into_iter().map(Option::unwrap).collect())
        } else if ts.iter().all(Option::is_none) {
            None
        } else {
            return Err(GenError::InvalidTrajectory(format!("trip {id} has partial timestamps")));
        };
        out.push((id, Trajectory::new(locs, timestamps)?));
    }
    Ok(out)
}
