//! Random-utility primitives: Gumbel sampling, logsumexp, the edge reward,
//! the soft Bellman value solver and logit choice probabilities.

use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::network::{LocationId, SensorGraph};

/// Euler–Mascheroni constant, the mean of a standard Gumbel variable.
pub const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Sweeps without residual decrease (after the warm-up sweeps) that count as
/// divergence.
const DIVERGENCE_WINDOW: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuError {
    #[error("invalid reward parameters: {0}")]
    InvalidParams(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("{to} is not a successor of {from}")]
    NotASuccessor { from: LocationId, to: LocationId },
    #[error("logsumexp of an empty input")]
    EmptyInput,
    #[error("location {0} is not in the graph")]
    UnknownLocation(LocationId),
    #[error("value iteration did not converge: residual {residual:e} after {iterations} sweeps")]
    MaxIterationsExceeded { iterations: usize, residual: f64 },
    #[error("value iteration diverged after {iterations} sweeps (residual {residual:e})")]
    Diverged { iterations: usize, residual: f64 },
    #[error("no successor of {0} can reach the destination")]
    NoFeasibleSuccessor(LocationId),
}

/// θ = (α, β, γ): Gumbel scale, feature weights and discount.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams {
    alpha: f64,
    beta: Vec<f64>,
    gamma: f64,
}

impl RewardParams {
    pub fn new(alpha: f64, beta: Vec<f64>, gamma: f64) -> Result<Self, RuError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(RuError::InvalidParams(format!("alpha must be > 0, got {alpha}")));
        }
        if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(RuError::InvalidParams(format!("beta entries must be >= 0, got {b}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(RuError::InvalidParams(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        Ok(Self { alpha, beta, gamma })
    }

    /// α = γ = 1, the normalisation used for inference.
    pub fn unit(beta: Vec<f64>) -> Result<Self, RuError> {
        Self::new(1.0, beta, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Returns (b·α, b·β, γ).
    pub fn scaled(&self, b: f64) -> Result<Self, RuError> {
        Self::new(
            b * self.alpha,
            self.beta.iter().map(|x| b * x).collect(),
            self.gamma,
        )
    }

    pub fn with_beta(&self, beta: Vec<f64>) -> Result<Self, RuError> {
        Self::new(self.alpha, beta, self.gamma)
    }
}

/// Stopping rule for the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), RuError> {
        if !(self.tolerance > 0.0) {
            return Err(RuError::InvalidConfig(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(RuError::InvalidConfig("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Expected value function for one destination.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub destination: LocationId,
    /// Indexed by location; `-inf` where the destination is unreachable.
    pub values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub tolerance: f64,
}

impl ValueTable {
    #[inline]
    pub fn value(&self, s: LocationId) -> f64 {
        self.values[s.0]
    }

    pub fn is_reachable(&self, s: LocationId) -> bool {
        self.values[s.0].is_finite()
    }
}

#[derive(Debug, Error)]
pub enum ValueTableIoError {
    #[error("malformed value table line {line}: {reason}")]
    MalformedRecord { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Writes `value_table.csv` (`sensor_id,value`); unreachable states are
/// written as `-inf`.
pub fn write_value_table(path: &Path, graph: &SensorGraph, vt: &ValueTable) -> Result<(), ValueTableIoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sensor_id", "value"])?;
    for s in graph.locations() {
        w.write_record([graph.sensor_id(s), &vt.value(s).to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a `value_table.csv` back into a value vector indexed by location.
pub fn read_value_table(path: &Path, graph: &SensorGraph) -> Result<Vec<f64>, ValueTableIoError> {
    let mut values = vec![None; graph.len()];
    let mut rdr = csv::Reader::from_path(path)?;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| ValueTableIoError::MalformedRecord { line, reason };
        if rec.len() != 2 {
            return Err(bad("expected sensor_id,value".into()));
        }
        let s = graph
            .location_of(rec[0].trim())
            .ok_or_else(|| bad(format!("unknown sensor {:?}", &rec[0])))?;
        let v: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("cannot parse value {:?}", &rec[1])))?;
        if values[s.index()].replace(v).is_some() {
            return Err(bad(format!("duplicate sensor {:?}", &rec[0])));
        }
    }
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| ValueTableIoError::MalformedRecord {
                line: 0,
                reason: format!("missing sensor {}", graph.sensor_id(LocationId(i))),
            })
        })
        .collect()
}

/// `α·ln Σ exp(x_i/α)` with max-shift. Returns `-inf` iff every input is `-inf`.
pub fn logsumexp(xs: &[f64], alpha: f64) -> Result<f64, RuError> {
    if xs.is_empty() {
        return Err(RuError::EmptyInput);
    }
    if !(alpha > 0.0) {
        return Err(RuError::InvalidParams(format!("alpha must be > 0, got {alpha}")));
    }
    Ok(soft_max(xs.iter().copied(), alpha))
}

#[inline]
fn soft_max<I: Iterator<Item = f64> + Clone>(xs: I, alpha: f64) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    let sum: f64 = xs.map(|x| ((x - m) / alpha).exp()).sum();
    m + alpha * sum.ln()
}

/// Deterministic reward `r(s, s') = -Σ_k φ_k(s, s')·β_k` of one edge.
pub fn reward(
    graph: &SensorGraph,
    params: &RewardParams,
    s: LocationId,
    s2: LocationId,
) -> Result<f64, RuError> {
    check_features(graph, params)?;
    let e = graph
        .edge_index(s, s2)
        .ok_or(RuError::NotASuccessor { from: s, to: s2 })?;
    Ok(edge_reward(graph.edge_features(e), &params.beta))
}

#[inline]
fn edge_reward(features: &[f64], beta: &[f64]) -> f64 {
    -features.iter().zip(beta).map(|(f, b)| f * b).sum::<f64>()
}

fn check_features(graph: &SensorGraph, params: &RewardParams) -> Result<(), RuError> {
    if graph.n_features() != params.beta.len() {
        return Err(RuError::InvalidParams(format!(
            "graph has {} features but beta has {} entries",
            graph.n_features(),
            params.beta.len()
        )));
    }
    Ok(())
}

/// Rewards of every edge of a graph under fixed parameters, shared by the
/// solver and the choice model.
#[derive(Debug, Clone)]
pub struct RewardModel<'g> {
    graph: &'g SensorGraph,
    params: RewardParams,
    rewards: Vec<f64>,
}

impl<'g> RewardModel<'g> {
    pub fn new(graph: &'g SensorGraph, params: RewardParams) -> Result<Self, RuError> {
        check_features(graph, &params)?;
        let rewards = (0..graph.n_edges())
            .map(|e| edge_reward(graph.edge_features(e), &params.beta))
            .collect();
        Ok(Self {
            graph,
            params,
            rewards,
        })
    }

    pub fn graph(&self) -> &'g SensorGraph {
        self.graph
    }

    pub fn params(&self) -> &RewardParams {
        &self.params
    }

    #[inline]
    pub fn edge_reward(&self, e: usize) -> f64 {
        self.rewards[e]
    }

    pub fn reward(&self, s: LocationId, s2: LocationId) -> Result<f64, RuError> {
        let e = self
            .graph
            .edge_index(s, s2)
            .ok_or(RuError::NotASuccessor { from: s, to: s2 })?;
        Ok(self.rewards[e])
    }

    pub fn solve(&self, d: LocationId, cfg: &SolverConfig) -> Result<ValueTable, RuError> {
        if !self.graph.contains(d) {
            return Err(RuError::UnknownLocation(d));
        }
        let mask = self.graph.reachable_mask(d);
        self.solve_from(d, &mask, cfg, None)
    }

    /// Fixed-point iteration restricted to `reachable` (the mask of
    /// `reachable_to(d)`), optionally warm-started from `warm`.
    ///
    /// Each sweep is a Jacobi update over reachable states in ascending id
    /// order; stops once the sup-norm change falls below `cfg.tolerance`.
    pub fn solve_from(
        &self,
        d: LocationId,
        reachable: &[bool],
        cfg: &SolverConfig,
        warm: Option<&ValueTable>,
    ) -> Result<ValueTable, RuError> {
        cfg.validate()?;
        let n = self.graph.len();
        let states: Vec<usize> = (0..n).filter(|&s| reachable[s] && s != d.0).collect();
        let mut values = vec![f64::NEG_INFINITY; n];
        for &s in &states {
            values[s] = match warm {
                Some(w) if w.values[s].is_finite() => w.values[s],
                _ => 0.0,
            };
        }
        values[d.0] = 0.0;
        let mut next = values.clone();
        let alpha = self.params.alpha;
        let gamma = self.params.gamma;

        let mut prev_residual = f64::INFINITY;
        let mut stalled = 0usize;
        for iteration in 1..=cfg.max_iterations {
            let mut residual: f64 = 0.0;
            for &s in &states {
                let range = self.graph.edge_range(LocationId(s));
                let utilities = range.map(|e| {
                    let v = values[self.graph.edge_target(e).0];
                    self.rewards[e] + gamma * v
                });
                let v_new = soft_max(utilities, alpha);
                residual = residual.max((v_new - values[s]).abs());
                next[s] = v_new;
            }
            std::mem::swap(&mut values, &mut next);
            if !residual.is_finite() {
                return Err(RuError::Diverged {
                    iterations: iteration,
                    residual,
                });
            }
            if residual < cfg.tolerance {
                return Ok(ValueTable {
                    destination: d,
                    values,
                    residual,
                    iterations: iteration,
                    tolerance: cfg.tolerance,
                });
            }
            if iteration > states.len() && residual >= prev_residual {
                stalled += 1;
                if stalled >= DIVERGENCE_WINDOW {
                    return Err(RuError::Diverged {
                        iterations: iteration,
                        residual,
                    });
                }
            } else {
                stalled = 0;
            }
            prev_residual = residual;
        }
        Err(RuError::MaxIterationsExceeded {
            iterations: cfg.max_iterations,
            residual: prev_residual,
        })
    }

    /// Log choice probabilities over `successors(s)` (same order).
    pub fn choice_log_probabilities(
        &self,
        vt: &ValueTable,
        s: LocationId,
    ) -> Result<Vec<f64>, RuError> {
        let mut out = Vec::with_capacity(self.graph.successors(s).len());
        self.choice_log_probabilities_into(vt, s, &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant of [`Self::choice_log_probabilities`].
    pub fn choice_log_probabilities_into(
        &self,
        vt: &ValueTable,
        s: LocationId,
        out: &mut Vec<f64>,
    ) -> Result<(), RuError> {
        if !self.graph.contains(s) {
            return Err(RuError::UnknownLocation(s));
        }
        out.clear();
        let gamma = self.params.gamma;
        let alpha = self.params.alpha;
        for e in self.graph.edge_range(s) {
            let v = vt.values[self.graph.edge_target(e).0];
            out.push((self.rewards[e] + gamma * v) / alpha);
        }
        let lse = soft_max(out.iter().copied(), 1.0);
        if lse == f64::NEG_INFINITY {
            return Err(RuError::NoFeasibleSuccessor(s));
        }
        for x in out.iter_mut() {
            *x -= lse;
        }
        Ok(())
    }

    pub fn choice_probabilities(&self, vt: &ValueTable, s: LocationId) -> Result<Vec<f64>, RuError> {
        Ok(self
            .choice_log_probabilities(vt, s)?
            .into_iter()
            .map(f64::exp)
            .collect())
    }
}

/// Solves the soft Bellman fixed point for destination `d`.
pub fn solve_value(
    graph: &SensorGraph,
    params: &RewardParams,
    d: LocationId,
    cfg: &SolverConfig,
) -> Result<ValueTable, RuError> {
    RewardModel::new(graph, params.clone())?.solve(d, cfg)
}

/// Logit probabilities over `successors(s)`, in ascending successor order.
pub fn choice_probabilities(
    graph: &SensorGraph,
    params: &RewardParams,
    vt: &ValueTable,
    s: LocationId,
) -> Result<Vec<f64>, RuError> {
    RewardModel::new(graph, params.clone())?.choice_probabilities(vt, s)
}

/// Draws `location + scale·(-ln(-ln U))` with `U ~ Uniform(0, 1)`.
pub fn gumbel_sample<R: Rng + ?Sized>(location: f64, scale: f64, rng: &mut R) -> f64 {
    debug_assert!(scale > 0.0);
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    location - scale * (-u.ln()).ln()
}

/// Gumbel draw with location `-scale·γ_EM`, i.e. mean zero.
pub fn gumbel_zero_mean<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    gumbel_sample(-scale * EULER_MASCHERONI, scale, rng)
}
