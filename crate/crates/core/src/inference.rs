//! Bayesian inference on the feature weights β with an adaptive
//! random-walk Metropolis-Hastings sampler.
//!
//! Inference fixes α = γ = 1 (only β/α is identifiable), so the log-likelihood
//! of a corpus collapses to
//!
//! ```text
//! Σ_i [ Σ_t r(s_t, s_{t+1}) − v_{d_i}(o_i) ]  =  −Φ·β − Σ_{(o,d)} n_{od} · v_d(o)
//! ```
//!
//! where Φ is the sum of edge features over every observed step. Only the
//! per-destination value tables depend on β non-linearly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::generative::{trajectory_log_prob_simplified_with, GenError, Trajectory};
use crate::network::{LocationId, SensorGraph};
use crate::rucore::{RewardModel, RewardParams, RuError, SolverConfig, ValueTable};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("log-posterior at the initial point is not finite")]
    NonFiniteInit,
    #[error("every grid point has zero likelihood")]
    AllInfeasible,
    #[error("{file}:{line}: malformed record: {reason}")]
    MalformedRecord {
        file: String,
        line: u64,
        reason: String,
    },
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Ru(#[from] RuError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A corpus of observed trajectories and the set of their destinations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    trip_ids: Vec<String>,
    trajectories: Vec<Trajectory>,
    destinations: Vec<LocationId>,
}

impl Dataset {
    /// Trip ids default to the position in `trajectories`.
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        let ids = (0..trajectories.len()).map(|i| i.to_string()).collect();
        Self::with_ids(ids, trajectories)
    }

    pub fn with_ids(trip_ids: Vec<String>, trajectories: Vec<Trajectory>) -> Self {
        assert_eq!(trip_ids.len(), trajectories.len(), "one id per trajectory");
        let mut destinations: Vec<LocationId> = trajectories.iter().map(Trajectory::destination).collect();
        destinations.sort();
        destinations.dedup();
        Self {
            trip_ids,
            trajectories,
            destinations,
        }
    }

    pub fn from_pairs(pairs: Vec<(String, Trajectory)>) -> Self {
        let (ids, trajs) = pairs.into_iter().unzip();
        Self::with_ids(ids, trajs)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn trip_ids(&self) -> &[String] {
        &self.trip_ids
    }

    /// Distinct final locations, ascending.
    pub fn destinations(&self) -> &[LocationId] {
        &self.destinations
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Trajectory)> {
        self.trip_ids
            .iter()
            .map(String::as_str)
            .zip(self.trajectories.iter())
    }

    /// Checks every trajectory against the graph.
    pub fn validate(&self, graph: &SensorGraph) -> Result<(), GenError> {
        self.trajectories
            .iter()
            .try_for_each(|t| t.check_feasible(graph))
    }
}

/// Value tables for every destination of a dataset, all solved at `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueCache {
    pub beta: Vec<f64>,
    /// Aligned with [`LikelihoodModel::destinations`].
    pub tables: Vec<ValueTable>,
}

/// Sufficient statistics of a dataset for the γ = 1 likelihood.
#[derive(Debug, Clone)]
pub struct LikelihoodModel<'g> {
    graph: &'g SensorGraph,
    destinations: Vec<LocationId>,
    reachable: Vec<Vec<bool>>,
    /// Σ over all observed steps of the edge feature vector.
    feature_totals: Vec<f64>,
    /// `(origin, destination index, count)`.
    od_counts: Vec<(LocationId, usize, u64)>,
    /// Some trajectory passes its own destination before the end.
    impossible: bool,
    solver: SolverConfig,
}

impl<'g> LikelihoodModel<'g> {
    pub fn new(graph: &'g SensorGraph, data: &Dataset, solver: SolverConfig) -> Result<Self, InferenceError> {
        solver.validate()?;
        data.validate(graph)?;
        let destinations = data.destinations().to_vec();
        let dest_index: BTreeMap<LocationId, usize> =
            destinations.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let mut feature_totals = vec![0.0; graph.n_features()];
        let mut counts: BTreeMap<(LocationId, usize), u64> = BTreeMap::new();
        let mut impossible = false;
        for t in data.trajectories() {
            let locs = t.locations();
            if locs[..locs.len() - 1].contains(&t.destination()) {
                impossible = true;
            }
            for w in locs.windows(2) {
                let e = graph.edge_index(w[0], w[1]).expect("validated");
                for (acc, f) in feature_totals.iter_mut().zip(graph.edge_features(e)) {
                    *acc += f;
                }
            }
            *counts
                .entry((t.origin(), dest_index[&t.destination()]))
                .or_default() += 1;
        }
        let reachable = destinations.iter().map(|d| graph.reachable_mask(*d)).collect();
        Ok(Self {
            graph,
            destinations,
            reachable,
            feature_totals,
            od_counts: counts.into_iter().map(|((o, d), c)| (o, d, c)).collect(),
            impossible,
            solver,
        })
    }

    pub fn graph(&self) -> &'g SensorGraph {
        self.graph
    }

    pub fn destinations(&self) -> &[LocationId] {
        &self.destinations
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    /// Solves every destination at `beta` (α = γ = 1), in parallel, optionally
    /// warm-started from `warm`.
    pub fn solve(&self, beta: &[f64], warm: Option<&ValueCache>) -> Result<ValueCache, InferenceError> {
        let model = RewardModel::new(self.graph, RewardParams::unit(beta.to_vec())?)?;
        let tables = self
            .destinations
            .par_iter()
            .enumerate()
            .map(|(i, d)| {
                let w = warm.map(|c| &c.tables[i]);
                model.solve_from(*d, &self.reachable[i], &self.solver, w)
            })
            .collect::<Result<Vec<_>, RuError>>()?;
        Ok(ValueCache {
            beta: beta.to_vec(),
            tables,
        })
    }

    /// Log-likelihood at `cache.beta` given tables solved at that β.
    pub fn evaluate(&self, cache: &ValueCache) -> f64 {
        if self.impossible {
            return f64::NEG_INFINITY;
        }
        let linear: f64 = self
            .feature_totals
            .iter()
            .zip(&cache.beta)
            .map(|(f, b)| f * b)
            .sum();
        let mut total = -linear;
        for &(o, d, count) in &self.od_counts {
            total -= count as f64 * cache.tables[d].value(o);
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    pub fn log_likelihood(&self, beta: &[f64]) -> Result<f64, InferenceError> {
        Ok(self.evaluate(&self.solve(beta, None)?))
    }
}

/// Value tables keyed by destination, all solved at `beta`, filled lazily.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OnDemandCache {
    pub beta: Vec<f64>,
    pub tables: BTreeMap<LocationId, ValueTable>,
}

/// Dataset log-likelihood at β with α = γ = 1, solving destinations missing
/// from `cache` on demand. A cache holding tables for another β is cleared.
pub fn log_likelihood(
    graph: &SensorGraph,
    beta: &[f64],
    data: &Dataset,
    cache: &mut OnDemandCache,
    solver: &SolverConfig,
) -> Result<f64, InferenceError> {
    if cache.beta.as_slice() != beta {
        cache.tables.clear();
        cache.beta = beta.to_vec();
    }
    let model = RewardModel::new(graph, RewardParams::unit(beta.to_vec())?)?;
    let mut total = 0.0;
    for t in data.trajectories() {
        let d = t.destination();
        if !cache.tables.contains_key(&d) {
            cache.tables.insert(d, model.solve(d, solver)?);
        }
        total += trajectory_log_prob_simplified_with(&model, &cache.tables[&d], t)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub proposal_sigmas: Vec<f64>,
    pub adapt_interval: usize,
    pub target_accept: f64,
    pub seed: u64,
}

impl MhConfig {
    pub fn new(proposal_sigmas: Vec<f64>, seed: u64) -> Self {
        Self {
            n_iter: 10_000,
            burn_in: 2_000,
            proposal_sigmas,
            adapt_interval: 50,
            target_accept: 0.30,
            seed,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), InferenceError> {
        let fail = |m: String| Err(InferenceError::InvalidConfig(m));
        if self.burn_in >= self.n_iter {
            return fail(format!("burn_in {} must be < n_iter {}", self.burn_in, self.n_iter));
        }
        if self.proposal_sigmas.len() != dim {
            return fail(format!("{} proposal sigmas for {dim} parameters", self.proposal_sigmas.len()));
        }
        if self.proposal_sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return fail("proposal sigmas must be > 0".into());
        }
        if self.adapt_interval == 0 {
            return fail("adapt_interval must be >= 1".into());
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return fail(format!("target_accept must lie in (0, 1), got {}", self.target_accept));
        }
        Ok(())
    }
}

/// Current position of the chain with its value tables.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub beta: Vec<f64>,
    pub log_posterior: f64,
    pub cache: ValueCache,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub rho: f64,
}

/// `min{exp(candidate − current), 1}` under a flat prior on `[0, ∞)^K`;
/// zero outside the support.
pub fn acceptance_probability(current_log_post: f64, candidate_log_post: f64, in_support: bool) -> f64 {
    if !in_support || candidate_log_post == f64::NEG_INFINITY {
        return 0.0;
    }
    (candidate_log_post - current_log_post).exp().min(1.0)
}

/// One Metropolis-Hastings transition with proposal `N(β, diag(σ²))`. The
/// Gaussian proposal is symmetric so only the likelihood ratio remains.
/// Candidates whose value iteration fails have zero likelihood.
pub fn mh_step<R: Rng + ?Sized>(
    model: &LikelihoodModel<'_>,
    state: &mut ChainState,
    sigmas: &[f64],
    rng: &mut R,
) -> StepOutcome {
    let candidate: Vec<f64> = state
        .beta
        .iter()
        .zip(sigmas)
        .map(|(b, s)| {
            let z: f64 = rng.sample(StandardNormal);
            b + s * z
        })
        .collect();
    let u: f64 = rng.random();
    let in_support = candidate.iter().all(|b| *b >= 0.0);
    let solved = if in_support {
        model.solve(&candidate, Some(&state.cache)).ok()
    } else {
        None
    };
    let candidate_lp = solved
        .as_ref()
        .map(|c| model.evaluate(c))
        .unwrap_or(f64::NEG_INFINITY);
    let rho = acceptance_probability(state.log_posterior, candidate_lp, in_support);
    let accepted = u < rho;
    if accepted {
        state.beta = candidate;
        state.log_posterior = candidate_lp;
        state.cache = solved.expect("accepted candidates were solved");
    }
    StepOutcome { accepted, rho }
}

/// The full sample path of a run, including the initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub samples: Vec<Vec<f64>>,
    pub log_posteriors: Vec<f64>,
    pub accepted: Vec<bool>,
    pub config: MhConfig,
    /// Proposal scales in force after burn-in.
    pub final_sigmas: Vec<f64>,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Samples after the burn-in iterations.
    pub fn post_burn_in(&self) -> &[Vec<f64>] {
        &self.samples[(self.config.burn_in + 1).min(self.samples.len())..]
    }

    pub fn acceptance_rate_after_burn_in(&self) -> f64 {
        let tail = &self.accepted[(self.config.burn_in + 1).min(self.accepted.len())..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|a| **a).count() as f64 / tail.len() as f64
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        column_means(self.post_burn_in())
    }

    pub fn posterior_sd(&self) -> Vec<f64> {
        let samples = self.post_burn_in();
        let mean = column_means(samples);
        let n = samples.len().max(2) as f64;
        (0..mean.len())
            .map(|k| {
                let ss: f64 = samples.iter().map(|s| (s[k] - mean[k]).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            })
            .collect()
    }

    /// Empirical quantile `q` of coordinate `k` over the post-burn-in chain.
    pub fn quantile(&self, k: usize, q: f64) -> f64 {
        let mut xs: Vec<f64> = self.post_burn_in().iter().map(|s| s[k]).collect();
        xs.sort_by(f64::total_cmp);
        quantile_sorted(&xs, q)
    }

    /// Post-burn-in samples thinned with [`thin_samples`].
    pub fn thinned(&self, every: usize, max_samples: usize) -> Vec<Vec<f64>> {
        thin_samples(self.post_burn_in(), every, max_samples)
    }
}

/// Every `every`-th sample; if that leaves more than `max_samples` (and
/// `max_samples > 0`), an evenly spaced subset of them.
pub fn thin_samples(samples: &[Vec<f64>], every: usize, max_samples: usize) -> Vec<Vec<f64>> {
    let every = every.max(1);
    let picked: Vec<&Vec<f64>> = samples.iter().skip(every - 1).step_by(every).collect();
    if picked.len() <= max_samples || max_samples == 0 {
        return picked.into_iter().cloned().collect();
    }
    (0..max_samples)
        .map(|i| picked[i * picked.len() / max_samples].clone())
        .collect()
}

fn column_means(samples: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let mut mean = vec![0.0; first.len()];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= samples.len() as f64);
    mean
}

/// Linear interpolation between order statistics.
pub fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    xs[lo] + (xs[hi] - xs[lo]) * frac
}

/// Runs `cfg.n_iter` Metropolis-Hastings iterations from `init`.
///
/// During burn-in every `adapt_interval` iterations all proposal scales are
/// multiplied by `exp(0.1)` when the window acceptance rate exceeds
/// `target_accept` and by `exp(-0.1)` otherwise. Scales are frozen afterwards.
pub fn run_mh(
    graph: &SensorGraph,
    data: &Dataset,
    cfg: &MhConfig,
    solver: &SolverConfig,
    init: &[f64],
) -> Result<PosteriorChain, InferenceError> {
    if data.is_empty() {
        return Err(InferenceError::EmptyDataset);
    }
    cfg.validate(graph.n_features())?;
    if init.len() != graph.n_features() || init.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
        return Err(InferenceError::NonFiniteInit);
    }
    let model = LikelihoodModel::new(graph, data, *solver)?;
    let cache = model.solve(init, None).map_err(|_| InferenceError::NonFiniteInit)?;
    let log_posterior = model.evaluate(&cache);
    if !log_posterior.is_finite() {
        return Err(InferenceError::NonFiniteInit);
    }
    let mut state = ChainState {
        beta: init.to_vec(),
        log_posterior,
        cache,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sigmas = cfg.proposal_sigmas.clone();
    let mut chain = PosteriorChain {
        samples: Vec::with_capacity(cfg.n_iter + 1),
        log_posteriors: Vec::with_capacity(cfg.n_iter + 1),
        accepted: Vec::with_capacity(cfg.n_iter + 1),
        config: cfg.clone(),
        final_sigmas: Vec::new(),
    };
    chain.samples.push(state.beta.clone());
    chain.log_posteriors.push(state.log_posterior);
    chain.accepted.push(false);

    let mut window_accepts = 0usize;
    for iter in 1..=cfg.n_iter {
        let outcome = mh_step(&model, &mut state, &sigmas, &mut rng);
        chain.samples.push(state.beta.clone());
        chain.log_posteriors.push(state.log_posterior);
        chain.accepted.push(outcome.accepted);
        if iter <= cfg.burn_in {
            window_accepts += usize::from(outcome.accepted);
            if iter % cfg.adapt_interval == 0 {
                let rate = window_accepts as f64 / cfg.adapt_interval as f64;
                let factor = if rate > cfg.target_accept { 0.1f64.exp() } else { (-0.1f64).exp() };
                sigmas.iter_mut().for_each(|s| *s *= factor);
                window_accepts = 0;
            }
        }
    }
    chain.final_sigmas = sigmas;
    Ok(chain)
}

/// The grid point of highest log-likelihood. Points outside the prior
/// support or whose value iteration fails count as zero likelihood; ties
/// keep the earliest point.
pub fn grid_init(model: &LikelihoodModel<'_>, grid: &[Vec<f64>]) -> Result<Vec<f64>, InferenceError> {
    let mut best: Option<(f64, &Vec<f64>)> = None;
    for point in grid {
        if point.iter().any(|b| !(*b >= 0.0)) {
            continue;
        }
        let ll = model.log_likelihood(point).unwrap_or(f64::NEG_INFINITY);
        if ll == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|(b, _)| ll > b) {
            best = Some((ll, point));
        }
    }
    best.map(|(_, p)| p.clone()).ok_or(InferenceError::AllInfeasible)
}

/// Cartesian product of `levels` over `dim` coordinates.
pub fn product_grid(levels: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut grid = vec![Vec::new()];
    for _ in 0..dim {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                levels.iter().map(move |l| {
                    let mut q = p.clone();
                    q.push(*l);
                    q
                })
            })
            .collect();
    }
    grid
}

/// Writes `posterior.csv`: `iter,beta_1,...,beta_K,log_posterior,accepted`.
pub fn write_posterior(path: &Path, chain: &PosteriorChain) -> Result<(), InferenceError> {
    let mut out = String::from("iter");
    for k in 1..=chain.dim() {
        let _ = write!(out, ",beta_{k}");
    }
    out.push_str(",log_posterior,accepted\n");
    for (i, s) in chain.samples.iter().enumerate() {
        let _ = write!(out, "{i}");
        for b in s {
            let _ = write!(out, ",{b}");
        }
        let _ = writeln!(
            out,
            ",{},{}",
            chain.log_posteriors[i],
            u8::from(chain.accepted[i])
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Rows of a `posterior.csv` file.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTrace {
    pub samples: Vec<Vec<f64>>,
    pub log_posteriors: Vec<f64>,
    pub accepted: Vec<bool>,
}

pub fn read_posterior(path: &Path) -> Result<PosteriorTrace, InferenceError> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let n_cols = rdr.headers()?.len();
    if n_cols < 4 {
        return Err(InferenceError::MalformedRecord {
            file,
            line: 1,
            reason: "expected iter,beta_1..beta_K,log_posterior,accepted".into(),
        });
    }
    let dim = n_cols - 3;
    let mut trace = PosteriorTrace {
        samples: Vec::new(),
        log_posteriors: Vec::new(),
        accepted: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<f64, InferenceError> {
            rec[i].trim().parse().map_err(|_| InferenceError::MalformedRecord {
                file: file.clone(),
                line,
                reason: format!("cannot parse {:?}", &rec[i]),
            })
        };
        let beta = (1..=dim).map(num).collect::<Result<Vec<_>, _>>()?;
        trace.samples.push(beta);
        trace.log_posteriors.push(num(dim + 1)?);
        trace.accepted.push(matches!(rec[dim + 2].trim(), "1" | "true"));
    }
    Ok(trace)
}
