//! `key = value` run configuration.

use std::path::Path;

use ruirl::inference::MhConfig;
use ruirl::predict::PriorMode;
use ruirl::rucore::SolverConfig;
use ruirl::synth::{OdMode, SynthSpec};

use crate::PipelineError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,

    // synthetic world
    pub grid_size: usize,
    pub n_sensors: usize,
    pub n_trips: usize,
    pub true_beta: Vec<f64>,
    pub od_mode: OdMode,
    /// 0 disables arterials.
    pub arterial_every: usize,
    /// 0 keeps every synthetic trip.
    pub synth_min_len: usize,

    // network and preprocessing
    pub k: usize,
    pub cutoff_min: f64,
    pub min_len: usize,

    // sampler
    pub n_iter: usize,
    pub burn_in: usize,
    pub sigmas: Vec<f64>,
    pub adapt_interval: usize,
    pub target_accept: f64,
    pub init_levels: Vec<f64>,

    // value iteration
    pub tolerance: f64,
    pub max_iterations: usize,

    // prediction and evaluation
    pub train_ratio: f64,
    pub n_splits: usize,
    pub thin: usize,
    pub n_samples: usize,
    pub prior: PriorMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthSpec::default();
        let mh = MhConfig::new(vec![0.05, 0.05], 0);
        let solver = SolverConfig::default();
        RunConfig {
            seed: 1,
            grid_size: synth.grid_size,
            n_sensors: synth.n_sensors,
            n_trips: synth.n_trips,
            true_beta: synth.true_beta,
            od_mode: synth.od_mode,
            arterial_every: synth.arterial_every.unwrap_or(0),
            synth_min_len: 0,
            k: synth.k_successors,
            cutoff_min: ruirl::eval::DEFAULT_CUTOFF_MIN,
            min_len: ruirl::eval::DEFAULT_MIN_LEN,
            n_iter: mh.n_iter,
            burn_in: mh.burn_in,
            sigmas: mh.proposal_sigmas,
            adapt_interval: mh.adapt_interval,
            target_accept: mh.target_accept,
            init_levels: vec![0.1, 0.3, 1.0, 3.0, 10.0],
            tolerance: solver.tolerance,
            max_iterations: solver.max_iterations,
            train_ratio: ruirl::eval::DEFAULT_TRAIN_RATIO,
            n_splits: 5,
            thin: 10,
            n_samples: 100,
            prior: PriorMode::Informed,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("cannot parse value {value:?} for key {key}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, PipelineError> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

/// Sets entry `index` (1-based) of a per-parameter vector, growing it if the
/// index is the next one.
fn set_indexed(v: &mut Vec<f64>, key: &str, index: &str, value: f64, seen: &mut Vec<bool>) -> Result<(), PipelineError> {
    let i: usize = parse(key, index)?;
    if i == 0 {
        return Err(PipelineError::Config(format!("{key}: indices start at 1")));
    }
    if seen.len() < i {
        seen.resize(i, false);
    }
    seen[i - 1] = true;
    if v.len() < i {
        v.resize(i, f64::NAN);
    }
    v[i - 1] = value;
    Ok(())
}

impl RunConfig {
    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    /// Unknown keys are an error.
    pub fn parse_str(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = RunConfig::default();
        let mut beta_seen = Vec::new();
        let mut sigma_seen = Vec::new();
        let mut beta_set = false;
        let mut sigma_set = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(idx) = key.strip_prefix("beta_") {
                if !beta_set {
                    cfg.true_beta.clear();
                    beta_set = true;
                }
                set_indexed(&mut cfg.true_beta, key, idx, parse(key, value)?, &mut beta_seen)?;
                continue;
            }
            if let Some(idx) = key.strip_prefix("sigma_") {
                if !sigma_set {
                    cfg.sigmas.clear();
                    sigma_set = true;
                }
                set_indexed(&mut cfg.sigmas, key, idx, parse(key, value)?, &mut sigma_seen)?;
                continue;
            }
            match key {
                "seed" => cfg.seed = parse(key, value)?,
                "grid_size" => cfg.grid_size = parse(key, value)?,
                "n_sensors" => cfg.n_sensors = parse(key, value)?,
                "n_trips" => cfg.n_trips = parse(key, value)?,
                "od_mode" => {
                    cfg.od_mode = match value {
                        "uniform" => OdMode::Uniform,
                        "hub" => OdMode::Hub,
                        _ => return Err(PipelineError::Config(format!("od_mode must be uniform or hub, got {value:?}"))),
                    }
                }
                "arterial_every" => cfg.arterial_every = parse(key, value)?,
                "synth_min_len" => cfg.synth_min_len = parse(key, value)?,
                "k" => cfg.k = parse(key, value)?,
                "cutoff_min" => cfg.cutoff_min = parse(key, value)?,
                "min_len" => cfg.min_len = parse(key, value)?,
                "n_iter" => cfg.n_iter = parse(key, value)?,
                "burn_in" => cfg.burn_in = parse(key, value)?,
                "adapt_interval" => cfg.adapt_interval = parse(key, value)?,
                "target_accept" => cfg.target_accept = parse(key, value)?,
                "init_levels" => cfg.init_levels = parse_list(key, value)?,
                "tolerance" => cfg.tolerance = parse(key, value)?,
                "max_iterations" => cfg.max_iterations = parse(key, value)?,
                "train_ratio" => cfg.train_ratio = parse(key, value)?,
                "n_splits" => cfg.n_splits = parse(key, value)?,
                "thin" => cfg.thin = parse(key, value)?,
                "n_samples" => cfg.n_samples = parse(key, value)?,
                "prior" => {
                    cfg.prior = match value {
                        "informed" => PriorMode::Informed,
                        "uninformed" => PriorMode::Uninformed,
                        _ => return Err(PipelineError::Config(format!("prior must be informed or uninformed, got {value:?}"))),
                    }
                }
                _ => return Err(PipelineError::Config(format!("unknown key {key:?} on line {}", n + 1))),
            }
        }
        for (name, seen) in [("beta", &beta_seen), ("sigma", &sigma_seen)] {
            if let Some(i) = seen.iter().position(|s| !s) {
                return Err(PipelineError::Config(format!("{name}_{} is missing", i + 1)));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: &str| Err(PipelineError::Config(m.into()));
        if self.n_splits == 0 {
            return fail("n_splits must be at least 1");
        }
        if self.init_levels.is_empty() {
            return fail("init_levels must not be empty");
        }
        if !(self.cutoff_min > 0.0) {
            return fail("cutoff_min must be positive");
        }
        self.solver().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.mh_config(0)
            .validate(self.sigmas.len())
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        }
    }

    pub fn mh_config(&self, seed: u64) -> MhConfig {
        MhConfig {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            proposal_sigmas: self.sigmas.clone(),
            adapt_interval: self.adapt_interval,
            target_accept: self.target_accept,
            seed,
        }
    }

    pub fn synth_spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            grid_size: self.grid_size,
            n_sensors: self.n_sensors,
            k_successors: self.k,
            true_beta: self.true_beta.clone(),
            n_trips: self.n_trips,
            od_mode: self.od_mode,
            seed,
            arterial_every: (self.arterial_every > 0).then_some(self.arterial_every),
            min_len: (self.synth_min_len > 0).then_some(self.synth_min_len),
        }
    }
}
