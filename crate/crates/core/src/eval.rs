//! Trip segmentation, train/test splitting and next-location accuracy.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::generative::{GenError, Trajectory};
use crate::inference::Dataset;
use crate::network::{LocationId, SensorDistances};

/// Gap (minutes) above which a detection stream is split into separate trips.
pub const DEFAULT_CUTOFF_MIN: f64 = 30.0;
/// Trips with fewer observations are discarded.
pub const DEFAULT_MIN_LEN: usize = 6;
pub const DEFAULT_TRAIN_RATIO: f64 = 0.8;
/// Near-miss radii (km) of the two relaxed accuracy metrics.
pub const NEAR_MISS_KM: [f64; 2] = [0.5, 1.0];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("stream has no timestamps")]
    MissingTimestamps,
    #[error("split ratio must lie in (0, 1), got {0}")]
    InvalidRatio(f64),
    #[error("split of {n} trips at ratio {ratio} leaves an empty partition")]
    EmptyPartition { n: usize, ratio: f64 },
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Splits a timestamped stream wherever consecutive detections are more than
/// `cutoff_min` minutes apart, then drops pieces shorter than `min_len`.
pub fn split_trips(stream: &Trajectory, cutoff_min: f64, min_len: usize) -> Result<Vec<Trajectory>, EvalError> {
    let ts = stream.timestamps().ok_or(EvalError::MissingTimestamps)?;
    let locs = stream.locations();
    let cutoff_s = cutoff_min * 60.0;
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=locs.len() {
        let boundary = i == locs.len() || (ts[i] - ts[i - 1]) as f64 > cutoff_s;
        if boundary {
            if i - start >= min_len {
                out.push(Trajectory::new(
                    locs[start..i].to_vec(),
                    Some(ts[start..i].to_vec()),
                )?);
            }
            start = i;
        }
    }
    Ok(out)
}

/// Uniform random partition at trip granularity: `round(ratio·n)` trips go
/// to training. Both parts keep the input order.
pub fn train_test_split(trips: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset), EvalError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(EvalError::InvalidRatio(ratio));
    }
    let n = trips.len();
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(EvalError::EmptyPartition { n, ratio });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (i, (id, t)) in trips.iter().enumerate() {
        let row = (id.to_string(), t.clone());
        if is_train[i] {
            train.push(row);
        } else {
            test.push(row);
        }
    }
    Ok((Dataset::from_pairs(train), Dataset::from_pairs(test)))
}

/// Anything that predicts the next location of a trajectory from its prefix.
pub trait NextLocationPredictor: Sync {
    fn name(&self) -> String;

    /// Entry `t` is the guess for `s_{t+1}` given `s_0..s_t`; `None` marks a
    /// failed prediction. `traj_index` identifies the trajectory for
    /// predictors that need per-trajectory randomness.
    fn predict_steps(&self, traj_index: usize, traj: &Trajectory) -> Vec<Option<LocationId>>;
}

/// Accuracies in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub acc: f64,
    pub acc_05: f64,
    pub acc_10: f64,
    pub n_locations: usize,
    pub n_trajectories: usize,
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    exact: usize,
    near_05: usize,
    near_10: usize,
    total: usize,
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            exact: self.exact + o.exact,
            near_05: self.near_05 + o.near_05,
            near_10: self.near_10 + o.near_10,
            total: self.total + o.total,
        }
    }
}

/// Scores every step of every test trajectory. Near misses use the shorter
/// of the two directed road distances between predicted and true sensor.
pub fn evaluate<P: NextLocationPredictor + ?Sized>(
    predictor: &P,
    distances: &SensorDistances,
    test: &Dataset,
) -> EvalReport {
    let counts = test
        .trajectories()
        .par_iter()
        .enumerate()
        .map(|(i, traj)| {
            let preds = predictor.predict_steps(i, traj);
            let locs = traj.locations();
            let mut c = Counts::default();
            for t in 0..locs.len() - 1 {
                c.total += 1;
                let Some(Some(pred)) = preds.get(t) else { continue };
                let truth = locs[t + 1];
                if *pred == truth {
                    c.exact += 1;
                    c.near_05 += 1;
                    c.near_10 += 1;
                    continue;
                }
                let d = distances
                    .distance_km(*pred, truth)
                    .min(distances.distance_km(truth, *pred));
                c.near_05 += usize::from(d < NEAR_MISS_KM[0]);
                c.near_10 += usize::from(d < NEAR_MISS_KM[1]);
            }
            c
        })
        .reduce(Counts::default, |a, b| a + b);
    let pct = |x: usize| {
        if counts.total == 0 {
            0.0
        } else {
            100.0 * x as f64 / counts.total as f64
        }
    };
    EvalReport {
        method: predictor.name(),
        acc: pct(counts.exact),
        acc_05: pct(counts.near_05),
        acc_10: pct(counts.near_10),
        n_locations: counts.total,
        n_trajectories: test.len(),
    }
}

/// Mean of several reports of the same method (one per split seed).
pub fn average_reports(reports: &[EvalReport]) -> Option<EvalReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(EvalReport {
        method: first.method.clone(),
        acc: mean(|r| r.acc),
        acc_05: mean(|r| r.acc_05),
        acc_10: mean(|r| r.acc_10),
        n_locations: (mean(|r| r.n_locations as f64)).round() as usize,
        n_trajectories: (mean(|r| r.n_trajectories as f64)).round() as usize,
    })
}

/// Writes `report.csv`: `method,acc,acc_05,acc_10,n_locations,n_trajectories,seed`.
/// Rows without a seed (averages) get `mean` in the seed column.
pub fn write_report(path: &Path, rows: &[(EvalReport, Option<u64>)]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "acc", "acc_05", "acc_10", "n_locations", "n_trajectories", "seed"])?;
    for (r, seed) in rows {
        w.write_record([
            r.method.clone(),
            r.acc.to_string(),
            r.acc_05.to_string(),
            r.acc_10.to_string(),
            r.n_locations.to_string(),
            r.n_trajectories.to_string(),
            seed.map(|s| s.to_string()).unwrap_or_else(|| "mean".into()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text accuracy table, one method per row.
pub fn format_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>7}  {:>9}  {:>9}", "Method", "Acc", "Acc<0.5", "Acc<1.0");
    let _ = writeln!(out, "{}", "-".repeat(width + 33));
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.2}  {:>9.2}  {:>9.2}",
            r.method, r.acc, r.acc_05, r.acc_10
        );
    }
    out
}
