//! File-based pipeline behind the `ruirl` binary: synthetic data, import,
//! posterior fitting, prediction, evaluation and trace plots.

pub mod config;
pub mod plot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use ruirl::baselines::{markov_fit, write_markov_model, MarkovPredictor, NearestNeighbor, RandomNeighbor};
use ruirl::eval::{
    average_reports, evaluate, format_table, split_trips, train_test_split, write_report, EvalError, EvalReport,
};
use ruirl::generative::{read_trajectories, write_trajectories, GenError, Trajectory};
use ruirl::inference::{
    grid_init, product_grid, read_posterior, run_mh, thin_samples, write_posterior, Dataset, InferenceError,
    LikelihoodModel, PosteriorChain,
};
use ruirl::network::{
    derive_sensor_graph, load_road_network, load_sensor_graph, load_sensors, save_sensor_graph, sensor_distances,
    LocationId, Metric, NetworkError, SensorGraph, SuccessorPolicy,
};
use ruirl::predict::{
    build_destination_prior, write_predictions, PredictError, PredictionRow, PredictorState, PriorMode,
    RuIrlPredictor,
};
use ruirl::synth::{make_corpus, make_world, SynthError};

pub use config::RunConfig;

pub const ROAD_NODES: &str = "road_nodes.csv";
pub const ROAD_ARCS: &str = "road_arcs.csv";
pub const SENSORS: &str = "sensors.csv";
pub const SENSOR_GRAPH: &str = "sensor_graph.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const DETECTIONS: &str = "detections.csv";
pub const POSTERIOR: &str = "posterior.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const REPORT: &str = "report.csv";
pub const MARKOV_MODEL: &str = "markov_model.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed {file} line {line}: {reason}")]
    MalformedRecord { file: String, line: u64, reason: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Named random substreams; every random choice in the pipeline derives
/// from the single run seed through one of these.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    World = 1,
    Corpus = 2,
    Split = 3,
    Mh = 4,
    Random = 5,
}

pub fn substream(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | index);
    rng.next_u64()
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn require(path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
        })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_graph(dir: &Path) -> Result<SensorGraph, PipelineError> {
    let (s, g) = (dir.join(SENSORS), dir.join(SENSOR_GRAPH));
    require(&s)?;
    require(&g)?;
    Ok(load_sensor_graph(&s, &g)?)
}

pub fn load_corpus(dir: &Path, graph: &SensorGraph) -> Result<Dataset, PipelineError> {
    let path = dir.join(TRAJECTORIES);
    require(&path)?;
    let data = Dataset::from_pairs(read_trajectories(&path, graph)?);
    data.validate(graph)?;
    Ok(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub n_sensors: usize,
    pub n_edges: usize,
    pub n_trips: usize,
}

/// Writes a synthetic world and corpus: road network, sensors, sensor
/// graph, trajectories, and the same trips as raw detections.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<SynthSummary, PipelineError> {
    ensure_dir(out)?;
    let spec = cfg.synth_spec(substream(cfg.seed, Stream::World, 0));
    let world = make_world(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, Stream::Corpus, 0));
    let data = make_corpus(&world, &spec, &mut rng)?;
    world.road.save(&out.join(ROAD_NODES), &out.join(ROAD_ARCS))?;
    save_sensor_graph(&world.graph, &out.join(SENSORS), &out.join(SENSOR_GRAPH))?;
    write_trajectories(&out.join(TRAJECTORIES), &world.graph, data.iter())?;
    let mut w = csv::Writer::from_path(out.join(DETECTIONS))?;
    w.write_record(["vehicle_id", "sensor_id", "timestamp"])?;
    for (id, t) in data.iter() {
        let ts = t.timestamps().expect("synthetic trips are timed");
        for (loc, stamp) in t.locations().iter().zip(ts) {
            w.write_record([id, world.graph.sensor_id(*loc), &stamp.to_string()])?;
        }
    }
    w.flush().map_err(|source| PipelineError::Io {
        path: out.join(DETECTIONS),
        source,
    })?;
    Ok(SynthSummary {
        n_sensors: world.graph.len(),
        n_edges: world.graph.n_edges(),
        n_trips: data.len(),
    })
}

pub struct ImportInputs<'a> {
    pub nodes: &'a Path,
    pub arcs: &'a Path,
    pub sensors: &'a Path,
    pub detections: &'a Path,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportSummary {
    pub n_vehicles: usize,
    pub n_detections: usize,
    pub unknown_sensor: usize,
    pub non_increasing_time: usize,
    pub trips_after_split: usize,
    pub dropped_infeasible: usize,
    pub dropped_revisit: usize,
    pub n_trips: usize,
}

/// Builds the sensor graph from raw files and turns per-vehicle detection
/// streams into trips: consecutive repeats are collapsed, streams are split
/// at long gaps, and trips the model cannot explain are dropped.
pub fn cmd_import(cfg: &RunConfig, inputs: &ImportInputs<'_>, out: &Path) -> Result<ImportSummary, PipelineError> {
    for p in [inputs.nodes, inputs.arcs, inputs.sensors, inputs.detections] {
        require(p)?;
    }
    ensure_dir(out)?;
    let road = load_road_network(inputs.arcs, inputs.nodes)?;
    let sensors = load_sensors(inputs.sensors)?;
    let graph = derive_sensor_graph(&road, sensors, SuccessorPolicy::KNearest(cfg.k))?;

    let mut summary = ImportSummary::default();
    let mut streams: BTreeMap<String, Vec<(i64, String)>> = BTreeMap::new();
    let file = inputs.detections.display().to_string();
    let mut rdr = csv::Reader::from_path(inputs.detections)?;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(PipelineError::MalformedRecord {
                file,
                line,
                reason: "expected vehicle_id,sensor_id,timestamp".into(),
            });
        }
        let ts: i64 = rec[2].trim().parse().map_err(|_| PipelineError::MalformedRecord {
            file: file.clone(),
            line,
            reason: format!("bad timestamp {:?}", &rec[2]),
        })?;
        summary.n_detections += 1;
        streams
            .entry(rec[0].trim().to_string())
            .or_default()
            .push((ts, rec[1].trim().to_string()));
    }
    summary.n_vehicles = streams.len();

    let mut trips = Vec::new();
    for (vehicle, mut dets) in streams {
        dets.sort_by_key(|d| d.0);
        let mut locs: Vec<LocationId> = Vec::new();
        let mut stamps: Vec<i64> = Vec::new();
        for (ts, sensor) in dets {
            let Some(loc) = graph.location_of(&sensor) else {
                summary.unknown_sensor += 1;
                continue;
            };
            if locs.last() == Some(&loc) {
                continue;
            }
            if stamps.last().is_some_and(|&last| ts <= last) {
                summary.non_increasing_time += 1;
                continue;
            }
            locs.push(loc);
            stamps.push(ts);
        }
        if locs.is_empty() {
            continue;
        }
        let stream = Trajectory::new(locs, Some(stamps))?;
        for (k, trip) in split_trips(&stream, cfg.cutoff_min, cfg.min_len)?.into_iter().enumerate() {
            summary.trips_after_split += 1;
            if trip.check_feasible(&graph).is_err() {
                summary.dropped_infeasible += 1;
                continue;
            }
            let d = trip.destination();
            if trip.locations()[..trip.len() - 1].contains(&d) {
                summary.dropped_revisit += 1;
                continue;
            }
            trips.push((format!("{vehicle}_{k}"), trip));
        }
    }
    summary.n_trips = trips.len();
    road.save(&out.join(ROAD_NODES), &out.join(ROAD_ARCS))?;
    save_sensor_graph(&graph, &out.join(SENSORS), &out.join(SENSOR_GRAPH))?;
    write_trajectories(&out.join(TRAJECTORIES), &graph, trips.iter().map(|(id, t)| (id.as_str(), t)))?;
    Ok(summary)
}

/// Grid-search start followed by the adaptive random-walk sampler.
pub fn fit_chain(cfg: &RunConfig, graph: &SensorGraph, train: &Dataset, mh_seed: u64) -> Result<PosteriorChain, PipelineError> {
    let solver = cfg.solver();
    let model = LikelihoodModel::new(graph, train, solver)?;
    let init = grid_init(&model, &product_grid(&cfg.init_levels, graph.n_features()))?;
    Ok(run_mh(graph, train, &cfg.mh_config(mh_seed), &solver, &init)?)
}

fn split(cfg: &RunConfig, data: &Dataset, index: u64) -> Result<(Dataset, Dataset), PipelineError> {
    Ok(train_test_split(data, cfg.train_ratio, substream(cfg.seed, Stream::Split, index))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub n_train: usize,
    pub init: Vec<f64>,
    pub posterior_mean: Vec<f64>,
    pub posterior_sd: Vec<f64>,
    pub acceptance_rate: f64,
}

/// Fits the posterior on the training part of the first split and writes
/// `posterior.csv`.
pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<FitSummary, PipelineError> {
    let graph = load_graph(out)?;
    let data = load_corpus(out, &graph)?;
    let (train, _) = split(cfg, &data, 0)?;
    let chain = fit_chain(cfg, &graph, &train, substream(cfg.seed, Stream::Mh, 0))?;
    write_posterior(&out.join(POSTERIOR), &chain)?;
    Ok(FitSummary {
        n_train: train.len(),
        init: chain.samples[0].clone(),
        posterior_mean: chain.posterior_mean(),
        posterior_sd: chain.posterior_sd(),
        acceptance_rate: chain.acceptance_rate_after_burn_in(),
    })
}

/// Reads `posterior.csv` and keeps the thinned post-burn-in samples.
pub fn posterior_samples(cfg: &RunConfig, path: &Path) -> Result<Vec<Vec<f64>>, PipelineError> {
    require(path)?;
    let trace = read_posterior(path)?;
    let start = (cfg.burn_in + 1).min(trace.samples.len());
    let samples = thin_samples(&trace.samples[start..], cfg.thin, cfg.n_samples);
    if samples.is_empty() {
        return Err(PipelineError::Config(format!(
            "{} has no samples after burn_in = {}",
            path.display(),
            cfg.burn_in
        )));
    }
    Ok(samples)
}

fn prediction_rows(state: &PredictorState<'_>, id: &str, traj: &Trajectory, open_end: bool) -> Vec<PredictionRow> {
    let graph = state.graph();
    let locs = traj.locations();
    let mut rows = Vec::new();
    let mut session = state.session(traj.origin()).ok();
    let steps = if open_end { locs.len() } else { locs.len() - 1 };
    for t in 0..steps {
        let pred = session.as_mut().and_then(|s| s.predict().ok());
        let next = locs.get(t + 1).copied();
        rows.push(PredictionRow {
            trip_id: id.to_string(),
            step: t,
            observed_next: next.map(|l| graph.sensor_id(l).to_string()).unwrap_or_default(),
            predicted_next: pred.map(|(l, _)| graph.sensor_id(l).to_string()),
            prob_of_prediction: pred.map(|(_, p)| p),
        });
        if let (Some(s), Some(n)) = (session.as_mut(), next) {
            if s.observe(n).is_err() {
                session = None;
            }
        }
    }
    rows
}

/// Next-location predictions with the fitted posterior. With `partial`
/// (sensor ids) the final row is the prediction after the whole prefix;
/// otherwise every test trip of the first split is predicted step by step.
pub fn cmd_predict(cfg: &RunConfig, out: &Path, partial: Option<&[String]>) -> Result<Vec<PredictionRow>, PipelineError> {
    let graph = load_graph(out)?;
    let data = load_corpus(out, &graph)?;
    let (train, test) = split(cfg, &data, 0)?;
    let samples = posterior_samples(cfg, &out.join(POSTERIOR))?;
    let prior = build_destination_prior(&train, cfg.prior)?;
    let state = PredictorState::new(&graph, samples, prior, &cfg.solver())?;
    let rows = match partial {
        Some(ids) => {
            let locs = ids
                .iter()
                .map(|id| {
                    graph
                        .location_of(id)
                        .ok_or_else(|| PipelineError::Config(format!("unknown sensor {id:?} in partial trajectory")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let traj = Trajectory::from_locations(locs)?;
            traj.check_feasible(&graph)?;
            prediction_rows(&state, "partial", &traj, true)
        }
        None => test
            .iter()
            .flat_map(|(id, t)| prediction_rows(&state, id, t, false))
            .collect(),
    };
    write_predictions(&out.join(PREDICTIONS), &rows)?;
    Ok(rows)
}

pub struct Evaluation {
    pub per_split: Vec<(EvalReport, u64)>,
    pub averaged: Vec<EvalReport>,
}

/// Refits and scores all methods on `n_splits` seeded train/test splits,
/// writes `report.csv` and `markov_model.csv` (first split), and returns the
/// per-split and averaged reports.
pub fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<Evaluation, PipelineError> {
    let graph = load_graph(out)?;
    let data = load_corpus(out, &graph)?;
    for f in [ROAD_NODES, ROAD_ARCS] {
        require(&out.join(f))?;
    }
    let road = load_road_network(&out.join(ROAD_ARCS), &out.join(ROAD_NODES))?;
    let distances = sensor_distances(&road, graph.sensors())?;
    let solver = cfg.solver();
    let mut per_split = Vec::new();
    let mut by_method: Vec<Vec<EvalReport>> = Vec::new();
    for i in 0..cfg.n_splits as u64 {
        let split_seed = substream(cfg.seed, Stream::Split, i);
        let (train, test) = split(cfg, &data, i)?;
        let chain = fit_chain(cfg, &graph, &train, substream(cfg.seed, Stream::Mh, i))?;
        let samples = chain.thinned(cfg.thin, cfg.n_samples);
        let informed = PredictorState::new(
            &graph,
            samples.clone(),
            build_destination_prior(&train, PriorMode::Informed)?,
            &solver,
        )?;
        let uninformed = PredictorState::new(
            &graph,
            samples,
            build_destination_prior(&train, PriorMode::Uninformed)?,
            &solver,
        )?;
        let markov = markov_fit(&train);
        if i == 0 {
            write_markov_model(&out.join(MARKOV_MODEL), &markov, &graph)?;
        }
        let reports = vec![
            evaluate(
                &RuIrlPredictor {
                    state: &informed,
                    label: "RU-IRL (inf.)".into(),
                },
                &distances,
                &test,
            ),
            evaluate(
                &RuIrlPredictor {
                    state: &uninformed,
                    label: "RU-IRL (uninf.)".into(),
                },
                &distances,
                &test,
            ),
            evaluate(&NearestNeighbor { graph: &graph, metric: Metric::Distance }, &distances, &test),
            evaluate(&NearestNeighbor { graph: &graph, metric: Metric::Time }, &distances, &test),
            evaluate(&MarkovPredictor { graph: &graph, model: markov }, &distances, &test),
            evaluate(
                &RandomNeighbor {
                    graph: &graph,
                    seed: substream(cfg.seed, Stream::Random, i),
                },
                &distances,
                &test,
            ),
        ];
        by_method.resize(reports.len(), Vec::new());
        for (m, r) in reports.into_iter().enumerate() {
            by_method[m].push(r.clone());
            per_split.push((r, split_seed));
        }
    }
    let averaged: Vec<EvalReport> = by_method.iter().filter_map(|rs| average_reports(rs)).collect();
    let mut rows: Vec<(EvalReport, Option<u64>)> = per_split.iter().map(|(r, s)| (r.clone(), Some(*s))).collect();
    rows.extend(averaged.iter().map(|r| (r.clone(), None)));
    write_report(&out.join(REPORT), &rows)?;
    Ok(Evaluation { per_split, averaged })
}

pub fn report_table(eval: &Evaluation) -> String {
    format_table(&eval.averaged)
}

/// One trace plot and one histogram of the post-burn-in samples per
/// coordinate of β.
pub fn cmd_trace(cfg: &RunConfig, posterior: &Path, out: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    require(posterior)?;
    ensure_dir(out)?;
    let trace = read_posterior(posterior)?;
    let dim = trace.samples.first().map_or(0, Vec::len);
    let start = (cfg.burn_in + 1).min(trace.samples.len());
    let mut written = Vec::new();
    for k in 0..dim {
        let series: Vec<f64> = trace.samples.iter().map(|s| s[k]).collect();
        let name = format!("beta_{}", k + 1);
        let t = out.join(format!("trace_{name}.svg"));
        write_file(&t, &plot::trace_svg(&name, &series, cfg.burn_in))?;
        let h = out.join(format!("hist_{name}.svg"));
        write_file(&h, &plot::histogram_svg(&name, &series[start..], 40))?;
        written.push(t);
        written.push(h);
    }
    Ok(written)
}
