use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use ruirl_cli::{
    cmd_evaluate, cmd_fit, cmd_import, cmd_predict, cmd_synth, cmd_trace, report_table, ImportInputs, RunConfig,
    POSTERIOR,
};

/// Random utility inverse reinforcement learning on sensor-graph trajectories.
#[derive(Parser)]
#[command(name = "ruirl", version)]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for inputs and outputs. Falls back to RUIRL_OUT_DIR, then
    /// to the current directory.
    #[arg(long, global = true, env = "RUIRL_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic road network, sensor graph and trip corpus.
    Synth,
    /// Build the sensor graph and trip corpus from raw files.
    Import {
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        arcs: PathBuf,
        #[arg(long)]
        sensors: PathBuf,
        /// vehicle_id,sensor_id,timestamp
        #[arg(long)]
        detections: PathBuf,
    },
    /// Sample the posterior of β and write posterior.csv.
    Fit,
    /// Predict next locations and write predictions.csv.
    Predict {
        /// Comma-separated sensor ids of a partial trajectory. Without it the
        /// held-out trips are predicted.
        #[arg(long, value_delimiter = ',')]
        partial: Option<Vec<String>>,
    },
    /// Score all methods over seeded splits and write report.csv.
    Evaluate,
    /// Write trace and histogram SVGs for each β coordinate.
    Trace {
        /// Defaults to posterior.csv in the output directory.
        #[arg(long)]
        posterior: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Synth => {
            let s = cmd_synth(&cfg, out)?;
            println!("{} sensors, {} edges, {} trips written to {}", s.n_sensors, s.n_edges, s.n_trips, out.display());
        }
        Command::Import {
            nodes,
            arcs,
            sensors,
            detections,
        } => {
            let inputs = ImportInputs {
                nodes: &nodes,
                arcs: &arcs,
                sensors: &sensors,
                detections: &detections,
            };
            let s = cmd_import(&cfg, &inputs, out)?;
            eprintln!(
                "{} detections from {} vehicles; skipped {} unknown-sensor and {} out-of-order detections",
                s.n_detections, s.n_vehicles, s.unknown_sensor, s.non_increasing_time
            );
            eprintln!(
                "{} trips after splitting; dropped {} infeasible and {} revisiting their destination",
                s.trips_after_split, s.dropped_infeasible, s.dropped_revisit
            );
            println!("{} trips written to {}", s.n_trips, out.display());
        }
        Command::Fit => {
            let s = cmd_fit(&cfg, out)?;
            println!("trained on {} trips from start {:?}", s.n_train, s.init);
            println!("posterior mean {:?}", s.posterior_mean);
            println!("posterior sd   {:?}", s.posterior_sd);
            println!("acceptance rate after burn-in {:.3}", s.acceptance_rate);
        }
        Command::Predict { partial } => {
            let rows = cmd_predict(&cfg, out, partial.as_deref())?;
            if partial.is_some() {
                if let Some(last) = rows.last() {
                    match (&last.predicted_next, last.prob_of_prediction) {
                        (Some(s), Some(p)) => println!("next location {s} (probability {p:.4})"),
                        _ => println!("no prediction possible"),
                    }
                }
            } else {
                println!("{} predictions written", rows.len());
            }
        }
        Command::Evaluate => {
            let e = cmd_evaluate(&cfg, out)?;
            print!("{}", report_table(&e));
        }
        Command::Trace { posterior } => {
            let path = posterior.unwrap_or_else(|| out.join(POSTERIOR));
            for f in cmd_trace(&cfg, &path, out)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
