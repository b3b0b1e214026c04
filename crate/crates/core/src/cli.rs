//! Command-line front end: `simulate`, `infer` and `diagnose`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::error::{Error, Result};
use crate::io::{self, InitMode, RunDocument};
use crate::model::{ModelParams, ObservationSet, PriorHyperparams, TimeGrid};
use crate::params::empirical::empirical_hyperparams;
use crate::rng::SimRng;
use crate::sampler::diagnostics::{flatten_params, Diagnostics};
use crate::sampler::{
    empirical_marginals, hyper_from_params, run_sampler, GibbsState, SamplerConfig,
};
use crate::sim;

const DEFAULT_SEED: u64 = 0;
const DEFAULT_SAMPLES: usize = 1000;
const DEFAULT_OBSERVATIONS: usize = 20;

#[derive(Debug, Parser)]
#[command(
    name = "ssde",
    version,
    about = "Gibbs sampling for switching linear SDEs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a mode path, a state path and noisy observations.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on an observation file.
    Infer(InferArgs),
    /// Recompute diagnostics from a stored run.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON run document holding the model.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for truth_z.csv, truth_y.csv and obs.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Time horizon T.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Grid step h.
    #[arg(long, allow_negative_numbers = true)]
    pub step: Option<f64>,
    /// Number of evenly spaced observations.
    #[arg(long)]
    pub observations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// JSON run document with grid, sampler settings and optional model or hyperparameters.
    #[arg(long)]
    pub config: PathBuf,
    /// Observation CSV with columns t, x1, ..., xn.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Total number of sweeps.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Sweeps discarded before retention.
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Keep every `thin`-th sweep after burn-in.
    #[arg(long)]
    pub thin: Option<usize>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent chains, written to chain_1, chain_2, ...
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Write the filter trajectories of the final sweep.
    #[arg(long)]
    pub dump_filter: bool,
    /// Write every retained mode path and state path.
    #[arg(long)]
    pub store_raw: bool,
    /// Keep every `stride`-th grid point of the state paths.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Number of modes when the configuration carries no model.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Grid step h.
    #[arg(long, allow_negative_numbers = true)]
    pub step: Option<f64>,
    /// Time horizon T; defaults to the last observation time.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Output directory of a previous `infer` run.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("SSDE_LOG", "error"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("usage error")
                .trim_start_matches("error: ");
            eprintln!("error: {first}");
            return 2;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Infer(a) => cmd_infer(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

fn grid_from(
    doc: &RunDocument,
    horizon: Option<f64>,
    step: Option<f64>,
    fallback_t: Option<f64>,
) -> Result<TimeGrid> {
    let h = step
        .or(doc.grid.h)
        .ok_or_else(|| Error::Config("grid step h is required".into()))?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidStep(format!("h = {h} must be positive")));
    }
    let t = horizon
        .or(doc.grid.horizon)
        .or(fallback_t)
        .ok_or_else(|| Error::Config("horizon T is required".into()))?;
    TimeGrid::new(t, h)
}

fn model_of(doc: &RunDocument) -> Result<ModelParams> {
    doc.model
        .as_ref()
        .ok_or_else(|| Error::Config("configuration has no `model` section".into()))?
        .to_params()
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let doc = io::read_document(&args.config)?;
    let grid = grid_from(&doc, args.horizon, args.step, None)?;
    let params = model_of(&doc)?;
    let seed = args.seed.or(doc.sampler.seed).unwrap_or(DEFAULT_SEED);
    let times = match (
        &doc.observations.times,
        args.observations.or(doc.observations.count),
    ) {
        (_, Some(count)) if args.observations.is_some() => sim::evenly_spaced_times(&grid, count),
        (Some(t), _) => t.clone(),
        (None, count) => sim::evenly_spaced_times(&grid, count.unwrap_or(DEFAULT_OBSERVATIONS)),
    };
    let mut rng = SimRng::seed_from(seed);
    let (z, y, obs) = sim::simulate_model(&params, &grid, &times, &mut rng)?;
    fs::create_dir_all(&args.out)?;
    let files = [
        args.out.join("truth_z.csv"),
        args.out.join("truth_y.csv"),
        args.out.join("obs.csv"),
    ];
    io::write_mode_path(&files[0], &z, &grid)?;
    io::write_state_path(&files[1], &y, &grid)?;
    io::write_observations(&files[2], &obs)?;
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}

struct InferSetup {
    grid: TimeGrid,
    obs: ObservationSet,
    config: SamplerConfig,
    seed: u64,
    dump_filter: bool,
    store_raw: bool,
}

fn sampler_config(doc: &RunDocument, args: &InferArgs) -> SamplerConfig {
    let samples = args
        .samples
        .or(doc.sampler.samples)
        .unwrap_or(DEFAULT_SAMPLES);
    let mut c = SamplerConfig::new(samples);
    if let Some(b) = args.burnin.or(doc.sampler.burnin) {
        c.burnin = b;
    }
    if let Some(t) = args.thin.or(doc.sampler.thin) {
        c.thin = t;
    }
    if let Some(s) = args.stride.or(doc.sampler.stride) {
        c.y_stride = s;
    }
    if let Some(u) = doc.sampler.update_params {
        c.update_params = u;
    }
    c.keep_filters = args.dump_filter;
    c
}

fn initial_state(
    doc: &RunDocument,
    args: &InferArgs,
    obs: &ObservationSet,
    grid: &TimeGrid,
    rng: &mut SimRng,
) -> Result<(GibbsState, PriorHyperparams)> {
    let explicit_hyper = doc
        .hyper
        .as_ref()
        .map(io::HyperSpec::to_hyper)
        .transpose()?;
    let from_model = doc.model.is_some() && (doc.sampler.init == InitMode::Model || obs.is_empty());
    if from_model {
        let params = model_of(doc)?;
        let hyper = explicit_hyper.unwrap_or_else(|| hyper_from_params(&params));
        let z = sim::simulate_mjp(&params.rates, &params.init.pi, grid.horizon(), rng)?;
        return Ok((GibbsState::new(z, params, obs, grid)?, hyper));
    }
    let k = args
        .modes
        .or(doc.num_modes)
        .or_else(|| doc.model.as_ref().map(|m| m.modes.len()))
        .ok_or_else(|| {
            Error::Config("number of modes unknown: give `num_modes` or --modes".into())
        })?;
    let init = empirical_hyperparams(obs, k, grid.horizon(), rng)?;
    let hyper = explicit_hyper.unwrap_or(init.hyper);
    Ok((GibbsState::new(init.z, init.params, obs, grid)?, hyper))
}

fn run_chain(
    doc: &RunDocument,
    args: &InferArgs,
    setup: &InferSetup,
    rng: SimRng,
    dir: &Path,
) -> Result<()> {
    let staging = dir.join(".incomplete");
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    let outcome = (|| {
        let mut rng = rng;
        let (state, hyper) = initial_state(doc, args, &setup.obs, &setup.grid, &mut rng)?;
        let run = run_sampler(
            state,
            &setup.obs,
            &hyper,
            &setup.grid,
            &setup.config,
            &mut rng,
        )?;
        let store = &run.store;
        let m = empirical_marginals(store)?;
        io::write_marginals(&staging, &m, store.num_modes, store.dim)?;
        io::write_params_jsonl(&staging.join("params.jsonl"), store)?;
        io::write_json(&staging.join("diagnostics.json"), &run.diagnostics)?;
        io::write_json(
            &staging.join("hyper.json"),
            &io::HyperSpec::from_hyper(&hyper),
        )?;
        if setup.store_raw {
            io::write_raw_samples(&staging.join("samples"), store)?;
        }
        if setup.dump_filter {
            if let Some(f) = &run.final_filters {
                io::write_filters(&staging, &setup.grid, &f.backward, &f.filter)?;
            }
        }
        info!(
            "{}: {} draws retained, MALA acceptance {:?}",
            dir.display(),
            store.draws.len(),
            run.diagnostics.mala_acceptance
        );
        Ok(())
    })();
    if let Err(e) = outcome {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    for entry in fs::read_dir(&staging)? {
        let entry = entry?;
        let target = dir.join(entry.file_name());
        if target.is_dir() {
            fs::remove_dir_all(&target)?;
        }
        fs::rename(entry.path(), target)?;
    }
    fs::remove_dir(&staging)?;
    Ok(())
}

pub fn cmd_infer(args: &InferArgs) -> Result<()> {
    let doc = io::read_document(&args.config)?;
    let dim = doc.model.as_ref().map(|m| m.init.mu0.len());
    let obs = io::read_observations(&args.data, dim)?;
    let last_t = obs.times().last().copied();
    let grid = grid_from(&doc, args.horizon, args.step, last_t)?;
    obs.grid_indices(&grid)?;
    let config = sampler_config(&doc, args);
    config.validate()?;
    if args.chains == 0 {
        return Err(Error::Config("--chains must be at least 1".into()));
    }
    let setup = InferSetup {
        grid,
        obs,
        config,
        seed: args.seed.or(doc.sampler.seed).unwrap_or(DEFAULT_SEED),
        dump_filter: args.dump_filter,
        store_raw: args.store_raw,
    };
    fs::create_dir_all(&args.out)?;
    let base = SimRng::seed_from(setup.seed);
    if args.chains == 1 {
        return run_chain(&doc, args, &setup, base, &args.out);
    }
    let results: Vec<Result<()>> = thread::scope(|s| {
        let handles: Vec<_> = (0..args.chains)
            .map(|i| {
                let dir = args.out.join(format!("chain_{}", i + 1));
                let rng = base.derive(i as u64);
                let (doc, setup) = (&doc, &setup);
                s.spawn(move || {
                    fs::create_dir_all(&dir)?;
                    run_chain(doc, args, setup, rng, &dir)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Config("chain thread panicked".into())))
            })
            .collect()
    });
    results.into_iter().collect()
}

/// Diagnostics recomputed from `params.jsonl`.
pub fn diagnose_store(dir: &Path) -> Result<Diagnostics> {
    let path = dir.join("params.jsonl");
    if !path.exists() {
        return Err(Error::Config(format!("no store at {}", path.display())));
    }
    let records = io::read_params_jsonl(&path)?;
    if records.is_empty() {
        return Err(Error::EmptyStore);
    }
    let rows = records
        .iter()
        .map(|r| {
            Ok((
                flatten_params(&r.model.to_params()?),
                r.mala_accepted.clone(),
                r.seconds,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Diagnostics::from_records(&rows)
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let d = diagnose_store(&args.out)?;
    let path = args.out.join("diagnostics.json");
    io::write_json(&path, &d)?;
    println!("{}", path.display());
    Ok(())
}
