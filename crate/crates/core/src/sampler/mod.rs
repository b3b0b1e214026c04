//! The blocked Gibbs sweep: state path given modes, mode path given state,
//! then parameters given both paths.

pub mod diagnostics;

pub use diagnostics::{batch_means_ess, Diagnostics};

use std::time::Instant;

use log::debug;

use crate::diffusion::{run_information_filter, sample_conditional_diffusion, BackwardInfo};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{
    validate_params, DiffusionPath, MjpPath, ModeDynamics, ModelParams, ObservationSet,
    PriorHyperparams, TimeGrid,
};
use crate::params::{self, mala, DispersionTarget};
use crate::rng::SimRng;
use crate::switching::{run_ks_filter, sample_conditional_switching, FilterTrajectory};

/// Current paths and parameters of one chain.
#[derive(Clone, Debug)]
pub struct GibbsState {
    pub z: MjpPath,
    pub y: DiffusionPath,
    pub params: ModelParams,
    pub sweep: usize,
}

impl GibbsState {
    /// Starts from `z` and `params` with `y` linearly interpolated through the
    /// observations (the prior mean when there are none).
    pub fn new(
        z: MjpPath,
        params: ModelParams,
        obs: &ObservationSet,
        grid: &TimeGrid,
    ) -> Result<Self> {
        validate_params(&params)?;
        let y = interpolate_observations(obs, grid, &params.init.mu0)?;
        Ok(Self {
            z,
            y,
            params,
            sweep: 0,
        })
    }
}

pub fn interpolate_observations(
    obs: &ObservationSet,
    grid: &TimeGrid,
    fallback: &Vector,
) -> Result<DiffusionPath> {
    if obs.is_empty() {
        return DiffusionPath::new(vec![fallback.clone(); grid.len()]);
    }
    let idx = obs.grid_indices(grid)?;
    let xs = obs.values();
    let values = (0..grid.len())
        .map(|l| {
            let k = idx.partition_point(|&i| i <= l);
            if k == 0 {
                xs[0].clone()
            } else if k == idx.len() {
                xs[k - 1].clone()
            } else {
                let (l0, l1) = (idx[k - 1], idx[k]);
                let w = (l - l0) as f64 / (l1 - l0) as f64;
                &xs[k - 1] * (1.0 - w) + &xs[k] * w
            }
        })
        .collect();
    DiffusionPath::new(values)
}

/// Per-sweep switches and the per-mode Langevin step sizes.
#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub update_params: bool,
    pub mala_steps: Vec<f64>,
}

/// Intermediate products of one sweep.
#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub backward: BackwardInfo,
    pub filter: FilterTrajectory,
    /// Per mode: (accepted, acceptance probability); empty when parameters
    /// are held fixed.
    pub mala: Vec<(bool, f64)>,
}

fn with_sweep<T>(sweep: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Sweep { .. } => e,
        other => Error::Sweep {
            sweep,
            source: Box::new(other),
        },
    })
}

/// One Gibbs sweep in the order: information filter, state path, mode filter,
/// mode path, then the parameters (initial mode, initial state, rates, drift,
/// dispersion, observation covariance).
pub fn gibbs_sweep(
    state: GibbsState,
    obs: &ObservationSet,
    hyper: &PriorHyperparams,
    grid: &TimeGrid,
    opts: &SweepOptions,
    rng: &mut SimRng,
) -> Result<(GibbsState, SweepOutput)> {
    let sweep = state.sweep;
    with_sweep(sweep, sweep_inner(state, obs, hyper, grid, opts, rng))
}

fn sweep_inner(
    state: GibbsState,
    obs: &ObservationSet,
    hyper: &PriorHyperparams,
    grid: &TimeGrid,
    opts: &SweepOptions,
    rng: &mut SimRng,
) -> Result<(GibbsState, SweepOutput)> {
    let GibbsState {
        z, params, sweep, ..
    } = state;
    let backward = run_information_filter(&z, &params.modes, obs, &params.obs.sigma_x, grid)?;
    let y = sample_conditional_diffusion(&z, &backward, &params.modes, &params.init, grid, rng)?;
    let (filter, z) = if params.num_modes() == 1 {
        (FilterTrajectory::new(vec![vec![1.0]; grid.len()])?, z)
    } else {
        let filter = run_ks_filter(&y, &params.modes, &params.rates, &params.init.pi, grid)?;
        let z = sample_conditional_switching(&filter, &params.rates, grid, rng)?;
        (filter, z)
    };
    let mut mala_out = Vec::new();
    let params = if opts.update_params {
        update_parameters(
            params,
            &z,
            &y,
            obs,
            hyper,
            grid,
            &opts.mala_steps,
            rng,
            &mut mala_out,
        )?
    } else {
        params
    };
    Ok((
        GibbsState {
            z,
            y,
            params,
            sweep: sweep + 1,
        },
        SweepOutput {
            backward,
            filter,
            mala: mala_out,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn update_parameters(
    mut p: ModelParams,
    z: &MjpPath,
    y: &DiffusionPath,
    obs: &ObservationSet,
    hyper: &PriorHyperparams,
    grid: &TimeGrid,
    steps: &[f64],
    rng: &mut SimRng,
    mala_out: &mut Vec<(bool, f64)>,
) -> Result<ModelParams> {
    let k = p.num_modes();
    p.init.pi = params::update_initial_mode(&hyper.alpha, z.initial(), rng);
    let (mu0, sigma0) = params::update_initial_state(&hyper.initial_state, y.at(0), rng)?;
    p.init.mu0 = mu0;
    p.init.sigma0 = sigma0;
    if k > 1 {
        let stats = params::mjp_sufficient_stats(z, k);
        p.rates = params::update_rates(hyper.rate_shape, hyper.rate_rate, &stats, rng)?;
    }
    let drift_stats = params::drift_sufficient_stats(z, y, grid, k)?;
    for m in 0..k {
        let gamma = params::update_drift(&hyper.drift[m], &p.modes[m], &drift_stats, m, rng)?;
        p.modes[m] = p.modes[m].with_gamma(&gamma);
    }
    let scatter = mala::residual_scatter(z, y, &p.modes, grid)?;
    for m in 0..k {
        let target = DispersionTarget::new(&scatter[m].0, scatter[m].1, &hyper.dispersion[m]);
        let out = params::mala_update_dispersion(p.modes[m].d(), &target, steps[m], rng)?;
        if out.accepted {
            let mode = &p.modes[m];
            p.modes[m] = ModeDynamics::from_covariance(mode.a.clone(), mode.b.clone(), out.d)?;
        }
        mala_out.push((out.accepted, out.accept_prob));
    }
    let idx = obs.grid_indices(grid)?;
    let residuals: Vec<Vector> = obs
        .values()
        .iter()
        .zip(&idx)
        .map(|(x, &l)| x - y.at(l))
        .collect();
    p.obs.sigma_x = params::update_obs_cov(&hyper.obs_cov, &residuals, rng)?;
    Ok(p)
}

/// Run length, retention and storage settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub samples: usize,
    pub burnin: usize,
    pub thin: usize,
    pub update_params: bool,
    /// Keep every `y_stride`-th grid point of retained state paths.
    pub y_stride: usize,
    /// Keep the filters of the final sweep.
    pub keep_filters: bool,
}

impl SamplerConfig {
    /// `samples` sweeps with 10% burn-in and no thinning.
    pub fn new(samples: usize) -> Self {
        Self {
            samples,
            burnin: samples / 10,
            thin: 1,
            update_params: true,
            y_stride: 1,
            keep_filters: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.burnin >= self.samples {
            return Err(Error::Config(format!(
                "need samples > burnin >= 0, got samples = {}, burnin = {}",
                self.samples, self.burnin
            )));
        }
        if self.thin == 0 || self.y_stride == 0 {
            return Err(Error::Config("thin and stride must be positive".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.samples - self.burnin) / self.thin
    }

    fn keeps(&self, sweep: usize) -> bool {
        sweep >= self.burnin && (sweep - self.burnin + 1) % self.thin == 0
    }
}

/// One retained draw. The state path is kept at grid indices
/// `0, stride, 2 * stride, ...` as a flat row-major array.
#[derive(Clone, Debug)]
pub struct Draw {
    pub sweep: usize,
    pub z: MjpPath,
    pub y: Vec<f64>,
    pub params: ModelParams,
    pub mala_accepted: Vec<bool>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SampleStore {
    pub draws: Vec<Draw>,
    pub config: SamplerConfig,
    pub seed: u64,
    pub grid: TimeGrid,
    pub dim: usize,
    pub num_modes: usize,
}

impl SampleStore {
    pub fn y_indices(&self) -> Vec<usize> {
        (0..self.grid.len()).step_by(self.config.y_stride).collect()
    }
}

/// Result of a sampler run.
#[derive(Clone, Debug)]
pub struct SamplerRun {
    pub store: SampleStore,
    pub diagnostics: Diagnostics,
    pub final_state: GibbsState,
    pub final_filters: Option<SweepOutput>,
    pub mala_steps: Vec<f64>,
}

/// Runs `config.samples` sweeps from `state`, retaining thinned post-burn-in
/// draws. Langevin step sizes adapt during burn-in only.
pub fn run_sampler(
    mut state: GibbsState,
    obs: &ObservationSet,
    hyper: &PriorHyperparams,
    grid: &TimeGrid,
    config: &SamplerConfig,
    rng: &mut SimRng,
) -> Result<SamplerRun> {
    config.validate()?;
    let k = state.params.num_modes();
    let n = state.params.dim();
    hyper.validate(k, n)?;
    let mut adapters: Vec<mala::StepAdapter> = (0..k)
        .map(|_| mala::StepAdapter::new(hyper.mala_step))
        .collect();
    let y_idx: Vec<usize> = (0..grid.len()).step_by(config.y_stride).collect();
    let mut draws = Vec::with_capacity(config.retained());
    let mut last = None;
    for sweep in 0..config.samples {
        let started = Instant::now();
        let opts = SweepOptions {
            update_params: config.update_params,
            mala_steps: adapters.iter().map(mala::StepAdapter::xi).collect(),
        };
        let (next, out) = gibbs_sweep(state, obs, hyper, grid, &opts, rng)?;
        state = next;
        if sweep < config.burnin {
            for (a, &(_, prob)) in adapters.iter_mut().zip(&out.mala) {
                a.update(prob);
            }
        }
        let seconds = started.elapsed().as_secs_f64();
        if config.keeps(sweep) {
            let mut y = Vec::with_capacity(y_idx.len() * n);
            for &l in &y_idx {
                y.extend(state.y.at(l).iter());
            }
            draws.push(Draw {
                sweep,
                z: state.z.clone(),
                y,
                params: state.params.clone(),
                mala_accepted: out.mala.iter().map(|m| m.0).collect(),
                seconds,
            });
        }
        if sweep % 1000 == 0 {
            debug!("sweep {sweep}: {} jumps", state.z.num_jumps());
        }
        if config.keep_filters && sweep + 1 == config.samples {
            last = Some(out);
        }
    }
    let store = SampleStore {
        draws,
        config: config.clone(),
        seed: rng.seed(),
        grid: grid.clone(),
        dim: n,
        num_modes: k,
    };
    let diagnostics = Diagnostics::from_store(&store)?;
    Ok(SamplerRun {
        store,
        diagnostics,
        final_state: state,
        final_filters: last,
        mala_steps: adapters.iter().map(mala::StepAdapter::xi).collect(),
    })
}

/// Pointwise posterior summaries of the retained draws.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    /// Mode frequencies at every grid point.
    pub z_times: Vec<f64>,
    pub z_probs: Vec<Vec<f64>>,
    /// State mean and 5% / 95% quantiles at the stored grid points.
    pub y_times: Vec<f64>,
    pub y_mean: Vec<Vector>,
    pub y_q05: Vec<Vector>,
    pub y_q95: Vec<Vector>,
}

/// Linear-interpolation empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn empirical_marginals(store: &SampleStore) -> Result<Marginals> {
    if store.draws.is_empty() {
        return Err(Error::EmptyStore);
    }
    let grid = &store.grid;
    let (k, n) = (store.num_modes, store.dim);
    let count = store.draws.len() as f64;
    let mut z_probs = vec![vec![0.0; k]; grid.len()];
    for d in &store.draws {
        for (row, z) in z_probs.iter_mut().zip(d.z.on_grid(grid)) {
            row[z] += 1.0;
        }
    }
    z_probs.iter_mut().flatten().for_each(|v| *v /= count);

    let y_idx = store.y_indices();
    let mut y_mean = Vec::with_capacity(y_idx.len());
    let mut y_q05 = Vec::with_capacity(y_idx.len());
    let mut y_q95 = Vec::with_capacity(y_idx.len());
    let mut column = Vec::with_capacity(store.draws.len());
    for j in 0..y_idx.len() {
        let (mut m, mut lo, mut hi) = (Vector::zeros(n), Vector::zeros(n), Vector::zeros(n));
        for c in 0..n {
            column.clear();
            column.extend(store.draws.iter().map(|d| d.y[j * n + c]));
            m[c] = column.iter().sum::<f64>() / count;
            column.sort_by(f64::total_cmp);
            lo[c] = quantile_sorted(&column, 0.05);
            hi[c] = quantile_sorted(&column, 0.95);
        }
        y_mean.push(m);
        y_q05.push(lo);
        y_q95.push(hi);
    }
    Ok(Marginals {
        z_times: grid.times().collect(),
        z_probs,
        y_times: y_idx.iter().map(|&l| grid.time(l)).collect(),
        y_mean,
        y_q05,
        y_q95,
    })
}

/// Weak priors centred on `params`, for runs started from known parameters
/// instead of data.
pub fn hyper_from_params(params: &ModelParams) -> PriorHyperparams {
    use crate::model::{IwPrior, MatrixNormalPrior, NiwPrior};
    let n = params.dim();
    let dof = n as f64 + 2.0;
    PriorHyperparams {
        alpha: vec![1.0; params.num_modes()],
        initial_state: NiwPrior {
            eta: params.init.mu0.clone(),
            lambda: 1.0,
            psi: params.init.sigma0.clone(),
            kappa: dof,
        },
        rate_shape: 1.0,
        rate_rate: 1.0,
        drift: params
            .modes
            .iter()
            .map(|m| MatrixNormalPrior {
                mean: m.gamma(),
                precision: Mat::identity(n + 1, n + 1),
            })
            .collect(),
        dispersion: params
            .modes
            .iter()
            .map(|m| IwPrior {
                scale: m.d().clone(),
                dof,
            })
            .collect(),
        obs_cov: IwPrior {
            scale: params.obs.sigma_x.clone(),
            dof,
        },
        mala_step: params::empirical::DEFAULT_MALA_STEP,
    }
}
