//! Forward simulation of the generative model: jump-process paths by the
//! Gillespie direct method, Euler-Maruyama diffusion paths subordinated to a
//! mode path, and noisy observations.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{
    DiffusionPath, MjpPath, ModeDynamics, ModelParams, ObservationSet, RateMatrix, TimeGrid,
};
use crate::rng::SimRng;

/// Exact jump-process sample on `[0, horizon]`.
pub fn simulate_mjp(
    rates: &RateMatrix,
    pi: &[f64],
    horizon: f64,
    rng: &mut SimRng,
) -> Result<MjpPath> {
    let k = rates.num_modes();
    if pi.len() != k {
        return Err(Error::Dimension(format!(
            "pi has {} entries, K = {k}",
            pi.len()
        )));
    }
    crate::model::check_simplex(pi, "pi")?;
    let mut z = rng.categorical(pi);
    let initial = z;
    let mut t = 0.0;
    let mut jumps = Vec::new();
    let mut weights = vec![0.0; k];
    loop {
        let exit = rates.exit_rate(z);
        if exit <= 0.0 {
            break;
        }
        t += rng.exponential(exit);
        if t > horizon {
            break;
        }
        for (j, w) in weights.iter_mut().enumerate() {
            *w = if j == z { 0.0 } else { rates.rate(z, j) };
        }
        z = rng.categorical(&weights);
        jumps.push((t, z));
    }
    MjpPath::new(initial, jumps, horizon)
}

/// Euler-Maruyama path of the switching SDE given a mode path. The mode is
/// read at the left end of every step.
pub fn simulate_ssde(
    z: &MjpPath,
    modes: &[ModeDynamics],
    y0: &Vector,
    grid: &TimeGrid,
    rng: &mut SimRng,
) -> Result<DiffusionPath> {
    let n = y0.len();
    if modes.iter().any(|m| m.dim() != n) {
        return Err(Error::Dimension("mode dimension differs from y0".into()));
    }
    let zs = z.on_grid(grid);
    let h = grid.step();
    let sqrt_h = h.sqrt();
    let mut values = Vec::with_capacity(grid.len());
    values.push(y0.clone());
    for l in 0..grid.steps() {
        let m = &modes[zs[l]];
        let y = &values[l];
        let eps = rng.standard_normal_vec(n);
        let next = y + m.drift(y) * h + m.q() * eps * sqrt_h;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "simulated state",
                index: l + 1,
            });
        }
        values.push(next);
    }
    DiffusionPath::new(values)
}

/// Square root `S` with `S Sᵀ = M` for a positive semidefinite `M`.
/// Uses Cholesky when possible so that SPD inputs give a deterministic
/// triangular factor.
fn psd_sqrt(m: &Mat) -> Result<Mat> {
    let sym = linalg::symmetrize(m);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c.l());
    }
    let eig = sym.symmetric_eigen();
    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()))
        .max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -1e-12 * scale) {
        return Err(Error::not_spd("Sigma_x"));
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Mat::from_diagonal(&sqrt_vals))
}

/// `x_i = y(t_i) + zeta_i` with `zeta_i ~ N(0, sigma_x)`. A zero covariance
/// is accepted here and yields noiseless observations.
pub fn generate_observations(
    y: &DiffusionPath,
    times: &[f64],
    sigma_x: &Mat,
    grid: &TimeGrid,
    rng: &mut SimRng,
) -> Result<ObservationSet> {
    y.check_grid(grid)?;
    let n = y.dim();
    if sigma_x.shape() != (n, n) {
        return Err(Error::Dimension("Sigma_x shape".into()));
    }
    let root = psd_sqrt(sigma_x)?;
    let mut snapped = Vec::with_capacity(times.len());
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let l = grid.snap(t)?;
        let eps = rng.standard_normal_vec(n);
        values.push(y.at(l) + &root * eps);
        snapped.push(grid.time(l));
    }
    ObservationSet::new(snapped, values)
}

/// `count` observation times spread evenly over `(0, T]`.
pub fn evenly_spaced_times(grid: &TimeGrid, count: usize) -> Vec<f64> {
    let t_end = grid.horizon();
    (1..=count)
        .map(|i| {
            let t = t_end * i as f64 / count as f64;
            grid.time(grid.snap(t).expect("inside the grid"))
        })
        .collect()
}

/// Full generative draw: mode path, state path with `y0 ~ N(mu0, Sigma0)`,
/// and observations at `times`.
pub fn simulate_model(
    params: &ModelParams,
    grid: &TimeGrid,
    times: &[f64],
    rng: &mut SimRng,
) -> Result<(MjpPath, DiffusionPath, ObservationSet)> {
    let z = simulate_mjp(&params.rates, &params.init.pi, grid.horizon(), rng)?;
    let l0 = linalg::spd_cholesky(&params.init.sigma0, "Sigma0")?.l();
    let y0 = &params.init.mu0 + l0 * rng.standard_normal_vec(params.dim());
    let y = simulate_ssde(&z, &params.modes, &y0, grid, rng)?;
    let obs = generate_observations(&y, times, &params.obs.sigma_x, grid, rng)?;
    Ok((z, y, obs))
}
