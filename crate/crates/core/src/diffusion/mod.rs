//! Conditional sampling of the state path given a mode path and the data.
//!
//! The likelihood of future observations, `log β(y, t) = -c(t) - ½ yᵀI(t)y + a(t)ᵀy`,
//! is propagated backward from `T` in information form:
//!
//! ```text
//! dI/dt = -AᵀI - IA + IDI
//! da/dt = -Aᵀa + IDa + Ib
//! ```
//!
//! with `I(T) = 0`, `a(T) = 0` and the resets `I ← Σx⁻¹ + I`, `a ← Σx⁻¹x + a`
//! at every observation. The posterior path is then simulated forward with the
//! drift `f + D ∇log β = (A - DI) y + b + Da`.

pub mod kalman_oracle;

pub use kalman_oracle::{
    run_kalman_backward_oracle, KalmanBackwardOracle, MAX_ORACLE_OBSERVATIONS,
};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{DiffusionPath, InitialLaw, MjpPath, ModeDynamics, ObservationSet, TimeGrid};
use crate::rng::SimRng;

/// Information-form backward filter on the grid.
///
/// `info[l]`, `lin[l]` hold `I(t_l)`, `a(t_l)` after any reset at `t_l`. At
/// observation indices the right limits `I(t_l⁺)`, `a(t_l⁺)` are kept too.
#[derive(Clone, Debug)]
pub struct BackwardInfo {
    info: Vec<Mat>,
    lin: Vec<Vector>,
    right_limit: Vec<Option<usize>>,
    right_values: Vec<(Mat, Vector)>,
}

impl BackwardInfo {
    pub fn len(&self) -> usize {
        self.info.len()
    }

    pub fn is_empty(&self) -> bool {
        self.info.is_empty()
    }

    pub fn info(&self, l: usize) -> &Mat {
        &self.info[l]
    }

    pub fn lin(&self, l: usize) -> &Vector {
        &self.lin[l]
    }

    /// `(I(t_l⁺), a(t_l⁺))` if an observation resets the filter at `t_l`.
    pub fn right_limit(&self, l: usize) -> Option<(&Mat, &Vector)> {
        self.right_limit[l].map(|k| {
            let (m, v) = &self.right_values[k];
            (m, v)
        })
    }

    /// Parameters governing the forward step out of `t_l`: the right limit at
    /// an observation, the plain value elsewhere.
    pub fn forward_at(&self, l: usize) -> (&Mat, &Vector) {
        self.right_limit(l).unwrap_or((&self.info[l], &self.lin[l]))
    }

    /// `∇_y log β(y, t_l) = -I(t_l) y + a(t_l)`.
    pub fn grad_log_beta(&self, l: usize, y: &Vector) -> Vector {
        &self.lin[l] - &self.info[l] * y
    }
}

/// Scratch buffers for the backward RK4 step.
struct Rk4Work {
    ki: [Mat; 4],
    ka: [Vector; 4],
    stage_i: Mat,
    stage_a: Vector,
    id: Mat,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        Self {
            ki: std::array::from_fn(|_| Mat::zeros(n, n)),
            ka: std::array::from_fn(|_| Vector::zeros(n)),
            stage_i: Mat::zeros(n, n),
            stage_a: Vector::zeros(n),
            id: Mat::zeros(n, n),
        }
    }
}

/// Cells where `h (|I| |D| + 2 |A|)` exceeds this are split into equal
/// RK4 substeps.
pub const MAX_STAGE_STIFFNESS: f64 = 0.25;
const MAX_SUBSTEPS: usize = 10_000;

fn add_scaled(dst: &mut Mat, s: f64, src: &Mat) {
    dst.iter_mut()
        .zip(src.iter())
        .for_each(|(d, v)| *d += s * v);
}

/// `İ = IDI - AᵀI - IA`, `ȧ = IDa - Aᵀa + Ib`.
fn info_rhs(
    mode: &ModeDynamics,
    at: &Mat,
    info: &Mat,
    lin: &Vector,
    id: &mut Mat,
    out_i: &mut Mat,
    out_a: &mut Vector,
) {
    id.gemm(1.0, info, mode.d(), 0.0);
    out_i.gemm(1.0, id, info, 0.0);
    out_i.gemm(-1.0, at, info, 1.0);
    out_i.gemm(-1.0, info, &mode.a, 1.0);
    out_a.gemv(1.0, id, lin, 0.0);
    out_a.gemv(-1.0, at, lin, 1.0);
    out_a.gemv(1.0, info, &mode.b, 1.0);
}

/// One classical RK4 step of length `h` backward in time, in place.
fn rk4_backward(
    mode: &ModeDynamics,
    at: &Mat,
    info: &mut Mat,
    lin: &mut Vector,
    h: f64,
    w: &mut Rk4Work,
) {
    let Rk4Work {
        ki,
        ka,
        stage_i,
        stage_a,
        id,
    } = w;
    let [k1i, k2i, k3i, k4i] = ki;
    let [k1a, k2a, k3a, k4a] = ka;
    info_rhs(mode, at, info, lin, id, k1i, k1a);
    let mut stage = |scale: f64, pi: &Mat, pa: &Vector, oi: &mut Mat, oa: &mut Vector| {
        stage_i.copy_from(info);
        add_scaled(stage_i, -scale, pi);
        stage_a.copy_from(lin);
        stage_a.axpy(-scale, pa, 1.0);
        info_rhs(mode, at, stage_i, stage_a, id, oi, oa);
    };
    stage(0.5 * h, k1i, k1a, k2i, k2a);
    stage(0.5 * h, k2i, k2a, k3i, k3a);
    stage(h, k3i, k3a, k4i, k4a);
    let c = h / 6.0;
    add_scaled(info, -c, k1i);
    add_scaled(info, -2.0 * c, k2i);
    add_scaled(info, -2.0 * c, k3i);
    add_scaled(info, -c, k4i);
    lin.axpy(-c, k1a, 1.0);
    lin.axpy(-2.0 * c, k2a, 1.0);
    lin.axpy(-2.0 * c, k3a, 1.0);
    lin.axpy(-c, k4a, 1.0);
    linalg::symmetrize_in_place(info);
}

/// Observation-indexed lookup: grid index → observation index.
pub(crate) fn observation_slots(
    obs: &ObservationSet,
    grid: &TimeGrid,
) -> Result<Vec<Option<usize>>> {
    let mut slots = vec![None; grid.len()];
    for (i, l) in obs.grid_indices(grid)?.into_iter().enumerate() {
        slots[l] = Some(i);
    }
    Ok(slots)
}

/// Backward information filter given a mode path. Within the cell
/// `[t_l, t_{l+1}]` the dynamics of mode `z(t_l)` are used.
pub fn run_information_filter(
    z: &MjpPath,
    modes: &[ModeDynamics],
    obs: &ObservationSet,
    sigma_x: &Mat,
    grid: &TimeGrid,
) -> Result<BackwardInfo> {
    let n = modes
        .first()
        .map(ModeDynamics::dim)
        .ok_or_else(|| Error::Dimension("no modes".into()))?;
    if obs.dim().is_some_and(|d| d != n) {
        return Err(Error::Dimension(
            "observation dimension differs from state".into(),
        ));
    }
    let sigma_x_inv = linalg::spd_inverse(sigma_x, "Sigma_x")?;
    let slots = observation_slots(obs, grid)?;
    let zs = z.on_grid(grid);
    let transposed: Vec<Mat> = modes.iter().map(|m| m.a.transpose()).collect();
    let norms: Vec<(f64, f64)> = modes
        .iter()
        .map(|m| (linalg::frobenius(m.d()), linalg::frobenius(&m.a)))
        .collect();
    let h = grid.step();
    let len = grid.len();

    let mut info = vec![Mat::zeros(n, n); len];
    let mut lin = vec![Vector::zeros(n); len];
    let mut right_limit = vec![None; len];
    let mut right_values = Vec::with_capacity(obs.len());

    let mut cur_i = Mat::zeros(n, n);
    let mut cur_a = Vector::zeros(n);
    let mut work = Rk4Work::new(n);
    for l in (0..len).rev() {
        if l < len - 1 {
            let z_l = zs[l];
            let (d_norm, a_norm) = norms[z_l];
            let stiffness = h * (linalg::frobenius(&cur_i) * d_norm + 2.0 * a_norm);
            let substeps = (stiffness / MAX_STAGE_STIFFNESS)
                .ceil()
                .clamp(1.0, MAX_SUBSTEPS as f64) as usize;
            let sub_h = h / substeps as f64;
            for _ in 0..substeps {
                rk4_backward(
                    &modes[z_l],
                    &transposed[z_l],
                    &mut cur_i,
                    &mut cur_a,
                    sub_h,
                    &mut work,
                );
            }
            if cur_i.iter().chain(cur_a.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "information filter",
                    index: l,
                });
            }
        }
        if let Some(i) = slots[l] {
            right_limit[l] = Some(right_values.len());
            right_values.push((cur_i.clone(), cur_a.clone()));
            cur_i += &sigma_x_inv;
            cur_a += &sigma_x_inv * &obs.values()[i];
        }
        info[l] = cur_i.clone();
        lin[l] = cur_a.clone();
    }
    Ok(BackwardInfo {
        info,
        lin,
        right_limit,
        right_values,
    })
}

/// Gaussian law of `y(0)` given the data: `Σ̄ = (Σ0⁻¹ + I0)⁻¹`,
/// `μ̄ = Σ̄ (Σ0⁻¹ μ0 + a0)`.
pub fn posterior_initial_law(
    i0: &Mat,
    a0: &Vector,
    mu0: &Vector,
    sigma0: &Mat,
) -> Result<(Vector, Mat)> {
    let prec0 = linalg::spd_inverse(sigma0, "Sigma0")?;
    let sigma_bar = linalg::spd_inverse(&(&prec0 + i0), "posterior initial precision")?;
    let mu_bar = &sigma_bar * (&prec0 * mu0 + a0);
    Ok((mu_bar, sigma_bar))
}

/// Drift of the data-conditioned SDE at grid index `l`.
pub fn posterior_drift(mode: &ModeDynamics, info: &Mat, lin: &Vector, y: &Vector) -> Vector {
    mode.drift(y) + mode.d() * (lin - info * y)
}

/// Gaussian law of `y(t_{l+1})` given `y(t_l) = y`: the Euler transition
/// `N(y + f h, D h)` of the mode, weighted by `β(·, t_{l+1})`. Its mean is
/// `y + posterior_drift(..) h` up to `O(h²)`; the covariance is
/// `((D h)⁻¹ + I(t_{l+1}))⁻¹`.
pub fn posterior_step(
    mode: &ModeDynamics,
    info_next: &Mat,
    lin_next: &Vector,
    y: &Vector,
    h: f64,
) -> Result<(Vector, Mat)> {
    let prior_mean = y + mode.drift(y) * h;
    let prec = mode.d_inv() / h + info_next;
    let chol = linalg::spd_cholesky(&prec, "posterior step precision")?;
    let mean = chol.solve(&(mode.d_inv() * &prior_mean / h + lin_next));
    Ok((mean, chol.l()))
}

/// Draws a state path from its full conditional given the mode path.
///
/// Each step draws from [`posterior_step`] with the filter value at the
/// right end of the cell.
pub fn sample_conditional_diffusion(
    z: &MjpPath,
    bi: &BackwardInfo,
    modes: &[ModeDynamics],
    init: &InitialLaw,
    grid: &TimeGrid,
    rng: &mut SimRng,
) -> Result<DiffusionPath> {
    if bi.len() != grid.len() {
        return Err(Error::Dimension(
            "backward filter and grid lengths differ".into(),
        ));
    }
    let n = init.mu0.len();
    let (mu_bar, sigma_bar) =
        posterior_initial_law(bi.info(0), bi.lin(0), &init.mu0, &init.sigma0)?;
    let root = linalg::spd_cholesky(&sigma_bar, "posterior initial covariance")?.l();
    let zs = z.on_grid(grid);
    let h = grid.step();

    let mut values = Vec::with_capacity(grid.len());
    values.push(mu_bar + root * rng.standard_normal_vec(n));
    for l in 0..grid.steps() {
        let mode = &modes[zs[l]];
        let (mean, prec_l) = posterior_step(mode, bi.info(l + 1), bi.lin(l + 1), &values[l], h)?;
        // Lᵀ u = ε gives u ~ N(0, (L Lᵀ)⁻¹)
        let eps = rng.standard_normal_vec(n);
        let noise = prec_l
            .transpose()
            .solve_upper_triangular(&eps)
            .ok_or(Error::NonFinite {
                what: "posterior state",
                index: l + 1,
            })?;
        let next = mean + noise;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "posterior state",
                index: l + 1,
            });
        }
        values.push(next);
    }
    DiffusionPath::new(values)
}
