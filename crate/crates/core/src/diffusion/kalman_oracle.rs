//! Covariance-form backward filter used to cross-check the information filter.
//!
//! The future data are written as `x = F y(t) + m + e`, `e ~ N(0, Σ)`, which
//! gives `log β(y, t) = log N(x; F y + m, Σ)` directly. Its cost grows with the
//! number of observations, so it is only meant for short records.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{MjpPath, ModeDynamics, ObservationSet, TimeGrid};

pub const MAX_ORACLE_OBSERVATIONS: usize = 8;

#[derive(Clone, Debug)]
struct Stage {
    f: Mat,
    m: Vector,
    sigma: Mat,
    x: Vector,
}

#[derive(Clone, Debug)]
pub struct KalmanBackwardOracle {
    stages: Vec<Option<Stage>>,
}

impl KalmanBackwardOracle {
    /// `∇_y log β(y, t_l)`; zero when no data lie ahead.
    pub fn gradient(&self, l: usize, y: &Vector) -> Result<Vector> {
        match &self.stages[l] {
            None => Ok(Vector::zeros(y.len())),
            Some(s) => {
                let resid = &s.x - &s.m - &s.f * y;
                let w = linalg::spd_cholesky(&s.sigma, "oracle covariance")?.solve(&resid);
                Ok(s.f.transpose() * w)
            }
        }
    }

    pub fn log_beta(&self, l: usize, y: &Vector) -> Result<f64> {
        match &self.stages[l] {
            None => Ok(0.0),
            Some(s) => {
                let resid = &s.x - &s.m - &s.f * y;
                let chol = linalg::spd_cholesky(&s.sigma, "oracle covariance")?;
                let quad = resid.dot(&chol.solve(&resid));
                let k = resid.len() as f64;
                Ok(-0.5
                    * (quad
                        + linalg::log_det_from_chol(&chol)
                        + k * (2.0 * std::f64::consts::PI).ln()))
            }
        }
    }

    /// Information-form equivalents `I = FᵀΣ⁻¹F`, `a = FᵀΣ⁻¹(x - m)`.
    pub fn information(&self, l: usize, n: usize) -> Result<(Mat, Vector)> {
        match &self.stages[l] {
            None => Ok((Mat::zeros(n, n), Vector::zeros(n))),
            Some(s) => {
                let chol = linalg::spd_cholesky(&s.sigma, "oracle covariance")?;
                let sf = chol.solve(&s.f);
                let sr = chol.solve(&(&s.x - &s.m));
                Ok((s.f.transpose() * sf, s.f.transpose() * sr))
            }
        }
    }
}

type Rhs = (Mat, Vector, Mat);

fn rhs(mode: &ModeDynamics, f: &Mat) -> Rhs {
    (
        -(f * &mode.a),
        -(f * &mode.b),
        -(f * mode.d() * f.transpose()),
    )
}

fn rk4(mode: &ModeDynamics, s: &Stage, h: f64) -> Stage {
    // all three right-hand sides depend on F only; integrate backward in time
    let k1 = rhs(mode, &s.f);
    let k2 = rhs(mode, &(&s.f - &k1.0 * (0.5 * h)));
    let k3 = rhs(mode, &(&s.f - &k2.0 * (0.5 * h)));
    let k4 = rhs(mode, &(&s.f - &k3.0 * h));
    let f = &s.f - (&k1.0 + &k2.0 * 2.0 + &k3.0 * 2.0 + &k4.0) * (h / 6.0);
    let m = &s.m - (&k1.1 + &k2.1 * 2.0 + &k3.1 * 2.0 + &k4.1) * (h / 6.0);
    let sigma = &s.sigma - (&k1.2 + &k2.2 * 2.0 + &k3.2 * 2.0 + &k4.2) * (h / 6.0);
    Stage {
        f,
        m,
        sigma: linalg::symmetrize(&sigma),
        x: s.x.clone(),
    }
}

fn stack(obs_value: &Vector, sigma_x: &Mat, prev: Option<Stage>) -> Stage {
    let n = obs_value.len();
    match prev {
        None => Stage {
            f: Mat::identity(n, n),
            m: Vector::zeros(n),
            sigma: sigma_x.clone(),
            x: obs_value.clone(),
        },
        Some(s) => {
            let k = s.m.len();
            let mut f = Mat::zeros(n + k, n);
            f.view_mut((0, 0), (n, n)).fill_with_identity();
            f.view_mut((n, 0), (k, n)).copy_from(&s.f);
            let mut m = Vector::zeros(n + k);
            m.rows_mut(n, k).copy_from(&s.m);
            let mut sigma = Mat::zeros(n + k, n + k);
            sigma.view_mut((0, 0), (n, n)).copy_from(sigma_x);
            sigma.view_mut((n, n), (k, k)).copy_from(&s.sigma);
            let mut x = Vector::zeros(n + k);
            x.rows_mut(0, n).copy_from(obs_value);
            x.rows_mut(n, k).copy_from(&s.x);
            Stage { f, m, sigma, x }
        }
    }
}

/// Runs the covariance-form filter with the same grid, mode convention and
/// RK4 integrator as the information filter.
pub fn run_kalman_backward_oracle(
    z: &MjpPath,
    modes: &[ModeDynamics],
    obs: &ObservationSet,
    sigma_x: &Mat,
    grid: &TimeGrid,
) -> Result<KalmanBackwardOracle> {
    if obs.len() > MAX_ORACLE_OBSERVATIONS {
        return Err(Error::InvalidObservations(format!(
            "oracle supports at most {MAX_ORACLE_OBSERVATIONS} observations"
        )));
    }
    let slots = super::observation_slots(obs, grid)?;
    let zs = z.on_grid(grid);
    let len = grid.len();
    let mut stages = vec![None; len];
    let mut cur: Option<Stage> = None;
    for l in (0..len).rev() {
        if l < len - 1 {
            cur = cur.map(|s| rk4(&modes[zs[l]], &s, grid.step()));
        }
        if let Some(i) = slots[l] {
            cur = Some(stack(&obs.values()[i], sigma_x, cur.take()));
        }
        stages[l] = cur.clone();
    }
    Ok(KalmanBackwardOracle { stages })
}
