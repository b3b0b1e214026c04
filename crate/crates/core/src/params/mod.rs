//! Full conditionals of the model parameters given the mode and state paths.
//!
//! Every conjugate update is split into a function returning the posterior
//! hyperparameters and one drawing from it.

pub mod dist;
pub mod empirical;
pub mod mala;

pub use empirical::{empirical_hyperparams, kmeans, EmpiricalInit, KMeans};
pub use mala::{mala_update_dispersion, DispersionTarget, MalaOutcome};

use crate::error::Result;
use crate::linalg::{self, Mat, Vector};
use crate::model::{
    DiffusionPath, IwPrior, MatrixNormalPrior, MjpPath, ModeDynamics, NiwPrior, RateMatrix,
    TimeGrid,
};
use crate::rng::SimRng;

/// Transition counts `N[z][z']` and sojourn totals `T_z` of a mode path.
#[derive(Clone, Debug, PartialEq)]
pub struct MjpStats {
    pub counts: Mat,
    pub sojourn: Vec<f64>,
}

pub fn mjp_sufficient_stats(z: &MjpPath, k: usize) -> MjpStats {
    let mut counts = Mat::zeros(k, k);
    let states = z.states();
    for w in states.windows(2) {
        counts[(w[0], w[1])] += 1.0;
    }
    MjpStats {
        counts,
        sojourn: z.sojourn_totals(k),
    }
}

/// Posterior `Gamma(s + N_zz', r + T_z)` (shape, rate) for every off-diagonal
/// rate, returned as matrices of shapes and rates.
pub fn rate_posterior(s: f64, r: f64, stats: &MjpStats) -> (Mat, Mat) {
    let k = stats.sojourn.len();
    let shape = Mat::from_fn(k, k, |i, j| {
        if i == j {
            0.0
        } else {
            s + stats.counts[(i, j)]
        }
    });
    let rate = Mat::from_fn(k, k, |i, j| if i == j { 0.0 } else { r + stats.sojourn[i] });
    (shape, rate)
}

pub fn update_rates(s: f64, r: f64, stats: &MjpStats, rng: &mut SimRng) -> Result<RateMatrix> {
    let (shape, rate) = rate_posterior(s, r, stats);
    let k = shape.nrows();
    let mut off = Mat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                off[(i, j)] = rng.gamma(shape[(i, j)], rate[(i, j)]);
            }
        }
    }
    RateMatrix::from_off_diagonal(&off)
}

pub fn initial_mode_posterior(alpha: &[f64], z0: usize) -> Vec<f64> {
    let mut a = alpha.to_vec();
    a[z0] += 1.0;
    a
}

pub fn update_initial_mode(alpha: &[f64], z0: usize, rng: &mut SimRng) -> Vec<f64> {
    dist::dirichlet(&initial_mode_posterior(alpha, z0), rng)
}

/// Single-datum NIW update. With IW scale matrices stored directly,
/// `Ψ̃ = Ψ + λ/λ̃ (y0 - η)(y0 - η)ᵀ`; this is the inverse-form update with
/// the scale written as `Ψ⁻¹`.
pub fn initial_state_posterior(prior: &NiwPrior, y0: &Vector) -> NiwPrior {
    let lambda = prior.lambda + 1.0;
    let d = y0 - &prior.eta;
    NiwPrior {
        eta: (&prior.eta * prior.lambda + y0) / lambda,
        lambda,
        psi: &prior.psi + &d * d.transpose() * (prior.lambda / lambda),
        kappa: prior.kappa + 1.0,
    }
}

/// Draws `Σ0 ~ IW(Ψ̃, κ̃)` and `μ0 ~ N(η̃, Σ0 / λ̃)`.
pub fn update_initial_state(
    prior: &NiwPrior,
    y0: &Vector,
    rng: &mut SimRng,
) -> Result<(Vector, Mat)> {
    let post = initial_state_posterior(prior, y0);
    let sigma0 = dist::inverse_wishart(&post.psi, post.kappa, rng)?;
    let root = linalg::spd_cholesky(&(&sigma0 / post.lambda), "Sigma0 / lambda")?.l();
    let mu0 = &post.eta + root * rng.standard_normal_vec(y0.len());
    Ok((mu0, sigma0))
}

/// Per-mode sums `Σ Δy [y; 1]ᵀ` and `Σ [y; 1][y; 1]ᵀ h` over grid cells whose
/// left endpoint lies in the mode, i.e. `ΔY Ȳᵀ` and `Ȳ Ȳᵀ` for the scaled
/// columns `Δy / √h` and `[y; 1] √h`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftStats {
    pub dy_ybar: Vec<Mat>,
    pub ybar_ybar: Vec<Mat>,
    pub steps: Vec<usize>,
}

pub fn drift_sufficient_stats(
    z: &MjpPath,
    y: &DiffusionPath,
    grid: &TimeGrid,
    k: usize,
) -> Result<DriftStats> {
    y.check_grid(grid)?;
    let n = y.dim();
    let h = grid.step();
    let zs = z.on_grid(grid);
    let mut dy_ybar = vec![Mat::zeros(n, n + 1); k];
    let mut ybar_ybar = vec![Mat::zeros(n + 1, n + 1); k];
    let mut steps = vec![0; k];
    let mut ybar = Vector::from_element(n + 1, 1.0);
    for l in 0..grid.steps() {
        let m = zs[l];
        ybar.rows_mut(0, n).copy_from(y.at(l));
        let dy = y.at(l + 1) - y.at(l);
        dy_ybar[m].ger(1.0, &dy, &ybar, 1.0);
        ybar_ybar[m].ger(h, &ybar, &ybar, 1.0);
        steps[m] += 1;
    }
    Ok(DriftStats {
        dy_ybar,
        ybar_ybar,
        steps,
    })
}

/// `K̃ = ȲȲᵀ + K`, `M̃ = (ΔYȲᵀ + M K) K̃⁻¹`.
pub fn drift_posterior(
    prior: &MatrixNormalPrior,
    dy_ybar: &Mat,
    ybar_ybar: &Mat,
) -> Result<MatrixNormalPrior> {
    let precision = linalg::symmetrize(&(ybar_ybar + &prior.precision));
    let chol = linalg::spd_cholesky(&precision, "posterior column precision")?;
    let rhs = dy_ybar + &prior.mean * &prior.precision;
    // M̃ = rhs K̃⁻¹  <=>  K̃ M̃ᵀ = rhsᵀ
    let mean = chol.solve(&rhs.transpose()).transpose();
    Ok(MatrixNormalPrior { mean, precision })
}

/// Draws `Γ = [A, b]` from the matrix-normal posterior with row covariance `D`.
pub fn update_drift(
    prior: &MatrixNormalPrior,
    mode: &ModeDynamics,
    stats: &DriftStats,
    z: usize,
    rng: &mut SimRng,
) -> Result<Mat> {
    let post = drift_posterior(prior, &stats.dy_ybar[z], &stats.ybar_ybar[z])?;
    let col_cov = linalg::spd_inverse(&post.precision, "posterior column precision")?;
    dist::matrix_normal(&post.mean, mode.d_chol(), &col_cov, rng)
}

/// Discretized Girsanov log-likelihood
/// `Σ_l [fᵀD⁻¹Δy_l - ½ fᵀD⁻¹f h]` with `f = f(z(t_l), y_l)`.
pub fn girsanov_loglik(
    z: &MjpPath,
    y: &DiffusionPath,
    modes: &[ModeDynamics],
    grid: &TimeGrid,
) -> Result<f64> {
    y.check_grid(grid)?;
    let h = grid.step();
    let zs = z.on_grid(grid);
    let mut acc = 0.0;
    for l in 0..grid.steps() {
        let m = &modes[zs[l]];
        let f = m.drift(y.at(l));
        let w = m.d_inv() * &f;
        acc += w.dot(&(y.at(l + 1) - y.at(l))) - 0.5 * w.dot(&f) * h;
    }
    Ok(acc)
}

/// Sum over grid cells of `log N(Δy_l; f h, D h)`.
pub fn transition_loglik(
    z: &MjpPath,
    y: &DiffusionPath,
    modes: &[ModeDynamics],
    grid: &TimeGrid,
) -> Result<f64> {
    y.check_grid(grid)?;
    let h = grid.step();
    let zs = z.on_grid(grid);
    let n = y.dim() as f64;
    let mut acc = 0.0;
    for l in 0..grid.steps() {
        let m = &modes[zs[l]];
        let r = y.at(l + 1) - y.at(l) - m.drift(y.at(l)) * h;
        let quad = r.dot(&(m.d_inv() * &r)) / h;
        acc += -0.5 * (quad + m.d_log_det() + n * (2.0 * std::f64::consts::PI * h).ln());
    }
    Ok(acc)
}

pub fn obs_cov_posterior(prior: &IwPrior, residuals: &[Vector]) -> IwPrior {
    let mut scale = prior.scale.clone();
    for r in residuals {
        scale.ger(1.0, r, r, 1.0);
    }
    IwPrior {
        scale,
        dof: prior.dof + residuals.len() as f64,
    }
}

/// `Σx ~ IW(Ψx + Σ r rᵀ, λx + N)` with residuals `r_i = x_i - y(t_i)`.
pub fn update_obs_cov(prior: &IwPrior, residuals: &[Vector], rng: &mut SimRng) -> Result<Mat> {
    let post = obs_cov_posterior(prior, residuals);
    dist::inverse_wishart(&post.scale, post.dof, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;

    fn scalar(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn vec1(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn stats_of_simple_paths() {
        let s = mjp_sufficient_stats(&MjpPath::constant(1, 5.0), 2);
        assert_eq!(s.counts, Mat::zeros(2, 2));
        assert_eq!(s.sojourn, vec![0.0, 5.0]);
        let p = MjpPath::new(0, vec![(1.0, 1), (3.0, 0)], 4.0).unwrap();
        let s = mjp_sufficient_stats(&p, 2);
        assert_eq!((s.counts[(0, 1)], s.counts[(1, 0)]), (1.0, 1.0));
        assert_eq!(s.sojourn, vec![2.0, 2.0]);
    }

    #[test]
    fn rate_posterior_arithmetic() {
        let stats = MjpStats {
            counts: Mat::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]),
            sojourn: vec![4.0, 0.0],
        };
        let (shape, rate) = rate_posterior(1.0, 1.0, &stats);
        assert_eq!((shape[(0, 1)], rate[(0, 1)]), (4.0, 5.0));
        assert_eq!((shape[(1, 0)], rate[(1, 0)]), (1.0, 1.0));
        let mut rng = SimRng::seed_from(1);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| update_rates(1.0, 1.0, &stats, &mut rng).unwrap().rate(0, 1))
            .collect();
        let se = (testutil::variance(&draws) / n as f64).sqrt();
        assert!((testutil::mean(&draws) - 0.8).abs() < 3.0 * se);
    }

    #[test]
    fn dirichlet_posterior() {
        assert_eq!(initial_mode_posterior(&[1.0, 1.0], 0), vec![2.0, 1.0]);
        let big = initial_mode_posterior(&[1e6, 1e6], 1);
        let shift = (big[1] / (big[0] + big[1]) - 0.5).abs();
        assert!(shift <= 1.0 / 2e6);
    }

    #[test]
    fn niw_posterior_formulas() {
        let prior = NiwPrior {
            eta: vec1(0.0),
            lambda: 1.0,
            psi: scalar(1.0),
            kappa: 3.0,
        };
        let post = initial_state_posterior(&prior, &vec1(2.0));
        assert_eq!(post.eta[0], 1.0);
        assert_eq!(post.lambda, 2.0);
        assert_eq!(post.kappa, 4.0);
        assert_eq!(post.psi[(0, 0)], 1.0 + 0.5 * 4.0);
        let strong = initial_state_posterior(
            &NiwPrior {
                lambda: 1e12,
                ..prior
            },
            &vec1(2.0),
        );
        assert!(strong.eta[0].abs() < 1e-11);
    }

    #[test]
    fn niw_posterior_means_by_quadrature() {
        // prior NIW(η, λ, Ψ, κ) times N(y0; μ, Σ) integrated on a (μ, Σ) grid
        let (eta, lambda, psi, kappa, y0) = (0.3, 2.0, 1.5, 4.0, 1.1);
        let log_post = |mu: f64, s: f64| {
            let iw = -(kappa + 2.0) / 2.0 * s.ln() - psi / (2.0 * s);
            let normal = -0.5 * (s / lambda).ln() - lambda * (mu - eta).powi(2) / (2.0 * s);
            let lik = -0.5 * s.ln() - (y0 - mu).powi(2) / (2.0 * s);
            iw + normal + lik
        };
        let (ns, nm) = (4000, 1200);
        let (s_lo, s_hi) = (1e-3_f64.ln(), 2e3_f64.ln());
        let (mut z, mut em, mut es) = (0.0, 0.0, 0.0);
        for i in 0..ns {
            let u = s_lo + (i as f64 + 0.5) * (s_hi - s_lo) / ns as f64;
            let s = u.exp();
            let width = 12.0 * s.sqrt().max(0.05);
            for j in 0..nm {
                let mu = eta - width + (j as f64 + 0.5) * 2.0 * width / nm as f64;
                let w = (log_post(mu, s)).exp() * s * (2.0 * width / nm as f64);
                z += w;
                em += w * mu;
                es += w * s;
            }
        }
        let post = initial_state_posterior(
            &NiwPrior {
                eta: vec1(eta),
                lambda,
                psi: scalar(psi),
                kappa,
            },
            &vec1(y0),
        );
        let mean_s = post.psi[(0, 0)] / (post.kappa - 2.0);
        assert!(((em / z) - post.eta[0]).abs() / post.eta[0].abs() < 1e-3);
        assert!(((es / z) - mean_s).abs() / mean_s < 1e-3);
    }

    #[test]
    fn drift_stats_arithmetic() {
        let grid = TimeGrid::new(0.2, 0.1).unwrap();
        let y = DiffusionPath::new(vec![vec1(1.0), vec1(1.3), vec1(1.3)]).unwrap();
        let z = MjpPath::new(0, vec![(0.1, 1)], 0.2).unwrap();
        let s = drift_sufficient_stats(&z, &y, &grid, 2).unwrap();
        assert!((s.dy_ybar[0][(0, 0)] - 0.3).abs() < 1e-15);
        assert!((s.dy_ybar[0][(0, 1)] - 0.3).abs() < 1e-15);
        assert_eq!(s.dy_ybar[1], Mat::zeros(1, 2));
        assert_eq!(s.steps, vec![1, 1]);
    }

    #[test]
    fn drift_stats_additive_over_modes() {
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let mut rng = SimRng::seed_from(4);
        let y = DiffusionPath::new(
            (0..grid.len())
                .map(|_| rng.standard_normal_vec(2))
                .collect(),
        )
        .unwrap();
        let z = MjpPath::new(0, vec![(0.3, 1), (0.55, 0), (0.8, 1)], 1.0).unwrap();
        let split = drift_sufficient_stats(&z, &y, &grid, 2).unwrap();
        let whole = drift_sufficient_stats(&MjpPath::constant(0, 1.0), &y, &grid, 1).unwrap();
        let sum = &split.dy_ybar[0] + &split.dy_ybar[1];
        assert!(linalg::frobenius(&(sum - &whole.dy_ybar[0])) < 1e-12);
        let sum = &split.ybar_ybar[0] + &split.ybar_ybar[1];
        assert!(linalg::frobenius(&(sum - &whole.ybar_ybar[0])) < 1e-12);
    }

    #[test]
    fn drift_posterior_without_data_is_prior() {
        let prior = MatrixNormalPrior {
            mean: Mat::from_row_slice(1, 2, &[-1.0, 0.5]),
            precision: Mat::identity(2, 2) * 2.0,
        };
        let post = drift_posterior(&prior, &Mat::zeros(1, 2), &Mat::zeros(2, 2)).unwrap();
        assert!(linalg::frobenius(&(&post.mean - &prior.mean)) < 1e-15);
        assert_eq!(post.precision, prior.precision);
    }

    #[test]
    fn girsanov_examples() {
        let grid = TimeGrid::new(0.2, 0.1).unwrap();
        let z = MjpPath::constant(0, 0.2);
        let y = DiffusionPath::new(vec![vec1(0.0), vec1(0.2), vec1(0.2)]).unwrap();
        let zero = vec![ModeDynamics::new(scalar(0.0), vec1(0.0), scalar(1.0)).unwrap()];
        assert_eq!(girsanov_loglik(&z, &y, &zero, &grid).unwrap(), 0.0);
        let unit = vec![ModeDynamics::new(scalar(0.0), vec1(1.0), scalar(1.0)).unwrap()];
        // two steps: (0.2 - 0.05) + (0 - 0.05)
        assert!((girsanov_loglik(&z, &y, &unit, &grid).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn obs_cov_posterior_arithmetic() {
        let prior = IwPrior {
            scale: scalar(1.0),
            dof: 4.0,
        };
        let post = obs_cov_posterior(&prior, &[vec1(1.0), vec1(-1.0)]);
        assert_eq!((post.scale[(0, 0)], post.dof), (3.0, 6.0));
        assert_eq!(
            dist::inverse_wishart_mean(&post.scale, post.dof)[(0, 0)],
            0.75
        );
        assert_eq!(obs_cov_posterior(&prior, &[]), prior);
    }

    #[test]
    fn obs_cov_mean_by_quadrature() {
        let (psi, nu) = (0.8, 5.0);
        let res = [0.4, -1.2, 0.3];
        let log_post = |s: f64| {
            let iw = -(nu + 2.0) / 2.0 * s.ln() - psi / (2.0 * s);
            iw + res
                .iter()
                .map(|r| -0.5 * s.ln() - r * r / (2.0 * s))
                .sum::<f64>()
        };
        let n = 200_000;
        let (lo, hi) = (1e-4_f64.ln(), 1e4_f64.ln());
        let (mut z, mut m) = (0.0, 0.0);
        for i in 0..n {
            let s = (lo + (i as f64 + 0.5) * (hi - lo) / n as f64).exp();
            let w = log_post(s).exp() * s;
            z += w;
            m += w * s;
        }
        let post = obs_cov_posterior(
            &IwPrior {
                scale: scalar(psi),
                dof: nu,
            },
            &res.iter().map(|&r| vec1(r)).collect::<Vec<_>>(),
        );
        let exact = dist::inverse_wishart_mean(&post.scale, post.dof)[(0, 0)];
        assert!((m / z - exact).abs() / exact < 1e-3);
    }
}
