//! Langevin updates of a mode's noise covariance `D` in log-Cholesky
//! coordinates: `D = L Lᵀ`, `θ` holding `log L_ii` on the diagonal and `L_ij`
//! below it.
//!
//! The target combines the Gaussian transitions of the mode's grid steps,
//! `∝ |D|^{-m/2} exp(-tr(D⁻¹S)/2)`, the inverse-Wishart prior and the Jacobian
//! of `θ ↦ D`.

use crate::error::Result;
use crate::linalg::{self, Mat, Vector};
use crate::model::{DiffusionPath, IwPrior, MjpPath, ModeDynamics, TimeGrid};
use crate::rng::SimRng;

/// Acceptance rate the step size is tuned toward during burn-in.
pub const TARGET_ACCEPTANCE: f64 = 0.57;

pub fn num_coords(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn theta_from_cov(d: &Mat) -> Result<Vector> {
    let l = linalg::spd_cholesky(d, "D")?.l();
    let n = l.nrows();
    let mut th = Vector::zeros(num_coords(n));
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            th[k] = if i == j { l[(i, i)].ln() } else { l[(i, j)] };
            k += 1;
        }
    }
    Ok(th)
}

pub fn factor_from_theta(th: &Vector, n: usize) -> Mat {
    let mut l = Mat::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            l[(i, j)] = if i == j { th[k].exp() } else { th[k] };
            k += 1;
        }
    }
    l
}

/// Unnormalized log density of `θ` under the dispersion full conditional.
#[derive(Clone, Debug)]
pub struct DispersionTarget {
    dim: usize,
    /// `m + ν + n + 1` for `m` grid steps in the mode and prior dof `ν`.
    power: f64,
    /// Residual scatter `Σ (Δy - f h)(Δy - f h)ᵀ / h` plus the prior scale.
    scatter: Mat,
}

impl DispersionTarget {
    pub fn new(scatter: &Mat, steps: usize, prior: &IwPrior) -> Self {
        let n = scatter.nrows();
        Self {
            dim: n,
            power: steps as f64 + prior.dof + n as f64 + 1.0,
            scatter: linalg::symmetrize(&(scatter + &prior.scale)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_density(&self, th: &Vector) -> f64 {
        let n = self.dim;
        let l = factor_from_theta(th, n);
        let mut log_det_d = 0.0;
        let mut jac = n as f64 * std::f64::consts::LN_2;
        let mut k = 0;
        for i in 0..n {
            k += i;
            log_det_d += 2.0 * th[k];
            jac += (n - i + 1) as f64 * th[k];
            k += 1;
        }
        // tr(D⁻¹B) = ‖L⁻¹ B^{1/2}‖² via a triangular solve on B
        let Some(linv_b) = l.solve_lower_triangular(&self.scatter) else {
            return f64::NEG_INFINITY;
        };
        let Some(inner) = l.solve_lower_triangular(&linv_b.transpose()) else {
            return f64::NEG_INFINITY;
        };
        -0.5 * self.power * log_det_d - 0.5 * inner.trace() + jac
    }

    pub fn gradient(&self, th: &Vector) -> Vector {
        let n = self.dim;
        let l = factor_from_theta(th, n);
        let d = &l * l.transpose();
        let Some(d_inv) = d.clone().try_inverse() else {
            return Vector::from_element(th.len(), f64::NAN);
        };
        let g = &d_inv * (-0.5 * self.power) + &d_inv * &self.scatter * &d_inv * 0.5;
        let dl = (&g + g.transpose()) * &l;
        let mut out = Vector::zeros(th.len());
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                out[k] = if i == j {
                    dl[(i, i)] * l[(i, i)] + (n - i + 1) as f64
                } else {
                    dl[(i, j)]
                };
                k += 1;
            }
        }
        out
    }
}

/// `Σ (Δy - f h)(Δy - f h)ᵀ / h` and the step count for every mode.
pub fn residual_scatter(
    z: &MjpPath,
    y: &DiffusionPath,
    modes: &[ModeDynamics],
    grid: &TimeGrid,
) -> Result<Vec<(Mat, usize)>> {
    y.check_grid(grid)?;
    let n = y.dim();
    let h = grid.step();
    let zs = z.on_grid(grid);
    let mut out = vec![(Mat::zeros(n, n), 0usize); modes.len()];
    for l in 0..grid.steps() {
        let m = zs[l];
        let r = y.at(l + 1) - y.at(l) - modes[m].drift(y.at(l)) * h;
        out[m].0.ger(1.0 / h, &r, &r, 1.0);
        out[m].1 += 1;
    }
    Ok(out)
}

/// `log q(to | from)` for the Langevin proposal with step `xi`.
pub fn log_proposal(target: &DispersionTarget, from: &Vector, to: &Vector, xi: f64) -> f64 {
    let mean = from + target.gradient(from) * xi;
    -(to - mean).norm_squared() / (4.0 * xi)
}

/// `log` of the Metropolis-Hastings ratio for moving `from → to`.
pub fn log_accept_ratio(target: &DispersionTarget, from: &Vector, to: &Vector, xi: f64) -> f64 {
    target.log_density(to) - target.log_density(from) + log_proposal(target, to, from, xi)
        - log_proposal(target, from, to, xi)
}

#[derive(Clone, Debug)]
pub struct MalaOutcome {
    pub d: Mat,
    pub accepted: bool,
    pub accept_prob: f64,
}

/// One Langevin step `θ* = θ + ξ∇log p(θ) + √(2ξ) ε` with Metropolis-Hastings
/// correction. Numerical failure of the proposal counts as a rejection.
pub fn mala_update_dispersion(
    d: &Mat,
    target: &DispersionTarget,
    xi: f64,
    rng: &mut SimRng,
) -> Result<MalaOutcome> {
    let th = theta_from_cov(d)?;
    let eps = rng.standard_normal_vec(th.len());
    let proposal = &th + target.gradient(&th) * xi + eps * (2.0 * xi).sqrt();
    let log_ratio = if xi > 0.0 {
        log_accept_ratio(target, &th, &proposal, xi)
    } else {
        0.0
    };
    let accept_prob = if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.min(0.0).exp()
    };
    let u = rng.uniform();
    if u < accept_prob {
        let l = factor_from_theta(&proposal, target.dim());
        let d_new = linalg::symmetrize(&(&l * l.transpose()));
        if linalg::spd_cholesky(&d_new, "D").is_ok() && d_new.iter().all(|v| v.is_finite()) {
            return Ok(MalaOutcome {
                d: d_new,
                accepted: true,
                accept_prob,
            });
        }
    }
    Ok(MalaOutcome {
        d: d.clone(),
        accepted: false,
        accept_prob,
    })
}

/// Robbins-Monro tuning of `log ξ` toward the target acceptance rate.
#[derive(Clone, Debug)]
pub struct StepAdapter {
    log_xi: f64,
    iter: usize,
}

impl StepAdapter {
    pub fn new(xi: f64) -> Self {
        Self {
            log_xi: xi.ln(),
            iter: 0,
        }
    }

    pub fn xi(&self) -> f64 {
        self.log_xi.exp()
    }

    pub fn update(&mut self, accept_prob: f64) {
        self.iter += 1;
        let gain = (self.iter as f64).powf(-0.6);
        self.log_xi += gain * (accept_prob - TARGET_ACCEPTANCE);
        self.log_xi = self.log_xi.clamp(-40.0, 5.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;

    fn target_1d(s: f64, m: usize, psi: f64, dof: f64) -> DispersionTarget {
        DispersionTarget::new(
            &Mat::from_element(1, 1, s),
            m,
            &IwPrior {
                scale: Mat::from_element(1, 1, psi),
                dof,
            },
        )
    }

    #[test]
    fn theta_round_trip() {
        let d = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let th = theta_from_cov(&d).unwrap();
        let l = factor_from_theta(&th, 2);
        assert!(linalg::frobenius(&(&l * l.transpose() - d)) < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let b = Mat::from_row_slice(2, 2, &[3.0, 0.4, 0.4, 1.5]);
        let t = DispersionTarget::new(
            &b,
            12,
            &IwPrior {
                scale: Mat::identity(2, 2) * 0.2,
                dof: 4.0,
            },
        );
        let th = Vector::from_vec(vec![0.1, -0.3, 0.2]);
        let g = t.gradient(&th);
        for k in 0..3 {
            let mut up = th.clone();
            let mut dn = th.clone();
            up[k] += 1e-6;
            dn[k] -= 1e-6;
            let fd = (t.log_density(&up) - t.log_density(&dn)) / 2e-6;
            assert!(
                (g[k] - fd).abs() < 1e-5 * fd.abs().max(1.0),
                "{k}: {} vs {fd}",
                g[k]
            );
        }
    }

    #[test]
    fn zero_step_keeps_state() {
        let t = target_1d(2.0, 10, 1.0, 3.0);
        let mut rng = SimRng::seed_from(1);
        let d = Mat::from_element(1, 1, 0.7);
        let out = mala_update_dispersion(&d, &t, 0.0, &mut rng).unwrap();
        assert!(out.accepted);
        assert_eq!(out.accept_prob, 1.0);
        assert!((out.d[(0, 0)] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn detailed_balance_pairs() {
        let t = target_1d(4.0, 20, 1.0, 3.0);
        let xi = 0.05;
        let mut rng = SimRng::seed_from(2);
        for _ in 0..20 {
            let a = Vector::from_element(1, 0.5 * rng.standard_normal());
            let b = Vector::from_element(1, 0.5 * rng.standard_normal());
            let alpha = |x: &Vector, y: &Vector| log_accept_ratio(&t, x, y, xi).min(0.0);
            let lhs = t.log_density(&a) + log_proposal(&t, &a, &b, xi) + alpha(&a, &b);
            let rhs = t.log_density(&b) + log_proposal(&t, &b, &a, xi) + alpha(&b, &a);
            assert!((lhs.exp() - rhs.exp()).abs() <= 1e-10 * lhs.exp().abs().max(1e-300));
        }
    }

    #[test]
    fn no_data_chain_matches_prior_mean() {
        let (psi, dof) = (1.0, 8.0);
        let t = target_1d(0.0, 0, psi, dof);
        let mut rng = SimRng::seed_from(3);
        let mut adapter = StepAdapter::new(0.1);
        let mut d = Mat::from_element(1, 1, 1.0);
        for _ in 0..5000 {
            let out = mala_update_dispersion(&d, &t, adapter.xi(), &mut rng).unwrap();
            adapter.update(out.accept_prob);
            d = out.d;
        }
        let xi = adapter.xi();
        let mut trace = Vec::with_capacity(100_000);
        let mut accepted = 0;
        for _ in 0..100_000 {
            let out = mala_update_dispersion(&d, &t, xi, &mut rng).unwrap();
            accepted += out.accepted as usize;
            d = out.d;
            trace.push(d[(0, 0)]);
        }
        let rate = accepted as f64 / 1e5;
        assert!(rate > 0.2 && rate < 0.9, "acceptance {rate}");
        let expected = psi / (dof - 2.0);
        let se = testutil::batch_se(&trace);
        assert!(
            (testutil::mean(&trace) - expected).abs() < 3.0 * se,
            "{} vs {expected}",
            testutil::mean(&trace)
        );
    }
}
