//! Samplers for the conjugate families. Gamma uses (shape, rate); the
//! inverse-Wishart `IW(Ψ, ν)` has density `∝ |S|^{-(ν+n+1)/2} exp(-tr(Ψ S⁻¹)/2)`
//! and mean `Ψ / (ν - n - 1)`.

use crate::error::Result;
use crate::linalg::{self, Mat};
use crate::rng::SimRng;

pub fn dirichlet(alpha: &[f64], rng: &mut SimRng) -> Vec<f64> {
    let mut g: Vec<f64> = alpha.iter().map(|&a| rng.gamma(a, 1.0)).collect();
    let total: f64 = g.iter().sum();
    if total > 0.0 {
        g.iter_mut().for_each(|v| *v /= total);
    } else {
        // all shapes tiny enough to underflow: fall back to the largest alpha
        let best = alpha
            .iter()
            .enumerate()
            .fold(0, |b, (i, &a)| if a > alpha[b] { i } else { b });
        g.iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = if i == best { 1.0 } else { 0.0 });
    }
    g
}

/// Wishart draw with scale `V` and `dof` degrees of freedom (Bartlett).
pub fn wishart(scale: &Mat, dof: f64, rng: &mut SimRng) -> Result<Mat> {
    let n = scale.nrows();
    let l = linalg::spd_cholesky(scale, "Wishart scale")?.l();
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = (2.0 * rng.gamma(0.5 * (dof - i as f64), 1.0)).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.standard_normal();
        }
    }
    let la = l * a;
    Ok(linalg::symmetrize(&(&la * la.transpose())))
}

pub fn inverse_wishart(scale: &Mat, dof: f64, rng: &mut SimRng) -> Result<Mat> {
    let w = wishart(
        &linalg::spd_inverse(scale, "inverse-Wishart scale")?,
        dof,
        rng,
    )?;
    linalg::spd_inverse(&w, "Wishart draw")
}

pub fn inverse_wishart_mean(scale: &Mat, dof: f64) -> Mat {
    scale / (dof - scale.nrows() as f64 - 1.0)
}

/// Matrix-normal draw `M + chol(U) E chol(V)ᵀ` with row covariance `U` and
/// column covariance `V`.
pub fn matrix_normal(
    mean: &Mat,
    row_cov_chol: &Mat,
    col_cov: &Mat,
    rng: &mut SimRng,
) -> Result<Mat> {
    let (r, c) = mean.shape();
    let cv = linalg::spd_cholesky(col_cov, "column covariance")?.l();
    let e = Mat::from_fn(r, c, |_, _| rng.standard_normal());
    Ok(mean + row_cov_chol * e * cv.transpose())
}
