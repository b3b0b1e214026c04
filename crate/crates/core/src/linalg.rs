//! Small dense linear-algebra helpers shared by the filters and samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative jitter added once when a Cholesky attempt fails.
pub const JITTER_REL: f64 = 1e-10;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize_in_place(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// A failed first attempt is retried once with `1e-10 * trace(M) / n` added to
/// the diagonal; a second failure is reported as `NotSpd`.
pub fn spd_cholesky(m: &Mat, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "{what} must be square and non-empty"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::not_spd(what));
    }
    let sym = symmetrize(m);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c);
    }
    let jitter = JITTER_REL * sym.trace() / n as f64;
    if jitter <= 0.0 {
        return Err(Error::not_spd(what));
    }
    let mut bumped = sym;
    for i in 0..n {
        bumped[(i, i)] += jitter;
    }
    Cholesky::new(bumped).ok_or_else(|| Error::not_spd(what))
}

pub fn spd_inverse(m: &Mat, what: &str) -> Result<Mat> {
    let inv = spd_cholesky(m, what)?.inverse();
    Ok(symmetrize(&inv))
}

pub fn log_det_from_chol(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Lower Cholesky factor with the strict upper triangle zeroed.
pub fn lower_factor(chol: &Cholesky<f64, Dyn>) -> Mat {
    chol.l()
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn frobenius(m: &Mat) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(nr, nc, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
