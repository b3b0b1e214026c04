#![allow(dead_code)]

use ssde_gibbs::linalg::spd_inverse;
use ssde_gibbs::{Mat, MjpPath, ModeDynamics, ObservationSet, TimeGrid, Vector};

/// Kalman filter plus Rauch-Tung-Striebel smoother on the Euler-discretized
/// model `y_{l+1} = (I + A h) y_l + b h + N(0, D h)`. Returns smoothed means
/// and covariances at every grid point.
pub fn rts_smoother(
    z: &MjpPath,
    modes: &[ModeDynamics],
    obs: &ObservationSet,
    sigma_x: &Mat,
    mu0: &Vector,
    sigma0: &Mat,
    grid: &TimeGrid,
) -> (Vec<Vector>, Vec<Mat>) {
    let n = mu0.len();
    let h = grid.step();
    let zs = z.on_grid(grid);
    let idx = obs.grid_indices(grid).unwrap();
    let mut slot = vec![None; grid.len()];
    for (i, &l) in idx.iter().enumerate() {
        slot[l] = Some(i);
    }
    let eye = Mat::identity(n, n);
    let mut mf = Vec::with_capacity(grid.len());
    let mut pf = Vec::with_capacity(grid.len());
    let mut mp = mu0.clone();
    let mut pp = sigma0.clone();
    for l in 0..grid.len() {
        if l > 0 {
            let m = &modes[zs[l - 1]];
            let f = &eye + &m.a * h;
            mp = &f * &mf[l - 1] + &m.b * h;
            pp = &f * &pf[l - 1] * f.transpose() + m.d() * h;
        }
        let (mut m, mut p) = (mp.clone(), pp.clone());
        if let Some(i) = slot[l] {
            let s = &p + sigma_x;
            let k = &p * spd_inverse(&s, "S").unwrap();
            m = &m + &k * (&obs.values()[i] - &m);
            p = (&eye - &k) * &p;
        }
        mf.push(m);
        pf.push(p);
    }
    let mut ms = mf.clone();
    let mut ps = pf.clone();
    for l in (0..grid.steps()).rev() {
        let m = &modes[zs[l]];
        let f = &eye + &m.a * h;
        let pred_p = &f * &pf[l] * f.transpose() + m.d() * h;
        let pred_m = &f * &mf[l] + &m.b * h;
        let g = &pf[l] * f.transpose() * spd_inverse(&pred_p, "P").unwrap();
        ms[l] = &mf[l] + &g * (&ms[l + 1] - pred_m);
        ps[l] = &pf[l] + &g * (&ps[l + 1] - pred_p) * g.transpose();
    }
    (ms, ps)
}

pub fn scalar(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

pub fn vec1(v: f64) -> Vector {
    Vector::from_element(1, v)
}
