mod common;
#[path = "../src/testutil.rs"]
mod testutil;

use common::{rts_smoother, scalar, vec1};
use ssde_gibbs::diffusion::{
    run_information_filter, run_kalman_backward_oracle, sample_conditional_diffusion,
};
use ssde_gibbs::{
    sim, InitialLaw, Mat, MjpPath, ModeDynamics, ObservationSet, RateMatrix, SimRng, TimeGrid,
    Vector,
};

fn random_mode(rng: &mut SimRng, n: usize) -> ModeDynamics {
    let a = Mat::from_fn(n, n, |_, _| 0.5 * rng.standard_normal()) - Mat::identity(n, n);
    let q = Mat::from_fn(n, n, |i, j| {
        if i == j {
            0.4 + rng.uniform()
        } else if i > j {
            0.3 * rng.standard_normal()
        } else {
            0.0
        }
    });
    ModeDynamics::new(a, rng.standard_normal_vec(n), q).unwrap()
}

#[test]
fn kalman_oracle_scalar_closed_form() {
    let grid = TimeGrid::new(2.0, 1e-2).unwrap();
    let modes = vec![ModeDynamics::new(scalar(0.0), vec1(0.0), scalar(1.0)).unwrap()];
    let obs = ObservationSet::new(vec![2.0], vec![vec1(0.5)]).unwrap();
    let oracle = run_kalman_backward_oracle(
        &MjpPath::constant(0, 2.0),
        &modes,
        &obs,
        &scalar(0.3),
        &grid,
    )
    .unwrap();
    for l in (0..grid.len()).step_by(17) {
        let (i, _) = oracle.information(l, 1).unwrap();
        assert!((i[(0, 0)] - 1.0 / (0.3 + 2.0 - grid.time(l))).abs() < 1e-12);
    }
    let empty = run_kalman_backward_oracle(
        &MjpPath::constant(0, 2.0),
        &modes,
        &ObservationSet::empty(),
        &scalar(0.3),
        &grid,
    )
    .unwrap();
    assert_eq!(empty.log_beta(0, &vec1(3.0)).unwrap(), 0.0);
}

#[test]
fn information_gradient_matches_finite_differences() {
    let mut rng = SimRng::seed_from(44);
    let grid = TimeGrid::new(2.0, 1e-2).unwrap();
    let modes: Vec<_> = (0..2).map(|_| random_mode(&mut rng, 2)).collect();
    let rates = RateMatrix::new(Mat::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0])).unwrap();
    let z = sim::simulate_mjp(&rates, &[0.5, 0.5], 2.0, &mut rng).unwrap();
    let y = sim::simulate_ssde(&z, &modes, &Vector::zeros(2), &grid, &mut rng).unwrap();
    let sigma_x = Mat::identity(2, 2) * 0.2;
    let obs = sim::generate_observations(
        &y,
        &sim::evenly_spaced_times(&grid, 5),
        &sigma_x,
        &grid,
        &mut rng,
    )
    .unwrap();
    let bi = run_information_filter(&z, &modes, &obs, &sigma_x, &grid).unwrap();
    let oracle = run_kalman_backward_oracle(&z, &modes, &obs, &sigma_x, &grid).unwrap();
    for _ in 0..10 {
        let l = (rng.uniform() * (grid.steps() as f64 - 1.0)) as usize;
        let yv = rng.standard_normal_vec(2);
        let g = bi.grad_log_beta(l, &yv);
        let delta = 1e-5;
        for k in 0..2 {
            let mut up = yv.clone();
            let mut dn = yv.clone();
            up[k] += delta;
            dn[k] -= delta;
            let fd = (oracle.log_beta(l, &up).unwrap() - oracle.log_beta(l, &dn).unwrap())
                / (2.0 * delta);
            let rel = (g[k] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel < 1e-4, "l = {l}, k = {k}: {} vs {fd}", g[k]);
        }
    }
}

#[test]
fn posterior_mean_matches_rts_smoother() {
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let modes = vec![ModeDynamics::new(scalar(-1.0), vec1(1.0), scalar(0.5f64.sqrt())).unwrap()];
    let z = MjpPath::constant(0, 1.0);
    let init = InitialLaw {
        pi: vec![1.0],
        mu0: vec1(0.0),
        sigma0: scalar(0.5),
    };
    let sigma_x = scalar(0.1);
    let obs = ObservationSet::new(
        vec![0.25, 0.5, 0.75, 1.0],
        vec![vec1(0.4), vec1(0.1), vec1(0.6), vec1(0.5)],
    )
    .unwrap();
    let (ms, ps) = rts_smoother(&z, &modes, &obs, &sigma_x, &init.mu0, &init.sigma0, &grid);
    let bi = run_information_filter(&z, &modes, &obs, &sigma_x, &grid).unwrap();
    let mut rng = SimRng::seed_from(3);
    let idx = obs.grid_indices(&grid).unwrap();
    let mut draws = vec![Vec::new(); idx.len()];
    for _ in 0..5000 {
        let path = sample_conditional_diffusion(&z, &bi, &modes, &init, &grid, &mut rng).unwrap();
        for (d, &l) in draws.iter_mut().zip(&idx) {
            d.push(path.at(l)[0]);
        }
    }
    for (d, &l) in draws.iter().zip(&idx) {
        let se = (ps[l][(0, 0)] / d.len() as f64).sqrt();
        let m = testutil::mean(d);
        assert!(
            (m - ms[l][0]).abs() < 3.0 * se,
            "t = {}: {m} vs {}",
            grid.time(l),
            ms[l][0]
        );
    }
}

#[test]
fn posterior_marginal_matches_gaussian_smoother() {
    // y = y0 + b t + W, one observation at T: the smoothing marginal at t is
    // Gaussian with moments from the joint law of (y(t), x)
    let (b, d, s0, sx, t_end, x): (f64, f64, f64, f64, f64, f64) = (0.5, 1.0, 0.3, 0.2, 1.0, 1.7);
    let grid = TimeGrid::new(t_end, 1e-3).unwrap();
    let modes = vec![ModeDynamics::new(scalar(0.0), vec1(b), scalar(d.sqrt())).unwrap()];
    let z = MjpPath::constant(0, t_end);
    let init = InitialLaw {
        pi: vec![1.0],
        mu0: vec1(0.0),
        sigma0: scalar(s0),
    };
    let obs = ObservationSet::new(vec![t_end], vec![vec1(x)]).unwrap();
    let bi = run_information_filter(&z, &modes, &obs, &scalar(sx), &grid).unwrap();
    let probe = 500;
    let t = grid.time(probe);
    let var_t = s0 + d * t;
    let cov = s0 + d * t;
    let var_x = s0 + d * t_end + sx;
    let mean = b * t + cov / var_x * (x - b * t_end);
    let var = var_t - cov * cov / var_x;

    let mut rng = SimRng::seed_from(12);
    let sampled: Vec<f64> = (0..10_000)
        .map(|_| {
            sample_conditional_diffusion(&z, &bi, &modes, &init, &grid, &mut rng)
                .unwrap()
                .at(probe)[0]
        })
        .collect();
    let reference: Vec<f64> = (0..10_000)
        .map(|_| mean + var.sqrt() * rng.standard_normal())
        .collect();
    let p = testutil::ks_two_sample_pvalue(sampled, reference);
    assert!(p > 0.01, "p = {p}");
}
