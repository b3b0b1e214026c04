use proptest::prelude::*;

use ssde_gibbs::diffusion::{posterior_step, run_information_filter, sample_conditional_diffusion};
use ssde_gibbs::linalg::min_eigenvalue;
use ssde_gibbs::params::{
    dist, drift_posterior, initial_state_posterior, mjp_sufficient_stats, obs_cov_posterior,
};
use ssde_gibbs::sampler::batch_means_ess;
use ssde_gibbs::sampler::diagnostics::flatten_params;
use ssde_gibbs::switching::{backward_rates, run_ks_filter, sample_conditional_switching};
use ssde_gibbs::{
    sim, InitialLaw, IwPrior, Mat, MatrixNormalPrior, ModeDynamics, ModelParams, NiwPrior,
    ObservationModel, RateMatrix, SimRng, TimeGrid, Vector,
};

const HORIZON: f64 = 1.0;
const STEP: f64 = 0.01;

fn random_mode(rng: &mut SimRng, n: usize) -> ModeDynamics {
    let a = Mat::from_fn(n, n, |_, _| 0.5 * rng.standard_normal()) - Mat::identity(n, n);
    let q = Mat::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 0.3 + rng.uniform(),
        std::cmp::Ordering::Greater => 0.3 * rng.standard_normal(),
        std::cmp::Ordering::Less => 0.0,
    });
    ModeDynamics::new(a, 2.0 * rng.standard_normal_vec(n), q).unwrap()
}

fn random_spd(rng: &mut SimRng, n: usize, floor: f64) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| rng.standard_normal());
    &g * g.transpose() + Mat::identity(n, n) * floor
}

fn random_rates(rng: &mut SimRng, k: usize) -> RateMatrix {
    let off = Mat::from_fn(k, k, |i, j| if i == j { 0.0 } else { 3.0 * rng.uniform() });
    RateMatrix::from_off_diagonal(&off).unwrap()
}

fn random_model(seed: u64, k: usize, n: usize) -> ModelParams {
    let mut rng = SimRng::seed_from(seed);
    ModelParams {
        rates: random_rates(&mut rng, k),
        modes: (0..k).map(|_| random_mode(&mut rng, n)).collect(),
        init: InitialLaw {
            pi: dist::dirichlet(&vec![1.0; k], &mut rng),
            mu0: rng.standard_normal_vec(n),
            sigma0: random_spd(&mut rng, n, 0.1),
        },
        obs: ObservationModel {
            sigma_x: random_spd(&mut rng, n, 0.05) * 0.1,
        },
    }
}

fn asym(m: &Mat) -> f64 {
    (m - m.transpose()).abs().max()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rate_rows_sum_to_zero(seed in any::<u64>(), k in 1usize..6) {
        let rates = random_rates(&mut SimRng::seed_from(seed), k);
        let m = rates.matrix();
        for i in 0..k {
            prop_assert!(m.row(i).sum().abs() < 1e-12);
            for j in 0..k {
                if i != j {
                    prop_assert!(m[(i, j)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn sojourn_times_fill_the_horizon(seed in any::<u64>(), k in 1usize..5, horizon in 0.1f64..20.0) {
        let mut rng = SimRng::seed_from(seed);
        let rates = random_rates(&mut rng, k);
        let pi = dist::dirichlet(&vec![1.0; k], &mut rng);
        let z = sim::simulate_mjp(&rates, &pi, horizon, &mut rng).unwrap();
        let total: f64 = z.sojourn_totals(k).iter().sum();
        prop_assert!((total - horizon).abs() < 1e-9 * horizon.max(1.0));
        let stats = mjp_sufficient_stats(&z, k);
        let count: f64 = stats.counts.sum();
        prop_assert_eq!(count as usize, z.num_jumps());
    }

    #[test]
    fn mode_filter_stays_on_simplex(seed in any::<u64>(), k in 2usize..4, n in 1usize..3) {
        let p = random_model(seed, k, n);
        let grid = TimeGrid::new(HORIZON, STEP).unwrap();
        let mut rng = SimRng::seed_from(seed ^ 1);
        let (_, y, _) = sim::simulate_model(&p, &grid, &[], &mut rng).unwrap();
        let ft = run_ks_filter(&y, &p.modes, &p.rates, &p.init.pi, &grid).unwrap();
        prop_assert_eq!(ft.len(), grid.len());
        for row in ft.probs() {
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let z = sample_conditional_switching(&ft, &p.rates, &grid, &mut rng).unwrap();
        let total: f64 = z.sojourn_totals(k).iter().sum();
        prop_assert!((total - HORIZON).abs() < 1e-9);
    }

    #[test]
    fn backward_rates_form_a_generator(seed in any::<u64>(), k in 2usize..5) {
        let mut rng = SimRng::seed_from(seed);
        let rates = random_rates(&mut rng, k);
        let pf = dist::dirichlet(&vec![0.5; k], &mut rng);
        let g = backward_rates(&pf, &rates);
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    prop_assert!(g[(i, j)] >= 0.0);
                }
            }
            prop_assert!(g.row(i).sum().abs() < 1e-9 * (1.0 + g.abs().max()));
        }
    }

    #[test]
    fn information_matrix_is_symmetric_psd(seed in any::<u64>(), k in 1usize..3, n in 1usize..4, count in 0usize..6) {
        let p = random_model(seed, k, n);
        let grid = TimeGrid::new(HORIZON, STEP).unwrap();
        let mut rng = SimRng::seed_from(seed ^ 2);
        let times = sim::evenly_spaced_times(&grid, count);
        let (z, _, obs) = sim::simulate_model(&p, &grid, &times, &mut rng).unwrap();
        let bi = run_information_filter(&z, &p.modes, &obs, &p.obs.sigma_x, &grid).unwrap();
        for l in 0..bi.len() {
            let info = bi.info(l);
            prop_assert_eq!(asym(info), 0.0);
            prop_assert!(min_eigenvalue(info) >= -1e-9 * (1.0 + info.abs().max()));
            prop_assert!(bi.lin(l).iter().all(|v| v.is_finite()));
        }
        let y = sample_conditional_diffusion(&z, &bi, &p.modes, &p.init, &grid, &mut rng).unwrap();
        prop_assert_eq!(y.len(), grid.len());
        prop_assert!(y.values().iter().all(|v| v.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn path_step_precision_dominates_transition(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = SimRng::seed_from(seed);
        let mode = random_mode(&mut rng, n);
        let info = random_spd(&mut rng, n, 0.0);
        let lin = rng.standard_normal_vec(n);
        let y = rng.standard_normal_vec(n);
        let (mean, l) = posterior_step(&mode, &info, &lin, &y, STEP).unwrap();
        prop_assert!(mean.iter().all(|v| v.is_finite()));
        let precision = &l * l.transpose();
        let gap = &precision - mode.d_inv() / STEP;
        prop_assert!(min_eigenvalue(&gap) >= -1e-8 * precision.abs().max());
    }

    #[test]
    fn conjugate_posteriors_are_spd(seed in any::<u64>(), n in 1usize..4, m in 0usize..20) {
        let mut rng = SimRng::seed_from(seed);
        let iw = IwPrior { scale: random_spd(&mut rng, n, 0.1), dof: n as f64 + 2.0 };
        let residuals: Vec<Vector> = (0..m).map(|_| rng.standard_normal_vec(n)).collect();
        let post = obs_cov_posterior(&iw, &residuals);
        prop_assert_eq!(post.dof, iw.dof + m as f64);
        prop_assert!(min_eigenvalue(&post.scale) > 0.0);
        let draw = dist::inverse_wishart(&post.scale, post.dof, &mut rng).unwrap();
        prop_assert!(asym(&draw) == 0.0 && min_eigenvalue(&draw) > 0.0);

        let niw = NiwPrior {
            eta: rng.standard_normal_vec(n),
            lambda: 1.0 + rng.uniform(),
            psi: random_spd(&mut rng, n, 0.1),
            kappa: n as f64 + 2.0,
        };
        let post = initial_state_posterior(&niw, &rng.standard_normal_vec(n));
        prop_assert!(min_eigenvalue(&post.psi) > 0.0);
        prop_assert!(post.lambda > niw.lambda && post.kappa > niw.kappa);

        let prior = MatrixNormalPrior {
            mean: Mat::from_fn(n, n + 1, |_, _| rng.standard_normal()),
            precision: random_spd(&mut rng, n + 1, 0.1),
        };
        let ybar = Mat::from_fn(n + 1, m, |_, _| rng.standard_normal());
        let dy = Mat::from_fn(n, m, |_, _| rng.standard_normal());
        let post = drift_posterior(&prior, &(&dy * ybar.transpose()), &(&ybar * ybar.transpose())).unwrap();
        prop_assert_eq!(asym(&post.precision), 0.0);
        prop_assert!(min_eigenvalue(&post.precision) > 0.0);
    }

    #[test]
    fn dirichlet_draws_lie_on_simplex(seed in any::<u64>(), alpha in prop::collection::vec(1e-3f64..10.0, 1..6)) {
        let p = dist::dirichlet(&alpha, &mut SimRng::seed_from(seed));
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ess_is_bounded(xs in prop::collection::vec(-1e3f64..1e3, 0..400)) {
        let ess = batch_means_ess(&xs);
        prop_assert!(ess <= xs.len() as f64);
        prop_assert!(xs.is_empty() || ess > 0.0);
    }

    #[test]
    fn flattened_names_are_unique_and_complete(seed in any::<u64>(), k in 1usize..4, n in 1usize..4) {
        let p = random_model(seed, k, n);
        let flat = flatten_params(&p);
        let mut names: Vec<&str> = flat.iter().map(|(s, _)| s.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        prop_assert_eq!(names.len(), flat.len());
        prop_assert!(flat.iter().all(|(_, v)| v.is_finite()));
    }

    #[test]
    fn grid_endpoints_are_exact(steps in 1usize..5000, horizon in 0.01f64..100.0) {
        let grid = TimeGrid::new(horizon, horizon / steps as f64).unwrap();
        prop_assert_eq!(grid.len(), grid.steps() + 1);
        prop_assert_eq!(grid.time(0), 0.0);
        prop_assert!((grid.time(grid.steps()) - horizon).abs() <= 1e-12 * horizon);
    }

    #[test]
    fn identical_seeds_reproduce_bitwise(seed in any::<u64>()) {
        let p = random_model(seed, 2, 2);
        let grid = TimeGrid::new(HORIZON, STEP).unwrap();
        let times = sim::evenly_spaced_times(&grid, 5);
        let run = || {
            let (_, y, obs) = sim::simulate_model(&p, &grid, &times, &mut SimRng::seed_from(seed)).unwrap();
            (y.values().to_vec(), obs.values().to_vec())
        };
        prop_assert_eq!(run(), run());
    }
}
