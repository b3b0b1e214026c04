//! Derives hyperparameters and a starting point from the observations alone
//! by clustering them into modes.

use ssde_gibbs::params::empirical_hyperparams;
use ssde_gibbs::{
    sim, InitialLaw, Mat, ModeDynamics, ModelParams, ObservationModel, RateMatrix, SimRng,
    TimeGrid, Vector,
};

fn main() -> ssde_gibbs::Result<()> {
    let params = ModelParams {
        rates: RateMatrix::new(Mat::from_row_slice(2, 2, &[-0.3, 0.3, 0.3, -0.3]))?,
        modes: vec![
            ModeDynamics::from_covariance(
                -Mat::identity(2, 2),
                Vector::from_vec(vec![2.0, 1.0]),
                Mat::identity(2, 2) * 0.2,
            )?,
            ModeDynamics::from_covariance(
                -Mat::identity(2, 2),
                Vector::from_vec(vec![-2.0, 0.0]),
                Mat::identity(2, 2) * 0.2,
            )?,
        ],
        init: InitialLaw {
            pi: vec![0.5, 0.5],
            mu0: Vector::zeros(2),
            sigma0: Mat::identity(2, 2),
        },
        obs: ObservationModel {
            sigma_x: Mat::identity(2, 2) * 0.05,
        },
    };
    let grid = TimeGrid::new(30.0, 0.01)?;
    let mut rng = SimRng::seed_from(21);
    let (_, _, obs) = sim::simulate_model(
        &params,
        &grid,
        &sim::evenly_spaced_times(&grid, 150),
        &mut rng,
    )?;

    let init = empirical_hyperparams(&obs, 2, grid.horizon(), &mut rng)?;
    for (k, c) in init.clusters.centers.iter().enumerate() {
        let size = init.clusters.labels.iter().filter(|&&l| l == k).count();
        println!(
            "cluster {}: center ({:.3}, {:.3}), {size} points",
            k + 1,
            c[0],
            c[1]
        );
    }
    println!("starting path has {} jumps", init.z.num_jumps());
    println!(
        "rate prior: Gamma(shape {}, rate {})",
        init.hyper.rate_shape, init.hyper.rate_rate
    );
    let r = init.params.rates.matrix();
    println!(
        "starting rates: 1->2 {:.3}, 2->1 {:.3}",
        r[(0, 1)],
        r[(1, 0)]
    );
    for (k, m) in init.params.modes.iter().enumerate() {
        println!(
            "mode {} start: A = [[{:.3}, {:.3}], [{:.3}, {:.3}]], b = [{:.3}, {:.3}]",
            k + 1,
            m.a[(0, 0)],
            m.a[(0, 1)],
            m.a[(1, 0)],
            m.a[(1, 1)],
            m.b[0],
            m.b[1]
        );
    }
    Ok(())
}
