//! Draws a mode path, a state path and noisy observations from a two-mode
//! model and prints a short summary.

use ssde_gibbs::{
    sim, InitialLaw, Mat, ModeDynamics, ModelParams, ObservationModel, RateMatrix, SimRng,
    TimeGrid, Vector,
};

fn main() -> ssde_gibbs::Result<()> {
    let params = ModelParams {
        rates: RateMatrix::new(Mat::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, -0.5]))?,
        modes: vec![
            ModeDynamics::from_covariance(
                Mat::from_element(1, 1, -1.0),
                Vector::from_element(1, 2.0),
                Mat::from_element(1, 1, 0.3),
            )?,
            ModeDynamics::from_covariance(
                Mat::from_element(1, 1, -1.0),
                Vector::from_element(1, -2.0),
                Mat::from_element(1, 1, 0.3),
            )?,
        ],
        init: InitialLaw {
            pi: vec![0.5, 0.5],
            mu0: Vector::zeros(1),
            sigma0: Mat::identity(1, 1),
        },
        obs: ObservationModel {
            sigma_x: Mat::from_element(1, 1, 0.05),
        },
    };
    let grid = TimeGrid::new(20.0, 0.01)?;
    let times = sim::evenly_spaced_times(&grid, 40);
    let mut rng = SimRng::seed_from(7);
    let (z, y, obs) = sim::simulate_model(&params, &grid, &times, &mut rng)?;

    println!("{} jumps over [0, {}]", z.num_jumps(), grid.horizon());
    for (k, total) in z.sojourn_totals(2).iter().enumerate() {
        println!("time in mode {}: {total:.2}", k + 1);
    }
    println!("{:>8} {:>5} {:>9} {:>9}", "t", "mode", "y", "x");
    for (&t, x) in obs.times().iter().zip(obs.values()).step_by(4) {
        let l = grid.snap(t)?;
        println!(
            "{t:8.2} {:5} {:9.4} {:9.4}",
            z.state_at(t) + 1,
            y.at(l)[0],
            x[0]
        );
    }
    Ok(())
}
