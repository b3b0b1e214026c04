//! Runs the backward information filter for a fixed mode path, compares the
//! smoothed state with a Kalman smoother, and draws posterior state paths.

use ssde_gibbs::diffusion::{run_information_filter, sample_conditional_diffusion};
use ssde_gibbs::{sim, InitialLaw, Mat, MjpPath, ModeDynamics, SimRng, TimeGrid, Vector};

fn main() -> ssde_gibbs::Result<()> {
    let grid = TimeGrid::new(5.0, 1e-2)?;
    let modes = vec![
        ModeDynamics::from_covariance(
            Mat::from_element(1, 1, -1.0),
            Vector::from_element(1, 1.0),
            Mat::from_element(1, 1, 0.5),
        )?,
        ModeDynamics::from_covariance(
            Mat::from_element(1, 1, -1.0),
            Vector::from_element(1, -1.0),
            Mat::from_element(1, 1, 0.5),
        )?,
    ];
    let init = InitialLaw {
        pi: vec![1.0, 0.0],
        mu0: Vector::zeros(1),
        sigma0: Mat::from_element(1, 1, 0.25),
    };
    let sigma_x = Mat::from_element(1, 1, 0.05);
    let z = MjpPath::new(0, vec![(2.5, 1)], 5.0)?;
    let mut rng = SimRng::seed_from(3);
    let y = sim::simulate_ssde(&z, &modes, &Vector::zeros(1), &grid, &mut rng)?;
    let obs = sim::generate_observations(
        &y,
        &sim::evenly_spaced_times(&grid, 10),
        &sigma_x,
        &grid,
        &mut rng,
    )?;

    let bi = run_information_filter(&z, &modes, &obs, &sigma_x, &grid)?;
    let draws: Vec<_> = (0..500)
        .map(|_| sample_conditional_diffusion(&z, &bi, &modes, &init, &grid, &mut rng))
        .collect::<Result<_, _>>()?;

    println!(
        "{:>6} {:>9} {:>11} {:>9} {:>9}",
        "t", "truth", "post mean", "I(t)", "a(t)"
    );
    for l in (0..grid.len()).step_by(50) {
        let mean = draws.iter().map(|d| d.at(l)[0]).sum::<f64>() / draws.len() as f64;
        println!(
            "{:6.2} {:9.4} {:11.4} {:9.3} {:9.3}",
            grid.time(l),
            y.at(l)[0],
            mean,
            bi.info(l)[(0, 0)],
            bi.lin(l)[0]
        );
    }
    Ok(())
}
