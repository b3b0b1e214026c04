//! Filters the mode probabilities from a fully observed state path and
//! draws mode paths from their smoothing law.

use ssde_gibbs::switching::{run_ks_filter, sample_conditional_switching};
use ssde_gibbs::{sim, Mat, ModeDynamics, RateMatrix, SimRng, TimeGrid, Vector};

fn main() -> ssde_gibbs::Result<()> {
    let grid = TimeGrid::new(10.0, 1e-2)?;
    let rates = RateMatrix::new(Mat::from_row_slice(2, 2, &[-0.4, 0.4, 0.4, -0.4]))?;
    let modes = vec![
        ModeDynamics::from_covariance(
            Mat::from_element(1, 1, -1.0),
            Vector::from_element(1, 1.5),
            Mat::from_element(1, 1, 0.4),
        )?,
        ModeDynamics::from_covariance(
            Mat::from_element(1, 1, -1.0),
            Vector::from_element(1, -1.5),
            Mat::from_element(1, 1, 0.4),
        )?,
    ];
    let pi = [0.5, 0.5];
    let mut rng = SimRng::seed_from(11);
    let z = sim::simulate_mjp(&rates, &pi, grid.horizon(), &mut rng)?;
    let y = sim::simulate_ssde(&z, &modes, &Vector::zeros(1), &grid, &mut rng)?;

    let ft = run_ks_filter(&y, &modes, &rates, &pi, &grid)?;
    let paths: Vec<_> = (0..200)
        .map(|_| sample_conditional_switching(&ft, &rates, &grid, &mut rng))
        .collect::<Result<_, _>>()?;

    println!("true jumps: {}", z.num_jumps());
    let mean_jumps = paths.iter().map(|p| p.num_jumps() as f64).sum::<f64>() / paths.len() as f64;
    println!("mean sampled jumps: {mean_jumps:.2}");
    println!(
        "{:>6} {:>5} {:>9} {:>10}",
        "t", "true", "filter p1", "smooth p1"
    );
    for l in (0..grid.len()).step_by(50) {
        let t = grid.time(l);
        let smooth =
            paths.iter().filter(|p| p.state_at(t) == 0).count() as f64 / paths.len() as f64;
        println!(
            "{t:6.2} {:5} {:9.3} {:10.3}",
            z.state_at(t) + 1,
            ft.at(l)[0],
            smooth
        );
    }
    Ok(())
}
