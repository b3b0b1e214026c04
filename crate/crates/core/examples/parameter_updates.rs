//! Conjugate updates for the rates and drift, and Langevin updates for the
//! dispersion, with the mode and state paths held at their true values.

use ssde_gibbs::params::{
    drift_sufficient_stats, mala, mjp_sufficient_stats, update_drift, update_rates,
};
use ssde_gibbs::{
    sim, IwPrior, Mat, MatrixNormalPrior, ModeDynamics, RateMatrix, SimRng, TimeGrid, Vector,
};

fn main() -> ssde_gibbs::Result<()> {
    let grid = TimeGrid::new(50.0, 1e-2)?;
    let rates = RateMatrix::new(Mat::from_row_slice(2, 2, &[-0.5, 0.5, 1.0, -1.0]))?;
    let mut modes = vec![
        ModeDynamics::from_covariance(
            Mat::from_element(1, 1, -1.0),
            Vector::from_element(1, 1.0),
            Mat::from_element(1, 1, 0.2),
        )?,
        ModeDynamics::from_covariance(
            Mat::from_element(1, 1, -2.0),
            Vector::from_element(1, -1.0),
            Mat::from_element(1, 1, 0.6),
        )?,
    ];
    let mut rng = SimRng::seed_from(5);
    let z = sim::simulate_mjp(&rates, &[0.5, 0.5], grid.horizon(), &mut rng)?;
    let y = sim::simulate_ssde(&z, &modes, &Vector::zeros(1), &grid, &mut rng)?;

    let stats = mjp_sufficient_stats(&z, 2);
    let drift_prior = MatrixNormalPrior {
        mean: Mat::zeros(1, 2),
        precision: Mat::identity(2, 2),
    };
    let d_prior = IwPrior {
        scale: Mat::from_element(1, 1, 0.1),
        dof: 3.0,
    };
    let truth: Vec<(f64, f64, f64)> = modes
        .iter()
        .map(|m| (m.a[(0, 0)], m.b[0], m.d()[(0, 0)]))
        .collect();
    let mut xi = vec![mala::StepAdapter::new(1e-3), mala::StepAdapter::new(1e-3)];
    let mut sums = vec![[0.0; 3]; 2];
    let mut rate_sum = Mat::zeros(2, 2);
    let sweeps = 2000;
    for sweep in 0..sweeps {
        rate_sum += update_rates(1.0, 1.0, &stats, &mut rng)?.matrix();
        let drift = drift_sufficient_stats(&z, &y, &grid, 2)?;
        for k in 0..2 {
            let gamma = update_drift(&drift_prior, &modes[k], &drift, k, &mut rng)?;
            modes[k] = modes[k].with_gamma(&gamma);
        }
        let scatter = mala::residual_scatter(&z, &y, &modes, &grid)?;
        for k in 0..2 {
            let target = mala::DispersionTarget::new(&scatter[k].0, scatter[k].1, &d_prior);
            let out = mala::mala_update_dispersion(modes[k].d(), &target, xi[k].xi(), &mut rng)?;
            if sweep < sweeps / 2 {
                xi[k].update(out.accept_prob);
            }
            modes[k] =
                ModeDynamics::from_covariance(modes[k].a.clone(), modes[k].b.clone(), out.d)?;
            sums[k][0] += modes[k].a[(0, 0)];
            sums[k][1] += modes[k].b[0];
            sums[k][2] += modes[k].d()[(0, 0)];
        }
    }
    let n = sweeps as f64;
    for k in 0..2 {
        let (a, b, d) = truth[k];
        println!(
            "mode {}: A {:.3} (true {a}), b {:.3} (true {b}), D {:.3} (true {d}), final xi {:.2e}",
            k + 1,
            sums[k][0] / n,
            sums[k][1] / n,
            sums[k][2] / n,
            xi[k].xi()
        );
    }
    println!(
        "posterior mean rates: 1->2 {:.3} (true 0.5), 2->1 {:.3} (true 1)",
        rate_sum[(0, 1)] / n,
        rate_sum[(1, 0)] / n
    );
    Ok(())
}
