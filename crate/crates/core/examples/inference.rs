//! Full blocked Gibbs inference on simulated data: empirical start, posterior
//! mode probabilities, state bands and convergence diagnostics.

use ssde_gibbs::params::empirical_hyperparams;
use ssde_gibbs::sampler::{empirical_marginals, run_sampler, GibbsState, SamplerConfig};
use ssde_gibbs::{
    sim, InitialLaw, Mat, ModeDynamics, ModelParams, ObservationModel, RateMatrix, SimRng,
    TimeGrid, Vector,
};

fn main() -> ssde_gibbs::Result<()> {
    let truth = ModelParams {
        rates: RateMatrix::new(Mat::from_row_slice(2, 2, &[-0.3, 0.3, 0.3, -0.3]))?,
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
    let mut rng = SimRng::seed_from(2024);
    let (z, _, obs) = sim::simulate_model(
        &truth,
        &grid,
        &sim::evenly_spaced_times(&grid, 100),
        &mut rng,
    )?;

    let init = empirical_hyperparams(&obs, 2, grid.horizon(), &mut rng)?;
    let state = GibbsState::new(init.z, init.params, &obs, &grid)?;
    let config = SamplerConfig {
        thin: 2,
        y_stride: 10,
        ..SamplerConfig::new(5000)
    };
    let run = run_sampler(state, &obs, &init.hyper, &grid, &config, &mut rng)?;
    let marginals = empirical_marginals(&run.store)?;

    let correct = marginals
        .z_probs
        .iter()
        .zip(grid.times())
        .filter(|(p, t)| {
            let map = if p[0] >= p[1] { 0 } else { 1 };
            map == z.state_at(*t)
        })
        .count();
    let accuracy = correct as f64 / grid.len() as f64;
    println!("retained draws: {}", run.diagnostics.retained);
    println!(
        "pointwise mode accuracy (labels as sampled): {:.1}%",
        100.0 * accuracy.max(1.0 - accuracy)
    );
    for (t, (m, (lo, hi))) in marginals
        .y_times
        .iter()
        .zip(
            marginals
                .y_mean
                .iter()
                .zip(marginals.y_q05.iter().zip(&marginals.y_q95)),
        )
        .step_by(20)
    {
        println!(
            "t = {t:5.1}: y mean {:7.3}, 90% band [{:7.3}, {:7.3}]",
            m[0], lo[0], hi[0]
        );
    }
    let draws = &run.store.draws;
    for k in 0..2 {
        let mean = |f: &dyn Fn(&ModeDynamics) -> f64| {
            draws.iter().map(|d| f(&d.params.modes[k])).sum::<f64>() / draws.len() as f64
        };
        println!(
            "mode {} posterior means: A {:.3}, b {:.3}, D {:.3}",
            k + 1,
            mean(&|m| m.a[(0, 0)]),
            mean(&|m| m.b[0]),
            mean(&|m| m.d()[(0, 0)])
        );
    }
    let mut ess: Vec<_> = run.diagnostics.ess.iter().collect();
    ess.sort_by(|a, b| a.1.partial_cmp(b.1).unwrap());
    for (name, value) in ess.iter().take(5) {
        println!("lowest ESS {name}: {value:.1}");
    }
    println!("MALA acceptance: {:?}", run.diagnostics.mala_acceptance);
    println!(
        "mean seconds per sweep: {:.4}",
        run.diagnostics.mean_sweep_seconds
    );
    Ok(())
}
