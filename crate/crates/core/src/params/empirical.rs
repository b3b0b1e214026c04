//! Data-driven hyperparameters and starting values from a k-means clustering
//! of the observations.

use log::{info, warn};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{
    InitialLaw, IwPrior, MatrixNormalPrior, MjpPath, ModeDynamics, ModelParams, NiwPrior,
    ObservationModel, ObservationSet, PriorHyperparams, RateMatrix,
};
use crate::rng::SimRng;

pub const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITER: usize = 300;
/// Initial MALA step; tuned during burn-in.
pub const DEFAULT_MALA_STEP: f64 = 1e-3;
/// Smallest starting rate, keeps the jump process from freezing.
const RATE_FLOOR: f64 = 1e-2;

#[derive(Clone, Debug)]
pub struct KMeans {
    pub centers: Vec<Vector>,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm_squared()
}

fn lloyd(points: &[Vector], mut centers: Vec<Vector>) -> KMeans {
    let k = centers.len();
    let mut labels = vec![0; points.len()];
    for iter in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (lab, p) in labels.iter_mut().zip(points) {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
                .unwrap();
            if *lab != best || iter == 0 {
                changed |= *lab != best;
                *lab = best;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vector> = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            if !members.is_empty() {
                let mut m = Vector::zeros(center.len());
                for p in &members {
                    m += *p;
                }
                *center = m / members.len() as f64;
            }
        }
        if !changed && iter > 0 {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    KMeans {
        centers,
        labels,
        inertia,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the best of `restarts` runs by
/// within-cluster sum of squares.
pub fn kmeans(points: &[Vector], k: usize, restarts: usize, rng: &mut SimRng) -> Result<KMeans> {
    if k == 0 || points.len() < k {
        return Err(Error::InvalidObservations(format!(
            "k-means needs at least {k} points, got {}",
            points.len()
        )));
    }
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let mut centers =
            vec![points[(rng.uniform() * points.len() as f64) as usize % points.len()].clone()];
        while centers.len() < k {
            let w: Vec<f64> = points
                .iter()
                .map(|p| {
                    centers
                        .iter()
                        .map(|c| sq_dist(p, c))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let idx = if w.iter().sum::<f64>() > 0.0 {
                rng.categorical(&w)
            } else {
                (rng.uniform() * points.len() as f64) as usize % points.len()
            };
            centers.push(points[idx].clone());
        }
        let run = lloyd(points, centers);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    // order clusters by their first coordinate so labels are reproducible
    let mut run = best.unwrap();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| run.centers[a][0].total_cmp(&run.centers[b][0]));
    let mut relabel = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    run.centers = order.iter().map(|&o| run.centers[o].clone()).collect();
    run.labels.iter_mut().for_each(|l| *l = relabel[*l]);
    Ok(run)
}

fn covariance(points: &[&Vector], mean: &Vector) -> Mat {
    let n = mean.len();
    let mut c = Mat::zeros(n, n);
    for p in points {
        let d = *p - mean;
        c.ger(1.0, &d, &d, 1.0);
    }
    c / (points.len() as f64 - 1.0).max(1.0)
}

fn is_stable(a: &Mat) -> bool {
    a.iter().all(|v| v.is_finite()) && a.complex_eigenvalues().iter().all(|e| e.re < 0.0)
}

/// Everything needed to start the sampler from data alone.
#[derive(Clone, Debug)]
pub struct EmpiricalInit {
    pub hyper: PriorHyperparams,
    pub z: MjpPath,
    pub params: ModelParams,
    pub clusters: KMeans,
}

/// Hyperparameters, starting mode path and starting parameters from a
/// k-means clustering of the observations into `k` modes.
pub fn empirical_hyperparams(
    obs: &ObservationSet,
    k: usize,
    horizon: f64,
    rng: &mut SimRng,
) -> Result<EmpiricalInit> {
    let n = obs
        .dim()
        .ok_or_else(|| Error::InvalidObservations("no observations".into()))?;
    if obs.len() < k.max(2) {
        return Err(Error::InvalidObservations(format!(
            "need at least {} observations for {k} modes",
            k.max(2)
        )));
    }
    let xs = obs.values();
    let ts = obs.times();
    let km = kmeans(xs, k, KMEANS_RESTARTS, rng)?;
    let all: Vec<&Vector> = xs.iter().collect();
    let global_mean = all.iter().fold(Vector::zeros(n), |acc, p| acc + *p) / all.len() as f64;
    let global_cov = covariance(&all, &global_mean);
    let floor = Mat::identity(n, n) * (1e-6 * global_cov.trace() / n as f64).max(1e-12);

    let mut covs = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<&Vector> = xs
            .iter()
            .zip(&km.labels)
            .filter(|(_, &l)| l == c)
            .map(|(p, _)| p)
            .collect();
        let cov = if members.len() < 2 {
            warn!(
                "cluster {} has {} member(s); using the global covariance",
                c + 1,
                members.len()
            );
            global_cov.clone()
        } else {
            covariance(&members, &km.centers[c])
        };
        covs.push(&cov + &floor);
    }
    let mean_cov = covs.iter().fold(Mat::zeros(n, n), |a, c| a + c) / k as f64;
    let eta = km.centers.iter().fold(Vector::zeros(n), |a, c| a + c) / k as f64;

    // mode path held piecewise constant between observation times
    let labels = &km.labels;
    let mut jumps = Vec::new();
    let mut trans = Mat::zeros(k, k);
    for i in 1..labels.len() {
        if labels[i] != labels[i - 1] {
            trans[(labels[i - 1], labels[i])] += 1.0;
            if ts[i] > 0.0 {
                jumps.push((ts[i], labels[i]));
            }
        }
    }
    let z = MjpPath::new(labels[0], jumps, horizon)?;
    let n_trans = trans.sum();
    let shape = if n_trans < 1.0 {
        info!("no transitions in the k-means path; Gamma shape floored to 1");
        1.0
    } else {
        n_trans
    };

    let sojourn = z.sojourn_totals(k);
    let mut rate_off = Mat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let counts = trans[(i, j)];
                rate_off[(i, j)] = if sojourn[i] > 0.0 {
                    counts / sojourn[i]
                } else {
                    0.0
                }
                .max(RATE_FLOOR);
            }
        }
    }
    let rates = if k == 1 {
        RateMatrix::new(Mat::zeros(1, 1))?
    } else {
        RateMatrix::from_off_diagonal(&rate_off)?
    };

    // drift: ridge regression of observation finite differences on the
    // centered states of each cluster
    let mut drift = Vec::with_capacity(k);
    let mut modes = Vec::with_capacity(k);
    for c in 0..k {
        let mut sxx = Mat::identity(n, n) * 1e-8 * (1.0 + covs[c].trace());
        let mut sdx = Mat::zeros(n, n);
        for i in 0..xs.len() - 1 {
            if labels[i] != c {
                continue;
            }
            let dt = ts[i + 1] - ts[i];
            let d = (&xs[i + 1] - &xs[i]) / dt;
            let x = &xs[i] - &km.centers[c];
            sxx.ger(1.0, &x, &x, 1.0);
            sdx.ger(1.0, &d, &x, 1.0);
        }
        let mut a_hat = match linalg::spd_inverse(&sxx, "regression Gram matrix") {
            Ok(inv) => sdx * inv,
            Err(_) => Mat::identity(n, n) * f64::NAN,
        };
        if !is_stable(&a_hat) {
            info!("mode {}: drift estimate unstable, using A = -I", c + 1);
            a_hat = -Mat::identity(n, n);
        }
        let b_hat = -(&a_hat * &km.centers[c]);
        let mut mean = Mat::zeros(n, n + 1);
        mean.view_mut((0, 0), (n, n)).copy_from(&a_hat);
        mean.set_column(n, &b_hat);
        drift.push(MatrixNormalPrior {
            mean,
            precision: Mat::identity(n + 1, n + 1),
        });
        modes.push(ModeDynamics::from_covariance(a_hat, b_hat, &covs[c] * 0.1)?);
    }

    let mut alpha = vec![1.0; k];
    alpha[labels[0]] += 1.0;
    let dof = n as f64 + 2.0;
    let hyper = PriorHyperparams {
        alpha: alpha.clone(),
        initial_state: NiwPrior {
            eta: eta.clone(),
            lambda: 1.0,
            psi: &mean_cov * 0.1,
            kappa: dof,
        },
        rate_shape: shape,
        rate_rate: 1.0,
        drift,
        dispersion: covs
            .iter()
            .map(|c| IwPrior {
                scale: c * 0.1,
                dof,
            })
            .collect(),
        obs_cov: IwPrior {
            scale: &mean_cov * 0.5,
            dof,
        },
        mala_step: DEFAULT_MALA_STEP,
    };
    let total: f64 = alpha.iter().sum();
    let params = ModelParams {
        rates,
        modes,
        init: InitialLaw {
            pi: alpha.iter().map(|a| a / total).collect(),
            mu0: eta,
            sigma0: &mean_cov * 0.1,
        },
        obs: ObservationModel {
            sigma_x: &mean_cov * 0.5,
        },
    };
    Ok(EmpiricalInit {
        hyper,
        z,
        params,
        clusters: km,
    })
}
