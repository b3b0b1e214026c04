//! Conditional sampling of the mode path given the state path.
//!
//! A forward Kushner-Stratonovich filter yields `p_f(z, t)`; the smoothing
//! process is then a jump process running backward from `T` with rates
//! reweighted by the filter, sampled exactly by thinning.

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{check_simplex, DiffusionPath, MjpPath, ModeDynamics, RateMatrix, TimeGrid};
use crate::rng::SimRng;

/// Floor on the filter probability in the backward-rate denominator.
pub const PROB_FLOOR: f64 = 1e-12;
/// Lookahead window of the thinning bound, in grid cells.
pub const THINNING_WINDOW: usize = 64;
pub const THINNING_SAFETY: f64 = 1.2;
/// Expected dominating-rate events per window before it is cut short.
pub const WINDOW_BUDGET: f64 = 8.0;

/// Filter probabilities `p_f(·, t_l)` at every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterTrajectory {
    probs: Vec<Vec<f64>>,
}

impl FilterTrajectory {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let k = probs.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(Error::Dimension("empty filter trajectory".into()));
        }
        for p in &probs {
            if p.len() != k {
                return Err(Error::Dimension("ragged filter trajectory".into()));
            }
            check_simplex(p, "filter probabilities")?;
        }
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn num_modes(&self) -> usize {
        self.probs[0].len()
    }

    pub fn at(&self, l: usize) -> &[f64] {
        &self.probs[l]
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }
}

/// Euler scheme for the Kushner-Stratonovich equation driven by the
/// increments of `y`, with clamp-and-renormalize after every step.
pub fn run_ks_filter(
    y: &DiffusionPath,
    modes: &[ModeDynamics],
    rates: &RateMatrix,
    pi: &[f64],
    grid: &TimeGrid,
) -> Result<FilterTrajectory> {
    let k = modes.len();
    if rates.num_modes() != k || pi.len() != k {
        return Err(Error::Dimension(
            "filter needs K modes, K x K rates and K initial weights".into(),
        ));
    }
    y.check_grid(grid)?;
    check_simplex(pi, "pi")?;
    let h = grid.step();
    let lambda_t = rates.matrix().transpose();

    let mut probs = Vec::with_capacity(grid.len());
    probs.push(pi.to_vec());
    let mut drifts: Vec<Vector> = Vec::with_capacity(k);
    for l in 0..grid.steps() {
        let p = &probs[l];
        let yl = y.at(l);
        drifts.clear();
        drifts.extend(modes.iter().map(|m| m.drift(yl)));
        let mut fbar = Vector::zeros(yl.len());
        for (f, &w) in drifts.iter().zip(p) {
            fbar.axpy(w, f, 1.0);
        }
        let innovation = y.at(l + 1) - yl - &fbar * h;
        let pv = Vector::from_column_slice(p);
        let prior = &lambda_t * &pv;
        let mut next: Vec<f64> = (0..k)
            .map(|z| {
                let gain = (&drifts[z] - &fbar).dot(&(modes[z].d_inv() * &innovation));
                (p[z] + prior[z] * h + p[z] * gain).max(0.0)
            })
            .collect();
        let total: f64 = next.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegenerateFilter { index: l + 1 });
        }
        next.iter_mut().for_each(|v| *v /= total);
        probs.push(next);
    }
    Ok(FilterTrajectory { probs })
}

/// Backward rate matrix `R` with `R[cur][prev]` the rate of stepping from
/// `cur` at time `t` to `prev` just before `t`:
/// `R[cur][prev] = Λ(prev, cur) p_f(prev) / max(p_f(cur), ε)`.
pub fn backward_rates(p_f: &[f64], rates: &RateMatrix) -> Mat {
    let k = p_f.len();
    let mut r = Mat::zeros(k, k);
    for cur in 0..k {
        let denom = p_f[cur].max(PROB_FLOOR);
        let mut exit = 0.0;
        for prev in 0..k {
            if prev != cur {
                let v = rates.rate(prev, cur) * p_f[prev] / denom;
                r[(cur, prev)] = v;
                exit += v;
            }
        }
        r[(cur, cur)] = -exit;
    }
    r
}

fn backward_exit_rate(p_f: &[f64], rates: &RateMatrix, cur: usize) -> f64 {
    let denom = p_f[cur].max(PROB_FLOOR);
    (0..p_f.len())
        .filter(|&prev| prev != cur)
        .map(|prev| rates.rate(prev, cur) * p_f[prev])
        .sum::<f64>()
        / denom
}

/// Filter values that set the backward rates inside cell `(t_c, t_{c+1}]`:
/// those at the cell's end, where backward simulation enters it.
fn cell_filter(ft: &FilterTrajectory, c: usize) -> &[f64] {
    ft.at(c + 1)
}

/// Cells `[low, top)` of the next thinning window and the largest backward
/// exit rate of mode `z` over them. The window spans up to
/// `THINNING_WINDOW` cells but stops early once the dominating rate would
/// call for more than `WINDOW_BUDGET` expected proposals, so that a rate spike
/// (a near-zero filter probability) does not stall the cells before it.
fn thinning_window(
    ft: &FilterTrajectory,
    rates: &RateMatrix,
    z: usize,
    top: usize,
    h: f64,
) -> (usize, f64) {
    let mut max_rate: f64 = 0.0;
    let mut low = top;
    while low > 0 && top - low < THINNING_WINDOW {
        let r = backward_exit_rate(cell_filter(ft, low - 1), rates, z);
        let candidate = max_rate.max(r);
        if low < top && candidate * (top - low + 1) as f64 * h > WINDOW_BUDGET {
            break;
        }
        max_rate = candidate;
        low -= 1;
    }
    (low, max_rate)
}

/// Draws a mode path from the smoothing law given the filter trajectory.
pub fn sample_conditional_switching(
    ft: &FilterTrajectory,
    rates: &RateMatrix,
    grid: &TimeGrid,
    rng: &mut SimRng,
) -> Result<MjpPath> {
    if ft.len() != grid.len() {
        return Err(Error::Dimension(
            "filter trajectory and grid lengths differ".into(),
        ));
    }
    if ft.num_modes() != rates.num_modes() {
        return Err(Error::Dimension(
            "filter and rate matrix disagree on K".into(),
        ));
    }
    let horizon = grid.horizon();
    let mut z = rng.categorical(ft.at(grid.steps()));
    // (time, state after the jump in forward time), collected in reverse order
    let mut rev_jumps: Vec<(f64, usize)> = Vec::new();
    let mut t = horizon;
    let mut top_cell = grid.steps();
    while top_cell > 0 {
        let (low_cell, max_rate) = thinning_window(ft, rates, z, top_cell, grid.step());
        let window_floor = grid.time(low_cell);
        let bound = THINNING_SAFETY * max_rate;
        let mut jumped = false;
        if bound > 0.0 {
            loop {
                t -= rng.exponential(bound);
                if t <= window_floor {
                    break;
                }
                let c = grid.cell_of(t).min(top_cell - 1);
                let p = cell_filter(ft, c);
                let exit = backward_exit_rate(p, rates, z);
                if exit > bound {
                    return Err(Error::ThinningBound {
                        rate: exit,
                        bound,
                        time: t,
                    });
                }
                if rng.uniform() * bound < exit {
                    let r = backward_rates(p, rates);
                    let weights: Vec<f64> = (0..r.ncols())
                        .map(|j| if j == z { 0.0 } else { r[(z, j)] })
                        .collect();
                    let prev = rng.categorical(&weights);
                    rev_jumps.push((t, z));
                    z = prev;
                    // restart the window from the jump time with the new state's bound
                    top_cell = c + 1;
                    jumped = true;
                    break;
                }
            }
        }
        if !jumped {
            t = window_floor;
            top_cell = low_cell;
        }
    }
    rev_jumps.reverse();
    // jumps sampled exactly on t = 0 have probability zero; guard anyway
    rev_jumps.retain(|&(s, _)| s > 0.0 && s <= horizon);
    MjpPath::new(z, rev_jumps, horizon)
}
