//! Domain types of the switching linear model: the time grid, the jump
//! process parameters, per-mode affine dynamics, initial laws, paths and
//! observations, plus the conjugate prior hyperparameters.
//!
//! Modes are 0-based everywhere in memory. File formats add one.

use log::info;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Tolerance on rate-matrix row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance on probability-vector sums.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Uniform grid `t_l = l * h`, `l = 0..=L`, with `L * h == T`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    step: f64,
    steps: usize,
}

impl TimeGrid {
    /// Builds a grid on `[0, horizon]`. The horizon is snapped to the nearest
    /// multiple of `step`.
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidStep(format!(
                "step must be positive, got {step}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if step > horizon {
            return Err(Error::InvalidStep(format!(
                "step {step} exceeds horizon {horizon}"
            )));
        }
        let steps = (horizon / step).round() as usize;
        if steps < 2 {
            return Err(Error::InvalidGrid(format!(
                "grid needs at least two steps, got {steps}"
            )));
        }
        let snapped = steps as f64 * step;
        if (snapped - horizon).abs() > 1e-12 * horizon {
            info!("horizon {horizon} snapped to {snapped} (h = {step})");
        }
        Ok(Self { step, steps })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of steps `L`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points `L + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.step
    }

    pub fn time(&self, l: usize) -> f64 {
        l as f64 * self.step
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|l| self.time(l))
    }

    /// Index of the grid cell `[t_l, t_{l+1})` containing `t` (clamped to the
    /// last cell at `t = T`).
    pub fn cell_of(&self, t: f64) -> usize {
        let l = (t / self.step).floor();
        if l <= 0.0 {
            0
        } else {
            (l as usize).min(self.steps - 1)
        }
    }

    /// Nearest grid index if `t` lies within `h / 2` of it and inside `[0, T]`.
    pub fn snap(&self, t: f64) -> Result<usize> {
        let l = (t / self.step).round();
        let tol = 0.5 * self.step * (1.0 + 1e-9);
        if !t.is_finite() || l < 0.0 || l > self.steps as f64 || (t - l * self.step).abs() > tol {
            return Err(Error::OffGrid {
                time: t,
                step: self.step,
            });
        }
        Ok(l as usize)
    }
}

/// Rate matrix of the jump process; rows sum to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct RateMatrix(Mat);

impl RateMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        let k = m.nrows();
        if k == 0 || m.ncols() != k {
            return Err(Error::Dimension(
                "rate matrix must be square and non-empty".into(),
            ));
        }
        for i in 0..k {
            let mut sum = 0.0;
            let mut scale: f64 = 1.0;
            for j in 0..k {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(Error::Dimension(format!("non-finite rate at ({i}, {j})")));
                }
                if i != j && v < 0.0 {
                    return Err(Error::NegativeRate {
                        from: i,
                        to: j,
                        value: v,
                    });
                }
                sum += v;
                scale = scale.max(v.abs());
            }
            if sum.abs() > ROW_SUM_TOL * scale {
                return Err(Error::RateRowSum { row: i, sum });
            }
        }
        Ok(Self(m))
    }

    /// Builds the matrix from its off-diagonal entries; the diagonal of `m`
    /// is ignored and replaced by the negative exit rates.
    pub fn from_off_diagonal(m: &Mat) -> Result<Self> {
        let k = m.nrows();
        let mut out = m.clone();
        for i in 0..k {
            out[(i, i)] = 0.0;
            let exit: f64 = (0..k).filter(|&j| j != i).map(|j| out[(i, j)]).sum();
            out[(i, i)] = -exit;
        }
        Self::new(out)
    }

    pub fn num_modes(&self) -> usize {
        self.0.nrows()
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.0[(from, to)]
    }

    pub fn exit_rate(&self, z: usize) -> f64 {
        -self.0[(z, z)]
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }
}

/// Affine drift `A y + b` and constant dispersion `Q` of a single mode.
///
/// `D = Q Qᵀ` is stored with its Cholesky factor and inverse, recomputed
/// whenever the mode is rebuilt.
#[derive(Clone, Debug)]
pub struct ModeDynamics {
    pub a: Mat,
    pub b: Vector,
    q: Mat,
    d: Mat,
    d_chol: Mat,
    d_inv: Mat,
    d_log_det: f64,
}

impl ModeDynamics {
    pub fn new(a: Mat, b: Vector, q: Mat) -> Result<Self> {
        let n = b.len();
        if a.shape() != (n, n) || q.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "mode dynamics: A is {:?}, b has {n} entries, Q is {:?}",
                a.shape(),
                q.shape()
            )));
        }
        let d = linalg::symmetrize(&(&q * q.transpose()));
        Self::assemble(a, b, q, d)
    }

    /// Builds the mode from the noise covariance `D`; `Q` is its lower
    /// Cholesky factor.
    pub fn from_covariance(a: Mat, b: Vector, d: Mat) -> Result<Self> {
        let n = b.len();
        if a.shape() != (n, n) || d.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "mode dynamics: A is {:?}, b has {n} entries, D is {:?}",
                a.shape(),
                d.shape()
            )));
        }
        let d = linalg::symmetrize(&d);
        let q = linalg::spd_cholesky(&d, "D")?.l();
        Self::assemble(a, b, q, d)
    }

    fn assemble(a: Mat, b: Vector, q: Mat, d: Mat) -> Result<Self> {
        let n = b.len();
        if a.iter()
            .chain(b.iter())
            .chain(q.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Dimension("non-finite mode parameter".into()));
        }
        let chol = linalg::spd_cholesky(&d, "D")?;
        let floor = linalg::JITTER_REL * d.trace() / n as f64;
        if linalg::min_eigenvalue(&d) <= floor {
            return Err(Error::not_spd("D"));
        }
        let d_log_det = linalg::log_det_from_chol(&chol);
        let d_chol = chol.l();
        let d_inv = linalg::symmetrize(&chol.inverse());
        Ok(Self {
            a,
            b,
            q,
            d,
            d_chol,
            d_inv,
            d_log_det,
        })
    }

    /// Bypasses validation; lets tests build degenerate (zero-noise) modes.
    #[cfg(test)]
    pub(crate) fn unchecked(a: Mat, b: Vector, q: Mat) -> Self {
        let n = b.len();
        let d = &q * q.transpose();
        Self {
            a,
            b,
            q,
            d,
            d_chol: Mat::zeros(n, n),
            d_inv: Mat::zeros(n, n),
            d_log_det: f64::NEG_INFINITY,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn d(&self) -> &Mat {
        &self.d
    }

    /// Lower Cholesky factor of `D`.
    pub fn d_chol(&self) -> &Mat {
        &self.d_chol
    }

    pub fn d_inv(&self) -> &Mat {
        &self.d_inv
    }

    pub fn d_log_det(&self) -> f64 {
        self.d_log_det
    }

    pub fn drift(&self, y: &Vector) -> Vector {
        &self.a * y + &self.b
    }

    /// `[A, b]` as an `n x (n + 1)` block.
    pub fn gamma(&self) -> Mat {
        let n = self.dim();
        let mut g = Mat::zeros(n, n + 1);
        g.view_mut((0, 0), (n, n)).copy_from(&self.a);
        g.set_column(n, &self.b);
        g
    }

    pub fn with_gamma(&self, gamma: &Mat) -> Self {
        let n = self.dim();
        let mut out = self.clone();
        out.a = gamma.view((0, 0), (n, n)).into_owned();
        out.b = gamma.column(n).into_owned();
        out
    }
}

/// Initial mode probabilities and Gaussian initial state law.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialLaw {
    pub pi: Vec<f64>,
    pub mu0: Vector,
    pub sigma0: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationModel {
    pub sigma_x: Mat,
}

/// All model parameters.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub rates: RateMatrix,
    pub modes: Vec<ModeDynamics>,
    pub init: InitialLaw,
    pub obs: ObservationModel,
}

impl ModelParams {
    pub fn num_modes(&self) -> usize {
        self.rates.num_modes()
    }

    pub fn dim(&self) -> usize {
        self.init.mu0.len()
    }
}

pub fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Simplex {
            what: what.into(),
            detail: "negative or non-finite entry".into(),
        });
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Simplex {
            what: what.into(),
            detail: format!("entries sum to {sum}"),
        });
    }
    Ok(())
}

/// Checks every invariant of `p`, reporting the first violation.
pub fn validate_params(p: &ModelParams) -> Result<()> {
    // RateMatrix re-validated in case it was built from a raw matrix elsewhere.
    RateMatrix::new(p.rates.matrix().clone())?;
    let k = p.num_modes();
    let n = p.dim();
    if p.modes.len() != k {
        return Err(Error::Dimension(format!(
            "{} mode blocks for {k} modes",
            p.modes.len()
        )));
    }
    for (z, m) in p.modes.iter().enumerate() {
        if m.dim() != n || m.a.shape() != (n, n) || m.q().shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "mode {} has wrong state dimension",
                z + 1
            )));
        }
    }
    if p.init.pi.len() != k {
        return Err(Error::Dimension(format!(
            "pi has {} entries, K = {k}",
            p.init.pi.len()
        )));
    }
    check_simplex(&p.init.pi, "pi")?;
    if p.init.sigma0.shape() != (n, n) {
        return Err(Error::Dimension("Sigma0 shape".into()));
    }
    if p.init.mu0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("non-finite mu0".into()));
    }
    linalg::spd_cholesky(&p.init.sigma0, "Sigma0")?;
    if p.obs.sigma_x.shape() != (n, n) {
        return Err(Error::Dimension("Sigma_x shape".into()));
    }
    linalg::spd_cholesky(&p.obs.sigma_x, "Sigma_x")?;
    Ok(())
}

/// Piecewise-constant mode trajectory on `[0, T]`, right-continuous: the
/// state after a jump holds from the jump time on.
#[derive(Clone, Debug, PartialEq)]
pub struct MjpPath {
    initial: usize,
    jumps: Vec<(f64, usize)>,
    horizon: f64,
}

impl MjpPath {
    pub fn new(initial: usize, jumps: Vec<(f64, usize)>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidPath(format!("horizon {horizon}")));
        }
        let mut prev_t = 0.0;
        let mut prev_z = initial;
        for &(t, z) in &jumps {
            if !(t > prev_t && t <= horizon) {
                return Err(Error::InvalidPath(format!(
                    "jump time {t} not increasing within (0, {horizon}]"
                )));
            }
            if z == prev_z {
                return Err(Error::InvalidPath(format!(
                    "self-transition in mode {} at {t}",
                    z + 1
                )));
            }
            prev_t = t;
            prev_z = z;
        }
        Ok(Self {
            initial,
            jumps,
            horizon,
        })
    }

    pub fn constant(mode: usize, horizon: f64) -> Self {
        Self {
            initial: mode,
            jumps: Vec::new(),
            horizon,
        }
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn jumps(&self) -> &[(f64, usize)] {
        &self.jumps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_jumps(&self) -> usize {
        self.jumps.len()
    }

    pub fn final_state(&self) -> usize {
        self.jumps.last().map_or(self.initial, |&(_, z)| z)
    }

    /// State sequence `z_0, ..., z_J`.
    pub fn states(&self) -> Vec<usize> {
        std::iter::once(self.initial)
            .chain(self.jumps.iter().map(|&(_, z)| z))
            .collect()
    }

    pub fn state_at(&self, t: f64) -> usize {
        let idx = self.jumps.partition_point(|&(j, _)| j <= t);
        if idx == 0 {
            self.initial
        } else {
            self.jumps[idx - 1].1
        }
    }

    /// `(start, end, mode)` for each constant segment.
    pub fn segments(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.jumps.len() + 1);
        let mut start = 0.0;
        let mut z = self.initial;
        for &(t, next) in &self.jumps {
            out.push((start, t, z));
            start = t;
            z = next;
        }
        out.push((start, self.horizon, z));
        out
    }

    /// Mode at every grid point `t_0, ..., t_L`.
    pub fn on_grid(&self, grid: &TimeGrid) -> Vec<usize> {
        let mut out = Vec::with_capacity(grid.len());
        let mut next = 0;
        let mut z = self.initial;
        for l in 0..grid.len() {
            let t = grid.time(l);
            while next < self.jumps.len() && self.jumps[next].0 <= t {
                z = self.jumps[next].1;
                next += 1;
            }
            out.push(z);
        }
        out
    }

    /// Cumulative sojourn time per mode.
    pub fn sojourn_totals(&self, k: usize) -> Vec<f64> {
        let mut totals = vec![0.0; k];
        for (s, e, z) in self.segments() {
            totals[z] += e - s;
        }
        totals
    }
}

/// Continuous-state trajectory at every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionPath {
    values: Vec<Vector>,
}

impl DiffusionPath {
    pub fn new(values: Vec<Vector>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidPath("empty diffusion path".into()));
        }
        let n = values[0].len();
        for (l, v) in values.iter().enumerate() {
            if v.len() != n {
                return Err(Error::Dimension(format!(
                    "path entry {l} has dimension {}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: "diffusion path",
                    index: l,
                });
            }
        }
        Ok(Self { values })
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "path has {} points, grid has {}",
                self.values.len(),
                grid.len()
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn at(&self, l: usize) -> &Vector {
        &self.values[l]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }
}

/// Observations `(t_i, x_i)` with strictly increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    times: Vec<f64>,
    values: Vec<Vector>,
}

impl ObservationSet {
    pub fn new(times: Vec<f64>, values: Vec<Vector>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidObservations(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if let Some(first) = values.first() {
            let n = first.len();
            if values.iter().any(|v| v.len() != n) {
                return Err(Error::InvalidObservations(
                    "mixed observation dimensions".into(),
                ));
            }
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidObservations(format!(
                    "times not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidObservations(
                "negative or non-finite time".into(),
            ));
        }
        if values.iter().flat_map(|v| v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidObservations(
                "non-finite observation value".into(),
            ));
        }
        Ok(Self { times, values })
    }

    pub fn empty() -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn dim(&self) -> Option<usize> {
        self.values.first().map(|v| v.len())
    }

    /// Grid index of each observation; two observations in one grid point
    /// are rejected.
    pub fn grid_indices(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        let idx = self
            .times
            .iter()
            .map(|&t| grid.snap(t))
            .collect::<Result<Vec<_>>>()?;
        for w in idx.windows(2) {
            if w[1] == w[0] {
                return Err(Error::InvalidObservations(format!(
                    "two observations snap to grid point {}",
                    w[0]
                )));
            }
        }
        Ok(idx)
    }
}

/// Normal-inverse-Wishart prior on `(mu0, Sigma0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NiwPrior {
    pub eta: Vector,
    pub lambda: f64,
    pub psi: Mat,
    pub kappa: f64,
}

/// Inverse-Wishart prior, density `∝ |S|^{-(dof+n+1)/2} exp(-tr(scale S⁻¹)/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IwPrior {
    pub scale: Mat,
    pub dof: f64,
}

/// Matrix-normal prior on `[A, b]` with mean `mean` and column precision
/// `precision`; the row covariance is the mode's `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixNormalPrior {
    pub mean: Mat,
    pub precision: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorHyperparams {
    /// Dirichlet concentration on the initial mode.
    pub alpha: Vec<f64>,
    pub initial_state: NiwPrior,
    /// Gamma(shape, rate) prior on every off-diagonal rate.
    pub rate_shape: f64,
    pub rate_rate: f64,
    pub drift: Vec<MatrixNormalPrior>,
    pub dispersion: Vec<IwPrior>,
    pub obs_cov: IwPrior,
    /// Initial MALA step size.
    pub mala_step: f64,
}

impl PriorHyperparams {
    pub fn validate(&self, k: usize, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyper(m));
        if self.alpha.len() != k || self.alpha.iter().any(|&a| !(a > 0.0)) {
            return bad("alpha must have K positive entries".into());
        }
        let niw = &self.initial_state;
        if niw.eta.len() != n || niw.psi.shape() != (n, n) {
            return bad("NIW dimensions".into());
        }
        if !(niw.lambda > 0.0) || !(niw.kappa > n as f64 + 1.0) {
            return bad(format!(
                "NIW requires lambda > 0 and kappa > n + 1 = {}",
                n + 1
            ));
        }
        linalg::spd_cholesky(&niw.psi, "Psi")?;
        if !(self.rate_shape > 0.0 && self.rate_rate > 0.0) {
            return bad("Gamma shape and rate must be positive".into());
        }
        if self.drift.len() != k || self.dispersion.len() != k {
            return bad("per-mode priors must have K entries".into());
        }
        for mn in &self.drift {
            if mn.mean.shape() != (n, n + 1) || mn.precision.shape() != (n + 1, n + 1) {
                return bad("matrix-normal prior dimensions".into());
            }
            linalg::spd_cholesky(&mn.precision, "K_z")?;
        }
        for iw in self.dispersion.iter().chain(std::iter::once(&self.obs_cov)) {
            if iw.scale.shape() != (n, n) || !(iw.dof > n as f64 + 1.0) {
                return bad(format!(
                    "inverse-Wishart needs n x n scale and dof > {}",
                    n + 1
                ));
            }
            linalg::spd_cholesky(&iw.scale, "inverse-Wishart scale")?;
        }
        if !(self.mala_step > 0.0) {
            return bad("MALA step must be positive".into());
        }
        Ok(())
    }
}
