//! JSON configuration documents and CSV/JSONL artifacts.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mat_from_rows, mat_to_rows, Mat, Vector};
use crate::model::{
    validate_params, DiffusionPath, InitialLaw, IwPrior, MatrixNormalPrior, MjpPath, ModeDynamics,
    ModelParams, NiwPrior, ObservationModel, ObservationSet, PriorHyperparams, RateMatrix,
    TimeGrid,
};
use crate::sampler::{Draw, Marginals, SampleStore};

pub type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeSpec {
    #[serde(rename = "A")]
    pub a: Rows,
    pub b: Vec<f64>,
    /// Either the dispersion `Q` or the noise covariance `D` must be given.
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Rows>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InitSpec {
    pub pi: Vec<f64>,
    pub mu0: Vec<f64>,
    #[serde(rename = "Sigma0")]
    pub sigma0: Rows,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObsSpec {
    #[serde(rename = "Sigma_x")]
    pub sigma_x: Rows,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub rates: Rows,
    pub modes: Vec<ModeSpec>,
    pub init: InitSpec,
    pub obs: ObsSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HyperSpec {
    pub alpha: Vec<f64>,
    pub eta: Vec<f64>,
    pub lambda: f64,
    #[serde(rename = "Psi")]
    pub psi: Rows,
    pub kappa: f64,
    pub s: f64,
    pub r: f64,
    #[serde(rename = "M")]
    pub m: Vec<Rows>,
    #[serde(rename = "K")]
    pub k: Vec<Rows>,
    #[serde(rename = "Psi_D")]
    pub psi_d: Vec<Rows>,
    pub lambda_d: Vec<f64>,
    #[serde(rename = "Psi_x")]
    pub psi_x: Rows,
    pub lambda_x: f64,
    #[serde(default = "default_xi")]
    pub xi: f64,
}

fn default_xi() -> f64 {
    crate::params::empirical::DEFAULT_MALA_STEP
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub h: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ObservationPlan {
    pub times: Option<Vec<f64>>,
    pub count: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    #[default]
    Empirical,
    Model,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub samples: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub update_params: Option<bool>,
    pub stride: Option<usize>,
    #[serde(default)]
    pub init: InitMode,
}

/// One document holding model, grid, observation plan and sampler settings.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDocument {
    pub model: Option<ModelSpec>,
    pub hyper: Option<HyperSpec>,
    pub num_modes: Option<usize>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub observations: ObservationPlan,
    #[serde(default)]
    pub sampler: SamplerSpec,
}

pub fn read_document(path: &Path) -> Result<RunDocument> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn vector(v: &[f64]) -> Vector {
    Vector::from_column_slice(v)
}

fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

impl ModelSpec {
    pub fn to_params(&self) -> Result<ModelParams> {
        let modes = self
            .modes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let a = mat_from_rows(&m.a)?;
                let b = vector(&m.b);
                match (&m.q, &m.d) {
                    (Some(q), None) => ModeDynamics::new(a, b, mat_from_rows(q)?),
                    (None, Some(d)) => ModeDynamics::from_covariance(a, b, mat_from_rows(d)?),
                    _ => Err(Error::Config(format!(
                        "mode {} needs exactly one of Q or D",
                        i + 1
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParams {
            rates: RateMatrix::new(mat_from_rows(&self.rates)?)?,
            modes,
            init: InitialLaw {
                pi: self.init.pi.clone(),
                mu0: vector(&self.init.mu0),
                sigma0: mat_from_rows(&self.init.sigma0)?,
            },
            obs: ObservationModel {
                sigma_x: mat_from_rows(&self.obs.sigma_x)?,
            },
        };
        validate_params(&params)?;
        Ok(params)
    }

    pub fn from_params(p: &ModelParams) -> Self {
        Self {
            rates: mat_to_rows(p.rates.matrix()),
            modes: p
                .modes
                .iter()
                .map(|m| ModeSpec {
                    a: mat_to_rows(&m.a),
                    b: vec_of(&m.b),
                    q: None,
                    d: Some(mat_to_rows(m.d())),
                })
                .collect(),
            init: InitSpec {
                pi: p.init.pi.clone(),
                mu0: vec_of(&p.init.mu0),
                sigma0: mat_to_rows(&p.init.sigma0),
            },
            obs: ObsSpec {
                sigma_x: mat_to_rows(&p.obs.sigma_x),
            },
        }
    }
}

impl HyperSpec {
    pub fn to_hyper(&self) -> Result<PriorHyperparams> {
        let k = self.alpha.len();
        if self.m.len() != k
            || self.k.len() != k
            || self.psi_d.len() != k
            || self.lambda_d.len() != k
        {
            return Err(Error::InvalidHyper(
                "per-mode lists must have one entry per mode".into(),
            ));
        }
        Ok(PriorHyperparams {
            alpha: self.alpha.clone(),
            initial_state: NiwPrior {
                eta: vector(&self.eta),
                lambda: self.lambda,
                psi: mat_from_rows(&self.psi)?,
                kappa: self.kappa,
            },
            rate_shape: self.s,
            rate_rate: self.r,
            drift: self
                .m
                .iter()
                .zip(&self.k)
                .map(|(m, k)| {
                    Ok(MatrixNormalPrior {
                        mean: mat_from_rows(m)?,
                        precision: mat_from_rows(k)?,
                    })
                })
                .collect::<Result<_>>()?,
            dispersion: self
                .psi_d
                .iter()
                .zip(&self.lambda_d)
                .map(|(p, &dof)| {
                    Ok(IwPrior {
                        scale: mat_from_rows(p)?,
                        dof,
                    })
                })
                .collect::<Result<_>>()?,
            obs_cov: IwPrior {
                scale: mat_from_rows(&self.psi_x)?,
                dof: self.lambda_x,
            },
            mala_step: self.xi,
        })
    }

    pub fn from_hyper(h: &PriorHyperparams) -> Self {
        Self {
            alpha: h.alpha.clone(),
            eta: vec_of(&h.initial_state.eta),
            lambda: h.initial_state.lambda,
            psi: mat_to_rows(&h.initial_state.psi),
            kappa: h.initial_state.kappa,
            s: h.rate_shape,
            r: h.rate_rate,
            m: h.drift.iter().map(|d| mat_to_rows(&d.mean)).collect(),
            k: h.drift.iter().map(|d| mat_to_rows(&d.precision)).collect(),
            psi_d: h.dispersion.iter().map(|d| mat_to_rows(&d.scale)).collect(),
            lambda_d: h.dispersion.iter().map(|d| d.dof).collect(),
            psi_x: mat_to_rows(&h.obs_cov.scale),
            lambda_x: h.obs_cov.dof,
            xi: h.mala_step,
        }
    }
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_table(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// `t,x1..xn` rows.
pub fn write_observations(path: &Path, obs: &ObservationSet) -> Result<()> {
    let n = obs.dim().unwrap_or(1);
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", n));
    write_table(
        path,
        &header,
        obs.times().iter().zip(obs.values()).map(|(t, x)| {
            std::iter::once(fmt_num(*t))
                .chain(x.iter().map(|v| fmt_num(*v)))
                .collect()
        }),
    )
}

/// Reads `t,x1..xn`. With `dim` given, every column `x1..x{dim}` must exist;
/// otherwise the consecutive `x` columns found define the dimension.
pub fn read_observations(path: &Path, dim: Option<usize>) -> Result<ObservationSet> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let t_col = col("t").ok_or_else(|| Error::MissingColumn("t".into()))?;
    let n = match dim {
        Some(n) => n,
        None => (1..)
            .take_while(|i| col(&format!("x{i}")).is_some())
            .count(),
    };
    if n == 0 {
        return Err(Error::MissingColumn("x1".into()));
    }
    let x_cols = (1..=n)
        .map(|i| col(&format!("x{i}")).ok_or_else(|| Error::MissingColumn(format!("x{i}"))))
        .collect::<Result<Vec<_>>>()?;
    let parse = |s: &str, line: usize| {
        s.parse::<f64>().map_err(|_| {
            Error::Parse(format!(
                "{}: line {line}: `{s}` is not a number",
                path.display()
            ))
        })
    };
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |c: usize| {
            rec.get(c)
                .ok_or_else(|| Error::Parse(format!("line {line}: short row")))
        };
        times.push(parse(field(t_col)?, line)?);
        let x = x_cols
            .iter()
            .map(|&c| parse(field(c)?, line))
            .collect::<Result<Vec<_>>>()?;
        values.push(Vector::from_vec(x));
    }
    ObservationSet::new(times, values)
}

/// Mode path on the grid as `t,z` with 1-based modes.
pub fn write_mode_path(path: &Path, z: &MjpPath, grid: &TimeGrid) -> Result<()> {
    write_table(
        path,
        &["t".into(), "z".into()],
        grid.times()
            .zip(z.on_grid(grid))
            .map(|(t, m)| vec![fmt_num(t), (m + 1).to_string()]),
    )
}

pub fn write_state_path(path: &Path, y: &DiffusionPath, grid: &TimeGrid) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(numbered("y", y.dim()));
    write_table(
        path,
        &header,
        grid.times().zip(y.values()).map(|(t, v)| {
            std::iter::once(fmt_num(t))
                .chain(v.iter().map(|x| fmt_num(*x)))
                .collect()
        }),
    )
}

pub fn write_marginals(dir: &Path, m: &Marginals, k: usize, n: usize) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(numbered("p", k));
    write_table(
        &dir.join("z_marginal.csv"),
        &header,
        m.z_times.iter().zip(&m.z_probs).map(|(t, p)| {
            std::iter::once(fmt_num(*t))
                .chain(p.iter().map(|v| fmt_num(*v)))
                .collect()
        }),
    )?;
    let mut header = vec!["t".to_string()];
    header.extend(numbered("mean", n));
    header.extend(numbered("q05_", n));
    header.extend(numbered("q95_", n));
    write_table(
        &dir.join("y_marginal.csv"),
        &header,
        (0..m.y_times.len()).map(|j| {
            std::iter::once(fmt_num(m.y_times[j]))
                .chain(m.y_mean[j].iter().map(|v| fmt_num(*v)))
                .chain(m.y_q05[j].iter().map(|v| fmt_num(*v)))
                .chain(m.y_q95[j].iter().map(|v| fmt_num(*v)))
                .collect()
        }),
    )
}

/// One line of `params.jsonl`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamRecord {
    pub sweep: usize,
    pub model: ModelSpec,
    pub mala_accepted: Vec<bool>,
    pub seconds: f64,
}

impl ParamRecord {
    pub fn from_draw(d: &Draw) -> Self {
        Self {
            sweep: d.sweep,
            model: ModelSpec::from_params(&d.params),
            mala_accepted: d.mala_accepted.clone(),
            seconds: d.seconds,
        }
    }
}

pub fn write_params_jsonl(path: &Path, store: &SampleStore) -> Result<()> {
    let mut w = create(path)?;
    for d in &store.draws {
        serde_json::to_writer(&mut w, &ParamRecord::from_draw(d))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_params_jsonl(path: &Path) -> Result<Vec<ParamRecord>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("{}: line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Raw draws: `samples/z_jumps.csv` (`draw,t,z` with a row per segment start)
/// and `samples/y_paths.csv` (`draw,t,y1..yn` at the stored grid points).
pub fn write_raw_samples(dir: &Path, store: &SampleStore) -> Result<()> {
    write_table(
        &dir.join("z_jumps.csv"),
        &["draw".into(), "t".into(), "z".into()],
        store.draws.iter().enumerate().flat_map(|(i, d)| {
            d.z.segments()
                .into_iter()
                .map(move |(s, _, z)| vec![(i + 1).to_string(), fmt_num(s), (z + 1).to_string()])
        }),
    )?;
    let n = store.dim;
    let idx = store.y_indices();
    let mut header = vec!["draw".to_string(), "t".to_string()];
    header.extend(numbered("y", n));
    write_table(
        &dir.join("y_paths.csv"),
        &header,
        store.draws.iter().enumerate().flat_map(|(i, d)| {
            let idx = &idx;
            (0..idx.len()).map(move |j| {
                [(i + 1).to_string(), fmt_num(store.grid.time(idx[j]))]
                    .into_iter()
                    .chain(d.y[j * n..(j + 1) * n].iter().map(|v| fmt_num(*v)))
                    .collect()
            })
        }),
    )
}

/// Filter dump of the final sweep: `filter_info.csv` with `t`, the entries
/// of `I` row by row and of `a`; `filter_pf.csv` with `t,p1..pK`.
pub fn write_filters(
    dir: &Path,
    grid: &TimeGrid,
    info: &crate::diffusion::BackwardInfo,
    pf: &crate::switching::FilterTrajectory,
) -> Result<()> {
    let n = info.lin(0).len();
    let mut header = vec!["t".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            header.push(format!("I{i}{j}"));
        }
    }
    header.extend(numbered("a", n));
    write_table(
        &dir.join("filter_info.csv"),
        &header,
        (0..grid.len()).map(|l| {
            let i: &Mat = info.info(l);
            std::iter::once(fmt_num(grid.time(l)))
                .chain(i.transpose().iter().map(|v| fmt_num(*v)))
                .chain(info.lin(l).iter().map(|v| fmt_num(*v)))
                .collect()
        }),
    )?;
    let mut header = vec!["t".to_string()];
    header.extend(numbered("p", pf.num_modes()));
    write_table(
        &dir.join("filter_pf.csv"),
        &header,
        (0..grid.len()).map(|l| {
            std::iter::once(fmt_num(grid.time(l)))
                .chain(pf.at(l).iter().map(|v| fmt_num(*v)))
                .collect()
        }),
    )
}
