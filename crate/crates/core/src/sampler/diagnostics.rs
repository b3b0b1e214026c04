//! Effective sample sizes, Langevin acceptance and timing of a run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SampleStore;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Effective sample size by non-overlapping batch means with batch length
/// `⌊√n⌋`, clamped to `(0, n]`.
pub fn batch_means_ess(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let b = (n as f64).sqrt().floor() as usize;
    let a = n / b;
    let used = a * b;
    let mean = xs[..used].iter().sum::<f64>() / used as f64;
    let var = xs[..used].iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (used as f64 - 1.0);
    let batch: Vec<f64> = (0..a)
        .map(|i| xs[i * b..(i + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let bvar = batch.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (a as f64 - 1.0);
    if !(var > 0.0) || !(bvar > 0.0) {
        return n as f64;
    }
    let ess = n as f64 * var / (b as f64 * bvar);
    ess.clamp(f64::MIN_POSITIVE, n as f64)
}

/// Named scalar coordinates of a parameter set, 1-based in the names.
pub fn flatten_params(p: &ModelParams) -> Vec<(String, f64)> {
    let k = p.num_modes();
    let n = p.dim();
    let mut out = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i != j {
                out.push((format!("rate[{},{}]", i + 1, j + 1), p.rates.rate(i, j)));
            }
        }
    }
    for (z, m) in p.modes.iter().enumerate() {
        for r in 0..n {
            for c in 0..n {
                out.push((format!("A{}[{},{}]", z + 1, r + 1, c + 1), m.a[(r, c)]));
            }
        }
        for r in 0..n {
            out.push((format!("b{}[{}]", z + 1, r + 1), m.b[r]));
        }
        for r in 0..n {
            for c in 0..=r {
                out.push((format!("D{}[{},{}]", z + 1, r + 1, c + 1), m.d()[(r, c)]));
            }
        }
    }
    for (z, v) in p.init.pi.iter().enumerate() {
        out.push((format!("pi[{}]", z + 1), *v));
    }
    for r in 0..n {
        out.push((format!("mu0[{}]", r + 1), p.init.mu0[r]));
    }
    for r in 0..n {
        for c in 0..=r {
            out.push((
                format!("Sigma0[{},{}]", r + 1, c + 1),
                p.init.sigma0[(r, c)],
            ));
        }
    }
    for r in 0..n {
        for c in 0..=r {
            out.push((
                format!("Sigma_x[{},{}]", r + 1, c + 1),
                p.obs.sigma_x[(r, c)],
            ));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub retained: usize,
    pub ess: BTreeMap<String, f64>,
    /// Fraction of accepted Langevin moves per mode over retained sweeps;
    /// empty when parameters were held fixed.
    pub mala_acceptance: Vec<f64>,
    pub mean_sweep_seconds: f64,
    pub total_retained_seconds: f64,
}

impl Diagnostics {
    /// Builds diagnostics from per-draw parameter coordinates, acceptance
    /// flags and sweep times.
    pub fn from_records(records: &[(Vec<(String, f64)>, Vec<bool>, f64)]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyStore);
        }
        let names: Vec<&String> = records[0].0.iter().map(|(n, _)| n).collect();
        let mut ess = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            let trace: Vec<f64> = records.iter().map(|r| r.0[i].1).collect();
            ess.insert((*name).clone(), batch_means_ess(&trace));
        }
        let modes = records[0].1.len();
        let mala_acceptance = (0..modes)
            .map(|m| {
                records.iter().filter(|r| r.1.get(m) == Some(&true)).count() as f64
                    / records.len() as f64
            })
            .collect();
        let total: f64 = records.iter().map(|r| r.2).sum();
        Ok(Self {
            retained: records.len(),
            ess,
            mala_acceptance,
            mean_sweep_seconds: total / records.len() as f64,
            total_retained_seconds: total,
        })
    }

    pub fn from_store(store: &SampleStore) -> Result<Self> {
        let records: Vec<_> = store
            .draws
            .iter()
            .map(|d| {
                (
                    flatten_params(&d.params),
                    d.mala_accepted.clone(),
                    d.seconds,
                )
            })
            .collect();
        Self::from_records(&records)
    }
}
