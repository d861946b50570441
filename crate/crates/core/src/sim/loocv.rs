//! Leave-one-out evaluation of shrinkage-adjusted PC-score prediction on
//! simulated data.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_all, Method};
use crate::lsd::LsdConfig;
use crate::pca::PcaModel;

use super::population::{build_population, draw_sample, PopulationSpec};
use super::study::{choose_m, MPolicy};

fn default_evaluations() -> usize {
    100
}

fn default_datasets() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvConfig {
    /// Held-out observations per dataset, spread evenly over the rows.
    #[serde(default = "default_evaluations")]
    pub evaluations: usize,
    /// Independent datasets; errors are pooled across them.
    #[serde(default = "default_datasets")]
    pub datasets: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
}

impl Default for LoocvConfig {
    fn default() -> Self {
        Self { evaluations: default_evaluations(), datasets: default_datasets(), m: None, m_max: None }
    }
}

impl LoocvConfig {
    fn policy(&self) -> MPolicy {
        match self.m {
            Some(m) => MPolicy::Fixed(m),
            None => MPolicy::Estimate { m_max: self.m_max.unwrap_or(5) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    /// `unadjusted` or a method name.
    pub adjustment: String,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    pub schema: String,
    pub n: usize,
    pub p: usize,
    /// Components used in each dataset.
    pub components: Vec<usize>,
    pub evaluations: usize,
    /// Held-out rows dropped because some method had no shrinkage factor.
    pub skipped: usize,
    pub rows: Vec<MseRow>,
}

impl LoocvReport {
    pub fn mse(&self, adjustment: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.adjustment == adjustment).map(|r| r.mse)
    }
}

/// Squared error between the rescaled held-out prediction and its rescaled
/// full-sample score, summed over components.
///
/// `predicted[k]` is the raw predicted score, already sign-aligned with the
/// full-sample component; it is divided by `shrinkage[k]` and `√d_train[k]`.
pub fn prediction_error(predicted: &[f64], shrinkage: &[f64], d_train: &[f64], full_scaled: &[f64]) -> f64 {
    predicted
        .iter()
        .zip(shrinkage)
        .zip(d_train)
        .zip(full_scaled)
        .map(|(((q, rho), d), target)| (q / rho / d.sqrt() - target).powi(2))
        .sum()
}

fn drop_row(data: &DMatrix<f64>, row: usize) -> DMatrix<f64> {
    data.clone().remove_row(row)
}

/// Leave-one-out MSE of unadjusted and shrinkage-adjusted predicted scores.
pub fn loocv_shrinkage_mse(
    spec: &PopulationSpec,
    config: &LoocvConfig,
    methods: &[Method],
    lsd: &LsdConfig,
) -> Result<LoocvReport> {
    let n = spec.n();
    if n < 20 {
        return Err(Error::Input(format!("leave-one-out needs n >= 20, got {n}")));
    }
    if config.evaluations == 0 || config.datasets == 0 {
        return Err(Error::Input("evaluations and datasets must be positive".into()));
    }
    let truth = build_population(spec)?;
    let policy = config.policy();
    let need_model = methods.contains(&Method::Lambda);
    let evals = config.evaluations.min(n);

    let mut sums = vec![0.0; methods.len() + 1];
    let mut count = 0usize;
    let mut skipped = 0usize;
    let mut components = Vec::new();
    for dataset in 0..config.datasets as u64 {
        let data = draw_sample(spec, &truth, dataset);
        let cap = match policy {
            MPolicy::Fixed(m) => m,
            MPolicy::Estimate { m_max } => m_max,
        };
        let full = PcaModel::fit(&data, cap, false)?;
        let (m, _) = choose_m(&full.sample_spectrum()?, policy, lsd, false)?;
        components.push(m);
        if m == 0 {
            continue;
        }
        let full_scores = full.predict_scores(&data)?.scores;

        let errors: Vec<Option<Vec<f64>>> = (0..evals)
            .into_par_iter()
            .map(|j| {
                let row = j * n / evals;
                let train = PcaModel::fit(&drop_row(&data, row), m, false)?;
                let sample = train.sample_spectrum()?;
                let (_, psi) = choose_m(&sample, MPolicy::Fixed(m), lsd, need_model)?;
                let mut factors = Vec::with_capacity(methods.len());
                for &method in methods {
                    let est = estimate_all(&sample, m, method, psi.as_ref())?;
                    match est.shrinkage_factors().into_iter().collect::<Option<Vec<f64>>>() {
                        Some(rho) => factors.push(rho),
                        None => return Ok(None),
                    }
                }
                let x_new = DMatrix::from_row_slice(1, spec.p, data.row(row).transpose().as_slice());
                let q = train.predict_scores(&x_new)?.scores;
                let mut predicted = Vec::with_capacity(m);
                let mut target = Vec::with_capacity(m);
                for k in 0..m {
                    let sign = train.eigenvectors.column(k).dot(&full.eigenvectors.column(k)).signum();
                    predicted.push(sign * q[(0, k)]);
                    target.push(full_scores[(row, k)] / full.eigenvalues[k].sqrt());
                }
                let d_train = &train.eigenvalues[..m];
                let mut out = vec![prediction_error(&predicted, &vec![1.0; m], d_train, &target)];
                out.extend(factors.iter().map(|rho| prediction_error(&predicted, rho, d_train, &target)));
                Ok(Some(out))
            })
            .collect::<Result<_>>()?;
        for e in errors {
            match e {
                Some(values) => {
                    for (s, v) in sums.iter_mut().zip(values) {
                        *s += v;
                    }
                    count += 1;
                }
                None => skipped += 1,
            }
        }
    }
    if count == 0 {
        return Err(Error::Data("no held-out observation could be evaluated".into()));
    }
    let names = std::iter::once("unadjusted".to_string()).chain(methods.iter().map(|m| m.to_string()));
    let rows = names
        .zip(&sums)
        .map(|(adjustment, s)| MseRow { adjustment, mse: s / count as f64 })
        .collect();
    Ok(LoocvReport {
        schema: crate::SCHEMA.to_string(),
        n,
        p: spec.p,
        components,
        evaluations: count,
        skipped,
        rows,
    })
}
