//! Monte-Carlo studies: replicate, estimate, compare against ground truth and
//! aggregate into bias/CV tables.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_all, Method, SpikeEstimates};
use crate::lsd::{fit_lsd, LsdConfig};
use crate::pca::PcaModel;
use crate::spectrum::{PsiModel, SampleSpectrum};
use crate::spike_count::estimate_num_spikes_with_fit;

use super::loocv::LoocvConfig;
use super::population::{build_population, draw_sample, GroundTruth, PopulationSpec};

fn default_reps() -> usize {
    1
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// How the number of spikes is chosen in each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MPolicy {
    Fixed(usize),
    Estimate { m_max: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: String,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Fixed number of spikes; when absent it is estimated with `m_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    #[serde(default)]
    pub lsd: LsdConfig,
    pub population: PopulationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loocv: Option<LoocvConfig>,
}

impl StudyConfig {
    pub fn m_policy(&self) -> MPolicy {
        match self.m {
            Some(m) => MPolicy::Fixed(m),
            None => MPolicy::Estimate { m_max: self.m_max.unwrap_or(5) },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Input("reps must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Input("at least one method is required".into()));
        }
        self.population.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Input(format!("invalid study config: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Eigenvalue,
    Angle,
    Correlation,
    Shrinkage,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [Quantity::Eigenvalue, Quantity::Angle, Quantity::Correlation, Quantity::Shrinkage];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Eigenvalue => "eigenvalue",
            Quantity::Angle => "angle",
            Quantity::Correlation => "correlation",
            Quantity::Shrinkage => "shrinkage",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Replicate-level truth for one population spike. Angle and correlation
/// are cosines (not squared), matching the reported quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeTruth {
    pub eigenvalue: f64,
    pub angle: f64,
    pub correlation: f64,
    pub shrinkage: f64,
}

impl SpikeTruth {
    pub fn get(&self, q: Quantity) -> f64 {
        match q {
            Quantity::Eigenvalue => self.eigenvalue,
            Quantity::Angle => self.angle,
            Quantity::Correlation => self.correlation,
            Quantity::Shrinkage => self.shrinkage,
        }
    }
}

/// Reported value of `q` for spike `k` (1-based), on the same scale as [`SpikeTruth`].
pub fn estimate_of(est: &SpikeEstimates, k: usize, q: Quantity) -> Option<f64> {
    let s = est.spikes.get(k - 1)?;
    match q {
        Quantity::Eigenvalue => s.lambda_hat,
        Quantity::Angle => s.cos2_angle.map(f64::sqrt),
        Quantity::Correlation => s.corr2_score.map(f64::sqrt),
        Quantity::Shrinkage => s.shrinkage,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: u64,
    /// `None` when the replicate failed before estimation.
    pub m_est: Option<usize>,
    /// Leading sample eigenvalues `d₁..d_r` (at least as many as true spikes).
    pub sample_eigenvalues: Vec<f64>,
    pub truths: Vec<SpikeTruth>,
    pub estimates: Vec<SpikeEstimates>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub quantity: Quantity,
    /// 1-based spike index.
    pub spike: usize,
    pub bias_pct: Option<f64>,
    pub cv_pct: Option<f64>,
    /// Standard error of `bias_pct`.
    pub se_pct: Option<f64>,
    pub reps_ok: usize,
    pub reps_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema: String,
    pub study: String,
    pub config: StudyConfig,
    pub n: usize,
    pub p: usize,
    pub true_spikes: Vec<f64>,
    pub true_nonspike_edge: f64,
    pub reps: usize,
    /// Histogram of the per-replicate number of spikes used.
    pub m_counts: BTreeMap<usize, usize>,
    pub cells: Vec<CellSummary>,
    pub outcomes: Vec<RepOutcome>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Aggregates replicate outcomes in replicate order.
pub fn summarize(outcomes: &[RepOutcome], methods: &[Method], spikes: usize) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for &method in methods {
        for q in Quantity::ALL {
            for k in 1..=spikes {
                let mut estimates = Vec::new();
                let mut rel = Vec::new();
                for o in outcomes {
                    let Some(truth) = o.truths.get(k - 1) else { continue };
                    let value = o
                        .estimates
                        .iter()
                        .find(|e| e.method == method)
                        .and_then(|e| estimate_of(e, k, q));
                    if let Some(v) = value.filter(|v| v.is_finite()) {
                        let t = truth.get(q);
                        estimates.push(v);
                        rel.push((v - t) / t);
                    }
                }
                let ok = estimates.len();
                let (bias, cv, se) = if ok == 0 {
                    (None, None, None)
                } else {
                    let m = mean(&estimates);
                    (
                        Some(100.0 * mean(&rel)),
                        Some(100.0 * sample_sd(&estimates) / m),
                        Some(100.0 * sample_sd(&rel) / (ok as f64).sqrt()),
                    )
                };
                cells.push(CellSummary {
                    method,
                    quantity: q,
                    spike: k,
                    bias_pct: bias,
                    cv_pct: cv,
                    se_pct: se,
                    reps_ok: ok,
                    reps_failed: outcomes.len() - ok,
                });
            }
        }
    }
    cells
}

/// Per-replicate truths from the population eigenvectors and this sample's PCA.
pub fn replicate_truths(truth: &GroundTruth, data: &DMatrix<f64>, model: &PcaModel) -> Vec<SpikeTruth> {
    let r = truth.spike_count().min(model.components());
    let mut centered = data.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-model.center[j]);
    }
    (0..r)
        .map(|k| {
            let e = model.eigenvectors.column(k).into_owned();
            let big_e = truth.population_eigvecs.column(k).into_owned();
            let sample_scores = &centered * &e;
            let pop_scores = &centered * &big_e;
            let corr = sample_scores.dot(&pop_scores) / (sample_scores.norm() * pop_scores.norm());
            let d = model.eigenvalues[k];
            SpikeTruth {
                eigenvalue: truth.true_spikes[k],
                angle: e.dot(&big_e).abs(),
                correlation: corr.abs(),
                shrinkage: (e.dot(&truth.covariance_apply(&e)) / d).sqrt(),
            }
        })
        .collect()
}

/// Number of spikes and, when available, the ψ̂ fitted at that number.
pub(crate) fn choose_m(
    sample: &SampleSpectrum,
    policy: MPolicy,
    lsd: &LsdConfig,
    need_model: bool,
) -> Result<(usize, Option<PsiModel>)> {
    match policy {
        MPolicy::Fixed(0) => Ok((0, None)),
        MPolicy::Fixed(m) => {
            let model = if need_model { Some(fit_lsd(sample, m, lsd)?.psi_model) } else { None };
            Ok((m, model))
        }
        MPolicy::Estimate { m_max } => {
            let (trace, fit) = estimate_num_spikes_with_fit(sample, m_max, lsd)?;
            Ok((trace.final_m, fit.map(|f| f.psi_model)))
        }
    }
}

fn policy_cap(policy: MPolicy) -> usize {
    match policy {
        MPolicy::Fixed(m) => m,
        MPolicy::Estimate { m_max } => m_max,
    }
}

/// One replicate: draw, PCA, choose `m`, estimate with each method, compute truths.
pub fn run_replicate(config: &StudyConfig, truth: &GroundTruth, rep: u64) -> RepOutcome {
    let data = draw_sample(&config.population, truth, rep);
    let policy = config.m_policy();
    let components = truth.spike_count().max(policy_cap(policy));
    let mut outcome = RepOutcome {
        rep,
        m_est: None,
        sample_eigenvalues: Vec::new(),
        truths: Vec::new(),
        estimates: Vec::new(),
        failures: Vec::new(),
    };
    let model = match PcaModel::fit(&data, components, false) {
        Ok(m) => m,
        Err(e) => {
            outcome.failures.push(format!("pca: {e}"));
            return outcome;
        }
    };
    outcome.sample_eigenvalues = model.eigenvalues[..components].to_vec();
    outcome.truths = replicate_truths(truth, &data, &model);
    let sample = match model.sample_spectrum() {
        Ok(s) => s,
        Err(e) => {
            outcome.failures.push(format!("spectrum: {e}"));
            return outcome;
        }
    };
    let need_model = config.methods.contains(&Method::Lambda);
    let (m, psi_model) = match choose_m(&sample, policy, &config.lsd, need_model) {
        Ok(v) => v,
        Err(e) => {
            outcome.failures.push(format!("spike count: {e}"));
            return outcome;
        }
    };
    outcome.m_est = Some(m);
    if m == 0 {
        return outcome;
    }
    for &method in &config.methods {
        match estimate_all(&sample, m, method, psi_model.as_ref()) {
            Ok(est) => outcome.estimates.push(est),
            Err(e) => outcome.failures.push(format!("{method}: {e}")),
        }
    }
    outcome
}

/// Runs `config.reps` replicates in parallel and aggregates them in order.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let truth = build_population(&config.population)?;
    let outcomes: Vec<RepOutcome> =
        (0..config.reps as u64).into_par_iter().map(|rep| run_replicate(config, &truth, rep)).collect();
    let cells = summarize(&outcomes, &config.methods, truth.spike_count());
    let mut m_counts = BTreeMap::new();
    for m in outcomes.iter().filter_map(|o| o.m_est) {
        *m_counts.entry(m).or_insert(0) += 1;
    }
    Ok(StudyReport {
        schema: crate::SCHEMA.to_string(),
        study: config.study.clone(),
        config: config.clone(),
        n: config.population.n(),
        p: config.population.p,
        true_spikes: truth.true_spikes.clone(),
        true_nonspike_edge: truth.true_nonspike_edge,
        reps: config.reps,
        m_counts,
        cells,
        outcomes,
    })
}

impl StudyReport {
    pub fn cell(&self, method: Method, quantity: Quantity, spike: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.quantity == quantity && c.spike == spike)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::SpikeEstimate;

    fn injected(truth: SpikeTruth) -> RepOutcome {
        let est = SpikeEstimate {
            index: 1,
            sample_eigenvalue: 2.0 * truth.eigenvalue,
            distant: true,
            lambda_hat: Some(truth.eigenvalue),
            cos2_angle: Some(truth.angle * truth.angle),
            corr2_score: Some(truth.correlation * truth.correlation),
            shrinkage: Some(truth.shrinkage),
            clamped: false,
        };
        RepOutcome {
            rep: 0,
            m_est: Some(1),
            sample_eigenvalues: vec![2.0 * truth.eigenvalue],
            truths: vec![truth],
            estimates: vec![SpikeEstimates { method: Method::D, spikes: vec![est] }],
            failures: Vec::new(),
        }
    }

    #[test]
    fn injected_truth_has_zero_bias() {
        let t = SpikeTruth { eigenvalue: 7.0, angle: 0.75, correlation: 0.5, shrinkage: 0.5 };
        let cells = summarize(&[injected(t)], &[Method::D, Method::Sp], 1);
        for c in &cells {
            match c.method {
                Method::D => {
                    assert_eq!(c.bias_pct, Some(0.0), "{c:?}");
                    assert_eq!(c.reps_ok, 1);
                }
                _ => {
                    assert_eq!(c.bias_pct, None);
                    assert_eq!(c.reps_failed, 1);
                }
            }
        }
    }

    #[test]
    fn bias_and_cv_formulas() {
        let t = SpikeTruth { eigenvalue: 10.0, angle: 1.0, correlation: 1.0, shrinkage: 1.0 };
        let mut a = injected(t);
        let mut b = injected(t);
        a.estimates[0].spikes[0].lambda_hat = Some(11.0);
        b.estimates[0].spikes[0].lambda_hat = Some(13.0);
        let cells = summarize(&[a, b], &[Method::D], 1);
        let c = cells.iter().find(|c| c.quantity == Quantity::Eigenvalue).unwrap();
        assert!((c.bias_pct.unwrap() - 20.0).abs() < 1e-12);
        assert!((c.cv_pct.unwrap() - 100.0 * 2f64.sqrt() / 12.0).abs() < 1e-12);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let text = r#"
            study = "tiny"
            reps = 2
            methods = ["sp", "d"]
            m_max = 3

            [population]
            p = 60
            group_sizes = [10, 10, 10]
            ar_sigma2 = 4.0
            ar_rho = 0.5
            seed = 1
        "#;
        let cfg = StudyConfig::from_toml(text).unwrap();
        assert_eq!(cfg.population.mean_atoms, vec![-0.3, 0.0, 0.3]);
        assert_eq!(cfg.m_policy(), MPolicy::Estimate { m_max: 3 });
        let back = StudyConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
