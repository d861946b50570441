//! Estimators for distant spikes, eigenvector angles, PC-score correlations
//! and shrinkage factors.
//!
//! Three variants are provided:
//!
//! * [`Method::D`] works on the sample eigenvalues alone through `f_F`/`g_F`.
//! * [`Method::Lambda`] inverts an estimated ψ (see [`crate::lsd`]).
//! * [`Method::Sp`] is the spiked-population baseline with all non-spikes set
//!   to a common level ζ.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{f_g_eval, sp_inverse, PsiModel, SampleSpectrum};

/// Relative gap below which adjacent sample eigenvalues count as tied.
pub const TIE_TOL: f64 = 1e-10;
/// Excursion outside `[0, 1]` that is clamped rather than rejected.
pub const CLAMP_TOL: f64 = 1e-9;
/// Slack allowed when checking `λ̂ ≤ d_k`.
pub const SHRINKAGE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    D,
    Lambda,
    Sp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sp, Method::Lambda, Method::D];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::D => "d",
            Method::Lambda => "lambda",
            Method::Sp => "sp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d" | "d-gsp" => Ok(Method::D),
            "lambda" | "l" | "lambda-gsp" => Ok(Method::Lambda),
            "sp" => Ok(Method::Sp),
            other => Err(Error::Input(format!("unknown method '{other}'"))),
        }
    }
}

/// Estimates for one spike. Fields other than `index`, `sample_eigenvalue`
/// and `distant` are `None` for non-distant spikes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeEstimate {
    /// 1-based spike index `k`.
    pub index: usize,
    pub sample_eigenvalue: f64,
    pub distant: bool,
    pub lambda_hat: Option<f64>,
    pub cos2_angle: Option<f64>,
    pub corr2_score: Option<f64>,
    pub shrinkage: Option<f64>,
    /// Set when `cos2_angle` or `corr2_score` was clamped into `[0, 1]`.
    #[serde(default)]
    pub clamped: bool,
}

impl SpikeEstimate {
    fn new(index: usize, sample_eigenvalue: f64) -> Self {
        Self {
            index,
            sample_eigenvalue,
            distant: false,
            lambda_hat: None,
            cos2_angle: None,
            corr2_score: None,
            shrinkage: None,
            clamped: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeEstimates {
    pub method: Method,
    pub spikes: Vec<SpikeEstimate>,
}

impl SpikeEstimates {
    pub fn lambda_hats(&self) -> Vec<Option<f64>> {
        self.spikes.iter().map(|s| s.lambda_hat).collect()
    }

    pub fn shrinkage_factors(&self) -> Vec<Option<f64>> {
        self.spikes.iter().map(|s| s.shrinkage).collect()
    }

    pub fn all_distant(&self) -> bool {
        self.spikes.iter().all(|s| s.distant)
    }
}

/// Spiked-population baseline: every non-spike equals `zeta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpBaselineModel {
    pub zeta: f64,
    pub gamma: f64,
}

impl SpBaselineModel {
    pub fn new(zeta: f64, gamma: f64) -> Result<Self> {
        if !(zeta.is_finite() && zeta > 0.0) {
            return Err(Error::Domain(format!("zeta must be positive, got {zeta}")));
        }
        Ok(Self { zeta, gamma })
    }

    /// ζ is the mean of the non-spiked sample eigenvalues, zeros included.
    pub fn from_sample(sample: &SampleSpectrum, m: usize) -> Result<Self> {
        let rest = sample.nonspikes(m);
        if rest.is_empty() {
            return Err(Error::Domain(format!("m = {m} leaves no non-spiked eigenvalues")));
        }
        let zeta = rest.iter().sum::<f64>() / rest.len() as f64;
        Self::new(zeta, sample.gamma())
    }

    /// `ψ(β) = β(1 + γζ/(β − ζ))`.
    pub fn psi(&self, beta: f64) -> f64 {
        beta * (1.0 + self.gamma * self.zeta / (beta - self.zeta))
    }

    pub fn inverse(&self, d: f64) -> Option<f64> {
        sp_inverse(d, self.zeta, self.gamma).filter(|&b| b > self.zeta * (1.0 + self.gamma.sqrt()))
    }

    /// `(1 − γ/(α−1)²)/(1 + γ/(α−1))` with `α = β/ζ`.
    pub fn cos2(&self, beta: f64) -> f64 {
        let a = beta / self.zeta - 1.0;
        (1.0 - self.gamma / (a * a)) / (1.0 + self.gamma / a)
    }

    /// `1 − γ/(α−1)²` with `α = β/ζ`.
    pub fn corr2(&self, beta: f64) -> f64 {
        let a = beta / self.zeta - 1.0;
        1.0 - self.gamma / (a * a)
    }
}

fn check_spikes(sample: &SampleSpectrum, m: usize) -> Result<()> {
    let d = sample.eigenvalues();
    if m == 0 {
        return Err(Error::Domain("at least one spike is required (m >= 1)".into()));
    }
    if m >= d.len() {
        return Err(Error::Domain(format!("m = {m} must be smaller than p = {}", d.len())));
    }
    for k in 0..m {
        if d[k] - d[k + 1] < TIE_TOL * d[k] {
            return Err(Error::Tie { index: k + 1 });
        }
    }
    Ok(())
}

/// Maps a value into `[0, 1]`, tolerating excursions of at most [`CLAMP_TOL`].
fn unit_interval(value: f64, what: &str, clamped: &mut bool) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else if (-CLAMP_TOL..=1.0 + CLAMP_TOL).contains(&value) {
        *clamped = true;
        Ok(value.clamp(0.0, 1.0))
    } else {
        Err(Error::Domain(format!("{what} estimate {value} lies outside [0, 1]")))
    }
}

fn require_model(method: Method, model: Option<&PsiModel>) -> Result<Option<&PsiModel>> {
    match (method, model) {
        (Method::Lambda, None) => Err(Error::MissingModel),
        (_, model) => Ok(model),
    }
}

/// Population spike estimates `λ̂_k` for `k = 1..=m`.
pub fn estimate_spikes(
    sample: &SampleSpectrum,
    m: usize,
    method: Method,
    psi_model: Option<&PsiModel>,
) -> Result<SpikeEstimates> {
    let psi_model = require_model(method, psi_model)?;
    check_spikes(sample, m)?;
    let d = sample.eigenvalues();
    let sp = match method {
        Method::Sp => Some(SpBaselineModel::from_sample(sample, m)?),
        _ => None,
    };
    let mut spikes = Vec::with_capacity(m);
    for (k, &dk) in d.iter().enumerate().take(m) {
        let mut est = SpikeEstimate::new(k + 1, dk);
        est.lambda_hat = match method {
            Method::D => Some(f_g_eval(sample, m, dk)?.0),
            Method::Lambda => match psi_model.expect("checked").inverse(dk) {
                Ok(v) => Some(v),
                Err(Error::NotDistantSpike { .. }) => None,
                Err(e) => return Err(e),
            },
            Method::Sp => sp.expect("sp model").inverse(dk),
        };
        est.distant = est.lambda_hat.is_some();
        spikes.push(est);
    }
    Ok(SpikeEstimates { method, spikes })
}

/// Fills `cos2_angle`, the squared cosine between sample and population eigenvectors.
pub fn estimate_angles(
    sample: &SampleSpectrum,
    m: usize,
    method: Method,
    psi_model: Option<&PsiModel>,
    estimates: &mut SpikeEstimates,
) -> Result<()> {
    let psi_model = require_model(method, psi_model)?;
    if estimates.method != method {
        return Err(Error::Input(format!(
            "estimates were produced by method {}, not {method}",
            estimates.method
        )));
    }
    let sp = match method {
        Method::Sp => Some(SpBaselineModel::from_sample(sample, m)?),
        _ => None,
    };
    for est in estimates.spikes.iter_mut().filter(|e| e.distant) {
        let lambda = est.lambda_hat.expect("distant spikes carry lambda_hat");
        let raw = match method {
            Method::Lambda => {
                let (psi, dpsi) = psi_model.expect("checked").eval(lambda)?;
                lambda * dpsi / psi
            }
            Method::D => f_g_eval(sample, m, est.sample_eigenvalue)?.1,
            Method::Sp => sp.expect("sp model").cos2(lambda),
        };
        est.cos2_angle = Some(unit_interval(raw, "cos2 angle", &mut est.clamped)?);
    }
    Ok(())
}

/// Fills `corr2_score`, the squared correlation between sample and population PC scores.
pub fn estimate_correlations(
    sample: &SampleSpectrum,
    m: usize,
    method: Method,
    psi_model: Option<&PsiModel>,
    estimates: &mut SpikeEstimates,
) -> Result<()> {
    let psi_model = require_model(method, psi_model)?;
    if estimates.method != method {
        return Err(Error::Input(format!(
            "estimates were produced by method {}, not {method}",
            estimates.method
        )));
    }
    let sp = match method {
        Method::Sp => Some(SpBaselineModel::from_sample(sample, m)?),
        _ => None,
    };
    for est in estimates.spikes.iter_mut().filter(|e| e.distant) {
        let lambda = est.lambda_hat.expect("distant spikes carry lambda_hat");
        let raw = match method {
            Method::Lambda => psi_model.expect("checked").eval(lambda)?.1,
            Method::D => {
                let dk = est.sample_eigenvalue;
                let (f, g) = f_g_eval(sample, m, dk)?;
                dk * g / f
            }
            Method::Sp => sp.expect("sp model").corr2(lambda),
        };
        est.corr2_score = Some(unit_interval(raw, "corr2 score", &mut est.clamped)?);
    }
    Ok(())
}

/// Asymptotic shrinkage factor `ρ̂ = λ̂/d_k`, capped at 1.
pub fn estimate_shrinkage(lambda_hat: f64, d_k: f64) -> Result<f64> {
    if !(lambda_hat > 0.0) || !(d_k > 0.0) {
        return Err(Error::Domain(format!(
            "shrinkage needs positive inputs, got lambda_hat = {lambda_hat}, d = {d_k}"
        )));
    }
    if lambda_hat > d_k * (1.0 + SHRINKAGE_TOL) {
        return Err(Error::Domain(format!("lambda_hat = {lambda_hat} exceeds d = {d_k}")));
    }
    Ok((lambda_hat / d_k).min(1.0))
}

/// Runs all four estimators for one method.
pub fn estimate_all(
    sample: &SampleSpectrum,
    m: usize,
    method: Method,
    psi_model: Option<&PsiModel>,
) -> Result<SpikeEstimates> {
    let mut est = estimate_spikes(sample, m, method, psi_model)?;
    estimate_angles(sample, m, method, psi_model, &mut est)?;
    estimate_correlations(sample, m, method, psi_model, &mut est)?;
    for s in est.spikes.iter_mut().filter(|s| s.distant) {
        s.shrinkage = Some(estimate_shrinkage(s.lambda_hat.expect("distant"), s.sample_eigenvalue)?);
    }
    Ok(est)
}
