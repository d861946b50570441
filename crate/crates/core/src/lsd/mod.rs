//! Recovery of the population spectral distribution from sample eigenvalues.
//!
//! The companion Stieltjes transform `v(z)` of the non-spiked Gram spectrum is
//! evaluated on a grid `{z_j}` in the upper half-plane, the population LSD is
//! discretized as `Σ_k w_k δ_{t_k}`, and the weights are chosen on the simplex
//! to minimize a convex loss of the Marčenko–Pastur residuals
//!
//! ```text
//! e_j(w) = 1/v(z_j) + z_j − γ Σ_k w_k t_k / (1 + t_k v(z_j))
//! ```
//!
//! The estimate is optionally kernel-smoothed; its quantiles stand in for the
//! non-spiked population eigenvalues and define the estimated ψ.

pub mod simplex;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{companion_stieltjes, DiscreteDistribution, PsiModel, SampleSpectrum};
use simplex::{solve_via_dual, LinearProgram};

/// Minimum number of non-spiked eigenvalues needed to fit an LSD.
pub const MIN_NONSPIKES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `max_j max(|Re e_j|, |Im e_j|)`, solved as a linear program.
    #[default]
    Linf,
    /// `Σ_j |Re e_j| + |Im e_j|`, solved as a linear program.
    L1,
    /// `Σ_j |e_j|²`, solved as a quadratic program over the simplex.
    L2,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linf" | "l-inf" | "inf" => Ok(LossKind::Linf),
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            other => Err(Error::Input(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Number of support points `K`.
    pub support_points: usize,
    /// Number of real parts; the z grid has `real_points × imag_factors.len()` points.
    pub real_points: usize,
    /// Imaginary parts as multiples of the mean positive non-spiked eigenvalue.
    pub imag_factors: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { support_points: 100, real_points: 100, imag_factors: vec![0.25, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionGrid {
    pub z_points: Vec<Complex64>,
    pub t_points: Vec<f64>,
}

impl InversionGrid {
    pub fn new(z_points: Vec<Complex64>, t_points: Vec<f64>) -> Result<Self> {
        if z_points.iter().any(|z| !(z.im > 0.0)) {
            return Err(Error::Data("grid points must lie in the upper half-plane".into()));
        }
        if t_points.is_empty() || t_points[0] <= 0.0 || t_points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("support grid must be positive and strictly increasing".into()));
        }
        if z_points.len() < t_points.len() {
            return Err(Error::Data(format!(
                "{} evaluation points cannot determine {} weights",
                z_points.len(),
                t_points.len()
            )));
        }
        Ok(Self { z_points, t_points })
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.z_points.iter().map(|z| z * c).collect(),
            self.t_points.iter().map(|t| t * c).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsdSolution {
    pub t_points: Vec<f64>,
    pub weights: Vec<f64>,
    pub loss_value: f64,
    pub loss_kind: LossKind,
}

impl LsdSolution {
    /// The estimate as a distribution (zero-weight grid points dropped).
    pub fn distribution(&self) -> Result<DiscreteDistribution> {
        DiscreteDistribution::from_weighted(&self.t_points, &self.weights)
    }
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![hi],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// Builds the evaluation and support grids from the non-spiked spectrum.
pub fn build_grid(sample: &SampleSpectrum, m: usize, config: &GridConfig) -> Result<InversionGrid> {
    let p = sample.p();
    let n = sample.n();
    if m >= n.min(p) {
        return Err(Error::Data(format!("m = {m} must be below min(n, p) = {}", n.min(p))));
    }
    let rest = sample.nonspikes(m);
    let positive: Vec<f64> = rest.iter().copied().filter(|&d| d > 0.0).collect();
    if rest.len() < MIN_NONSPIKES || positive.len() < 2 {
        return Err(Error::Data(format!(
            "need at least {MIN_NONSPIKES} non-spiked eigenvalues, have {} ({} positive)",
            rest.len(),
            positive.len()
        )));
    }
    if config.support_points == 0 || config.real_points == 0 || config.imag_factors.is_empty() {
        return Err(Error::Input("grid sizes must be positive".into()));
    }
    let top = positive[0];
    let bottom = *positive.last().expect("non-empty");
    let mean = positive.iter().sum::<f64>() / positive.len() as f64;
    let gamma = sample.gamma();

    let t_lo = (bottom / (1.0 + gamma.sqrt()).powi(2)).max(1e-8 * mean);
    let t_points = linspace(t_lo, top, config.support_points);
    let reals = linspace(0.5 * bottom, 1.1 * top, config.real_points);
    let z_points = config
        .imag_factors
        .iter()
        .flat_map(|&f| reals.iter().map(move |&x| Complex64::new(x, f * mean)))
        .collect();
    InversionGrid::new(z_points, t_points)
}

/// Residual columns `R_jk = 1/v_j + z_j − γ t_k/(1 + t_k v_j)` so that
/// `e_j(w) = Σ_k w_k R_jk` whenever `Σ w = 1`.
struct ResidualSystem {
    /// Stacked real coordinates: `2J × K` (real parts, then imaginary parts).
    matrix: DMatrix<f64>,
    stieltjes: Vec<Complex64>,
}

fn residual_system(sample: &SampleSpectrum, m: usize, grid: &InversionGrid) -> Result<ResidualSystem> {
    let gram = sample.gram_eigenvalues();
    let gamma = sample.gamma();
    let stieltjes: Vec<Complex64> = grid
        .z_points
        .par_iter()
        .map(|&z| companion_stieltjes(&gram, m, z))
        .collect::<Result<_>>()?;
    let j = grid.z_points.len();
    let k = grid.t_points.len();
    let mut matrix = DMatrix::zeros(2 * j, k);
    for (row, (&z, &v)) in grid.z_points.iter().zip(&stieltjes).enumerate() {
        let base = v.inv() + z;
        for (col, &t) in grid.t_points.iter().enumerate() {
            let e = base - gamma * t / (1.0 + t * v);
            matrix[(row, col)] = e.re;
            matrix[(j + row, col)] = e.im;
        }
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite residual coefficient".into()));
    }
    Ok(ResidualSystem { matrix, stieltjes })
}

/// Loss of the weight vector `w` under `kind`.
fn loss_of(matrix: &DMatrix<f64>, w: &[f64], kind: LossKind) -> f64 {
    let r = matrix * DVector::from_column_slice(w);
    let j = r.len() / 2;
    match kind {
        LossKind::Linf => r.iter().fold(0.0f64, |acc, v| acc.max(v.abs())),
        LossKind::L1 => r.iter().map(|v| v.abs()).sum(),
        LossKind::L2 => (0..j).map(|i| r[i] * r[i] + r[j + i] * r[j + i]).sum(),
    }
}

/// Evaluates the loss of arbitrary simplex weights (diagnostics and tests).
pub fn loss_value(sample: &SampleSpectrum, m: usize, grid: &InversionGrid, w: &[f64], kind: LossKind) -> Result<f64> {
    if w.len() != grid.t_points.len() {
        return Err(Error::Dimension { expected: grid.t_points.len(), found: w.len() });
    }
    let sys = residual_system(sample, m, grid)?;
    Ok(loss_of(&sys.matrix, w, kind))
}

fn simplex_lp(matrix: &DMatrix<f64>, kind: LossKind) -> LinearProgram {
    let (rows, k) = matrix.shape();
    // Auxiliary variables: one bound u for L∞, one per coordinate for L1.
    let aux = match kind {
        LossKind::Linf => 1,
        _ => rows,
    };
    let nvar = k + aux;
    let mut a = Vec::with_capacity(2 * rows + 2);
    for r in 0..rows {
        let coeffs: Vec<f64> = (0..k).map(|c| matrix[(r, c)]).collect();
        let slot = k + if aux == 1 { 0 } else { r };
        let mut plus = vec![0.0; nvar];
        let mut minus = vec![0.0; nvar];
        for c in 0..k {
            plus[c] = coeffs[c];
            minus[c] = -coeffs[c];
        }
        plus[slot] = -1.0;
        minus[slot] = -1.0;
        a.push(plus);
        a.push(minus);
    }
    let mut sum_le = vec![0.0; nvar];
    sum_le[..k].fill(1.0);
    let sum_ge: Vec<f64> = sum_le.iter().map(|v| -v).collect();
    a.push(sum_le);
    a.push(sum_ge);
    let mut b = vec![0.0; 2 * rows];
    b.extend([1.0, -1.0]);
    let mut c = vec![0.0; nvar];
    c[k..].fill(1.0);
    LinearProgram { c, a, b }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Accelerated projected gradient for `min wᵀQw` over the simplex.
fn simplex_qp(matrix: &DMatrix<f64>) -> Vec<f64> {
    let k = matrix.ncols();
    let q = matrix.transpose() * matrix;
    let lipschitz = 2.0 * q.clone().symmetric_eigenvalues().max().max(f64::MIN_POSITIVE);
    let step = 1.0 / lipschitz;
    let objective = |w: &DVector<f64>| w.dot(&(&q * w));

    let mut w = DVector::from_element(k, 1.0 / k as f64);
    let mut y = w.clone();
    let mut t = 1.0f64;
    let mut best = (objective(&w), w.clone());
    for _ in 0..20_000 {
        let grad = (&q * &y) * 2.0;
        let mut next: Vec<f64> = (&y - grad * step).iter().copied().collect();
        project_simplex(&mut next);
        let next = DVector::from_vec(next);
        let value = objective(&next);
        if value < best.0 {
            best = (value, next.clone());
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let delta = (&next - &w).norm();
        y = &next + (&next - &w) * momentum;
        w = next;
        t = t_next;
        if delta < 1e-13 {
            break;
        }
    }
    best.1.iter().copied().collect()
}

/// Weights on `grid.t_points` minimizing the chosen loss over the simplex.
pub fn solve_weights(sample: &SampleSpectrum, m: usize, grid: &InversionGrid, loss_kind: LossKind) -> Result<LsdSolution> {
    let sys = residual_system(sample, m, grid)?;
    Ok(solve_system(&sys, grid, loss_kind)?.0)
}

fn solve_system(sys: &ResidualSystem, grid: &InversionGrid, loss_kind: LossKind) -> Result<(LsdSolution, f64)> {
    let k = grid.t_points.len();
    let (mut weights, reported) = match loss_kind {
        LossKind::Linf | LossKind::L1 => {
            // A common positive scale leaves the minimizer unchanged and keeps
            // tableau entries near unity.
            let scale = sys.matrix.amax().max(f64::MIN_POSITIVE);
            let lp = simplex_lp(&(&sys.matrix / scale), loss_kind);
            let sol = solve_via_dual(&lp)?;
            (sol.x[..k].to_vec(), sol.objective * scale)
        }
        LossKind::L2 => {
            let w = simplex_qp(&sys.matrix);
            let value = loss_of(&sys.matrix, &w, LossKind::L2);
            (w, value)
        }
    };
    for w in &mut weights {
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Solver("weight solution is not on the simplex".into()));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    let loss_value = loss_of(&sys.matrix, &weights, loss_kind);
    Ok((LsdSolution { t_points: grid.t_points.clone(), weights, loss_value, loss_kind }, reported))
}

/// Gaussian-kernel smoothing of the weights, re-discretized on the same grid.
///
/// The default bandwidth is Silverman's `1.06 σ̂_w K^{-1/5}`. A non-positive
/// bandwidth returns the estimate unchanged.
pub fn smooth_lsd(solution: &LsdSolution, bandwidth: Option<f64>) -> Result<DiscreteDistribution> {
    let raw = solution.distribution()?;
    let k = solution.t_points.len();
    let h = bandwidth.unwrap_or_else(|| 1.06 * raw.variance().sqrt() * (k as f64).powf(-0.2));
    if !(h > 0.0) || !h.is_finite() {
        return Ok(raw);
    }
    let smoothed: Vec<f64> = solution
        .t_points
        .iter()
        .map(|&t| {
            raw.atoms()
                .map(|(s, w)| {
                    let u = (t - s) / h;
                    w * (-0.5 * u * u).exp()
                })
                .sum()
        })
        .collect();
    DiscreteDistribution::from_weighted(&solution.t_points, &smoothed)
}

/// Mid-point quantiles of `h_hat` as estimates of the `p − m` non-spikes, descending.
pub fn nonspike_quantiles(h_hat: &DiscreteDistribution, p: usize, m: usize) -> Vec<f64> {
    let count = p.saturating_sub(m);
    (1..=count)
        .map(|j| h_hat.quantile((count - j) as f64 / count as f64 + 0.5 / count as f64))
        .collect()
}

/// ψ̂ built on the estimated non-spike distribution.
pub fn psi_model_from_lsd(h_hat: DiscreteDistribution, gamma: f64) -> Result<PsiModel> {
    PsiModel::new(h_hat, gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LsdConfig {
    pub grid: GridConfig,
    pub loss: LossKind,
    /// Apply kernel smoothing before extracting quantiles. Off by default:
    /// the bandwidth inflates the upper tail of Ĥ and with it ψ̂(S_ψ).
    pub smooth: bool,
    /// Kernel bandwidth; `None` selects Silverman's rule.
    pub bandwidth: Option<f64>,
}

impl Default for LsdConfig {
    fn default() -> Self {
        Self { grid: GridConfig::default(), loss: LossKind::Linf, smooth: false, bandwidth: None }
    }
}

/// Everything produced by one LSD fit.
#[derive(Debug, Clone)]
pub struct LsdFit {
    pub grid: InversionGrid,
    pub solution: LsdSolution,
    /// The distribution the quantiles were drawn from (smoothed or raw).
    pub estimate: DiscreteDistribution,
    /// Estimated non-spikes, descending, length `p − m`.
    pub nonspikes: Vec<f64>,
    pub psi_model: PsiModel,
    stieltjes: Vec<Complex64>,
    residuals: Vec<Complex64>,
}

/// Full pipeline: grid, weights, optional smoothing, quantiles and ψ̂.
pub fn fit_lsd(sample: &SampleSpectrum, m: usize, config: &LsdConfig) -> Result<LsdFit> {
    let grid = build_grid(sample, m, &config.grid)?;
    let sys = residual_system(sample, m, &grid)?;
    let (solution, _) = solve_system(&sys, &grid, config.loss)?;
    let estimate = if config.smooth {
        smooth_lsd(&solution, config.bandwidth)?
    } else {
        solution.distribution()?
    };
    let nonspikes = nonspike_quantiles(&estimate, sample.p(), m);
    let psi_model = psi_model_from_lsd(DiscreteDistribution::empirical(&nonspikes)?, sample.gamma())?;
    let r = &sys.matrix * DVector::from_column_slice(&solution.weights);
    let j = grid.z_points.len();
    let residuals = (0..j).map(|i| Complex64::new(r[i], r[j + i])).collect();
    Ok(LsdFit { grid, solution, estimate, nonspikes, psi_model, stieltjes: sys.stieltjes, residuals })
}

/// JSON diagnostic dump of one fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LsdDiagnostics {
    pub schema: String,
    pub loss_kind: LossKind,
    pub loss_value: f64,
    pub z: Vec<[f64; 2]>,
    pub stieltjes: Vec<[f64; 2]>,
    pub residuals: Vec<[f64; 2]>,
    pub t_points: Vec<f64>,
    pub weights: Vec<f64>,
    pub estimate: DiscreteDistribution,
    pub s_psi: f64,
    pub psi_at_s_psi: f64,
}

impl LsdFit {
    pub fn diagnostics(&self) -> LsdDiagnostics {
        let pair = |z: &Complex64| [z.re, z.im];
        LsdDiagnostics {
            schema: crate::SCHEMA.to_string(),
            loss_kind: self.solution.loss_kind,
            loss_value: self.solution.loss_value,
            z: self.grid.z_points.iter().map(pair).collect(),
            stieltjes: self.stieltjes.iter().map(pair).collect(),
            residuals: self.residuals.iter().map(pair).collect(),
            t_points: self.solution.t_points.clone(),
            weights: self.solution.weights.clone(),
            estimate: self.estimate.clone(),
            s_psi: self.psi_model.s_psi(),
            psi_at_s_psi: self.psi_model.psi_at_s_psi(),
        }
    }
}
