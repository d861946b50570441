//! Population designs: Gaussian mixtures over an AR(1) covariance, plus an
//! optional block of planted spikes, with their exact ground truth.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pca::sorted_symmetric_eigen;
use crate::spectrum::{DiscreteDistribution, PsiModel};

/// Largest dimension for which the mixture covariance is eigendecomposed densely.
pub const DENSE_BUDGET: usize = 4000;

fn default_atoms() -> Vec<f64> {
    vec![-0.3, 0.0, 0.3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub p: usize,
    pub group_sizes: Vec<usize>,
    /// Group-mean coordinates are drawn uniformly with replacement from these.
    #[serde(default = "default_atoms")]
    pub mean_atoms: Vec<f64>,
    pub ar_sigma2: f64,
    pub ar_rho: f64,
    pub seed: u64,
    /// Extra spikes on coordinates independent of the AR block.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub planted_spikes: Vec<f64>,
}

impl PopulationSpec {
    pub fn n(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn gamma(&self) -> f64 {
        self.p as f64 / self.n() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.group_sizes.is_empty() || self.group_sizes.contains(&0) {
            return Err(Error::Input("dimension and group sizes must be positive".into()));
        }
        if !(self.ar_sigma2 > 0.0 && self.ar_sigma2.is_finite()) {
            return Err(Error::Input(format!("ar_sigma2 must be positive, got {}", self.ar_sigma2)));
        }
        if !(0.0..1.0).contains(&self.ar_rho) {
            return Err(Error::Input(format!("ar_rho must lie in [0, 1), got {}", self.ar_rho)));
        }
        if self.mean_atoms.is_empty() || self.mean_atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::Input("mean_atoms must be a non-empty list of reals".into()));
        }
        if !self.planted_spikes.is_empty() {
            if self.group_sizes.len() > 1 {
                return Err(Error::Input("planted spikes are supported for a single group only".into()));
            }
            if self.planted_spikes.len() >= self.p {
                return Err(Error::Input("more planted spikes than dimensions".into()));
            }
            if self.planted_spikes.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::Input("planted spikes must be positive".into()));
            }
        }
        Ok(())
    }

    /// Dimension of the AR(1) block.
    fn ar_dim(&self) -> usize {
        self.p - self.planted_spikes.len()
    }
}

/// Exact population quantities for a [`PopulationSpec`].
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Spikes, descending.
    pub true_spikes: Vec<f64>,
    /// The remaining `p − r` population eigenvalues, descending.
    pub nonspike_eigenvalues: Vec<f64>,
    pub true_nonspike_edge: f64,
    /// `p × r` eigenvectors of the spikes.
    pub population_eigvecs: DMatrix<f64>,
    /// Group means (length-`p` vectors); planted coordinates are zero.
    pub group_means: Vec<DVector<f64>>,
    proportions: Vec<f64>,
    /// Group means minus the weighted grand mean.
    centered_means: Vec<DVector<f64>>,
    spec: PopulationSpec,
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with
/// Wilkinson shifts, ascending.
pub fn tridiagonal_eigenvalues(mut diag: Vec<f64>, off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(diag);
    }
    if off.len() + 1 != n {
        return Err(Error::Dimension { expected: n - 1, found: off.len() });
    }
    let mut e = off.to_vec();
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Convergence("tridiagonal QL did not converge".into()));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    diag.sort_by(f64::total_cmp);
    Ok(diag)
}

/// Eigenvalues of the `dim × dim` AR(1) covariance `σ²ρ^{|i−j|}`, descending,
/// through its tridiagonal inverse.
pub fn ar1_eigenvalues(dim: usize, sigma2: f64, rho: f64) -> Result<Vec<f64>> {
    if dim == 0 {
        return Ok(Vec::new());
    }
    if dim == 1 || rho == 0.0 {
        return Ok(vec![sigma2; dim]);
    }
    let mut diag = vec![1.0 + rho * rho; dim];
    diag[0] = 1.0;
    diag[dim - 1] = 1.0;
    let off = vec![-rho; dim - 1];
    let scale = sigma2 * (1.0 - rho * rho);
    let mut values: Vec<f64> = tridiagonal_eigenvalues(diag, &off)?.into_iter().map(|t| scale / t).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Dense AR(1) covariance matrix.
pub fn ar1_covariance(dim: usize, sigma2: f64, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| sigma2 * rho.powi(i.abs_diff(j) as i32))
}

/// `V v` for the AR(1) covariance in `O(dim)` via forward/backward recursions.
fn ar1_apply(v: &[f64], sigma2: f64, rho: f64) -> Vec<f64> {
    let dim = v.len();
    let mut forward = vec![0.0; dim];
    let mut acc = 0.0;
    for i in 0..dim {
        acc = v[i] + rho * acc;
        forward[i] = acc;
    }
    let mut out = vec![0.0; dim];
    let mut back = 0.0;
    for i in (0..dim).rev() {
        out[i] = sigma2 * (forward[i] + back);
        back = rho * (v[i] + back);
    }
    out
}

fn mean_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// Independent generator for replicate `rep`.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep + 1);
    rng
}

/// Draws group means and computes the exact spikes and non-spikes of the
/// mixture covariance `V + Σ_g π_g (μ_g − μ̄)(μ_g − μ̄)ᵀ`.
pub fn build_population(spec: &PopulationSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let p = spec.p;
    let ar_dim = spec.ar_dim();
    let n = spec.n() as f64;
    let proportions: Vec<f64> = spec.group_sizes.iter().map(|&g| g as f64 / n).collect();

    let mut rng = mean_rng(spec.seed);
    let group_means: Vec<DVector<f64>> = spec
        .group_sizes
        .iter()
        .map(|_| {
            DVector::from_fn(p, |j, _| {
                if j < ar_dim {
                    spec.mean_atoms[rng.random_range(0..spec.mean_atoms.len())]
                } else {
                    0.0
                }
            })
        })
        .collect();
    let grand: DVector<f64> = group_means
        .iter()
        .zip(&proportions)
        .fold(DVector::zeros(p), |acc, (m, &w)| acc + m * w);
    let centered_means: Vec<DVector<f64>> = group_means.iter().map(|m| m - &grand).collect();

    // Rank of the between-group matrix from the small weighted Gram matrix.
    let k = centered_means.len();
    let small = DMatrix::from_fn(k, k, |a, b| {
        (proportions[a] * proportions[b]).sqrt() * centered_means[a].dot(&centered_means[b])
    });
    let small_eigs = small.symmetric_eigenvalues();
    let top_small = small_eigs.iter().fold(0.0f64, |a, &b| a.max(b));
    let between_rank = small_eigs.iter().filter(|&&v| v > 1e-10 * top_small.max(1e-300)).count();

    let ar_values = ar1_eigenvalues(ar_dim, spec.ar_sigma2, spec.ar_rho)?;
    let ar_max = ar_values[0];

    let (true_spikes, nonspike_eigenvalues, population_eigvecs) = if between_rank == 0 {
        let mut planted: Vec<(f64, usize)> =
            spec.planted_spikes.iter().enumerate().map(|(i, &s)| (s, ar_dim + i)).collect();
        planted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut spikes = Vec::new();
        let mut vecs = Vec::new();
        let mut rest = ar_values.clone();
        for (value, coord) in planted {
            if value > ar_max {
                spikes.push(value);
                let mut e = DVector::zeros(p);
                e[coord] = 1.0;
                vecs.push(e);
            } else {
                rest.push(value);
            }
        }
        rest.sort_by(|a, b| b.total_cmp(a));
        let eigvecs = if vecs.is_empty() { DMatrix::zeros(p, 0) } else { DMatrix::from_columns(&vecs) };
        (spikes, rest, eigvecs)
    } else {
        if p > DENSE_BUDGET {
            return Err(Error::Budget(format!(
                "mixture ground truth needs a dense {p} x {p} eigensolve (limit {DENSE_BUDGET})"
            )));
        }
        let mut sigma = ar1_covariance(p, spec.ar_sigma2, spec.ar_rho);
        for (c, &w) in centered_means.iter().zip(&proportions) {
            sigma.ger(w, c, c, 1.0);
        }
        let (values, vectors) = sorted_symmetric_eigen(sigma);
        let r = (0..between_rank).take_while(|&i| values[i] > ar_max * (1.0 + 1e-9)).count();
        (values[..r].to_vec(), values[r..].to_vec(), vectors.columns(0, r).into_owned())
    };
    let true_nonspike_edge = nonspike_eigenvalues[0];
    Ok(GroundTruth {
        true_spikes,
        nonspike_eigenvalues,
        true_nonspike_edge,
        population_eigvecs,
        group_means,
        proportions,
        centered_means,
        spec: spec.clone(),
    })
}

impl GroundTruth {
    pub fn spike_count(&self) -> usize {
        self.true_spikes.len()
    }

    pub fn spec(&self) -> &PopulationSpec {
        &self.spec
    }

    /// Exact ψ with `H` the ESD of the non-spiked population eigenvalues.
    pub fn psi_model(&self, gamma: f64) -> Result<PsiModel> {
        PsiModel::new(DiscreteDistribution::empirical(&self.nonspike_eigenvalues)?, gamma)
    }

    /// `Σ v` without forming Σ.
    pub fn covariance_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let spec = &self.spec;
        let ar_dim = spec.ar_dim();
        let mut out = ar1_apply(&v.as_slice()[..ar_dim], spec.ar_sigma2, spec.ar_rho);
        out.extend(spec.planted_spikes.iter().enumerate().map(|(i, s)| s * v[ar_dim + i]));
        let mut out = DVector::from_vec(out);
        for (c, &w) in self.centered_means.iter().zip(&self.proportions) {
            out.axpy(w * c.dot(v), c, 1.0);
        }
        out
    }
}

/// Draws the `n × p` data matrix for replicate `rep`; rows are ordered by group.
pub fn draw_sample(spec: &PopulationSpec, truth: &GroundTruth, rep: u64) -> DMatrix<f64> {
    let mut rng = replicate_rng(spec.seed, rep);
    draw_with(spec, truth, &mut rng)
}

pub(crate) fn draw_with<R: Rng>(spec: &PopulationSpec, truth: &GroundTruth, rng: &mut R) -> DMatrix<f64> {
    let p = spec.p;
    let ar_dim = spec.ar_dim();
    let sigma = spec.ar_sigma2.sqrt();
    let rho = spec.ar_rho;
    let innovation = sigma * (1.0 - rho * rho).sqrt();
    let n = spec.n();
    let mut values = Vec::with_capacity(n * p);
    for (g, &size) in spec.group_sizes.iter().enumerate() {
        let mean = &truth.group_means[g];
        for _ in 0..size {
            let mut prev = 0.0;
            for j in 0..ar_dim {
                let z: f64 = rng.sample(StandardNormal);
                prev = if j == 0 { sigma * z } else { rho * prev + innovation * z };
                values.push(mean[j] + prev);
            }
            for s in &spec.planted_spikes {
                let z: f64 = rng.sample(StandardNormal);
                values.push(s.sqrt() * z);
            }
        }
    }
    DMatrix::from_row_iterator(n, p, values)
}
