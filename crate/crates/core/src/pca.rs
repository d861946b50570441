//! Sample PCA through the `n × n` Gram matrix, PC-score prediction and
//! shrinkage adjustment of predicted scores.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::SampleSpectrum;

/// Eigenvalues below this fraction of the largest are numerically zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Eigenvalues of `XᵀX/n`, descending, length `min(n, p)`.
    pub eigenvalues: Vec<f64>,
    /// `p × r`, orthonormal columns.
    pub eigenvectors: DMatrix<f64>,
    pub center: DVector<f64>,
    pub scale: Option<DVector<f64>>,
    pub n: usize,
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    /// Rows are observations, columns components.
    pub scores: DMatrix<f64>,
    /// Columns divided by `√(n d_k)`.
    pub normalized: bool,
}

/// Flips `v` so its largest-magnitude coordinate is positive.
fn fix_sign(mut v: DVector<f64>) -> DVector<f64> {
    let idx = v.iamax();
    if v[idx] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue.
pub fn sorted_symmetric_eigen(matrix: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

impl PcaModel {
    /// Centers (and optionally standardizes) the columns of the `n × p`
    /// data matrix and computes the top `r` components via `XXᵀ/n`.
    pub fn fit(data: &DMatrix<f64>, r: usize, standardize: bool) -> Result<Self> {
        let (n, p) = data.shape();
        if n < 2 {
            return Err(Error::Data(format!("PCA needs at least two observations, got {n}")));
        }
        if r > n.min(p) {
            return Err(Error::Rank { requested: r, rank: n.min(p) });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("data contain non-finite values".into()));
        }
        let center = data.row_mean().transpose();
        let mut x = data.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(-center[j]);
        }
        let scale = if standardize {
            let mut s = DVector::zeros(p);
            for (j, mut col) in x.column_iter_mut().enumerate() {
                let sd = (col.norm_squared() / n as f64).sqrt();
                if !(sd > 0.0) {
                    return Err(Error::Data(format!("column {j} has zero variance")));
                }
                col /= sd;
                s[j] = sd;
            }
            Some(s)
        } else {
            None
        };

        let gram = (&x * x.transpose()) / n as f64;
        let (mut values, vectors) = sorted_symmetric_eigen(gram);
        values.truncate(n.min(p));
        let top = values.first().copied().unwrap_or(0.0).max(0.0);
        for v in &mut values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let rank = values.iter().filter(|&&v| v > RANK_TOL * top).count();
        if r > rank {
            return Err(Error::Rank { requested: r, rank });
        }

        let mut eigenvectors = DMatrix::zeros(p, r);
        for k in 0..r {
            let u = vectors.column(k);
            let e = x.tr_mul(&u) / (n as f64 * values[k]).sqrt();
            let e = fix_sign(e.normalize());
            eigenvectors.set_column(k, &e);
        }
        Ok(Self { eigenvalues: values, eigenvectors, center, scale, n, p })
    }

    pub fn components(&self) -> usize {
        self.eigenvectors.ncols()
    }

    /// The sample spectrum `d₁ ≥ … ≥ d_p` (zero-padded when `p > n`).
    pub fn sample_spectrum(&self) -> Result<SampleSpectrum> {
        SampleSpectrum::from_leading(self.eigenvalues.clone(), self.n, self.p)
    }

    fn transform(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if data.ncols() != self.p {
            return Err(Error::Dimension { expected: self.p, found: data.ncols() });
        }
        let mut x = data.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.center[j]);
            if let Some(scale) = &self.scale {
                col /= scale[j];
            }
        }
        Ok(x)
    }

    /// Scores `q_k = (x − center)ᵀ e_k` of new observations (rows).
    pub fn predict_scores(&self, new_data: &DMatrix<f64>) -> Result<ScoreSet> {
        let x = self.transform(new_data)?;
        Ok(ScoreSet { scores: x * &self.eigenvectors, normalized: false })
    }

    /// Training scores divided by `√(n d_k)`; each column has unit norm.
    pub fn normalized_scores(&self, training: &DMatrix<f64>) -> Result<ScoreSet> {
        let mut scores = self.predict_scores(training)?.scores;
        for (k, mut col) in scores.column_iter_mut().enumerate() {
            col /= (self.n as f64 * self.eigenvalues[k]).sqrt();
        }
        Ok(ScoreSet { scores, normalized: true })
    }
}

/// See [`PcaModel::fit`].
pub fn fit_pca(data: &DMatrix<f64>, r: usize, standardize: bool) -> Result<PcaModel> {
    PcaModel::fit(data, r, standardize)
}

/// See [`PcaModel::predict_scores`].
pub fn predict_scores(model: &PcaModel, new_data: &DMatrix<f64>) -> Result<ScoreSet> {
    model.predict_scores(new_data)
}

/// Divides each score column by its shrinkage factor `ρ̂_k ∈ (0, 1]`.
pub fn adjust_scores(predicted: &ScoreSet, shrinkage: &[f64]) -> Result<ScoreSet> {
    if shrinkage.len() != predicted.scores.ncols() {
        return Err(Error::Dimension { expected: predicted.scores.ncols(), found: shrinkage.len() });
    }
    if let Some(bad) = shrinkage.iter().find(|&&r| !(r > 0.0 && r <= 1.0 + 1e-6)) {
        return Err(Error::Domain(format!("shrinkage factor {bad} is outside (0, 1]")));
    }
    let mut scores = predicted.scores.clone();
    for (mut col, &rho) in scores.column_iter_mut().zip(shrinkage) {
        col /= rho;
    }
    Ok(ScoreSet { scores, normalized: predicted.normalized })
}
