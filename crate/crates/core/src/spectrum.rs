//! Spectral primitives over discrete spectral distributions.
//!
//! For a population spectral distribution `H` (non-spiked eigenvalues) and
//! aspect ratio `γ = p/n` the spike-forward map is
//!
//! ```text
//! ψ(α)  = α + γ α Σ_k w_k t_k / (α − t_k)
//! ψ'(α) = 1 − γ Σ_k w_k (t_k / (α − t_k))²
//! ```
//!
//! defined for `α` above the largest atom. `ψ'` is strictly increasing there
//! and has a unique root `S_ψ`; `(S_ψ, ∞)` is the domain of distant spikes and
//! `ψ` is invertible on it. The sample-side functionals `f_F` and `g_F` are
//! evaluated directly on sample eigenvalues, with the top `m` excluded.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const MAX_ITER: usize = 200;
/// Upper end of the fallback bisection bracket, as a multiple of the max atom.
const BRACKET_SPAN: f64 = 1e6;
/// Relative pole tolerance for `f_g_eval`.
pub const POLE_TOL: f64 = 1e-8;

/// A weighted point-mass distribution on the positive reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct DiscreteDistribution {
    locations: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    /// Builds a distribution from `(location, weight)` atoms.
    ///
    /// Locations must be strictly increasing and positive, weights positive
    /// and summing to one within `1e-12`.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Data("distribution has no atoms".into()));
        }
        let mut sum = 0.0;
        for (i, &(t, w)) in atoms.iter().enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Data(format!("atom location {t} is not a positive real")));
            }
            if !(w.is_finite() && w > 0.0 && w <= 1.0) {
                return Err(Error::Data(format!("atom weight {w} is outside (0, 1]")));
            }
            if i > 0 && t <= atoms[i - 1].0 {
                return Err(Error::Data("atom locations must be strictly increasing".into()));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Data(format!("atom weights sum to {sum}, not 1")));
        }
        let (locations, weights) = atoms.into_iter().unzip();
        Ok(Self { locations, weights })
    }

    /// Normalizes arbitrary non-negative weights, merging equal locations and
    /// dropping zero-weight atoms.
    pub fn from_weighted(points: &[f64], weights: &[f64]) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Dimension { expected: points.len(), found: weights.len() });
        }
        let mut atoms: Vec<(f64, f64)> = points
            .iter()
            .zip(weights)
            .filter(|&(_, &w)| w > 0.0)
            .map(|(&t, &w)| (t, w))
            .collect();
        if atoms.iter().any(|&(_, w)| !w.is_finite()) {
            return Err(Error::Data("non-finite weight".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (t, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == t => last.1 += w,
                _ => merged.push((t, w)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if merged.is_empty() || total <= 0.0 {
            return Err(Error::Data("distribution has no positive weight".into()));
        }
        for atom in &mut merged {
            atom.1 /= total;
        }
        // Renormalize once more so the sum lands within rounding of 1.
        let total: f64 = merged.iter().map(|a| a.1).sum();
        for atom in &mut merged {
            atom.1 /= total;
        }
        Self::new(merged)
    }

    /// Equal-weight distribution over `values` (the empirical spectral distribution).
    pub fn empirical(values: &[f64]) -> Result<Self> {
        Self::from_weighted(values, &vec![1.0; values.len()])
    }

    pub fn point_mass(location: f64) -> Result<Self> {
        Self::new(vec![(location, 1.0)])
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.locations.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn max_location(&self) -> f64 {
        *self.locations.last().expect("non-empty")
    }

    pub fn min_location(&self) -> f64 {
        self.locations[0]
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(t, w)| t * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.atoms().map(|(t, w)| w * (t - mean).powi(2)).sum()
    }

    /// `H(x) = P(T ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let idx = self.locations.partition_point(|&t| t <= x);
        self.weights[..idx].iter().sum::<f64>().min(1.0)
    }

    /// Left-continuous quantile `inf{x : H(x) ≥ level}`.
    pub fn quantile(&self, level: f64) -> f64 {
        let mut acc = 0.0;
        for (t, w) in self.atoms() {
            acc += w;
            // Slack absorbs rounding in the cumulative sum.
            if acc >= level - 1e-12 {
                return t;
            }
        }
        self.max_location()
    }

    /// Kolmogorov (sup-CDF) distance between two discrete distributions.
    pub fn kolmogorov_distance(&self, other: &Self) -> f64 {
        let mut points: Vec<f64> = self.locations.iter().chain(&other.locations).copied().collect();
        points.sort_by(f64::total_cmp);
        points
            .iter()
            .map(|&x| (self.cdf(x) - other.cdf(x)).abs())
            .fold(0.0, f64::max)
    }

    /// Multiplies every location by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.locations.iter().map(|t| t * c).zip(self.weights.iter().copied()).collect())
    }
}

impl TryFrom<Vec<(f64, f64)>> for DiscreteDistribution {
    type Error = Error;

    fn try_from(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(atoms)
    }
}

impl From<DiscreteDistribution> for Vec<(f64, f64)> {
    fn from(dist: DiscreteDistribution) -> Self {
        dist.locations.into_iter().zip(dist.weights).collect()
    }
}

/// Sorted sample-covariance eigenvalues together with the sample size.
///
/// Holds all `p` eigenvalues of `XᵀX/n`; when `p > n` the trailing `p − n`
/// zeros are stored explicitly so that `1/(p − m)` weights match the ESD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpectrum {
    d: Vec<f64>,
    n: usize,
}

impl SampleSpectrum {
    /// `d` must hold all `p` eigenvalues in non-increasing order. Round-off
    /// negatives down to `-1e-10 · d₁` are clamped to zero.
    pub fn new(mut d: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Data("sample size n must be positive".into()));
        }
        if d.is_empty() {
            return Err(Error::Data("no eigenvalues supplied".into()));
        }
        let scale = d[0].abs().max(f64::MIN_POSITIVE);
        for (i, v) in d.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::Data(format!("eigenvalue {i} is not finite")));
            }
            if *v < 0.0 {
                if *v < -1e-10 * scale {
                    return Err(Error::Data(format!("eigenvalue {i} is negative ({v})")));
                }
                *v = 0.0;
            }
        }
        if d.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Data("eigenvalues must be sorted in non-increasing order".into()));
        }
        let p = d.len();
        let positive = d.iter().filter(|&&v| v > 0.0).count();
        if positive > n.min(p) {
            return Err(Error::Data(format!(
                "{positive} positive eigenvalues exceed min(n, p) = {}",
                n.min(p)
            )));
        }
        Ok(Self { d, n })
    }

    /// Builds the full spectrum from the leading Gram eigenvalues, padding
    /// zeros up to dimension `p`.
    pub fn from_leading(mut leading: Vec<f64>, n: usize, p: usize) -> Result<Self> {
        if leading.len() > p {
            return Err(Error::Data(format!(
                "{} eigenvalues supplied for dimension p = {p}",
                leading.len()
            )));
        }
        leading.resize(p, 0.0);
        Self::new(leading, n)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.d.len()
    }

    pub fn gamma(&self) -> f64 {
        self.p() as f64 / self.n as f64
    }

    /// The `n` eigenvalues of the Gram matrix `XXᵀ/n`: the leading
    /// `min(n, p)` sample eigenvalues, zero-padded to length `n`.
    pub fn gram_eigenvalues(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.d.iter().take(self.n).copied().collect();
        out.resize(self.n, 0.0);
        out
    }

    /// Eigenvalues with index `> m` (1-based), i.e. with the top `m` removed.
    pub fn nonspikes(&self, m: usize) -> &[f64] {
        &self.d[m.min(self.d.len())..]
    }

    /// Scales every eigenvalue by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.d.iter().map(|v| v * c).collect(), self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Boundary {
    /// ψ' has a root `s_psi` above the support.
    Root { s_psi: f64, psi_at_s_psi: f64 },
    /// γ = 0: ψ is the identity and every point above the support is distant.
    NoDistortion,
}

/// The spike-forward map ψ for a population LSD of non-spikes and aspect ratio γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiModel {
    nonspikes: DiscreteDistribution,
    gamma: f64,
    boundary: Boundary,
}

impl PsiModel {
    /// Builds the model and caches `S_ψ` and `ψ(S_ψ)`.
    pub fn new(nonspikes: DiscreteDistribution, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Domain(format!("gamma must be a non-negative real, got {gamma}")));
        }
        let mut model = Self { nonspikes, gamma, boundary: Boundary::NoDistortion };
        if gamma > 0.0 {
            let s_psi = s_psi_root(&model)?;
            let (psi_at_s_psi, _) = psi_eval(&model, s_psi)?;
            model.boundary = Boundary::Root { s_psi, psi_at_s_psi };
        }
        Ok(model)
    }

    pub fn nonspikes(&self) -> &DiscreteDistribution {
        &self.nonspikes
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `S_ψ`, or `+∞` when γ = 0 (no distortion).
    pub fn s_psi(&self) -> f64 {
        match self.boundary {
            Boundary::Root { s_psi, .. } => s_psi,
            Boundary::NoDistortion => f64::INFINITY,
        }
    }

    /// `ψ(S_ψ)`, or `+∞` when γ = 0.
    pub fn psi_at_s_psi(&self) -> f64 {
        match self.boundary {
            Boundary::Root { psi_at_s_psi, .. } => psi_at_s_psi,
            Boundary::NoDistortion => f64::INFINITY,
        }
    }

    pub fn is_no_distortion(&self) -> bool {
        matches!(self.boundary, Boundary::NoDistortion)
    }

    /// Smallest sample eigenvalue limit that identifies a distant spike:
    /// `ψ(S_ψ)`, or the largest atom when γ = 0.
    pub fn distant_threshold(&self) -> f64 {
        match self.boundary {
            Boundary::Root { psi_at_s_psi, .. } => psi_at_s_psi,
            Boundary::NoDistortion => self.nonspikes.max_location(),
        }
    }

    /// Lower end of the distant-spike domain.
    pub fn domain_start(&self) -> f64 {
        match self.boundary {
            Boundary::Root { s_psi, .. } => s_psi,
            Boundary::NoDistortion => self.nonspikes.max_location(),
        }
    }

    /// ψ and ψ′ at `alpha`; see [`psi_eval`].
    pub fn eval(&self, alpha: f64) -> Result<(f64, f64)> {
        psi_eval(self, alpha)
    }

    /// ψ⁻¹(d); see [`psi_inverse`].
    pub fn inverse(&self, d: f64) -> Result<f64> {
        psi_inverse(self, d)
    }
}

/// Raw sums `(Σ w t/(α−t), Σ w (t/(α−t))², Σ w t²/(α−t)³)` for `α` above the support.
fn psi_sums(dist: &DiscreteDistribution, alpha: f64) -> (f64, f64, f64) {
    dist.atoms().fold((0.0, 0.0, 0.0), |(s1, s2, s3), (t, w)| {
        let r = t / (alpha - t);
        (s1 + w * r, s2 + w * r * r, s3 + w * r * r / (alpha - t))
    })
}

fn check_above_support(model: &PsiModel, alpha: f64) -> Result<()> {
    let max = model.nonspikes.max_location();
    if !(alpha > max) || !alpha.is_finite() {
        return Err(Error::Domain(format!(
            "psi is evaluated above the support; alpha = {alpha} but max atom = {max}"
        )));
    }
    Ok(())
}

/// `(ψ(α), ψ′(α))` for `α` strictly above the largest non-spike atom.
pub fn psi_eval(model: &PsiModel, alpha: f64) -> Result<(f64, f64)> {
    check_above_support(model, alpha)?;
    let (s1, s2, _) = psi_sums(&model.nonspikes, alpha);
    Ok((alpha + model.gamma * alpha * s1, 1.0 - model.gamma * s2))
}

/// Root of ψ′ above the support.
///
/// Safeguarded Newton iteration on ψ′ (analytic ψ″ as slope) started at
/// `1.5 · max atom`. Whenever a step leaves the current bracket, or after
/// `MAX_ITER` Newton steps, the iteration bisects instead; ψ′ is strictly
/// increasing on the bracket so this always converges.
pub fn s_psi_root(model: &PsiModel) -> Result<f64> {
    let gamma = model.gamma;
    if !(gamma > 0.0) {
        return Err(Error::Domain("S_psi exists only for gamma > 0".into()));
    }
    let dist = &model.nonspikes;
    let max = dist.max_location();
    let dpsi = |a: f64| {
        let (_, s2, s3) = psi_sums(dist, a);
        (1.0 - gamma * s2, 2.0 * gamma * s3)
    };

    let mut lo = max * (1.0 + 1e-9);
    let mut hi = max * 1.5;
    while dpsi(hi).0 <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > max * BRACKET_SPAN {
            return Err(Error::Convergence(format!(
                "psi' stays non-positive up to {hi}; gamma = {gamma} too large for the bracket"
            )));
        }
    }
    if dpsi(lo).0 >= 0.0 {
        // Root is pinned against the pole within rounding.
        return Ok(lo);
    }

    let mut x = max * 1.5;
    if !(x > lo && x <= hi) {
        x = 0.5 * (lo + hi);
    }
    for iter in 0..4 * MAX_ITER {
        let (f, slope) = dpsi(x);
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - f / slope;
        let next = if iter < MAX_ITER && slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Convergence(format!("S_psi iteration exceeded {} steps", 4 * MAX_ITER)))
}

/// Left inverse of ψ on `(S_ψ, ∞)`.
///
/// Newton seeded with the spiked-population closed-form inverse at
/// `ζ = mean(H)`, safeguarded by the bracket `[S_ψ, d]` (ψ(α) ≥ α there).
pub fn psi_inverse(model: &PsiModel, d: f64) -> Result<f64> {
    if !d.is_finite() {
        return Err(Error::Domain(format!("cannot invert psi at {d}")));
    }
    let threshold = model.distant_threshold();
    if !(d > threshold) {
        return Err(Error::NotDistantSpike { value: d, threshold });
    }
    if model.is_no_distortion() {
        return Ok(d);
    }
    let psi = |a: f64| psi_eval(model, a).expect("bracket lies above the support");

    let mut lo = model.s_psi();
    let mut hi = d;
    let zeta = model.nonspikes.mean();
    let seed = sp_inverse(d, zeta, model.gamma);
    let mut x = match seed {
        Some(s) if s > lo && s < hi => s,
        _ => 0.5 * (lo + hi),
    };
    for iter in 0..4 * MAX_ITER {
        let (value, slope) = psi(x);
        let f = value - d;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - f / slope;
        let next = if iter < MAX_ITER && slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Convergence(format!("psi inverse at {d} exceeded {} steps", 4 * MAX_ITER)))
}

/// Spiked-population inverse: the larger root of `β² − (d + ζ(1 − γ))β + ζd = 0`,
/// written in units of ζ. `None` when `d` lies below the BBP image `ζ(1+√γ)²`.
pub fn sp_inverse(d: f64, zeta: f64, gamma: f64) -> Option<f64> {
    let dn = d / zeta;
    let b = dn + 1.0 - gamma;
    let disc = b * b - 4.0 * dn;
    if disc < 0.0 || b <= 0.0 {
        return None;
    }
    Some(zeta * 0.5 * (b + disc.sqrt()))
}

/// Sample-side `(f_F(x), g_F(x))` from the eigenvalues ranked below the top `m`.
///
/// ```text
/// f = x / (1 + γ/(p−m) Σ_{i>m} d_i/(x−d_i))
/// g = 1 / (1 + γ f/(p−m) Σ_{i>m} d_i/(x−d_i)²)
/// ```
pub fn f_g_eval(sample: &SampleSpectrum, m: usize, x: f64) -> Result<(f64, f64)> {
    let p = sample.p();
    if m >= p {
        return Err(Error::Domain(format!("m = {m} must be smaller than p = {p}")));
    }
    let rest = sample.nonspikes(m);
    let pole = rest[0];
    if !x.is_finite() || x - pole < POLE_TOL * x.max(1.0) {
        return Err(Error::Separation { x, pole });
    }
    let (s1, s2) = rest.iter().filter(|&&di| di > 0.0).fold((0.0, 0.0), |(s1, s2), &di| {
        let gap = x - di;
        (s1 + di / gap, s2 + di / (gap * gap))
    });
    let scale = sample.gamma() / (p - m) as f64;
    let f = x / (1.0 + scale * s1);
    let g = 1.0 / (1.0 + scale * f * s2);
    Ok((f, g))
}

/// Companion Stieltjes transform `1/(n−m) Σ_{i>m} 1/(d_i − z)` over the `n`
/// Gram eigenvalues (descending) with the top `m` excluded.
pub fn companion_stieltjes(gram_eigs: &[f64], m: usize, z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 || !z.im.is_finite() || !z.re.is_finite() {
        return Err(Error::Domain(format!("companion transform needs Im(z) != 0, got {z}")));
    }
    let n = gram_eigs.len();
    if m >= n {
        return Err(Error::Domain(format!("m = {m} must be smaller than n = {n}")));
    }
    let sum: Complex64 = gram_eigs[m..].iter().map(|&d| (Complex64::new(d, 0.0) - z).inv()).sum();
    Ok(sum / (n - m) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_atom() -> DiscreteDistribution {
        DiscreteDistribution::new(vec![(1.0, 0.5), (3.0, 0.5)]).unwrap()
    }

    fn model(dist: DiscreteDistribution, gamma: f64) -> PsiModel {
        PsiModel::new(dist, gamma).unwrap()
    }

    /// Midpoint-rule quadrature of ∫ t/(α−t) dH for H spread uniformly on
    /// tiny intervals around each atom; converges to the atom sum.
    fn quadrature_psi(atoms: &[(f64, f64)], gamma: f64, alpha: f64) -> (f64, f64) {
        let (mut s1, mut s2) = (0.0, 0.0);
        let steps = 20_000;
        let half = 1e-6;
        for &(t, w) in atoms {
            for i in 0..steps {
                let u = t - half + (i as f64 + 0.5) * (2.0 * half / steps as f64);
                let r = u / (alpha - u);
                s1 += w / steps as f64 * r;
                s2 += w / steps as f64 * r * r;
            }
        }
        (alpha + gamma * alpha * s1, 1.0 - gamma * s2)
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![(1.0, 0.5), (1.0, 0.5)]).is_err());
        assert!(DiscreteDistribution::new(vec![(0.0, 1.0)]).is_err());
        assert!(DiscreteDistribution::new(vec![(1.0, 0.6), (2.0, 0.6)]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
        let d = DiscreteDistribution::from_weighted(&[3.0, 1.0, 3.0, 2.0], &[1.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(d.locations(), &[1.0, 3.0]);
        assert_relative_eq!(d.weights()[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn cdf_quantile_and_distance() {
        let h = two_atom();
        assert_eq!(h.cdf(0.5), 0.0);
        assert_eq!(h.cdf(1.0), 0.5);
        assert_eq!(h.cdf(3.5), 1.0);
        assert_eq!(h.quantile(0.5), 1.0);
        assert_eq!(h.quantile(0.51), 3.0);
        let g = DiscreteDistribution::point_mass(1.0).unwrap();
        assert_relative_eq!(h.kolmogorov_distance(&g), 0.5);
        assert_relative_eq!(h.mean(), 2.0);
        assert_relative_eq!(h.variance(), 1.0);
    }

    #[test]
    fn psi_eval_examples() {
        let m = model(DiscreteDistribution::point_mass(1.0).unwrap(), 0.5);
        let (psi, dpsi) = psi_eval(&m, 4.0).unwrap();
        assert_relative_eq!(psi, 4.0 * (1.0 + 0.5 / 3.0), max_relative = 1e-14);
        assert_relative_eq!(psi, 4.666667, epsilon = 1e-6);
        assert_relative_eq!(dpsi, 0.944444, epsilon = 1e-6);

        let m = model(two_atom(), 0.2);
        let (psi, dpsi) = psi_eval(&m, 10.0).unwrap();
        assert_relative_eq!(psi, 10.539683, epsilon = 1e-6);
        assert_relative_eq!(dpsi, 0.980398, epsilon = 1e-6);
        let (qpsi, qdpsi) = quadrature_psi(&[(1.0, 0.5), (3.0, 0.5)], 0.2, 10.0);
        assert_relative_eq!(psi, qpsi, max_relative = 1e-9);
        assert_relative_eq!(dpsi, qdpsi, max_relative = 1e-9);

        let m = model(DiscreteDistribution::point_mass(1.0).unwrap(), 0.0);
        assert_eq!(psi_eval(&m, 2.5).unwrap(), (2.5, 1.0));
    }

    #[test]
    fn psi_eval_rejects_pole_region() {
        let m = model(two_atom(), 0.2);
        assert!(matches!(psi_eval(&m, 3.0), Err(Error::Domain(_))));
        assert!(matches!(psi_eval(&m, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn s_psi_closed_forms() {
        for (gamma, expected) in [(0.25, 1.5), (1.0, 2.0)] {
            let m = model(DiscreteDistribution::point_mass(1.0).unwrap(), gamma);
            assert_relative_eq!(m.s_psi(), expected, max_relative = 1e-12);
            assert_relative_eq!(m.psi_at_s_psi(), (1.0 + gamma.sqrt()).powi(2), max_relative = 1e-12);
        }
    }

    #[test]
    fn s_psi_two_atoms_matches_bisection_oracle() {
        // Plain bisection on 1 = 0.2[0.5/(S−1)² + 4.5/(S−3)²].
        let f = |s: f64| 1.0 - 0.2 * (0.5 / (s - 1.0).powi(2) + 4.5 / (s - 3.0).powi(2));
        let (mut lo, mut hi) = (3.0 + 1e-12, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let m = model(two_atom(), 0.2);
        assert_relative_eq!(m.s_psi(), lo, max_relative = 1e-12);
        assert_relative_eq!(m.s_psi(), 3.9541657342445533, max_relative = 1e-12);
        assert!(psi_eval(&m, m.s_psi()).unwrap().1.abs() < 1e-10);
    }

    #[test]
    fn psi_inverse_examples() {
        let m = model(DiscreteDistribution::point_mass(1.0).unwrap(), 0.5);
        assert_relative_eq!(psi_inverse(&m, 14.0 / 3.0).unwrap(), 4.0, max_relative = 1e-12);
        assert_relative_eq!(psi_inverse(&m, 4.666667).unwrap(), 4.0, epsilon = 1e-5);
        let below = m.psi_at_s_psi() * 0.99;
        assert!(matches!(psi_inverse(&m, below), Err(Error::NotDistantSpike { .. })));

        let m = model(two_atom(), 0.2);
        let d = psi_eval(&m, 10.0).unwrap().0;
        assert_relative_eq!(psi_inverse(&m, d).unwrap(), 10.0, max_relative = 1e-12);
        assert_relative_eq!(psi_inverse(&m, 10.539683).unwrap(), 10.0, epsilon = 1e-5);
    }

    #[test]
    fn no_distortion_model() {
        let m = model(two_atom(), 0.0);
        assert!(m.is_no_distortion());
        assert_eq!(m.s_psi(), f64::INFINITY);
        assert_eq!(psi_inverse(&m, 7.0).unwrap(), 7.0);
        assert!(psi_inverse(&m, 2.0).is_err());
        assert!(s_psi_root(&m).is_err());
    }

    #[test]
    fn f_g_examples() {
        let s = SampleSpectrum::new(vec![10.0, 1.0, 0.5], 6).unwrap();
        let (f, g) = f_g_eval(&s, 1, 10.0).unwrap();
        // Independent summation oracle.
        let s1 = 1.0 / 9.0 + 0.5 / 9.5;
        let s2 = 1.0 / 81.0 + 0.5 / 90.25;
        let f_oracle = 10.0 / (1.0 + 0.25 * s1);
        let g_oracle = 1.0 / (1.0 + 0.25 * f_oracle * s2);
        assert_relative_eq!(f, f_oracle, max_relative = 1e-14);
        assert_relative_eq!(g, g_oracle, max_relative = 1e-14);
        assert_relative_eq!(f, 9.606742, epsilon = 1e-6);
        assert_relative_eq!(g, 0.958813, epsilon = 1e-6);

        let s = SampleSpectrum::new(vec![10.0, 0.0, 0.0], 6).unwrap();
        assert_eq!(f_g_eval(&s, 1, 10.0).unwrap(), (10.0, 1.0));

        let s = SampleSpectrum::new(vec![10.0, 1.0, 0.5], 6).unwrap();
        assert!(f_g_eval(&s, 1, 1.0001).is_ok());
        assert!(matches!(f_g_eval(&s, 1, 1.000000001), Err(Error::Separation { .. })));
        assert!(matches!(f_g_eval(&s, 1, 0.9), Err(Error::Separation { .. })));
        assert!(matches!(f_g_eval(&s, 3, 20.0), Err(Error::Domain(_))));
    }

    #[test]
    fn companion_examples() {
        let v = companion_stieltjes(&[2.0, 1.0], 0, Complex64::i()).unwrap();
        assert_relative_eq!(v.re, 0.45, epsilon = 1e-15);
        assert_relative_eq!(v.im, 0.35, epsilon = 1e-15);
        let v = companion_stieltjes(&[5.0, 2.0, 1.0], 1, Complex64::i()).unwrap();
        assert_relative_eq!(v.re, 0.45, epsilon = 1e-15);
        assert_relative_eq!(v.im, 0.35, epsilon = 1e-15);
        let c = 3.7;
        let v = companion_stieltjes(&[c], 0, Complex64::new(c, 1.0)).unwrap();
        assert_relative_eq!(v.re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(v.im, 1.0, epsilon = 1e-15);
        assert!(companion_stieltjes(&[1.0], 0, Complex64::new(2.0, 0.0)).is_err());
        assert!(companion_stieltjes(&[1.0], 1, Complex64::i()).is_err());
    }

    #[test]
    fn spectrum_validation_and_gram() {
        assert!(SampleSpectrum::new(vec![1.0, 2.0], 5).is_err());
        assert!(SampleSpectrum::new(vec![3.0, 2.0, 1.0], 2).is_err());
        let s = SampleSpectrum::from_leading(vec![3.0, 2.0], 2, 5).unwrap();
        assert_eq!(s.eigenvalues(), &[3.0, 2.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.gram_eigenvalues(), vec![3.0, 2.0]);
        assert_eq!(s.gamma(), 2.5);
        let s = SampleSpectrum::new(vec![3.0, 2.0], 4).unwrap();
        assert_eq!(s.gram_eigenvalues(), vec![3.0, 2.0, 0.0, 0.0]);
        let s = SampleSpectrum::new(vec![3.0, -1e-14], 4).unwrap();
        assert_eq!(s.eigenvalues()[1], 0.0);
    }
}
