//! Acceptance suite. Every check prints one `PASS` or `FAIL` line on stderr
//! (written directly so it shows without `--nocapture`) and then asserts.
//!
//! The Monte-Carlo runs for the simulation checks are computed once and
//! shared; the reproducibility check recomputes them from scratch.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use hdspectra::estimators::{estimate_all, Method};
use hdspectra::lsd::{fit_lsd, LsdConfig};
use hdspectra::sim::{self, ar1_eigenvalues, build_population, loocv_shrinkage_mse, run_study, LoocvConfig, LoocvReport, Quantity, StudyReport};
use hdspectra::spectrum::{f_g_eval, DiscreteDistribution, PsiModel, SampleSpectrum};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("[{id:>2}] {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{name}: {detail}");
}

fn note(text: &str) {
    let _ = std::io::stderr().write_all(format!("     {text}\n").as_bytes());
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Eigenvalues (descending, zero-padded to `p`) of `XᵀX/n` for Gaussian rows
/// with diagonal covariance `diag`; the mean is known to be zero.
fn diagonal_sample(n: usize, diag: &[f64], seed: u64) -> SampleSpectrum {
    let p = diag.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
    let x = DMatrix::from_fn(n, p, |_, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale[j]
    });
    let gram = &x * x.transpose() / n as f64;
    let mut d: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    d.truncate(n.min(p));
    SampleSpectrum::from_leading(d, n, p).unwrap()
}

/// Alternating two-level non-spikes, optionally with one spike in front.
fn two_level(p: usize, low: f64, high: f64, spike: Option<f64>) -> Vec<f64> {
    let mut diag: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { low } else { high }).collect();
    if let Some(s) = spike {
        diag[0] = s;
    }
    diag
}

fn eigenvalue(report: &StudyReport, method: Method, spike: usize) -> f64 {
    report.cell(method, Quantity::Eigenvalue, spike).and_then(|c| c.bias_pct).unwrap_or(f64::NAN)
}

struct Runs {
    study1: StudyReport,
    study4: StudyReport,
    study2: StudyReport,
    study1_short: StudyReport,
    loocv: LoocvReport,
    /// Per replicate: Kolmogorov distance of the smoothed estimate, then of
    /// the raw estimate, then the raw estimate's Wasserstein-1 distance.
    lsd: Vec<[f64; 3]>,
}

impl Runs {
    fn fingerprint(&self) -> String {
        let studies = [&self.study1, &self.study4, &self.study2, &self.study1_short];
        let mut out: Vec<String> = studies.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
        out.push(serde_json::to_string(&self.loocv).unwrap());
        out.push(self.lsd.iter().flatten().map(|v| v.to_bits().to_string()).collect::<Vec<_>>().join(","));
        out.join("\n")
    }
}

fn surrogate(k: usize, reps: usize) -> StudyReport {
    let mut cfg = sim::preset(&format!("study{k}_surrogate")).unwrap();
    cfg.reps = reps;
    run_study(&cfg).unwrap()
}

/// `∫ |F − G|` between two discrete distributions.
fn wasserstein1(a: &DiscreteDistribution, b: &DiscreteDistribution) -> f64 {
    let mut points: Vec<f64> = a.locations().iter().chain(b.locations()).copied().collect();
    points.sort_by(f64::total_cmp);
    points.windows(2).map(|w| (a.cdf(w[0]) - b.cdf(w[0])).abs() * (w[1] - w[0])).sum()
}

/// Distances of the LSD estimate from `{1: ½, 4: ½}` with `γ = 1`.
fn lsd_recovery() -> Vec<[f64; 3]> {
    let h = DiscreteDistribution::new(vec![(1.0, 0.5), (4.0, 0.5)]).unwrap();
    let diag = two_level(400, 1.0, 4.0, None);
    let config = LsdConfig { smooth: true, ..LsdConfig::default() };
    (0..10)
        .map(|rep| {
            let sample = diagonal_sample(400, &diag, 900 + rep);
            let fit = fit_lsd(&sample, 0, &config).unwrap();
            let raw = fit.solution.distribution().unwrap();
            [fit.estimate.kolmogorov_distance(&h), raw.kolmogorov_distance(&h), wasserstein1(&raw, &h)]
        })
        .collect()
}

fn compute_runs() -> Runs {
    let surrogate1 = sim::preset("study1_surrogate").unwrap();
    Runs {
        study1: surrogate(1, 50),
        study4: surrogate(4, 50),
        study2: surrogate(2, 50),
        study1_short: surrogate(1, 20),
        loocv: loocv_shrinkage_mse(&surrogate1.population, &LoocvConfig::default(), &Method::ALL, &surrogate1.lsd).unwrap(),
        lsd: lsd_recovery(),
    }
}

fn runs() -> &'static (Runs, Duration) {
    static RUNS: OnceLock<(Runs, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let runs = compute_runs();
        (runs, start.elapsed())
    })
}

#[test]
fn a01_point_mass_closed_forms() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for gamma in [0.25, 0.5, 1.0] {
        let model = PsiModel::new(DiscreteDistribution::point_mass(1.0).unwrap(), gamma).unwrap();
        worst = worst.max(rel(model.s_psi(), 1.0 + gamma.sqrt()));
        let n = 400;
        let p = (gamma * n as f64) as usize;
        for alpha in [4.0, 10.0] {
            let psi = alpha * (1.0 + gamma / (alpha - 1.0));
            let dpsi = 1.0 - gamma / (alpha - 1.0f64).powi(2);
            let (psi_m, dpsi_m) = model.eval(alpha).unwrap();
            worst = worst.max(rel(psi_m, psi)).max(rel(dpsi_m, dpsi));

            let mut d = vec![1.0; p];
            d[0] = psi;
            let sample = SampleSpectrum::new(d, n).unwrap();
            let est = estimate_all(&sample, 1, Method::Lambda, Some(&model)).unwrap();
            let s = &est.spikes[0];
            worst = worst
                .max(rel(s.lambda_hat.unwrap(), alpha))
                .max(rel(s.cos2_angle.unwrap(), alpha * dpsi / psi))
                .max(rel(s.corr2_score.unwrap(), dpsi))
                .max(rel(s.shrinkage.unwrap(), (alpha - 1.0) / (alpha + gamma - 1.0)));
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-9 && elapsed < Duration::from_secs(1);
    verdict(1, "point-mass closed forms", pass, &format!("max relative error {worst:.2e} in {elapsed:.2?}"));
}

#[test]
fn a02_inverse_and_bridge_identities() {
    let start = Instant::now();
    let shapes = [
        (DiscreteDistribution::point_mass(1.0).unwrap(), 0.5),
        (DiscreteDistribution::new(vec![(1.0, 0.5), (3.0, 0.5)]).unwrap(), 0.2),
        (DiscreteDistribution::empirical(&ar1_eigenvalues(50, 4.0, 0.8).unwrap()).unwrap(), 5.0),
    ];
    let mut worst: f64 = 0.0;
    for (h, gamma) in shapes {
        let model = PsiModel::new(h, gamma).unwrap();
        let s = model.s_psi();
        for i in 0..1000 {
            // Geometric grid from just above S_ψ to 50 S_ψ.
            let alpha = s * (1.0 + 1e-4 * (5e5f64).powf(i as f64 / 999.0));
            let (psi, _) = model.eval(alpha).unwrap();
            worst = worst.max(rel(model.inverse(psi).unwrap(), alpha));
        }
    }

    // Spike 25 over alternating non-spikes {1, 3}, p = 2000, n = 500.
    let (n, p, lambda) = (500, 2000, 25.0);
    let h = DiscreteDistribution::new(vec![(1.0, 0.5), (3.0, 0.5)]).unwrap();
    let model = PsiModel::new(h, p as f64 / n as f64).unwrap();
    let (psi, dpsi) = model.eval(lambda).unwrap();
    let diag = two_level(p, 1.0, 3.0, Some(lambda));
    let bridge: Vec<f64> = (0..20)
        .map(|rep| {
            let sample = diagonal_sample(n, &diag, 200 + rep);
            let (f, g) = f_g_eval(&sample, 1, psi).unwrap();
            g * psi / f
        })
        .collect();
    let bridge_err = rel(median(bridge), dpsi);
    let elapsed = start.elapsed();
    let pass = worst <= 1e-8 && bridge_err <= 0.02 && elapsed < Duration::from_secs(60);
    verdict(
        2,
        "inverse and bridge identities",
        pass,
        &format!("max inverse error {worst:.2e}; bridge median error {:.2}% vs psi' = {dpsi:.5}; {elapsed:.1?}", 100.0 * bridge_err),
    );
}

#[test]
fn a03_study1_bias() {
    let (r, elapsed) = runs();
    let s = &r.study1;
    let (l1, d1) = (eigenvalue(s, Method::Lambda, 1), eigenvalue(s, Method::D, 1));
    let (sp1, sp2) = (eigenvalue(s, Method::Sp, 1), eigenvalue(s, Method::Sp, 2));
    let gsp = l1.abs() < 2.0 && d1.abs() < 2.0;
    let sp = sp1 > 3.0 && sp2 > 10.0;
    note(&format!(
        "study1 surrogate gamma = {}: lambda {l1:.2}% / {:.2}%, d {d1:.2}% / {:.2}%, sp {sp1:.2}% / {sp2:.2}%",
        s.p as f64 / s.n as f64,
        eigenvalue(s, Method::Lambda, 2),
        eigenvalue(s, Method::D, 2)
    ));
    note(&format!("shared Monte-Carlo runs took {elapsed:.1?}"));
    // Reference only: the same design at n = 125 keeps gamma = 10.
    let quarter = run_study(&sim::preset("study1_quarter").unwrap()).unwrap();
    note(&format!(
        "study1 quarter gamma = 10 (reference, not checked): sp {:.2}% / {:.2}%, lambda {:.2}% / {:.2}%",
        eigenvalue(&quarter, Method::Sp, 1),
        eigenvalue(&quarter, Method::Sp, 2),
        eigenvalue(&quarter, Method::Lambda, 1),
        eigenvalue(&quarter, Method::Lambda, 2)
    ));
    verdict(
        3,
        "study1 surrogate bias",
        gsp && sp,
        &format!("|lambda|, |d| spike-1 bias < 2%: {gsp}; sp spike-1 > 3% and spike-2 > 10%: {sp} ({sp1:.2}%, {sp2:.2}%)"),
    );
}

#[test]
fn a04_study4_bias() {
    let s = &runs().0.study4;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for method in Method::ALL {
        for k in 1..=s.true_spikes.len() {
            let b = eigenvalue(s, method, k);
            worst = worst.max(b.abs());
            parts.push(format!("{method}{k} {b:.2}%"));
        }
    }
    verdict(4, "study4 surrogate bias", worst < 1.5, &format!("max |bias| {worst:.2}% ({})", parts.join(", ")));
}

#[test]
fn a05_study2_sp_bias() {
    let s = &runs().0.study2;
    let biases: Vec<f64> = (1..=s.true_spikes.len()).map(|k| eigenvalue(s, Method::Sp, k)).collect();
    let worst = biases.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    verdict(5, "study2 surrogate sp bias", worst < 1.5, &format!("sp spike biases {biases:.2?}"));
}

#[test]
fn a06_sample_eigenvalue_limit() {
    let s = &runs().0.study1_short;
    let truth = build_population(&s.config.population).unwrap();
    let model = truth.psi_model(s.p as f64 / s.n as f64).unwrap();
    let (psi, _) = model.eval(s.true_spikes[0]).unwrap();
    let d1 = median(s.outcomes.iter().map(|o| o.sample_eigenvalues[0]).collect());
    let err = rel(d1, psi);
    verdict(6, "sample eigenvalue limit", err < 0.03, &format!("median d1 {d1:.3} vs psi(lambda1) {psi:.3} ({:.2}%)", 100.0 * err));
}

#[test]
fn a07_angle_and_correlation_limits() {
    let s = &runs().0.study1_short;
    let truth = build_population(&s.config.population).unwrap();
    let model = truth.psi_model(s.p as f64 / s.n as f64).unwrap();
    let lambda = s.true_spikes[0];
    let (psi, dpsi) = model.eval(lambda).unwrap();
    let cos2: Vec<f64> = s.outcomes.iter().map(|o| o.truths[0].angle.powi(2)).collect();
    let corr2: Vec<f64> = s.outcomes.iter().map(|o| o.truths[0].correlation.powi(2)).collect();
    let (angle_err, corr_err) = (rel(mean(&cos2), lambda * dpsi / psi), rel(mean(&corr2), dpsi));
    verdict(
        7,
        "angle and correlation limits",
        angle_err < 0.03 && corr_err < 0.03,
        &format!(
            "mean cos2 {:.4} vs {:.4} ({:.2}%), mean corr2 {:.4} vs {:.4} ({:.2}%)",
            mean(&cos2),
            lambda * dpsi / psi,
            100.0 * angle_err,
            mean(&corr2),
            dpsi,
            100.0 * corr_err
        ),
    );
}

#[test]
fn a08_loocv_ordering() {
    let l = &runs().0.loocv;
    let get = |name: &str| l.mse(name).unwrap_or(f64::NAN);
    let (raw, sp, lambda, d) = (get("unadjusted"), get("sp"), get("lambda"), get("d"));
    let gsp = lambda.max(d);
    let pass = raw > sp && sp > gsp && gsp <= 0.5 * raw;
    verdict(
        8,
        "leave-one-out score adjustment",
        pass,
        &format!("mse unadjusted {raw:.5}, sp {sp:.5}, lambda {lambda:.5}, d {d:.5} over {} predictions", l.evaluations),
    );
}

#[test]
fn a09_lsd_recovery() {
    let lsd = &runs().0.lsd;
    let ks: Vec<f64> = lsd.iter().map(|v| v[0]).collect();
    let med = median(ks.clone());
    note(&format!(
        "raw estimate: median Kolmogorov distance {:.4}, median Wasserstein-1 distance {:.4}",
        median(lsd.iter().map(|v| v[1]).collect()),
        median(lsd.iter().map(|v| v[2]).collect())
    ));
    verdict(9, "lsd recovery", med <= 0.15, &format!("median Kolmogorov distance {med:.4} (reps {ks:.3?})"));
}

#[test]
fn a10_spike_count() {
    let s = &runs().0.study1_short;
    let reps = s.reps as f64;
    let exact = *s.m_counts.get(&2).unwrap_or(&0) as f64 / reps;
    let at_least = s.m_counts.iter().filter(|(&m, _)| m >= 2).map(|(_, &c)| c).sum::<usize>() as f64 / reps;
    verdict(
        10,
        "spike count recovery",
        exact >= 0.7 && at_least >= 0.9,
        &format!("m = 2 in {:.0}%, m >= 2 in {:.0}% of reps; counts {:?}", 100.0 * exact, 100.0 * at_least, s.m_counts),
    );
}

#[test]
fn a11_d_lambda_equivalence() {
    let r = &runs().0;
    let mut diffs = Vec::new();
    for report in [&r.study1, &r.study4, &r.study2] {
        for o in &report.outcomes {
            let find = |m: Method| o.estimates.iter().find(|e| e.method == m);
            if let (Some(d), Some(l)) = (find(Method::D), find(Method::Lambda)) {
                for (a, b) in d.spikes.iter().zip(&l.spikes) {
                    if let (Some(a), Some(b)) = (a.lambda_hat, b.lambda_hat) {
                        diffs.push(rel(a, b));
                    }
                }
            }
        }
    }
    let count = diffs.len();
    let med = median(diffs);
    verdict(11, "d and lambda agreement", med < 0.02, &format!("median relative difference {:.3}% over {count} estimates", 100.0 * med));
}

#[test]
fn a12_reproducibility() {
    let first = runs().0.fingerprint();
    let second = compute_runs().fingerprint();
    verdict(12, "bitwise reproducibility", first == second, &format!("{} bytes of results compared", first.len()));
}
