//! Simulation harness: population designs, Monte-Carlo studies and
//! leave-one-out evaluation of score adjustment.
//!
//! Five designs are built in. Studies 1 to 4 mix three groups whose means
//! are drawn from a small set of atoms over an AR(1) covariance; study 5
//! plants two spikes next to an AR(1) block. Each design is available at
//! full size (`study1`), at a quarter or a tenth of `(n, p)` (`study1_quarter`,
//! `study1_tenth`) and, for the first four, as a `surrogate` with
//! `n = 250, p = 1250`. Scaled designs stretch the mean atoms by `√(5000/p)`
//! so that the between-group spikes keep their size.

pub mod loocv;
pub mod population;
pub mod report;
pub mod study;

pub use loocv::{loocv_shrinkage_mse, LoocvConfig, LoocvReport, MseRow};
pub use population::{
    ar1_covariance, ar1_eigenvalues, build_population, draw_sample, tridiagonal_eigenvalues, GroundTruth,
    PopulationSpec, DENSE_BUDGET,
};
pub use report::{loocv_table, study_table, write_loocv_csv, write_study_csv};
pub use study::{
    run_replicate, run_study, summarize, CellSummary, MPolicy, Quantity, RepOutcome, SpikeTruth, StudyConfig,
    StudyReport,
};

use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::lsd::LsdConfig;

const PAPER_P: usize = 5000;
const PAPER_GROUPS: [usize; 3] = [100, 150, 250];
const BASE_ATOM: f64 = 0.3;

/// `(σ², ρ)` for studies 1 to 5.
const STUDY_AR: [(f64, f64); 5] = [(4.0, 0.8), (1.0, 0.7), (7.5, 0.8), (4.0, 0.0), (4.0, 0.8)];

/// Splits `total` over `weights` by largest remainder.
fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    let raw: Vec<f64> = weights.iter().map(|&w| total as f64 * w as f64 / sum as f64).collect();
    let mut out: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    let missing = total - out.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        out[i] += 1;
    }
    out
}

/// Names accepted by [`preset`].
pub fn preset_names() -> Vec<String> {
    let mut names = Vec::new();
    for k in 1..=5 {
        names.push(format!("study{k}"));
        names.push(format!("study{k}_quarter"));
        names.push(format!("study{k}_tenth"));
        if k <= 4 {
            names.push(format!("study{k}_surrogate"));
        }
    }
    names
}

/// Built-in study configuration by name, with 50 replicates and `m_max = 5`.
pub fn preset(name: &str) -> Result<StudyConfig> {
    let unknown = || Error::Input(format!("unknown study '{name}'; known: {}", preset_names().join(", ")));
    let (base, scale) = name.split_once('_').unwrap_or((name, "paper"));
    let k: usize = base.strip_prefix("study").and_then(|s| s.parse().ok()).ok_or_else(unknown)?;
    if !(1..=5).contains(&k) {
        return Err(unknown());
    }
    let (n, p) = match (k, scale) {
        (5, "paper") => (500, 50_000),
        (5, "quarter") => (125, 12_500),
        (5, "tenth") => (50, 5_000),
        (_, "paper") => (500, PAPER_P),
        (_, "quarter") => (125, 1250),
        (_, "tenth") => (50, 500),
        (1..=4, "surrogate") => (250, 1250),
        _ => return Err(unknown()),
    };
    let (ar_sigma2, ar_rho) = STUDY_AR[k - 1];
    let population = if k == 5 {
        PopulationSpec {
            p,
            group_sizes: vec![n],
            mean_atoms: vec![0.0],
            ar_sigma2,
            ar_rho,
            seed: 5000 + k as u64,
            planted_spikes: vec![300.0, 250.0],
        }
    } else {
        let a = BASE_ATOM * (PAPER_P as f64 / p as f64).sqrt();
        PopulationSpec {
            p,
            group_sizes: apportion(n, &PAPER_GROUPS),
            mean_atoms: vec![-a, 0.0, a],
            ar_sigma2,
            ar_rho,
            seed: 5000 + k as u64,
            planted_spikes: Vec::new(),
        }
    };
    Ok(StudyConfig {
        study: name.to_string(),
        reps: 50,
        methods: Method::ALL.to_vec(),
        m: None,
        m_max: Some(5),
        lsd: LsdConfig::default(),
        population,
        loocv: None,
    })
}

/// True for the full-size designs.
pub fn is_paper_scale(name: &str) -> bool {
    !name.contains('_')
}
