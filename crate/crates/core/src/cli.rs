//! Command-line interface.
//!
//! Exit codes: 0 success, 2 bad input, 3 a method's domain was violated
//! (for example a non-distant spike), 4 a computation budget was exceeded.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_all, Method, SpBaselineModel, SpikeEstimate, SpikeEstimates};
use crate::lsd::{fit_lsd, LossKind, LsdConfig};
use crate::pca::{adjust_scores, ScoreSet};
use crate::sim::{self, StudyConfig};
use crate::spectrum::SampleSpectrum;
use crate::spike_count::{estimate_num_spikes_with_fit, SpikeCountTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    D,
    Lambda,
    Sp,
    All,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::D => vec![Method::D],
            MethodArg::Lambda => vec![Method::Lambda],
            MethodArg::Sp => vec![Method::Sp],
            MethodArg::All => Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hdspectra", version, about = "Spike, eigenvector and score-shrinkage estimation for high-dimensional PCA")]
pub struct Cli {
    /// Overrides the study seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for simulations.
    #[arg(long, global = true, env = "HDSPECTRA_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    /// Report intermediate steps on stderr.
    #[arg(long, global = true)]
    pub trace: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate spikes, angles, score correlations and shrinkage factors.
    Estimate(EstimateArgs),
    /// Divide predicted scores by shrinkage factors.
    Adjust(AdjustArgs),
    /// Run a simulation study from a config file or a built-in design.
    Simulate(SimulateArgs),
    /// List built-in study designs.
    Presets,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV with a header row; the first column holds descending eigenvalues.
    pub eigs: PathBuf,
    /// Sample size.
    #[arg(long)]
    pub n: usize,
    /// Number of spikes.
    #[arg(long, conflicts_with = "m_max", required_unless_present = "m_max")]
    pub m: Option<usize>,
    /// Estimate the number of spikes starting from this bound.
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long, value_enum, default_value = "all")]
    pub method: MethodArg,
    /// Dimension, when the file holds only the leading eigenvalues.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_enum, default_value = "linf")]
    pub loss: LossArg,
    /// Write LSD fit diagnostics (JSON) to this file.
    #[arg(long)]
    pub lsd_dump: Option<PathBuf>,
    /// Write results here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Linf,
    L1,
    L2,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Linf => LossKind::Linf,
            LossArg::L1 => LossKind::L1,
            LossArg::L2 => LossKind::L2,
        }
    }
}

#[derive(Debug, Args)]
pub struct AdjustArgs {
    /// CSV of predicted scores with a header row, one column per component.
    pub scores: PathBuf,
    /// CSV of shrinkage factors: a `shrinkage` column, or the first column.
    pub shrinkage: PathBuf,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// A TOML or JSON study file, or the name of a built-in design.
    pub study: String,
    /// Overrides the number of replicates.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Allow full-size built-in designs.
    #[arg(long)]
    pub paper_scale: bool,
    /// Also run the leave-one-out score evaluation.
    #[arg(long)]
    pub loocv: bool,
    /// Write `<study>.csv`, `<study>.json` (and LOOCV files) here.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

/// One CSV row of `estimate` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub method: Method,
    pub index: usize,
    pub sample_eigenvalue: f64,
    pub distant: bool,
    pub lambda_hat: Option<f64>,
    pub cos2_angle: Option<f64>,
    pub corr2_score: Option<f64>,
    pub shrinkage: Option<f64>,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema: String,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spike_count: Option<SpikeCountTrace>,
    pub estimates: Vec<SpikeEstimates>,
}

pub fn estimates_to_csv(estimates: &[SpikeEstimates]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for est in estimates {
        for s in &est.spikes {
            w.serialize(EstimateRow {
                method: est.method,
                index: s.index,
                sample_eigenvalue: s.sample_eigenvalue,
                distant: s.distant,
                lambda_hat: s.lambda_hat,
                cos2_angle: s.cos2_angle,
                corr2_score: s.corr2_score,
                shrinkage: s.shrinkage,
                clamped: s.clamped,
            })?;
        }
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .map_err(|e| Error::Data(e.to_string()))
}

/// Inverse of [`estimates_to_csv`]; rows are grouped by method in order of appearance.
pub fn estimates_from_csv(text: &str) -> Result<Vec<SpikeEstimates>> {
    let mut out: Vec<SpikeEstimates> = Vec::new();
    for row in csv::Reader::from_reader(text.as_bytes()).deserialize() {
        let r: EstimateRow = row?;
        let spike = SpikeEstimate {
            index: r.index,
            sample_eigenvalue: r.sample_eigenvalue,
            distant: r.distant,
            lambda_hat: r.lambda_hat,
            cos2_angle: r.cos2_angle,
            corr2_score: r.corr2_score,
            shrinkage: r.shrinkage,
            clamped: r.clamped,
        };
        match out.iter_mut().find(|e| e.method == r.method) {
            Some(e) => e.spikes.push(spike),
            None => out.push(SpikeEstimates { method: r.method, spikes: vec![spike] }),
        }
    }
    Ok(out)
}

fn input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

fn parse_number(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Input(format!("{what}: '{field}' is not a finite number")))
}

/// Reads a headed CSV column: `name` if present, else the first column.
fn read_column(text: &str, name: Option<&str>) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let idx = name.and_then(|n| headers.iter().position(|h| h.trim() == n)).unwrap_or(0);
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = rec.get(idx).ok_or_else(|| Error::Input(format!("row {} has no column {idx}", i + 1)))?;
        values.push(parse_number(field, &format!("row {}", i + 1))?);
    }
    if values.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }
    Ok(values)
}

fn read_table(text: &str) -> Result<(csv::StringRecord, nalgebra::DMatrix<f64>)> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Input(e.to_string()))?;
        for field in rec.iter() {
            values.push(parse_number(field, &format!("row {}", rows + 1))?);
        }
        rows += 1;
    }
    Ok((headers.clone(), nalgebra::DMatrix::from_row_slice(rows, headers.len(), &values)))
}

fn sink(path: Option<&PathBuf>, stdout: &mut dyn Write, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn check_distant(est: &SpikeEstimates, sample: &SampleSpectrum, m: usize, threshold_lambda: Option<f64>) -> Result<()> {
    if let Some(s) = est.spikes.iter().find(|s| !s.distant) {
        let threshold = match est.method {
            Method::Lambda => threshold_lambda.unwrap_or(f64::NAN),
            _ => {
                let sp = SpBaselineModel::from_sample(sample, m)?;
                sp.zeta * (1.0 + sp.gamma.sqrt()).powi(2)
            }
        };
        return Err(Error::NotDistantSpike { value: s.sample_eigenvalue, threshold });
    }
    Ok(())
}

pub fn cmd_estimate(args: &EstimateArgs, cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    if args.n == 0 {
        return Err(Error::Input("n must be positive".into()));
    }
    let text = input(&args.eigs)?;
    let eigs = read_column(&text, None).map_err(|e| match e {
        Error::Csv(c) => Error::Input(c.to_string()),
        other => other,
    })?;
    let sample = match args.p {
        Some(p) => SampleSpectrum::from_leading(eigs, args.n, p),
        None => SampleSpectrum::new(eigs, args.n),
    }
    .map_err(|e| Error::Input(e.to_string()))?;
    let lsd = LsdConfig { loss: args.loss.into(), ..LsdConfig::default() };
    let methods = args.method.methods();
    let need_model = methods.contains(&Method::Lambda) || args.lsd_dump.is_some();

    let (m, trace, fit) = match (args.m, args.m_max) {
        (Some(m), _) => {
            let fit = if need_model && m > 0 { Some(fit_lsd(&sample, m, &lsd)?) } else { None };
            (m, None, fit)
        }
        (None, Some(m_max)) => {
            let (trace, fit) = estimate_num_spikes_with_fit(&sample, m_max, &lsd)?;
            (trace.final_m, Some(trace), fit)
        }
        (None, None) => return Err(Error::Input("either --m or --m-max is required".into())),
    };
    if let (true, Some(t)) = (cli.trace, &trace) {
        for it in &t.iterations {
            writeln!(
                stderr,
                "spike count: m={} S_psi={} psi(S_psi)={} first violation={:?}",
                it.m, it.s_psi, it.psi_at_s_psi, it.first_violation_index
            )?;
        }
        writeln!(stderr, "spike count: final m={}", t.final_m)?;
    }
    if let (Some(path), Some(fit)) = (&args.lsd_dump, &fit) {
        fs::write(path, serde_json::to_string_pretty(&fit.diagnostics())?)?;
    }
    let psi = fit.as_ref().map(|f| &f.psi_model);
    let mut estimates = Vec::new();
    if m > 0 {
        for &method in &methods {
            let est = estimate_all(&sample, m, method, psi)?;
            check_distant(&est, &sample, m, psi.map(|p| p.psi_at_s_psi()))?;
            estimates.push(est);
        }
    }
    let text = match cli.format {
        Format::Csv => estimates_to_csv(&estimates)?,
        Format::Json => {
            let report = EstimateReport {
                schema: crate::SCHEMA.to_string(),
                n: sample.n(),
                p: sample.p(),
                m,
                spike_count: trace,
                estimates,
            };
            serde_json::to_string_pretty(&report)? + "\n"
        }
    };
    sink(args.output.as_ref(), stdout, &text)
}

pub fn cmd_adjust(args: &AdjustArgs, stdout: &mut dyn Write) -> Result<()> {
    let (headers, scores) = read_table(&input(&args.scores)?)?;
    let factors = read_column(&input(&args.shrinkage)?, Some("shrinkage"))?;
    let set = ScoreSet { scores, normalized: false };
    let adjusted = adjust_scores(&set, &factors).map_err(|e| match e {
        Error::Domain(msg) => Error::Input(msg),
        other => other,
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&headers)?;
    for row in adjusted.scores.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    sink(args.output.as_ref(), stdout, &String::from_utf8_lossy(&bytes))
}

fn load_study(args: &SimulateArgs) -> Result<StudyConfig> {
    let path = Path::new(&args.study);
    if path.is_file() {
        let text = input(path)?;
        return match path.extension().and_then(|e| e.to_str()) {
            Some("json") => StudyConfig::from_json(&text).map_err(|e| Error::Input(e.to_string())),
            _ => StudyConfig::from_toml(&text),
        };
    }
    let cfg = sim::preset(&args.study)?;
    if sim::is_paper_scale(&args.study) && !args.paper_scale {
        return Err(Error::Input(format!("'{}' is a full-size design; pass --paper-scale to run it", args.study)));
    }
    Ok(cfg)
}

pub fn cmd_simulate(args: &SimulateArgs, cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let mut cfg = load_study(args)?;
    if let Some(seed) = cli.seed {
        cfg.population.seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.reps = reps;
    }
    if args.loocv && cfg.loocv.is_none() {
        cfg.loocv = Some(sim::LoocvConfig::default());
    }
    cfg.validate()?;

    let run = || -> Result<(sim::StudyReport, Option<sim::LoocvReport>)> {
        let report = sim::run_study(&cfg)?;
        let loocv = match &cfg.loocv {
            Some(l) => Some(sim::loocv_shrinkage_mse(&cfg.population, l, &cfg.methods, &cfg.lsd)?),
            None => None,
        };
        Ok((report, loocv))
    };
    let (report, loocv) = match cli.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Input(format!("cannot start {t} threads: {e}")))?
            .install(run)?,
        None => run()?,
    };

    if cli.trace {
        for o in &report.outcomes {
            writeln!(stderr, "rep {}: m={:?} failures={:?}", o.rep, o.m_est, o.failures)?;
        }
    }
    match &args.output_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let stem = dir.join(&report.study);
            sim::write_study_csv(&report, fs::File::create(stem.with_extension("csv"))?)?;
            fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&report)? + "\n")?;
            if let Some(l) = &loocv {
                let stem = dir.join(format!("{}_loocv", report.study));
                sim::write_loocv_csv(l, fs::File::create(stem.with_extension("csv"))?)?;
                fs::write(stem.with_extension("json"), serde_json::to_string_pretty(l)? + "\n")?;
            }
            stdout.write_all(sim::study_table(&report).as_bytes())?;
            if let Some(l) = &loocv {
                stdout.write_all(sim::loocv_table(l).as_bytes())?;
            }
        }
        None => match cli.format {
            Format::Csv => {
                sim::write_study_csv(&report, &mut *stdout)?;
                if let Some(l) = &loocv {
                    sim::write_loocv_csv(l, &mut *stdout)?;
                }
            }
            Format::Json => {
                let value = serde_json::json!({ "schema": crate::SCHEMA, "study": report, "loocv": loocv });
                writeln!(stdout, "{}", serde_json::to_string_pretty(&value)?)?;
            }
        },
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Estimate(args) => cmd_estimate(args, cli, stdout, stderr),
        Command::Adjust(args) => cmd_adjust(args, stdout),
        Command::Simulate(args) => cmd_simulate(args, cli, stdout, stderr),
        Command::Presets => {
            for name in sim::preset_names() {
                writeln!(stdout, "{name}")?;
            }
            Ok(())
        }
    }
}
