//! CSV and plain-text renderings of study results.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::estimators::Method;

use super::loocv::LoocvReport;
use super::study::{Quantity, StudyReport};

#[derive(Serialize)]
struct CellRow<'a> {
    study: &'a str,
    method: Method,
    quantity: Quantity,
    spike: usize,
    bias_pct: Option<f64>,
    cv_pct: Option<f64>,
    se_pct: Option<f64>,
    reps_ok: usize,
    reps_failed: usize,
}

pub fn write_study_csv<W: Write>(report: &StudyReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in &report.cells {
        w.serialize(CellRow {
            study: &report.study,
            method: c.method,
            quantity: c.quantity,
            spike: c.spike,
            bias_pct: c.bias_pct,
            cv_pct: c.cv_pct,
            se_pct: c.se_pct,
            reps_ok: c.reps_ok,
            reps_failed: c.reps_failed,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_loocv_csv<W: Write>(report: &LoocvReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Bias% with CV% in parentheses, one row per method.
pub fn study_table(report: &StudyReport) -> String {
    let spikes = report.true_spikes.len();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{}: n={} p={} reps={} true spikes={:?} edge={:.4}",
        report.study, report.n, report.p, report.reps, report.true_spikes, report.true_nonspike_edge
    );
    let _ = write!(s, "{:<8}", "method");
    for q in Quantity::ALL {
        for k in 1..=spikes {
            let _ = write!(s, "{:>20}", format!("{q} {k}"));
        }
    }
    s.push('\n');
    for &method in &report.config.methods {
        let _ = write!(s, "{:<8}", method.as_str());
        for q in Quantity::ALL {
            for k in 1..=spikes {
                let cell = report.cell(method, q, k);
                let text = match cell.and_then(|c| c.bias_pct.zip(c.cv_pct)) {
                    Some((b, cv)) => format!("{b:.2} ({cv:.2})"),
                    None => "-".to_string(),
                };
                let _ = write!(s, "{text:>20}");
            }
        }
        s.push('\n');
    }
    let _ = writeln!(s, "estimated m: {:?}", report.m_counts);
    s
}

pub fn loocv_table(report: &LoocvReport) -> String {
    let mut s = format!("leave-one-out MSE over {} predictions (skipped {})\n", report.evaluations, report.skipped);
    for row in &report.rows {
        let _ = writeln!(s, "{:<12}{:>14.6}", row.adjustment, row.mse);
    }
    s
}
