//! Estimation of the number of distant spikes.
//!
//! Starting from an upper bound `m_max`, the population LSD is re-estimated
//! with the top `m` eigenvalues excluded, ψ̂ and its boundary `S_ψ` are
//! rebuilt, and `m` shrinks to just below the first sample eigenvalue that
//! does not exceed `ψ̂(S_ψ)`. The loop stops once all `d₁..d_m` clear the
//! boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsd::{fit_lsd, LsdConfig, LsdFit};
use crate::spectrum::SampleSpectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeCountIteration {
    pub m: usize,
    pub s_psi: f64,
    pub psi_at_s_psi: f64,
    /// 1-based index of the first `d_i ≤ ψ̂(S_ψ)` among `d₁..d_m`.
    pub first_violation_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeCountTrace {
    pub m_max: usize,
    pub iterations: Vec<SpikeCountIteration>,
    pub final_m: usize,
}

pub fn estimate_num_spikes(sample: &SampleSpectrum, m_max: usize, config: &LsdConfig) -> Result<SpikeCountTrace> {
    estimate_num_spikes_with_fit(sample, m_max, config).map(|(trace, _)| trace)
}

/// Like [`estimate_num_spikes`], also returning the LSD fit at the final `m`
/// (`None` when no distant spike remains).
pub fn estimate_num_spikes_with_fit(
    sample: &SampleSpectrum,
    m_max: usize,
    config: &LsdConfig,
) -> Result<(SpikeCountTrace, Option<LsdFit>)> {
    let bound = sample.n().min(sample.p());
    if m_max == 0 || 2 * m_max >= bound {
        return Err(Error::Input(format!(
            "m_max must satisfy 1 <= m_max < min(n, p)/2 = {}, got {m_max}",
            bound as f64 / 2.0
        )));
    }
    let d = sample.eigenvalues();
    let mut m = m_max;
    let mut iterations = Vec::new();
    while m > 0 {
        if iterations.len() > m_max {
            return Err(Error::Iteration(format!("spike count did not settle in {} rounds", m_max + 1)));
        }
        let fit = fit_lsd(sample, m, config)?;
        let threshold = fit.psi_model.psi_at_s_psi();
        let violation = d[..m].iter().position(|&di| di <= threshold).map(|i| i + 1);
        iterations.push(SpikeCountIteration {
            m,
            s_psi: fit.psi_model.s_psi(),
            psi_at_s_psi: threshold,
            first_violation_index: violation,
        });
        match violation {
            None => return Ok((SpikeCountTrace { m_max, iterations, final_m: m }, Some(fit))),
            Some(i) => {
                debug_assert!(i - 1 < m);
                m = i - 1;
            }
        }
    }
    Ok((SpikeCountTrace { m_max, iterations, final_m: 0 }, None))
}
