pub mod analyze;
pub mod hyperparams;
pub mod metrics;
pub mod simulate;

use anyhow::{bail, Result};
use std::path::PathBuf;

/// Expands a glob into a sorted list of paths; empty matches are an error.
pub fn glob_traces(pattern: &str) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)?
        .collect::<std::result::Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no traces match '{pattern}'");
    }
    Ok(paths)
}

/// The ground-truth sidecar for a trace CSV (`x.csv` -> `x.truth.json`).
pub fn truth_sidecar(trace_path: &std::path::Path) -> PathBuf {
    trace_path.with_extension("truth.json")
}

/// Group label for pooling: traces simulated with the same single-fluorophore
/// intensity and SNR share photophysics. The SNR label is recovered from the
/// stored background variance (total background mean equals the variance).
pub fn group_label(truth: &crjmcmc::sim::GroundTruth) -> String {
    if truth.sigma_b2 > 0.0 {
        let snr = truth.mu_f / truth.sigma_b2;
        format!("mu_f={:.0},snr={snr}", truth.mu_f)
    } else {
        format!("mu_f={:.0},snr=inf", truth.mu_f)
    }
}
