//! Intensity hyperparameter estimation, cross-trace pooling, and the
//! per-iteration Metropolis-within-Gibbs update of the four intensity
//! parameters.
//!
//! Hyperparameters are estimated in a pre-processing pass: candidate change
//! points are taken from the peaks of the location proposal distribution,
//! weak candidates are filtered by an intensity floor, the single-fluorophore
//! prior mean comes from the surviving level differences, and the background
//! priors come from the final section of the trace. Estimates are pooled
//! across traces with noise-based weights so that cleaner traces dominate.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::log_likelihood_bounds;
use crate::model::{ChangePointState, Hyperparams, IntensityParams};
use crate::proposal::ProposalDistribution;
use crate::trace::Trace;

/// Scale tying the mean-parameter proposal standard deviations to the pooled
/// prior means.
const PROPOSAL_SD_SCALE: f64 = 0.005;

/// Relative floor applied to background-derived quantities so that priors
/// stay proper on baseline-corrected traces where the background mean is
/// close to zero.
const BACKGROUND_FLOOR_FRACTION: f64 = 0.01;

/// Per-trace hyperparameter estimates plus the pooling weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceHyperEstimate {
    pub eta_f_hat: f64,
    pub eta_b_hat: f64,
    pub alpha_f_hat: f64,
    pub beta_f_hat: f64,
    pub alpha_b_hat: f64,
    pub beta_b_hat: f64,
    pub weight: f64,
    /// Set when no candidate survived the intensity floor and the estimate
    /// fell back to the floor itself.
    pub low_confidence: bool,
}

/// Pooling weight scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Inverse trace variance; suited to homogeneous pools.
    InverseTraceVariance,
    /// Inverse of (mean window variance x max intensity x trace length);
    /// suited to heterogeneous pools.
    Heterogeneous,
}

/// Estimates the intensity hyperparameters of a single trace from the peaks
/// of its location proposal distribution.
///
/// `intensity_floor` filters candidate change points whose adjacent-section
/// mean difference is too small; when `None` the floor defaults to 0.9 times
/// the mode intensity of the trace.
pub fn estimate_trace_hyperparams(
    trace: &Trace,
    dist: &ProposalDistribution,
    intensity_floor: Option<f64>,
    scheme: WeightScheme,
) -> TraceHyperEstimate {
    let floor = intensity_floor.unwrap_or_else(|| auto_floor(trace));

    // candidate change points: local maxima of the proposal pmf, mapped to
    // frame split indices; flat-topped peaks (bump centred between two grid
    // points) contribute their midpoint
    let pmf = dist.pmf();
    let mut splits: Vec<usize> = Vec::new();
    let mut i = 1;
    while i + 1 < pmf.len() {
        if pmf[i] > pmf[i - 1] {
            let mut j = i;
            while j + 1 < pmf.len() && pmf[j + 1] == pmf[i] {
                j += 1;
            }
            if j + 1 < pmf.len() && pmf[j + 1] < pmf[i] {
                let mid = i + (j - i).div_ceil(2);
                let split = trace.first_frame_at_or_after(dist.grid()[mid]);
                if split > 0 && split < trace.len() {
                    splits.push(refine_split(trace, split, dist.window_size()));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    splits.sort_unstable();
    splits.dedup();

    // section means around every candidate, then filter by the floor
    let mut section_bounds = vec![0];
    section_bounds.extend_from_slice(&splits);
    section_bounds.push(trace.len());
    let mut surviving: Vec<usize> = Vec::new();
    let mut diffs: Vec<f64> = Vec::new();
    for (c, &split) in splits.iter().enumerate() {
        let left = trace.segment_mean(section_bounds[c], split);
        let right = trace.segment_mean(split, section_bounds[c + 2]);
        let diff = (right - left).abs();
        if diff >= floor {
            surviving.push(split);
            diffs.push(diff);
        }
    }

    let (eta_f_hat, low_confidence) = if diffs.is_empty() {
        let fallback = if floor > 0.0 {
            floor
        } else {
            trace.std().max(1.0)
        };
        (fallback, true)
    } else {
        (diffs.iter().sum::<f64>() / diffs.len() as f64, false)
    };

    // final section: after the last surviving candidate
    let final_lo = surviving.last().copied().unwrap_or(0);
    let eta_b_hat = trace.segment_mean(final_lo, trace.len());
    let final_var = trace.segment_variance(final_lo, trace.len()).max(1.0);

    let alpha_f_hat = eta_f_hat;
    let beta_f_hat = eta_f_hat * (alpha_f_hat + 1.0);
    let alpha_b_hat = final_var;
    let beta_b_hat = alpha_b_hat * (alpha_b_hat + 1.0);

    let weight = match scheme {
        WeightScheme::InverseTraceVariance => {
            let var = trace.std().powi(2);
            if var > 0.0 {
                1.0 / var
            } else {
                1.0
            }
        }
        WeightScheme::Heterogeneous => {
            let w = dist.window_size().max(2);
            let n_windows = (trace.len() / w).max(1);
            let mut acc = 0.0;
            for i in 0..n_windows {
                let lo = i * w;
                let hi = ((i + 1) * w).min(trace.len());
                if hi > lo + 1 {
                    acc += trace.segment_variance(lo, hi);
                }
            }
            let mean_window_var = (acc / n_windows as f64).max(1e-12);
            let max_y = trace
                .intensities()
                .iter()
                .fold(f64::MIN, |a, &b| a.max(b))
                .max(1e-12);
            1.0 / (mean_window_var * max_y * trace.len() as f64)
        }
    };

    TraceHyperEstimate {
        eta_f_hat,
        eta_b_hat,
        alpha_f_hat,
        beta_f_hat,
        alpha_b_hat,
        beta_b_hat,
        weight,
        low_confidence,
    }
}

/// Snaps a candidate split to the strongest boundary nearby: window-pair
/// bumps from the preliminary scan peak up to a window away from the true
/// step, which would dilute the section means computed around the candidate.
fn refine_split(trace: &Trace, split: usize, window: usize) -> usize {
    let n = trace.len();
    let lo = split.saturating_sub(window).max(1);
    let hi = (split + window).min(n - 1);
    let mut best = split;
    let mut best_score = f64::MIN;
    for c in lo..=hi {
        let a = c.saturating_sub(window);
        let b = (c + window).min(n);
        let score = (trace.segment_mean(c, b) - trace.segment_mean(a, c)).abs();
        if score > best_score {
            best_score = score;
            best = c;
        }
    }
    best
}

/// Heuristic lower bound on the single-fluorophore intensity: 0.9 times the
/// mode intensity. On baseline-corrected traces the background sits at zero
/// and would dominate the histogram, so a non-positive mode falls back to
/// the mode of the strictly positive intensities, and failing that to the
/// trace standard deviation.
fn auto_floor(trace: &Trace) -> f64 {
    let mode = mode_intensity(trace.intensities());
    if 0.9 * mode > 0.0 {
        return 0.9 * mode;
    }
    let positive: Vec<f64> = trace
        .intensities()
        .iter()
        .copied()
        .filter(|&y| y > 0.0)
        .collect();
    if positive.len() >= 2 {
        let mode = mode_intensity(&positive);
        if 0.9 * mode > 0.0 {
            return 0.9 * mode;
        }
    }
    trace.std().max(1.0)
}

/// Mode of the intensity histogram (64 bins over the observed range).
fn mode_intensity(ys: &[f64]) -> f64 {
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for &y in ys {
        lo = lo.min(y);
        hi = hi.max(y);
    }
    if hi <= lo {
        return lo;
    }
    const BINS: usize = 64;
    let width = (hi - lo) / BINS as f64;
    let mut counts = [0usize; BINS];
    for &y in ys {
        let b = (((y - lo) / width) as usize).min(BINS - 1);
        counts[b] += 1;
    }
    let best = counts
        .iter()
        .enumerate()
        .max_by_key(|&(_, c)| *c)
        .unwrap()
        .0;
    lo + (best as f64 + 0.5) * width
}

/// Pools per-trace estimates into prior hyperparameters with a weighted
/// average, and derives the prior variances and proposal scales from the
/// pooled means. Sampler constants are taken from `Hyperparams::default()`.
pub fn pool_hyperparams(
    estimates: &[TraceHyperEstimate],
    scaling_f: f64,
    scaling_b: f64,
) -> Result<Hyperparams> {
    if estimates.is_empty() {
        return Err(Error::InvalidConfig("no estimates to pool".into()));
    }
    // low-confidence estimates carry no signal of their own; keep them only
    // when nothing better exists
    let confident: Vec<&TraceHyperEstimate> =
        estimates.iter().filter(|e| !e.low_confidence).collect();
    let estimates: Vec<&TraceHyperEstimate> = if confident.is_empty() {
        estimates.iter().collect()
    } else {
        confident
    };
    let total: f64 = estimates.iter().map(|e| e.weight).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroPoolWeight);
    }
    let avg = |f: fn(&TraceHyperEstimate) -> f64| -> f64 {
        estimates.iter().map(|e| e.weight * f(e)).sum::<f64>() / total
    };
    let eta_f = avg(|e| e.eta_f_hat);
    let eta_b = avg(|e| e.eta_b_hat);
    let alpha_f = avg(|e| e.alpha_f_hat);
    let beta_f = avg(|e| e.beta_f_hat);
    let alpha_b = avg(|e| e.alpha_b_hat);
    let beta_b = avg(|e| e.beta_b_hat);

    let background_scale = eta_b.abs().max(BACKGROUND_FLOOR_FRACTION * eta_f).max(1.0);
    let nu_f = scaling_f * eta_f;
    let nu_b = scaling_b * background_scale;
    let proposal_sd_mu_f = (PROPOSAL_SD_SCALE * eta_f).max(nu_f.sqrt());
    let proposal_sd_mu_b = (PROPOSAL_SD_SCALE * eta_b.abs()).max(nu_b.sqrt());

    let pooled = Hyperparams {
        eta_f,
        nu_f,
        eta_b,
        nu_b,
        alpha_f,
        beta_f,
        alpha_b,
        beta_b,
        proposal_sd_mu_f,
        proposal_sd_mu_b,
        ..Hyperparams::default()
    };
    pooled.validate()?;
    Ok(pooled)
}

/// What the Gibbs updates target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GibbsTarget {
    /// Likelihood times priors.
    Posterior,
    /// Priors alone; used for sampler calibration checks.
    PriorOnly,
}

/// One Metropolis-within-Gibbs sweep over the intensity parameters, in the
/// fixed order mu_f, mu_b, sigma_f2, sigma_b2.
///
/// Mean parameters use symmetric Gaussian random walks with the pooled
/// proposal scales; variance parameters use a random walk with standard
/// deviation proportional to the current value, and non-positive proposals
/// are rejected outright. Dwelling counts are not refit within the sweep.
pub fn gibbs_update<R: Rng + ?Sized>(
    trace: &Trace,
    state: &ChangePointState,
    params: &IntensityParams,
    hyper: &Hyperparams,
    rng: &mut R,
) -> IntensityParams {
    gibbs_update_with(trace, state, params, hyper, GibbsTarget::Posterior, rng)
}

pub fn gibbs_update_with<R: Rng + ?Sized>(
    trace: &Trace,
    state: &ChangePointState,
    params: &IntensityParams,
    hyper: &Hyperparams,
    target: GibbsTarget,
    rng: &mut R,
) -> IntensityParams {
    let mut cur = *params;

    // mu_f (kept positive to preserve the parameter invariants)
    let prop = cur.mu_f + draw_normal(rng) * hyper.proposal_sd_mu_f;
    if prop > 0.0 {
        let cand = IntensityParams { mu_f: prop, ..cur };
        let delta = log_likelihood_delta(trace, state, &cur, &cand, target)
            + ln_normal_pdf(prop, hyper.eta_f, hyper.nu_f)
            - ln_normal_pdf(cur.mu_f, hyper.eta_f, hyper.nu_f);
        if accept(delta, rng) {
            cur = cand;
        }
    }

    // mu_b
    let prop = cur.mu_b + draw_normal(rng) * hyper.proposal_sd_mu_b;
    {
        let cand = IntensityParams { mu_b: prop, ..cur };
        let delta = log_likelihood_delta(trace, state, &cur, &cand, target)
            + ln_normal_pdf(prop, hyper.eta_b, hyper.nu_b)
            - ln_normal_pdf(cur.mu_b, hyper.eta_b, hyper.nu_b);
        if accept(delta, rng) {
            cur = cand;
        }
    }

    // sigma_f2
    let scale = hyper.variance_proposal_scale;
    let prop = cur.sigma_f2 + draw_normal(rng) * scale * cur.sigma_f2;
    if prop > 0.0 {
        let cand = IntensityParams {
            sigma_f2: prop,
            ..cur
        };
        let delta = log_likelihood_delta(trace, state, &cur, &cand, target)
            + ln_inv_gamma_pdf(prop, hyper.alpha_f, hyper.beta_f)
            - ln_inv_gamma_pdf(cur.sigma_f2, hyper.alpha_f, hyper.beta_f)
            + hastings_scale_walk(cur.sigma_f2, prop, scale);
        if accept(delta, rng) {
            cur = cand;
        }
    }

    // sigma_b2
    let prop = cur.sigma_b2 + draw_normal(rng) * scale * cur.sigma_b2;
    if prop > 0.0 {
        let cand = IntensityParams {
            sigma_b2: prop,
            ..cur
        };
        let delta = log_likelihood_delta(trace, state, &cur, &cand, target)
            + ln_inv_gamma_pdf(prop, hyper.alpha_b, hyper.beta_b)
            - ln_inv_gamma_pdf(cur.sigma_b2, hyper.alpha_b, hyper.beta_b)
            + hastings_scale_walk(cur.sigma_b2, prop, scale);
        if accept(delta, rng) {
            cur = cand;
        }
    }

    cur
}

/// Hastings correction for the variance random walk, whose step scales with
/// the current value: log q(prop -> cur) - log q(cur -> prop).
fn hastings_scale_walk(cur: f64, prop: f64, scale: f64) -> f64 {
    let d = prop - cur;
    let back = d * d / (2.0 * scale * scale * prop * prop) + (scale * prop).ln();
    let fwd = d * d / (2.0 * scale * scale * cur * cur) + (scale * cur).ln();
    fwd - back
}

/// Joint log prior of the intensity parameters under the pooled
/// hyperparameters.
pub fn log_intensity_prior(params: &IntensityParams, hyper: &Hyperparams) -> f64 {
    ln_normal_pdf(params.mu_f, hyper.eta_f, hyper.nu_f)
        + ln_normal_pdf(params.mu_b, hyper.eta_b, hyper.nu_b)
        + ln_inv_gamma_pdf(params.sigma_f2, hyper.alpha_f, hyper.beta_f)
        + ln_inv_gamma_pdf(params.sigma_b2, hyper.alpha_b, hyper.beta_b)
}

fn log_likelihood_delta(
    trace: &Trace,
    state: &ChangePointState,
    cur: &IntensityParams,
    cand: &IntensityParams,
    target: GibbsTarget,
) -> f64 {
    match target {
        GibbsTarget::PriorOnly => 0.0,
        GibbsTarget::Posterior => {
            log_likelihood_bounds(trace, state.bounds(), state.counts(), cand)
                - log_likelihood_bounds(trace, state.bounds(), state.counts(), cur)
        }
    }
}

fn draw_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().max(f64::MIN_POSITIVE).ln() < log_ratio
}

/// Log density of N(mean, var) up to the shared 2-pi constant.
fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean) * (x - mean) / var - 0.5 * var.ln()
}

/// Log density of Inv-Gamma(shape, scale) up to normalisation.
fn ln_inv_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -(shape + 1.0) * x.ln() - scale / x
}
