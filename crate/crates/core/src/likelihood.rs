//! Gaussian step likelihood, change-point location prior, and the
//! per-dwelling fluorophore count fitter.

use crate::error::{Error, Result};
use crate::model::{ChangePointState, IntensityParams};
use crate::trace::Trace;

const LN_2PI: f64 = 1.8378770664093453;

/// Log-likelihood of the trace under a fitted state:
/// `sum_i log N(y_i; mu_f n_i + mu_b, sigma_f2 n_i + sigma_b2)`.
pub fn log_likelihood(
    trace: &Trace,
    state: &ChangePointState,
    params: &IntensityParams,
) -> Result<f64> {
    Ok(log_likelihood_bounds(
        trace,
        state.bounds(),
        state.counts(),
        params,
    ))
}

/// Segment-sum form of the likelihood; O(1) per dwelling.
pub(crate) fn log_likelihood_bounds(
    trace: &Trace,
    bounds: &[usize],
    counts: &[u32],
    params: &IntensityParams,
) -> f64 {
    let mut ll = 0.0;
    for (j, &n) in counts.iter().enumerate() {
        let (lo, hi) = (bounds[j], bounds[j + 1]);
        let mu = params.level(n);
        let var = params.variance(n);
        let m = (hi - lo) as f64;
        ll -= 0.5 * (trace.segment_sq_dev(lo, hi, mu) / var + m * (LN_2PI + var.ln()));
    }
    ll
}

/// Log of the even-numbered order-statistic prior on `k` interior
/// change-point locations over `(0, L)`:
/// `(2k+1)! / L^(2k+1) * prod_i (s_{i+1} - s_i)`.
///
/// Returns an error when two locations coincide (zero gap).
pub fn log_location_prior(interior: &[f64], l: f64) -> Result<f64> {
    let k = interior.len();
    let mut lp = ln_factorial(2 * k + 1) - (2 * k + 1) as f64 * l.ln();
    let mut prev = 0.0;
    for &s in interior.iter().chain(std::iter::once(&l)) {
        let gap = s - prev;
        if gap <= 0.0 {
            return Err(Error::DegenerateLocations(s));
        }
        lp += gap.ln();
        prev = s;
    }
    Ok(lp)
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|v| (v as f64).ln()).sum()
}

/// Fits per-dwelling fluorophore counts for the dwellings delimited by
/// `interior` change points, enforcing a genuine level change at every
/// change point.
///
/// Dwellings are processed from the end of the trace to the beginning. Each
/// count minimises `|mean(y_j) - (mu_f n + mu_b)|` over non-negative
/// integers; when the optimum ties the already-fixed later neighbour, the
/// count is perturbed by one in the direction of smaller residual (ties
/// broken upward, and a zero count tied with a zero neighbour is forced
/// to one).
pub fn fit_dwelling_counts(
    trace: &Trace,
    interior: &[f64],
    params: &IntensityParams,
) -> Result<Vec<u32>> {
    let l = trace.l_end();
    let mut s = Vec::with_capacity(interior.len() + 2);
    s.push(0.0);
    s.extend_from_slice(interior);
    s.push(l);
    let bounds = frame_bounds(trace, &s)?;
    Ok(fit_counts_in_bounds(trace, &bounds, params))
}

/// Frame bounds for the dwellings delimited by `s` (with sentinels).
///
/// Frame `i` belongs to dwelling `j` iff `s[j] <= t_i < s[j+1]`; the final
/// frame always belongs to the last dwelling.
pub(crate) fn frame_bounds(trace: &Trace, s: &[f64]) -> Result<Vec<usize>> {
    let n_dwell = s.len() - 1;
    let mut bounds = Vec::with_capacity(s.len());
    bounds.push(0);
    for j in 1..n_dwell {
        bounds.push(trace.first_frame_at_or_after(s[j]));
    }
    bounds.push(trace.len());
    for j in 0..n_dwell {
        if bounds[j] >= bounds[j + 1] {
            return Err(Error::EmptyDwelling {
                index: j,
                lo: s[j],
                hi: s[j + 1],
            });
        }
    }
    Ok(bounds)
}

pub(crate) fn fit_counts_in_bounds(
    trace: &Trace,
    bounds: &[usize],
    params: &IntensityParams,
) -> Vec<u32> {
    let n_dwell = bounds.len() - 1;
    let mut counts = vec![0u32; n_dwell];
    for j in (0..n_dwell).rev() {
        let mean = trace.segment_mean(bounds[j], bounds[j + 1]);
        let mut n = best_count(mean, params);
        if j + 1 < n_dwell && n == counts[j + 1] {
            n = perturb_count(mean, n, params);
        }
        counts[j] = n;
    }
    counts
}

/// Non-negative integer minimising |mean - (mu_f n + mu_b)|; exact halfway
/// ties round upward.
fn best_count(mean: f64, params: &IntensityParams) -> u32 {
    let raw = (mean - params.mu_b) / params.mu_f;
    if raw <= 0.0 {
        return 0;
    }
    // round-half-up
    (raw + 0.5).floor() as u32
}

/// Forced perturbation: move one step away from `n`, choosing the side with
/// the smaller residual. Ties prefer `n + 1`; at `n = 0` the only option
/// is 1.
fn perturb_count(mean: f64, n: u32, params: &IntensityParams) -> u32 {
    if n == 0 {
        return 1;
    }
    let up = (mean - params.level(n + 1)).abs();
    let down = (mean - params.level(n - 1)).abs();
    if up <= down {
        n + 1
    } else {
        n - 1
    }
}
