//! Model state and prior/proposal constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{fit_counts_in_bounds, frame_bounds};
use crate::trace::Trace;

/// The four continuous intensity parameters.
///
/// Frame `i` with `n_i` active fluorophores is modelled as
/// `N(mu_f * n_i + mu_b, sigma_f2 * n_i + sigma_b2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityParams {
    pub mu_f: f64,
    pub mu_b: f64,
    pub sigma_f2: f64,
    pub sigma_b2: f64,
}

impl IntensityParams {
    pub fn new(mu_f: f64, mu_b: f64, sigma_f2: f64, sigma_b2: f64) -> Result<Self> {
        if !(mu_f > 0.0) {
            return Err(Error::InvalidConfig("mu_f must be positive".into()));
        }
        if !(sigma_f2 > 0.0) || !(sigma_b2 > 0.0) {
            return Err(Error::InvalidConfig("variances must be positive".into()));
        }
        Ok(Self {
            mu_f,
            mu_b,
            sigma_f2,
            sigma_b2,
        })
    }

    /// Mean intensity of a dwelling with `n` active fluorophores.
    pub fn level(&self, n: u32) -> f64 {
        self.mu_f * n as f64 + self.mu_b
    }

    /// Per-frame variance with `n` active fluorophores.
    pub fn variance(&self, n: u32) -> f64 {
        self.sigma_f2 * n as f64 + self.sigma_b2
    }
}

/// All fixed prior and proposal constants of the sampler.
///
/// `c_cap` and `gamma_cap` are the maximum allowed sums `b_k + d_k` and
/// `a_{k,kt} + r_{k,kt}`; the proportionality constants themselves are
/// derived from these caps by the move kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Normal prior mean/variance for the single-fluorophore intensity.
    pub eta_f: f64,
    pub nu_f: f64,
    /// Normal prior mean/variance for the background intensity.
    pub eta_b: f64,
    pub nu_b: f64,
    /// Inverse-gamma shape/scale for the single-fluorophore variance.
    pub alpha_f: f64,
    pub beta_f: f64,
    /// Inverse-gamma shape/scale for the background variance.
    pub alpha_b: f64,
    pub beta_b: f64,
    /// Poisson mean for the number of change points.
    pub lambda: f64,
    /// Poisson mean for the number of short-lived-state change points.
    pub lambda_t: f64,
    /// Maximum number of change points.
    pub k_max: usize,
    /// Maximum short-lived-state duration, in trace time units.
    pub tau: f64,
    /// Target duration-acceptance probability at separation tau.
    pub p_accept: f64,
    /// Cap on b_k + d_k.
    pub c_cap: f64,
    /// Cap on a_{k,kt} + r_{k,kt}.
    pub gamma_cap: f64,
    /// Random-walk proposal standard deviations for mu_f and mu_b.
    pub proposal_sd_mu_f: f64,
    pub proposal_sd_mu_b: f64,
    /// Variance proposals use sd = variance_proposal_scale * current value.
    pub variance_proposal_scale: f64,
}

impl Hyperparams {
    /// Exponential rate of the short-lived duration law,
    /// `-log(p_accept) / tau`.
    pub fn lambda_d(&self) -> f64 {
        -self.p_accept.ln() / self.tau
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu_f > 0.0 && self.nu_b > 0.0) {
            return Err(Error::InvalidConfig(
                "prior variances must be positive".into(),
            ));
        }
        if !(self.alpha_f > 0.0 && self.beta_f > 0.0 && self.alpha_b > 0.0 && self.beta_b > 0.0) {
            return Err(Error::InvalidConfig(
                "inverse-gamma parameters must be positive".into(),
            ));
        }
        if !(self.lambda > 0.0 && self.lambda_t > 0.0) {
            return Err(Error::InvalidConfig(
                "Poisson means must be positive".into(),
            ));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidConfig("tau must be positive".into()));
        }
        if !(self.p_accept > 0.0 && self.p_accept < 1.0) {
            return Err(Error::InvalidConfig("p_accept must lie in (0, 1)".into()));
        }
        if !(self.c_cap > 0.0 && self.c_cap <= 1.0)
            || !(self.gamma_cap > 0.0 && self.gamma_cap <= 1.0)
        {
            return Err(Error::InvalidConfig("move caps must lie in (0, 1]".into()));
        }
        if self.c_cap + self.gamma_cap > 1.0 {
            return Err(Error::InvalidConfig(
                "c_cap + gamma_cap must not exceed 1".into(),
            ));
        }
        Ok(())
    }

    /// Default sampler constants with placeholder priors around a unit
    /// fluorophore intensity. Prior fields are normally overwritten by the
    /// hyperparameter estimation pre-pass.
    pub fn with_priors(eta_f: f64, nu_f: f64, eta_b: f64, nu_b: f64) -> Self {
        Self {
            eta_f,
            nu_f,
            eta_b,
            nu_b,
            alpha_f: eta_f,
            beta_f: eta_f * (eta_f + 1.0),
            alpha_b: 1.0,
            beta_b: 2.0,
            ..Self::default()
        }
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            eta_f: 1000.0,
            nu_f: 5.0,
            eta_b: 0.0,
            nu_b: 10.0,
            alpha_f: 1000.0,
            beta_f: 1000.0 * 1001.0,
            alpha_b: 100.0,
            beta_b: 100.0 * 101.0,
            lambda: 2.5,
            lambda_t: 0.001,
            k_max: 50,
            tau: 10.0,
            p_accept: 0.5,
            c_cap: 0.5,
            gamma_cap: 0.1,
            proposal_sd_mu_f: 5.0,
            proposal_sd_mu_b: 3.0,
            variance_proposal_scale: 0.1,
        }
    }
}

/// Trans-dimensional model state: change-point locations, per-dwelling
/// fluorophore counts, and the short-lived-state labelling.
///
/// `s` always carries the sentinels `s[0] = 0` and `s[k+1] = L`, so a state
/// with `k` change points stores `k + 2` locations and `k + 1` counts.
/// States are immutable; moves construct new states via [`ChangePointState::fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChangePointState {
    s: Vec<f64>,
    n: Vec<u32>,
    /// Frame index bounds: dwelling j covers frames [bounds[j], bounds[j+1]).
    bounds: Vec<usize>,
    /// Per interior change point: whether it belongs to a short-lived pair.
    short_flags: Vec<bool>,
    k_t: usize,
}

impl ChangePointState {
    /// Builds a state from interior change-point locations, fitting dwelling
    /// counts and classifying short-lived pairs.
    ///
    /// `interior` must be strictly increasing and lie in `(0, L)`. Returns an
    /// error when any dwelling would contain no frames; callers treat this as
    /// a proposal rejection.
    pub fn fit(
        trace: &Trace,
        interior: &[f64],
        params: &IntensityParams,
        tau: f64,
    ) -> Result<Self> {
        let l = trace.l_end();
        let mut s = Vec::with_capacity(interior.len() + 2);
        s.push(0.0);
        s.extend_from_slice(interior);
        s.push(l);
        for w in s.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::DegenerateLocations(w[1]));
            }
        }
        if interior.iter().any(|&t| t <= 0.0 || t >= l) {
            return Err(Error::InvalidConfig(
                "interior change points must lie in (0, L)".into(),
            ));
        }
        let bounds = frame_bounds(trace, &s)?;
        let n = fit_counts_in_bounds(trace, &bounds, params);
        let (k_t, short_flags) = classify_short_pairs(&s, &n, tau);
        Ok(Self {
            s,
            n,
            bounds,
            short_flags,
            k_t,
        })
    }

    /// State with no change points (single dwelling over the whole trace).
    pub fn flat(trace: &Trace, params: &IntensityParams, tau: f64) -> Result<Self> {
        Self::fit(trace, &[], params, tau)
    }

    /// Number of change points.
    pub fn k(&self) -> usize {
        self.s.len() - 2
    }

    /// Number of change points participating in short-lived pairs.
    pub fn k_t(&self) -> usize {
        self.k_t
    }

    /// Full location vector including the 0 and L sentinels.
    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// Interior change-point locations.
    pub fn interior(&self) -> &[f64] {
        &self.s[1..self.s.len() - 1]
    }

    /// Per-dwelling active fluorophore counts.
    pub fn counts(&self) -> &[u32] {
        &self.n
    }

    /// Frame index bounds per dwelling.
    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    pub fn short_flags(&self) -> &[bool] {
        &self.short_flags
    }

    /// Per-frame active fluorophore counts implied by the state.
    pub fn frame_counts(&self, n_frames: usize) -> Vec<u32> {
        let mut out = vec![0u32; n_frames];
        for j in 0..self.n.len() {
            for slot in &mut out[self.bounds[j]..self.bounds[j + 1]] {
                *slot = self.n[j];
            }
        }
        out
    }

    /// Dwelling index containing time `t`.
    pub fn dwelling_of(&self, t: f64) -> usize {
        // s[j] <= t < s[j+1]; the final dwelling is closed on the right.
        let idx = self.s.partition_point(|&x| x <= t);
        idx.saturating_sub(1).min(self.n.len() - 1)
    }

    /// Whether interior change point `j` (1-based within `s`) is part of a
    /// short-lived pair.
    pub fn is_short(&self, j: usize) -> bool {
        self.short_flags[j - 1]
    }
}

/// Deterministic short-lived-pair labelling.
///
/// Consecutive change points `s[i], s[i+1]` form a pair iff the dwelling
/// counts before and after are equal and differ from the count in between,
/// and the separation is at most `tau`. Pairing is greedy left to right and
/// each change point joins at most one pair.
pub fn classify_short_pairs(s: &[f64], n: &[u32], tau: f64) -> (usize, Vec<bool>) {
    let k = s.len() - 2;
    let mut flags = vec![false; k];
    if k < 2 {
        return (0, flags);
    }
    let mut i = 1; // index into s of the left change point of a candidate pair
    while i < k {
        if pair_qualifies(s, n, i, tau) {
            flags[i - 1] = true;
            flags[i] = true;
            i += 2;
        } else {
            i += 1;
        }
    }
    let k_t = flags.iter().filter(|&&f| f).count();
    (k_t, flags)
}

/// Whether the consecutive change points `s[i]` and `s[i+1]` satisfy the
/// short-lived-state pattern and duration requirements.
pub(crate) fn pair_qualifies(s: &[f64], n: &[u32], i: usize, tau: f64) -> bool {
    let k = s.len() - 2;
    if i < 1 || i + 1 > k {
        return false;
    }
    n[i - 1] == n[i + 1] && n[i] != n[i - 1] && (s[i + 1] - s[i]) <= tau
}
