//! Chain orchestration: the per-iteration loop (change-point move followed
//! by a Gibbs sweep), parallel multi-chain execution, block convergence
//! testing with convergence-gated extension, and posterior summarisation.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::psrf;
use crate::error::Result;
use crate::gibbs::{gibbs_update, log_intensity_prior};
use crate::model::{ChangePointState, Hyperparams, IntensityParams};
use crate::moves::{MoveKernel, MoveKind};
use crate::proposal::{build_proposal, ProposalDistribution};
use crate::rng::stream_rng;
use crate::trace::Trace;

/// Iteration and convergence settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Initial iterations per chain.
    pub n_iter: usize,
    /// Fraction of iterations discarded as burn-in (recomputed against the
    /// extended total after each extension round).
    pub burn_in_fraction: f64,
    /// Iterations added per extension round while unconverged.
    pub extension: usize,
    /// Hard cap on iterations per chain.
    pub max_iter: usize,
    pub n_chains: usize,
    pub psrf_threshold: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 20_000,
            burn_in_fraction: 0.5,
            extension: 10_000,
            max_iter: 60_000,
            n_chains: 3,
            psrf_threshold: 1.2,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 2 {
            return Err(crate::Error::InvalidConfig(
                "need at least two chains for convergence testing".into(),
            ));
        }
        if !(self.burn_in_fraction > 0.0 && self.burn_in_fraction < 1.0) {
            return Err(crate::Error::InvalidConfig(
                "burn_in_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.n_iter < 2 {
            return Err(crate::Error::InvalidConfig(
                "n_iter must leave at least one post-burn-in iteration".into(),
            ));
        }
        Ok(())
    }
}

/// Proposal-distribution construction settings, denominated in frames so
/// that the defaults work for any frame width.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProposalSettings {
    pub window_size: usize,
    /// Gaussian bump variance in frames squared. The default of 25 gives a
    /// five-frame bump standard deviation (100 us at 20 us frames).
    pub base_variance: f64,
    /// Grid resolution in frames (1.0 = one grid point per frame).
    pub resolution_frames: f64,
}

impl Default for ProposalSettings {
    fn default() -> Self {
        Self {
            window_size: 10,
            base_variance: 25.0,
            resolution_frames: 1.0,
        }
    }
}

impl ProposalSettings {
    /// Builds the proposal distribution, converting the frame-denominated
    /// settings into the trace's time units.
    pub fn build(&self, trace: &Trace) -> Result<ProposalDistribution> {
        let dt = trace.frame_dt();
        build_proposal(
            trace,
            self.window_size,
            self.base_variance * dt * dt,
            self.resolution_frames * dt,
        )
    }
}

/// Everything `analyze` needs beyond the trace and pooled priors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub proposal: ProposalSettings,
    /// When set, overrides `hyper.tau` with this many frames of trace time.
    #[serde(default)]
    pub tau_frames: Option<f64>,
}

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub k_t: usize,
    /// Interior change-point locations, sorted.
    pub s: Vec<f64>,
    /// Per-dwelling counts.
    pub n: Vec<u32>,
    pub params: IntensityParams,
    pub log_posterior: f64,
    pub move_kind: MoveKind,
    pub log_acceptance: f64,
    pub accepted: bool,
}

/// Recorded trajectory of a single chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainSample {
    pub records: Vec<IterationRecord>,
}

impl ChainSample {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn k_series(&self, from: usize) -> Vec<f64> {
        self.records[from..].iter().map(|r| r.k as f64).collect()
    }

    fn param_series(&self, from: usize, which: usize) -> Vec<f64> {
        self.records[from..]
            .iter()
            .map(|r| match which {
                0 => r.params.mu_f,
                1 => r.params.mu_b,
                2 => r.params.sigma_f2,
                _ => r.params.sigma_b2,
            })
            .collect()
    }

    fn modal_k(&self, from: usize) -> Option<usize> {
        let mut counts = std::collections::BTreeMap::new();
        for r in &self.records[from..] {
            *counts.entry(r.k).or_insert(0usize) += 1;
        }
        // ties resolve to the smallest k
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
    }
}

/// A single chain with its own RNG stream; supports incremental extension.
pub struct Chain<'a> {
    kernel: MoveKernel<'a>,
    trace: &'a Trace,
    hyper: &'a Hyperparams,
    state: ChangePointState,
    params: IntensityParams,
    rng: ChaCha8Rng,
    pub sample: ChainSample,
}

impl<'a> Chain<'a> {
    pub fn new(
        trace: &'a Trace,
        dist: &'a ProposalDistribution,
        hyper: &'a Hyperparams,
        state: ChangePointState,
        params: IntensityParams,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        Ok(Self {
            kernel: MoveKernel::new(trace, dist, hyper)?,
            trace,
            hyper,
            state,
            params,
            rng: stream_rng(seed, stream),
            sample: ChainSample::default(),
        })
    }

    /// Runs `n` iterations: change-point move, then one Gibbs sweep.
    pub fn run(&mut self, n: usize) {
        self.sample.records.reserve(n);
        for _ in 0..n {
            let (next, outcome) = self.kernel.step(&self.state, &self.params, &mut self.rng);
            self.state = next;
            self.params = gibbs_update(
                self.trace,
                &self.state,
                &self.params,
                self.hyper,
                &mut self.rng,
            );
            let log_posterior = self.kernel.log_state_posterior(&self.state, &self.params)
                + log_intensity_prior(&self.params, self.hyper);
            self.sample.records.push(IterationRecord {
                k: self.state.k(),
                k_t: self.state.k_t(),
                s: self.state.interior().to_vec(),
                n: self.state.counts().to_vec(),
                params: self.params,
                log_posterior,
                move_kind: outcome.kind,
                log_acceptance: outcome.log_acceptance,
                accepted: outcome.accepted,
            });
        }
    }
}

/// Runs a single chain for `n_iter` iterations from the given start state.
#[allow(clippy::too_many_arguments)]
pub fn run_chain(
    trace: &Trace,
    dist: &ProposalDistribution,
    hyper: &Hyperparams,
    state: ChangePointState,
    params: IntensityParams,
    n_iter: usize,
    seed: u64,
    stream: u64,
) -> Result<ChainSample> {
    let mut chain = Chain::new(trace, dist, hyper, state, params, seed, stream)?;
    chain.run(n_iter);
    Ok(chain.sample)
}

/// Outcome of the block convergence test for one chain pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCheck {
    pub chains: (usize, usize),
    pub k_psrf: f64,
    pub modal_k: (usize, usize),
    /// Per-coordinate PSRF of the change-point locations, present when the
    /// modal k agreed and enough iterations were retained.
    pub location_psrf: Vec<f64>,
    pub param_psrf: [f64; 4],
    pub retained: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub pair: Option<(usize, usize)>,
    pub burn_in: usize,
    pub checks: Vec<PairCheck>,
}

/// Minimum retained modal-k iterations for the location block to count as
/// evidence.
const MIN_RETAINED: usize = 10;

/// Block convergence protocol over all chain pairs.
///
/// Per pair: (1) the PSRF of k must pass; (2) the modal k of both chains
/// must agree; (3) only modal-k iterations are retained, truncated from the
/// end to the common minimum count, and each location coordinate must pass;
/// (4) the four intensity parameters must pass. The report carries the
/// first passing pair.
pub fn check_convergence(samples: &[&ChainSample], config: &ChainConfig) -> ConvergenceReport {
    let n = samples.iter().map(|s| s.len()).min().unwrap_or(0);
    let burn_in = (config.burn_in_fraction * n as f64).floor() as usize;
    let mut checks = Vec::new();
    let mut pair = None;
    let threshold = config.psrf_threshold;

    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let check = check_pair(samples[i], samples[j], (i, j), burn_in, threshold);
            if check.passed && pair.is_none() {
                pair = Some((i, j));
            }
            checks.push(check);
        }
    }
    ConvergenceReport {
        converged: pair.is_some(),
        pair,
        burn_in,
        checks,
    }
}

fn check_pair(
    a: &ChainSample,
    b: &ChainSample,
    ids: (usize, usize),
    burn_in: usize,
    threshold: f64,
) -> PairCheck {
    let mut check = PairCheck {
        chains: ids,
        k_psrf: f64::INFINITY,
        modal_k: (usize::MAX, usize::MAX),
        location_psrf: Vec::new(),
        param_psrf: [f64::INFINITY; 4],
        retained: 0,
        passed: false,
    };
    if a.len() <= burn_in || b.len() <= burn_in {
        return check;
    }

    // block 1: number of change points
    let ka = a.k_series(burn_in);
    let kb = b.k_series(burn_in);
    check.k_psrf = psrf(&[&ka, &kb]);
    if check.k_psrf > threshold {
        return check;
    }

    // block 2: modal k must agree
    let (Some(ma), Some(mb)) = (a.modal_k(burn_in), b.modal_k(burn_in)) else {
        return check;
    };
    check.modal_k = (ma, mb);
    if ma != mb {
        return check;
    }

    // block 3: per-coordinate location PSRF on retained modal-k iterations
    fn retain(s: &ChainSample, burn_in: usize, k: usize) -> Vec<&IterationRecord> {
        s.records[burn_in..].iter().filter(|r| r.k == k).collect()
    }
    let ra = retain(a, burn_in, ma);
    let rb = retain(b, burn_in, ma);
    let keep = ra.len().min(rb.len());
    check.retained = keep;
    if keep < MIN_RETAINED {
        return check;
    }
    let ra = &ra[ra.len() - keep..];
    let rb = &rb[rb.len() - keep..];
    for coord in 0..ma {
        let xa: Vec<f64> = ra.iter().map(|r| r.s[coord]).collect();
        let xb: Vec<f64> = rb.iter().map(|r| r.s[coord]).collect();
        let v = psrf(&[&xa, &xb]);
        check.location_psrf.push(v);
    }
    if check.location_psrf.iter().any(|&v| v > threshold) {
        return check;
    }

    // block 4: intensity parameters
    for which in 0..4 {
        let xa = a.param_series(burn_in, which);
        let xb = b.param_series(burn_in, which);
        check.param_psrf[which] = psrf(&[&xa, &xb]);
    }
    if check.param_psrf.iter().any(|&v| v > threshold) {
        return check;
    }

    check.passed = true;
    check
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn summarise_param(mut values: Vec<f64>) -> ParamSummary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    values.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let pick = |q: f64| -> f64 {
        let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
        values[idx]
    };
    ParamSummary {
        mean,
        ci_low: pick(0.025),
        ci_high: pick(0.975),
    }
}

/// Posterior summary of one analysed trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub converged: bool,
    pub chain_pair: Option<(usize, usize)>,
    pub total_iterations: usize,
    pub burn_in: usize,
    pub mode_k: usize,
    pub k_t: usize,
    /// Posterior-mean change-point locations conditional on the modal k.
    pub change_points: Vec<f64>,
    pub mu_f: ParamSummary,
    pub mu_b: ParamSummary,
    pub sigma_f2: ParamSummary,
    pub sigma_b2: ParamSummary,
    /// Per-frame fluorophore counts implied by the summary configuration.
    pub frame_counts: Vec<u32>,
    /// Predicted intensity trace `mu_f * n_i + mu_b`.
    pub predicted_intensity: Vec<f64>,
}

/// Builds the posterior summary from a pair of chains, using post-burn-in
/// records pooled across both.
pub fn summarise(
    trace: &Trace,
    a: &ChainSample,
    b: &ChainSample,
    burn_in: usize,
    hyper: &Hyperparams,
    converged: bool,
    chain_pair: Option<(usize, usize)>,
) -> PosteriorSummary {
    let pooled: Vec<&IterationRecord> = a.records[burn_in.min(a.len())..]
        .iter()
        .chain(&b.records[burn_in.min(b.len())..])
        .collect();
    assert!(!pooled.is_empty(), "summary requires post-burn-in samples");

    let mut k_counts = std::collections::BTreeMap::new();
    for r in &pooled {
        *k_counts.entry(r.k).or_insert(0usize) += 1;
    }
    let mode_k = k_counts
        .into_iter()
        .max_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0)))
        .map(|(k, _)| k)
        .unwrap();

    let modal: Vec<&&IterationRecord> = pooled.iter().filter(|r| r.k == mode_k).collect();
    let mut change_points = vec![0.0f64; mode_k];
    for r in &modal {
        for (c, &s) in r.s.iter().enumerate() {
            change_points[c] += s;
        }
    }
    for c in change_points.iter_mut() {
        *c /= modal.len() as f64;
    }

    let mu_f = summarise_param(pooled.iter().map(|r| r.params.mu_f).collect());
    let mu_b = summarise_param(pooled.iter().map(|r| r.params.mu_b).collect());
    let sigma_f2 = summarise_param(pooled.iter().map(|r| r.params.sigma_f2).collect());
    let sigma_b2 = summarise_param(pooled.iter().map(|r| r.params.sigma_b2).collect());
    let mean_params = IntensityParams {
        mu_f: mu_f.mean,
        mu_b: mu_b.mean,
        sigma_f2: sigma_f2.mean,
        sigma_b2: sigma_b2.mean,
    };

    // the summary configuration: mean locations when they fit, otherwise the
    // highest-posterior modal-k record (keeps counts consistent with the
    // reported change points)
    let state = ChangePointState::fit(trace, &change_points, &mean_params, hyper.tau)
        .or_else(|_| {
            let best = modal
                .iter()
                .max_by(|x, y| x.log_posterior.partial_cmp(&y.log_posterior).unwrap())
                .unwrap();
            change_points = best.s.clone();
            ChangePointState::fit(trace, &best.s, &mean_params, hyper.tau)
        })
        .expect("recorded states always refit");

    let frame_counts = state.frame_counts(trace.len());
    let predicted_intensity = frame_counts
        .iter()
        .map(|&n| mean_params.mu_f * n as f64 + mean_params.mu_b)
        .collect();

    PosteriorSummary {
        converged,
        chain_pair,
        total_iterations: a.len(),
        burn_in,
        mode_k,
        k_t: state.k_t(),
        change_points,
        mu_f,
        mu_b,
        sigma_f2,
        sigma_b2,
        frame_counts,
        predicted_intensity,
    }
}

/// Full analysis output: the summary plus raw chains and the final
/// convergence report.
#[derive(Debug)]
pub struct AnalysisResult {
    pub summary: PosteriorSummary,
    pub chains: Vec<ChainSample>,
    pub convergence: ConvergenceReport,
}

/// Analyses one trace: builds the proposal distribution, runs parallel
/// chains, extends until two chains converge or the iteration cap is hit,
/// and summarises the posterior from the converged pair.
pub fn analyze(
    trace: &Trace,
    hyper: &Hyperparams,
    config: &AnalysisConfig,
) -> Result<AnalysisResult> {
    config.chain.validate()?;
    let mut hyper = hyper.clone();
    if let Some(tau_frames) = config.tau_frames {
        hyper.tau = tau_frames * trace.frame_dt();
    }
    let dist = config.proposal.build(trace)?;

    // initial state: one change point at the proposal argmax when that is a
    // valid configuration, otherwise no change points
    let params0 = IntensityParams::new(
        hyper.eta_f,
        hyper.eta_b,
        hyper.beta_f / (hyper.alpha_f + 1.0),
        hyper.beta_b / (hyper.alpha_b + 1.0),
    )?;
    let argmax_t = dist.grid()[dist.argmax()];
    let state0 = ChangePointState::fit(trace, &[argmax_t], &params0, hyper.tau)
        .or_else(|_| ChangePointState::flat(trace, &params0, hyper.tau))?;

    let cfg = &config.chain;
    let mut chains: Vec<Chain> = (0..cfg.n_chains)
        .map(|c| {
            Chain::new(
                trace,
                &dist,
                &hyper,
                state0.clone(),
                params0,
                cfg.seed,
                c as u64,
            )
        })
        .collect::<Result<_>>()?;

    chains.par_iter_mut().for_each(|ch| ch.run(cfg.n_iter));
    let mut report;
    loop {
        let samples: Vec<&ChainSample> = chains.iter().map(|c| &c.sample).collect();
        report = check_convergence(&samples, cfg);
        let total = chains[0].sample.len();
        if report.converged || total + cfg.extension > cfg.max_iter || cfg.extension == 0 {
            break;
        }
        chains.par_iter_mut().for_each(|ch| ch.run(cfg.extension));
    }

    let (i, j) = report.pair.unwrap_or((0, 1));
    let summary = summarise(
        trace,
        &chains[i].sample,
        &chains[j].sample,
        report.burn_in,
        &hyper,
        report.converged,
        report.pair,
    );
    Ok(AnalysisResult {
        summary,
        chains: chains.into_iter().map(|c| c.sample).collect(),
        convergence: report,
    })
}
