//! Ground-truth trace simulator.
//!
//! Each fluorophore follows a discrete-time Markov chain over the states
//! bright, blink, dark, and photobleached (absorbing), stepping once per
//! frame. Active fluorophores emit Poisson photons, background noise is the
//! sum of Poisson and Gaussian components with equal mean and variance, the
//! mean background is subtracted to mimic baseline correction, and the trace
//! is truncated a random number of frames after the last photobleach.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Trace;

pub const BRIGHT: usize = 0;
pub const BLINK: usize = 1;
pub const DARK: usize = 2;
pub const BLEACHED: usize = 3;

/// Row-stochastic transition matrix over {bright, blink, dark, bleached}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluorophoreModel {
    pub p: [[f64; 4]; 4],
}

impl FluorophoreModel {
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.p.iter().enumerate() {
            if row.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "negative transition probability in row {i}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "row {i} sums to {sum}, expected 1"
                )));
            }
        }
        if self.p[BLEACHED] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidConfig(
                "photobleached state must be absorbing".into(),
            ));
        }
        Ok(())
    }

    fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row = &self.p[state];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (next, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return next;
            }
        }
        3
    }
}

/// How the background level is calibrated from the requested SNR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrDefinition {
    /// SNR = mu_f / mean(background). The default; reproduces the regimes
    /// where per-frame steps remain resolvable at SNR labels down to 0.001.
    BackgroundMean,
    /// SNR = mu_f / std(background).
    BackgroundStd,
}

/// Simulation settings for one trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_fluorophores: usize,
    /// Mean photons per bright fluorophore per frame.
    pub mu_f_photons: f64,
    /// Signal-to-noise label; `f64::INFINITY` disables background noise.
    pub snr: f64,
    #[serde(default = "default_snr_definition")]
    pub snr_definition: SnrDefinition,
    /// Expected blink and dark dwell lengths, in frames.
    pub dur_blink: f64,
    pub dur_dark: f64,
    /// Per-frame transition probabilities out of the bright state.
    pub p_blink: f64,
    pub p_dark: f64,
    pub p_bleach: f64,
    /// Frame width in seconds.
    pub bin_width: f64,
    /// Post-bleach extension, uniform over [min, max] frames.
    pub extension_frames: (usize, usize),
    /// Probability that a fluorophore starts dark instead of bright.
    #[serde(default)]
    pub initial_dark_prob: f64,
}

fn default_snr_definition() -> SnrDefinition {
    SnrDefinition::BackgroundMean
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_fluorophores: 1,
            mu_f_photons: 1000.0,
            snr: 0.1,
            snr_definition: SnrDefinition::BackgroundMean,
            dur_blink: 10.0,
            dur_dark: 50.0,
            p_blink: 0.0002,
            p_dark: 0.0002,
            p_bleach: 0.0005,
            bin_width: 20e-6,
            extension_frames: (5, 50),
            initial_dark_prob: 0.0,
        }
    }
}

impl SimConfig {
    /// Mean of each background noise component; the background total is
    /// Poisson(m) + Normal(m, m).
    pub fn background_component_mean(&self) -> f64 {
        if !self.snr.is_finite() || self.snr <= 0.0 {
            return 0.0;
        }
        match self.snr_definition {
            // total background mean 2m = mu_f / snr
            SnrDefinition::BackgroundMean => self.mu_f_photons / (2.0 * self.snr),
            // total background sd sqrt(2m) = mu_f / snr
            SnrDefinition::BackgroundStd => {
                self.mu_f_photons * self.mu_f_photons / (2.0 * self.snr * self.snr)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fluorophores == 0 {
            return Err(Error::InvalidConfig("need at least one fluorophore".into()));
        }
        if !(self.mu_f_photons > 0.0) {
            return Err(Error::InvalidConfig("mu_f must be positive".into()));
        }
        if !(self.p_bleach > 0.0) {
            return Err(Error::InvalidConfig(
                "p_bleach must be positive or the chain never terminates".into(),
            ));
        }
        if self.p_blink + self.p_dark + self.p_bleach > 1.0 {
            return Err(Error::InvalidConfig(
                "bright-state exit probabilities exceed 1".into(),
            ));
        }
        if self.dur_blink < 1.0 || self.dur_dark < 1.0 {
            return Err(Error::InvalidConfig(
                "dwell durations must be >= 1 frame".into(),
            ));
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::InvalidConfig("bin width must be positive".into()));
        }
        if self.extension_frames.0 > self.extension_frames.1 || self.extension_frames.1 == 0 {
            return Err(Error::InvalidConfig("bad extension range".into()));
        }
        if !(0.0..=1.0).contains(&self.initial_dark_prob) {
            return Err(Error::InvalidConfig(
                "initial_dark_prob out of range".into(),
            ));
        }
        Ok(())
    }
}

/// Ground truth paired with a simulated trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Per-frame active fluorophore counts.
    pub counts: Vec<u32>,
    /// Times of the frame boundaries where the count changes.
    pub change_points: Vec<f64>,
    /// Model parameters as seen by the estimator after baseline correction.
    pub mu_f: f64,
    pub mu_b: f64,
    pub sigma_f2: f64,
    pub sigma_b2: f64,
}

impl GroundTruth {
    /// Noise-free intensity trace `mu_f * n_i + mu_b`.
    pub fn intensity(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&n| self.mu_f * n as f64 + self.mu_b)
            .collect()
    }
}

/// Builds the per-frame transition matrix from the dwell durations and
/// bright-state exit probabilities.
pub fn build_transition_matrix(cfg: &SimConfig) -> Result<FluorophoreModel> {
    cfg.validate()?;
    let p_ba = 1.0 / cfg.dur_blink;
    let p_da = 1.0 / cfg.dur_dark;
    let model = FluorophoreModel {
        p: [
            [
                1.0 - cfg.p_blink - cfg.p_dark - cfg.p_bleach,
                cfg.p_blink,
                cfg.p_dark,
                cfg.p_bleach,
            ],
            [p_ba, 1.0 - p_ba, 0.0, 0.0],
            [p_da, 0.0, 1.0 - p_da, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
    };
    model.validate()?;
    Ok(model)
}

/// Simulates one trace and its ground truth.
///
/// Per frame, each active fluorophore contributes `Poisson(mu_f)` photons
/// (the per-microsecond emissions binned over the frame) and the background
/// contributes `Poisson(m) + Normal(m, m)`; the total background mean `2m`
/// is subtracted afterwards.
pub fn simulate_trace<R: Rng + ?Sized>(
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(Trace, GroundTruth)> {
    let model = build_transition_matrix(cfg)?;

    // state paths until every fluorophore photobleaches
    let mut paths: Vec<Vec<usize>> = Vec::with_capacity(cfg.n_fluorophores);
    for _ in 0..cfg.n_fluorophores {
        let mut state = if rng.random::<f64>() < cfg.initial_dark_prob {
            DARK
        } else {
            BRIGHT
        };
        let mut path = vec![state];
        while state != BLEACHED {
            state = model.step(state, rng);
            path.push(state);
        }
        paths.push(path);
    }
    let last_bleach = paths.iter().map(|p| p.len() - 1).max().unwrap();
    let (ext_lo, ext_hi) = cfg.extension_frames;
    let extension = rng.random_range(ext_lo..=ext_hi);
    let n_frames = last_bleach + extension;

    let mut counts = vec![0u32; n_frames];
    for path in &paths {
        for (i, slot) in counts.iter_mut().enumerate() {
            let state = path.get(i).copied().unwrap_or(BLEACHED);
            if state == BRIGHT {
                *slot += 1;
            }
        }
    }

    let m = cfg.background_component_mean();
    let gaussian = if m > 0.0 {
        Some(Normal::new(m, m.sqrt()).expect("positive sd"))
    } else {
        None
    };
    let mut intensities = Vec::with_capacity(n_frames);
    for &n in &counts {
        let mut y = 0.0;
        if n > 0 {
            y += Poisson::new(n as f64 * cfg.mu_f_photons)
                .expect("positive mean")
                .sample(rng);
        }
        if let Some(g) = gaussian {
            y += Poisson::new(m).expect("positive mean").sample(rng);
            y += g.sample(rng);
            y -= 2.0 * m; // baseline correction
        }
        intensities.push(y);
    }

    let mut change_points = Vec::new();
    for i in 1..n_frames {
        if counts[i] != counts[i - 1] {
            change_points.push(i as f64 * cfg.bin_width);
        }
    }

    let trace = Trace::from_frames(intensities, cfg.bin_width)?;
    let truth = GroundTruth {
        counts,
        change_points,
        mu_f: cfg.mu_f_photons,
        mu_b: 0.0,
        sigma_f2: cfg.mu_f_photons,
        sigma_b2: 2.0 * m,
    };
    Ok((trace, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matrix_from_dwell_durations() {
        let cfg = SimConfig::default();
        let m = build_transition_matrix(&cfg).unwrap();
        // blink dwell of 10 frames
        assert_abs_diff_eq!(m.p[BLINK][BLINK], 0.9, epsilon = 1e-12);
        // dark dwell of 50 frames
        assert_abs_diff_eq!(m.p[DARK][DARK], 0.98, epsilon = 1e-12);
        // default bright row
        assert_abs_diff_eq!(m.p[BRIGHT][BRIGHT], 0.9991, epsilon = 1e-12);
        assert_abs_diff_eq!(m.p[BRIGHT].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_eq!(m.p[BLEACHED], [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = SimConfig {
            p_bleach: 0.0,
            ..SimConfig::default()
        };
        assert!(build_transition_matrix(&cfg).is_err());
        let cfg = SimConfig {
            p_blink: 0.7,
            p_dark: 0.4,
            ..SimConfig::default()
        };
        assert!(build_transition_matrix(&cfg).is_err());
        let cfg = SimConfig {
            dur_blink: 0.5,
            ..SimConfig::default()
        };
        assert!(build_transition_matrix(&cfg).is_err());
    }

    #[test]
    fn forced_bleach_gives_single_staircase() {
        let cfg = SimConfig {
            n_fluorophores: 3,
            p_blink: 0.0,
            p_dark: 0.0,
            p_bleach: 1.0,
            snr: f64::INFINITY,
            ..SimConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, truth) = simulate_trace(&cfg, &mut rng).unwrap();
        // every fluorophore is bright for exactly one frame
        assert_eq!(truth.counts[0], 3);
        assert!(truth.counts[1..].iter().all(|&n| n == 0));
        assert!(truth.counts.last() == Some(&0));
    }

    #[test]
    fn bright_mean_matches_mu_f() {
        let cfg = SimConfig {
            n_fluorophores: 1,
            p_blink: 0.0,
            p_dark: 0.0,
            p_bleach: 0.002,
            snr: f64::INFINITY,
            ..SimConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (tr, truth) = simulate_trace(&cfg, &mut rng).unwrap();
        let bright: Vec<f64> = tr
            .intensities()
            .iter()
            .zip(&truth.counts)
            .filter(|&(_, &n)| n == 1)
            .map(|(&y, _)| y)
            .collect();
        assert!(bright.len() > 50);
        let mean = bright.iter().sum::<f64>() / bright.len() as f64;
        let se = (cfg.mu_f_photons / bright.len() as f64).sqrt();
        assert!(
            (mean - cfg.mu_f_photons).abs() < 3.0 * se,
            "mean {mean} vs {} (se {se})",
            cfg.mu_f_photons
        );
    }

    #[test]
    fn baseline_correction_centres_background() {
        let cfg = SimConfig {
            n_fluorophores: 1,
            p_bleach: 0.1,
            snr: 0.1,
            extension_frames: (400, 400),
            ..SimConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (tr, truth) = simulate_trace(&cfg, &mut rng).unwrap();
        let bg: Vec<f64> = tr
            .intensities()
            .iter()
            .zip(&truth.counts)
            .filter(|&(_, &n)| n == 0)
            .map(|(&y, _)| y)
            .collect();
        assert!(bg.len() >= 400);
        let mean = bg.iter().sum::<f64>() / bg.len() as f64;
        let sd = truth.sigma_b2.sqrt();
        let se = sd / (bg.len() as f64).sqrt();
        assert!(
            mean.abs() < 3.0 * se,
            "corrected background mean {mean}, se {se}"
        );
    }

    #[test]
    fn change_points_match_count_changes() {
        let cfg = SimConfig {
            n_fluorophores: 4,
            p_bleach: 0.01,
            p_blink: 0.002,
            p_dark: 0.002,
            snr: 1.0,
            ..SimConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, truth) = simulate_trace(&cfg, &mut rng).unwrap();
        let mut expect = Vec::new();
        for i in 1..truth.counts.len() {
            if truth.counts[i] != truth.counts[i - 1] {
                expect.push(i as f64 * cfg.bin_width);
            }
        }
        assert_eq!(truth.change_points, expect);
        assert!(!truth.change_points.is_empty());
    }

    #[test]
    fn snr_calibration() {
        let cfg = SimConfig::default(); // snr 0.1, mean-based
        let m = cfg.background_component_mean();
        assert_abs_diff_eq!(2.0 * m, cfg.mu_f_photons / cfg.snr, epsilon = 1e-9);
        let cfg = SimConfig {
            snr_definition: SnrDefinition::BackgroundStd,
            ..SimConfig::default()
        };
        let m = cfg.background_component_mean();
        assert_abs_diff_eq!((2.0 * m).sqrt(), cfg.mu_f_photons / cfg.snr, epsilon = 1e-9);
    }

    #[test]
    fn same_seed_reproduces_trace() {
        let cfg = SimConfig::default();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let (ta, ga) = simulate_trace(&cfg, &mut a).unwrap();
        let (tb, gb) = simulate_trace(&cfg, &mut b).unwrap();
        assert_eq!(ta.intensities(), tb.intensities());
        assert_eq!(ga.counts, gb.counts);
    }

    #[test]
    fn dwell_times_and_transition_frequencies() {
        // occupancy law over a long path from each non-absorbing state; the
        // full 3-sigma acceptance version lives in the acceptance suite
        let cfg = SimConfig {
            p_blink: 0.05,
            p_dark: 0.02,
            p_bleach: 0.001,
            ..SimConfig::default()
        };
        let model = build_transition_matrix(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut blink_dwells = Vec::new();
        let mut current = 0usize;
        for _ in 0..100 {
            let mut state = BRIGHT;
            loop {
                let next = model.step(state, &mut rng);
                if state == BLINK {
                    current += 1;
                }
                if state == BLINK && next != BLINK {
                    blink_dwells.push(current);
                    current = 0;
                }
                state = next;
                if state == BLEACHED {
                    break;
                }
            }
        }
        assert!(blink_dwells.len() > 100);
        let mean = blink_dwells.iter().sum::<usize>() as f64 / blink_dwells.len() as f64;
        // geometric dwell with mean dur_blink
        assert!(
            (mean - cfg.dur_blink).abs() < 1.5,
            "blink dwell mean {mean}"
        );
    }
}
