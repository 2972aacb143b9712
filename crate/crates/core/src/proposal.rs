//! Discretised change-point location proposal distribution.
//!
//! Built once per trace from a preliminary scan: the trace is split into
//! windows, the z-score of the mean difference between adjacent windows is
//! computed, and a Gaussian bump weighted by each z-score is added on top of
//! a uniform floor. The result is discretised on a uniform grid over (0, L)
//! and normalised, with masses precomputed for O(1) lookup.

use rand::Rng;

use crate::error::{Error, Result};
use crate::trace::Trace;

/// Fraction of pre-normalisation mass assigned to the uniform floor,
/// guaranteeing positive support everywhere (required for irreducibility of
/// shift and birth moves).
const UNIFORM_FLOOR_FRACTION: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct ProposalDistribution {
    grid: Vec<f64>,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    spacing: f64,
    l_end: f64,
    window_size: usize,
    base_variance: f64,
}

impl ProposalDistribution {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Uniform spacing between grid points.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn base_variance(&self) -> f64 {
        self.base_variance
    }

    /// Index of the grid point nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> Result<usize> {
        if t <= 0.0 || t >= self.l_end {
            return Err(Error::OutsideGrid(t));
        }
        let raw = (t - self.grid[0]) / self.spacing;
        let idx = raw.round() as isize;
        Ok(idx.clamp(0, self.grid.len() as isize - 1) as usize)
    }

    /// Stored probability mass at the grid point nearest to `t`.
    pub fn pmf_at(&self, t: f64) -> Result<f64> {
        Ok(self.pmf[self.nearest_index(t)?])
    }

    /// Probability density at `t`: mass of the nearest grid point divided by
    /// the grid spacing. Acceptance ratios use this form so that they do not
    /// depend on the unit of time.
    pub fn density_at(&self, t: f64) -> Result<f64> {
        Ok(self.pmf_at(t)? / self.spacing)
    }

    /// Index of the grid point with the largest mass (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.pmf.iter().enumerate() {
            if p > self.pmf[best] {
                best = i;
            }
        }
        best
    }

    /// Draws a grid index by inverse-CDF sampling.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf
            .partition_point(|&c| c < u)
            .min(self.grid.len() - 1)
    }

    /// Draws a grid time by inverse-CDF sampling.
    pub fn sample_location<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.grid[self.sample_index(rng)]
    }

    /// Draws a grid index restricted to `indices`, proportional to the
    /// stored masses. Returns `None` when the restriction is empty or
    /// carries no mass.
    pub fn sample_restricted<R: Rng + ?Sized>(
        &self,
        indices: impl Iterator<Item = usize> + Clone,
        rng: &mut R,
    ) -> Option<usize> {
        let total: f64 = indices.clone().map(|i| self.pmf[i]).sum();
        if total <= 0.0 {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        let mut last = None;
        for i in indices {
            u -= self.pmf[i];
            last = Some(i);
            if u <= 0.0 {
                return Some(i);
            }
        }
        last
    }
}

/// Builds the proposal distribution from a preliminary scan of the trace.
///
/// `resolution` is the grid spacing in trace time units; the default of one
/// grid point per frame is obtained with `resolution = trace.frame_dt()`.
pub fn build_proposal(
    trace: &Trace,
    window_size: usize,
    base_variance: f64,
    resolution: f64,
) -> Result<ProposalDistribution> {
    if window_size < 2 {
        return Err(Error::InvalidConfig(
            "window_size must be at least 2".into(),
        ));
    }
    if !(base_variance > 0.0) {
        return Err(Error::InvalidConfig(
            "base_variance must be positive".into(),
        ));
    }
    if !(resolution > 0.0) {
        return Err(Error::InvalidConfig("resolution must be positive".into()));
    }
    let l = trace.l_end();
    let n_grid = ((l / resolution).round() as usize).max(1);
    let spacing = l / n_grid as f64;
    let grid: Vec<f64> = (0..n_grid).map(|i| (i as f64 + 0.5) * spacing).collect();

    // Trace-level SNR estimate: mean over standard deviation. A constant or
    // non-positive-mean trace contributes no bumps and the distribution
    // stays uniform.
    let std = trace.std();
    let mean = trace.mean();
    let snr = if std > 0.0 { mean / std } else { 0.0 };

    let mut weights = vec![UNIFORM_FLOOR_FRACTION / n_grid as f64; n_grid];
    if snr > 0.0 {
        // z-score of each adjacent-window mean difference under a mean-zero
        // assumption with variance 1/SNR.
        let denom = (1.0 / snr).sqrt();
        let n_windows = trace.len() / window_size;
        let mut bumps: Vec<(f64, f64)> = Vec::new(); // (boundary time, z)
        let pair = |lo: usize, mid: usize, hi: usize, bumps: &mut Vec<(f64, f64)>| {
            let d = (trace.segment_mean(mid, hi) - trace.segment_mean(lo, mid)).abs();
            let z = d / denom;
            if z > 0.0 {
                // boundary midpoint between the two windows
                let t = 0.5 * (trace.times()[mid - 1] + trace.times()[mid]);
                bumps.push((t, z));
            }
        };
        for w in 0..n_windows.saturating_sub(1) {
            let lo = w * window_size;
            pair(lo, lo + window_size, lo + 2 * window_size, &mut bumps);
        }
        // the aligned tiling drops up to window_size - 1 trailing frames;
        // one pair anchored at the trace end keeps late steps visible
        if trace.len() >= 2 * window_size && !trace.len().is_multiple_of(window_size) {
            let n = trace.len();
            pair(n - 2 * window_size, n - window_size, n, &mut bumps);
        }
        let total_z: f64 = bumps.iter().map(|&(_, z)| z).sum();
        if total_z > 0.0 {
            let signal_mass = 1.0 - UNIFORM_FLOOR_FRACTION;
            let sd = base_variance.sqrt();
            for &(t, z) in &bumps {
                let w_bump = signal_mass * z / total_z;
                for (i, &g) in grid.iter().enumerate() {
                    let u = (g - t) / sd;
                    weights[i] += w_bump * (-0.5 * u * u).exp();
                }
            }
        }
    }

    let total: f64 = weights.iter().sum();
    let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut cdf = Vec::with_capacity(n_grid);
    let mut acc = 0.0;
    for &p in &pmf {
        acc += p;
        cdf.push(acc);
    }
    *cdf.last_mut().unwrap() = 1.0;

    Ok(ProposalDistribution {
        grid,
        pmf,
        cdf,
        spacing,
        l_end: l,
        window_size,
        base_variance,
    })
}
