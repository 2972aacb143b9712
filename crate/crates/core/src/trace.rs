//! Observed intensity time series.

use crate::error::{Error, Result};

/// A one-dimensional intensity trace: per-frame photon counts (real-valued
/// after baseline correction) together with frame midpoint times.
///
/// The trace owns recentred prefix sums of its intensities so that segment
/// means and Gaussian log-densities over any dwelling can be evaluated in
/// O(1) regardless of dwelling length.
#[derive(Debug, Clone)]
pub struct Trace {
    times: Vec<f64>,
    intensities: Vec<f64>,
    /// Time of the final frame boundary; change points live in (0, l_end).
    l_end: f64,
    center: f64,
    /// Prefix sums of (y - center).
    cum_dev: Vec<f64>,
    /// Prefix sums of (y - center)^2.
    cum_dev2: Vec<f64>,
}

impl Trace {
    /// Builds a trace from explicit frame times and the end-of-trace time.
    pub fn new(times: Vec<f64>, intensities: Vec<f64>, l_end: f64) -> Result<Self> {
        if times.len() != intensities.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: intensities.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::InvalidTrace("need at least two frames".into()));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidTrace(
                "frame times must be strictly increasing".into(),
            ));
        }
        if times[0] <= 0.0 {
            return Err(Error::InvalidTrace(
                "frame times must be positive (change points live in (0, L))".into(),
            ));
        }
        let last = *times.last().unwrap();
        if l_end < last {
            return Err(Error::InvalidTrace(format!(
                "trace end {l_end} precedes final frame time {last}"
            )));
        }
        if intensities.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidTrace("non-finite intensity".into()));
        }
        let n = intensities.len();
        let center = intensities.iter().sum::<f64>() / n as f64;
        let mut cum_dev = Vec::with_capacity(n + 1);
        let mut cum_dev2 = Vec::with_capacity(n + 1);
        cum_dev.push(0.0);
        cum_dev2.push(0.0);
        let (mut s1, mut s2) = (0.0, 0.0);
        for &y in &intensities {
            let d = y - center;
            s1 += d;
            s2 += d * d;
            cum_dev.push(s1);
            cum_dev2.push(s2);
        }
        Ok(Self {
            times,
            intensities,
            l_end,
            center,
            cum_dev,
            cum_dev2,
        })
    }

    /// Builds a trace from evenly spaced frames of width `dt`, placing frame
    /// `i` at time `(i + 1/2) dt` with the trace ending at `n * dt`.
    pub fn from_frames(intensities: Vec<f64>, dt: f64) -> Result<Self> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::InvalidTrace("frame width must be positive".into()));
        }
        let n = intensities.len();
        let times = (0..n).map(|i| (i as f64 + 0.5) * dt).collect();
        Self::new(times, intensities, n as f64 * dt)
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn l_end(&self) -> f64 {
        self.l_end
    }

    /// Median spacing between consecutive frames.
    pub fn frame_dt(&self) -> f64 {
        let mut gaps: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        gaps[gaps.len() / 2]
    }

    /// Index of the first frame with time >= t.
    pub fn first_frame_at_or_after(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x < t)
    }

    /// Mean intensity over frames [lo, hi).
    pub fn segment_mean(&self, lo: usize, hi: usize) -> f64 {
        debug_assert!(lo < hi && hi <= self.len());
        let m = (hi - lo) as f64;
        self.center + (self.cum_dev[hi] - self.cum_dev[lo]) / m
    }

    /// Sum of squared deviations of frames [lo, hi) around `mu`.
    pub fn segment_sq_dev(&self, lo: usize, hi: usize, mu: f64) -> f64 {
        debug_assert!(lo < hi && hi <= self.len());
        let m = (hi - lo) as f64;
        let d = mu - self.center;
        let s1 = self.cum_dev[hi] - self.cum_dev[lo];
        let s2 = self.cum_dev2[hi] - self.cum_dev2[lo];
        s2 - 2.0 * d * s1 + m * d * d
    }

    /// Sample variance (denominator n-1) over frames [lo, hi).
    pub fn segment_variance(&self, lo: usize, hi: usize) -> f64 {
        if hi - lo < 2 {
            return 0.0;
        }
        let mean = self.segment_mean(lo, hi);
        self.segment_sq_dev(lo, hi, mean) / (hi - lo - 1) as f64
    }

    pub fn mean(&self) -> f64 {
        self.center
    }

    /// Population standard deviation of the whole trace.
    pub fn std(&self) -> f64 {
        let n = self.len() as f64;
        (self.cum_dev2[self.len()] / n).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_bad_inputs() {
        assert!(Trace::new(vec![1.0], vec![0.0], 2.0).is_err());
        assert!(Trace::new(vec![1.0, 1.0], vec![0.0, 0.0], 2.0).is_err());
        assert!(Trace::new(vec![1.0, 2.0], vec![0.0, 0.0], 1.5).is_err());
        assert!(Trace::new(vec![1.0, 2.0], vec![0.0], 3.0).is_err());
        assert!(Trace::new(vec![1.0, 2.0], vec![0.0, f64::NAN], 3.0).is_err());
    }

    #[test]
    fn segment_stats_match_naive() {
        let y = vec![3.0, -1.0, 4.0, 1.0, -5.0, 9.0, 2.0, 6.0];
        let tr = Trace::from_frames(y.clone(), 1.0).unwrap();
        for lo in 0..y.len() {
            for hi in lo + 1..=y.len() {
                let seg = &y[lo..hi];
                let mean = seg.iter().sum::<f64>() / seg.len() as f64;
                assert_abs_diff_eq!(tr.segment_mean(lo, hi), mean, epsilon = 1e-12);
                let mu = 2.5;
                let sq: f64 = seg.iter().map(|v| (v - mu) * (v - mu)).sum();
                assert_abs_diff_eq!(tr.segment_sq_dev(lo, hi, mu), sq, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn from_frames_layout() {
        let tr = Trace::from_frames(vec![0.0; 10], 2.0).unwrap();
        assert_abs_diff_eq!(tr.times()[0], 1.0);
        assert_abs_diff_eq!(tr.times()[9], 19.0);
        assert_abs_diff_eq!(tr.l_end(), 20.0);
        assert_abs_diff_eq!(tr.frame_dt(), 2.0);
    }
}
