//! Convergence and sampling-quality diagnostics: potential scale reduction
//! factor, effective sample size, and Monte Carlo standard error.

/// Gelman-Rubin potential scale reduction factor across two or more chains.
///
/// Chains are truncated to the shortest length. Conventions for degenerate
/// inputs: identical constant chains give exactly 1, constant chains at
/// distinct values give infinity. The estimate is clamped below at 1 so
/// that identical non-constant chains also report exactly 1 (the raw
/// estimator dips below 1 by its (n-1)/n finite-sample factor).
pub fn psrf(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    if m < 2 {
        return 1.0;
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 2 {
        return 1.0;
    }
    let nf = n as f64;
    let means: Vec<f64> = chains
        .iter()
        .map(|c| c[..n].iter().sum::<f64>() / nf)
        .collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, &mu)| c[..n].iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / (nf - 1.0))
        .collect();
    let w: f64 = vars.iter().sum::<f64>() / m as f64;
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_n = means
        .iter()
        .map(|&mu| (mu - grand) * (mu - grand))
        .sum::<f64>()
        / (m as f64 - 1.0);
    if w == 0.0 {
        return if b_over_n == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let v_hat = (nf - 1.0) / nf * w + b_over_n;
    (v_hat / w).sqrt().max(1.0)
}

/// Effective sample size via the initial-positive-sequence truncation of the
/// autocorrelation function. Clamped to (0, n].
pub fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let var0 = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / nf;
    if var0 == 0.0 {
        return nf;
    }
    let autocov = |lag: usize| -> f64 {
        x[..n - lag]
            .iter()
            .zip(&x[lag..])
            .map(|(&a, &b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / nf
    };
    // sum consecutive autocorrelation pairs while they stay positive
    let mut tau = 1.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / var0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (nf / tau).clamp(1e-12, nf)
}

/// Monte Carlo standard error of the mean: sd / sqrt(ESS).
pub fn mcse(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (var / ess(x)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_chains_have_unit_psrf() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.clone();
        assert_eq!(psrf(&[&a, &b]), 1.0);
    }

    #[test]
    fn identical_constant_chains_have_unit_psrf() {
        let a = vec![3.0; 100];
        let b = vec![3.0; 100];
        assert_eq!(psrf(&[&a, &b]), 1.0);
    }

    #[test]
    fn distinct_constant_chains_diverge() {
        let a = vec![0.0; 100];
        let b = vec![10.0; 100];
        assert!(psrf(&[&a, &b]) > 1.2);
        assert!(psrf(&[&a, &b]).is_infinite());
    }

    #[test]
    fn shifted_chains_exceed_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..2000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        assert!(psrf(&[&a, &b]) > 1.2);
        // same distribution: close to 1
        let c: Vec<f64> = (0..2000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        assert!(psrf(&[&a, &c]) < 1.05);
    }

    #[test]
    fn iid_ess_close_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..10_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let e = ess(&x);
        assert!(
            (e - 10_000.0).abs() < 2_000.0,
            "iid ESS should be within 20% of n, got {e}"
        );
    }

    #[test]
    fn correlated_chain_has_reduced_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut x = vec![0.0f64];
        for _ in 1..10_000 {
            let prev = *x.last().unwrap();
            x.push(0.95 * prev + rng.sample::<f64, _>(StandardNormal));
        }
        let e = ess(&x);
        // AR(1) with rho = 0.95 has ESS ~ n (1-rho)/(1+rho) ~ n/39
        assert!(
            e < 2_000.0,
            "ESS of a sticky chain should collapse, got {e}"
        );
        assert!(e > 20.0);
    }

    #[test]
    fn mcse_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x: Vec<f64> = (0..5_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let sd = (x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        assert_abs_diff_eq!(mcse(&x), sd / ess(&x).sqrt(), epsilon = 1e-12);
        // for iid input this is close to the classic sd/sqrt(n)
        assert!((mcse(&x) - sd / n.sqrt()).abs() / (sd / n.sqrt()) < 0.25);
    }
}
