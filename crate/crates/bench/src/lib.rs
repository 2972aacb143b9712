//! Shared fixtures for the criterion benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crjmcmc::model::{Hyperparams, IntensityParams};
use crjmcmc::sim::{simulate_trace, SimConfig};
use crjmcmc::trace::Trace;

/// A reproducible mid-sized simulated trace with its model inputs.
pub fn bench_trace() -> (Trace, IntensityParams, Hyperparams) {
    let cfg = SimConfig {
        n_fluorophores: 3,
        mu_f_photons: 1000.0,
        snr: 0.1,
        p_bleach: 0.004,
        ..SimConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let (trace, _) = simulate_trace(&cfg, &mut rng).unwrap();
    let params = IntensityParams::new(1000.0, 0.0, 1000.0, 10_000.0).unwrap();
    let hyper = Hyperparams {
        eta_f: 1000.0,
        nu_f: 5.0,
        eta_b: 0.0,
        nu_b: 10.0,
        alpha_b: 10_000.0,
        beta_b: 10_000.0 * 10_001.0,
        ..Hyperparams::default()
    };
    (trace, params, hyper)
}
