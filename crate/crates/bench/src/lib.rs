//! Fixed inputs shared by the benchmarks.

use mrme::{regular_grid, simulate_mrme, InitialState, ModelParams, Track};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reference parameters with measurement noise `sigma_eps`.
pub fn params(sigma_eps: f64) -> ModelParams {
    ModelParams::new(1.0, 0.5, 1.0, sigma_eps).expect("valid constants")
}

/// A seeded two-dimensional track on a regular grid.
pub fn track(p: &ModelParams, horizon: f64, interval: f64, seed: u64) -> Track {
    let times = regular_grid(horizon, interval).expect("valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_mrme(p, &times, 2, InitialState::Stationary, &mut rng).expect("valid inputs").track
}

/// A track with jittered, irregular sampling times.
pub fn irregular_track(p: &ModelParams, n: usize, mean_gap: f64, seed: u64) -> Track {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    let times: Vec<f64> = (0..n)
        .map(|_| {
            let now = t;
            t += mean_gap * rng.random_range(0.5..1.5);
            now
        })
        .collect();
    simulate_mrme(p, &times, 2, InitialState::Stationary, &mut rng).expect("valid inputs").track
}
