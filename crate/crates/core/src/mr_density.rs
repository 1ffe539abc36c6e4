//! Noise-free moving–resting increments: the defective densities `h_ij`, the
//! zero-displacement atom, and the exact likelihood of a noise-free track.

use crate::composite::ForwardState;
use crate::error::{Error, Result};
use crate::kernel::{MixtureCache, MovingTimeMixture, ScaledMatrix};
use crate::params::ModelParams;
use crate::telegraph::{stationary_weights, StateKind};
use crate::track::{IncrementQuery, Track};

/// `h_ij(x, t)`: density of the displacement `x` over `t` jointly with ending
/// in `to`, given the start state `from`. This is the absolutely continuous
/// part only; the resting atom is [`resting_atom`]. `sigma_eps` is ignored.
pub fn h_density(from: StateKind, to: StateKind, q: IncrementQuery<'_>, p: &ModelParams) -> Result<f64> {
    let mix = MovingTimeMixture::new(p, q.dt, 0.0);
    Ok(mix.densities(q.squared_norm(), q.dim()).get(from.index(), to.index()))
}

/// Probability `exp(-lambda0 t)` that an animal resting at the start of a
/// window of length `t` never moves during it.
pub fn resting_atom(dt: f64, p: &ModelParams) -> f64 {
    (-p.lambda0() * dt).exp()
}

fn check_noise_free(p: &ModelParams) -> Result<()> {
    if p.sigma_eps != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "the noise-free likelihood needs sigma_eps = 0, got {}",
            p.sigma_eps
        )));
    }
    Ok(())
}

/// Transition of the location-state chain over one observation interval.
/// A displacement that is exactly zero in every coordinate can only come from
/// staying at rest.
fn step_matrix(mix: &MovingTimeMixture, dz: &[f64]) -> ScaledMatrix {
    if dz.iter().all(|&x| x == 0.0) {
        ScaledMatrix::unscaled([[mix.atom_resting(), 0.0], [0.0, 0.0]])
    } else {
        let sq = dz.iter().map(|x| x * x).sum();
        mix.densities(sq, dz.len())
    }
}

fn step_matrices(track: &Track, p: &ModelParams) -> Result<Vec<ScaledMatrix>> {
    check_noise_free(p)?;
    track.require_len(2)?;
    let mut cache = MixtureCache::new(*p, 0.0);
    Ok((1..track.len())
        .map(|k| step_matrix(cache.get(track.gap(k)), &track.increment(k)))
        .collect())
}

/// Exact log-likelihood of a noise-free track, by the normalized forward
/// recursion over consecutive increments with a stationary start.
pub fn mr_loglik(track: &Track, p: &ModelParams) -> Result<f64> {
    let steps = step_matrices(track, p)?;
    let mut fwd = ForwardState::new(stationary_weights(p.rates));
    for m in &steps {
        fwd.update(m);
    }
    Ok(fwd.log_lik)
}

/// The same likelihood by summing over every hidden state sequence. Costs
/// `2^n`; reference only.
pub fn mr_loglik_brute_force(track: &Track, p: &ModelParams) -> Result<f64> {
    let steps = step_matrices(track, p)?;
    if steps.len() > 16 {
        return Err(Error::InvalidArgument("brute force limited to 16 increments".into()));
    }
    Ok(crate::composite::enumerate_paths(stationary_weights(p.rates), &steps).0)
}
