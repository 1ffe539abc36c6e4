//! Noisy observations of the moving–resting process: increment densities,
//! the thinned-chain transition density, simulation, and rounding.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::composite::Evaluator;
use crate::error::{ensure, Error, Result};
use crate::params::ModelParams;
use crate::telegraph::{draw_initial, simulate_states, InitialState, RatePair, StateKind};
use crate::track::{IncrementQuery, LabeledTrack, Track};

/// `g_ij(z, t)`: density of the observed displacement `z` over `t` jointly
/// with ending in `to`, given the start state `from`. Both endpoint noises
/// are folded into the Gaussian variance, and the resting atom appears as a
/// narrow Gaussian bump in `g_00`.
pub fn g_density(from: StateKind, to: StateKind, q: IncrementQuery<'_>, p: &ModelParams) -> Result<f64> {
    let mut ev = Evaluator::new(p)?;
    Ok(ev.g(q.dz, q.dt).get(from.index(), to.index()))
}

/// Density of the displacement `dz` over a window of length `v` that starts
/// `u` after the time at which the state is `from`, jointly with ending in
/// `to`: `sum_k tau_{from,k}(u) g_{k,to}(dz, v)`.
pub fn transition_density(
    from: StateKind,
    to: StateKind,
    dz: &[f64],
    u: f64,
    v: f64,
    p: &ModelParams,
) -> Result<f64> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::InvalidArgument(format!("gap must be nonnegative, got {u}")));
    }
    let q = IncrementQuery::new(dz, v)?;
    let mut ev = Evaluator::new(p)?;
    Ok(ev.transition(q.dz, u, q.dt)?.get(from.index(), to.index()))
}

/// Simulate noisy observations at `times` in `dim` dimensions.
///
/// Random numbers are consumed in a fixed order: the state path, then the
/// Brownian increments, then the noise. The noise is drawn even when
/// `sigma_eps` is zero, so one seed yields the same hidden path for every
/// noise level.
pub fn simulate_mrme<R: Rng + ?Sized>(
    p: &ModelParams,
    times: &[f64],
    dim: usize,
    init: InitialState,
    rng: &mut R,
) -> Result<LabeledTrack> {
    simulate_raw(p.rates, p.sigma, p.sigma_eps, times, dim, init, rng)
}

pub(crate) fn simulate_raw<R: Rng + ?Sized>(
    rates: RatePair,
    sigma: f64,
    sigma_eps: f64,
    times: &[f64],
    dim: usize,
    init: InitialState,
    rng: &mut R,
) -> Result<LabeledTrack> {
    ensure(dim >= 1, || "dimension must be at least 1".into())?;
    ensure(!times.is_empty(), || "time grid is empty".into())?;
    for (k, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidTrack(format!(
                "times must be strictly increasing (index {})",
                k + 1
            )));
        }
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidTrack("times must be finite".into()));
    }
    let t0 = times[0];
    let horizon = times[times.len() - 1] - t0;
    let sweep = if horizon > 0.0 {
        let path = simulate_states(rates, horizon, init, rng)?;
        let rel: Vec<f64> = times.iter().map(|t| t - t0).collect();
        path.sweep(&rel)
    } else {
        vec![(0.0, draw_initial(init, rates, rng))]
    };
    let n = times.len();
    let mut exact = vec![0.0; n * dim];
    for k in 1..n {
        let moving = sweep[k].0 - sweep[k - 1].0;
        let sd = sigma * moving.max(0.0).sqrt();
        for c in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            exact[k * dim + c] = exact[(k - 1) * dim + c] + sd * z;
        }
    }
    let mut observed = exact.clone();
    for x in observed.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *x += sigma_eps * e;
    }
    let states = sweep.iter().map(|&(_, s)| s).collect();
    Ok(LabeledTrack {
        track: Track::new(times.to_vec(), observed, dim)?,
        states,
        exact: Track::new(times.to_vec(), exact, dim)?,
    })
}

/// Round every coordinate to the nearest multiple of `grid`, ties away from
/// zero.
pub fn round_track(track: &Track, grid: f64) -> Result<Track> {
    if !(grid > 0.0 && grid.is_finite()) {
        return Err(Error::InvalidArgument(format!("rounding grid must be positive, got {grid}")));
    }
    Ok(track.map_locations(|x| (x / grid).round() * grid))
}

/// Evenly spaced grid `0, interval, 2 interval, ...` up to `horizon`.
pub fn regular_grid(horizon: f64, interval: f64) -> Result<Vec<f64>> {
    ensure(interval > 0.0 && interval.is_finite(), || format!("interval must be positive, got {interval}"))?;
    ensure(horizon >= interval && horizon.is_finite(), || {
        format!("horizon {horizon} must be at least one interval {interval}")
    })?;
    let n = (horizon / interval + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * interval).collect())
}
