//! Composite likelihoods for noisy tracks.
//!
//! With measurement noise the location-state process is no longer Markov,
//! but keeping every other increment restores the property: the pair
//! (increment over `(t_{k-1}, t_k]`, state at `t_k`) depends on the past only
//! through the state at `t_{k-2}`. The even and odd thinned chains each have a
//! two-state hidden Markov structure, and their exact likelihoods are
//! computed with a normalized forward recursion.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{MixtureCache, ScaledMatrix};
use crate::params::ModelParams;
use crate::telegraph::{likelihood_tau_matrix, stationary_weights};
use crate::track::Track;

/// Which composite likelihood to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CLMethod {
    /// Sum of the even- and odd-thinned chain log-likelihoods.
    TwoPiece,
    /// Sum over increments of the stationary marginal pair density.
    Marginal,
}

/// Which increments a thinned chain keeps: `Even` keeps `Z_2, Z_4, ...`,
/// `Odd` keeps `Z_1, Z_3, ...` (with `Z_k = Z(t_k) - Z(t_{k-1})`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn first_increment(self) -> usize {
        match self {
            Parity::Even => 2,
            Parity::Odd => 1,
        }
    }
}

/// Normalized forward variables of a two-state chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardState {
    /// Filtered state probabilities, indexed by `StateKind::index`.
    pub weights: [f64; 2],
    /// Accumulated sum of `ln rho`.
    pub log_lik: f64,
}

impl ForwardState {
    pub fn new(initial: [f64; 2]) -> Self {
        ForwardState { weights: initial, log_lik: 0.0 }
    }

    /// Advance one step with transition values `m[from][to]` and return
    /// `ln rho`, the log of the one-step predictive density.
    pub fn update(&mut self, m: &ScaledMatrix) -> f64 {
        let w = self.weights;
        let next = [
            w[0] * m.values[0][0] + w[1] * m.values[1][0],
            w[0] * m.values[0][1] + w[1] * m.values[1][1],
        ];
        let rho = next[0] + next[1];
        if !(rho > 0.0 && rho.is_finite()) {
            self.log_lik = f64::NEG_INFINITY;
            return f64::NEG_INFINITY;
        }
        self.weights = [next[0] / rho, next[1] / rho];
        let ln_rho = rho.ln() + m.ln_scale;
        self.log_lik += ln_rho;
        ln_rho
    }
}

/// One step of a thinned chain: the state is propagated over `gap`, then the
/// increment `increment` (index into the track) accrues over `window`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinnedStep {
    pub gap: f64,
    pub window: f64,
    pub increment: usize,
}

/// Steps of the chain of the given parity. The first odd increment starts
/// from the stationary law at `t_0` with no preceding gap.
pub fn thinned_steps(track: &Track, parity: Parity) -> Vec<ThinnedStep> {
    (parity.first_increment()..track.len())
        .step_by(2)
        .map(|k| ThinnedStep {
            gap: if k >= 2 { track.gap(k - 1) } else { 0.0 },
            window: track.gap(k),
            increment: k,
        })
        .collect()
}

/// Shared caches for evaluating several likelihood pieces at one parameter
/// value.
pub(crate) struct Evaluator {
    params: ModelParams,
    mixtures: MixtureCache,
    taus: HashMap<u64, [[f64; 2]; 2]>,
}

impl Evaluator {
    pub(crate) fn new(params: &ModelParams) -> Result<Self> {
        if !(params.sigma_eps > 0.0) {
            return Err(Error::InvalidParameter(
                "noisy-track likelihoods need sigma_eps > 0".into(),
            ));
        }
        let noise_var = 2.0 * params.sigma_eps * params.sigma_eps;
        Ok(Evaluator { params: *params, mixtures: MixtureCache::new(*params, noise_var), taus: HashMap::new() })
    }

    pub(crate) fn tau(&mut self, u: f64) -> Result<[[f64; 2]; 2]> {
        if u == 0.0 {
            return Ok([[1.0, 0.0], [0.0, 1.0]]);
        }
        if let Some(m) = self.taus.get(&u.to_bits()) {
            return Ok(*m);
        }
        let m = likelihood_tau_matrix(u, self.params.rates)?;
        self.taus.insert(u.to_bits(), m);
        Ok(m)
    }

    /// `g_ij(dz, v)` for all four state pairs.
    pub(crate) fn g(&mut self, dz: &[f64], v: f64) -> ScaledMatrix {
        let sq = dz.iter().map(|x| x * x).sum();
        self.mixtures.get(v).densities(sq, dz.len())
    }

    /// `f_ij = sum_k tau_ik(u) g_kj(dz, v)`.
    pub(crate) fn transition(&mut self, dz: &[f64], u: f64, v: f64) -> Result<ScaledMatrix> {
        let g = self.g(dz, v);
        if u == 0.0 {
            return Ok(g);
        }
        let tau = self.tau(u)?;
        let mut values = [[0.0; 2]; 2];
        for (i, row) in values.iter_mut().enumerate() {
            for (j, out) in row.iter_mut().enumerate() {
                *out = tau[i][0] * g.values[0][j] + tau[i][1] * g.values[1][j];
            }
        }
        Ok(ScaledMatrix { ln_scale: g.ln_scale, values })
    }

    fn step_matrices(&mut self, track: &Track, parity: Parity) -> Result<Vec<ScaledMatrix>> {
        let needed = parity.first_increment() + 1;
        track.require_len(needed)?;
        thinned_steps(track, parity)
            .iter()
            .map(|s| self.transition(&track.increment(s.increment), s.gap, s.window))
            .collect()
    }

    pub(crate) fn thinned(&mut self, track: &Track, parity: Parity) -> Result<f64> {
        let steps = self.step_matrices(track, parity)?;
        let mut fwd = ForwardState::new(stationary_weights(self.params.rates));
        for m in &steps {
            fwd.update(m);
        }
        Ok(fwd.log_lik)
    }

    pub(crate) fn marginal(&mut self, track: &Track) -> Result<f64> {
        track.require_len(2)?;
        let nu = stationary_weights(self.params.rates);
        let mut total = 0.0;
        for k in 1..track.len() {
            let g = self.g(&track.increment(k), track.gap(k));
            let s: f64 = (0..2)
                .map(|i| nu[i] * (g.values[i][0] + g.values[i][1]))
                .sum();
            total += s.ln() + g.ln_scale;
        }
        Ok(total)
    }
}

/// Log-likelihood of the thinned chain of the given parity, with a
/// stationary initial state.
pub fn thinned_loglik(track: &Track, parity: Parity, p: &ModelParams) -> Result<f64> {
    Evaluator::new(p)?.thinned(track, parity)
}

/// Two-piece composite log-likelihood: even plus odd thinned chains.
pub fn two_piece_cl(track: &Track, p: &ModelParams) -> Result<f64> {
    track.require_len(4)?;
    let mut ev = Evaluator::new(p)?;
    Ok(ev.thinned(track, Parity::Even)? + ev.thinned(track, Parity::Odd)?)
}

/// Marginal composite log-likelihood: increments treated as independent
/// draws from the stationary pair law.
pub fn marginal_cl(track: &Track, p: &ModelParams) -> Result<f64> {
    Evaluator::new(p)?.marginal(track)
}

/// Evaluate the chosen composite likelihood.
pub fn composite_loglik(track: &Track, p: &ModelParams, method: CLMethod) -> Result<f64> {
    match method {
        CLMethod::TwoPiece => two_piece_cl(track, p),
        CLMethod::Marginal => marginal_cl(track, p),
    }
}

/// Result of enumerating hidden paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForce {
    pub log_lik: f64,
    /// Number of hidden state sequences summed over.
    pub paths: u64,
}

pub const BRUTE_FORCE_MAX_STEPS: usize = 12;

/// Thinned-chain log-likelihood by explicit summation over all `2^(m+1)`
/// hidden state sequences. Reference oracle for [`thinned_loglik`].
pub fn brute_force_thinned(track: &Track, parity: Parity, p: &ModelParams) -> Result<BruteForce> {
    let mut ev = Evaluator::new(p)?;
    let steps = ev.step_matrices(track, parity)?;
    if steps.len() > BRUTE_FORCE_MAX_STEPS {
        return Err(Error::InvalidArgument(format!(
            "brute force limited to {BRUTE_FORCE_MAX_STEPS} steps, chain has {}",
            steps.len()
        )));
    }
    let (log_lik, paths) = enumerate_paths(stationary_weights(p.rates), &steps);
    Ok(BruteForce { log_lik, paths })
}

pub(crate) fn enumerate_paths(initial: [f64; 2], steps: &[ScaledMatrix]) -> (f64, u64) {
    let n_states = steps.len() + 1;
    let count = 1u64 << n_states;
    let mut total = 0.0;
    for mask in 0..count {
        let state = |k: usize| ((mask >> k) & 1) as usize;
        let mut prod = initial[state(0)];
        for (k, m) in steps.iter().enumerate() {
            prod *= m.values[state(k)][state(k + 1)];
        }
        total += prod;
    }
    let shift: f64 = steps.iter().map(|m| m.ln_scale).sum();
    (total.ln() + shift, count)
}
