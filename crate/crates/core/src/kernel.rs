//! Increment densities as mixtures over the time spent moving.
//!
//! Over a window of length `t`, the displacement given the moving time `m` is
//! centered Gaussian with variance `sigma^2 m` per coordinate; Gaussian
//! observation noise adds `s^2` to that variance. Every transition density of
//! the model is therefore
//!
//! ```text
//! integral_0^t k_ij(m) prod_c phi(z_c; sigma^2 m + s^2) dm  +  atoms
//! ```
//!
//! where `k_ij` is the defective density of the moving time. The kernel values
//! at the quadrature nodes depend on the window length and the rates only, so
//! one [`MovingTimeMixture`] is built per distinct window and reused for every
//! displacement observed over it.

use std::collections::HashMap;

use crate::params::ModelParams;
use crate::quadrature::{graded_breaks, Rule, PANEL_ORDER};
use crate::telegraph::{kernel_same, kernel_switch, ln_kernel_same, ln_kernel_switch, RatePair};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative size below which a mixture entry is recomputed in log form.
const UNDERFLOW_GUARD: f64 = 1e-250;

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Four transition values indexed `[from][to]`, all multiplied by
/// `exp(-ln_scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledMatrix {
    pub ln_scale: f64,
    pub values: [[f64; 2]; 2],
}

impl ScaledMatrix {
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.values[from][to] * self.ln_scale.exp()
    }

    pub fn unscaled(values: [[f64; 2]; 2]) -> Self {
        ScaledMatrix { ln_scale: 0.0, values }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct MovingTimeMixture {
    dt: f64,
    sigma2: f64,
    noise_var: f64,
    /// `0.5 ln(2 pi v_k)` per node, `v_k = sigma^2 m_k + noise_var`.
    half_ln_var: Vec<f64>,
    /// `1 / (2 v_k)`.
    inv_two_var: Vec<f64>,
    /// Quadrature weight times kernel value, `[k00, k01, k10, k11]`.
    weights: Vec<[f64; 4]>,
    /// Logarithms of `weights`, computed directly so that they stay finite
    /// where the weights underflow.
    ln_weights: Vec<[f64; 4]>,
    lambda1: f64,
    lambda0: f64,
    /// `exp(-lambda1 t)`: never left the moving state.
    atom_moving: f64,
    /// `exp(-lambda0 t)`: never left the resting state.
    atom_resting: f64,
}

impl MovingTimeMixture {
    pub(crate) fn new(params: &ModelParams, dt: f64, noise_var: f64) -> Self {
        Self::with_order(params, dt, noise_var, PANEL_ORDER)
    }

    pub(crate) fn with_order(params: &ModelParams, dt: f64, noise_var: f64, order: usize) -> Self {
        let rates = params.rates;
        let sigma2 = params.sigma * params.sigma;
        let rule = moving_time_rule(rates, sigma2, dt, noise_var, order);
        let (l1, l0) = (rates.lambda1(), rates.lambda0());
        let swapped = rates.swapped();
        let mut half_ln_var = Vec::with_capacity(rule.len());
        let mut inv_two_var = Vec::with_capacity(rule.len());
        let mut weights = Vec::with_capacity(rule.len());
        let mut ln_weights = Vec::with_capacity(rule.len());
        for (&m, &w) in rule.nodes.iter().zip(&rule.weights) {
            let var = sigma2 * m + noise_var;
            half_ln_var.push(0.5 * (LN_2PI + var.ln()));
            inv_two_var.push(0.5 / var);
            let rest = dt - m;
            // From resting, the occupation variable is the resting time.
            weights.push([
                w * kernel_same(rest, dt, swapped),
                w * kernel_switch(rest, dt, swapped),
                w * kernel_switch(m, dt, rates),
                w * kernel_same(m, dt, rates),
            ]);
            let lw = w.ln();
            ln_weights.push([
                lw + ln_kernel_same(rest, dt, swapped),
                lw + ln_kernel_switch(rest, dt, swapped),
                lw + ln_kernel_switch(m, dt, rates),
                lw + ln_kernel_same(m, dt, rates),
            ]);
        }
        MovingTimeMixture {
            dt,
            sigma2,
            noise_var,
            half_ln_var,
            inv_two_var,
            weights,
            ln_weights,
            lambda1: l1,
            lambda0: l0,
            atom_moving: (-l1 * dt).exp(),
            atom_resting: (-l0 * dt).exp(),
        }
    }

    pub(crate) fn atom_resting(&self) -> f64 {
        self.atom_resting
    }

    /// Transition densities of the displacement with squared norm
    /// `squared_norm` in `dim` dimensions. The resting atom (zero moving
    /// time) is included only when there is observation noise to smooth it.
    pub(crate) fn densities(&self, squared_norm: f64, dim: usize) -> ScaledMatrix {
        let d = dim as f64;
        let sq = squared_norm;
        let log_gauss = |half_ln_var: f64, inv_two_var: f64| -d * half_ln_var - sq * inv_two_var;

        let var_full = self.sigma2 * self.dt + self.noise_var;
        let ln_atom_moving = -d * 0.5 * (LN_2PI + var_full.ln()) - sq * 0.5 / var_full;
        let smooth_rest = self.noise_var > 0.0;
        let ln_atom_resting = if smooth_rest {
            -d * 0.5 * (LN_2PI + self.noise_var.ln()) - sq * 0.5 / self.noise_var
        } else {
            f64::NEG_INFINITY
        };

        let mut shift = ln_atom_moving.max(ln_atom_resting);
        for (h, i) in self.half_ln_var.iter().zip(&self.inv_two_var) {
            shift = shift.max(log_gauss(*h, *i));
        }
        let mut acc = [0.0f64; 4];
        for ((h, i), w) in self.half_ln_var.iter().zip(&self.inv_two_var).zip(&self.weights) {
            let g = (log_gauss(*h, *i) - shift).exp();
            acc[0] += w[0] * g;
            acc[1] += w[1] * g;
            acc[2] += w[2] * g;
            acc[3] += w[3] * g;
        }
        acc[3] += self.atom_moving * (ln_atom_moving - shift).exp();
        if smooth_rest {
            acc[0] += self.atom_resting * (ln_atom_resting - shift).exp();
        }
        // Every entry is positive in exact arithmetic. When one underflows
        // here its kernel weights are tiny where the Gaussian factor peaks,
        // and only the log-domain sum resolves it.
        if acc.iter().any(|&a| !(a > UNDERFLOW_GUARD)) {
            return self.densities_log_domain(sq, d, ln_atom_moving, ln_atom_resting);
        }
        ScaledMatrix { ln_scale: shift, values: [[acc[0], acc[1]], [acc[2], acc[3]]] }
    }

    /// Same as [`Self::densities`] with each entry shifted by its own maximum
    /// term.
    fn densities_log_domain(&self, sq: f64, d: f64, ln_atom_moving: f64, ln_atom_resting: f64) -> ScaledMatrix {
        let mut terms: [Vec<f64>; 4] = Default::default();
        for ((h, i), lw) in self.half_ln_var.iter().zip(&self.inv_two_var).zip(&self.ln_weights) {
            let lg = -d * h - sq * i;
            for e in 0..4 {
                terms[e].push(lw[e] + lg);
            }
        }
        terms[3].push(-self.dt * self.lambda1 + ln_atom_moving);
        if self.noise_var > 0.0 {
            terms[0].push(-self.dt * self.lambda0 + ln_atom_resting);
        }
        let ln: [f64; 4] = std::array::from_fn(|e| log_sum_exp(&terms[e]));
        let shift = ln.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return ScaledMatrix { ln_scale: 0.0, values: [[0.0; 2]; 2] };
        }
        let v: [f64; 4] = std::array::from_fn(|e| (ln[e] - shift).exp());
        ScaledMatrix { ln_scale: shift, values: [[v[0], v[1]], [v[2], v[3]]] }
    }
}

/// Quadrature on moving time `(0, t)`, graded towards `m = 0` down to the
/// scale where the Gaussian variance stops changing (or much further for the
/// noise-free densities, whose variance vanishes there), and towards `m = t`
/// on the scale of the holding times.
fn moving_time_rule(rates: RatePair, sigma2: f64, dt: f64, noise_var: f64, order: usize) -> Rule {
    let (l1, l0) = (rates.lambda1(), rates.lambda0());
    let lmax = l1.max(l0);
    let tiny = dt * 1e-12;
    let half = dt * 0.5;
    let floor_lo = if noise_var > 0.0 {
        (0.25 * (noise_var / sigma2).min(1.0 / lmax)).clamp(tiny, half)
    } else {
        tiny
    };
    let floor_hi = (0.25 / lmax).clamp(tiny, half);
    // Spread of the occupation time around its mode when both rates are large.
    let spread = (2.0 * l1 * l0 * dt / (l1 + l0).powi(3)).sqrt();
    let max_width = (2.0 * spread).clamp(dt / 256.0, dt / 4.0);
    let breaks = graded_breaks(0.0, dt, floor_lo, floor_hi, max_width);
    Rule::on_panels(&breaks, order)
}

/// Mixtures keyed by the exact bit pattern of the window length.
pub(crate) struct MixtureCache {
    params: ModelParams,
    noise_var: f64,
    map: HashMap<u64, MovingTimeMixture>,
}

impl MixtureCache {
    pub(crate) fn new(params: ModelParams, noise_var: f64) -> Self {
        MixtureCache { params, noise_var, map: HashMap::new() }
    }

    pub(crate) fn get(&mut self, dt: f64) -> &MovingTimeMixture {
        let (params, noise_var) = (self.params, self.noise_var);
        self.map
            .entry(dt.to_bits())
            .or_insert_with(|| MovingTimeMixture::new(&params, dt, noise_var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_the_panel_order_changes_little() {
        let cases = [
            (1.0, 0.5, 1.0, 0.01, 1.0),
            (1.0, 0.5, 1.0, 0.05, 5.0),
            (3.0, 0.2, 0.4, 0.1, 2.0),
            (0.3, 2.0, 2.0, 0.0, 3.0),
            (300.0, 3.0, 5.0, 0.0, 5.0),
        ];
        for (l1, l0, s, se, dt) in cases {
            let p = ModelParams::new(l1, l0, s, se).unwrap();
            let nv = 2.0 * se * se;
            let a = MovingTimeMixture::with_order(&p, dt, nv, 16);
            let b = MovingTimeMixture::with_order(&p, dt, nv, 32);
            for z in [1e-4, 0.01, 0.1, 0.7, 2.0] {
                for dim in [1, 2] {
                    let x = a.densities(z * z, dim);
                    let y = b.densities(z * z, dim);
                    for i in 0..2 {
                        for j in 0..2 {
                            let (u, v) = (x.get(i, j), y.get(i, j));
                            assert!(
                                (u - v).abs() <= 1e-8 * v.abs() + 1e-300,
                                "{l1} {l0} {s} {se} {dt} z={z} d={dim} [{i}][{j}]: {u} vs {v}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn log_domain_sum_agrees_with_the_direct_sum() {
        let p = ModelParams::new(1.3, 0.6, 0.8, 0.03).unwrap();
        let nv = 2.0 * 0.03 * 0.03;
        let mix = MovingTimeMixture::new(&p, 1.5, nv);
        for z in [0.0, 0.05, 0.4, 1.5] {
            let d = 2.0;
            let sq = 2.0 * z * z;
            let var_full = mix.sigma2 * mix.dt + nv;
            let lam = -d * 0.5 * (LN_2PI + var_full.ln()) - sq * 0.5 / var_full;
            let lar = -d * 0.5 * (LN_2PI + nv.ln()) - sq * 0.5 / nv;
            let a = mix.densities(sq, 2);
            let b = mix.densities_log_domain(sq, d, lam, lar);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a.get(i, j) / b.get(i, j) - 1.0).abs() < 1e-12, "z={z} [{i}][{j}]");
                }
            }
        }
    }

    #[test]
    fn far_tail_entries_stay_positive() {
        // Moving is rare and slow, so a unit displacement is astronomically
        // unlikely but still has a finite log-density.
        let p = ModelParams::new(909.0, 13.6, 0.03, 0.0057).unwrap();
        let nv = 2.0 * 0.0057f64.powi(2);
        let m = MovingTimeMixture::new(&p, 1.0, nv).densities(2.0, 2);
        assert!(m.ln_scale.is_finite());
        for i in 0..2 {
            for j in 0..2 {
                assert!(m.values[i][j] > 0.0, "[{i}][{j}] {m:?}");
            }
        }
    }
}
