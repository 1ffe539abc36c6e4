//! Special functions: exponentially scaled modified Bessel functions and the
//! distribution of a sum of two independent Erlang (integer-shape gamma)
//! variables.
//!
//! The Erlang-sum routines use uniformization: with `r` the larger of the
//! two rates, an exponential holding time of the slower rate is a geometric
//! number of exponentials of rate `r`. The sum of the two Erlang variables is
//! therefore an Erlang variable of rate `r` whose shape is shifted by a
//! negative-binomial count. Every term of the resulting series is positive,
//! so there is no cancellation even for large shapes or nearly equal rates.

use crate::error::{Error, Result};

const SERIES_SWITCH: f64 = 20.0;
const MAX_SERIES_TERMS: usize = 1_000_000;

/// `e^{-x} I_0(x)` for `x >= 0`.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= SERIES_SWITCH {
        (-x).exp() * bessel_series(x, 0)
    } else {
        bessel_asymptotic(x, 0)
    }
}

/// `e^{-x} I_1(x)` for `x >= 0`.
pub fn bessel_i1_scaled(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= SERIES_SWITCH {
        (-x).exp() * 0.5 * x * bessel_series(x, 1)
    } else {
        bessel_asymptotic(x, 1)
    }
}

/// `e^{-x} 2 I_1(x) / x`, continuous at the origin where it equals 1.
pub fn bessel_i1_ratio_scaled(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= SERIES_SWITCH {
        (-x).exp() * bessel_series(x, 1)
    } else {
        2.0 * bessel_asymptotic(x, 1) / x
    }
}

/// `sum_k (x/2)^{2k} / (k! (k+nu)!)`, i.e. `I_nu(x) / (x/2)^nu * nu!` up to
/// the `nu!` factor, which is 1 for the orders used here.
fn bessel_series(x: f64, nu: u32) -> f64 {
    let y = 0.25 * x * x;
    let nu = nu as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= y / (k * (k + nu));
        sum += term;
        if term < 1e-17 * sum {
            return sum;
        }
    }
}

fn bessel_asymptotic(x: f64, nu: u32) -> f64 {
    let mu = 4.0 * (nu * nu) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * k * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// `ln Gamma(x)` for positive arguments.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln P(N = n)` for `N ~ Poisson(mu)`.
pub fn ln_poisson_pmf(n: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let n = n as f64;
    -mu + n * mu.ln() - ln_gamma(n + 1.0)
}

fn validate(t: f64, b1: f64, b2: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "time must be finite and nonnegative, got {t}"
        )));
    }
    if !(b1 > 0.0 && b1.is_finite() && b2 > 0.0 && b2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rates must be positive and finite, got {b1} and {b2}"
        )));
    }
    Ok(())
}

/// Uniformized representation of `Gamma(a1, b1) + Gamma(a2, b2)`: the sum is
/// `Erlang(a1 + a2 + K, fast)` with `K ~ NegBin(slow_shape, p)` counting
/// failures, `p = slow / fast`.
struct Uniformized {
    fast: f64,
    slow_shape: u64,
    ln_p: f64,
    ln_q: f64,
    total_shape: u64,
}

impl Uniformized {
    fn new(a1: u64, b1: f64, a2: u64, b2: f64) -> Self {
        let (slow_shape, slow, fast) = if b1 <= b2 { (a1, b1, b2) } else { (a2, b2, b1) };
        let p = slow / fast;
        let q = (fast - slow) / fast;
        Uniformized {
            fast,
            slow_shape,
            ln_p: p.ln(),
            ln_q: if q > 0.0 { q.ln() } else { f64::NEG_INFINITY },
            total_shape: a1 + a2,
        }
    }

    fn ln_negbin(&self, k: u64) -> f64 {
        let a = self.slow_shape;
        if a == 0 {
            return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        if k == 0 {
            return a as f64 * self.ln_p;
        }
        let (a, kf) = (a as f64, k as f64);
        ln_gamma(kf + a) - ln_gamma(a) - ln_gamma(kf + 1.0) + a * self.ln_p + kf * self.ln_q
    }
}

/// Streaming log-sum-exp accumulator.
#[derive(Default)]
struct LogSum {
    max: f64,
    scaled: f64,
    started: bool,
}

impl LogSum {
    fn add(&mut self, ln_term: f64) {
        if ln_term == f64::NEG_INFINITY {
            return;
        }
        if !self.started {
            self.max = ln_term;
            self.scaled = 1.0;
            self.started = true;
        } else if ln_term <= self.max {
            self.scaled += (ln_term - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - ln_term).exp() + 1.0;
            self.max = ln_term;
        }
    }

    fn ln(&self) -> f64 {
        if self.started {
            self.max + self.scaled.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Density at `t` of `Gamma(a1, b1) + Gamma(a2, b2)` with integer shapes.
///
/// Requires `a1 + a2 >= 1`.
pub fn gamma_sum_density(t: f64, a1: u64, b1: f64, a2: u64, b2: f64) -> Result<f64> {
    validate(t, b1, b2)?;
    if a1 + a2 == 0 {
        return Err(Error::InvalidArgument(
            "density of a point mass is undefined".into(),
        ));
    }
    let u = Uniformized::new(a1, b1, a2, b2);
    let mu = u.fast * t;
    let n0 = u.total_shape;
    if t == 0.0 {
        // Only an exponential with no companion mass has density at zero.
        return Ok(if n0 == 1 { u.fast * u.ln_negbin(0).exp() } else { 0.0 });
    }
    let ln_mu = mu.ln();
    let a = u.slow_shape as f64;
    let mut ln_term = u.ln_negbin(0) + ln_poisson_pmf(n0 - 1, mu);
    let mut acc = LogSum::default();
    acc.add(ln_term);
    if u.slow_shape == 0 || u.ln_q == f64::NEG_INFINITY {
        return Ok(u.fast * acc.ln().exp());
    }
    for k in 0..MAX_SERIES_TERMS as u64 {
        let kf = k as f64;
        let ln_ratio = u.ln_q + ((kf + a) / (kf + 1.0)).ln() + ln_mu - ((n0 + k) as f64).ln();
        ln_term += ln_ratio;
        acc.add(ln_term);
        if ln_ratio < 0.0 && ln_term < acc.ln() - 46.0 {
            return Ok(u.fast * acc.ln().exp());
        }
    }
    Err(Error::Numerical(
        "Erlang-sum density series did not converge".into(),
    ))
}

/// `P(N >= n)` for `N ~ Poisson(mu)`, for every `n` in `lo..=hi`, computed by
/// downward recursion so that small tails keep full relative accuracy.
fn poisson_upper_tails(lo: u64, hi: u64, mu: f64) -> Vec<f64> {
    // Tail beyond `hi`: direct summation of decreasing terms.
    let mut tail = 0.0;
    let mut ln_term = ln_poisson_pmf(hi + 1, mu);
    let mut m = hi + 1;
    loop {
        let term = ln_term.exp();
        tail += term;
        if term <= 1e-20 * tail || term == 0.0 {
            break;
        }
        m += 1;
        ln_term += mu.ln() - (m as f64).ln();
    }
    let mut out = vec![0.0; (hi - lo + 1) as usize];
    for n in (lo..=hi).rev() {
        tail += ln_poisson_pmf(n, mu).exp();
        out[(n - lo) as usize] = tail.min(1.0);
    }
    out
}

/// `F(t; a1, b1, a2, b2) = P(G1 + G2 <= t)` for independent
/// `G1 ~ Gamma(a1, b1)`, `G2 ~ Gamma(a2, b2)` with integer shapes (rate
/// parametrization). A zero shape denotes a point mass at zero.
pub fn gamma_sum_cdf(t: f64, a1: u64, b1: f64, a2: u64, b2: f64) -> Result<f64> {
    validate(t, b1, b2)?;
    if a1 + a2 == 0 {
        return Ok(1.0);
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let u = Uniformized::new(a1, b1, a2, b2);
    let mu = u.fast * t;
    let n0 = u.total_shape;
    let hi = n0.max((mu + 15.0 * mu.sqrt() + 40.0).ceil() as u64) + 40;
    let tails = poisson_upper_tails(n0, hi, mu);
    let mut total = 0.0;
    for (k, tail) in tails.iter().enumerate() {
        let w = u.ln_negbin(k as u64);
        if w == f64::NEG_INFINITY && k > 0 {
            break;
        }
        total += w.exp() * tail;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// `H(t; a1, b1, a2, b2) = F(t; a1, b1, a2, b2) - F(t; a1 + 1, b1, a2, b2)`.
///
/// Evaluated without subtraction through the identity
/// `H = f(t; a1 + 1, b1, a2, b2) / b1`, where `f` is the density of the
/// Erlang sum: `H` is the probability that `G1 + G2 <= t < G1 + G2 + E` with
/// `E ~ Exp(b1)`.
pub fn h_diff(t: f64, a1: u64, b1: f64, a2: u64, b2: f64) -> Result<f64> {
    Ok(gamma_sum_density(t, a1 + 1, b1, a2, b2)? / b1)
}
