//! The two-state (telegraph) holding-time process that switches the animal
//! between moving and resting.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{bessel_i0_scaled, bessel_i1_ratio_scaled, h_diff};

/// Hidden behavioural state. The integer codes are those of `S(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Resting = 0,
    Moving = 1,
}

impl StateKind {
    pub const BOTH: [StateKind; 2] = [StateKind::Resting, StateKind::Moving];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> StateKind {
        match i {
            0 => StateKind::Resting,
            1 => StateKind::Moving,
            _ => panic!("state index out of range: {i}"),
        }
    }

    pub fn flip(self) -> StateKind {
        match self {
            StateKind::Resting => StateKind::Moving,
            StateKind::Moving => StateKind::Resting,
        }
    }
}

/// How the state at time zero is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    Stationary,
    Fixed(StateKind),
}

/// Switching rates: `lambda1` leaves the moving state, `lambda0` leaves the
/// resting state (both per unit time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRates")]
pub struct RatePair {
    lambda1: f64,
    lambda0: f64,
}

#[derive(Deserialize)]
struct RawRates {
    lambda1: f64,
    lambda0: f64,
}

impl TryFrom<RawRates> for RatePair {
    type Error = Error;

    fn try_from(r: RawRates) -> Result<Self> {
        RatePair::new(r.lambda1, r.lambda0)
    }
}

impl RatePair {
    pub fn new(lambda1: f64, lambda0: f64) -> Result<Self> {
        if !(lambda1 > 0.0 && lambda1.is_finite() && lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "switching rates must be positive and finite, got lambda1={lambda1}, lambda0={lambda0}"
            )));
        }
        Ok(RatePair { lambda1, lambda0 })
    }

    #[inline]
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    #[inline]
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// Rate of leaving `state`.
    #[inline]
    pub fn leave_rate(&self, state: StateKind) -> f64 {
        match state {
            StateKind::Moving => self.lambda1,
            StateKind::Resting => self.lambda0,
        }
    }

    /// The same process with the roles of the two states exchanged.
    pub fn swapped(&self) -> RatePair {
        RatePair { lambda1: self.lambda0, lambda0: self.lambda1 }
    }
}

/// Stationary law `(p1, p0)` of the state process.
pub fn stationary_dist(rates: RatePair) -> (f64, f64) {
    let p1 = rates.lambda0 / (rates.lambda0 + rates.lambda1);
    let p0 = rates.lambda1 / (rates.lambda0 + rates.lambda1);
    (p1, p0)
}

/// Stationary weights indexed by [`StateKind::index`].
pub fn stationary_weights(rates: RatePair) -> [f64; 2] {
    let (p1, p0) = stationary_dist(rates);
    [p0, p1]
}

const TAU_TERM_TOL: f64 = 1e-12;
const TAU_MAX_TERMS: u64 = 10_000;

/// `tau_ij(t) = P(S(t) = j | S(0) = i)` by summing holding-time convolutions.
///
/// Each term is the probability of a fixed number of completed switches; the
/// sum stops once past `max(lambda) t` switches and three consecutive terms
/// fall below `1e-12`.
pub fn tau(from: StateKind, to: StateKind, t: f64, rates: RatePair) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    let (l1, l0) = (rates.lambda1, rates.lambda0);
    // (rate of the holding times counted n times, the other rate, extra holding times of the latter)
    let (b1, b2, extra) = match (from, to) {
        (StateKind::Resting, StateKind::Moving) => (l1, l0, 1),
        (StateKind::Moving, StateKind::Resting) => (l0, l1, 1),
        (StateKind::Resting, StateKind::Resting) => (l0, l1, 0),
        (StateKind::Moving, StateKind::Moving) => (l1, l0, 0),
    };
    let switch_scale = l1.max(l0) * t;
    let mut sum = 0.0;
    let mut small_run = 0;
    for n in 0..TAU_MAX_TERMS {
        let term = h_diff(t, n, b1, n + extra, b2)?;
        sum += term;
        if term < TAU_TERM_TOL {
            small_run += 1;
        } else {
            small_run = 0;
        }
        if small_run >= 3 && n as f64 > switch_scale {
            return Ok(sum.clamp(0.0, 1.0));
        }
    }
    Err(Error::Numerical(format!(
        "transition-probability series did not converge within {TAU_MAX_TERMS} terms (t={t}, lambda1={l1}, lambda0={l0})"
    )))
}

/// The 2x2 matrix `tau_ij(t)` indexed `[from][to]`.
pub fn tau_matrix(t: f64, rates: RatePair) -> Result<[[f64; 2]; 2]> {
    let mut m = [[0.0; 2]; 2];
    for i in StateKind::BOTH {
        for j in StateKind::BOTH {
            m[i.index()][j.index()] = tau(i, j, t, rates)?;
        }
    }
    Ok(m)
}

/// Above this many expected switches the series costs grow quadratically
/// and the chain is far into its stationary regime.
const SERIES_SWITCH_LIMIT: f64 = 50.0;

/// Transition matrix used by the likelihood: the series of [`tau_matrix`]
/// while `max(lambda) t <= 50`, the closed form beyond. The two agree to
/// rounding wherever both are evaluated.
pub(crate) fn likelihood_tau_matrix(t: f64, rates: RatePair) -> Result<[[f64; 2]; 2]> {
    if rates.lambda1.max(rates.lambda0) * t <= SERIES_SWITCH_LIMIT {
        return tau_matrix(t, rates);
    }
    let mut m = [[0.0; 2]; 2];
    for i in StateKind::BOTH {
        for j in StateKind::BOTH {
            m[i.index()][j.index()] = tau_closed_form(i, j, t, rates);
        }
    }
    Ok(m)
}

/// Closed-form solution of the two-state chain. Used as a cross-check for
/// [`tau`].
pub fn tau_closed_form(from: StateKind, to: StateKind, t: f64, rates: RatePair) -> f64 {
    let (p1, p0) = stationary_dist(rates);
    let decay = -(-(rates.lambda0 + rates.lambda1) * t).exp_m1();
    match (from, to) {
        (StateKind::Resting, StateKind::Moving) => p1 * decay,
        (StateKind::Resting, StateKind::Resting) => 1.0 - p1 * decay,
        (StateKind::Moving, StateKind::Resting) => p0 * decay,
        (StateKind::Moving, StateKind::Moving) => 1.0 - p0 * decay,
    }
}

/// Defective densities of the occupation time on `(0, t)`.
///
/// From the moving state the variable is the time spent moving, `M(t)`; from
/// the resting state it is the time spent resting, `R(t)`. The mass missing
/// from `p_11` (resp. `p_00`) is the atom `exp(-lambda1 t)` (resp.
/// `exp(-lambda0 t)`) of never having switched.
pub fn occupation_density(
    from: StateKind,
    to: StateKind,
    w: f64,
    t: f64,
    rates: RatePair,
) -> Result<f64> {
    if !(w > 0.0 && w < t && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "occupation time must lie in (0, t): w={w}, t={t}"
        )));
    }
    // Resting-start densities are the moving-start ones with the states relabelled.
    let rates = match from {
        StateKind::Moving => rates,
        StateKind::Resting => rates.swapped(),
    };
    let same = from == to;
    Ok(if same {
        kernel_same(w, t, rates)
    } else {
        kernel_switch(w, t, rates)
    })
}

/// `p_11(w, t)`: start moving, moving time `w`, end moving.
#[inline]
pub(crate) fn kernel_same(w: f64, t: f64, rates: RatePair) -> f64 {
    let (l1, l0) = (rates.lambda1, rates.lambda0);
    let r = t - w;
    let x = 2.0 * (l1 * l0 * w * r).sqrt();
    l1 * l0 * w * (-l1 * w - l0 * r + x).exp() * bessel_i1_ratio_scaled(x)
}

/// `p_10(w, t)`: start moving, moving time `w`, end resting.
#[inline]
pub(crate) fn kernel_switch(w: f64, t: f64, rates: RatePair) -> f64 {
    let (l1, l0) = (rates.lambda1, rates.lambda0);
    let r = t - w;
    let x = 2.0 * (l1 * l0 * w * r).sqrt();
    l1 * (-l1 * w - l0 * r + x).exp() * bessel_i0_scaled(x)
}

/// `ln p_11(w, t)`, finite wherever the density is positive even when the
/// density itself underflows.
pub(crate) fn ln_kernel_same(w: f64, t: f64, rates: RatePair) -> f64 {
    let (l1, l0) = (rates.lambda1, rates.lambda0);
    let r = t - w;
    let x = 2.0 * (l1 * l0 * w * r).sqrt();
    (l1 * l0 * w).ln() - l1 * w - l0 * r + x + bessel_i1_ratio_scaled(x).ln()
}

/// `ln p_10(w, t)`.
pub(crate) fn ln_kernel_switch(w: f64, t: f64, rates: RatePair) -> f64 {
    let (l1, l0) = (rates.lambda1, rates.lambda0);
    let r = t - w;
    let x = 2.0 * (l1 * l0 * w * r).sqrt();
    l1.ln() - l1 * w - l0 * r + x + bessel_i0_scaled(x).ln()
}

/// A realization of the state process on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPath {
    pub initial_state: StateKind,
    /// Strictly increasing switch times in `(0, horizon]`.
    pub boundaries: Vec<f64>,
    pub horizon: f64,
}

impl SegmentPath {
    /// State at time `t` (the state of the segment containing `t`; a switch
    /// time belongs to the segment it ends).
    pub fn state_at(&self, t: f64) -> StateKind {
        let flips = self.boundaries.partition_point(|&b| b < t);
        if flips % 2 == 0 {
            self.initial_state
        } else {
            self.initial_state.flip()
        }
    }

    /// Total moving time on `[0, t]`.
    pub fn moving_time(&self, t: f64) -> f64 {
        let mut state = self.initial_state;
        let mut last = 0.0;
        let mut total = 0.0;
        for &b in &self.boundaries {
            if b >= t {
                break;
            }
            if state == StateKind::Moving {
                total += b - last;
            }
            last = b;
            state = state.flip();
        }
        if state == StateKind::Moving {
            total += t - last;
        }
        total
    }

    /// Cumulative moving time and state at each of the sorted `times`, in a
    /// single pass.
    pub fn sweep(&self, times: &[f64]) -> Vec<(f64, StateKind)> {
        let mut out = Vec::with_capacity(times.len());
        let mut state = self.initial_state;
        let mut last = 0.0;
        let mut acc = 0.0;
        let mut next = 0;
        for &t in times {
            while next < self.boundaries.len() && self.boundaries[next] < t {
                let b = self.boundaries[next];
                if state == StateKind::Moving {
                    acc += b - last;
                }
                last = b;
                state = state.flip();
                next += 1;
            }
            let partial = if state == StateKind::Moving { t - last } else { 0.0 };
            out.push((acc + partial, state));
        }
        out
    }
}

pub(crate) fn draw_initial<R: Rng + ?Sized>(init: InitialState, rates: RatePair, rng: &mut R) -> StateKind {
    match init {
        InitialState::Fixed(s) => s,
        InitialState::Stationary => {
            let (p1, _) = stationary_dist(rates);
            if rng.random::<f64>() < p1 {
                StateKind::Moving
            } else {
                StateKind::Resting
            }
        }
    }
}

/// Simulate the state process on `[0, horizon]` with exponential holding
/// times.
pub fn simulate_states<R: Rng + ?Sized>(
    rates: RatePair,
    horizon: f64,
    init: InitialState,
    rng: &mut R,
) -> Result<SegmentPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let initial_state = draw_initial(init, rates, rng);
    let moving = Exp::new(rates.lambda1).expect("positive rate");
    let resting = Exp::new(rates.lambda0).expect("positive rate");
    let mut boundaries = Vec::new();
    let mut state = initial_state;
    let mut t = 0.0;
    loop {
        let hold = match state {
            StateKind::Moving => moving.sample(rng),
            StateKind::Resting => resting.sample(rng),
        };
        t += hold;
        if t > horizon {
            break;
        }
        if boundaries.last().is_none_or(|&b| t > b) {
            boundaries.push(t);
        }
        state = state.flip();
    }
    Ok(SegmentPath { initial_state, boundaries, horizon })
}
