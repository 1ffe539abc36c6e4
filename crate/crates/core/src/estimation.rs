//! Maximum composite likelihood fitting, parametric bootstrap, and the
//! Godambe sandwich variance.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composite::{marginal_cl, two_piece_cl, CLMethod};
use crate::error::{Error, Result};
use crate::mr_density::mr_loglik;
use crate::mrme_model::simulate_mrme;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::params::{nan_as_null, ModelParams};
use crate::telegraph::InitialState;
use crate::track::Track;

/// The objective being maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Two-piece composite likelihood of the noisy model.
    TwoPiece,
    /// Marginal composite likelihood of the noisy model.
    Marginal,
    /// Exact likelihood of the noise-free model; `sigma_eps` is fixed at 0.
    #[serde(rename = "mr")]
    NoiseFree,
}

impl From<CLMethod> for Method {
    fn from(m: CLMethod) -> Self {
        match m {
            CLMethod::TwoPiece => Method::TwoPiece,
            CLMethod::Marginal => Method::Marginal,
        }
    }
}

impl Method {
    /// Number of free parameters.
    pub fn n_params(self) -> usize {
        match self {
            Method::NoiseFree => 3,
            _ => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::TwoPiece => "twopiece",
            Method::Marginal => "marginal",
            Method::NoiseFree => "mr",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "twopiece" => Ok(Method::TwoPiece),
            "marginal" => Ok(Method::Marginal),
            "mr" | "noisefree" => Ok(Method::NoiseFree),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method '{s}' (expected twopiece, marginal or mr)"
            ))),
        }
    }
}

/// Log-likelihood (or composite log-likelihood) of `track` under `method`.
pub fn objective(track: &Track, p: &ModelParams, method: Method) -> Result<f64> {
    match method {
        Method::TwoPiece => two_piece_cl(track, p),
        Method::Marginal => marginal_cl(track, p),
        Method::NoiseFree => mr_loglik(track, p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub method: Method,
    /// Starting point; `None` uses [`default_init`].
    pub init: Option<ModelParams>,
    pub max_iters: usize,
    pub xtol: f64,
    pub ftol: f64,
    /// Optimize over log-parameters. When false the simplex moves on the
    /// natural scale and infeasible points score as `-inf`.
    pub log_transform: bool,
    /// A fit whose estimate differs from the start by more than this in
    /// some log-parameter is reported as diverged: the objective kept
    /// improving towards the edge of the parameter space, so there is no
    /// finite maximizer to converge to.
    pub max_log_excursion: f64,
}

/// Six orders of magnitude.
pub const DEFAULT_MAX_LOG_EXCURSION: f64 = 6.0 * std::f64::consts::LN_10;

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            method: Method::TwoPiece,
            init: None,
            max_iters: 2000,
            xtol: 1e-6,
            ftol: 1e-8,
            log_transform: true,
            max_log_excursion: DEFAULT_MAX_LOG_EXCURSION,
        }
    }
}

impl FitOptions {
    pub fn with_method(method: Method) -> Self {
        FitOptions { method, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.xtol > 0.0 && self.ftol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.max_log_excursion > 0.0) {
            return Err(Error::InvalidArgument("max_log_excursion must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimate: ModelParams,
    /// The simplex met both tolerances at a finite objective and the
    /// estimate did not diverge.
    pub converged: bool,
    /// The estimate ran off towards zero or infinity in some parameter.
    pub diverged: bool,
    /// Objective at the estimate.
    pub objective: f64,
    pub n_evals: usize,
    pub iterations: usize,
    pub method: Method,
    pub init: ModelParams,
}

/// Moment-based starting values.
///
/// Most short increments of a resting animal are pure noise with standard
/// deviation `sqrt(2) sigma_eps`, so a low quantile of `|dz|` pins the noise
/// level; the mean squared increment per unit time then gives `sigma`
/// assuming half the time is spent moving. Both rates start at the inverse
/// mean sampling gap.
pub fn default_init(track: &Track, method: Method) -> Result<ModelParams> {
    track.require_len(2)?;
    let d = track.dim();
    let n = track.len() - 1;
    let mut abs_dz = Vec::with_capacity(n * d);
    let mut sq_rate = 0.0;
    let mut noise_sq = 0.0;
    let mean_gap = (track.times()[n] - track.times()[0]) / n as f64;
    for k in 1..=n {
        let dz = track.increment(k);
        abs_dz.extend(dz.iter().map(|x| x.abs()));
        sq_rate += dz.iter().map(|x| x * x).sum::<f64>() / (d as f64 * track.gap(k));
    }
    sq_rate /= n as f64;
    abs_dz.sort_by(f64::total_cmp);
    // P(|N(0, s^2)| < 0.2533 s) = 0.2
    let q20 = abs_dz[(abs_dz.len() - 1) / 5];
    let mut sigma_eps = q20 / 0.2533 / std::f64::consts::SQRT_2;
    if method == Method::NoiseFree {
        sigma_eps = 0.0;
    } else {
        let spread = abs_dz.iter().sum::<f64>() / abs_dz.len() as f64;
        sigma_eps = sigma_eps.max(1e-3 * spread.max(1e-12));
        noise_sq = 2.0 * sigma_eps * sigma_eps / mean_gap;
    }
    let sigma2 = ((sq_rate - noise_sq) / 0.5).max(0.25 * sq_rate / 0.5).max(1e-12);
    let rate = 1.0 / mean_gap;
    ModelParams::new(rate, rate, sigma2.sqrt(), sigma_eps)
}

fn to_free(p: &ModelParams, method: Method, log: bool) -> Vec<f64> {
    let v = p.to_array();
    v[..method.n_params()].iter().map(|x| if log { x.ln() } else { *x }).collect()
}

fn from_free(x: &[f64], log: bool) -> Result<ModelParams> {
    let mut v = [0.0; 4];
    for (out, xi) in v.iter_mut().zip(x) {
        *out = if log { xi.exp() } else { *xi };
    }
    ModelParams::from_array(v)
}

/// Maximize the chosen objective with Nelder–Mead.
///
/// Running out of iterations is not an error: the best point found is
/// returned with `converged = false`.
pub fn fit(track: &Track, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    let method = opts.method;
    let init = match opts.init {
        Some(p) => p,
        None => default_init(track, method)?,
    };
    if method == Method::NoiseFree && init.sigma_eps != 0.0 {
        return Err(Error::InvalidParameter("the noise-free fit needs sigma_eps = 0 in the start".into()));
    }
    if method != Method::NoiseFree && !(init.sigma_eps > 0.0) {
        return Err(Error::InvalidParameter("composite likelihood fits need sigma_eps > 0 in the start".into()));
    }
    // Surfaces input errors such as a short track before optimizing.
    if let Err(e) = objective(track, &init, method) {
        if e.is_validation() {
            return Err(e);
        }
    }
    let log = opts.log_transform;
    let neg = |x: &[f64]| match from_free(x, log).and_then(|p| objective(track, &p, method)) {
        Ok(v) if v.is_finite() => -v,
        _ => f64::INFINITY,
    };
    let x0 = to_free(&init, method, log);
    // A quarter step in every log-parameter, or a quarter of the smallest
    // coordinate on the natural scale.
    let initial_step = if log { 0.25 } else { 0.25 * x0.iter().cloned().fold(f64::INFINITY, f64::min) };
    let nm_opts = NelderMeadOptions { xtol: opts.xtol, ftol: opts.ftol, max_iters: opts.max_iters, initial_step };
    let m = nelder_mead(neg, &x0, &nm_opts);
    let estimate = from_free(&m.x, log)?;
    let diverged = estimate.to_array()[..method.n_params()]
        .iter()
        .zip(init.to_array())
        .any(|(e, s)| (e.ln() - s.ln()).abs() > opts.max_log_excursion);
    Ok(FitResult {
        estimate,
        converged: m.converged && m.value.is_finite() && !diverged,
        diverged,
        objective: -m.value,
        n_evals: m.evaluations,
        iterations: m.iterations,
        method,
        init,
    })
}

/// Replicates below this count give unreliable standard errors.
pub const LOW_REPLICATE_COUNT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Converged refits, in replicate order.
    pub replicates: Vec<ModelParams>,
    /// Standard deviation of each parameter across replicates.
    #[serde(with = "nan_as_null")]
    pub se: [f64; 4],
    /// 95% percentile intervals.
    #[serde(with = "nan_as_null::pairs")]
    pub ci: [(f64, f64); 4],
    pub n_requested: usize,
    pub n_failed: usize,
    /// More than half of the refits failed.
    pub degraded: bool,
    /// Fewer than [`LOW_REPLICATE_COUNT`] replicates were requested.
    pub low_replicates: bool,
}

/// Seed of replicate `index` in a run with base seed `seed`.
pub fn replicate_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

/// Parametric bootstrap: simulate `m` tracks at `theta_hat` on the grid
/// `times`, refit each starting from `theta_hat`, and summarize the spread.
/// Replicate `k` uses the seed `seed + k`, so the result does not depend on
/// how the work is scheduled.
pub fn bootstrap(
    times: &[f64],
    dim: usize,
    theta_hat: &ModelParams,
    m: usize,
    opts: &FitOptions,
    seed: u64,
) -> Result<BootstrapResult> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("bootstrap needs at least 2 replicates, got {m}")));
    }
    opts.validate()?;
    let refit_opts = FitOptions { init: Some(*theta_hat), ..*opts };
    let fits: Vec<Option<ModelParams>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(seed, k));
            let sim = simulate_mrme(theta_hat, times, dim, InitialState::Stationary, &mut rng).ok()?;
            let r = fit(&sim.track, &refit_opts).ok()?;
            r.converged.then_some(r.estimate)
        })
        .collect();
    let replicates: Vec<ModelParams> = fits.into_iter().flatten().collect();
    let n_failed = m - replicates.len();
    let mut se = [f64::NAN; 4];
    let mut ci = [(f64::NAN, f64::NAN); 4];
    for i in 0..4 {
        let col: Vec<f64> = replicates.iter().map(|p| p.to_array()[i]).collect();
        if let Some(s) = Summary::of(&col) {
            se[i] = s.sd;
        }
        ci[i] = (quantile(&col, 0.025), quantile(&col, 0.975));
    }
    Ok(BootstrapResult {
        replicates,
        se,
        ci,
        n_requested: m,
        n_failed,
        degraded: 2 * n_failed > m,
        low_replicates: m < LOW_REPLICATE_COUNT,
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    /// `None` for fewer than two values.
    pub fn of(xs: &[f64]) -> Option<Summary> {
        if xs.len() < 2 {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Some(Summary { mean, sd: var.sqrt() })
    }
}

/// Linear-interpolation quantile (the usual "type 7" definition). NaN for an
/// empty sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Central-difference gradient with per-coordinate steps `h`.
pub fn central_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h[i];
            let fp = f(&y);
            y[i] = x[i] - h[i];
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h[i])
        })
        .collect()
}

/// Central-difference Hessian with per-coordinate steps `h`.
pub fn central_hessian(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut y = x.to_vec();
    let mut at = |y: &mut Vec<f64>, moves: &[(usize, f64)]| {
        for &(i, s) in moves {
            y[i] = x[i] + s * h[i];
        }
        let v = f(y);
        for &(i, _) in moves {
            y[i] = x[i];
        }
        v
    };
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let fp = at(&mut y, &[(i, 1.0)]);
        let fm = at(&mut y, &[(i, -1.0)]);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let pp = at(&mut y, &[(i, 1.0), (j, 1.0)]);
            let pm = at(&mut y, &[(i, 1.0), (j, -1.0)]);
            let mp = at(&mut y, &[(i, -1.0), (j, 1.0)]);
            let mm = at(&mut y, &[(i, -1.0), (j, -1.0)]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Step `1e-4 max(1, |eta_i|)` used for all finite differences in the
/// log-parameters.
pub fn fd_steps(eta: &[f64]) -> Vec<f64> {
    eta.iter().map(|e| 1e-4 * e.abs().max(1.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GodambeResult {
    /// Sandwich covariance of the estimate on the natural scale.
    pub covariance: Vec<Vec<f64>>,
    /// The same on the log scale.
    pub covariance_log: Vec<Vec<f64>>,
    /// Square roots of the diagonal of `covariance`.
    pub se: Vec<f64>,
    /// Hessian of the negative objective in the log-parameters.
    pub sensitivity: Vec<Vec<f64>>,
    /// Covariance of the objective gradient across simulated datasets.
    pub variability: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

/// Inverse Godambe information `H^-1 J H^-1` at `theta_hat`.
///
/// `H` is the central-difference Hessian of the negative objective on
/// `track`; `J` is the covariance of the objective gradient over `m`
/// datasets simulated at `theta_hat` on the same grid. Both are taken in the
/// log-parameters and mapped back by the delta method.
pub fn godambe_variance(
    track: &Track,
    theta_hat: &ModelParams,
    m: usize,
    opts: &FitOptions,
    seed: u64,
) -> Result<GodambeResult> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 simulated datasets, got {m}")));
    }
    let method = opts.method;
    let eta = to_free(theta_hat, method, true);
    let h = fd_steps(&eta);
    let value = |t: &Track, x: &[f64]| {
        from_free(x, true).and_then(|p| objective(t, &p, method)).unwrap_or(f64::NAN)
    };
    objective(track, theta_hat, method)?;
    let hess = central_hessian(|x| -value(track, x), &eta, &h);
    if hess.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Hessian has non-finite entries".into()));
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    let eig = SymmetricEigen::new(hess.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Numerical(format!(
            "Hessian of the negative objective is not positive definite (eigenvalues {:?})",
            eig.eigenvalues.as_slice()
        )));
    }
    let times = track.times().to_vec();
    let dim = track.dim();
    let grads: Vec<Option<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(seed, k));
            let sim = simulate_mrme(theta_hat, &times, dim, InitialState::Stationary, &mut rng).ok()?;
            let g = central_gradient(|x| value(&sim.track, x), &eta, &h);
            g.iter().all(|v| v.is_finite()).then_some(g)
        })
        .collect();
    let grads: Vec<Vec<f64>> = grads.into_iter().flatten().collect();
    let n = eta.len();
    if grads.len() < 2 {
        return Err(Error::Numerical("too few finite gradients for the variability matrix".into()));
    }
    let mut mean = vec![0.0; n];
    for g in &grads {
        for (a, b) in mean.iter_mut().zip(g) {
            *a += b / grads.len() as f64;
        }
    }
    let mut j = DMatrix::zeros(n, n);
    for g in &grads {
        for a in 0..n {
            for b in 0..n {
                j[(a, b)] += (g[a] - mean[a]) * (g[b] - mean[b]) / (grads.len() - 1) as f64;
            }
        }
    }
    let j_eig = SymmetricEigen::new(j.clone());
    let j_max = j_eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if j_eig.eigenvalues.iter().any(|&l| !(l > 1e-12 * j_max)) {
        return Err(Error::Numerical("gradient variability matrix is singular".into()));
    }
    let h_inv = hess
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Hessian is singular".into()))?;
    let cov_eta = &h_inv * &j * &h_inv;
    let cov_eta = (&cov_eta + cov_eta.transpose()) * 0.5;
    let jac = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        theta_hat.to_array()[..n].iter().cloned(),
    ));
    let cov = &jac * &cov_eta * &jac;
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GodambeResult {
        se: (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
        covariance: rows(&cov),
        covariance_log: rows(&cov_eta),
        sensitivity: rows(&hess),
        variability: rows(&j),
    })
}
