//! Simulation studies: repeated simulate, round, fit, and summarize.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{bootstrap, fit, replicate_seed, FitOptions, Method, Summary};
use crate::mrme_model::{regular_grid, round_track, simulate_mrme};
use crate::params::{nan_as_null, ModelParams};
use crate::telegraph::InitialState;

/// Where each fit starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StartPoint {
    /// The parameters the data were simulated from.
    #[default]
    Truth,
    /// The moment heuristic of [`crate::estimation::default_init`].
    Heuristic,
}

/// One simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    /// Study family, e.g. `bias_table1` or `study2`.
    pub study: String,
    /// Row label within the family.
    #[serde(default)]
    pub label: String,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Parameters used for simulation.
    pub truth: ModelParams,
    pub horizon: f64,
    pub interval: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Round simulated coordinates to this grid before fitting.
    #[serde(default)]
    pub rounding: Option<f64>,
    pub methods: Vec<Method>,
    /// Bootstrap replicates per fit; 0 skips the bootstrap.
    #[serde(default)]
    pub bootstrap: usize,
    #[serde(default)]
    pub start: StartPoint,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_dim() -> usize {
    2
}

fn default_max_iters() -> usize {
    FitOptions::default().max_iters
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no fitting methods given".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if self.bootstrap == 1 {
            return Err(Error::InvalidArgument("bootstrap needs at least 2 replicates".into()));
        }
        if let Some(g) = self.rounding {
            if !(g > 0.0) {
                return Err(Error::InvalidArgument(format!("rounding grid must be positive, got {g}")));
            }
        }
        regular_grid(self.horizon, self.interval)?;
        Ok(())
    }
}

/// Simulation parameters shared by the reference studies.
pub fn reference_params(sigma_eps: f64) -> ModelParams {
    ModelParams::new(1.0, 0.5, 1.0, sigma_eps).expect("valid constants")
}

pub const PRESET_NAMES: [&str; 5] = ["table1-text", "table1-caption", "study1", "study2", "study3"];

/// Named study configurations. The two `table1-*` presets differ only in
/// horizon and sampling interval.
pub fn preset(name: &str) -> Result<Vec<StudySpec>> {
    let base = |study: &str, label: String, truth: ModelParams, horizon: f64, interval: f64| StudySpec {
        study: study.into(),
        label,
        replicates: 200,
        seed: 20_240_101,
        truth,
        horizon,
        interval,
        dim: 2,
        rounding: None,
        methods: vec![Method::TwoPiece, Method::Marginal],
        bootstrap: 0,
        start: StartPoint::Truth,
        max_iters: default_max_iters(),
    };
    let table1 = |horizon: f64, interval: f64| {
        let mut rows = vec![StudySpec {
            replicates: 100,
            methods: vec![Method::NoiseFree],
            ..base("bias_table1", "noise none, rounding none".into(), reference_params(0.0), horizon, interval)
        }];
        for se in [0.05, 0.01] {
            for rounding in [None, Some(0.01), Some(0.05), Some(0.10)] {
                let r = rounding.map_or("none".to_string(), |g| format!("{g}"));
                rows.push(StudySpec {
                    replicates: 100,
                    methods: vec![Method::NoiseFree],
                    rounding,
                    ..base("bias_table1", format!("noise {se}, rounding {r}"), reference_params(se), horizon, interval)
                });
            }
        }
        rows
    };
    Ok(match name {
        "table1-text" => table1(1000.0, 5.0),
        "table1-caption" => table1(500.0, 1.0),
        "study1" => [0.01, 0.05]
            .iter()
            .map(|&se| base("study1", format!("sigma_eps {se}"), reference_params(se), 1000.0, 5.0))
            .collect(),
        "study2" => [(200.0, 5.0), (200.0, 1.0), (500.0, 5.0), (500.0, 1.0)]
            .iter()
            .map(|&(h, dt)| StudySpec {
                bootstrap: 50,
                ..base("study2", format!("horizon {h}, interval {dt}"), reference_params(0.01), h, dt)
            })
            .collect(),
        "study3" => [(160.0, 0.8), (200.0, 0.1)]
            .iter()
            .map(|&(h, dt)| {
                let truth = ModelParams::new(1.0, 0.1, 1.0, 0.01).expect("valid constants");
                base("study3", format!("horizon {h}, interval {dt}"), truth, h, dt)
            })
            .collect(),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset '{name}' (expected one of {})",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}

/// One fit within a replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFit {
    pub method: Method,
    /// `None` when the fit raised an error.
    #[serde(with = "nan_as_null::option")]
    pub estimate: Option<[f64; 4]>,
    pub converged: bool,
    pub objective: Option<f64>,
    pub n_evals: usize,
    pub error: Option<String>,
    #[serde(with = "nan_as_null::option")]
    pub boot_se: Option<[f64; 4]>,
    #[serde(with = "nan_as_null::option_pairs")]
    pub boot_ci: Option<[(f64, f64); 4]>,
    pub boot_failed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    /// Increments that are exactly zero in every coordinate after rounding.
    pub zero_increments: usize,
    pub fits: Vec<MethodFit>,
}

/// Per-parameter summary of one method across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_fits: usize,
    pub n_converged: usize,
    pub convergence_pct: f64,
    /// Mean and standard deviation over every estimate, converged or not.
    #[serde(with = "nan_as_null")]
    pub mean_all: [f64; 4],
    #[serde(with = "nan_as_null")]
    pub sd_all: [f64; 4],
    /// Mean (EST) and standard deviation (ESE) over converged estimates.
    #[serde(with = "nan_as_null")]
    pub mean: [f64; 4],
    #[serde(with = "nan_as_null")]
    pub sd: [f64; 4],
    #[serde(with = "nan_as_null")]
    pub q10: [f64; 4],
    #[serde(with = "nan_as_null")]
    pub q90: [f64; 4],
    /// Average bootstrap standard error (NaN without a bootstrap).
    #[serde(with = "nan_as_null")]
    pub ase: [f64; 4],
    /// Share of replicates whose interval `estimate +- 1.96 se` covers the
    /// truth.
    #[serde(with = "nan_as_null")]
    pub coverage_wald: [f64; 4],
    /// Share whose bootstrap percentile interval covers the truth.
    #[serde(with = "nan_as_null")]
    pub coverage_percentile: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub spec: StudySpec,
    pub summaries: Vec<MethodSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

fn bootstrap_seed(replicate_seed: u64, method: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed ^ 0x5EED_B007_5EED_B007);
    rng.random::<u64>().wrapping_add((method as u64) << 32)
}

fn run_replicate(spec: &StudySpec, times: &[f64], index: usize) -> ReplicateRecord {
    let seed = replicate_seed(spec.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = simulate_mrme(&spec.truth, times, spec.dim, InitialState::Stationary, &mut rng)
        .expect("validated grid");
    let track = match spec.rounding {
        Some(g) => round_track(&sim.track, g).expect("validated grid"),
        None => sim.track,
    };
    let zero_increments = (1..track.len()).filter(|&k| track.increment(k).iter().all(|&x| x == 0.0)).count();
    let fits = spec
        .methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let truth = match method {
                Method::NoiseFree => spec.truth.with_sigma_eps(0.0).expect("valid"),
                _ => spec.truth,
            };
            let init = match spec.start {
                StartPoint::Truth => Some(truth),
                StartPoint::Heuristic => None,
            };
            let opts = FitOptions { method, init, max_iters: spec.max_iters, ..Default::default() };
            let mut out = MethodFit {
                method,
                estimate: None,
                converged: false,
                objective: None,
                n_evals: 0,
                error: None,
                boot_se: None,
                boot_ci: None,
                boot_failed: None,
            };
            match fit(&track, &opts) {
                Ok(r) => {
                    out.estimate = Some(r.estimate.to_array());
                    out.converged = r.converged;
                    out.objective = Some(r.objective);
                    out.n_evals = r.n_evals;
                    if spec.bootstrap >= 2 && r.converged {
                        match bootstrap(times, spec.dim, &r.estimate, spec.bootstrap, &opts, bootstrap_seed(seed, mi)) {
                            Ok(b) => {
                                out.boot_se = Some(b.se);
                                out.boot_ci = Some(b.ci);
                                out.boot_failed = Some(b.n_failed);
                            }
                            Err(e) => out.error = Some(format!("bootstrap: {e}")),
                        }
                    }
                }
                Err(e) => out.error = Some(e.to_string()),
            }
            out
        })
        .collect();
    ReplicateRecord { index, seed, zero_increments, fits }
}

fn summarize(spec: &StudySpec, records: &[ReplicateRecord], mi: usize) -> MethodSummary {
    let method = spec.methods[mi];
    let fits: Vec<&MethodFit> = records.iter().map(|r| &r.fits[mi]).collect();
    let truth = match method {
        Method::NoiseFree => spec.truth.with_sigma_eps(0.0).expect("valid").to_array(),
        _ => spec.truth.to_array(),
    };
    let all: Vec<[f64; 4]> = fits.iter().filter_map(|f| f.estimate).collect();
    let conv: Vec<&MethodFit> = fits.iter().copied().filter(|f| f.converged).collect();
    let conv_est: Vec<[f64; 4]> = conv.iter().filter_map(|f| f.estimate).collect();
    let col = |rows: &[[f64; 4]], i: usize| rows.iter().map(|r| r[i]).collect::<Vec<_>>();
    let stat = |rows: &[[f64; 4]], f: &dyn Fn(&[f64]) -> f64| std::array::from_fn(|i| f(&col(rows, i)));
    let mean = |xs: &[f64]| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let sd = |xs: &[f64]| Summary::of(xs).map_or(f64::NAN, |s| s.sd);

    let booted: Vec<&&MethodFit> = conv.iter().filter(|f| f.boot_se.is_some()).collect();
    let mut ase = [f64::NAN; 4];
    let mut cov_w = [f64::NAN; 4];
    let mut cov_p = [f64::NAN; 4];
    if !booted.is_empty() {
        let nb = booted.len() as f64;
        for i in 0..4 {
            let ses: Vec<f64> = booted.iter().map(|f| f.boot_se.unwrap()[i]).collect();
            ase[i] = mean(&ses);
            cov_w[i] = booted
                .iter()
                .filter(|f| {
                    let (est, se) = (f.estimate.unwrap()[i], f.boot_se.unwrap()[i]);
                    (est - truth[i]).abs() <= 1.96 * se
                })
                .count() as f64
                / nb;
            cov_p[i] = booted
                .iter()
                .filter(|f| {
                    let (lo, hi) = f.boot_ci.unwrap()[i];
                    lo <= truth[i] && truth[i] <= hi
                })
                .count() as f64
                / nb;
        }
    }
    MethodSummary {
        method,
        n_fits: fits.len(),
        n_converged: conv.len(),
        convergence_pct: 100.0 * conv.len() as f64 / fits.len() as f64,
        mean_all: stat(&all, &mean),
        sd_all: stat(&all, &sd),
        mean: stat(&conv_est, &mean),
        sd: stat(&conv_est, &sd),
        q10: stat(&conv_est, &|xs| crate::estimation::quantile(xs, 0.1)),
        q90: stat(&conv_est, &|xs| crate::estimation::quantile(xs, 0.9)),
        ase,
        coverage_wald: cov_w,
        coverage_percentile: cov_p,
    }
}

/// Run every replicate (in parallel on the current rayon pool) and
/// summarize. Replicate `k` is seeded with `seed + k` and results are
/// gathered in replicate order, so the report does not depend on the number
/// of threads. Failed fits are recorded, never fatal.
pub fn run_study(spec: &StudySpec) -> Result<StudyReport> {
    spec.validate()?;
    let times = regular_grid(spec.horizon, spec.interval)?;
    let replicates: Vec<ReplicateRecord> =
        (0..spec.replicates).into_par_iter().map(|k| run_replicate(spec, &times, k)).collect();
    let summaries = (0..spec.methods.len()).map(|mi| summarize(spec, &replicates, mi)).collect();
    Ok(StudyReport { spec: spec.clone(), summaries, replicates })
}

/// Lag-1 and lag-2 autocorrelations of absolute increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcfResult {
    pub acf1: f64,
    pub acf2: f64,
    pub n_increments: usize,
}

pub const ACF_MIN_INCREMENTS: usize = 10_000;

/// Sample autocorrelation of `xs` at `lag`.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    if lag >= n {
        return f64::NAN;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let den: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    let num: f64 = xs.windows(lag + 1).map(|w| (w[0] - m) * (w[lag] - m)).sum();
    num / den
}

/// Simulate one long regularly sampled track and return the autocorrelations
/// of `|increment|`, computed per coordinate and averaged.
pub fn acf<R: Rng + ?Sized>(p: &ModelParams, horizon: f64, interval: f64, dim: usize, rng: &mut R) -> Result<AcfResult> {
    let times = regular_grid(horizon, interval)?;
    let n = times.len() - 1;
    if n < ACF_MIN_INCREMENTS {
        return Err(Error::InvalidArgument(format!(
            "horizon / interval gives {n} increments, at least {ACF_MIN_INCREMENTS} needed"
        )));
    }
    let sim = simulate_mrme(p, &times, dim, InitialState::Stationary, rng)?;
    let (mut a1, mut a2) = (0.0, 0.0);
    for c in 0..dim {
        let abs: Vec<f64> = (1..=n).map(|k| (sim.track.point(k)[c] - sim.track.point(k - 1)[c]).abs()).collect();
        a1 += autocorrelation(&abs, 1) / dim as f64;
        a2 += autocorrelation(&abs, 2) / dim as f64;
    }
    Ok(AcfResult { acf1: a1, acf2: a2, n_increments: n })
}
