//! Simulation and composite-likelihood inference for a moving–resting
//! Brownian motion observed with Gaussian measurement error.

pub mod composite;
pub mod error;
pub mod estimation;
pub mod kernel;
pub mod mr_density;
pub mod mrme_model;
pub mod optim;
pub mod params;
pub mod quadrature;
pub mod io;
pub mod special;
pub mod study;
pub mod telegraph;
pub mod track;

pub use composite::{
    brute_force_thinned, composite_loglik, marginal_cl, thinned_loglik, two_piece_cl, CLMethod, ForwardState,
    Parity,
};
pub use error::{Error, Result};
pub use kernel::ScaledMatrix;
pub use mr_density::{h_density, mr_loglik, resting_atom};
pub use mrme_model::{g_density, regular_grid, round_track, simulate_mrme, transition_density};
pub use params::{ModelParams, PARAM_NAMES};
pub use telegraph::{
    occupation_density, simulate_states, stationary_dist, tau, InitialState, RatePair, SegmentPath, StateKind,
};
pub use track::{IncrementQuery, LabeledTrack, Track};
pub use estimation::{
    bootstrap, default_init, fit, godambe_variance, objective, BootstrapResult, FitOptions, FitResult, GodambeResult,
    Method,
};
pub use io::{read_track, read_track_from, write_track, write_track_to, TrackFile};
pub use study::{acf, preset, run_study, AcfResult, MethodSummary, StudyReport, StudySpec};
