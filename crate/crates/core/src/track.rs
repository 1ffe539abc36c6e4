use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telegraph::StateKind;

/// Observation times `t_0 < t_1 < ... < t_n` with a `dim`-dimensional
/// location at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    times: Vec<f64>,
    /// Row-major, `times.len() * dim` values.
    locations: Vec<f64>,
    dim: usize,
}

impl Track {
    pub fn new(times: Vec<f64>, locations: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidTrack("dimension must be at least 1".into()));
        }
        if locations.len() != times.len() * dim {
            return Err(Error::InvalidTrack(format!(
                "{} coordinates for {} times in dimension {dim}",
                locations.len(),
                times.len()
            )));
        }
        if let Some(k) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidTrack(format!("time {k} is not finite")));
        }
        if let Some(k) = locations.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidTrack(format!(
                "coordinate {} of point {} is not finite",
                k % dim,
                k / dim
            )));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrack(format!(
                "times must be strictly increasing: t[{}]={} is not after t[{}]={}",
                k + 1,
                times[k + 1],
                k,
                times[k]
            )));
        }
        Ok(Track { times, locations, dim })
    }

    /// Build from per-point coordinate vectors.
    pub fn from_points(times: Vec<f64>, points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(1, Vec::len);
        if let Some(k) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::InvalidTrack(format!(
                "point {k} has {} coordinates, expected {dim}",
                points[k].len()
            )));
        }
        Track::new(times, points.concat(), dim)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.locations[k * self.dim..(k + 1) * self.dim]
    }

    /// Displacement `Z(t_k) - Z(t_{k-1})` for `k >= 1`.
    pub fn increment(&self, k: usize) -> Vec<f64> {
        self.point(k).iter().zip(self.point(k - 1)).map(|(a, b)| a - b).collect()
    }

    pub fn gap(&self, k: usize) -> f64 {
        self.times[k] - self.times[k - 1]
    }

    /// A copy with every location shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Track {
        assert_eq!(offset.len(), self.dim);
        let locations = self
            .locations
            .chunks(self.dim)
            .flat_map(|p| p.iter().zip(offset).map(|(x, o)| x + o))
            .collect();
        Track { times: self.times.clone(), locations, dim: self.dim }
    }

    /// A copy with every time shifted by `shift`.
    pub fn time_shifted(&self, shift: f64) -> Track {
        Track {
            times: self.times.iter().map(|t| t + shift).collect(),
            locations: self.locations.clone(),
            dim: self.dim,
        }
    }

    /// The first `n` observations.
    pub fn truncated(&self, n: usize) -> Track {
        let n = n.min(self.len());
        Track {
            times: self.times[..n].to_vec(),
            locations: self.locations[..n * self.dim].to_vec(),
            dim: self.dim,
        }
    }

    pub(crate) fn map_locations(&self, f: impl Fn(f64) -> f64) -> Track {
        Track {
            times: self.times.clone(),
            locations: self.locations.iter().map(|&x| f(x)).collect(),
            dim: self.dim,
        }
    }

    pub(crate) fn require_len(&self, needed: usize) -> Result<()> {
        if self.len() < needed {
            Err(Error::TrackTooShort { needed, got: self.len() })
        } else {
            Ok(())
        }
    }
}

/// A simulated track together with the hidden state at each observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrack {
    pub track: Track,
    pub states: Vec<StateKind>,
    /// The noise-free locations underlying `track`.
    pub exact: Track,
}

/// A displacement `dz` accrued over an elapsed time `dt`.
#[derive(Debug, Clone, Copy)]
pub struct IncrementQuery<'a> {
    pub dz: &'a [f64],
    pub dt: f64,
}

impl<'a> IncrementQuery<'a> {
    pub fn new(dz: &'a [f64], dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("elapsed time must be positive, got {dt}")));
        }
        if dz.is_empty() {
            return Err(Error::InvalidArgument("displacement needs at least one coordinate".into()));
        }
        Ok(IncrementQuery { dz, dt })
    }

    pub fn dim(&self) -> usize {
        self.dz.len()
    }

    pub fn squared_norm(&self) -> f64 {
        self.dz.iter().map(|x| x * x).sum()
    }
}
