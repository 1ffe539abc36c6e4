use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telegraph::RatePair;

/// Model parameters `(lambda1, lambda0, sigma, sigma_eps)`.
///
/// `sigma` is the Brownian volatility while moving (length per square-root
/// time); `sigma_eps` is the standard deviation of the additive location
/// noise. `sigma_eps == 0` is the noise-free moving–resting model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamRecord", into = "ParamRecord")]
pub struct ModelParams {
    pub rates: RatePair,
    pub sigma: f64,
    pub sigma_eps: f64,
}

impl ModelParams {
    pub fn new(lambda1: f64, lambda0: f64, sigma: f64, sigma_eps: f64) -> Result<Self> {
        let rates = RatePair::new(lambda1, lambda0)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if !(sigma_eps >= 0.0 && sigma_eps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_eps must be nonnegative, got {sigma_eps}"
            )));
        }
        Ok(ModelParams { rates, sigma, sigma_eps })
    }

    pub fn lambda1(&self) -> f64 {
        self.rates.lambda1()
    }

    pub fn lambda0(&self) -> f64 {
        self.rates.lambda0()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.lambda1(), self.lambda0(), self.sigma, self.sigma_eps]
    }

    pub fn from_array(v: [f64; 4]) -> Result<Self> {
        ModelParams::new(v[0], v[1], v[2], v[3])
    }

    pub fn with_sigma_eps(&self, sigma_eps: f64) -> Result<Self> {
        ModelParams::new(self.lambda1(), self.lambda0(), self.sigma, sigma_eps)
    }
}

/// Flat, unvalidated form used for (de)serialization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRecord {
    lambda1: f64,
    lambda0: f64,
    sigma: f64,
    #[serde(default)]
    sigma_eps: f64,
}

impl TryFrom<ParamRecord> for ModelParams {
    type Error = Error;

    fn try_from(r: ParamRecord) -> Result<Self> {
        ModelParams::new(r.lambda1, r.lambda0, r.sigma, r.sigma_eps)
    }
}

impl From<ModelParams> for ParamRecord {
    fn from(p: ModelParams) -> Self {
        ParamRecord { lambda1: p.lambda1(), lambda0: p.lambda0(), sigma: p.sigma, sigma_eps: p.sigma_eps }
    }
}

pub const PARAM_NAMES: [&str; 4] = ["lambda1", "lambda0", "sigma", "sigma_eps"];

/// Serialize non-finite floats in fixed-size arrays as `null`, which JSON
/// cannot otherwise represent, and read `null` back as NaN.
pub mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    fn out(x: f64) -> Option<f64> {
        x.is_finite().then_some(x)
    }

    pub fn serialize<S: Serializer>(v: &[f64; 4], s: S) -> Result<S::Ok, S::Error> {
        v.map(out).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 4], D::Error> {
        Ok(<[Option<f64>; 4]>::deserialize(d)?.map(|x| x.unwrap_or(f64::NAN)))
    }

    pub mod pairs {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[(f64, f64); 4], s: S) -> Result<S::Ok, S::Error> {
            v.map(|(a, b)| (out(a), out(b))).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[(f64, f64); 4], D::Error> {
            Ok(<[(Option<f64>, Option<f64>); 4]>::deserialize(d)?
                .map(|(a, b)| (a.unwrap_or(f64::NAN), b.unwrap_or(f64::NAN))))
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<[f64; 4]>, s: S) -> Result<S::Ok, S::Error> {
            v.map(|a| a.map(out)).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[f64; 4]>, D::Error> {
            Ok(Option::<[Option<f64>; 4]>::deserialize(d)?.map(|a| a.map(|x| x.unwrap_or(f64::NAN))))
        }
    }

    pub mod option_pairs {
        use super::*;

        #[allow(clippy::type_complexity)]
        pub fn serialize<S: Serializer>(v: &Option<[(f64, f64); 4]>, s: S) -> Result<S::Ok, S::Error> {
            v.map(|a| a.map(|(x, y)| (out(x), out(y)))).serialize(s)
        }

        #[allow(clippy::type_complexity)]
        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[(f64, f64); 4]>, D::Error> {
            Ok(Option::<[(Option<f64>, Option<f64>); 4]>::deserialize(d)?
                .map(|a| a.map(|(x, y)| (x.unwrap_or(f64::NAN), y.unwrap_or(f64::NAN)))))
        }
    }
}
