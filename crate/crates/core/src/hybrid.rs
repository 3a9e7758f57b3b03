//! Confidence-gated combination of the GP mean with averaged sensor readings.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{noisy_distance, Environment};
use crate::regression::{lower_bound, GpModel, Prediction};

/// One-sided 95% quantile of the standard normal.
pub const DEFAULT_Z: f64 = 1.64;
pub const DEFAULT_N_SENSOR: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Gp,
    Sensor,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Gp => "gp",
            Branch::Sensor => "sensor",
        })
    }
}

/// Noisy distance measurements drawn from a caller-owned stream.
#[derive(Debug, Clone)]
pub struct Sensor<'a> {
    env: &'a Environment,
    eta: f64,
    rng: ChaCha8Rng,
}

impl<'a> Sensor<'a> {
    pub fn new(env: &'a Environment, eta: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidArgument(format!("eta = {eta} must be nonnegative")));
        }
        Ok(Sensor { env, eta, rng })
    }

    pub fn env(&self) -> &'a Environment {
        self.env
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn measure(&mut self, x: &[f64]) -> Result<f64> {
        noisy_distance(self.env, x, self.eta, &mut self.rng)
    }

    /// Mean of `n` consecutive measurements.
    pub fn measure_mean(&mut self, x: &[f64], n: usize) -> Result<f64> {
        let mut s = 0.0;
        for _ in 0..n {
            s += self.measure(x)?;
        }
        Ok(s / n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridOutput {
    pub value: f64,
    pub branch: Branch,
    /// GP posterior at the query, computed on either branch.
    pub prediction: Prediction,
}

#[derive(Debug, Clone)]
pub struct HybridEstimator<'a> {
    gp: &'a GpModel,
    sensor: Sensor<'a>,
    z: f64,
    n_sensor: usize,
    threshold: f64,
}

impl<'a> HybridEstimator<'a> {
    pub fn new(gp: &'a GpModel, sensor: Sensor<'a>, z: f64, n_sensor: usize, threshold: f64) -> Result<Self> {
        if !(z.is_finite() && z >= 0.0) {
            return Err(Error::InvalidArgument(format!("z = {z} must be nonnegative")));
        }
        if n_sensor == 0 {
            return Err(Error::InvalidArgument("n_sensor must be at least 1".into()));
        }
        if threshold.is_nan() {
            return Err(Error::InvalidArgument("threshold is NaN".into()));
        }
        Ok(HybridEstimator { gp, sensor, z, n_sensor, threshold })
    }

    /// `z = 1.64`, five sensor draws, threshold 0.
    pub fn with_defaults(gp: &'a GpModel, sensor: Sensor<'a>) -> Self {
        HybridEstimator { gp, sensor, z: DEFAULT_Z, n_sensor: DEFAULT_N_SENSOR, threshold: 0.0 }
    }

    pub fn gp(&self) -> &'a GpModel {
        self.gp
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn n_sensor(&self) -> usize {
        self.n_sensor
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// GP mean when `mean - z sigma >= threshold`, else the mean of `n_sensor` sensor draws.
    pub fn predict(&mut self, x: &[f64]) -> Result<HybridOutput> {
        let prediction = self.gp.predict(x)?;
        if lower_bound(&prediction, self.z)? >= self.threshold {
            return Ok(HybridOutput { value: prediction.mean, branch: Branch::Gp, prediction });
        }
        let value = self.sensor.measure_mean(x, self.n_sensor)?;
        Ok(HybridOutput { value, branch: Branch::Sensor, prediction })
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-t / std::f64::consts::SQRT_2)
}

/// `P(d > threshold)` under the GP posterior at `x`.
pub fn confidence_level(gp: &GpModel, x: &[f64], threshold: f64) -> Result<f64> {
    Ok(confidence_from_prediction(&gp.predict(x)?, threshold))
}

pub fn confidence_from_prediction(p: &Prediction, threshold: f64) -> f64 {
    let sigma = p.std_dev();
    if sigma == 0.0 {
        return match p.mean.partial_cmp(&threshold) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        };
    }
    std_normal_cdf((p.mean - threshold) / sigma)
}
