use serde::{Deserialize, Serialize};

use super::rrt::clearance;
use crate::error::{Error, Result};
use crate::geometry::Environment;
use crate::hybrid::{Branch, HybridEstimator, Sensor};
use crate::regression::{GpModel, KrModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Oracle,
    NoisyOracle,
    Kr,
    GpGaussian,
    GpFk,
    Hybrid,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Oracle,
        EstimatorKind::NoisyOracle,
        EstimatorKind::Kr,
        EstimatorKind::GpGaussian,
        EstimatorKind::GpFk,
        EstimatorKind::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::NoisyOracle => "noisy-oracle",
            EstimatorKind::Kr => "kr",
            EstimatorKind::GpGaussian => "gp-gaussian",
            EstimatorKind::GpFk => "gp-fk",
            EstimatorKind::Hybrid => "hybrid",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, EstimatorKind::Kr | EstimatorKind::GpGaussian | EstimatorKind::GpFk | EstimatorKind::Hybrid)
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator `{s}`")))
    }
}

/// Distance source queried by the optimizer.
#[derive(Debug, Clone)]
pub enum Estimator<'a> {
    Oracle(&'a Environment),
    /// Fresh sensor noise on every evaluation.
    NoisyOracle(Sensor<'a>),
    Kr(&'a KrModel),
    Gp { kind: EstimatorKind, model: &'a GpModel },
    Hybrid { inner: HybridEstimator<'a>, sensor_calls: usize },
}

impl<'a> Estimator<'a> {
    pub fn oracle(env: &'a Environment) -> Self {
        Estimator::Oracle(env)
    }

    pub fn noisy(sensor: Sensor<'a>) -> Self {
        Estimator::NoisyOracle(sensor)
    }

    pub fn kr(model: &'a KrModel) -> Self {
        Estimator::Kr(model)
    }

    /// A GP estimator labeled by its kernel.
    pub fn gp(model: &'a GpModel) -> Self {
        let kind = match model.spec().kind {
            crate::kernels::KernelKind::Gaussian => EstimatorKind::GpGaussian,
            crate::kernels::KernelKind::Fk => EstimatorKind::GpFk,
        };
        Estimator::Gp { kind, model }
    }

    pub fn hybrid(inner: HybridEstimator<'a>) -> Self {
        Estimator::Hybrid { inner, sensor_calls: 0 }
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::Oracle(_) => EstimatorKind::Oracle,
            Estimator::NoisyOracle(_) => EstimatorKind::NoisyOracle,
            Estimator::Kr(_) => EstimatorKind::Kr,
            Estimator::Gp { kind, .. } => *kind,
            Estimator::Hybrid { .. } => EstimatorKind::Hybrid,
        }
    }

    pub fn distance(&mut self, x: &[f64]) -> Result<f64> {
        match self {
            Estimator::Oracle(env) => clearance(env, x),
            Estimator::NoisyOracle(sensor) => {
                if sensor.env().obstacles.is_empty() {
                    return clearance(sensor.env(), x);
                }
                sensor.measure(x)
            }
            Estimator::Kr(m) => m.predict(x),
            Estimator::Gp { model, .. } => model.mean(x),
            Estimator::Hybrid { inner, sensor_calls } => {
                let out = inner.predict(x)?;
                if out.branch == Branch::Sensor {
                    *sensor_calls += 1;
                }
                Ok(out.value)
            }
        }
    }

    /// Branch taken at `x` without drawing sensor noise; `None` for non-hybrid estimators.
    pub fn branch_at(&self, x: &[f64]) -> Result<Option<Branch>> {
        match self {
            Estimator::Hybrid { inner, .. } => {
                let p = inner.gp().predict(x)?;
                let bound = crate::regression::lower_bound(&p, inner.z())?;
                Ok(Some(if bound >= inner.threshold() { Branch::Gp } else { Branch::Sensor }))
            }
            _ => Ok(None),
        }
    }

    /// Number of sensor-branch evaluations made so far by a hybrid estimator.
    pub fn sensor_calls(&self) -> Option<usize> {
        match self {
            Estimator::Hybrid { sensor_calls, .. } => Some(*sensor_calls),
            _ => None,
        }
    }
}
