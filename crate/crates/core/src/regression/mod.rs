//! Gaussian-process and Nadaraya-Watson regression over distance labels.

mod gp;
mod hyper;
mod kr;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use gp::{GpModel, Prediction, DEFAULT_ETA2, INITIAL_JITTER, MAX_JITTER, VARIANCE_CLAMP};
pub(crate) use gp::lower_bound;
pub use hyper::{
    eta2_grid, fit_selected, gamma_grid, select_hyperparameters, select_hyperparameters_with_prior, select_kr_gamma, Eta2Mode,
    GridPoint, PriorMean, Selection, MIN_SEARCH_POINTS,
};
pub use kr::{KrModel, UNDERFLOW_THRESHOLD};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A fitted regressor as stored on disk.
#[derive(Debug, Clone)]
pub enum Model {
    Gp(GpModel),
    Kr(KrModel),
}

/// Serialized model container. Floats are written with round-trip precision.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    model: String,
    kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    env_hash: Option<String>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gp: Option<GpParts>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GpParts {
    eta2: f64,
    jitter: f64,
    prior_mean: f64,
    alpha: Vec<f64>,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Gp(_) => "gp",
            Model::Kr(_) => "kr",
        }
    }

    pub fn spec(&self) -> &KernelSpec {
        match self {
            Model::Gp(m) => m.spec(),
            Model::Kr(m) => m.spec(),
        }
    }

    pub fn dof(&self) -> usize {
        match self {
            Model::Gp(m) => m.dof(),
            Model::Kr(m) => m.dof(),
        }
    }

    /// Point prediction: the posterior mean for a GP.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Gp(m) => m.mean(x),
            Model::Kr(m) => m.predict(x),
        }
    }

    pub fn to_json(&self, env_hash: Option<&str>) -> Result<String> {
        let (x, y, gp) = match self {
            Model::Gp(m) => (
                m.train_x(),
                m.train_y(),
                Some(GpParts { eta2: m.eta2(), jitter: m.jitter(), prior_mean: m.prior_mean(), alpha: m.alpha().to_vec() }),
            ),
            Model::Kr(m) => (m.train_x(), m.train_y(), None),
        };
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.name().to_string(),
            kernel: self.spec().clone(),
            env_hash: env_hash.map(str::to_string),
            x: x.to_vec(),
            y: y.to_vec(),
            gp,
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Parses a model file; returns the model and the environment hash it was trained against.
    pub fn from_json(text: &str) -> Result<(Model, Option<String>)> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format version {}", file.format_version)));
        }
        let model = match (file.model.as_str(), file.gp) {
            ("gp", Some(p)) => {
                Model::Gp(GpModel::from_parts(&file.kernel, &file.x, &file.y, p.eta2, p.jitter, p.prior_mean, p.alpha)?)
            }
            ("kr", None) => Model::Kr(KrModel::new(&file.x, &file.y, &file.kernel)?),
            (kind, _) => return Err(Error::Format(format!("inconsistent model record `{kind}`"))),
        };
        Ok((model, file.env_hash))
    }

    pub fn save(&self, path: &Path, env_hash: Option<&str>) -> Result<()> {
        std::fs::write(path, self.to_json(env_hash)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Model, Option<String>)> {
        Model::from_json(&std::fs::read_to_string(path)?)
    }
}
