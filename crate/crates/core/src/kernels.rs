//! Similarity functions between configurations.
//!
//! Both kernels are evaluated on a per-configuration feature vector: the raw
//! joint angles for the Gaussian kernel, and the interleaved control-point
//! coordinates for the forward-kinematics kernel. Gram assembly featurizes
//! each configuration once, so the FK kernel costs `O(N)` forward-kinematics
//! evaluations rather than `O(N^2)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kinematics::RobotModel;

/// Default FK-kernel width before hyperparameter search.
pub const DEFAULT_FK_GAMMA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
    Fk,
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Fk => "fk",
        })
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "fk" => Ok(KernelKind::Fk),
            other => Err(Error::InvalidKernel(format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpecRaw")]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<RobotModel>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSpecRaw {
    kind: KernelKind,
    gamma: f64,
    #[serde(default)]
    robot: Option<RobotModel>,
}

impl TryFrom<KernelSpecRaw> for KernelSpec {
    type Error = Error;

    fn try_from(raw: KernelSpecRaw) -> Result<Self> {
        let spec = KernelSpec { kind: raw.kind, gamma: raw.gamma, robot: raw.robot };
        spec.validate()?;
        Ok(spec)
    }
}

/// Row-major table of featurized configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    dim: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!("gamma = {gamma} must be positive")))
    }
}

impl KernelSpec {
    pub fn gaussian(gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        Ok(KernelSpec { kind: KernelKind::Gaussian, gamma, robot: None })
    }

    pub fn fk(gamma: f64, robot: RobotModel) -> Result<Self> {
        validate_gamma(gamma)?;
        Ok(KernelSpec { kind: KernelKind::Fk, gamma, robot: Some(robot) })
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        Ok(KernelSpec { gamma, ..self.clone() })
    }

    pub fn validate(&self) -> Result<()> {
        validate_gamma(self.gamma)?;
        if self.kind == KernelKind::Fk && self.robot.is_none() {
            return Err(Error::InvalidKernel("fk kernel requires a robot".into()));
        }
        Ok(())
    }

    fn fk_robot(&self) -> &RobotModel {
        self.robot.as_ref().expect("validated fk kernel carries a robot")
    }

    /// `k(x, x)`: 1 for the Gaussian kernel, the control-point count for FK.
    pub fn prior_variance(&self) -> f64 {
        match self.kind {
            KernelKind::Gaussian => 1.0,
            KernelKind::Fk => self.fk_robot().num_control_points() as f64,
        }
    }

    /// Length of the feature vector for configurations of dimension `dof`.
    pub fn feature_dim(&self, dof: usize) -> usize {
        match self.kind {
            KernelKind::Gaussian => dof,
            KernelKind::Fk => 2 * self.fk_robot().num_control_points(),
        }
    }

    /// Writes the feature vector of `x` into `out`.
    pub fn featurize_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self.kind {
            KernelKind::Gaussian => {
                check_dim(out.len(), x.len())?;
                out.copy_from_slice(x);
                Ok(())
            }
            KernelKind::Fk => self.fk_robot().control_points_flat(x, out),
        }
    }

    pub fn featurize_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.feature_dim(x.len())];
        self.featurize_into(x, &mut out)?;
        Ok(out)
    }

    pub fn featurize(&self, xs: &[Vec<f64>]) -> Result<Features> {
        let dof = match (self.kind, xs.first()) {
            (KernelKind::Fk, _) => self.fk_robot().dof(),
            (KernelKind::Gaussian, Some(x)) => x.len(),
            (KernelKind::Gaussian, None) => 0,
        };
        let dim = self.feature_dim(dof);
        let mut data = vec![0.0; dim * xs.len()];
        for (x, out) in xs.iter().zip(data.chunks_exact_mut(dim.max(1))) {
            check_dim(dof, x.len())?;
            self.featurize_into(x, out)?;
        }
        Ok(Features { dim, data })
    }

    /// Kernel value between two feature vectors of equal length.
    #[inline]
    pub fn eval_features(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Gaussian => gaussian_from_sq(squared_distance(a, b), self.gamma),
            KernelKind::Fk => fk_from_features(a, b, self.gamma),
        }
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        check_dim(x.len(), x2.len())?;
        let a = self.featurize_one(x)?;
        let b = self.featurize_one(x2)?;
        Ok(self.eval_features(&a, &b))
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[inline]
fn gaussian_from_sq(sq: f64, gamma: f64) -> f64 {
    (-gamma * sq).exp()
}

#[inline]
fn fk_from_features(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let half_gamma = 0.5 * gamma;
    a.chunks_exact(2)
        .zip(b.chunks_exact(2))
        .map(|(p, q)| {
            let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
            let t = 1.0 + half_gamma * (dx * dx + dy * dy);
            1.0 / (t * t)
        })
        .sum()
}

/// `exp(-gamma * |x - x2|^2)`.
pub fn gaussian_kernel(x: &[f64], x2: &[f64], gamma: f64) -> Result<f64> {
    check_dim(x.len(), x2.len())?;
    validate_gamma(gamma)?;
    Ok(gaussian_from_sq(squared_distance(x, x2), gamma))
}

/// Sum over control points of `(1 + gamma/2 |FK_m(x) - FK_m(x2)|^2)^-2`.
pub fn fk_kernel(x: &[f64], x2: &[f64], spec: &KernelSpec) -> Result<f64> {
    if spec.kind != KernelKind::Fk {
        return Err(Error::InvalidKernel("fk_kernel called with a non-fk spec".into()));
    }
    spec.validate()?;
    spec.eval(x, x2)
}

/// `K[i][j] = k(xs[i], xs2[j])`.
pub fn gram_matrix(spec: &KernelSpec, xs: &[Vec<f64>], xs2: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let fa = spec.featurize(xs)?;
    let fb = spec.featurize(xs2)?;
    if !fa.is_empty() && !fb.is_empty() {
        check_dim(fa.dim(), fb.dim())?;
    }
    Ok(cross_gram(spec, &fa, &fb))
}

pub(crate) fn cross_gram(spec: &KernelSpec, fa: &Features, fb: &Features) -> DMatrix<f64> {
    DMatrix::from_fn(fa.len(), fb.len(), |i, j| spec.eval_features(fa.row(i), fb.row(j)))
}

/// Symmetric Gram matrix of one feature table; only the lower triangle is evaluated.
pub(crate) fn symmetric_gram(spec: &KernelSpec, f: &Features) -> DMatrix<f64> {
    let n = f.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = spec.eval_features(f.row(i), f.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// `1 / (2 * median^2)` over pairwise Euclidean distances of `xs`.
pub fn median_heuristic_gamma(xs: &[Vec<f64>]) -> Result<f64> {
    let mut d: Vec<f64> = Vec::with_capacity(xs.len() * xs.len().saturating_sub(1) / 2);
    for (i, a) in xs.iter().enumerate() {
        for b in &xs[i + 1..] {
            check_dim(a.len(), b.len())?;
            d.push(squared_distance(a, b).sqrt());
        }
    }
    if d.is_empty() {
        return Err(Error::InvalidArgument("median heuristic needs at least two points".into()));
    }
    let mid = d.len() / 2;
    let (_, median, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;
    if median <= 0.0 {
        return Err(Error::InvalidArgument("median pairwise distance is zero".into()));
    }
    Ok(1.0 / (2.0 * median * median))
}

/// Starting width for `kind` before grid search.
pub fn default_gamma(kind: KernelKind, xs: &[Vec<f64>]) -> Result<f64> {
    match kind {
        KernelKind::Gaussian => median_heuristic_gamma(xs),
        KernelKind::Fk => Ok(DEFAULT_FK_GAMMA),
    }
}
