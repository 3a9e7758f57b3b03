use crate::error::{check_dim, Error, Result};
use crate::kernels::{Features, KernelKind, KernelSpec};

/// Kernel weight sums at or below this fall back to the nearest training label.
pub const UNDERFLOW_THRESHOLD: f64 = 1e-300;

/// Nadaraya-Watson regressor with a Gaussian kernel.
#[derive(Debug, Clone)]
pub struct KrModel {
    spec: KernelSpec,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    features: Features,
}

impl KrModel {
    pub fn new(x: &[Vec<f64>], y: &[f64], spec: &KernelSpec) -> Result<Self> {
        spec.validate()?;
        if spec.kind != KernelKind::Gaussian {
            return Err(Error::InvalidKernel("kernel regression supports only the gaussian kernel".into()));
        }
        if x.is_empty() {
            return Err(Error::InvalidArgument("kernel regression needs at least one point".into()));
        }
        check_dim(x.len(), y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("labels must be finite".into()));
        }
        let features = spec.featurize(x)?;
        Ok(KrModel { spec: spec.clone(), x: x.to_vec(), y: y.to_vec(), features })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn train_x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.y
    }

    pub fn dof(&self) -> usize {
        self.features.dim()
    }

    /// Weighted label average; always within `[min y, max y]`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dof(), x.len())?;
        let (mut num, mut den) = (0.0, 0.0);
        for (row, y) in self.features.rows().zip(&self.y) {
            let w = self.spec.eval_features(x, row);
            num += w * y;
            den += w;
        }
        if den > UNDERFLOW_THRESHOLD {
            let (lo, hi) = self.label_range();
            return Ok((num / den).clamp(lo, hi));
        }
        Ok(self.nearest_label(x))
    }

    fn label_range(&self) -> (f64, f64) {
        self.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }

    fn nearest_label(&self, x: &[f64]) -> f64 {
        let sq = |row: &[f64]| row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut best = (f64::INFINITY, self.y[0]);
        for (row, y) in self.features.rows().zip(&self.y) {
            let d = sq(row);
            if d < best.0 {
                best = (d, *y);
            }
        }
        best.1
    }
}

/// Leave-one-out squared error of kernel regression at width `gamma`.
pub(crate) fn loo_error(x: &[Vec<f64>], y: &[f64], gamma: f64) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mut num, mut den) = (0.0, 0.0);
        let (mut nn_d, mut nn_y) = (f64::INFINITY, y[i]);
        for j in (0..n).filter(|&j| j != i) {
            let d: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            let w = (-gamma * d).exp();
            num += w * y[j];
            den += w;
            if d < nn_d {
                nn_d = d;
                nn_y = y[j];
            }
        }
        let pred = if den > UNDERFLOW_THRESHOLD { num / den } else { nn_y };
        total += (pred - y[i]) * (pred - y[i]);
    }
    total / n as f64
}
