use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{symmetric_gram, Features, KernelSpec};

pub const INITIAL_JITTER: f64 = 1e-10;
pub const MAX_JITTER: f64 = 1e-4;
/// Posterior variances below `-VARIANCE_CLAMP` indicate numerical failure.
pub const VARIANCE_CLAMP: f64 = 1e-9;
/// Noise variance used when it is not searched: the square of the default sensor noise 0.05.
pub const DEFAULT_ETA2: f64 = 0.0025;

const STACK_FEATURES: usize = 64;

/// Posterior mean and variance at one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Exact Gaussian-process regressor; immutable once fitted.
#[derive(Debug, Clone)]
pub struct GpModel {
    spec: KernelSpec,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    eta2: f64,
    jitter: f64,
    prior_mean: f64,
    /// Lower Cholesky factor of `K + (eta2 + jitter) I`.
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    features: Features,
    dof: usize,
}

/// Lower Cholesky factor with jitter escalation; returns the factor and the jitter used.
pub(crate) fn factor_with_jitter(k: &DMatrix<f64>, eta2: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = k.nrows();
    let mut jitter = INITIAL_JITTER;
    loop {
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += eta2 + jitter;
        }
        if let Some(c) = a.cholesky() {
            return Ok((c.unpack(), jitter));
        }
        log::debug!("cholesky failed at jitter {jitter:e}; escalating");
        jitter *= 10.0;
        if jitter > MAX_JITTER * (1.0 + 1e-12) {
            return Err(Error::IllConditioned(jitter / 10.0));
        }
    }
}

/// Solves `L L^T z = b` in place.
fn cholesky_solve(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    forward_substitute(l, b.as_mut_slice());
    let n = l.nrows();
    for i in (0..n).rev() {
        let col = l.column(i);
        let mut s = b[i];
        for j in i + 1..n {
            s -= col[j] * b[j];
        }
        b[i] = s / col[i];
    }
}

/// Solves `L v = b` in place, column-oriented so each pass reads contiguous memory.
fn forward_substitute(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = l.nrows();
    for j in 0..n {
        let col = l.column(j);
        let col = col.as_slice();
        let vj = b[j] / col[j];
        b[j] = vj;
        for (bi, lij) in b[j + 1..].iter_mut().zip(&col[j + 1..]) {
            *bi -= lij * vj;
        }
    }
}

impl GpModel {
    /// Fits with prior mean 0.
    pub fn fit(x: &[Vec<f64>], y: &[f64], spec: &KernelSpec, eta2: f64) -> Result<Self> {
        GpModel::fit_with_prior_mean(x, y, spec, eta2, 0.0)
    }

    pub fn fit_with_prior_mean(
        x: &[Vec<f64>],
        y: &[f64],
        spec: &KernelSpec,
        eta2: f64,
        prior_mean: f64,
    ) -> Result<Self> {
        GpModel::validate_inputs(x, y, spec, eta2, prior_mean)?;
        let features = spec.featurize(x)?;
        let k = symmetric_gram(spec, &features);
        let (chol, jitter) = factor_with_jitter(&k, eta2)?;
        let mut alpha = DVector::from_iterator(y.len(), y.iter().map(|v| v - prior_mean));
        cholesky_solve(&chol, &mut alpha);
        Ok(GpModel::assemble(spec, x, y, eta2, jitter, prior_mean, chol, alpha, features))
    }

    fn validate_inputs(x: &[Vec<f64>], y: &[f64], spec: &KernelSpec, eta2: f64, prior_mean: f64) -> Result<()> {
        spec.validate()?;
        if x.is_empty() {
            return Err(Error::InvalidArgument("gp needs at least one training point".into()));
        }
        check_dim(x.len(), y.len())?;
        if !(eta2.is_finite() && eta2 >= 0.0) {
            return Err(Error::InvalidArgument(format!("eta2 = {eta2} must be nonnegative")));
        }
        if !prior_mean.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("labels and prior mean must be finite".into()));
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        spec: &KernelSpec,
        x: &[Vec<f64>],
        y: &[f64],
        eta2: f64,
        jitter: f64,
        prior_mean: f64,
        chol: DMatrix<f64>,
        alpha: DVector<f64>,
        features: Features,
    ) -> Self {
        GpModel {
            spec: spec.clone(),
            dof: x[0].len(),
            x: x.to_vec(),
            y: y.to_vec(),
            eta2,
            jitter,
            prior_mean,
            chol,
            alpha,
            features,
        }
    }

    /// Rebuilds a model from stored parts. The factor is recomputed at the stored
    /// jitter, and the stored weights are kept so means reproduce bit-for-bit.
    pub(crate) fn from_parts(
        spec: &KernelSpec,
        x: &[Vec<f64>],
        y: &[f64],
        eta2: f64,
        jitter: f64,
        prior_mean: f64,
        alpha: Vec<f64>,
    ) -> Result<Self> {
        GpModel::validate_inputs(x, y, spec, eta2, prior_mean)?;
        check_dim(x.len(), alpha.len())?;
        if !(jitter.is_finite() && jitter > 0.0) {
            return Err(Error::Format(format!("invalid jitter {jitter}")));
        }
        let features = spec.featurize(x)?;
        let mut a = symmetric_gram(spec, &features);
        for i in 0..x.len() {
            a[(i, i)] += eta2 + jitter;
        }
        let chol = a.cholesky().ok_or(Error::IllConditioned(jitter))?.unpack();
        let alpha = DVector::from_vec(alpha);
        Ok(GpModel::assemble(spec, x, y, eta2, jitter, prior_mean, chol, alpha, features))
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

    pub fn eta2(&self) -> f64 {
        self.eta2
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn alpha(&self) -> &[f64] {
        self.alpha.as_slice()
    }

    /// Lower-triangular factor of `K + (eta2 + jitter) I`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    fn with_query_features<T>(&self, x: &[f64], f: impl FnOnce(&[f64]) -> T) -> Result<T> {
        check_dim(self.dof, x.len())?;
        let dim = self.features.dim();
        if dim <= STACK_FEATURES {
            let mut buf = [0.0; STACK_FEATURES];
            self.spec.featurize_into(x, &mut buf[..dim])?;
            Ok(f(&buf[..dim]))
        } else {
            let q = self.spec.featurize_one(x)?;
            Ok(f(&q))
        }
    }

    /// `k(x, X) alpha + prior_mean`.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        self.with_query_features(x, |q| {
            let mut s = 0.0;
            for (row, a) in self.features.rows().zip(self.alpha.iter()) {
                s += self.spec.eval_features(q, row) * a;
            }
            s + self.prior_mean
        })
    }

    pub fn variance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict(x)?.variance)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let (mean, raw) = self.with_query_features(x, |q| {
            let mut k: Vec<f64> = self.features.rows().map(|row| self.spec.eval_features(q, row)).collect();
            let mean = k.iter().zip(self.alpha.iter()).map(|(ki, a)| ki * a).sum::<f64>() + self.prior_mean;
            forward_substitute(&self.chol, &mut k);
            let explained: f64 = k.iter().map(|v| v * v).sum();
            (mean, self.spec.prior_variance() - explained)
        })?;
        if raw < -VARIANCE_CLAMP {
            return Err(Error::NegativeVariance(raw));
        }
        Ok(Prediction { mean, variance: raw.max(0.0) })
    }

    /// `-1/2 y^T alpha - sum(log diag L) - N/2 log(2 pi)`, with `y` centered on the prior mean.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let fit: f64 = self.y.iter().zip(self.alpha.iter()).map(|(y, a)| (y - self.prior_mean) * a).sum();
        let log_det: f64 = (0..self.len()).map(|i| self.chol[(i, i)].ln()).sum();
        -0.5 * fit - log_det - 0.5 * self.len() as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    /// `mean - z * sigma`.
    pub fn confidence_lower_bound(&self, x: &[f64], z: f64) -> Result<f64> {
        lower_bound(&self.predict(x)?, z)
    }
}

/// Shared by the hybrid estimator so branch decisions agree bitwise with the bound.
pub(crate) fn lower_bound(p: &Prediction, z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::InvalidArgument(format!("z = {z} must be nonnegative")));
    }
    Ok(p.mean - z * p.std_dev())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::gram_matrix;
    use crate::kinematics::RobotModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn configs(rng: &mut impl Rng, n: usize, dof: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..dof).map(|_| rng.random_range(-PI..PI)).collect()).collect()
    }

    fn smooth_labels(x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|c| c.iter().enumerate().map(|(i, v)| (v * (i + 1) as f64).sin()).sum()).collect()
    }

    #[test]
    fn single_point_closed_forms() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let gp = GpModel::fit(&[vec![0.2, 0.3]], &[1.5], &spec, 0.0).unwrap();
        assert_eq!(gp.jitter(), INITIAL_JITTER);
        assert!((gp.alpha()[0] - 1.5 / (1.0 + INITIAL_JITTER)).abs() < 1e-15);
        assert!((gp.mean(&[0.2, 0.3]).unwrap() - 1.5).abs() < 1e-6);
        assert!(gp.variance(&[0.2, 0.3]).unwrap() < 1e-6);

        let far = [30.0, -30.0];
        assert!(gp.mean(&far).unwrap().abs() < 1e-10);
        assert!((gp.variance(&far).unwrap() - 1.0).abs() < 1e-9);

        let eta2 = 0.3;
        let gp = GpModel::fit(&[vec![0.0]], &[2.0], &spec, eta2).unwrap();
        let k = (-0.25f64).exp();
        assert!((gp.mean(&[0.5]).unwrap() - k * 2.0 / (1.0 + eta2)).abs() < 1e-9);

        let gp = GpModel::fit(&[vec![0.0]], &[0.0], &spec, eta2).unwrap();
        let expect = -0.5 * (1.0 + eta2 + INITIAL_JITTER).ln() - 0.5 * (2.0 * PI).ln();
        assert!((gp.log_marginal_likelihood() - expect).abs() < 1e-12);
    }

    #[test]
    fn duplicate_inputs_with_noise_fit() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let x = vec![vec![0.1, 0.1], vec![0.1, 0.1], vec![1.0, 0.0]];
        let gp = GpModel::fit(&x, &[1.0, 1.2, 0.0], &spec, 0.01).unwrap();
        assert_eq!(gp.jitter(), INITIAL_JITTER);
        // without noise the duplicate rows force jitter escalation
        let gp0 = GpModel::fit(&x, &[1.0, 1.2, 0.0], &spec, 0.0).unwrap();
        assert!(gp0.jitter() >= INITIAL_JITTER);
    }

    #[test]
    fn factorization_and_weights_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let robot = RobotModel::uniform(7, 1.0).unwrap();
        let x = configs(&mut rng, 500, 7);
        let y = smooth_labels(&x);
        for spec in [KernelSpec::fk(1.0, robot.clone()).unwrap(), KernelSpec::gaussian(0.1).unwrap()] {
            let gp = GpModel::fit(&x, &y, &spec, DEFAULT_ETA2).unwrap();
            let mut a = gram_matrix(&spec, &x, &x).unwrap();
            for i in 0..x.len() {
                a[(i, i)] += gp.eta2() + gp.jitter();
            }
            let l = gp.cholesky_factor();
            assert!((l * l.transpose() - &a).amax() < 1e-8);
            let residual = &a * DVector::from_column_slice(gp.alpha()) - DVector::from_column_slice(&y);
            assert!(residual.amax() < 1e-8, "residual {}", residual.amax());
        }
    }

    #[test]
    fn near_interpolation_and_variance_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let robot = RobotModel::uniform(3, 1.0).unwrap();
        let x = configs(&mut rng, 100, 3);
        let y = smooth_labels(&x);
        for spec in [KernelSpec::gaussian(0.5).unwrap(), KernelSpec::fk(1.0, robot.clone()).unwrap()] {
            let gp = GpModel::fit(&x, &y, &spec, 1e-8).unwrap();
            for (xi, yi) in x.iter().zip(&y) {
                let p = gp.predict(xi).unwrap();
                assert!((p.mean - yi).abs() < 1e-4);
                assert!(p.variance <= 1e-4);
            }
            let prior = spec.prior_variance();
            for q in configs(&mut rng, 2000, 3) {
                let v = gp.variance(&q).unwrap();
                assert!((0.0..=prior).contains(&v));
            }
        }
    }

    #[test]
    fn mean_is_linear_in_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = configs(&mut rng, 60, 4);
        let y = smooth_labels(&x);
        let spec = KernelSpec::gaussian(0.4).unwrap();
        let gp = GpModel::fit(&x, &y, &spec, 0.01).unwrap();
        let scaled: Vec<f64> = y.iter().map(|v| -2.5 * v).collect();
        let gp2 = GpModel::fit(&x, &scaled, &spec, 0.01).unwrap();
        for q in configs(&mut rng, 100, 4) {
            assert!((gp2.mean(&q).unwrap() + 2.5 * gp.mean(&q).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn lml_matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = configs(&mut rng, 5, 2);
        let y = smooth_labels(&x);
        let spec = KernelSpec::gaussian(0.7).unwrap();
        let gp = GpModel::fit_with_prior_mean(&x, &y, &spec, 0.05, 0.3).unwrap();
        let mut a = gram_matrix(&spec, &x, &x).unwrap();
        for i in 0..5 {
            a[(i, i)] += 0.05 + gp.jitter();
        }
        let r = DVector::from_iterator(5, y.iter().map(|v| v - 0.3));
        let inv = a.clone().try_inverse().unwrap();
        let expect = -0.5 * (r.transpose() * inv * &r)[(0, 0)] - 0.5 * a.determinant().ln() - 2.5 * (2.0 * PI).ln();
        assert!((gp.log_marginal_likelihood() - expect).abs() < 1e-8);
    }

    #[test]
    fn consistent_labels_score_higher_than_contradictory_ones() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let base = vec![vec![0.0, 0.0]];
        let gp = GpModel::fit(&base, &[1.0], &spec, 0.01).unwrap();
        let q = vec![0.05, 0.0];
        let consistent = gp.mean(&q).unwrap();
        let x2 = vec![base[0].clone(), q.clone()];
        let good = GpModel::fit(&x2, &[1.0, consistent], &spec, 0.01).unwrap();
        let bad = GpModel::fit(&x2, &[1.0, -consistent], &spec, 0.01).unwrap();
        assert!(good.log_marginal_likelihood() > bad.log_marginal_likelihood());
    }

    #[test]
    fn lower_bound_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = configs(&mut rng, 20, 2);
        let y = smooth_labels(&x);
        let gp = GpModel::fit(&x, &y, &KernelSpec::gaussian(1.0).unwrap(), 0.01).unwrap();
        let q = [0.4, -1.9];
        assert_eq!(gp.confidence_lower_bound(&q, 0.0).unwrap(), gp.mean(&q).unwrap());
        let b1 = gp.confidence_lower_bound(&q, 1.0).unwrap();
        let b2 = gp.confidence_lower_bound(&q, 1.64).unwrap();
        assert!(b2 < b1);
        assert!(gp.confidence_lower_bound(&q, -1.0).is_err());
        let zero_var = Prediction { mean: 0.7, variance: 0.0 };
        assert_eq!(lower_bound(&zero_var, 1.64).unwrap(), 0.7);
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        assert!(GpModel::fit(&[], &[], &spec, 0.0).is_err());
        assert!(GpModel::fit(&[vec![0.0]], &[1.0, 2.0], &spec, 0.0).is_err());
        assert!(GpModel::fit(&[vec![0.0]], &[1.0], &spec, -1.0).is_err());
        let gp = GpModel::fit(&[vec![0.0]], &[1.0], &spec, 0.0).unwrap();
        assert!(gp.mean(&[0.0, 1.0]).is_err());
    }
}
