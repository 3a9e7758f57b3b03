use serde::{Deserialize, Serialize};

use super::gp::{factor_with_jitter, GpModel};
use super::kr::loo_error;
use crate::error::{check_dim, Error, Result};
use crate::kernels::{default_gamma, symmetric_gram, KernelKind, KernelSpec};
use crate::kinematics::RobotModel;

pub const MIN_SEARCH_POINTS: usize = 10;
/// Exponents `k` of the width grid `default * 2^k`.
pub const GAMMA_EXPONENTS: std::ops::RangeInclusive<i32> = -4..=4;
/// Exponents `k` of the noise grid `10^k`.
pub const ETA2_EXPONENTS: std::ops::RangeInclusive<i32> = -6..=0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum Eta2Mode {
    Fixed(f64),
    Search,
}

/// Constant prior mean used during selection and fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "value")]
pub enum PriorMean {
    Zero,
    Constant(f64),
    /// Mean of the training labels.
    LabelMean,
}

impl PriorMean {
    pub fn resolve(self, y: &[f64]) -> f64 {
        match self {
            PriorMean::Zero => 0.0,
            PriorMean::Constant(c) => c,
            PriorMean::LabelMean if y.is_empty() => 0.0,
            PriorMean::LabelMean => y.iter().sum::<f64>() / y.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub gamma: f64,
    pub eta2: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub spec: KernelSpec,
    pub eta2: f64,
    pub prior_mean: f64,
    /// Log marginal likelihood for GP selection, negative LOO error for kernel regression.
    pub score: f64,
    pub grid: Vec<GridPoint>,
}

pub fn gamma_grid(default: f64) -> Vec<f64> {
    GAMMA_EXPONENTS.map(|k| default * 2f64.powi(k)).collect()
}

pub fn eta2_grid() -> Vec<f64> {
    ETA2_EXPONENTS.map(|k| 10f64.powi(k)).collect()
}

fn check_training(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    check_dim(x.len(), y.len())?;
    if x.len() < MIN_SEARCH_POINTS {
        return Err(Error::InvalidArgument(format!(
            "hyperparameter search needs at least {MIN_SEARCH_POINTS} points, got {}",
            x.len()
        )));
    }
    Ok(())
}

fn base_spec(kind: KernelKind, gamma: f64, robot: Option<&RobotModel>) -> Result<KernelSpec> {
    match kind {
        KernelKind::Gaussian => KernelSpec::gaussian(gamma),
        KernelKind::Fk => {
            let robot = robot.ok_or_else(|| Error::InvalidKernel("fk kernel requires a robot".into()))?;
            KernelSpec::fk(gamma, robot.clone())
        }
    }
}

/// Grid search maximizing the GP log marginal likelihood.
///
/// Grid points are visited in increasing `gamma` (then increasing `eta2`) and only a
/// strictly better score replaces the incumbent, so ties go to the smaller width.
/// Grid points whose Gram matrix cannot be factored are skipped.
pub fn select_hyperparameters(
    x: &[Vec<f64>],
    y: &[f64],
    kind: KernelKind,
    robot: Option<&RobotModel>,
    eta2_mode: Eta2Mode,
) -> Result<Selection> {
    select_hyperparameters_with_prior(x, y, kind, robot, eta2_mode, PriorMean::Zero)
}

/// [`select_hyperparameters`] with the likelihood evaluated on `y - prior_mean`.
pub fn select_hyperparameters_with_prior(
    x: &[Vec<f64>],
    y: &[f64],
    kind: KernelKind,
    robot: Option<&RobotModel>,
    eta2_mode: Eta2Mode,
    prior: PriorMean,
) -> Result<Selection> {
    check_training(x, y)?;
    let prior_mean = prior.resolve(y);
    let centered: Vec<f64> = y.iter().map(|v| v - prior_mean).collect();
    let etas = match eta2_mode {
        Eta2Mode::Fixed(v) => vec![v],
        Eta2Mode::Search => eta2_grid(),
    };
    let gammas = gamma_grid(default_gamma(kind, x)?);
    let mut grid = Vec::with_capacity(gammas.len() * etas.len());
    for &gamma in &gammas {
        let spec = base_spec(kind, gamma, robot)?;
        let features = spec.featurize(x)?;
        let k = symmetric_gram(&spec, &features);
        for &eta2 in &etas {
            match lml_from_gram(&k, &centered, eta2) {
                Ok(score) => grid.push(GridPoint { gamma, eta2, score }),
                Err(Error::IllConditioned(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    let point = best_point(&grid).ok_or(Error::IllConditioned(super::gp::MAX_JITTER))?;
    let spec = base_spec(kind, point.gamma, robot)?;
    log::info!("selected {} gamma = {:.4e}, eta2 = {:.1e} (lml {:.3})", kind, point.gamma, point.eta2, point.score);
    Ok(Selection { spec, eta2: point.eta2, prior_mean, score: point.score, grid })
}

/// First grid point with the maximal score; grids are ordered by increasing width.
fn best_point(grid: &[GridPoint]) -> Option<GridPoint> {
    let mut best: Option<GridPoint> = None;
    for p in grid {
        if best.is_none_or(|b| p.score > b.score) {
            best = Some(*p);
        }
    }
    best
}

/// Log marginal likelihood for a precomputed Gram matrix and centered labels.
fn lml_from_gram(k: &nalgebra::DMatrix<f64>, y: &[f64], eta2: f64) -> Result<f64> {
    let (l, _) = factor_with_jitter(k, eta2)?;
    let n = y.len();
    let mut v = y.to_vec();
    // v = L^-1 y, so y^T (LL^T)^-1 y = |v|^2
    for j in 0..n {
        let vj = v[j] / l[(j, j)];
        v[j] = vj;
        for i in j + 1..n {
            v[i] -= l[(i, j)] * vj;
        }
    }
    let fit: f64 = v.iter().map(|a| a * a).sum();
    let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
    Ok(-0.5 * fit - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Fits the GP at the selected hyperparameters.
pub fn fit_selected(x: &[Vec<f64>], y: &[f64], selection: &Selection) -> Result<GpModel> {
    GpModel::fit_with_prior_mean(x, y, &selection.spec, selection.eta2, selection.prior_mean)
}

/// Kernel-regression width chosen by leave-one-out error over the same width grid.
pub fn select_kr_gamma(x: &[Vec<f64>], y: &[f64]) -> Result<Selection> {
    check_training(x, y)?;
    let gammas = gamma_grid(default_gamma(KernelKind::Gaussian, x)?);
    let grid: Vec<GridPoint> =
        gammas.iter().map(|&gamma| GridPoint { gamma, eta2: 0.0, score: -loo_error(x, y, gamma) }).collect();
    let best = best_point(&grid).expect("grid is nonempty");
    Ok(Selection { spec: KernelSpec::gaussian(best.gamma)?, eta2: 0.0, prior_mean: 0.0, score: best.score, grid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram_matrix, median_heuristic_gamma};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn points(rng: &mut impl Rng, n: usize, dof: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..dof).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
    }

    #[test]
    fn recovers_generating_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = points(&mut rng, 250, 2);
        let default = median_heuristic_gamma(&x).unwrap();
        let grid = gamma_grid(default);
        let true_gamma = grid[6];
        let spec = KernelSpec::gaussian(true_gamma).unwrap();
        let mut k = gram_matrix(&spec, &x, &x).unwrap();
        for i in 0..x.len() {
            k[(i, i)] += 1e-8;
        }
        let l = k.cholesky().unwrap().unpack();
        let z = DVector::from_iterator(x.len(), (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let y: Vec<f64> = (l * z).iter().map(|v| v + 0.01 * rng.sample::<f64, _>(StandardNormal)).collect();

        let sel = select_hyperparameters(&x, &y, KernelKind::Gaussian, None, Eta2Mode::Fixed(1e-4)).unwrap();
        let idx = grid.iter().position(|g| *g == sel.spec.gamma).unwrap();
        assert!(idx.abs_diff(6) <= 1, "selected grid index {idx}");
        assert_eq!(sel.grid.len(), 9);
    }

    #[test]
    fn fixed_noise_is_returned_verbatim() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = points(&mut rng, 30, 3);
        let y: Vec<f64> = x.iter().map(|c| c[0].cos()).collect();
        let robot = RobotModel::uniform(3, 1.0).unwrap();
        let sel = select_hyperparameters(&x, &y, KernelKind::Fk, Some(&robot), Eta2Mode::Fixed(0.0025)).unwrap();
        assert_eq!(sel.eta2, 0.0025);
        assert_eq!(sel.spec.kind, KernelKind::Fk);

        let sel = select_hyperparameters(&x, &y, KernelKind::Gaussian, None, Eta2Mode::Search).unwrap();
        assert_eq!(sel.grid.len(), 63);
        let gp = fit_selected(&x, &y, &sel).unwrap();
        assert!((gp.log_marginal_likelihood() - sel.score).abs() < 1e-8);
    }

    #[test]
    fn ties_prefer_smaller_width() {
        let grid: Vec<GridPoint> = [(0.5, -3.0), (1.0, -1.0), (2.0, -1.0), (4.0, -2.0)]
            .iter()
            .map(|&(gamma, score)| GridPoint { gamma, eta2: 0.01, score })
            .collect();
        assert_eq!(best_point(&grid).unwrap().gamma, 1.0);
        assert!(best_point(&[]).is_none());
    }

    #[test]
    fn requires_ten_points() {
        let x = vec![vec![0.0]; 9];
        assert!(select_hyperparameters(&x, &[0.0; 9], KernelKind::Gaussian, None, Eta2Mode::Search).is_err());
        assert!(select_kr_gamma(&x, &[0.0; 9]).is_err());
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        assert!(select_hyperparameters(&x, &[0.0; 10], KernelKind::Fk, None, Eta2Mode::Search).is_err());
    }

    #[test]
    fn label_mean_prior_is_a_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = points(&mut rng, 60, 2);
        let y: Vec<f64> = x.iter().map(|p| 3.0 + p[0].sin()).collect();
        let sel = select_hyperparameters_with_prior(&x, &y, KernelKind::Gaussian, None, Eta2Mode::Search, PriorMean::LabelMean)
            .unwrap();
        let ybar = y.iter().sum::<f64>() / 60.0;
        assert!((sel.prior_mean - ybar).abs() < 1e-12);
        let centered: Vec<f64> = y.iter().map(|v| v - ybar).collect();
        let reference = select_hyperparameters(&x, &centered, KernelKind::Gaussian, None, Eta2Mode::Search).unwrap();
        assert_eq!((sel.spec.gamma, sel.eta2, sel.score), (reference.spec.gamma, reference.eta2, reference.score));
        let gp = fit_selected(&x, &y, &sel).unwrap();
        assert!((gp.mean(&[1e6, 1e6]).unwrap() - ybar).abs() < 1e-10);
        assert_eq!(PriorMean::Constant(2.5).resolve(&y), 2.5);
    }
}
