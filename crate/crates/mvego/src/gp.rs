//! Gaussian process regression with a constant mean over the mixed space.
//!
//! Predictions follow the usual kriging equations
//!
//! ```text
//! y_hat(w*)  = mu + psi(w*)^T K^-1 (y - 1 mu)
//! s2_hat(w*) = k(w*, w*) - psi(w*)^T K^-1 psi(w*)
//! mu         = (1^T K^-1 y) / (1^T K^-1 1)
//! ```
//!
//! but every `K^-1` is realized through a Cholesky factorization, never an
//! explicit inverse. Responses are standardized internally (zero mean, unit
//! sample std) and predictions un-scaled, so hyperparameter bounds are
//! problem-independent. A small nugget (1e-8 times the mean Gram diagonal)
//! regularizes the factorization and is escalated tenfold, at most four
//! times, when the factorization fails.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::kernel::{KernelError, KernelEval, KernelSpec};
use crate::space::{MixedPoint, MixedSpace};

pub const BASE_NUGGET_FACTOR: f64 = 1e-8;
pub const MAX_NUGGET_ESCALATIONS: u32 = 4;

#[derive(Debug, Error)]
pub enum GpError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{points} points but {responses} responses")]
    LengthMismatch { points: usize, responses: usize },
    #[error(
        "covariance matrix is not positive definite even with nugget {max_nugget:.3e} \
         (base {base_nugget:.3e} escalated {escalations} times); increase the nugget or \
         perturb duplicate samples"
    )]
    Factorization { base_nugget: f64, max_nugget: f64, escalations: u32 },
}

/// Prediction at one point: mean and (clamped, nonnegative) variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Attempts a Cholesky factorization of `k + delta I`, escalating `delta`
/// tenfold from `base_nugget` up to [`MAX_NUGGET_ESCALATIONS`] times.
/// Returns the factorization and the nugget actually used.
pub fn cholesky_with_nugget(k: &DMatrix<f64>, base_nugget: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    for esc in 0..=MAX_NUGGET_ESCALATIONS {
        let nugget = base_nugget * 10f64.powi(esc as i32);
        let mut kk = k.clone();
        for i in 0..k.nrows() {
            kk[(i, i)] += nugget;
        }
        if let Some(chol) = Cholesky::new(kk) {
            return Some((chol, nugget));
        }
    }
    None
}

fn default_base_nugget(k: &DMatrix<f64>) -> f64 {
    let n = k.nrows();
    let mean_diag = k.trace() / n as f64;
    (BASE_NUGGET_FACTOR * mean_diag).max(1e-14)
}

/// Constant GP mean `mu = (1^T K^-1 y) / (1^T K^-1 1)` from a factorized
/// covariance.
pub fn constant_mean(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> f64 {
    let ones = DVector::from_element(y.len(), 1.0);
    let kinv_y = chol.solve(y);
    let kinv_1 = chol.solve(&ones);
    ones.dot(&kinv_y) / ones.dot(&kinv_1)
}

/// Analytic process variance for homoscedastic kernels,
/// `sigma^2 = (y - 1 mu)^T R^-1 (y - 1 mu) / n`, where the factorization is
/// of the correlation matrix R.
pub fn analytic_sigma_sq(chol_r: &Cholesky<f64, Dyn>, y: &DVector<f64>, mu: f64) -> f64 {
    let n = y.len();
    let centered = y - DVector::from_element(n, mu);
    let solved = chol_r.solve(&centered);
    (centered.dot(&solved) / n as f64).max(0.0)
}

/// Gaussian log marginal likelihood with the constant mean of the GP,
/// `-0.5 [(y-1mu)^T K^-1 (y-1mu) + log det K + n log 2pi]`, from a
/// factorized covariance.
pub fn gaussian_log_likelihood(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> f64 {
    let n = y.len();
    let mu = constant_mean(chol, y);
    let centered = y - DVector::from_element(n, mu);
    let solved = chol.solve(&centered);
    let quad = centered.dot(&solved);
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (quad + log_det + n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Floor applied to the analytic variance inside the concentrated
/// likelihood; keeps constant-response datasets finite instead of letting
/// `n log sigma^2` diverge.
const SIGMA_SQ_FLOOR: f64 = 1e-30;

/// Log likelihood of a spec on a dataset. Homoscedastic kinds are scored on
/// the concentrated form (shared variance solved analytically); `HeteroHs`
/// on the full form. Factorization failure after nugget escalation yields
/// `-inf`, which rejects the candidate during training.
pub fn log_likelihood(
    space: &MixedSpace,
    points: &[MixedPoint],
    y: &[f64],
    spec: &KernelSpec,
    base_nugget: Option<f64>,
) -> f64 {
    let n = points.len();
    if n == 0 || y.len() != n {
        return f64::NEG_INFINITY;
    }
    let yv = DVector::from_column_slice(y);
    match spec.sigma_sq() {
        Some(_) => {
            // correlation form: unit process variance
            let corr_spec = spec.clone().with_sigma_sq(1.0);
            let Ok(eval) = KernelEval::new(corr_spec, space.clone()) else {
                return f64::NEG_INFINITY;
            };
            let r = eval.gram(points);
            let base = base_nugget.unwrap_or_else(|| default_base_nugget(&r));
            let Some((chol, _)) = cholesky_with_nugget(&r, base) else {
                return f64::NEG_INFINITY;
            };
            let mu = constant_mean(&chol, &yv);
            let sigma_sq = analytic_sigma_sq(&chol, &yv, mu).max(SIGMA_SQ_FLOOR);
            let log_det_r = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            -0.5 * (n as f64 * sigma_sq.ln()
                + log_det_r
                + n as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln()))
        }
        None => {
            let Ok(eval) = KernelEval::new(spec.clone(), space.clone()) else {
                return f64::NEG_INFINITY;
            };
            let k = eval.gram(points);
            let base = base_nugget.unwrap_or_else(|| default_base_nugget(&k));
            let Some((chol, _)) = cholesky_with_nugget(&k, base) else {
                return f64::NEG_INFINITY;
            };
            gaussian_log_likelihood(&chol, &yv)
        }
    }
}

/// A fitted GP: dataset, kernel, constant mean, and the cached factorization
/// and solve needed for prediction. Immutable once fitted; predictions from
/// multiple threads are safe.
#[derive(Debug, Clone)]
pub struct TrainedGp {
    eval: KernelEval,
    points: Vec<MixedPoint>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    mu_std: f64,
    y_mean: f64,
    y_scale: f64,
    nugget: f64,
    diag_scale: f64,
    degenerate_variance: bool,
}

impl TrainedGp {
    /// Fits the GP on raw responses. The spec's variance parameters are
    /// interpreted in standardized-response units, matching what
    /// [`crate::train::train`] returns.
    pub fn fit(
        space: &MixedSpace,
        points: &[MixedPoint],
        y: &[f64],
        spec: KernelSpec,
    ) -> Result<Self, GpError> {
        if points.is_empty() {
            return Err(GpError::EmptyDataset);
        }
        if points.len() != y.len() {
            return Err(GpError::LengthMismatch { points: points.len(), responses: y.len() });
        }
        let (y_mean, y_scale) = standardization(y);
        let y_std: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
        let degenerate_variance = spec.sigma_sq().is_some_and(|s| s <= 0.0);

        let eval = KernelEval::new(spec, space.clone())?;
        let k = eval.gram(points);
        let base = default_base_nugget(&k);
        let (chol, nugget) =
            cholesky_with_nugget(&k, base).ok_or(GpError::Factorization {
                base_nugget: base,
                max_nugget: base * 10f64.powi(MAX_NUGGET_ESCALATIONS as i32),
                escalations: MAX_NUGGET_ESCALATIONS,
            })?;
        let yv = DVector::from_column_slice(&y_std);
        let mu_std = constant_mean(&chol, &yv);
        let centered = &yv - DVector::from_element(yv.len(), mu_std);
        let alpha = chol.solve(&centered);
        let diag_scale = k.trace() / k.nrows() as f64;
        Ok(Self {
            eval,
            points: points.to_vec(),
            chol,
            alpha,
            mu_std,
            y_mean,
            y_scale,
            nugget,
            diag_scale,
            degenerate_variance,
        })
    }

    /// Predictive mean and variance at `w`, in raw response units.
    pub fn predict(&self, w: &MixedPoint) -> Prediction {
        let psi = self.eval.cross(&self.points, w);
        let mean_std = self.mu_std + psi.dot(&self.alpha);
        let solved = self.chol.solve(&psi);
        let var_std = (self.eval.eval(w, w) - psi.dot(&solved)).max(0.0);
        Prediction {
            mean: self.y_mean + self.y_scale * mean_std,
            variance: self.y_scale * self.y_scale * var_std,
        }
    }

    /// GP constant mean in raw response units.
    pub fn mean(&self) -> f64 {
        self.y_mean + self.y_scale * self.mu_std
    }

    /// Nugget actually used, in standardized-variance units.
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Mean Gram diagonal (standardized units): the process-variance scale
    /// the nugget is relative to.
    pub fn process_scale(&self) -> f64 {
        self.diag_scale
    }

    /// Response standard deviation used for internal standardization.
    pub fn response_scale(&self) -> f64 {
        self.y_scale
    }

    /// True when the fitted homoscedastic variance collapsed to zero
    /// (constant responses): predictions revert to the constant with
    /// variance 0 + nugget.
    pub fn degenerate_variance(&self) -> bool {
        self.degenerate_variance
    }

    pub fn spec(&self) -> &KernelSpec {
        self.eval.spec()
    }

    pub fn training_points(&self) -> &[MixedPoint] {
        &self.points
    }
}

fn standardization(y: &[f64]) -> (f64, f64) {
    let mean = crate::util::mean(y);
    let std = crate::util::sample_std(y);
    if std.is_finite() && std > 1e-300 {
        (mean, std)
    } else {
        (mean, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{ContinuousKernelParams, SpecKind};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cont_space(q: usize) -> MixedSpace {
        MixedSpace::new(vec![(0.0, 1.0); q], vec![]).unwrap()
    }

    fn cs_spec(space: &MixedSpace, theta: f64) -> KernelSpec {
        let d = space.continuous_dim() + space.discrete_dim();
        KernelSpec::Cs { theta: vec![theta; d], p: vec![2.0; d], sigma_sq: 1.0 }
    }

    #[test]
    fn constant_mean_identity_covariance_is_arithmetic_mean() {
        let k = DMatrix::<f64>::identity(4, 4);
        let chol = Cholesky::new(k).unwrap();
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0, 6.0]);
        assert_relative_eq!(constant_mean(&chol, &y), 3.0, max_relative = 1e-14);
    }

    #[test]
    fn constant_mean_of_constant_response_is_that_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // random SPD matrix
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let k = &a * a.transpose() + DMatrix::identity(5, 5);
        let chol = Cholesky::new(k).unwrap();
        let y = DVector::from_element(5, 7.5);
        assert_relative_eq!(constant_mean(&chol, &y), 7.5, max_relative = 1e-12);
    }

    #[test]
    fn constant_mean_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
            let k = &a * a.transpose() + DMatrix::identity(6, 6) * 0.5;
            let y = DVector::from_fn(6, |_, _| rng.random_range(-3.0..3.0));
            let chol = Cholesky::new(k.clone()).unwrap();
            let kinv = k.try_inverse().unwrap();
            let ones = DVector::from_element(6, 1.0);
            let expect = ones.dot(&(&kinv * &y)) / ones.dot(&(&kinv * &ones));
            assert_relative_eq!(constant_mean(&chol, &y), expect, max_relative = 1e-10);
        }
    }

    #[test]
    fn log_likelihood_identity_closed_form() {
        // n = 2, K = I, y = 0: -log(2 pi)
        let chol = Cholesky::new(DMatrix::<f64>::identity(2, 2)).unwrap();
        let y = DVector::from_column_slice(&[0.0, 0.0]);
        assert_relative_eq!(
            gaussian_log_likelihood(&chol, &y),
            -(2.0 * std::f64::consts::PI).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn log_likelihood_invariant_to_row_reordering() {
        let space = cont_space(1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<MixedPoint> =
            (0..8).map(|_| space.sample_uniform(&mut rng)).collect();
        let y: Vec<f64> = pts.iter().map(|p| (4.0 * p.x[0]).sin()).collect();
        let spec = cs_spec(&space, 3.0);
        let ll = log_likelihood(&space, &pts, &y, &spec, None);

        let perm: Vec<usize> = vec![5, 2, 7, 0, 3, 6, 1, 4];
        let pts2: Vec<MixedPoint> = perm.iter().map(|&i| pts[i].clone()).collect();
        let y2: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let ll2 = log_likelihood(&space, &pts2, &y2, &spec, None);
        assert_relative_eq!(ll, ll2, max_relative = 1e-10);
    }

    #[test]
    fn analytic_sigma_sq_identity_is_population_variance() {
        let chol = Cholesky::new(DMatrix::<f64>::identity(4, 4)).unwrap();
        let y = DVector::from_column_slice(&[1.0, 3.0, 5.0, 7.0]);
        let mu = 4.0;
        // (9 + 1 + 1 + 9) / 4 = 5
        assert_relative_eq!(analytic_sigma_sq(&chol, &y, mu), 5.0, max_relative = 1e-14);
    }

    #[test]
    fn analytic_sigma_sq_constant_response_is_zero() {
        let chol = Cholesky::new(DMatrix::<f64>::identity(3, 3)).unwrap();
        let y = DVector::from_element(3, 2.0);
        assert_relative_eq!(analytic_sigma_sq(&chol, &y, 2.0), 0.0);
    }

    #[test]
    fn analytic_sigma_sq_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = DMatrix::from_fn(7, 7, |_, _| rng.random_range(-1.0..1.0));
            let r = &a * a.transpose() + DMatrix::identity(7, 7);
            let y = DVector::from_fn(7, |_, _| rng.random_range(-2.0..2.0));
            let chol = Cholesky::new(r.clone()).unwrap();
            let mu = constant_mean(&chol, &y);
            let rinv = r.try_inverse().unwrap();
            let centered = &y - DVector::from_element(7, mu);
            let expect = centered.dot(&(&rinv * &centered)) / 7.0;
            assert_relative_eq!(analytic_sigma_sq(&chol, &y, mu), expect, max_relative = 1e-10);
        }
    }

    #[test]
    fn predict_interpolates_training_data() {
        let space = cont_space(1);
        let pts: Vec<MixedPoint> = (0..5)
            .map(|i| MixedPoint::continuous(vec![i as f64 / 4.0]))
            .collect();
        let y: Vec<f64> = pts.iter().map(|p| (3.0 * p.x[0]).sin()).collect();
        let range = y.iter().cloned().fold(f64::MIN, f64::max)
            - y.iter().cloned().fold(f64::MAX, f64::min);
        let gp = TrainedGp::fit(&space, &pts, &y, cs_spec(&space, 5.0)).unwrap();
        for (p, &yi) in pts.iter().zip(&y) {
            let pred = gp.predict(p);
            assert!((pred.mean - yi).abs() <= 1e-6 * range, "{} vs {}", pred.mean, yi);
            assert!(pred.variance <= 10.0 * gp.nugget() * gp.response_scale().powi(2));
        }
    }

    #[test]
    fn predict_reverts_to_mean_far_away() {
        let space = MixedSpace::new(vec![(0.0, 1000.0)], vec![]).unwrap();
        let pts = vec![MixedPoint::continuous(vec![0.0])];
        let y = vec![3.0];
        // theta large: correlation dies off quickly in normalized units
        let gp = TrainedGp::fit(&space, &pts, &y, cs_spec(&space, 900.0)).unwrap();
        let far = MixedPoint::continuous(vec![1000.0]);
        let pred = gp.predict(&far);
        assert_relative_eq!(pred.mean, gp.mean(), max_relative = 1e-9);
        // k(w,w) = sigma^2 in raw units (response scale is 1 for n = 1)
        assert_relative_eq!(pred.variance, gp.response_scale().powi(2), max_relative = 1e-6);
    }

    #[test]
    fn predictions_match_dense_inverse_reference() {
        // 1D toy, 5 points from a sine
        let space = cont_space(1);
        let pts: Vec<MixedPoint> = [0.05, 0.3, 0.55, 0.7, 0.95]
            .iter()
            .map(|&x| MixedPoint::continuous(vec![x]))
            .collect();
        let y: Vec<f64> = pts.iter().map(|p| (6.0 * p.x[0]).sin()).collect();
        let spec = cs_spec(&space, 8.0);
        let gp = TrainedGp::fit(&space, &pts, &y, spec.clone()).unwrap();

        // reference: explicit inverse on the same standardized system
        let (ym, ys) = super::standardization(&y);
        let y_std: Vec<f64> = y.iter().map(|v| (v - ym) / ys).collect();
        let eval = KernelEval::new(spec, space.clone()).unwrap();
        let mut k = eval.gram(&pts);
        for i in 0..k.nrows() {
            k[(i, i)] += gp.nugget();
        }
        let kinv = k.try_inverse().unwrap();
        let ones = DVector::from_element(5, 1.0);
        let yv = DVector::from_column_slice(&y_std);
        let mu = ones.dot(&(&kinv * &yv)) / ones.dot(&(&kinv * &ones));
        for xs in [0.0, 0.17, 0.42, 0.68, 1.0] {
            let w = MixedPoint::continuous(vec![xs]);
            let psi = eval.cross(&pts, &w);
            let mean = mu + psi.dot(&(&kinv * (&yv - &ones * mu)));
            let var = eval.eval(&w, &w) - psi.dot(&(&kinv * &psi));
            let pred = gp.predict(&w);
            assert_relative_eq!(pred.mean, ym + ys * mean, max_relative = 1e-8);
            assert_relative_eq!(
                pred.variance,
                (ys * ys * var.max(0.0)).max(0.0),
                epsilon = 1e-10,
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn prediction_invariant_to_training_row_permutation() {
        let space = MixedSpace::new(vec![(0.0, 1.0)], vec![2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts: Vec<MixedPoint> = (0..10).map(|_| space.sample_uniform(&mut rng)).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.x[0] + p.z[0] as f64).collect();
        let spec = cs_spec(&space, 2.0);
        let gp1 = TrainedGp::fit(&space, &pts, &y, spec.clone()).unwrap();

        let perm: Vec<usize> = vec![9, 4, 1, 7, 0, 3, 8, 2, 6, 5];
        let pts2: Vec<MixedPoint> = perm.iter().map(|&i| pts[i].clone()).collect();
        let y2: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let gp2 = TrainedGp::fit(&space, &pts2, &y2, spec).unwrap();

        for _ in 0..20 {
            let w = space.sample_uniform(&mut rng);
            let p1 = gp1.predict(&w);
            let p2 = gp2.predict(&w);
            assert_relative_eq!(p1.mean, p2.mean, max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(p1.variance, p2.variance, max_relative = 1e-6, epsilon = 1e-12);
        }
    }

    #[test]
    fn duplicate_rows_fit_through_nugget_escalation() {
        let space = cont_space(1);
        let pts = vec![
            MixedPoint::continuous(vec![0.5]),
            MixedPoint::continuous(vec![0.5]),
            MixedPoint::continuous(vec![0.9]),
        ];
        let y = vec![1.0, 1.0, 2.0];
        let gp = TrainedGp::fit(&space, &pts, &y, cs_spec(&space, 1.0)).unwrap();
        assert!(gp.nugget() > 0.0);
        let pred = gp.predict(&pts[0]);
        assert!(pred.mean.is_finite());
    }

    #[test]
    fn constant_response_flags_degenerate_variance() {
        let space = cont_space(1);
        let pts: Vec<MixedPoint> =
            (0..4).map(|i| MixedPoint::continuous(vec![i as f64 / 3.0])).collect();
        let y = vec![5.0; 4];
        let spec = cs_spec(&space, 2.0).with_sigma_sq(0.0);
        let gp = TrainedGp::fit(&space, &pts, &y, spec).unwrap();
        assert!(gp.degenerate_variance());
        let pred = gp.predict(&MixedPoint::continuous(vec![0.77]));
        assert_relative_eq!(pred.mean, 5.0, max_relative = 1e-9);
        assert!(pred.variance >= 0.0 && pred.variance <= gp.nugget() * 10.0);
    }

    #[test]
    fn concentrated_likelihood_stationary_in_sigma_sq() {
        // plugging the analytic sigma^2 into the full likelihood makes the
        // derivative with respect to sigma^2 vanish
        let space = MixedSpace::new(vec![(0.0, 1.0)], vec![3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<MixedPoint> = (0..12).map(|_| space.sample_uniform(&mut rng)).collect();
        let y: Vec<f64> =
            pts.iter().map(|p| (2.0 * p.x[0]).cos() + 0.3 * p.z[0] as f64).collect();
        let spec = cs_spec(&space, 4.0);

        let corr = KernelEval::new(spec.clone().with_sigma_sq(1.0), space.clone()).unwrap();
        let r = corr.gram(&pts);
        let (chol_r, nugget) = cholesky_with_nugget(&r, 1e-10).unwrap();
        let yv = DVector::from_column_slice(&y);
        let mu = constant_mean(&chol_r, &yv);
        let sigma_sq = analytic_sigma_sq(&chol_r, &yv, mu);

        let full_ll = |s2: f64| {
            let mut k = &r * s2;
            for i in 0..k.nrows() {
                k[(i, i)] += nugget * s2;
            }
            let chol = Cholesky::new(k).unwrap();
            gaussian_log_likelihood(&chol, &yv)
        };
        let h = 1e-6 * sigma_sq;
        let deriv = (full_ll(sigma_sq + h) - full_ll(sigma_sq - h)) / (2.0 * h);
        let scale = full_ll(sigma_sq).abs().max(1.0);
        assert!(
            (deriv * sigma_sq / scale).abs() < 1e-4,
            "relative derivative {deriv} at sigma^2 {sigma_sq}"
        );
    }
}
