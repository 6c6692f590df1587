//! Kernel hyperparameter training: maximizes the log marginal likelihood
//! over a normalized parameter box with CMA-ES.
//!
//! Every spec kind maps to a flat vector in [0, 1]^d through [`ParamCodec`]:
//! length-scales theta travel in log10 space over [-4, 3] (continuous inputs
//! are normalized to the unit box, so the range is problem-independent),
//! exponents p linearly over [1, 2], hypersphere angles linearly over the
//! numerically strict open interval (0, pi), and heteroscedastic radii in
//! log10 space over [-3, 1] relative to the (standardized) response scale.
//!
//! For the homoscedastic kinds the shared process variance is not part of
//! the search: it is solved analytically and injected into the returned
//! spec.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cmaes::{self, CmaOptions};
use crate::gp::{self, cholesky_with_nugget};
use crate::kernel::{
    hyperparameter_count, ContinuousKernelParams, HypersphereParams, KernelEval, KernelSpec,
    SpecKind, ANGLE_MARGIN,
};
use crate::space::{MixedPoint, MixedSpace};

const THETA_LOG10_RANGE: (f64, f64) = (-4.0, 3.0);
const P_RANGE: (f64, f64) = (1.0, 2.0);
const RADIUS_LOG10_RANGE: (f64, f64) = (-3.0, 1.0);
const ANGLE_RANGE: (f64, f64) = (ANGLE_MARGIN, std::f64::consts::PI - ANGLE_MARGIN);

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("every candidate was rejected while training the {0} kernel; the covariance could not be factorized")]
    AllRejected(SpecKind),
}

/// Configuration of the likelihood optimizer.
#[derive(Debug, Clone)]
pub struct TrainerConfig {
    /// CMA-ES population; default 4 + floor(3 ln d).
    pub lambda: Option<usize>,
    /// Likelihood evaluations per hyperparameter dimension.
    pub evals_per_dim: usize,
    /// Initial step size in the normalized box.
    pub sigma0: f64,
    /// Fresh restarts allowed within the budget.
    pub restarts: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self { lambda: None, evals_per_dim: 200, sigma0: 0.3, restarts: 1 }
    }
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct Trained {
    /// Fitted spec, with the analytic variance already injected for the
    /// homoscedastic kinds. Variance parameters are in standardized-response
    /// units, matching [`crate::gp::TrainedGp::fit`].
    pub spec: KernelSpec,
    /// Best point in the normalized box, reusable as a warm start.
    pub encoded: Vec<f64>,
    /// Log likelihood at the optimum (concentrated form for homoscedastic
    /// kinds).
    pub log_likelihood: f64,
}

/// Bidirectional map between a [`KernelSpec`] and the normalized box.
#[derive(Debug, Clone)]
pub struct ParamCodec {
    kind: SpecKind,
    q: usize,
    levels: Vec<usize>,
}

fn to_unit(v: f64, (lo, hi): (f64, f64)) -> f64 {
    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn from_unit(u: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + u.clamp(0.0, 1.0) * (hi - lo)
}

impl ParamCodec {
    pub fn new(kind: SpecKind, space: &MixedSpace) -> Self {
        Self { kind, q: space.continuous_dim(), levels: space.levels().to_vec() }
    }

    /// Number of trained hyperparameters.
    pub fn dim(&self) -> usize {
        let space = MixedSpace::new(vec![(0.0, 1.0); self.q], self.levels.clone())
            .expect("codec space is valid");
        hyperparameter_count(self.kind, &space)
    }

    /// Decodes a point of the normalized box into a valid spec. Components
    /// outside [0, 1] are clamped, so any real vector decodes.
    pub fn decode(&self, u: &[f64]) -> KernelSpec {
        debug_assert_eq!(u.len(), self.dim());
        let mut it = u.iter().copied();
        let mut next = || it.next().expect("codec length checked");
        match self.kind {
            SpecKind::Cs => {
                let total = self.q + self.levels.len();
                let theta: Vec<f64> =
                    (0..total).map(|_| 10f64.powf(from_unit(next(), THETA_LOG10_RANGE))).collect();
                let p: Vec<f64> = (0..total).map(|_| from_unit(next(), P_RANGE)).collect();
                KernelSpec::Cs { theta, p, sigma_sq: 1.0 }
            }
            SpecKind::HeteroHs | SpecKind::HomoHs => {
                let hetero = self.kind == SpecKind::HeteroHs;
                let theta: Vec<f64> =
                    (0..self.q).map(|_| 10f64.powf(from_unit(next(), THETA_LOG10_RANGE))).collect();
                let p: Vec<f64> = (0..self.q).map(|_| from_unit(next(), P_RANGE)).collect();
                let cont = ContinuousKernelParams { theta, p, sigma_sq: 1.0 };
                let dims: Vec<HypersphereParams> = self
                    .levels
                    .iter()
                    .map(|&b| {
                        let radii: Vec<f64> = if hetero {
                            (0..b)
                                .map(|_| 10f64.powf(from_unit(next(), RADIUS_LOG10_RANGE)))
                                .collect()
                        } else {
                            vec![1.0; b]
                        };
                        let angles: Vec<f64> = (0..HypersphereParams::angle_count(b))
                            .map(|_| from_unit(next(), ANGLE_RANGE))
                            .collect();
                        HypersphereParams { radii, angles }
                    })
                    .collect();
                if hetero {
                    KernelSpec::HeteroHs { cont, dims }
                } else {
                    KernelSpec::HomoHs { cont, dims, sigma_sq: 1.0 }
                }
            }
        }
    }

    /// Inverse of [`decode`] up to clamping; the shared variance of
    /// homoscedastic kinds is not encoded.
    ///
    /// [`decode`]: ParamCodec::decode
    pub fn encode(&self, spec: &KernelSpec) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.dim());
        match spec {
            KernelSpec::Cs { theta, p, .. } => {
                for &t in theta {
                    u.push(to_unit(t.log10(), THETA_LOG10_RANGE));
                }
                for &pk in p {
                    u.push(to_unit(pk, P_RANGE));
                }
            }
            KernelSpec::HeteroHs { cont, dims } | KernelSpec::HomoHs { cont, dims, .. } => {
                let hetero = matches!(spec, KernelSpec::HeteroHs { .. });
                for &t in &cont.theta {
                    u.push(to_unit(t.log10(), THETA_LOG10_RANGE));
                }
                for &pk in &cont.p {
                    u.push(to_unit(pk, P_RANGE));
                }
                for d in dims {
                    if hetero {
                        for &r in &d.radii {
                            u.push(to_unit(r.log10(), RADIUS_LOG10_RANGE));
                        }
                    }
                    for &a in &d.angles {
                        u.push(to_unit(a, ANGLE_RANGE));
                    }
                }
            }
        }
        debug_assert_eq!(u.len(), self.dim());
        u
    }
}

/// Maximizes the training likelihood of `kind` on the dataset. Responses are
/// standardized internally; the returned spec is expressed in standardized
/// units and can be handed directly to [`crate::gp::TrainedGp::fit`] on the
/// same raw responses. Deterministic given `seed`; `warm_start` recenters
/// the initial CMA-ES mean (normalized coordinates).
pub fn train(
    space: &MixedSpace,
    points: &[MixedPoint],
    y: &[f64],
    kind: SpecKind,
    config: &TrainerConfig,
    seed: u64,
    warm_start: Option<&[f64]>,
) -> Result<Trained, TrainError> {
    if points.len() < 2 {
        return Err(TrainError::TooFewSamples(points.len()));
    }
    let y_mean = crate::util::mean(y);
    let y_std_dev = {
        let s = crate::util::sample_std(y);
        if s.is_finite() && s > 1e-300 {
            s
        } else {
            1.0
        }
    };
    let y_std: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std_dev).collect();

    let codec = ParamCodec::new(kind, space);
    let dim = codec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = CmaOptions {
        lambda: config.lambda,
        sigma0: config.sigma0,
        max_evals: config.evals_per_dim * dim,
        restarts: config.restarts,
        bounds: Some(vec![(0.0, 1.0); dim]),
    };
    let x0: Vec<f64> = match warm_start {
        Some(w) if w.len() == dim => w.to_vec(),
        _ => vec![0.5; dim],
    };
    let result = cmaes::minimize(
        |u| -gp::log_likelihood(space, points, &y_std, &codec.decode(u), None),
        &x0,
        &opts,
        &mut rng,
    );
    if !result.best_value.is_finite() {
        return Err(TrainError::AllRejected(kind));
    }

    let mut spec = codec.decode(&result.best_x);
    if spec.sigma_sq().is_some() {
        // solve the shared variance analytically on the correlation matrix
        let corr = KernelEval::new(spec.clone().with_sigma_sq(1.0), space.clone())
            .expect("decoded spec is valid");
        let r = corr.gram(points);
        let base = 1e-8 * (r.trace() / r.nrows() as f64).max(1e-6);
        let (chol, _) =
            cholesky_with_nugget(&r, base).ok_or(TrainError::AllRejected(kind))?;
        let yv = nalgebra::DVector::from_column_slice(&y_std);
        let mu = gp::constant_mean(&chol, &yv);
        let sigma_sq = gp::analytic_sigma_sq(&chol, &yv, mu);
        if sigma_sq <= 0.0 {
            log::warn!("analytic process variance is zero (constant responses?)");
        }
        spec = spec.with_sigma_sq(sigma_sq);
    }
    Ok(Trained {
        spec,
        encoded: result.best_x,
        log_likelihood: -result.best_value,
    })
}
