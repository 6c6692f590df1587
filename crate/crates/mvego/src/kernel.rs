//! Mixed-variable covariance functions.
//!
//! A mixed kernel is the product of a continuous p-exponential kernel and one
//! discrete covariance matrix per discrete dimension,
//!
//! ```text
//! k(w_i, w_j) = k_c(x_i, x_j) * prod_s [T_s]_{z_is, z_js}
//! ```
//!
//! Three parameterizations of the per-dimension matrices `T_s` are provided:
//!
//! * heteroscedastic hypersphere decomposition (`He_HS`): `T_s = L L^T` with
//!   the rows of `L` given by hypersphere coordinates (a radius per level plus
//!   angles), so each level carries its own variance;
//! * homoscedastic hypersphere decomposition (`Ho_HS`): same construction
//!   with all radii fixed to 1, making `T_s` a correlation matrix; a single
//!   shared process variance multiplies the product;
//! * compound symmetry (`CS`) in its Gower-distance form: constant diagonal
//!   and constant off-diagonal per dimension, derived from a p-exponential
//!   kernel over the Gower distance.
//!
//! All three yield symmetric positive semi-definite Gram matrices by
//! construction (Schur product of PSD factors).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{MixedPoint, MixedSpace};

/// Angles must stay strictly inside (0, pi); this margin keeps the open
/// interval numerically strict.
pub const ANGLE_MARGIN: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("theta must be positive, got {0}")]
    ThetaNotPositive(f64),
    #[error("exponent p must lie in [1, 2], got {0}")]
    POutOfRange(f64),
    #[error("kernel variance must be positive, got {0}")]
    VarianceNotPositive(f64),
    #[error("hypersphere radius must be positive, got {0}")]
    RadiusNotPositive(f64),
    #[error("hypersphere angle must lie in (0, pi), got {0}")]
    AngleOutOfRange(f64),
    #[error("parameter block for discrete dimension {dim} expects {expected} levels, got {got}")]
    LevelMismatch { dim: usize, expected: usize, got: usize },
    #[error("spec has {got} parameter blocks for a space with {expected} discrete dimensions")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("continuous parameters expect length {expected}, got {got}")]
    ContinuousMismatch { expected: usize, got: usize },
}

/// Hyperparameters of the continuous p-exponential kernel
/// `sigma_c^2 * exp(-sum_k theta_k |x_ik - x_jk|^{p_k})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousKernelParams {
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub sigma_sq: f64,
}

impl ContinuousKernelParams {
    pub fn validate(&self, q: usize) -> Result<(), KernelError> {
        if self.theta.len() != q || self.p.len() != q {
            return Err(KernelError::ContinuousMismatch {
                expected: q,
                got: self.theta.len().min(self.p.len()),
            });
        }
        for &t in &self.theta {
            if !(t > 0.0) {
                return Err(KernelError::ThetaNotPositive(t));
            }
        }
        for &p in &self.p {
            if !(1.0..=2.0).contains(&p) {
                return Err(KernelError::POutOfRange(p));
            }
        }
        if !(self.sigma_sq > 0.0) {
            return Err(KernelError::VarianceNotPositive(self.sigma_sq));
        }
        Ok(())
    }
}

/// p-exponential kernel between two raw coordinate vectors.
pub fn continuous_kernel(xi: &[f64], xj: &[f64], params: &ContinuousKernelParams) -> f64 {
    let mut acc = 0.0;
    for k in 0..xi.len() {
        acc += params.theta[k] * (xi[k] - xj[k]).abs().powf(params.p[k]);
    }
    params.sigma_sq * (-acc).exp()
}

/// Hypersphere parameterization of one discrete dimension: a radius per
/// level (all 1 in the homoscedastic case) and `b(b-1)/2` angles packed
/// row-wise (row k, 0-based, holds k angles).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypersphereParams {
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
}

impl HypersphereParams {
    pub fn levels(&self) -> usize {
        self.radii.len()
    }

    pub fn angle_count(levels: usize) -> usize {
        levels * (levels - 1) / 2
    }

    /// Angle `alpha_{k,j}` for 0-based row `k >= 1`, `j` in `1..=k`.
    fn angle(&self, k: usize, j: usize) -> f64 {
        self.angles[k * (k - 1) / 2 + (j - 1)]
    }

    pub fn is_homoscedastic(&self) -> bool {
        self.radii.iter().all(|&r| r == 1.0)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let b = self.levels();
        if self.angles.len() != Self::angle_count(b) {
            return Err(KernelError::LevelMismatch {
                dim: 0,
                expected: Self::angle_count(b),
                got: self.angles.len(),
            });
        }
        for &r in &self.radii {
            if !(r > 0.0) {
                return Err(KernelError::RadiusNotPositive(r));
            }
        }
        for &a in &self.angles {
            if !(a > 0.0 && a < std::f64::consts::PI) {
                return Err(KernelError::AngleOutOfRange(a));
            }
        }
        Ok(())
    }
}

/// Lower-triangular hypersphere factor: row k holds the coordinates of a
/// point on a k-sphere of radius `radii[k]`, so `L L^T` is PSD with the
/// squared radii on its diagonal.
pub fn hypersphere_cholesky(params: &HypersphereParams) -> Result<DMatrix<f64>, KernelError> {
    params.validate()?;
    let b = params.levels();
    let mut l = DMatrix::zeros(b, b);
    l[(0, 0)] = params.radii[0];
    for k in 1..b {
        let mut prefix = params.radii[k];
        for s in 0..k {
            let a = params.angle(k, s + 1);
            l[(k, s)] = prefix * a.cos();
            prefix *= a.sin();
        }
        l[(k, k)] = prefix;
    }
    Ok(l)
}

/// Discrete covariance matrix `T = L L^T` from a hypersphere factor.
pub fn discrete_matrix_hs(l: &DMatrix<f64>) -> DMatrix<f64> {
    l * l.transpose()
}

/// Gower distance between two mixed points: range-normalized Manhattan terms
/// for continuous dimensions plus 0/1 mismatch scores for discrete ones, all
/// divided by q + r.
pub fn gower_distance(wi: &MixedPoint, wj: &MixedPoint, space: &MixedSpace) -> f64 {
    let denom = (space.continuous_dim() + space.discrete_dim()) as f64;
    let mut acc = 0.0;
    for k in 0..space.continuous_dim() {
        acc += (wi.x[k] - wj.x[k]).abs() / space.range(k);
    }
    for s in 0..space.discrete_dim() {
        if wi.z[s] != wj.z[s] {
            acc += 1.0;
        }
    }
    acc / denom
}

/// Compound-symmetry matrix for one discrete dimension in the Gower form:
/// `v_s` on the diagonal and `c_s = v_s * exp(-theta (1/(q+r))^p)` off it,
/// so `0 < c_s < v_s` and the matrix is PSD for any `theta > 0`.
pub fn cs_matrix(
    theta: f64,
    p: f64,
    levels: usize,
    space: &MixedSpace,
    sigma_sq: f64,
) -> Result<DMatrix<f64>, KernelError> {
    if !(theta > 0.0) {
        return Err(KernelError::ThetaNotPositive(theta));
    }
    if !(1.0..=2.0).contains(&p) {
        return Err(KernelError::POutOfRange(p));
    }
    let denom = (space.continuous_dim() + space.discrete_dim()) as f64;
    let c = sigma_sq * (-theta * (1.0 / denom).powf(p)).exp();
    Ok(DMatrix::from_fn(levels, levels, |i, j| if i == j { sigma_sq } else { c }))
}

/// Which discrete-kernel parameterization a spec uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpecKind {
    /// Heteroscedastic dimension-wise hypersphere decomposition.
    HeteroHs,
    /// Homoscedastic dimension-wise hypersphere decomposition.
    HomoHs,
    /// Compound symmetry in Gower-distance form.
    Cs,
}

impl SpecKind {
    pub fn label(self) -> &'static str {
        match self {
            SpecKind::HeteroHs => "HeHS",
            SpecKind::HomoHs => "HoHS",
            SpecKind::Cs => "CS",
        }
    }
}

impl std::fmt::Display for SpecKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A full mixed-variable kernel specification.
///
/// For `HomoHs` and `Cs` the process variance `sigma_sq` is shared across
/// categories and is typically solved analytically during training; with
/// `sigma_sq = 1` those kernels are correlation functions. For `HeteroHs`
/// the variance lives in the hypersphere radii and the continuous factor is
/// a correlation (`sigma_c^2 = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    HeteroHs {
        cont: ContinuousKernelParams,
        dims: Vec<HypersphereParams>,
    },
    HomoHs {
        cont: ContinuousKernelParams,
        dims: Vec<HypersphereParams>,
        sigma_sq: f64,
    },
    Cs {
        /// theta_1..q for continuous dimensions, then theta_{q+1}..{q+r}.
        theta: Vec<f64>,
        /// p_1..q, then p_{q+1}..{q+r}.
        p: Vec<f64>,
        sigma_sq: f64,
    },
}

impl KernelSpec {
    pub fn kind(&self) -> SpecKind {
        match self {
            KernelSpec::HeteroHs { .. } => SpecKind::HeteroHs,
            KernelSpec::HomoHs { .. } => SpecKind::HomoHs,
            KernelSpec::Cs { .. } => SpecKind::Cs,
        }
    }

    /// Shared process variance for the homoscedastic kinds.
    pub fn sigma_sq(&self) -> Option<f64> {
        match self {
            KernelSpec::HeteroHs { .. } => None,
            KernelSpec::HomoHs { sigma_sq, .. } | KernelSpec::Cs { sigma_sq, .. } => Some(*sigma_sq),
        }
    }

    /// Replaces the shared process variance (no-op for `HeteroHs`).
    pub fn with_sigma_sq(mut self, value: f64) -> Self {
        match &mut self {
            KernelSpec::HeteroHs { .. } => {}
            KernelSpec::HomoHs { sigma_sq, .. } | KernelSpec::Cs { sigma_sq, .. } => {
                *sigma_sq = value;
            }
        }
        self
    }

    pub fn validate(&self, space: &MixedSpace) -> Result<(), KernelError> {
        let q = space.continuous_dim();
        let r = space.discrete_dim();
        match self {
            KernelSpec::HeteroHs { cont, dims } | KernelSpec::HomoHs { cont, dims, .. } => {
                cont.validate(q)?;
                if dims.len() != r {
                    return Err(KernelError::DimensionMismatch { expected: r, got: dims.len() });
                }
                for (s, d) in dims.iter().enumerate() {
                    if d.levels() != space.levels()[s] {
                        return Err(KernelError::LevelMismatch {
                            dim: s,
                            expected: space.levels()[s],
                            got: d.levels(),
                        });
                    }
                    d.validate()?;
                    if matches!(self, KernelSpec::HomoHs { .. }) && !d.is_homoscedastic() {
                        return Err(KernelError::RadiusNotPositive(d.radii[0]));
                    }
                }
                if let KernelSpec::HomoHs { sigma_sq, .. } = self {
                    if !(*sigma_sq >= 0.0) {
                        return Err(KernelError::VarianceNotPositive(*sigma_sq));
                    }
                }
            }
            KernelSpec::Cs { theta, p, sigma_sq } => {
                if theta.len() != q + r || p.len() != q + r {
                    return Err(KernelError::ContinuousMismatch {
                        expected: q + r,
                        got: theta.len().min(p.len()),
                    });
                }
                for &t in theta {
                    if !(t > 0.0) {
                        return Err(KernelError::ThetaNotPositive(t));
                    }
                }
                for &pk in p {
                    if !(1.0..=2.0).contains(&pk) {
                        return Err(KernelError::POutOfRange(pk));
                    }
                }
                if !(*sigma_sq >= 0.0) {
                    return Err(KernelError::VarianceNotPositive(*sigma_sq));
                }
            }
        }
        Ok(())
    }
}

/// Number of trained hyperparameters for a spec kind on a space. Counts
/// theta_k and p_k for each continuous dimension plus the discrete-kernel
/// parameters; the shared process variance of `HomoHs`/`Cs` is solved
/// analytically and is not counted.
pub fn hyperparameter_count(kind: SpecKind, space: &MixedSpace) -> usize {
    let q = space.continuous_dim();
    let r = space.discrete_dim();
    match kind {
        SpecKind::HeteroHs => 2 * q + space.levels().iter().map(|&b| b * (b + 1) / 2).sum::<usize>(),
        SpecKind::HomoHs => 2 * q + space.levels().iter().map(|&b| b * (b - 1) / 2).sum::<usize>(),
        SpecKind::Cs => 2 * (q + r),
    }
}

/// A kernel bound to its space, with the per-dimension discrete matrices
/// precomputed. Continuous coordinates are normalized to the unit box before
/// entering the p-exponential factor, so length-scale bounds are
/// problem-independent.
#[derive(Debug, Clone)]
pub struct KernelEval {
    spec: KernelSpec,
    space: MixedSpace,
    t_mats: Vec<DMatrix<f64>>,
    inv_width: Vec<f64>,
}

impl KernelEval {
    pub fn new(spec: KernelSpec, space: MixedSpace) -> Result<Self, KernelError> {
        spec.validate(&space)?;
        let denom = (space.continuous_dim() + space.discrete_dim()) as f64;
        let t_mats = match &spec {
            KernelSpec::HeteroHs { dims, .. } | KernelSpec::HomoHs { dims, .. } => dims
                .iter()
                .map(|d| hypersphere_cholesky(d).map(|l| discrete_matrix_hs(&l)))
                .collect::<Result<Vec<_>, _>>()?,
            KernelSpec::Cs { theta, p, .. } => {
                let q = space.continuous_dim();
                (0..space.discrete_dim())
                    .map(|s| {
                        let c = (-theta[q + s] * (1.0 / denom).powf(p[q + s])).exp();
                        let b = space.levels()[s];
                        Ok(DMatrix::from_fn(b, b, |i, j| if i == j { 1.0 } else { c }))
                    })
                    .collect::<Result<Vec<_>, KernelError>>()?
            }
        };
        let inv_width = (0..space.continuous_dim()).map(|k| 1.0 / space.range(k)).collect();
        Ok(Self { spec, space, t_mats, inv_width })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn space(&self) -> &MixedSpace {
        &self.space
    }

    /// Per-dimension discrete covariance matrices `T_s`.
    pub fn discrete_matrices(&self) -> &[DMatrix<f64>] {
        &self.t_mats
    }

    /// Covariance between two points.
    pub fn eval(&self, a: &MixedPoint, b: &MixedPoint) -> f64 {
        let q = self.space.continuous_dim();
        let denom = (q + self.space.discrete_dim()) as f64;
        let cont = match &self.spec {
            KernelSpec::HeteroHs { cont, .. } | KernelSpec::HomoHs { cont, .. } => {
                let mut acc = 0.0;
                for k in 0..q {
                    let d = (a.x[k] - b.x[k]).abs() * self.inv_width[k];
                    acc += cont.theta[k] * d.powf(cont.p[k]);
                }
                cont.sigma_sq * (-acc).exp()
            }
            KernelSpec::Cs { theta, p, .. } => {
                let mut acc = 0.0;
                for k in 0..q {
                    let d = (a.x[k] - b.x[k]).abs() * self.inv_width[k] / denom;
                    acc += theta[k] * d.powf(p[k]);
                }
                (-acc).exp()
            }
        };
        let mut disc = 1.0;
        for (s, t) in self.t_mats.iter().enumerate() {
            disc *= t[(a.z[s], b.z[s])];
        }
        let scale = match &self.spec {
            KernelSpec::HeteroHs { .. } => 1.0,
            KernelSpec::HomoHs { sigma_sq, .. } | KernelSpec::Cs { sigma_sq, .. } => *sigma_sq,
        };
        scale * cont * disc
    }

    /// Gram matrix over a point set.
    pub fn gram(&self, points: &[MixedPoint]) -> DMatrix<f64> {
        let n = points.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(&points[i], &points[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Covariances between each training point and a prediction point.
    pub fn cross(&self, points: &[MixedPoint], w: &MixedPoint) -> DVector<f64> {
        DVector::from_iterator(points.len(), points.iter().map(|p| self.eval(p, w)))
    }
}

/// Covariance between two points under a spec; convenience wrapper over
/// [`KernelEval`] for one-off evaluations.
pub fn mixed_kernel(
    wi: &MixedPoint,
    wj: &MixedPoint,
    spec: &KernelSpec,
    space: &MixedSpace,
) -> Result<f64, KernelError> {
    Ok(KernelEval::new(spec.clone(), space.clone())?.eval(wi, wj))
}

/// The CS kernel written directly as a p-exponential over Gower terms,
/// without going through the per-dimension matrices. Equal to the factored
/// form up to floating-point roundoff; kept as the second route of the
/// dual-form identity check.
pub fn cs_kernel_direct(
    wi: &MixedPoint,
    wj: &MixedPoint,
    theta: &[f64],
    p: &[f64],
    sigma_sq: f64,
    space: &MixedSpace,
) -> f64 {
    let q = space.continuous_dim();
    let r = space.discrete_dim();
    let denom = (q + r) as f64;
    let mut acc = 0.0;
    for k in 0..q {
        let d = (wi.x[k] - wj.x[k]).abs() / space.range(k) / denom;
        acc += theta[k] * d.powf(p[k]);
    }
    for s in 0..r {
        let score = if wi.z[s] == wj.z[s] { 0.0 } else { 1.0 };
        acc += theta[q + s] * (score / denom).powf(p[q + s]);
    }
    sigma_sq * (-acc).exp()
}
