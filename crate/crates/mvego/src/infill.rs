//! Constrained infill criterion: expected improvement times probability of
//! feasibility, maximized over the mixed space with the genetic algorithm.

use rand_chacha::ChaCha8Rng;

use crate::ga::{self, GaConfig};
use crate::gp::{Prediction, TrainedGp};
use crate::space::{MixedPoint, MixedSpace};
use crate::util::{normal_cdf, normal_pdf};

/// Reference state for the improvement: the best feasible objective value
/// observed so far, if any observation is feasible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncumbentState {
    pub best_feasible: Option<f64>,
}

impl IncumbentState {
    pub fn feasible_found(&self) -> bool {
        self.best_feasible.is_some()
    }
}

/// Expected improvement of a prediction over the incumbent `y_min`:
/// `(y_min - yhat) Phi(u) + shat phi(u)` with `u = (y_min - yhat)/shat`.
/// Degenerate predictions (`shat` below 1e-12 of scale) fall back to the
/// deterministic improvement `max(y_min - yhat, 0)`.
pub fn expected_improvement(pred: &Prediction, y_min: f64) -> f64 {
    let s = pred.variance.max(0.0).sqrt();
    let gap = y_min - pred.mean;
    if s < 1e-12 * y_min.abs().max(1.0) {
        return gap.max(0.0);
    }
    let u = gap / s;
    (gap * normal_cdf(u) + s * normal_pdf(u)).max(0.0)
}

/// Probability that all constraints (engine convention g <= 0) are
/// satisfied: product of `Phi((0 - ghat_i)/shat_i)`. A constraint predicted
/// with zero variance contributes an indicator instead.
pub fn probability_of_feasibility(preds: &[Prediction]) -> f64 {
    preds
        .iter()
        .map(|pred| {
            let s = pred.variance.max(0.0).sqrt();
            if s < 1e-12 * pred.mean.abs().max(1.0) {
                if pred.mean <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                normal_cdf(-pred.mean / s)
            }
        })
        .product()
}

/// Product form of the constrained criterion.
pub fn infill_criterion(ei: f64, pof: f64) -> f64 {
    ei * pof
}

/// Criterion value at a point: EI times PoF once a feasible incumbent
/// exists, PoF alone before that (there is no meaningful improvement
/// reference while every observation is infeasible).
pub fn criterion_at(
    objective: &TrainedGp,
    constraints: &[TrainedGp],
    incumbent: &IncumbentState,
    w: &MixedPoint,
) -> f64 {
    let pof = if constraints.is_empty() {
        1.0
    } else {
        let preds: Vec<Prediction> = constraints.iter().map(|gp| gp.predict(w)).collect();
        probability_of_feasibility(&preds)
    };
    match incumbent.best_feasible {
        Some(y_min) => infill_criterion(expected_improvement(&objective.predict(w), y_min), pof),
        None => pof,
    }
}

/// Maximizes the infill criterion over the space with the mixed GA.
/// Deterministic given the RNG state; the returned point is always inside
/// the space.
pub fn maximize_ic(
    objective: &TrainedGp,
    constraints: &[TrainedGp],
    space: &MixedSpace,
    incumbent: &IncumbentState,
    cfg: &GaConfig,
    rng: &mut ChaCha8Rng,
) -> (MixedPoint, f64) {
    let run = ga::maximize(space, cfg, rng, |w| {
        criterion_at(objective, constraints, incumbent, w)
    });
    (run.best, run.best_value)
}
