//! Optimization problem definition: evaluators over the mixed space with a
//! declared constraint sign convention.
//!
//! The engine works with constraints in the `g <= 0` convention (feasible
//! when nonpositive). Problems may declare their constraints either way;
//! values are negated at the evaluation boundary when the declared
//! convention is `g >= 0`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::space::{MixedPoint, MixedSpace};

/// Feasibility tolerance on true constraint values (engine convention).
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ConstraintSign {
    /// Feasible when g <= 0 (engine convention).
    LeqZero,
    /// Feasible when g >= 0; negated internally.
    GeqZero,
}

impl ConstraintSign {
    /// Converts a declared-convention value to the engine convention.
    pub fn normalize(self, g: f64) -> f64 {
        match self {
            ConstraintSign::LeqZero => g,
            ConstraintSign::GeqZero => -g,
        }
    }
}

type Evaluator = Arc<dyn Fn(&MixedPoint) -> (f64, Vec<f64>) + Send + Sync>;

/// A constrained mixed-variable minimization problem. Evaluators must be
/// deterministic and total over the space.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub space: MixedSpace,
    pub n_constraints: usize,
    pub sign: ConstraintSign,
    evaluator: Evaluator,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("space", &self.space)
            .field("n_constraints", &self.n_constraints)
            .field("sign", &self.sign)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        space: MixedSpace,
        n_constraints: usize,
        sign: ConstraintSign,
        evaluator: impl Fn(&MixedPoint) -> (f64, Vec<f64>) + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            space,
            n_constraints,
            sign,
            evaluator: Arc::new(evaluator),
        }
    }

    /// Objective and constraint values in the declared convention.
    pub fn evaluate(&self, w: &MixedPoint) -> (f64, Vec<f64>) {
        let (f, g) = (self.evaluator)(w);
        debug_assert_eq!(g.len(), self.n_constraints);
        (f, g)
    }

    /// Objective and constraints normalized to the engine g <= 0 convention.
    pub fn evaluate_normalized(&self, w: &MixedPoint) -> (f64, Vec<f64>) {
        let (f, g) = self.evaluate(w);
        (f, g.into_iter().map(|v| self.sign.normalize(v)).collect())
    }

    /// Whether declared-convention constraint values are feasible at the
    /// engine tolerance.
    pub fn is_feasible(&self, g: &[f64]) -> bool {
        g.iter().all(|&v| self.sign.normalize(v) <= FEASIBILITY_TOL)
    }

    /// Wraps the problem so every true evaluation bumps a shared counter;
    /// used to audit evaluation budgets.
    pub fn counting(&self) -> (Problem, Arc<AtomicUsize>) {
        let counter = Arc::new(AtomicUsize::new(0));
        let inner = self.evaluator.clone();
        let counter_clone = counter.clone();
        let wrapped = Problem {
            name: self.name.clone(),
            space: self.space.clone(),
            n_constraints: self.n_constraints,
            sign: self.sign,
            evaluator: Arc::new(move |w: &MixedPoint| {
                counter_clone.fetch_add(1, Ordering::Relaxed);
                inner(w)
            }),
        };
        (wrapped, counter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Problem {
        let space = MixedSpace::new(vec![(0.0, 1.0)], vec![2]).unwrap();
        Problem::new("toy", space, 1, ConstraintSign::GeqZero, |w| {
            (w.x[0], vec![w.x[0] - 0.5])
        })
    }

    #[test]
    fn normalization_flips_declared_geq_constraints() {
        let p = toy();
        let w = MixedPoint::new(vec![0.8], vec![0]);
        let (_, raw) = p.evaluate(&w);
        let (_, norm) = p.evaluate_normalized(&w);
        assert_eq!(raw[0], 0.8 - 0.5);
        assert_eq!(norm[0], -(0.8 - 0.5));
        assert!(p.is_feasible(&raw)); // 0.3 >= 0 feasible under g >= 0
    }

    #[test]
    fn counting_wrapper_counts_every_evaluation() {
        let p = toy();
        let (wrapped, counter) = p.counting();
        let w = MixedPoint::new(vec![0.2], vec![1]);
        for _ in 0..7 {
            wrapped.evaluate(&w);
        }
        wrapped.evaluate_normalized(&w);
        assert_eq!(counter.load(Ordering::Relaxed), 8);
    }
}
