//! Outer optimization drivers: mixed-variable EGO, the category-wise EGO
//! baseline, and the penalized-GA baseline.
//!
//! One driver run is sequential (each infill depends on the previous);
//! independent seeded repetitions can run concurrently. All surrogate-based
//! drivers derive their initial design from the seed through the same
//! generator, so every method sees the identical design for a given seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ga::{self, GaConfig};
use crate::gp::TrainedGp;
use crate::infill::{maximize_ic, IncumbentState};
use crate::kernel::SpecKind;
use crate::problem::{ConstraintSign, Problem, FEASIBILITY_TOL};
use crate::space::{lhs_initial_doe, MixedPoint, MixedSpace};
use crate::train::{train, TrainError, TrainerConfig};
use crate::util::subseed;

// stream tags for seed derivation
const TAG_DOE: u64 = 0;
const TAG_TRAIN: u64 = 1 << 32;
const TAG_INFILL_GA: u64 = 2 << 32;
const TAG_PENALIZED_GA: u64 = 3 << 32;
const TAG_TOPUP: u64 = 4 << 32;

#[derive(Debug, Error)]
pub enum EgoError {
    #[error("training the {output} surrogate failed at iteration {iteration}: {source}")]
    Training {
        output: String,
        iteration: usize,
        source: TrainError,
        /// History up to the failure.
        partial: Box<RunRecord>,
    },
    #[error(transparent)]
    Space(#[from] crate::space::SpaceError),
}

impl EgoError {
    /// History preserved up to an aborted run, when available.
    pub fn partial_record(&self) -> Option<&RunRecord> {
        match self {
            EgoError::Training { partial, .. } => Some(partial),
            EgoError::Space(_) => None,
        }
    }
}

/// One true-function evaluation, in the problem's declared constraint
/// convention.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub point: MixedPoint,
    pub objective: f64,
    pub constraints: Vec<f64>,
}

/// Per-infill diagnostics of a surrogate-based run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfillLog {
    /// Criterion value at the chosen point.
    pub ic: f64,
    /// Feasible incumbent before the infill, if any.
    pub incumbent_before: Option<f64>,
    /// Trained hyperparameter vectors (normalized codec coordinates),
    /// objective first, then one per constraint. For the category-wise
    /// driver: flattened per category in category order.
    pub hyperparameters: Vec<Vec<f64>>,
    /// Log likelihoods matching `hyperparameters`.
    pub log_likelihoods: Vec<f64>,
    /// Category the infill was placed in (category-wise driver).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chosen_category: Option<usize>,
    /// Training-set size per category at this iteration (category-wise
    /// driver).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category_sizes: Option<Vec<usize>>,
}

/// Full history of one driver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub seed: u64,
    /// Evaluations consumed before the infill loop (initial design for the
    /// surrogate drivers, first generation for the GA).
    pub n_initial: usize,
    pub constraint_sign: ConstraintSign,
    pub evaluations: Vec<EvalRecord>,
    pub infills: Vec<InfillLog>,
}

impl RunRecord {
    fn feasible(&self, rec: &EvalRecord) -> bool {
        rec.constraints
            .iter()
            .all(|&g| self.constraint_sign.normalize(g) <= FEASIBILITY_TOL)
    }

    /// Best feasible objective among the first `upto` evaluations.
    pub fn incumbent_after(&self, upto: usize) -> Option<f64> {
        self.evaluations[..upto.min(self.evaluations.len())]
            .iter()
            .filter(|r| self.feasible(r))
            .map(|r| r.objective)
            .min_by(f64::total_cmp)
    }

    /// Incumbent after every evaluation index (1-based prefix lengths).
    pub fn incumbent_trajectory(&self) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.evaluations
            .iter()
            .map(|r| {
                if self.feasible(r) && best.is_none_or(|b| r.objective < b) {
                    best = Some(r.objective);
                }
                best
            })
            .collect()
    }

    /// Final best feasible evaluation (index and record), if any.
    pub fn final_best(&self) -> Option<(usize, &EvalRecord)> {
        self.evaluations
            .iter()
            .enumerate()
            .filter(|(_, r)| self.feasible(r))
            .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective))
    }
}

/// Shared knobs of the surrogate-based drivers.
#[derive(Debug, Clone, Default)]
pub struct EgoSettings {
    pub trainer: TrainerConfig,
    pub infill_ga: GaConfig,
}

/// Initial design for a given problem and seed. Every surrogate-based
/// driver calls this with the campaign's per-repetition seed, so all of
/// them consume the identical design.
pub fn initial_doe(
    problem: &Problem,
    n_initial: usize,
    seed: u64,
) -> Result<Vec<MixedPoint>, crate::space::SpaceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, TAG_DOE));
    lhs_initial_doe(&problem.space, n_initial, &mut rng)
}

fn evaluate_into(problem: &Problem, w: MixedPoint, record: &mut RunRecord) {
    let (objective, constraints) = problem.evaluate(&w);
    record.evaluations.push(EvalRecord { point: w, objective, constraints });
}

fn normalized_columns(problem: &Problem, record: &RunRecord) -> (Vec<f64>, Vec<Vec<f64>>) {
    let y: Vec<f64> = record.evaluations.iter().map(|r| r.objective).collect();
    let gs: Vec<Vec<f64>> = (0..problem.n_constraints)
        .map(|i| {
            record
                .evaluations
                .iter()
                .map(|r| problem.sign.normalize(r.constraints[i]))
                .collect()
        })
        .collect();
    (y, gs)
}

fn incumbent_state(record: &RunRecord) -> IncumbentState {
    IncumbentState { best_feasible: record.incumbent_after(record.evaluations.len()) }
}

/// Mixed-variable EGO: one surrogate per output over the whole mixed space,
/// retrained from scratch every iteration; the infill point maximizes
/// EI x PoF. Consumes exactly `n_initial + n_infill` true evaluations.
pub fn run_mixed_ego(
    problem: &Problem,
    kind: SpecKind,
    n_initial: usize,
    n_infill: usize,
    seed: u64,
    settings: &EgoSettings,
) -> Result<RunRecord, EgoError> {
    assert!(n_initial >= 2, "mixed EGO needs at least 2 initial samples");
    let mut record = RunRecord {
        method: kind.label().to_string(),
        seed,
        n_initial,
        constraint_sign: problem.sign,
        evaluations: Vec::with_capacity(n_initial + n_infill),
        infills: Vec::with_capacity(n_infill),
    };
    for w in initial_doe(problem, n_initial, seed)? {
        evaluate_into(problem, w, &mut record);
    }

    let n_outputs = 1 + problem.n_constraints;
    let mut warm: Vec<Option<Vec<f64>>> = vec![None; n_outputs];

    for iter in 0..n_infill {
        let (y, gs) = normalized_columns(problem, &record);
        let points: Vec<MixedPoint> =
            record.evaluations.iter().map(|r| r.point.clone()).collect();

        let mut gps = Vec::with_capacity(n_outputs);
        let mut encoded = Vec::with_capacity(n_outputs);
        let mut likelihoods = Vec::with_capacity(n_outputs);
        for out in 0..n_outputs {
            let column: &[f64] = if out == 0 { &y } else { &gs[out - 1] };
            let train_seed = subseed(seed, TAG_TRAIN + (iter as u64) * 64 + out as u64);
            let trained = match train(
                &problem.space,
                &points,
                column,
                kind,
                &settings.trainer,
                train_seed,
                warm[out].as_deref(),
            ) {
                Ok(t) => t,
                Err(source) => {
                    return Err(EgoError::Training {
                        output: if out == 0 { "objective".into() } else { format!("g{}", out) },
                        iteration: iter,
                        source,
                        partial: Box::new(record),
                    })
                }
            };
            warm[out] = Some(trained.encoded.clone());
            encoded.push(trained.encoded.clone());
            likelihoods.push(trained.log_likelihood);
            let gp = match TrainedGp::fit(&problem.space, &points, column, trained.spec) {
                Ok(gp) => gp,
                Err(err) => {
                    log::error!("fit after training failed: {err}");
                    return Err(EgoError::Training {
                        output: if out == 0 { "objective".into() } else { format!("g{}", out) },
                        iteration: iter,
                        source: TrainError::AllRejected(kind),
                        partial: Box::new(record),
                    });
                }
            };
            gps.push(gp);
        }

        let incumbent = incumbent_state(&record);
        let mut ga_rng = ChaCha8Rng::seed_from_u64(subseed(seed, TAG_INFILL_GA + iter as u64));
        let (objective_gp, constraint_gps) = gps.split_first().expect("objective GP present");
        let (w_star, ic) = maximize_ic(
            objective_gp,
            constraint_gps,
            &problem.space,
            &incumbent,
            &settings.infill_ga,
            &mut ga_rng,
        );
        record.infills.push(InfillLog {
            ic,
            incumbent_before: incumbent.best_feasible,
            hyperparameters: encoded,
            log_likelihoods: likelihoods,
            chosen_category: None,
            category_sizes: None,
        });
        evaluate_into(problem, w_star, &mut record);
    }
    Ok(record)
}

/// Category-wise EGO baseline: an independent continuous GP per category
/// per output, trained only on that category's samples. Each iteration
/// maximizes the criterion within every category with the same (continuous)
/// GA budget and infills at the best category.
pub fn run_categorywise_ego(
    problem: &Problem,
    n_initial: usize,
    n_infill: usize,
    seed: u64,
    settings: &EgoSettings,
) -> Result<RunRecord, EgoError> {
    let space = &problem.space;
    let m = space.category_count();
    let mut record = RunRecord {
        method: "CW".to_string(),
        seed,
        n_initial,
        constraint_sign: problem.sign,
        evaluations: Vec::new(),
        infills: Vec::with_capacity(n_infill),
    };
    for w in initial_doe(problem, n_initial, seed)? {
        evaluate_into(problem, w, &mut record);
    }

    // every category needs at least 2 samples for its own GP; top up the
    // shared design when the budget is too small for that
    let mut counts = vec![0usize; m];
    for r in &record.evaluations {
        counts[space.encode_category(&r.point.z).expect("point in space")] += 1;
    }
    let mut topup_rng = ChaCha8Rng::seed_from_u64(subseed(seed, TAG_TOPUP));
    for c in 0..m {
        while counts[c] < 2 {
            log::warn!(
                "category {c} has {} initial samples; sampling an extra point (budget grows)",
                counts[c]
            );
            let w = space.sample_in_category(c, &mut topup_rng);
            evaluate_into(problem, w, &mut record);
            counts[c] += 1;
        }
    }
    record.n_initial = record.evaluations.len();

    let cont_space = MixedSpace::continuous_only(space.bounds().to_vec())?;
    let n_outputs = 1 + problem.n_constraints;
    let mut warm: Vec<Option<Vec<f64>>> = vec![None; m * n_outputs];

    for iter in 0..n_infill {
        let (y, gs) = normalized_columns(problem, &record);
        let by_category: Vec<Vec<usize>> = {
            let mut rows = vec![Vec::new(); m];
            for (i, r) in record.evaluations.iter().enumerate() {
                rows[space.encode_category(&r.point.z).expect("point in space")].push(i);
            }
            rows
        };
        let incumbent = incumbent_state(&record);

        let mut best: Option<(MixedPoint, f64, usize)> = None;
        let mut encoded = Vec::new();
        let mut likelihoods = Vec::new();
        for c in 0..m {
            let rows = &by_category[c];
            let points: Vec<MixedPoint> = rows
                .iter()
                .map(|&i| MixedPoint::continuous(record.evaluations[i].point.x.clone()))
                .collect();
            let mut gps = Vec::with_capacity(n_outputs);
            for out in 0..n_outputs {
                let column: Vec<f64> = if out == 0 {
                    rows.iter().map(|&i| y[i]).collect()
                } else {
                    rows.iter().map(|&i| gs[out - 1][i]).collect()
                };
                let train_seed = subseed(
                    seed,
                    TAG_TRAIN + (iter as u64) * 4096 + (c as u64) * 64 + out as u64,
                );
                let slot = c * n_outputs + out;
                let trained = match train(
                    &cont_space,
                    &points,
                    &column,
                    SpecKind::HomoHs,
                    &settings.trainer,
                    train_seed,
                    warm[slot].as_deref(),
                ) {
                    Ok(t) => t,
                    Err(source) => {
                        return Err(EgoError::Training {
                            output: format!("category {c} output {out}"),
                            iteration: iter,
                            source,
                            partial: Box::new(record),
                        })
                    }
                };
                warm[slot] = Some(trained.encoded.clone());
                encoded.push(trained.encoded.clone());
                likelihoods.push(trained.log_likelihood);
                match TrainedGp::fit(&cont_space, &points, &column, trained.spec) {
                    Ok(gp) => gps.push(gp),
                    Err(err) => {
                        log::error!("category {c} fit failed: {err}");
                        return Err(EgoError::Training {
                            output: format!("category {c} output {out}"),
                            iteration: iter,
                            source: TrainError::AllRejected(SpecKind::HomoHs),
                            partial: Box::new(record),
                        });
                    }
                }
            }
            let mut ga_rng = ChaCha8Rng::seed_from_u64(subseed(
                seed,
                TAG_INFILL_GA + (iter as u64) * 4096 + c as u64,
            ));
            let (objective_gp, constraint_gps) = gps.split_first().expect("objective GP");
            let (w_cont, ic) = maximize_ic(
                objective_gp,
                constraint_gps,
                &cont_space,
                &incumbent,
                &settings.infill_ga,
                &mut ga_rng,
            );
            if best.as_ref().is_none_or(|(_, bic, _)| ic > *bic) {
                best = Some((w_cont, ic, c));
            }
        }

        let (w_cont, ic, category) = best.expect("at least one category");
        let z = space.decode_category(category).expect("category in range");
        record.infills.push(InfillLog {
            ic,
            incumbent_before: incumbent.best_feasible,
            hyperparameters: encoded,
            log_likelihoods: likelihoods,
            chosen_category: Some(category),
            category_sizes: Some(by_category.iter().map(Vec::len).collect()),
        });
        evaluate_into(problem, MixedPoint::new(w_cont.x, z), &mut record);
    }
    Ok(record)
}

/// Penalized mixed-variable GA baseline. Minimizes
/// `f + rho * sum max(0, g)^2` (engine-convention g) with
/// `rho = 1e3 * max(1, objective range of the first generation)`, fixed
/// after initialization. Every population member is evaluated every
/// generation, so the run consumes exactly `population * generations` true
/// evaluations.
pub fn run_penalized_ga(
    problem: &Problem,
    population: usize,
    generations: usize,
    seed: u64,
) -> RunRecord {
    assert!(population >= 2 && generations >= 1, "degenerate GA budget");
    let mut record = RunRecord {
        method: "GA".to_string(),
        seed,
        n_initial: population,
        constraint_sign: problem.sign,
        evaluations: Vec::with_capacity(population * generations),
        infills: Vec::new(),
    };
    let cfg = GaConfig {
        population,
        generations,
        stall_generations: usize::MAX,
        ..GaConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, TAG_PENALIZED_GA));
    let mut pop: Vec<MixedPoint> =
        (0..population).map(|_| problem.space.sample_uniform(&mut rng)).collect();
    let mut rho: Option<f64> = None;

    for _gen in 0..generations {
        let mut scored: Vec<(MixedPoint, f64, f64)> = Vec::with_capacity(population);
        for w in pop.drain(..) {
            let (f, g_raw) = problem.evaluate(&w);
            record.evaluations.push(EvalRecord {
                point: w.clone(),
                objective: f,
                constraints: g_raw.clone(),
            });
            let violation: f64 = g_raw
                .iter()
                .map(|&g| problem.sign.normalize(g).max(0.0).powi(2))
                .sum();
            scored.push((w, f, violation));
        }
        let rho_now = *rho.get_or_insert_with(|| {
            let lo = scored.iter().map(|s| s.1).fold(f64::MAX, f64::min);
            let hi = scored.iter().map(|s| s.1).fold(f64::MIN, f64::max);
            1e3 * (hi - lo).max(1.0)
        });
        let fitness: Vec<(MixedPoint, f64)> = scored
            .into_iter()
            .map(|(w, f, violation)| (w, -(f + rho_now * violation)))
            .collect();
        pop = ga::evolve_step(&fitness, &problem.space, &cfg, &mut rng);
    }
    record
}
