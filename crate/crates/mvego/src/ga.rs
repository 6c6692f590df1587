//! Mixed continuous/discrete genetic algorithm.
//!
//! Tournament selection (size 3) with single-member elitism; continuous
//! genes recombine by blend crossover and mutate with a bounded Gaussian
//! step (sigma = 10% of the variable range), discrete genes recombine by
//! uniform crossover and mutate by uniform resampling. Operators never
//! produce a point outside the space.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::space::{MixedPoint, MixedSpace};

#[derive(Debug, Clone)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    /// Stop after this many generations without improvement of the
    /// population best; `usize::MAX` disables the stall criterion.
    pub stall_generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob_continuous: f64,
    pub mutation_prob_discrete: f64,
    pub tournament_size: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 50,
            stall_generations: 15,
            crossover_prob: 0.9,
            mutation_prob_continuous: 0.2,
            mutation_prob_discrete: 0.2,
            tournament_size: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaRun {
    pub best: MixedPoint,
    pub best_value: f64,
    pub evaluations: usize,
    /// Population best per generation (non-decreasing under elitism).
    pub best_history: Vec<f64>,
}

fn tournament<'a, R: Rng>(
    scored: &'a [(MixedPoint, f64)],
    size: usize,
    rng: &mut R,
) -> &'a MixedPoint {
    let mut best: Option<&(MixedPoint, f64)> = None;
    for _ in 0..size {
        let candidate = scored.choose(rng).expect("population is nonempty");
        if best.is_none_or(|b| candidate.1 > b.1) {
            best = Some(candidate);
        }
    }
    &best.expect("tournament ran").0
}

fn blend_crossover<R: Rng>(a: f64, b: f64, (lo, hi): (f64, f64), rng: &mut R) -> f64 {
    let d = (a - b).abs();
    let lo_c = (a.min(b) - 0.5 * d).max(lo);
    let hi_c = (a.max(b) + 0.5 * d).min(hi);
    if hi_c > lo_c {
        rng.random_range(lo_c..hi_c)
    } else {
        lo_c
    }
}

/// Produces the next population from a scored one: the best member first
/// (elitism), then offspring from tournament selection, crossover, and
/// mutation. Fitness is maximized.
pub fn evolve_step(
    scored: &[(MixedPoint, f64)],
    space: &MixedSpace,
    cfg: &GaConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<MixedPoint> {
    let elite = scored
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("population is nonempty")
        .0
        .clone();
    let mut next = Vec::with_capacity(scored.len());
    next.push(elite);
    while next.len() < scored.len() {
        let p1 = tournament(scored, cfg.tournament_size, rng).clone();
        let p2 = tournament(scored, cfg.tournament_size, rng).clone();
        let mut child = p1.clone();
        if rng.random_range(0.0..1.0) < cfg.crossover_prob {
            for k in 0..space.continuous_dim() {
                child.x[k] = blend_crossover(p1.x[k], p2.x[k], space.bounds()[k], rng);
            }
            for s in 0..space.discrete_dim() {
                if rng.random_bool(0.5) {
                    child.z[s] = p2.z[s];
                }
            }
        }
        for k in 0..space.continuous_dim() {
            if rng.random_range(0.0..1.0) < cfg.mutation_prob_continuous {
                let (lo, hi) = space.bounds()[k];
                let step = 0.1 * (hi - lo) * gauss(rng);
                child.x[k] = (child.x[k] + step).clamp(lo, hi);
            }
        }
        for s in 0..space.discrete_dim() {
            if rng.random_range(0.0..1.0) < cfg.mutation_prob_discrete {
                child.z[s] = rng.random_range(0..space.levels()[s]);
            }
        }
        next.push(child);
    }
    next
}

/// Maximizes `f` over the space. Every member of every generation is
/// evaluated, so the evaluation count is exactly
/// `population * generations_run`. NaN fitness is treated as -inf.
pub fn maximize<F: FnMut(&MixedPoint) -> f64>(
    space: &MixedSpace,
    cfg: &GaConfig,
    rng: &mut ChaCha8Rng,
    mut f: F,
) -> GaRun {
    assert!(cfg.population >= 2, "population must be at least 2");
    let mut population: Vec<MixedPoint> =
        (0..cfg.population).map(|_| space.sample_uniform(rng)).collect();
    let mut best: Option<(MixedPoint, f64)> = None;
    let mut evaluations = 0usize;
    let mut best_history = Vec::with_capacity(cfg.generations);
    let mut stall = 0usize;

    for _ in 0..cfg.generations {
        let scored: Vec<(MixedPoint, f64)> = population
            .drain(..)
            .map(|p| {
                let v = f(&p);
                evaluations += 1;
                (p, if v.is_nan() { f64::NEG_INFINITY } else { v })
            })
            .collect();
        let gen_best = scored
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("population is nonempty");
        let improved = best.as_ref().is_none_or(|(_, v)| gen_best.1 > *v);
        if improved {
            best = Some(gen_best.clone());
            stall = 0;
        } else {
            stall += 1;
        }
        best_history.push(best.as_ref().expect("set above").1);
        if stall >= cfg.stall_generations {
            break;
        }
        population = evolve_step(&scored, space, cfg, rng);
    }

    let (best, best_value) = best.expect("at least one generation ran");
    GaRun { best, best_value, evaluations, best_history }
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.random_range(0.0..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        if u1 > 1e-300 {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn space() -> MixedSpace {
        MixedSpace::new(vec![(0.0, 1.0), (-2.0, 2.0)], vec![3, 2]).unwrap()
    }

    #[test]
    fn all_points_stay_in_space() {
        let space = space();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = GaConfig { population: 20, generations: 30, ..GaConfig::default() };
        let run = maximize(&space, &cfg, &mut rng, |w| {
            assert!(space.contains(w), "GA produced {w:?}");
            -w.x[0]
        });
        assert!(space.contains(&run.best));
    }

    #[test]
    fn best_history_is_non_decreasing() {
        let space = space();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = GaConfig { population: 16, generations: 40, ..GaConfig::default() };
        let run = maximize(&space, &cfg, &mut rng, |w| {
            -(w.x[0] - 0.3).powi(2) - (w.x[1] - 1.0).powi(2) + w.z[0] as f64
        });
        for pair in run.best_history.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
    }

    #[test]
    fn finds_dominant_category_and_optimum_region() {
        let space = space();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = GaConfig { population: 40, generations: 60, ..GaConfig::default() };
        let run = maximize(&space, &cfg, &mut rng, |w| {
            let bump = -(w.x[0] - 0.6).powi(2) - 0.1 * (w.x[1] + 1.0).powi(2);
            bump + if w.z == [2, 1] { 1.0 } else { 0.0 }
        });
        assert_eq!(run.best.z, vec![2, 1]);
        assert!((run.best.x[0] - 0.6).abs() < 0.05);
    }

    #[test]
    fn evaluation_count_is_population_times_generations_without_stall() {
        let space = space();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = GaConfig {
            population: 7,
            generations: 9,
            stall_generations: usize::MAX,
            ..GaConfig::default()
        };
        let run = maximize(&space, &cfg, &mut rng, |w| w.x[0]);
        assert_eq!(run.evaluations, 63);
        assert_eq!(run.best_history.len(), 9);
    }

    #[test]
    fn constant_fitness_returns_valid_point() {
        let space = space();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = GaConfig { population: 10, generations: 20, ..GaConfig::default() };
        let run = maximize(&space, &cfg, &mut rng, |_| 0.0);
        assert!(space.contains(&run.best));
        assert_eq!(run.best_value, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let space = space();
        let cfg = GaConfig { population: 12, generations: 15, ..GaConfig::default() };
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            maximize(&space, &cfg, &mut rng, |w| -(w.x[0] - 0.5).powi(2))
        };
        let a = run(9);
        let b = run(9);
        assert_eq!(a.best, b.best);
        assert_eq!(a.best_value, b.best_value);
    }
}
