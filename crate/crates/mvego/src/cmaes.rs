//! Covariance matrix adaptation evolution strategy, (mu/mu_w, lambda)
//! variant with weighted recombination, cumulative step-size adaptation, and
//! rank-1 plus rank-mu covariance updates.
//!
//! The implementation follows Hansen's tutorial parameter settings. Box
//! constraints are handled by resampling an out-of-box candidate a few times
//! and clipping if resampling keeps failing. When the run stagnates or the
//! step size collapses while budget remains, the search restarts from a
//! fresh random mean.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct CmaOptions {
    /// Population size; default 4 + floor(3 ln d).
    pub lambda: Option<usize>,
    /// Initial step size as a fraction of the search range.
    pub sigma0: f64,
    /// Total evaluation budget across restarts.
    pub max_evals: usize,
    /// Extra fresh starts allowed after the first run terminates early.
    pub restarts: usize,
    /// Inclusive box per dimension; `None` leaves the search unbounded.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for CmaOptions {
    fn default() -> Self {
        Self { lambda: None, sigma0: 0.3, max_evals: 10_000, restarts: 1, bounds: None }
    }
}

#[derive(Debug, Clone)]
pub struct CmaResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
}

struct Weights {
    w: Vec<f64>,
    mu: usize,
    mu_eff: f64,
}

fn recombination_weights(lambda: usize) -> Weights {
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let mu_eff = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
    Weights { w, mu, mu_eff }
}

/// Minimizes `f` starting from `x0`. Deterministic for a given RNG state;
/// never exceeds `max_evals` objective evaluations.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &CmaOptions,
    rng: &mut ChaCha8Rng,
) -> CmaResult {
    let dim = x0.len();
    assert!(dim >= 1, "dimension must be at least 1");
    let lambda = opts.lambda.unwrap_or(4 + (3.0 * (dim as f64).ln()).floor() as usize).max(4);
    let Weights { w, mu, mu_eff } = recombination_weights(lambda);

    let n = dim as f64;
    let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * ((mu_eff - 1.0) / (n + 1.0)).sqrt().max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
    let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
    let c_mu = (2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff)).min(1.0 - c_1);
    let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    let mut best_x = x0.to_vec();
    let mut best_value = f64::INFINITY;
    let mut evals = 0usize;
    let mut restarts_left = opts.restarts;
    let mut mean = DVector::from_column_slice(x0);

    'run: loop {
        let mut sigma = opts.sigma0;
        let mut cov = DMatrix::<f64>::identity(dim, dim);
        let mut p_sigma = DVector::<f64>::zeros(dim);
        let mut p_c = DVector::<f64>::zeros(dim);
        let mut gen: usize = 0;
        let hist_len = 10 + (30.0 * n / lambda as f64).ceil() as usize;
        let mut value_history: Vec<f64> = Vec::new();

        loop {
            if evals >= opts.max_evals {
                break 'run;
            }
            // eigendecomposition of C = B D^2 B^T
            cov = (cov.clone() + cov.transpose()) * 0.5;
            let eig = cov.clone().symmetric_eigen();
            let eigvals: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(1e-20)).collect();
            let d_sqrt: Vec<f64> = eigvals.iter().map(|v| v.sqrt()).collect();
            let b = &eig.eigenvectors;
            let cond = eigvals.iter().cloned().fold(f64::MIN, f64::max)
                / eigvals.iter().cloned().fold(f64::MAX, f64::min);

            let budget_now = (opts.max_evals - evals).min(lambda);
            let mut population: Vec<(DVector<f64>, f64)> = Vec::with_capacity(budget_now);
            for _ in 0..budget_now {
                let zv = DVector::from_fn(dim, |i, _| sample_gauss(rng) * d_sqrt[i]);
                let mut x = &mean + b * zv * sigma;
                if let Some(bounds) = &opts.bounds {
                    let mut attempts = 0;
                    while attempts < 16
                        && !x.iter().zip(bounds).all(|(&xi, &(lo, hi))| xi >= lo && xi <= hi)
                    {
                        let zv = DVector::from_fn(dim, |i, _| sample_gauss(rng) * d_sqrt[i]);
                        x = &mean + b * zv * sigma;
                        attempts += 1;
                    }
                    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
                        *xi = xi.clamp(lo, hi);
                    }
                }
                let value = f(x.as_slice());
                evals += 1;
                let value = if value.is_nan() { f64::INFINITY } else { value };
                if value < best_value {
                    best_value = value;
                    best_x = x.as_slice().to_vec();
                }
                population.push((x, value));
            }
            if population.len() < lambda {
                break 'run; // budget exhausted mid-generation
            }
            population.sort_by(|a, b| a.1.total_cmp(&b.1));
            gen += 1;

            let old_mean = mean.clone();
            mean = DVector::zeros(dim);
            for (i, wi) in w.iter().enumerate() {
                mean += &population[i].0 * *wi;
            }

            // step-size path uses C^-1/2 (y = B D^-1 B^T displacement)
            let displacement = (&mean - &old_mean) / sigma;
            let bt_disp = b.transpose() * &displacement;
            let whitened = b * DVector::from_fn(dim, |i, _| bt_disp[i] / d_sqrt[i]);
            p_sigma = (1.0 - c_sigma) * &p_sigma
                + (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt() * whitened;

            let ps_norm = p_sigma.norm();
            let h_sigma = if ps_norm
                / (1.0 - (1.0 - c_sigma).powi(2 * gen as i32)).sqrt()
                < (1.4 + 2.0 / (n + 1.0)) * chi_n
            {
                1.0
            } else {
                0.0
            };
            p_c = (1.0 - c_c) * &p_c
                + h_sigma * (c_c * (2.0 - c_c) * mu_eff).sqrt() * &displacement;

            let mut rank_mu = DMatrix::<f64>::zeros(dim, dim);
            for (i, wi) in w.iter().enumerate() {
                let yi = (&population[i].0 - &old_mean) / sigma;
                rank_mu += *wi * (&yi * yi.transpose());
            }
            let delta_h = (1.0 - h_sigma) * c_c * (2.0 - c_c);
            cov = (1.0 - c_1 - c_mu) * cov
                + c_1 * ((&p_c * p_c.transpose()) + delta_h * cov.clone())
                + c_mu * rank_mu;

            sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).exp();
            sigma = sigma.clamp(1e-16, 1e4);

            value_history.push(population[0].1);
            if value_history.len() > hist_len {
                value_history.remove(0);
            }
            let stagnant = value_history.len() == hist_len && {
                let lo = value_history.iter().cloned().fold(f64::MAX, f64::min);
                let hi = value_history.iter().cloned().fold(f64::MIN, f64::max);
                hi - lo < 1e-12 * hi.abs().max(1.0)
            };
            let collapsed = sigma * d_sqrt.iter().cloned().fold(f64::MIN, f64::max) < 1e-12;

            if stagnant || collapsed || cond > 1e14 {
                if restarts_left == 0 || evals >= opts.max_evals {
                    break 'run;
                }
                restarts_left -= 1;
                mean = match &opts.bounds {
                    Some(bounds) => DVector::from_fn(dim, |i, _| {
                        rng.random_range(bounds[i].0..bounds[i].1)
                    }),
                    None => DVector::from_fn(dim, |i, _| best_x[i] + rng.random_range(-1.0..1.0)),
                };
                continue 'run;
            }
        }
    }

    CmaResult { best_x, best_value, evaluations: evals }
}

/// Standard normal draw via Box-Muller (polar form kept out for simplicity;
/// two uniforms per call is fine at this scale).
fn sample_gauss(rng: &mut ChaCha8Rng) -> f64 {
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

    #[test]
    fn sphere_six_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let opts = CmaOptions {
            max_evals: 3000,
            bounds: Some(vec![(-5.0, 5.0); 6]),
            ..CmaOptions::default()
        };
        let res = minimize(
            |x| x.iter().map(|v| v * v).sum(),
            &[3.0, -2.0, 4.0, 1.0, -4.5, 2.5],
            &opts,
            &mut rng,
        );
        assert!(res.best_value < 1e-6, "best {}", res.best_value);
        assert!(res.evaluations <= 3000);
    }

    #[test]
    fn rosenbrock_four_dimensions() {
        let rosenbrock = |x: &[f64]| -> f64 {
            x.windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let opts = CmaOptions {
            max_evals: 10_000,
            bounds: Some(vec![(-2.0, 2.0); 4]),
            ..CmaOptions::default()
        };
        let res = minimize(rosenbrock, &[-1.0, 0.5, -0.5, 1.5], &opts, &mut rng);
        assert!(res.best_value < 1e-3, "best {}", res.best_value);
        assert!(res.evaluations <= 10_000);
    }

    #[test]
    fn constant_objective_returns_valid_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let opts = CmaOptions {
            max_evals: 500,
            bounds: Some(vec![(0.0, 1.0); 3]),
            ..CmaOptions::default()
        };
        let res = minimize(|_| 4.2, &[0.5, 0.5, 0.5], &opts, &mut rng);
        assert_eq!(res.best_value, 4.2);
        assert!(res.best_x.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(res.evaluations <= 500);
    }

    #[test]
    fn respects_exact_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut count = 0usize;
        let opts = CmaOptions {
            max_evals: 137,
            bounds: Some(vec![(0.0, 1.0); 2]),
            ..CmaOptions::default()
        };
        let _ = minimize(
            |x| {
                count += 1;
                (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2)
            },
            &[0.5, 0.5],
            &opts,
            &mut rng,
        );
        assert!(count <= 137);
    }

    #[test]
    fn deterministic_given_seed() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let opts = CmaOptions {
                max_evals: 600,
                bounds: Some(vec![(-1.0, 1.0); 3]),
                ..CmaOptions::default()
            };
            minimize(|x| x.iter().map(|v| (v - 0.2).powi(2)).sum(), &[0.0; 3], &opts, &mut rng)
        };
        let a = run();
        let b = run();
        assert_eq!(a.best_x, b.best_x);
        assert_eq!(a.best_value, b.best_value);
    }

    #[test]
    fn infinite_values_are_rejected_candidates() {
        // objective rejects half the box with +inf; optimizer still improves
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let opts = CmaOptions {
            max_evals: 2000,
            bounds: Some(vec![(0.0, 1.0); 2]),
            ..CmaOptions::default()
        };
        let res = minimize(
            |x| {
                if x[0] < 0.5 {
                    f64::INFINITY
                } else {
                    (x[0] - 0.7).powi(2) + (x[1] - 0.4).powi(2)
                }
            },
            &[0.6, 0.5],
            &opts,
            &mut rng,
        );
        assert!(res.best_value < 1e-4, "best {}", res.best_value);
    }
}
