//! Mixed continuous/discrete search space, points within it, and evaluated
//! datasets.
//!
//! Discrete variables are nominal: levels are plain 0-based indices and carry
//! no order or metric. A *category* is one combination of levels across all
//! discrete dimensions; categories are enumerated row-major over the level
//! tuples.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("continuous dimension {index}: lower bound {lower} must be < upper bound {upper}")]
    InvalidBound { index: usize, lower: f64, upper: f64 },
    #[error("discrete dimension {index} must have at least one level")]
    NoLevels { index: usize },
    #[error("category count overflows usize")]
    CategoryOverflow,
    #[error("level {level} out of range for discrete dimension {index} ({levels} levels)")]
    LevelOutOfRange { index: usize, level: usize, levels: usize },
    #[error("category index {index} out of range ({count} categories)")]
    CategoryOutOfRange { index: usize, count: usize },
    #[error("expected {expected} level indices, got {got}")]
    LevelTupleLength { expected: usize, got: usize },
    #[error("sample count must be at least 1")]
    EmptyDesign,
    #[error("dataset rows are inconsistent: {0}")]
    InconsistentDataset(String),
}

/// One candidate point: continuous coordinates `x` plus discrete level
/// indices `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedPoint {
    pub x: Vec<f64>,
    pub z: Vec<usize>,
}

impl MixedPoint {
    pub fn new(x: Vec<f64>, z: Vec<usize>) -> Self {
        Self { x, z }
    }

    /// Continuous-only point.
    pub fn continuous(x: Vec<f64>) -> Self {
        Self { x, z: Vec::new() }
    }
}

/// Bounds per continuous dimension and level counts per discrete dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedSpace {
    bounds: Vec<(f64, f64)>,
    levels: Vec<usize>,
}

impl MixedSpace {
    pub fn new(bounds: Vec<(f64, f64)>, levels: Vec<usize>) -> Result<Self, SpaceError> {
        for (index, &(lower, upper)) in bounds.iter().enumerate() {
            if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                return Err(SpaceError::InvalidBound { index, lower, upper });
            }
        }
        for (index, &b) in levels.iter().enumerate() {
            if b < 1 {
                return Err(SpaceError::NoLevels { index });
            }
        }
        let space = Self { bounds, levels };
        space.try_category_count()?;
        Ok(space)
    }

    /// Space with no discrete dimensions.
    pub fn continuous_only(bounds: Vec<(f64, f64)>) -> Result<Self, SpaceError> {
        Self::new(bounds, Vec::new())
    }

    /// Number of continuous dimensions (q).
    pub fn continuous_dim(&self) -> usize {
        self.bounds.len()
    }

    /// Number of discrete dimensions (r).
    pub fn discrete_dim(&self) -> usize {
        self.levels.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn range(&self, k: usize) -> f64 {
        self.bounds[k].1 - self.bounds[k].0
    }

    fn try_category_count(&self) -> Result<usize, SpaceError> {
        self.levels
            .iter()
            .try_fold(1usize, |acc, &b| acc.checked_mul(b))
            .ok_or(SpaceError::CategoryOverflow)
    }

    /// Total number of categorical combinations, m = prod(b_k).
    pub fn category_count(&self) -> usize {
        // overflow ruled out at construction
        self.levels.iter().product::<usize>().max(1)
    }

    /// Flat category index of a level tuple, row-major over (z_1..z_r).
    pub fn encode_category(&self, z: &[usize]) -> Result<usize, SpaceError> {
        if z.len() != self.levels.len() {
            return Err(SpaceError::LevelTupleLength {
                expected: self.levels.len(),
                got: z.len(),
            });
        }
        let mut index = 0usize;
        for (k, (&level, &b)) in z.iter().zip(&self.levels).enumerate() {
            if level >= b {
                return Err(SpaceError::LevelOutOfRange { index: k, level, levels: b });
            }
            index = index * b + level;
        }
        Ok(index)
    }

    /// Level tuple for a flat category index; inverse of [`encode_category`].
    ///
    /// [`encode_category`]: MixedSpace::encode_category
    pub fn decode_category(&self, mut index: usize) -> Result<Vec<usize>, SpaceError> {
        let count = self.category_count();
        if index >= count {
            return Err(SpaceError::CategoryOutOfRange { index, count });
        }
        let mut z = vec![0usize; self.levels.len()];
        for k in (0..self.levels.len()).rev() {
            z[k] = index % self.levels[k];
            index /= self.levels[k];
        }
        Ok(z)
    }

    /// Whether the point lies within bounds and level ranges.
    pub fn contains(&self, w: &MixedPoint) -> bool {
        w.x.len() == self.bounds.len()
            && w.z.len() == self.levels.len()
            && w.x
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
            && w.z.iter().zip(&self.levels).all(|(&z, &b)| z < b)
    }

    /// Uniform random point in the space.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> MixedPoint {
        let x = self
            .bounds
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect();
        let z = self.levels.iter().map(|&b| rng.random_range(0..b)).collect();
        MixedPoint::new(x, z)
    }

    /// Uniform random continuous coordinates within a fixed category.
    pub fn sample_in_category<R: Rng>(&self, category: usize, rng: &mut R) -> MixedPoint {
        let z = self.decode_category(category).expect("category in range");
        let x = self
            .bounds
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect();
        MixedPoint::new(x, z)
    }
}

/// Evaluated sample set: points, objective values, and constraint values
/// (one row of `n_g` entries per point, engine convention g <= 0 feasible).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<MixedPoint>,
    objective: Vec<f64>,
    constraints: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(
        points: Vec<MixedPoint>,
        objective: Vec<f64>,
        constraints: Vec<Vec<f64>>,
    ) -> Result<Self, SpaceError> {
        if points.len() != objective.len() || points.len() != constraints.len() {
            return Err(SpaceError::InconsistentDataset(format!(
                "{} points, {} objectives, {} constraint rows",
                points.len(),
                objective.len(),
                constraints.len()
            )));
        }
        if let Some(first) = constraints.first() {
            let n_g = first.len();
            if constraints.iter().any(|row| row.len() != n_g) {
                return Err(SpaceError::InconsistentDataset(
                    "constraint rows have differing lengths".into(),
                ));
            }
        }
        Ok(Self { points, objective, constraints })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[MixedPoint] {
        &self.points
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Vec<f64>] {
        &self.constraints
    }

    pub fn push(&mut self, point: MixedPoint, objective: f64, constraints: Vec<f64>) {
        self.points.push(point);
        self.objective.push(objective);
        self.constraints.push(constraints);
    }

    /// Column of values for constraint `i`.
    pub fn constraint_column(&self, i: usize) -> Vec<f64> {
        self.constraints.iter().map(|row| row[i]).collect()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.first().map_or(0, Vec::len)
    }

    /// Indices of rows feasible at tolerance `tol` (all g_i <= tol).
    pub fn feasible_rows(&self, tol: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.constraints[i].iter().all(|&g| g <= tol))
            .collect()
    }

    /// Best (minimum objective) feasible row, if any.
    pub fn best_feasible(&self, tol: f64) -> Option<(usize, f64)> {
        self.feasible_rows(tol)
            .into_iter()
            .map(|i| (i, self.objective[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Initial design of experiments: a stochastic Latin hypercube over the
/// continuous box, with categories assigned as evenly as possible (each gets
/// floor(n/m) or ceil(n/m) samples; the categories receiving the remainder
/// are drawn uniformly at random).
pub fn lhs_initial_doe<R: Rng>(
    space: &MixedSpace,
    n_total: usize,
    rng: &mut R,
) -> Result<Vec<MixedPoint>, SpaceError> {
    if n_total < 1 {
        return Err(SpaceError::EmptyDesign);
    }
    let m = space.category_count();
    if n_total < m {
        log::warn!(
            "initial design of {n_total} samples is smaller than the {m} categories; \
             some categories will be unrepresented"
        );
    }

    // Continuous part: one point per stratum per dimension, uniform within
    // the stratum, strata shuffled independently per dimension.
    let q = space.continuous_dim();
    let mut coords = vec![vec![0.0f64; n_total]; q];
    for (k, column) in coords.iter_mut().enumerate() {
        let (lo, hi) = space.bounds()[k];
        let width = (hi - lo) / n_total as f64;
        let mut strata: Vec<usize> = (0..n_total).collect();
        strata.shuffle(rng);
        for (i, &s) in strata.iter().enumerate() {
            let u: f64 = rng.random_range(0.0..1.0);
            column[i] = lo + (s as f64 + u) * width;
        }
    }

    // Discrete part: even assignment with random remainder categories.
    let base = n_total / m;
    let remainder = n_total % m;
    let mut categories = Vec::with_capacity(n_total);
    for c in 0..m {
        for _ in 0..base {
            categories.push(c);
        }
    }
    if remainder > 0 {
        let mut extra: Vec<usize> = (0..m).collect();
        extra.shuffle(rng);
        categories.extend(extra.into_iter().take(remainder));
    }
    categories.shuffle(rng);

    let mut points = Vec::with_capacity(n_total);
    for (i, &c) in categories.iter().enumerate() {
        let x: Vec<f64> = (0..q).map(|k| coords[k][i]).collect();
        let z = space.decode_category(c)?;
        points.push(MixedPoint::new(x, z));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn category_counts_match_known_spaces() {
        let s = MixedSpace::new(vec![(0.0, 1.0); 2], vec![2, 2]).unwrap();
        assert_eq!(s.category_count(), 4);
        let s = MixedSpace::new(vec![(0.0, 100.0); 2], vec![3, 3]).unwrap();
        assert_eq!(s.category_count(), 9);
        let s = MixedSpace::new(vec![(0.0, 1.0); 4], vec![4, 2, 3]).unwrap();
        assert_eq!(s.category_count(), 24);
    }

    #[test]
    fn encode_is_row_major() {
        let s = MixedSpace::new(vec![], vec![2, 2]).unwrap();
        assert_eq!(s.encode_category(&[0, 0]).unwrap(), 0);
        assert_eq!(s.encode_category(&[1, 1]).unwrap(), 3);
        assert_eq!(s.encode_category(&[0, 1]).unwrap(), 1);
    }

    #[test]
    fn encode_decode_bijection_3x3() {
        let s = MixedSpace::new(vec![], vec![3, 3]).unwrap();
        let mut seen = vec![false; 9];
        for z1 in 0..3 {
            for z2 in 0..3 {
                let c = s.encode_category(&[z1, z2]).unwrap();
                assert!(!seen[c], "index {c} hit twice");
                seen[c] = true;
                assert_eq!(s.decode_category(c).unwrap(), vec![z1, z2]);
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn encode_rejects_out_of_range_level() {
        let s = MixedSpace::new(vec![], vec![2, 2]).unwrap();
        assert!(matches!(
            s.encode_category(&[0, 2]),
            Err(SpaceError::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(MixedSpace::new(vec![(1.0, 1.0)], vec![]).is_err());
        assert!(MixedSpace::new(vec![(2.0, 1.0)], vec![]).is_err());
        assert!(MixedSpace::new(vec![(0.0, 1.0)], vec![0]).is_err());
    }

    #[test]
    fn lhs_even_assignment_20_over_4() {
        let s = MixedSpace::new(vec![(0.0, 1.0); 2], vec![2, 2]).unwrap();
        let pts = lhs_initial_doe(&s, 20, &mut rng(1)).unwrap();
        let mut counts = vec![0usize; 4];
        for p in &pts {
            counts[s.encode_category(&p.z).unwrap()] += 1;
        }
        assert_eq!(counts, vec![5, 5, 5, 5]);
    }

    #[test]
    fn lhs_even_assignment_27_over_9() {
        let s = MixedSpace::new(vec![(0.0, 100.0); 2], vec![3, 3]).unwrap();
        let pts = lhs_initial_doe(&s, 27, &mut rng(2)).unwrap();
        let mut counts = vec![0usize; 9];
        for p in &pts {
            counts[s.encode_category(&p.z).unwrap()] += 1;
        }
        assert_eq!(counts, vec![3; 9]);
    }

    #[test]
    fn lhs_remainder_counts_differ_by_at_most_one() {
        let s = MixedSpace::new(vec![(0.0, 1.0)], vec![2, 2]).unwrap();
        let pts = lhs_initial_doe(&s, 5, &mut rng(3)).unwrap();
        let mut counts = vec![0usize; 4];
        for p in &pts {
            counts[s.encode_category(&p.z).unwrap()] += 1;
        }
        counts.sort_unstable();
        assert_eq!(counts, vec![1, 1, 1, 2]);
    }

    #[test]
    fn lhs_marginals_are_stratified() {
        let s = MixedSpace::new(vec![(-2.0, 6.0), (10.0, 11.0)], vec![3]).unwrap();
        let n = 17;
        for seed in 0..5 {
            let pts = lhs_initial_doe(&s, n, &mut rng(seed)).unwrap();
            for k in 0..2 {
                let (lo, hi) = s.bounds()[k];
                let mut hit = vec![false; n];
                for p in &pts {
                    let frac = (p.x[k] - lo) / (hi - lo);
                    let stratum = ((frac * n as f64).floor() as usize).min(n - 1);
                    assert!(!hit[stratum], "dimension {k}: stratum {stratum} hit twice");
                    hit[stratum] = true;
                }
                assert!(hit.iter().all(|&b| b));
            }
        }
    }

    #[test]
    fn lhs_rejects_zero_samples() {
        let s = MixedSpace::new(vec![(0.0, 1.0)], vec![]).unwrap();
        assert!(matches!(
            lhs_initial_doe(&s, 0, &mut rng(0)),
            Err(SpaceError::EmptyDesign)
        ));
    }

    #[test]
    fn dataset_best_feasible_uses_tolerance() {
        let s = MixedSpace::new(vec![(0.0, 1.0)], vec![]).unwrap();
        let pts = lhs_initial_doe(&s, 3, &mut rng(4)).unwrap();
        let ds = Dataset::new(
            pts,
            vec![3.0, 1.0, 2.0],
            vec![vec![0.0], vec![1e-3], vec![-1.0]],
        )
        .unwrap();
        // row 1 violates, rows 0 and 2 feasible
        assert_eq!(ds.best_feasible(1e-9), Some((2, 2.0)));
    }

    #[test]
    fn dataset_rejects_mismatched_lengths() {
        assert!(Dataset::new(vec![], vec![1.0], vec![]).is_err());
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_roundtrip(levels in proptest::collection::vec(1usize..6, 1..4), idx in 0usize..10_000) {
            let space = MixedSpace::new(vec![], levels).unwrap();
            let m = space.category_count();
            let c = idx % m;
            let z = space.decode_category(c).unwrap();
            prop_assert_eq!(space.encode_category(&z).unwrap(), c);
        }

        #[test]
        fn category_assignment_balanced(n in 1usize..60, b1 in 1usize..5, b2 in 1usize..5, seed in 0u64..32) {
            use rand::SeedableRng;
            let space = MixedSpace::new(vec![(0.0, 1.0)], vec![b1, b2]).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts = lhs_initial_doe(&space, n, &mut rng).unwrap();
            let mut counts = vec![0usize; space.category_count()];
            for p in &pts {
                counts[space.encode_category(&p.z).unwrap()] += 1;
            }
            let max = *counts.iter().max().unwrap();
            let min = *counts.iter().min().unwrap();
            prop_assert!(max - min <= 1, "counts {:?}", counts);
            prop_assert_eq!(counts.iter().sum::<usize>(), n);
        }
    }
}
