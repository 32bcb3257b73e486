//! Sparsity diagnosis by subsampling: edge densities of (p,1)- and
//! (1,q)-subsamples plotted against the sampling level, with a dense/sparse
//! verdict.
//!
//! For a dense generative process the edge density of subsamples is flat in
//! the sampling level; for a sparse one it rises as the level shrinks, so
//! the profile of densities over levels is a signature of sparsity readable
//! from a single fixed-size graph.

use alloc::vec::Vec;
use core::fmt;

use crate::graph::{pq_sample, BipartiteGraph, GraphError};
use crate::math::mean_sd;
use crate::rng::hash3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    User,
    Item,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::User => write!(f, "user"),
            Side::Item => write!(f, "item"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SparsityError {
    BadLevels,
    BadReps(u32),
    TooFewLevels(usize),
    Graph(GraphError),
}

impl fmt::Display for SparsityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SparsityError::BadLevels => {
                write!(f, "levels must be strictly increasing within (0, 1] and include 1.0")
            }
            SparsityError::BadReps(r) => write!(f, "reps must be >= 1, got {r}"),
            SparsityError::TooFewLevels(n) => write!(f, "classification needs >= 4 levels, got {n}"),
            SparsityError::Graph(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SparsityError {}

impl From<GraphError> for SparsityError {
    fn from(e: GraphError) -> Self {
        SparsityError::Graph(e)
    }
}

/// Sampling level versus mean/sd edge density over replicates, for one side.
///
/// `valid_reps[l]` counts the replicates at level `l` that produced a
/// nonempty sample; a level where every replicate came out empty keeps its
/// slot with NaN statistics rather than being dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub side: Side,
    pub levels: Vec<f64>,
    pub mean_density: Vec<f64>,
    pub sd_density: Vec<f64>,
    pub valid_reps: Vec<u32>,
    pub reps: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Dense,
    Sparse,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Dense => write!(f, "dense"),
            Verdict::Sparse => write!(f, "sparse"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Default sampling levels 0.1, 0.2, ..., 1.0.
pub fn default_levels() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Default tolerance on "approximately constant" relative deviation.
pub const DEFAULT_FLAT_TOL: f64 = 0.15;

const TAG_REP: u64 = 0x7370_5250;

/// Density of one seeded subsample replicate at the given level; `None` when
/// the subsample is empty.
pub fn density_replicate(g: &BipartiteGraph, side: Side, level: f64, seed: u64, rep: u32) -> Option<f64> {
    let rep_seed = hash3(seed, TAG_REP, rep as u64);
    let (p, q) = match side {
        Side::User => (level, 1.0),
        Side::Item => (1.0, level),
    };
    let (sub, _) = pq_sample(g, p, q, rep_seed).expect("levels validated by caller");
    sub.edge_density()
}

/// Edge-density profile over sampling levels: for each level and replicate,
/// the density of a `(level, 1)`-sample (user side) or `(1, level)`-sample
/// (item side), aggregated to a per-level mean and sd over the nonempty
/// replicates. Deterministic given the seed.
pub fn density_profile(
    g: &BipartiteGraph,
    side: Side,
    levels: &[f64],
    reps: u32,
    seed: u64,
) -> Result<DensityCurve, SparsityError> {
    validate_levels(levels)?;
    if reps < 1 {
        return Err(SparsityError::BadReps(reps));
    }
    let mut mean_density = Vec::with_capacity(levels.len());
    let mut sd_density = Vec::with_capacity(levels.len());
    let mut valid_reps = Vec::with_capacity(levels.len());
    for (li, &level) in levels.iter().enumerate() {
        let mut densities = Vec::with_capacity(reps as usize);
        for r in 0..reps {
            let rep = (li as u32) * reps + r;
            if let Some(d) = density_replicate(g, side, level, seed, rep) {
                densities.push(d);
            }
        }
        valid_reps.push(densities.len() as u32);
        let (m, s) = mean_sd(&densities);
        mean_density.push(m);
        sd_density.push(s);
    }
    Ok(DensityCurve { side, levels: levels.to_vec(), mean_density, sd_density, valid_reps, reps, seed })
}

/// Levels must be strictly increasing within (0, 1] and end at 1.0.
pub fn validate_levels(levels: &[f64]) -> Result<(), SparsityError> {
    if levels.is_empty() || levels.last() != Some(&1.0) {
        return Err(SparsityError::BadLevels);
    }
    let mut prev = 0.0;
    for &l in levels {
        if !(l > prev && l <= 1.0) || !l.is_finite() {
            return Err(SparsityError::BadLevels);
        }
        prev = l;
    }
    Ok(())
}

/// Classify a density curve.
///
/// * `Dense` when every level's mean density deviates from the level-1.0
///   density by at most `flat_tol` relatively.
/// * `Sparse` when the mean density decreases at every consecutive level
///   beyond noise (each drop exceeds twice the pooled standard error) and
///   the total relative drop exceeds `flat_tol`.
/// * `Inconclusive` otherwise.
///
/// Levels where every replicate was empty are ignored.
pub fn classify(curve: &DensityCurve, flat_tol: f64) -> Result<Verdict, SparsityError> {
    if curve.levels.len() < 4 {
        return Err(SparsityError::TooFewLevels(curve.levels.len()));
    }
    let idx: Vec<usize> = (0..curve.levels.len()).filter(|&i| curve.valid_reps[i] > 0).collect();
    if idx.len() < 2 {
        return Ok(Verdict::Inconclusive);
    }
    let last = *idx.last().unwrap();
    debug_assert_eq!(curve.levels[last], 1.0);
    let reference = curve.mean_density[last];

    let dense = idx
        .iter()
        .all(|&i| libm::fabs(curve.mean_density[i] - reference) <= flat_tol * reference);
    if dense {
        return Ok(Verdict::Dense);
    }

    let mut decreasing = true;
    for w in idx.windows(2) {
        let (i, j) = (w[0], w[1]);
        let se_i = curve.sd_density[i] / libm::sqrt(curve.valid_reps[i] as f64);
        let se_j = curve.sd_density[j] / libm::sqrt(curve.valid_reps[j] as f64);
        let pooled = libm::sqrt(se_i * se_i + se_j * se_j);
        if curve.mean_density[i] - curve.mean_density[j] <= 2.0 * pooled {
            decreasing = false;
            break;
        }
    }
    let total_drop = (curve.mean_density[idx[0]] - reference) / reference;
    if decreasing && total_drop > flat_tol {
        return Ok(Verdict::Sparse);
    }
    Ok(Verdict::Inconclusive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BipartiteGraph;

    fn complete(nu: u32, ni: u32) -> BipartiteGraph {
        let mut edges = Vec::new();
        for u in 0..nu {
            for i in 0..ni {
                edges.push((u, i));
            }
        }
        BipartiteGraph::from_edges(&edges)
    }

    fn synthetic_curve(means: &[f64], sds: &[f64]) -> DensityCurve {
        let n = means.len();
        DensityCurve {
            side: Side::User,
            levels: (1..=n).map(|i| i as f64 / n as f64).collect(),
            mean_density: means.to_vec(),
            sd_density: sds.to_vec(),
            valid_reps: vec![10; n],
            reps: 10,
            seed: 0,
        }
    }

    #[test]
    fn level_one_reproduces_graph_density_exactly() {
        let g = complete(5, 7);
        let curve = density_profile(&g, Side::User, &default_levels(), 6, 3).unwrap();
        let last = curve.levels.len() - 1;
        assert_eq!(curve.mean_density[last], g.edge_density().unwrap());
        assert_eq!(curve.sd_density[last], 0.0);
        assert_eq!(curve.valid_reps[last], 6);
    }

    #[test]
    fn complete_graph_is_dense_at_every_level() {
        let g = complete(30, 30);
        let curve = density_profile(&g, Side::Item, &default_levels(), 8, 11).unwrap();
        for (i, &m) in curve.mean_density.iter().enumerate() {
            if curve.valid_reps[i] > 0 {
                assert!((m - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(classify(&curve, DEFAULT_FLAT_TOL).unwrap(), Verdict::Dense);
    }

    #[test]
    fn halving_curve_classifies_sparse() {
        let means = [1.6, 0.8, 0.4, 0.2, 0.1];
        let sds = [0.0; 5];
        let curve = synthetic_curve(&means, &sds);
        assert_eq!(classify(&curve, 0.15).unwrap(), Verdict::Sparse);
    }

    #[test]
    fn flat_curve_classifies_dense_and_noisy_is_inconclusive() {
        let curve = synthetic_curve(&[0.5, 0.5, 0.5, 0.5], &[0.0; 4]);
        assert_eq!(classify(&curve, 0.15).unwrap(), Verdict::Dense);
        // Big drop but noisy consecutive steps: inconclusive.
        let curve = synthetic_curve(&[1.0, 0.9, 0.95, 0.5], &[0.5; 4]);
        assert_eq!(classify(&curve, 0.15).unwrap(), Verdict::Inconclusive);
    }

    #[test]
    fn classify_requires_four_levels() {
        let curve = synthetic_curve(&[1.0, 0.5, 0.25], &[0.0; 3]);
        assert!(matches!(classify(&curve, 0.15), Err(SparsityError::TooFewLevels(3))));
    }

    #[test]
    fn all_empty_levels_are_flagged_not_dropped() {
        // A single-edge graph at level 0.05 yields an empty sample whenever
        // the lone user is dropped; with one user the level keeps its slot.
        let g = BipartiteGraph::from_edges(&[(0, 0)]);
        let levels = [0.001, 0.5, 0.9, 1.0];
        let curve = density_profile(&g, Side::User, &levels, 12, 5).unwrap();
        assert_eq!(curve.levels.len(), 4);
        assert!(curve.valid_reps[0] < 12);
        if curve.valid_reps[0] == 0 {
            assert!(curve.mean_density[0].is_nan());
        }
    }

    #[test]
    fn profile_is_deterministic() {
        let g = complete(20, 10);
        let a = density_profile(&g, Side::User, &default_levels(), 5, 42).unwrap();
        let b = density_profile(&g, Side::User, &default_levels(), 5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_levels_and_reps() {
        let g = complete(2, 2);
        assert!(density_profile(&g, Side::User, &[0.5, 0.4, 1.0], 3, 0).is_err());
        assert!(density_profile(&g, Side::User, &[0.5, 0.9], 3, 0).is_err());
        assert!(density_profile(&g, Side::User, &[], 3, 0).is_err());
        assert!(density_profile(&g, Side::User, &default_levels(), 0, 0).is_err());
    }
}
