//! Test-train splitting by subsampling: train is a (p,1)-sample of the
//! source, holdout its complement; test is a (1,q)-sample of the holdout,
//! holdoutfit its complement.
//!
//! The complement shares the Bernoulli draw of its counterpart (one draw per
//! vertex decides the partition), so the four parts partition the source
//! edges exactly. Each part drops its isolated vertices independently; the
//! kept-vertex sets are recorded before removal so the partition invariants
//! stay checkable.

use alloc::vec::Vec;
use core::fmt;

use crate::graph::{check_prob, BipartiteGraph, GraphError, VertexId};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub enum SplitError {
    /// p and q must lie strictly inside (0, 1) so no part is empty by
    /// construction.
    BadProbability { name: &'static str, value: f64 },
    /// One of the four parts came out empty; the caller should adjust p, q.
    EmptyPart { part: &'static str },
    Graph(GraphError),
}

impl fmt::Display for SplitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitError::BadProbability { name, value } => {
                write!(f, "split probability {name}={value} must lie in (0, 1)")
            }
            SplitError::EmptyPart { part } => write!(f, "split produced an empty {part} part"),
            SplitError::Graph(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SplitError {}

/// Sizes attached to a split when the source sizes are known or estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeMap {
    pub s_train: f64,
    pub alpha_train: f64,
    pub s_test: f64,
    pub alpha_test: f64,
}

/// The four split parts plus the sampling record.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub train: BipartiteGraph,
    pub holdout: BipartiteGraph,
    pub test: BipartiteGraph,
    pub holdoutfit: BipartiteGraph,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    /// Users kept for train (pre-removal); the complement went to holdout.
    pub train_users: Vec<VertexId>,
    pub holdout_users: Vec<VertexId>,
    /// Holdout items kept for test (pre-removal); the complement went to
    /// holdoutfit.
    pub test_items: Vec<VertexId>,
    pub holdoutfit_items: Vec<VertexId>,
    pub size_map: Option<SizeMap>,
}

impl SplitBundle {
    /// Attach train/test sizes derived from known source sizes.
    pub fn with_source_sizes(mut self, s: f64, alpha: f64) -> Self {
        let s_train = self.p * s;
        let alpha_train = alpha;
        let (s_test, alpha_test) = test_sizes(s_train, alpha_train, self.p, self.q);
        self.size_map = Some(SizeMap { s_train, alpha_train, s_test, alpha_test });
        self
    }
}

/// Sizes of the test part given the train part's sizes.
///
/// `alpha_test = q * alpha_train`. The user sizes follow the split
/// construction: train occupies user size `p*s` and the holdout (hence the
/// test) the remaining `(1-p)*s`, so `s_test = ((1-p)/p) * s_train`.
pub fn test_sizes(s_train: f64, alpha_train: f64, p: f64, q: f64) -> (f64, f64) {
    (s_train * (1.0 - p) / p, q * alpha_train)
}

const TAG_SPLIT_USER: u64 = 0x7370_5541;
const TAG_SPLIT_ITEM: u64 = 0x7370_4941;

/// Split a graph into train / holdout / test / holdoutfit.
///
/// Step 1 draws one Bernoulli(p) per source user: kept users form train, the
/// rest holdout. Step 2 draws one Bernoulli(q) per holdout item: kept items
/// form test, the rest holdoutfit. Deterministic given the seed.
pub fn split(g: &BipartiteGraph, p: f64, q: f64, seed: u64) -> Result<SplitBundle, SplitError> {
    for (name, v) in [("p", p), ("q", q)] {
        check_prob(name, v).map_err(|_| SplitError::BadProbability { name, value: v })?;
        if v == 0.0 || v == 1.0 {
            return Err(SplitError::BadProbability { name, value: v });
        }
    }

    let keep_user: Vec<bool> = (0..g.num_users())
        .map(|v| rng::unit_at(seed, TAG_SPLIT_USER, v as u64) < p)
        .collect();
    let drop_user: Vec<bool> = keep_user.iter().map(|&k| !k).collect();
    let all_items = alloc::vec![true; g.num_items()];
    let train = g.induced_subgraph(&keep_user, &all_items);
    let holdout = g.induced_subgraph(&drop_user, &all_items);

    let keep_item: Vec<bool> = (0..holdout.num_items())
        .map(|v| rng::unit_at(seed, TAG_SPLIT_ITEM, v as u64) < q)
        .collect();
    let drop_item: Vec<bool> = keep_item.iter().map(|&k| !k).collect();
    let all_holdout_users = alloc::vec![true; holdout.num_users()];
    let test = holdout.induced_subgraph(&all_holdout_users, &keep_item);
    let holdoutfit = holdout.induced_subgraph(&all_holdout_users, &drop_item);

    for (part, graph) in [
        ("train", &train),
        ("holdout", &holdout),
        ("test", &test),
        ("holdoutfit", &holdoutfit),
    ] {
        if graph.is_empty() {
            return Err(SplitError::EmptyPart { part });
        }
    }

    let train_users = mask_ids(g.user_ids(), &keep_user);
    let holdout_users = mask_ids(g.user_ids(), &drop_user);
    let test_items = mask_ids(holdout.item_ids(), &keep_item);
    let holdoutfit_items = mask_ids(holdout.item_ids(), &drop_item);

    Ok(SplitBundle {
        train,
        holdout,
        test,
        holdoutfit,
        p,
        q,
        seed,
        train_users,
        holdout_users,
        test_items,
        holdoutfit_items,
        size_map: None,
    })
}

fn mask_ids(ids: &[VertexId], keep: &[bool]) -> Vec<VertexId> {
    ids.iter().zip(keep).filter(|(_, &k)| k).map(|(&id, _)| id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn complete(nu: u32, ni: u32) -> BipartiteGraph {
        let mut edges = Vec::new();
        for u in 0..nu {
            for i in 0..ni {
                edges.push((u, i));
            }
        }
        BipartiteGraph::from_edges(&edges)
    }

    #[test]
    fn rejects_degenerate_probabilities() {
        let g = complete(4, 4);
        assert!(matches!(split(&g, 1.0, 0.5, 0), Err(SplitError::BadProbability { name: "p", .. })));
        assert!(matches!(split(&g, 0.0, 0.5, 0), Err(SplitError::BadProbability { name: "p", .. })));
        assert!(matches!(split(&g, 0.5, 1.0, 0), Err(SplitError::BadProbability { name: "q", .. })));
    }

    #[test]
    fn four_by_four_partition_properties() {
        let g = complete(4, 4);
        // find a seed where all four parts are nonempty
        let bundle = (0..100)
            .find_map(|seed| split(&g, 0.5, 0.5, seed).ok())
            .expect("some seed splits a complete 4x4");

        let train: BTreeSet<_> = bundle.train_users.iter().copied().collect();
        let holdout: BTreeSet<_> = bundle.holdout_users.iter().copied().collect();
        assert!(train.is_disjoint(&holdout));
        assert_eq!(train.len() + holdout.len(), 4);

        let test: BTreeSet<_> = bundle.test_items.iter().copied().collect();
        let fit: BTreeSet<_> = bundle.holdoutfit_items.iter().copied().collect();
        assert!(test.is_disjoint(&fit));
        assert_eq!(test.len() + fit.len(), bundle.holdout.num_items());
    }

    #[test]
    fn edge_partition_is_exact() {
        let mut h = crate::simulate::ModelHyperparams::survey_defaults(25.0, 25.0);
        h.k = 3;
        for seed in 0..10 {
            let (g, _) = crate::simulate::simulate_graph(&h, seed).unwrap();
            let Ok(b) = split(&g, 0.3, 0.4, seed) else { continue };
            assert_eq!(b.train.num_edges() + b.holdout.num_edges(), g.num_edges());
            assert_eq!(b.test.num_edges() + b.holdoutfit.num_edges(), b.holdout.num_edges());
            // no user in both train and holdout, no item in both test and holdoutfit
            let tu: BTreeSet<_> = b.train.user_ids().iter().collect();
            assert!(b.holdout.user_ids().iter().all(|u| !tu.contains(u)));
            let ti: BTreeSet<_> = b.test.item_ids().iter().collect();
            assert!(b.holdoutfit.item_ids().iter().all(|i| !ti.contains(i)));
        }
    }

    #[test]
    fn split_is_deterministic() {
        let g = complete(12, 12);
        let a = split(&g, 0.4, 0.6, 9).unwrap();
        let b = split(&g, 0.4, 0.6, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_part_error_names_the_part() {
        // With p tiny, train is almost surely empty on a small graph.
        let g = complete(3, 3);
        let mut saw_train = false;
        for seed in 0..20 {
            if let Err(SplitError::EmptyPart { part }) = split(&g, 0.001, 0.5, seed) {
                saw_train |= part == "train";
            }
        }
        assert!(saw_train);
    }

    #[test]
    fn test_sizes_conventions() {
        // symmetric split leaves the user size unchanged
        let (s_test, _) = test_sizes(100.0, 50.0, 0.5, 0.3);
        assert!((s_test - 100.0).abs() < 1e-12);
        // item side scales by q
        let (_, a_test) = test_sizes(100.0, 1200.0, 0.5, 0.2);
        assert!((a_test - 240.0).abs() < 1e-12);
        // p=0.2: holdout user size is 4x the train user size
        let (s_test, _) = test_sizes(240.0, 1.0, 0.2, 0.2);
        assert!((s_test - 960.0).abs() < 1e-9);
    }

    #[test]
    fn with_source_sizes_fills_the_map() {
        let g = complete(10, 10);
        let b = split(&g, 0.5, 0.5, 3).unwrap().with_source_sizes(120.0, 80.0);
        let m = b.size_map.unwrap();
        assert!((m.s_train - 60.0).abs() < 1e-12);
        assert!((m.alpha_train - 80.0).abs() < 1e-12);
        assert!((m.s_test - 60.0).abs() < 1e-12);
        assert!((m.alpha_test - 40.0).abs() < 1e-12);
    }
}
