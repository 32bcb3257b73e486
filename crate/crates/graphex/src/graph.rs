//! Bipartite graph storage, degrees, edge density, and (p,q)-vertex
//! subsampling.
//!
//! Vertices carry opaque `u32` identifiers (loaders map external string ids
//! to dense integers and persist the mapping). Edges are stored sorted by
//! `(user index, item index)` with compressed adjacency on both sides, since
//! inference iterates edges grouped by user and by item. A graph never
//! contains an isolated vertex: vertices exist only through edges.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::rng;

pub type VertexId = u32;

#[derive(Debug, Clone, PartialEq)]
pub enum GraphError {
    /// A probability parameter was outside `[0, 1]` or not finite.
    BadProbability { name: &'static str, value: f64 },
    /// Operation requires a nonempty graph.
    EmptyGraph,
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::BadProbability { name, value } => {
                write!(f, "probability {name}={value} outside [0, 1]")
            }
            GraphError::EmptyGraph => write!(f, "empty graph"),
        }
    }
}

impl core::error::Error for GraphError {}

/// Immutable bipartite graph over user/item vertex id spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    user_ids: Vec<VertexId>,
    item_ids: Vec<VertexId>,
    user_offsets: Vec<usize>,
    user_adj: Vec<u32>, // item positions, ascending within each user
    item_offsets: Vec<usize>,
    item_adj: Vec<u32>, // user positions, ascending within each item
    users_by_id: Vec<u32>,
    items_by_id: Vec<u32>,
}

impl BipartiteGraph {
    /// Build a graph from `(user id, item id)` pairs.
    ///
    /// Duplicate pairs collapse to a single edge. Vertex order is first
    /// appearance in the input; no vertex can be isolated by construction.
    /// An empty input yields the empty graph.
    pub fn from_edges(edges: &[(VertexId, VertexId)]) -> Self {
        let mut user_pos: BTreeMap<VertexId, u32> = BTreeMap::new();
        let mut item_pos: BTreeMap<VertexId, u32> = BTreeMap::new();
        let mut user_ids = Vec::new();
        let mut item_ids = Vec::new();
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(edges.len());
        for &(u, i) in edges {
            let up = *user_pos.entry(u).or_insert_with(|| {
                user_ids.push(u);
                (user_ids.len() - 1) as u32
            });
            let ip = *item_pos.entry(i).or_insert_with(|| {
                item_ids.push(i);
                (item_ids.len() - 1) as u32
            });
            pairs.push((up, ip));
        }
        pairs.sort_unstable();
        pairs.dedup();
        Self::from_dense_sorted(user_ids, item_ids, &pairs)
    }

    /// `pairs` must be sorted, deduplicated `(user position, item position)`
    /// with every position below the respective id list length and every
    /// position present at least once.
    fn from_dense_sorted(user_ids: Vec<VertexId>, item_ids: Vec<VertexId>, pairs: &[(u32, u32)]) -> Self {
        let nu = user_ids.len();
        let ni = item_ids.len();
        let mut user_offsets = vec![0usize; nu + 1];
        for &(u, _) in pairs {
            user_offsets[u as usize + 1] += 1;
        }
        for i in 0..nu {
            user_offsets[i + 1] += user_offsets[i];
        }
        let user_adj: Vec<u32> = pairs.iter().map(|&(_, i)| i).collect();

        // Counting sort by item for the transposed adjacency.
        let mut item_offsets = vec![0usize; ni + 1];
        for &(_, i) in pairs {
            item_offsets[i as usize + 1] += 1;
        }
        for i in 0..ni {
            item_offsets[i + 1] += item_offsets[i];
        }
        let mut cursor = item_offsets.clone();
        let mut item_adj = vec![0u32; pairs.len()];
        for &(u, i) in pairs {
            item_adj[cursor[i as usize]] = u;
            cursor[i as usize] += 1;
        }

        let mut users_by_id: Vec<u32> = (0..nu as u32).collect();
        users_by_id.sort_unstable_by_key(|&p| user_ids[p as usize]);
        let mut items_by_id: Vec<u32> = (0..ni as u32).collect();
        items_by_id.sort_unstable_by_key(|&p| item_ids[p as usize]);

        BipartiteGraph {
            user_ids,
            item_ids,
            user_offsets,
            user_adj,
            item_offsets,
            item_adj,
            users_by_id,
            items_by_id,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.user_adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.user_adj.is_empty()
    }

    pub fn user_ids(&self) -> &[VertexId] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[VertexId] {
        &self.item_ids
    }

    /// Item positions adjacent to the user at `pos`.
    pub fn user_items(&self, pos: usize) -> &[u32] {
        &self.user_adj[self.user_offsets[pos]..self.user_offsets[pos + 1]]
    }

    /// User positions adjacent to the item at `pos`.
    pub fn item_users(&self, pos: usize) -> &[u32] {
        &self.item_adj[self.item_offsets[pos]..self.item_offsets[pos + 1]]
    }

    pub fn user_degree(&self, pos: usize) -> usize {
        self.user_offsets[pos + 1] - self.user_offsets[pos]
    }

    pub fn item_degree(&self, pos: usize) -> usize {
        self.item_offsets[pos + 1] - self.item_offsets[pos]
    }

    pub fn user_degrees(&self) -> Vec<u64> {
        (0..self.num_users()).map(|p| self.user_degree(p) as u64).collect()
    }

    pub fn item_degrees(&self) -> Vec<u64> {
        (0..self.num_items()).map(|p| self.item_degree(p) as u64).collect()
    }

    /// Position of a user id, if present.
    pub fn user_pos(&self, id: VertexId) -> Option<usize> {
        self.users_by_id
            .binary_search_by_key(&id, |&p| self.user_ids[p as usize])
            .ok()
            .map(|i| self.users_by_id[i] as usize)
    }

    /// Position of an item id, if present.
    pub fn item_pos(&self, id: VertexId) -> Option<usize> {
        self.items_by_id
            .binary_search_by_key(&id, |&p| self.item_ids[p as usize])
            .ok()
            .map(|i| self.items_by_id[i] as usize)
    }

    pub fn has_edge(&self, user_pos: usize, item_pos: usize) -> bool {
        self.user_items(user_pos).binary_search(&(item_pos as u32)).is_ok()
    }

    /// Edges as `(user id, item id)`, ordered by (user position, item position).
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        (0..self.num_users()).flat_map(move |u| {
            self.user_items(u)
                .iter()
                .map(move |&i| (self.user_ids[u], self.item_ids[i as usize]))
        })
    }

    /// Edge density e / (U * I); `None` on the empty graph where it is
    /// undefined.
    pub fn edge_density(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        Some(self.num_edges() as f64 / (self.num_users() as f64 * self.num_items() as f64))
    }

    /// Subgraph induced by the masked vertices, with isolated vertices
    /// removed. Mask lengths must equal the vertex counts.
    pub fn induced_subgraph(&self, keep_user: &[bool], keep_item: &[bool]) -> BipartiteGraph {
        assert_eq!(keep_user.len(), self.num_users());
        assert_eq!(keep_item.len(), self.num_items());
        let mut kept: Vec<(VertexId, VertexId)> = Vec::new();
        for u in 0..self.num_users() {
            if !keep_user[u] {
                continue;
            }
            for &i in self.user_items(u) {
                if keep_item[i as usize] {
                    kept.push((self.user_ids[u], self.item_ids[i as usize]));
                }
            }
        }
        BipartiteGraph::from_edges(&kept)
    }
}

/// Record of a (p,q)-sampling draw: parameters, seed, and the kept vertex
/// sets before isolated-vertex removal.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingRecord {
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    pub kept_users: Vec<VertexId>,
    pub kept_items: Vec<VertexId>,
    /// Set when the sampled graph came out empty.
    pub empty: bool,
}

const TAG_SAMPLE_USER: u64 = 0x7071_5541;
const TAG_SAMPLE_ITEM: u64 = 0x7071_4941;

/// (p,q)-sampling: keep each user independently with probability `p` and
/// each item with probability `q`, one Bernoulli draw per vertex in
/// vertex-index order; return the induced subgraph with isolated vertices
/// removed. Deterministic given `(g, p, q, seed)`.
pub fn pq_sample(
    g: &BipartiteGraph,
    p: f64,
    q: f64,
    seed: u64,
) -> Result<(BipartiteGraph, SamplingRecord), GraphError> {
    check_prob("p", p)?;
    check_prob("q", q)?;
    let keep_user: Vec<bool> = (0..g.num_users())
        .map(|v| rng::unit_at(seed, TAG_SAMPLE_USER, v as u64) < p)
        .collect();
    let keep_item: Vec<bool> = (0..g.num_items())
        .map(|v| rng::unit_at(seed, TAG_SAMPLE_ITEM, v as u64) < q)
        .collect();
    let sub = g.induced_subgraph(&keep_user, &keep_item);
    let record = SamplingRecord {
        p,
        q,
        seed,
        kept_users: mask_ids(g.user_ids(), &keep_user),
        kept_items: mask_ids(g.item_ids(), &keep_item),
        empty: sub.is_empty(),
    };
    Ok((sub, record))
}

pub(crate) fn check_prob(name: &'static str, value: f64) -> Result<(), GraphError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(GraphError::BadProbability { name, value })
    }
}

fn mask_ids(ids: &[VertexId], keep: &[bool]) -> Vec<VertexId> {
    ids.iter().zip(keep).filter(|(_, &k)| k).map(|(&id, _)| id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn duplicate_edges_collapse() {
        let g = BipartiteGraph::from_edges(&[(1, 10), (1, 20), (1, 10)]);
        assert_eq!(g.num_users(), 1);
        assert_eq!(g.num_items(), 2);
        assert_eq!(g.num_edges(), 2);
    }

    #[test]
    fn first_appearance_order_is_kept() {
        let g = BipartiteGraph::from_edges(&[(5, 9), (2, 9), (5, 3)]);
        assert_eq!(g.user_ids(), &[5, 2]);
        assert_eq!(g.item_ids(), &[9, 3]);
        assert_eq!(g.user_pos(2), Some(1));
        assert_eq!(g.item_pos(3), Some(1));
        assert_eq!(g.user_pos(7), None);
    }

    #[test]
    fn degrees_match_incidence() {
        let g = BipartiteGraph::from_edges(&[(0, 0), (0, 1), (1, 1)]);
        assert_eq!(g.user_degrees(), vec![2, 1]);
        assert_eq!(g.item_degrees(), vec![1, 2]);
        assert_eq!(g.user_items(0), &[0, 1]);
        assert_eq!(g.item_users(1), &[0, 1]);
        assert!(g.has_edge(0, 1));
        assert!(!g.has_edge(1, 0));
    }

    #[test]
    fn density_complete_and_half() {
        assert_eq!(complete(2, 3).edge_density(), Some(1.0));
        let g = BipartiteGraph::from_edges(&[(0, 0), (1, 1)]);
        assert_eq!(g.edge_density(), Some(0.5));
        assert_eq!(BipartiteGraph::from_edges(&[]).edge_density(), None);
    }

    #[test]
    fn density_at_survey_scale() {
        // 40,565 users x 40,768 items x 9.7M edges, built as a wrapped band.
        let nu = 40_565u32;
        let ni = 40_768u32;
        let base = 239usize;
        let extra_users = 9_700_000 - nu as usize * base;
        let mut edges = Vec::with_capacity(9_700_000);
        for u in 0..nu {
            let deg = base + usize::from((u as usize) < extra_users);
            for j in 0..deg {
                edges.push((u, (u + j as u32) % ni));
            }
        }
        let g = BipartiteGraph::from_edges(&edges);
        assert_eq!(g.num_users(), nu as usize);
        assert_eq!(g.num_items(), ni as usize);
        assert_eq!(g.num_edges(), 9_700_000);
        let rho = g.edge_density().unwrap();
        assert!((rho - 5.866e-3).abs() < 1e-5, "density {rho}");
    }

    #[test]
    fn pq_identity_and_zero() {
        let g = BipartiteGraph::from_edges(&[(0, 0), (0, 1), (1, 1), (2, 0)]);
        let (same, rec) = pq_sample(&g, 1.0, 1.0, 99).unwrap();
        assert_eq!(same, g);
        assert!(!rec.empty);
        assert_eq!(rec.kept_users, g.user_ids());

        let (none, rec) = pq_sample(&g, 0.0, 1.0, 99).unwrap();
        assert!(none.is_empty());
        assert!(rec.empty);
        assert!(rec.kept_users.is_empty());
    }

    #[test]
    fn pq_rejects_bad_probability() {
        let g = complete(2, 2);
        assert!(pq_sample(&g, 1.5, 0.5, 0).is_err());
        assert!(pq_sample(&g, 0.5, -0.1, 0).is_err());
        assert!(pq_sample(&g, f64::NAN, 0.5, 0).is_err());
    }

    #[test]
    fn pq_sample_never_leaves_isolated_vertices() {
        let g = complete(6, 5);
        for seed in 0..50 {
            let (s, _) = pq_sample(&g, 0.4, 0.4, seed).unwrap();
            for u in 0..s.num_users() {
                assert!(s.user_degree(u) >= 1);
            }
            for i in 0..s.num_items() {
                assert!(s.item_degree(i) >= 1);
            }
        }
    }

    #[test]
    fn pq_sample_is_deterministic_and_order_stable() {
        let g = complete(20, 20);
        let (a, ra) = pq_sample(&g, 0.5, 0.7, 1234).unwrap();
        let (b, rb) = pq_sample(&g, 0.5, 0.7, 1234).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        // Kept sets are subsets in source order.
        let mut prev = None;
        for &id in &ra.kept_users {
            let pos = g.user_pos(id).unwrap();
            if let Some(p) = prev {
                assert!(pos > p);
            }
            prev = Some(pos);
        }
    }

    #[test]
    fn pq_edge_retention_mean_matches_pq_product() {
        // E[e(sample)] / e(g) = p*q per edge by independence.
        let g = complete(40, 40);
        let total = g.num_edges() as f64;
        let mut ratios = Vec::new();
        for seed in 0..1000 {
            let (s, _) = pq_sample(&g, 0.5, 0.5, seed).unwrap();
            ratios.push(s.num_edges() as f64 / total);
        }
        let (mean, sd) = crate::math::mean_sd(&ratios);
        let se = sd / (ratios.len() as f64).sqrt();
        assert!(
            (mean - 0.25).abs() < 3.0 * se,
            "mean ratio {mean}, se {se}"
        );
    }
}
