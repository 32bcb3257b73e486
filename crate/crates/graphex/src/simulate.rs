//! Forward simulation of the sparse Poisson matrix factorization generative
//! model, returning the graph together with the ground-truth latents.
//!
//! Each user atom carries a weight `gamma_i` from a GGP and affinities
//! `theta_ik ~ Gamma(a, b)`; items symmetrically carry `omega_j` and
//! `beta_jk ~ Gamma(c, d)`. Edge `(i, j)` is present with probability
//! `1 - exp(-gamma_i omega_j sum_k theta_ik beta_jk)`, and atoms that connect
//! to nothing are discarded.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use libm::{expm1, pow};

use crate::ggp::{self, GgpError, GgpParams};
use crate::graph::BipartiteGraph;
use crate::rng::{self, hash2, Rng};

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    BadHyperparam { name: &'static str, value: f64 },
    BadLatentDim(usize),
    Ggp(GgpError),
    /// The first-order edge-count estimate exceeded the configured cap.
    TooManyEdges { estimate: f64, cap: f64 },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::BadHyperparam { name, value } => {
                write!(f, "hyperparameter {name}={value} out of range")
            }
            SimError::BadLatentDim(k) => write!(f, "latent dimension K={k} must be >= 1"),
            SimError::Ggp(e) => write!(f, "{e}"),
            SimError::TooManyEdges { estimate, cap } => {
                write!(f, "expected edge count ~{estimate:.3e} exceeds cap {cap:.3e}; raise the cap to proceed")
            }
        }
    }
}

impl core::error::Error for SimError {}

impl From<GgpError> for SimError {
    fn from(e: GgpError) -> Self {
        SimError::Ggp(e)
    }
}

/// Hyperparameters of the generative model: GGP parameters per side, gamma
/// priors on the affinities, latent dimension, and the user/item sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelHyperparams {
    pub sigma_u: f64,
    pub tau_u: f64,
    pub sigma_i: f64,
    pub tau_i: f64,
    /// User affinity prior Gamma(a, b).
    pub a: f64,
    pub b: f64,
    /// Item affinity prior Gamma(c, d).
    pub c: f64,
    pub d: f64,
    pub k: usize,
    /// User size. Zero is permitted (used by the dense inference baseline);
    /// simulation then yields an empty side.
    pub s: f64,
    /// Item size.
    pub alpha: f64,
}

impl ModelHyperparams {
    /// Survey defaults: `sigma = 0.2`, `tau = 1`, `a=b=c=d=0.1`, `K=30`.
    pub fn survey_defaults(s: f64, alpha: f64) -> Self {
        ModelHyperparams {
            sigma_u: 0.2,
            tau_u: 1.0,
            sigma_i: 0.2,
            tau_i: 1.0,
            a: 0.1,
            b: 0.1,
            c: 0.1,
            d: 0.1,
            k: 30,
            s,
            alpha,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::BadHyperparam { name, value: v });
            }
        }
        if self.k < 1 {
            return Err(SimError::BadLatentDim(self.k));
        }
        self.user_ggp()?.validate()?;
        self.item_ggp()?.validate()?;
        Ok(())
    }

    pub fn user_ggp(&self) -> Result<GgpParams, GgpError> {
        GgpParams::new(self.sigma_u, self.tau_u, self.s)
    }

    pub fn item_ggp(&self) -> Result<GgpParams, GgpError> {
        GgpParams::new(self.sigma_i, self.tau_i, self.alpha)
    }

    /// The same model with the user/item roles exchanged.
    pub fn swapped(&self) -> Self {
        ModelHyperparams {
            sigma_u: self.sigma_i,
            tau_u: self.tau_i,
            sigma_i: self.sigma_u,
            tau_i: self.tau_u,
            a: self.c,
            b: self.d,
            c: self.a,
            d: self.b,
            k: self.k,
            s: self.alpha,
            alpha: self.s,
        }
    }
}

/// Weights and affinities for one side of the graph; affinities are row-major
/// `len x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SideAtoms {
    pub weights: Vec<f64>,
    pub affinities: Vec<f64>,
    pub k: usize,
}

impl SideAtoms {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn affinity_row(&self, i: usize) -> &[f64] {
        &self.affinities[i * self.k..(i + 1) * self.k]
    }
}

/// Ground-truth latents for the retained (degree >= 1) atoms. Ids match the
/// vertex ids of the returned graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTruth {
    pub k: usize,
    pub user_ids: Vec<u32>,
    pub user_weights: Vec<f64>,
    pub user_affinities: Vec<f64>,
    pub item_ids: Vec<u32>,
    pub item_weights: Vec<f64>,
    pub item_affinities: Vec<f64>,
}

/// Which pair-generation strategy to use when sampling edges. Both paths
/// draw from the same distribution exactly; they differ only in cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgePath {
    /// Dense loop when `n_users * n_items <= 1e6`, candidate thinning above.
    Auto,
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Refuse to simulate when the first-order edge estimate exceeds this.
    pub max_expected_edges: f64,
    /// Truncation tolerance override for the GGP samplers.
    pub trunc_tol: Option<f64>,
    pub path: EdgePath,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { max_expected_edges: 5e7, trunc_tol: None, path: EdgePath::Auto }
    }
}

/// First-order estimate of the expected edge count,
/// `s * alpha * tau_u^(sigma_u - 1) * tau_i^(sigma_i - 1) * K * (a/b) * (c/d)`.
///
/// Uses the Poisson mean as a bound on the Bernoulli inclusion probability,
/// so it upper-bounds the realized count.
pub fn edge_count_estimate(h: &ModelHyperparams) -> f64 {
    h.s * h.alpha
        * pow(h.tau_u, h.sigma_u - 1.0)
        * pow(h.tau_i, h.sigma_i - 1.0)
        * h.k as f64
        * (h.a / h.b)
        * (h.c / h.d)
}

const TAG_USER_ATOMS: u64 = 0x7369_5541;
const TAG_ITEM_ATOMS: u64 = 0x7369_4941;
const TAG_USER_AFF: u64 = 0x7369_5442;
const TAG_ITEM_AFF: u64 = 0x7369_4242;
const TAG_EDGES: u64 = 0x7369_4547;
const TAG_EDGE_PAIR: u64 = 0x7369_4550;
const TAG_FACTOR: u64 = 0x7369_464b;

/// Simulate a graph and its latent truth with default options.
pub fn simulate_graph(h: &ModelHyperparams, seed: u64) -> Result<(BipartiteGraph, LatentTruth), SimError> {
    simulate_graph_with(h, seed, &SimOptions::default())
}

pub fn simulate_graph_with(
    h: &ModelHyperparams,
    seed: u64,
    opts: &SimOptions,
) -> Result<(BipartiteGraph, LatentTruth), SimError> {
    h.validate()?;
    let estimate = edge_count_estimate(h);
    if estimate > opts.max_expected_edges {
        return Err(SimError::TooManyEdges { estimate, cap: opts.max_expected_edges });
    }

    let users = sample_side(h.user_ggp()?, h.a, h.b, h.k, opts.trunc_tol, seed, TAG_USER_ATOMS, TAG_USER_AFF)?;
    let items = sample_side(h.item_ggp()?, h.c, h.d, h.k, opts.trunc_tol, seed, TAG_ITEM_ATOMS, TAG_ITEM_AFF)?;
    let edges = sample_edges(&users, &items, hash2(seed, TAG_EDGES), opts.path);

    let graph = BipartiteGraph::from_edges(&edges);
    let truth = restrict_truth(&users, &items, &graph);
    Ok((graph, truth))
}

#[allow(clippy::too_many_arguments)]
fn sample_side(
    ggp: GgpParams,
    shape: f64,
    rate: f64,
    k: usize,
    trunc_tol: Option<f64>,
    seed: u64,
    atom_tag: u64,
    aff_tag: u64,
) -> Result<SideAtoms, SimError> {
    let tol = trunc_tol.unwrap_or_else(|| ggp::default_trunc_tol(&ggp));
    let atoms = ggp::sample_ggp(&ggp, tol, hash2(seed, atom_tag))?;
    let n = atoms.len();
    let mut rng = Rng::new(hash2(seed, aff_tag));
    let mut affinities = Vec::with_capacity(n * k);
    for _ in 0..n * k {
        affinities.push(rng.gamma(shape, rate));
    }
    Ok(SideAtoms { weights: atoms.weights, affinities, k })
}

/// Sample the edge set between two sides of atoms under the Bernoulli rule
/// `P(edge) = 1 - exp(-gamma omega sum_k theta_k beta_k)`.
///
/// The dense path evaluates every pair. The sparse path draws, per factor,
/// a Poisson number of candidate pairs with endpoints proportional to
/// `gamma theta_k` and `omega beta_k` (the superposition of the per-pair
/// Poisson counts whose positivity defines an edge), which is exact and
/// avoids the `U x I` loop. Returns `(user index, item index)` pairs, sorted
/// and deduplicated. Deterministic given `(atoms, seed, path)`.
pub fn sample_edges(users: &SideAtoms, items: &SideAtoms, seed: u64, path: EdgePath) -> Vec<(u32, u32)> {
    assert_eq!(users.k, items.k);
    let nu = users.len();
    let ni = items.len();
    if nu == 0 || ni == 0 {
        return Vec::new();
    }
    let dense = match path {
        EdgePath::Dense => true,
        EdgePath::Sparse => false,
        EdgePath::Auto => (nu as u128) * (ni as u128) <= 1_000_000,
    };
    if dense {
        sample_edges_dense(users, items, seed)
    } else {
        sample_edges_sparse(users, items, seed)
    }
}

fn sample_edges_dense(users: &SideAtoms, items: &SideAtoms, seed: u64) -> Vec<(u32, u32)> {
    let k = users.k;
    let ni = items.len();
    let mut edges = Vec::new();
    for u in 0..users.len() {
        let gu = users.weights[u];
        let theta = users.affinity_row(u);
        for i in 0..ni {
            let mut dot = 0.0;
            let beta = items.affinity_row(i);
            for l in 0..k {
                dot += theta[l] * beta[l];
            }
            let rate = gu * items.weights[i] * dot;
            let p = -expm1(-rate);
            if rng::unit_at(seed, TAG_EDGE_PAIR, (u * ni + i) as u64) < p {
                edges.push((u as u32, i as u32));
            }
        }
    }
    edges
}

fn sample_edges_sparse(users: &SideAtoms, items: &SideAtoms, seed: u64) -> Vec<(u32, u32)> {
    let k = users.k;
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut cum_u = vec![0.0f64; users.len()];
    let mut cum_i = vec![0.0f64; items.len()];
    for l in 0..k {
        let mut acc = 0.0;
        for u in 0..users.len() {
            acc += users.weights[u] * users.affinities[u * k + l];
            cum_u[u] = acc;
        }
        let total_u = acc;
        let mut acc = 0.0;
        for i in 0..items.len() {
            acc += items.weights[i] * items.affinities[i * k + l];
            cum_i[i] = acc;
        }
        let total_i = acc;
        let mut rng = Rng::substream(seed, TAG_FACTOR, l as u64);
        let n = rng.poisson(total_u * total_i);
        for _ in 0..n {
            let u = pick(&cum_u, rng.next_f64() * total_u);
            let i = pick(&cum_i, rng.next_f64() * total_i);
            edges.push((u as u32, i as u32));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

fn pick(cum: &[f64], x: f64) -> usize {
    cum.partition_point(|&c| c <= x).min(cum.len() - 1)
}

fn restrict_truth(users: &SideAtoms, items: &SideAtoms, graph: &BipartiteGraph) -> LatentTruth {
    let k = users.k;
    let mut truth = LatentTruth {
        k,
        user_ids: graph.user_ids().to_vec(),
        user_weights: Vec::with_capacity(graph.num_users()),
        user_affinities: Vec::with_capacity(graph.num_users() * k),
        item_ids: graph.item_ids().to_vec(),
        item_weights: Vec::with_capacity(graph.num_items()),
        item_affinities: Vec::with_capacity(graph.num_items() * k),
    };
    for &id in &truth.user_ids {
        truth.user_weights.push(users.weights[id as usize]);
        truth.user_affinities.extend_from_slice(users.affinity_row(id as usize));
    }
    for &id in &truth.item_ids {
        truth.item_weights.push(items.weights[id as usize]);
        truth.item_affinities.extend_from_slice(items.affinity_row(id as usize));
    }
    truth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::mean_sd;

    #[test]
    fn estimate_examples() {
        let mut h = ModelHyperparams::survey_defaults(1.0, 1.0);
        h.k = 1;
        h.sigma_u = 0.3;
        h.sigma_i = -0.4;
        assert!((edge_count_estimate(&h) - 1.0).abs() < 1e-12);

        let h = ModelHyperparams::survey_defaults(120.0, 120.0);
        assert!((edge_count_estimate(&h) - 432_000.0).abs() < 1e-6);

        let h = ModelHyperparams::survey_defaults(0.0, 120.0);
        assert_eq!(edge_count_estimate(&h), 0.0);
    }

    #[test]
    fn validation_rejects_degenerate_priors() {
        let mut h = ModelHyperparams::survey_defaults(1.0, 1.0);
        h.a = 0.0;
        assert!(matches!(h.validate(), Err(SimError::BadHyperparam { name: "a", .. })));
        let mut h = ModelHyperparams::survey_defaults(1.0, 1.0);
        h.k = 0;
        assert!(matches!(h.validate(), Err(SimError::BadLatentDim(0))));
        let mut h = ModelHyperparams::survey_defaults(1.0, 1.0);
        h.sigma_u = 1.2;
        assert!(h.validate().is_err());
    }

    #[test]
    fn edge_cap_guard_refuses_with_estimate() {
        let h = ModelHyperparams::survey_defaults(120.0, 120.0);
        let opts = SimOptions { max_expected_edges: 1_000.0, ..Default::default() };
        match simulate_graph_with(&h, 0, &opts) {
            Err(SimError::TooManyEdges { estimate, .. }) => {
                assert!((estimate - 432_000.0).abs() < 1e-6)
            }
            other => panic!("expected cap refusal, got {other:?}"),
        }
    }

    #[test]
    fn truth_covers_exactly_the_retained_atoms() {
        let h = ModelHyperparams::survey_defaults(20.0, 20.0);
        let (g, t) = simulate_graph(&h, 42).unwrap();
        assert_eq!(t.user_ids, g.user_ids());
        assert_eq!(t.item_ids, g.item_ids());
        assert_eq!(t.user_weights.len(), g.num_users());
        assert_eq!(t.item_affinities.len(), g.num_items() * t.k);
        for pos in 0..g.num_users() {
            assert!(g.user_degree(pos) >= 1);
            assert!(t.user_weights[pos] > 0.0);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let h = ModelHyperparams::survey_defaults(15.0, 15.0);
        let (g1, t1) = simulate_graph(&h, 7).unwrap();
        let (g2, t2) = simulate_graph(&h, 7).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(t1, t2);
        let (g3, _) = simulate_graph(&h, 8).unwrap();
        assert_ne!(g1, g3);
    }

    #[test]
    fn dense_and_sparse_paths_agree_in_distribution() {
        let mut h = ModelHyperparams::survey_defaults(12.0, 12.0);
        h.k = 4;
        let mut dense = Vec::new();
        let mut sparse = Vec::new();
        for seed in 0..60 {
            let d = simulate_graph_with(&h, seed, &SimOptions { path: EdgePath::Dense, ..Default::default() })
                .unwrap()
                .0;
            let s = simulate_graph_with(&h, seed + 1_000, &SimOptions { path: EdgePath::Sparse, ..Default::default() })
                .unwrap()
                .0;
            dense.push(d.num_edges() as f64);
            sparse.push(s.num_edges() as f64);
        }
        let (md, sd) = mean_sd(&dense);
        let (ms, ss) = mean_sd(&sparse);
        let se = ((sd * sd + ss * ss) / 60.0).sqrt();
        assert!((md - ms).abs() < 3.0 * se, "dense {md}, sparse {ms}, se {se}");
    }

    #[test]
    fn doubling_user_size_doubles_edge_count() {
        let mut h1 = ModelHyperparams::survey_defaults(15.0, 20.0);
        h1.k = 5;
        let mut h2 = h1;
        h2.s = 30.0;
        let mut e1 = Vec::new();
        let mut e2 = Vec::new();
        for seed in 0..20 {
            e1.push(simulate_graph(&h1, seed).unwrap().0.num_edges() as f64);
            e2.push(simulate_graph(&h2, seed + 777).unwrap().0.num_edges() as f64);
        }
        let (m1, s1) = mean_sd(&e1);
        let (m2, s2) = mean_sd(&e2);
        let se = (s2 * s2 / 20.0 + 4.0 * s1 * s1 / 20.0).sqrt();
        assert!((m2 - 2.0 * m1).abs() < 2.0 * se, "m1 {m1} m2 {m2} se {se}");
    }

    #[test]
    fn atom_order_does_not_change_edge_statistics() {
        // Edge generation is exchangeable over atoms: feeding the atom lists
        // in reversed order leaves summary statistics' distributions alone.
        let mut h = ModelHyperparams::survey_defaults(15.0, 15.0);
        h.k = 3;
        let mut plain = Vec::new();
        let mut permuted = Vec::new();
        for seed in 0..80 {
            let users = sample_side(h.user_ggp().unwrap(), h.a, h.b, h.k, None, seed, TAG_USER_ATOMS, TAG_USER_AFF).unwrap();
            let items = sample_side(h.item_ggp().unwrap(), h.c, h.d, h.k, None, seed, TAG_ITEM_ATOMS, TAG_ITEM_AFF).unwrap();
            plain.push(sample_edges(&users, &items, seed, EdgePath::Auto).len() as f64);

            let rev = |side: &SideAtoms| {
                let n = side.len();
                let mut weights = side.weights.clone();
                weights.reverse();
                let mut affinities = Vec::with_capacity(side.affinities.len());
                for i in (0..n).rev() {
                    affinities.extend_from_slice(side.affinity_row(i));
                }
                SideAtoms { weights, affinities, k: side.k }
            };
            permuted.push(sample_edges(&rev(&users), &rev(&items), seed + 31, EdgePath::Auto).len() as f64);
        }
        let (mp, sp) = mean_sd(&plain);
        let (mq, sq) = mean_sd(&permuted);
        let se = ((sp * sp + sq * sq) / 80.0).sqrt();
        assert!((mp - mq).abs() < 3.0 * se, "plain {mp}, permuted {mq}, se {se}");
    }
}
