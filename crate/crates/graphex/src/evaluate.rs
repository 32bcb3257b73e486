//! Posterior-predictive sampling and checks, plus recommendation scoring.
//!
//! Predictive draws combine the fitted atoms (weights and affinities sampled
//! from their gamma factors) with fresh atoms for the part of each space the
//! data never revealed: prior atoms thinned by the probability of connecting
//! to nothing, which by pseudo-conjugacy is the posterior process over
//! unobserved atoms. Recommendation quality is scored per user by expected
//! edge count, with recall@M and binary nDCG.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use libm::{exp, log2};

use crate::estimators::{estimate_sigma, EstimateError};
use crate::ggp::{self, GgpError, GgpParams};
use crate::graph::{BipartiteGraph, VertexId};
use crate::inference::VariationalState;
use crate::rng::{hash2, Rng};
use crate::simulate::{sample_edges, EdgePath, SideAtoms};

/// Fresh predictive atoms get ids above this base, separating them from any
/// retained atom id.
pub const FRESH_ID_BASE: u32 = 1 << 31;

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    EmptyGraph,
    UnknownUser(VertexId),
    UnknownItem(VertexId),
    BadArg { what: &'static str },
    /// No test user had a scoreable relevant item.
    NothingToScore,
    Ggp(GgpError),
    Estimate(EstimateError),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::EmptyGraph => write!(f, "empty graph"),
            EvalError::UnknownUser(id) => write!(f, "user {id} unknown to the state"),
            EvalError::UnknownItem(id) => write!(f, "item {id} unknown to the state"),
            EvalError::BadArg { what } => write!(f, "invalid argument: {what}"),
            EvalError::NothingToScore => write!(f, "no user with a scoreable relevant item"),
            EvalError::Ggp(e) => write!(f, "{e}"),
            EvalError::Estimate(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for EvalError {}

impl From<GgpError> for EvalError {
    fn from(e: GgpError) -> Self {
        EvalError::Ggp(e)
    }
}

impl From<EstimateError> for EvalError {
    fn from(e: EstimateError) -> Self {
        EvalError::Estimate(e)
    }
}

/// Summary statistics used by the posterior-predictive checks: counts, the
/// degree-based sigma estimates, and exact degree histograms per side.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub users: u64,
    pub items: u64,
    pub edges: u64,
    pub sigma_hat_u: f64,
    pub sigma_hat_i: f64,
    /// (degree, count) pairs, ascending by degree.
    pub user_degree_hist: Vec<(u64, u64)>,
    pub item_degree_hist: Vec<(u64, u64)>,
}

pub fn summarize(g: &BipartiteGraph) -> Result<PredictiveSummary, EvalError> {
    if g.is_empty() {
        return Err(EvalError::EmptyGraph);
    }
    let user_degrees = g.user_degrees();
    let item_degrees = g.item_degrees();
    Ok(PredictiveSummary {
        users: g.num_users() as u64,
        items: g.num_items() as u64,
        edges: g.num_edges() as u64,
        sigma_hat_u: estimate_sigma(&user_degrees)?,
        sigma_hat_i: estimate_sigma(&item_degrees)?,
        user_degree_hist: histogram(&user_degrees),
        item_degree_hist: histogram(&item_degrees),
    })
}

fn histogram(degrees: &[u64]) -> Vec<(u64, u64)> {
    let mut map = alloc::collections::BTreeMap::new();
    for &d in degrees {
        *map.entry(d).or_insert(0u64) += 1;
    }
    map.into_iter().collect()
}

/// Options for a predictive draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveOptions {
    /// Size of the user space the draw represents; drives the fresh-atom
    /// process (sparse-mode states only). Zero disables fresh users.
    pub user_size: f64,
    pub item_size: f64,
    /// Probability of keeping each retained user atom, used when the draw's
    /// space is a subsample of the space the state was fitted on.
    pub user_keep: f64,
    pub item_keep: f64,
    pub trunc_tol: Option<f64>,
    pub path: EdgePath,
}

impl PredictiveOptions {
    /// Draw over the retained atoms only.
    pub fn retained_only() -> Self {
        PredictiveOptions {
            user_size: 0.0,
            item_size: 0.0,
            user_keep: 1.0,
            item_keep: 1.0,
            trunc_tol: None,
            path: EdgePath::Auto,
        }
    }
}

const TAG_RETAIN_U: u64 = 0x7072_5255;
const TAG_RETAIN_I: u64 = 0x7072_5249;
const TAG_FRESH_U: u64 = 0x7072_4655;
const TAG_FRESH_I: u64 = 0x7072_4649;
const TAG_PRED_EDGES: u64 = 0x7072_4547;

/// Draw one graph from the posterior predictive.
///
/// Retained atoms are kept independently with the configured probabilities
/// and their weights/affinities drawn from the fitted gamma factors. Fresh
/// atoms for the unobserved remainder come from the prior GGP at the given
/// sizes with prior affinities, thinned by `exp(-weight * exposure)` where
/// the exposure is the state's opposite-side expected mass, which is the
/// tilted (posterior) process over atoms that connected to nothing. Isolated
/// atoms are discarded. Deterministic given the seed.
pub fn predictive_sample(
    state: &VariationalState,
    opts: &PredictiveOptions,
    seed: u64,
) -> Result<BipartiteGraph, EvalError> {
    for (what, v) in [("user_size", opts.user_size), ("item_size", opts.item_size)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(EvalError::BadArg { what });
        }
    }
    for (what, v) in [("user_keep", opts.user_keep), ("item_keep", opts.item_keep)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(EvalError::BadArg { what });
        }
    }
    let k = state.cfg.k;
    let h = &state.hyper;

    let (users, user_atom_ids) = draw_side(
        state.gamma_side(),
        opts.user_keep,
        if h.s > 0.0 { opts.user_size } else { 0.0 },
        h.sigma_u,
        h.tau_u,
        h.a,
        h.b,
        &state.item_mass(),
        k,
        opts.trunc_tol,
        hash2(seed, TAG_RETAIN_U),
        hash2(seed, TAG_FRESH_U),
    )?;
    let (items, item_atom_ids) = draw_side(
        state.omega_side(),
        opts.item_keep,
        if h.alpha > 0.0 { opts.item_size } else { 0.0 },
        h.sigma_i,
        h.tau_i,
        h.c,
        h.d,
        &state.user_mass(),
        k,
        opts.trunc_tol,
        hash2(seed, TAG_RETAIN_I),
        hash2(seed, TAG_FRESH_I),
    )?;

    let edges = sample_edges(&users, &items, hash2(seed, TAG_PRED_EDGES), opts.path);
    let id_edges: Vec<(VertexId, VertexId)> = edges
        .iter()
        .map(|&(u, i)| (user_atom_ids[u as usize], item_atom_ids[i as usize]))
        .collect();
    Ok(BipartiteGraph::from_edges(&id_edges))
}

struct FittedSide<'a> {
    ids: &'a [VertexId],
    weight_shape: &'a [f64],
    weight_rate: &'a [f64],
    aff_shape: &'a [f64],
    aff_rate: &'a [f64],
}

impl VariationalState {
    fn gamma_side(&self) -> FittedSide<'_> {
        FittedSide {
            ids: &self.user_ids,
            weight_shape: &self.gamma.shape,
            weight_rate: &self.gamma.rate,
            aff_shape: &self.theta.shape,
            aff_rate: &self.theta.rate,
        }
    }

    fn omega_side(&self) -> FittedSide<'_> {
        FittedSide {
            ids: &self.item_ids,
            weight_shape: &self.omega.shape,
            weight_rate: &self.omega.rate,
            aff_shape: &self.beta.shape,
            aff_rate: &self.beta.rate,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn draw_side(
    fitted: FittedSide<'_>,
    keep: f64,
    fresh_size: f64,
    sigma: f64,
    tau: f64,
    prior_shape: f64,
    prior_rate: f64,
    exposure: &[f64],
    k: usize,
    trunc_tol: Option<f64>,
    retain_seed: u64,
    fresh_seed: u64,
) -> Result<(SideAtoms, Vec<VertexId>), EvalError> {
    let mut weights = Vec::new();
    let mut affinities = Vec::new();
    let mut ids = Vec::new();

    for pos in 0..fitted.ids.len() {
        let mut rng = Rng::substream(retain_seed, 1, pos as u64);
        if !rng.bernoulli(keep) {
            continue;
        }
        weights.push(rng.gamma(fitted.weight_shape[pos], fitted.weight_rate[pos]));
        for l in 0..k {
            affinities.push(rng.gamma(fitted.aff_shape[pos * k + l], fitted.aff_rate[pos * k + l]));
        }
        ids.push(fitted.ids[pos]);
    }

    if fresh_size > 0.0 {
        let params = GgpParams::new(sigma, tau, fresh_size)?;
        let tol = trunc_tol.unwrap_or_else(|| ggp::default_trunc_tol(&params));
        let atoms = ggp::sample_ggp(&params, tol, fresh_seed)?;
        for (idx, &w) in atoms.weights.iter().enumerate() {
            let mut rng = Rng::substream(fresh_seed, 2, idx as u64);
            let mut c = 0.0;
            let mut aff = Vec::with_capacity(k);
            for l in 0..k {
                let t = rng.gamma(prior_shape, prior_rate);
                aff.push(t);
                c += t * exposure[l];
            }
            if rng.bernoulli(exp(-w * c)) {
                weights.push(w);
                affinities.extend_from_slice(&aff);
                ids.push(FRESH_ID_BASE + idx as u32);
            }
        }
    }

    Ok((SideAtoms { weights, affinities, k }, ids))
}

/// Expected edge count between one user and each listed item under the
/// factorized posterior: `E[gamma_i] E[omega_j] sum_k E[theta_ik] E[beta_jk]`.
pub fn score_pairs(
    state: &VariationalState,
    user: VertexId,
    items: &[VertexId],
) -> Result<Vec<f64>, EvalError> {
    let upos = state.user_pos(user).ok_or(EvalError::UnknownUser(user))?;
    let mut out = Vec::with_capacity(items.len());
    for &id in items {
        let ipos = state.item_pos(id).ok_or(EvalError::UnknownItem(id))?;
        out.push(score_at(state, upos, ipos));
    }
    Ok(out)
}

#[inline]
fn score_at(state: &VariationalState, upos: usize, ipos: usize) -> f64 {
    let k = state.cfg.k;
    let mut dot = 0.0;
    for l in 0..k {
        dot += state.theta.mean_at(upos, l) * state.beta.mean_at(ipos, l);
    }
    state.gamma.mean(upos) * state.omega.mean(ipos) * dot
}

/// Recall at M: `|top-M(recommended) ∩ relevant| / min(M, |relevant|)`.
pub fn recall_at_m(recommended: &[VertexId], relevant: &[VertexId], m: usize) -> Result<f64, EvalError> {
    if m < 1 {
        return Err(EvalError::BadArg { what: "m must be >= 1" });
    }
    if relevant.is_empty() {
        return Err(EvalError::BadArg { what: "relevant set is empty" });
    }
    let rel: BTreeSet<VertexId> = relevant.iter().copied().collect();
    let top = recommended.len().min(m);
    let hits = recommended[..top].iter().filter(|id| rel.contains(id)).count();
    Ok(hits as f64 / m.min(rel.len()) as f64)
}

/// Binary-relevance normalized discounted cumulative gain over the full
/// recommended list: gains 1 at relevant items, discount `1 / log2(rank+1)`
/// with ranks starting at 1, normalized by the ideal DCG of `|relevant|`
/// items.
pub fn ndcg(recommended: &[VertexId], relevant: &[VertexId]) -> Result<f64, EvalError> {
    if relevant.is_empty() {
        return Err(EvalError::BadArg { what: "relevant set is empty" });
    }
    let rel: BTreeSet<VertexId> = relevant.iter().copied().collect();
    let mut dcg = 0.0;
    for (idx, id) in recommended.iter().enumerate() {
        if rel.contains(id) {
            dcg += 1.0 / log2(idx as f64 + 2.0);
        }
    }
    let ideal: f64 = (0..rel.len()).map(|r| 1.0 / log2(r as f64 + 2.0)).sum();
    Ok(dcg / ideal)
}

/// Per-user recommendation scores; unpopular variants are present when the
/// user still has a relevant item after the popular-item filter.
#[derive(Debug, Clone, PartialEq)]
pub struct UserScore {
    pub user: VertexId,
    pub relevant: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub recall_unpopular: Option<f64>,
    pub ndcg_unpopular: Option<f64>,
}

/// Aggregate recommendation scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingScores {
    pub recall_at_m: f64,
    pub recall_at_m_unpopular: f64,
    pub ndcg: f64,
    pub ndcg_unpopular: f64,
    pub m: usize,
    pub unpopular_pct: f64,
    pub users_scored: u64,
    pub users_scored_unpopular: u64,
}

/// Score recommendations for every test user.
///
/// Candidates are the test graph's items, excluding items the user already
/// has in `seen` (the interactions the model was given for these users,
/// typically the holdout-fit part) and items unknown to the state (the model
/// cannot rank them). Items are ranked by expected edge count, ties broken
/// by item id. Users whose relevant set comes out empty are skipped. The
/// unpopular variants drop the `unpopular_pct` highest-degree test items
/// (ties by item id) from both candidates and relevants.
pub fn evaluate_per_user(
    state: &VariationalState,
    test: &BipartiteGraph,
    seen: &BipartiteGraph,
    m: usize,
    unpopular_pct: f64,
) -> Result<Vec<UserScore>, EvalError> {
    if m < 1 {
        return Err(EvalError::BadArg { what: "m must be >= 1" });
    }
    if !(0.0..1.0).contains(&unpopular_pct) {
        return Err(EvalError::BadArg { what: "unpopular_pct must lie in [0, 1)" });
    }
    if test.is_empty() {
        return Err(EvalError::EmptyGraph);
    }

    // Sorted id -> state position indexes.
    let item_index = sorted_index(&state.item_ids);
    let user_index = sorted_index(&state.user_ids);
    let lookup = |index: &[(VertexId, u32)], id: VertexId| -> Option<usize> {
        index
            .binary_search_by_key(&id, |&(i, _)| i)
            .ok()
            .map(|slot| index[slot].1 as usize)
    };

    // Test items known to the state, with their state positions.
    let mut known_items: Vec<(VertexId, usize)> = Vec::with_capacity(test.num_items());
    for &id in test.item_ids() {
        if let Some(pos) = lookup(&item_index, id) {
            known_items.push((id, pos));
        }
    }

    // Popular-item exclusion set by test-graph degree, ties by item id.
    let mut by_degree: Vec<(usize, VertexId)> = (0..test.num_items())
        .map(|p| (test.item_degree(p), test.item_ids()[p]))
        .collect();
    by_degree.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let n_top = (unpopular_pct * test.num_items() as f64) as usize;
    let popular: BTreeSet<VertexId> = by_degree[..n_top].iter().map(|&(_, id)| id).collect();

    let mut out = Vec::new();
    for upos_test in 0..test.num_users() {
        let uid = test.user_ids()[upos_test];
        let upos = lookup(&user_index, uid).ok_or(EvalError::UnknownUser(uid))?;
        let consumed: BTreeSet<VertexId> = match seen.user_pos(uid) {
            Some(p) => seen.user_items(p).iter().map(|&i| seen.item_ids()[i as usize]).collect(),
            None => BTreeSet::new(),
        };
        let relevant_set: BTreeSet<VertexId> = test
            .user_items(upos_test)
            .iter()
            .map(|&i| test.item_ids()[i as usize])
            .collect();

        let mut candidates: Vec<(VertexId, f64)> = Vec::with_capacity(known_items.len());
        let mut relevant: Vec<VertexId> = Vec::new();
        for &(id, ipos) in &known_items {
            if consumed.contains(&id) {
                continue;
            }
            candidates.push((id, score_at(state, upos, ipos)));
            if relevant_set.contains(&id) {
                relevant.push(id);
            }
        }
        if relevant.is_empty() {
            continue;
        }
        candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let ranked: Vec<VertexId> = candidates.iter().map(|&(id, _)| id).collect();

        let recall = recall_at_m(&ranked, &relevant, m)?;
        let ndcg_full = ndcg(&ranked, &relevant)?;

        let ranked_unpop: Vec<VertexId> =
            ranked.iter().copied().filter(|id| !popular.contains(id)).collect();
        let relevant_unpop: Vec<VertexId> =
            relevant.iter().copied().filter(|id| !popular.contains(id)).collect();
        let (recall_unpopular, ndcg_unpopular) = if relevant_unpop.is_empty() {
            (None, None)
        } else {
            (
                Some(recall_at_m(&ranked_unpop, &relevant_unpop, m)?),
                Some(ndcg(&ranked_unpop, &relevant_unpop)?),
            )
        };

        out.push(UserScore {
            user: uid,
            relevant: relevant.len(),
            recall,
            ndcg: ndcg_full,
            recall_unpopular,
            ndcg_unpopular,
        });
    }
    Ok(out)
}

/// Average the per-user scores into the four headline numbers.
pub fn evaluate_recommendations(
    state: &VariationalState,
    test: &BipartiteGraph,
    seen: &BipartiteGraph,
    m: usize,
    unpopular_pct: f64,
) -> Result<RankingScores, EvalError> {
    let rows = evaluate_per_user(state, test, seen, m, unpopular_pct)?;
    if rows.is_empty() {
        return Err(EvalError::NothingToScore);
    }
    let n = rows.len() as f64;
    let recall = rows.iter().map(|r| r.recall).sum::<f64>() / n;
    let ndcg_mean = rows.iter().map(|r| r.ndcg).sum::<f64>() / n;
    let unpop: Vec<&UserScore> = rows.iter().filter(|r| r.recall_unpopular.is_some()).collect();
    let nu = unpop.len() as f64;
    let (recall_unpop, ndcg_unpop) = if unpop.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            unpop.iter().map(|r| r.recall_unpopular.unwrap()).sum::<f64>() / nu,
            unpop.iter().map(|r| r.ndcg_unpopular.unwrap()).sum::<f64>() / nu,
        )
    };
    Ok(RankingScores {
        recall_at_m: recall,
        recall_at_m_unpopular: recall_unpop,
        ndcg: ndcg_mean,
        ndcg_unpopular: ndcg_unpop,
        m,
        unpopular_pct,
        users_scored: rows.len() as u64,
        users_scored_unpopular: unpop.len() as u64,
    })
}

fn sorted_index(ids: &[VertexId]) -> Vec<(VertexId, u32)> {
    let mut index: Vec<(VertexId, u32)> = ids.iter().enumerate().map(|(p, &id)| (id, p as u32)).collect();
    index.sort_unstable();
    index
}
