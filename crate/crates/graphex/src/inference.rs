//! Coordinate-ascent variational inference for sparse Poisson matrix
//! factorization.
//!
//! Every latent family gets an independent gamma factor: user weights
//! `gamma_i`, user affinities `theta_ik`, item weights `omega_j`, item
//! affinities `beta_jk`. Binary edges couple to the factors through
//! truncated-Poisson auxiliary allocations whose optimal mean-field
//! distribution is a truncated Poisson at the exponentiated expected logs.
//! Atoms that connect to nothing never appear individually; their total mass
//! per factor (the leftover masses `mu_k`, `rho_k`) enters the rate updates
//! and is approximated by its point-process expectation, estimated by Monte
//! Carlo over prior affinity draws with the weight integral done
//! analytically.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use libm::{exp, expm1, log, pow};

use crate::graph::{BipartiteGraph, VertexId};
use crate::math::digamma;
use crate::rng::{hash2, hash3, Rng};
use crate::simulate::ModelHyperparams;
use crate::sparsity::Side;

#[derive(Debug, Clone, PartialEq)]
pub enum InferError {
    BadConfig { what: &'static str },
    /// State dimensions do not match the graph.
    DimensionMismatch,
    /// The allocation rate vector summed to zero or contained a negative.
    BadRates,
    /// A factor update produced a nonfinite value.
    NonFinite { factor: &'static str },
    /// `fit_test_users` saw items the trained state does not know.
    UnknownItems(Vec<VertexId>),
}

impl fmt::Display for InferError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InferError::BadConfig { what } => write!(f, "invalid fit config: {what}"),
            InferError::DimensionMismatch => write!(f, "state dimensions do not match the graph"),
            InferError::BadRates => write!(f, "allocation rates must be nonnegative with positive sum"),
            InferError::NonFinite { factor } => {
                write!(f, "nonfinite value in factor update: {factor}")
            }
            InferError::UnknownItems(ids) => {
                write!(f, "items unknown to the trained state:")?;
                for id in ids.iter().take(16) {
                    write!(f, " {id}")?;
                }
                if ids.len() > 16 {
                    write!(f, " (+{} more)", ids.len() - 16)?;
                }
                Ok(())
            }
        }
    }
}

impl core::error::Error for InferError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Sparse,
    /// Dense baseline: small negative sigmas and zero sizes, which kills the
    /// leftover masses.
    Dense,
}

/// Which form of the leftover-mass weight integral to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeftoverForm {
    /// Analytic tilted integral `(tau + c)^(sigma - 1)` (and
    /// `(1 - sigma)(tau + c)^(sigma - 2)` for the second moment).
    Tilted,
    /// Plain `1 / (tau + c)` denominator; coincides with `Tilted` at
    /// sigma = 0. Kept for comparison.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub k: usize,
    pub max_iters: u32,
    /// Stop when the mean absolute relative change of the affinity means in
    /// one sweep falls below this.
    pub conv_tol: f64,
    /// Monte Carlo draws per leftover-mass evaluation.
    pub mc_samples: u32,
    pub seed: u64,
    pub mode: FitMode,
    /// Sigma substituted on both sides in dense mode.
    pub dense_sigma: f64,
    pub leftover_form: LeftoverForm,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k: 30,
            max_iters: 200,
            conv_tol: 1e-4,
            mc_samples: 64,
            seed: 0,
            mode: FitMode::Sparse,
            dense_sigma: -0.1,
            leftover_form: LeftoverForm::Tilted,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), InferError> {
        if self.k < 1 {
            return Err(InferError::BadConfig { what: "k must be >= 1" });
        }
        if self.max_iters < 1 {
            return Err(InferError::BadConfig { what: "max_iters must be >= 1" });
        }
        if !(self.conv_tol > 0.0) {
            return Err(InferError::BadConfig { what: "conv_tol must be > 0" });
        }
        if self.mc_samples < 1 {
            return Err(InferError::BadConfig { what: "mc_samples must be >= 1" });
        }
        if !(self.dense_sigma < 1.0) {
            return Err(InferError::BadConfig { what: "dense_sigma must be < 1" });
        }
        Ok(())
    }
}

/// Gamma shape/rate pairs for a per-entity factor family.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaVec {
    pub shape: Vec<f64>,
    pub rate: Vec<f64>,
}

impl GammaVec {
    fn with_len(n: usize) -> Self {
        GammaVec { shape: vec![0.0; n], rate: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    #[inline]
    pub fn mean(&self, i: usize) -> f64 {
        self.shape[i] / self.rate[i]
    }

    #[inline]
    pub fn mean_log(&self, i: usize) -> f64 {
        digamma(self.shape[i]) - log(self.rate[i])
    }
}

/// Gamma shape/rate pairs for a per-entity-per-factor family, row-major
/// `n x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMat {
    pub shape: Vec<f64>,
    pub rate: Vec<f64>,
    pub k: usize,
}

impl GammaMat {
    fn with_dims(n: usize, k: usize) -> Self {
        GammaMat { shape: vec![0.0; n * k], rate: vec![0.0; n * k], k }
    }

    pub fn rows(&self) -> usize {
        self.shape.len().checked_div(self.k).unwrap_or(0)
    }

    #[inline]
    pub fn mean_at(&self, i: usize, l: usize) -> f64 {
        self.shape[i * self.k + l] / self.rate[i * self.k + l]
    }
}

/// Mean-field state: gamma factors for every family, leftover-mass point
/// estimates, and the fit bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub user_ids: Vec<VertexId>,
    pub item_ids: Vec<VertexId>,
    pub gamma: GammaVec,
    pub theta: GammaMat,
    pub omega: GammaVec,
    pub beta: GammaMat,
    /// User-side leftover mass per factor; enters the item updates.
    pub mu: Vec<f64>,
    /// Item-side leftover mass per factor; enters the user updates.
    pub rho: Vec<f64>,
    /// Effective hyperparameters (after any dense-mode substitution).
    pub hyper: ModelHyperparams,
    pub cfg: FitConfig,
    pub iterations: u32,
    /// Convergence metric after each sweep.
    pub history: Vec<f64>,
    /// False when `fit` stopped at `max_iters` without reaching `conv_tol`.
    pub converged: bool,
}

impl VariationalState {
    pub fn user_pos(&self, id: VertexId) -> Option<usize> {
        position_of(&self.user_ids, id)
    }

    pub fn item_pos(&self, id: VertexId) -> Option<usize> {
        position_of(&self.item_ids, id)
    }

    /// State positions for a batch of item ids (one sorted index, then
    /// binary searches).
    pub fn item_positions(&self, ids: &[VertexId]) -> alloc::vec::Vec<Option<u32>> {
        let mut by_id: alloc::vec::Vec<(VertexId, u32)> =
            self.item_ids.iter().enumerate().map(|(p, &id)| (id, p as u32)).collect();
        by_id.sort_unstable();
        ids.iter()
            .map(|&id| by_id.binary_search_by_key(&id, |&(i, _)| i).ok().map(|s| by_id[s].1))
            .collect()
    }

    /// Per-factor item mass `W_l = sum_j E[omega_j] E[beta_jl]`.
    pub fn item_mass(&self) -> Vec<f64> {
        factor_mass(&self.omega, &self.beta)
    }

    /// Per-factor user mass `A_l = sum_i E[gamma_i] E[theta_il]`.
    pub fn user_mass(&self) -> Vec<f64> {
        factor_mass(&self.gamma, &self.theta)
    }
}

fn position_of(ids: &[VertexId], id: VertexId) -> Option<usize> {
    // ids are in graph order, not sorted; linear scan for one-off lookups,
    // batch callers go through item_positions
    ids.iter().position(|&x| x == id)
}

fn factor_mass(weights: &GammaVec, affinities: &GammaMat) -> Vec<f64> {
    let k = affinities.k;
    let mut mass = vec![0.0; k];
    for i in 0..weights.len() {
        let w = weights.mean(i);
        for l in 0..k {
            mass[l] += w * affinities.mean_at(i, l);
        }
    }
    mass
}

/// Moments of the K-dimensional truncated Poisson at rates `lambdas`:
/// a total `N ~ Poisson(sum lambdas)` conditioned on `N > 0`, thinned
/// multinomially. Returns the expected total `Lambda / (1 - exp(-Lambda))`
/// and the per-component proportions `lambda_k / Lambda`; per-component
/// means are their product.
pub fn tpoi_moments(lambdas: &[f64]) -> Result<(f64, Vec<f64>), InferError> {
    let mut total = 0.0;
    for &l in lambdas {
        if !(l >= 0.0) {
            return Err(InferError::BadRates);
        }
        total += l;
    }
    if !(total > 0.0) {
        return Err(InferError::BadRates);
    }
    let expected_total = tpoi_expected_total(total);
    let proportions = lambdas.iter().map(|&l| l / total).collect();
    Ok((expected_total, proportions))
}

#[inline]
fn tpoi_expected_total(total: f64) -> f64 {
    // Below 1e-12 the conditioning forces N = 1; the closed form would lose
    // all precision to cancellation.
    if total < 1e-12 {
        1.0
    } else {
        total / -expm1(-total)
    }
}

const TAG_LEFTOVER: u64 = 0x6c66_744d;
const TAG_INIT: u64 = 0x696e_6954;
const TAG_SWEEP: u64 = 0x7377_5045;

/// Leftover-mass moments for one side: the expected per-factor mass of atoms
/// that connect to no edges, and its variance.
///
/// For the user side, draws `theta* ~ Gamma(a, b)^K` i.i.d. and averages
/// `theta*_l w1(c)` and `theta*_l^2 w2(c)` with `c = sum_k theta*_k W_k`,
/// `W_k` the expected item mass; the weight integral against the Lévy
/// measure is analytic (`w1 = (tau + c)^(sigma-1)`,
/// `w2 = (1-sigma)(tau + c)^(sigma-2)`). Item side is symmetric. Scaled by
/// the side's size, so zero size (dense mode) yields zeros.
pub fn leftover_mass(
    side: Side,
    state: &VariationalState,
    mc_samples: u32,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let h = &state.hyper;
    match side {
        Side::User => leftover_stats(
            h.s,
            h.tau_u,
            h.sigma_u,
            h.a,
            h.b,
            &state.item_mass(),
            state.cfg.leftover_form,
            mc_samples,
            seed,
        ),
        Side::Item => leftover_stats(
            h.alpha,
            h.tau_i,
            h.sigma_i,
            h.c,
            h.d,
            &state.user_mass(),
            state.cfg.leftover_form,
            mc_samples,
            seed,
        ),
    }
}

#[allow(clippy::too_many_arguments)]
fn leftover_stats(
    size: f64,
    tau: f64,
    sigma: f64,
    shape: f64,
    rate: f64,
    opposite_mass: &[f64],
    form: LeftoverForm,
    mc_samples: u32,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let k = opposite_mass.len();
    if size == 0.0 {
        return (vec![0.0; k], vec![0.0; k]);
    }
    let mut rng = Rng::new(hash2(seed, TAG_LEFTOVER));
    let mut mean = vec![0.0; k];
    let mut var = vec![0.0; k];
    let mut draws = vec![0.0; k];
    for _ in 0..mc_samples {
        let mut c = 0.0;
        for l in 0..k {
            let t = rng.gamma(shape, rate);
            draws[l] = t;
            c += t * opposite_mass[l];
        }
        let (w1, w2) = match form {
            LeftoverForm::Tilted => (
                pow(tau + c, sigma - 1.0),
                (1.0 - sigma) * pow(tau + c, sigma - 2.0),
            ),
            LeftoverForm::Literal => {
                let inv = 1.0 / (tau + c);
                (inv, inv * inv)
            }
        };
        for l in 0..k {
            mean[l] += draws[l] * w1;
            var[l] += draws[l] * draws[l] * w2;
        }
    }
    let scale = size / mc_samples as f64;
    for l in 0..k {
        mean[l] *= scale;
        var[l] *= scale;
    }
    (mean, var)
}

/// Initial state: shapes at their prior values plus Uniform(0, 0.1) jitter
/// to break the multinomial symmetry (weight shapes get one allocation unit
/// added so they start positive for sigma > 0). Rates are set so that each
/// entity's initial weight mean is the prior mean scaled by its relative
/// degree and each side's per-factor mass starts at `sqrt(e / K)`, the scale
/// the allocation balance drives it to; starting at the prior scale instead
/// leaves the first sweeps swinging over orders of magnitude. Leftover
/// masses start at their no-opposite-mass closed form.
pub fn init_state(g: &BipartiteGraph, hyper: &ModelHyperparams, cfg: &FitConfig) -> VariationalState {
    let k = cfg.k;
    let nu = g.num_users();
    let ni = g.num_items();
    let mut rng = Rng::new(hash2(cfg.seed, TAG_INIT));
    let mut jitter = |base: f64| base + rng.uniform(0.0, 0.1);

    let edges = g.num_edges().max(1) as f64;
    let target_mass = libm::sqrt(edges / k as f64);
    let mean_user_degree = edges / nu.max(1) as f64;
    let mean_item_degree = edges / ni.max(1) as f64;
    let gamma_mean = (1.05 - hyper.sigma_u) / hyper.tau_u;
    let theta_rate = (hyper.a + 0.05) * nu.max(1) as f64 * gamma_mean / target_mass;
    let omega_mean = (1.05 - hyper.sigma_i) / hyper.tau_i;
    let beta_rate = (hyper.c + 0.05) * ni.max(1) as f64 * omega_mean / target_mass;

    let mut gamma = GammaVec::with_len(nu);
    for i in 0..nu {
        gamma.shape[i] = jitter(1.0 - hyper.sigma_u);
        let mean = gamma_mean * g.user_degree(i) as f64 / mean_user_degree;
        gamma.rate[i] = gamma.shape[i] / mean;
    }
    let mut theta = GammaMat::with_dims(nu, k);
    for e in 0..nu * k {
        theta.shape[e] = jitter(hyper.a);
        theta.rate[e] = theta_rate;
    }
    let mut omega = GammaVec::with_len(ni);
    for j in 0..ni {
        omega.shape[j] = jitter(1.0 - hyper.sigma_i);
        let mean = omega_mean * g.item_degree(j) as f64 / mean_item_degree;
        omega.rate[j] = omega.shape[j] / mean;
    }
    let mut beta = GammaMat::with_dims(ni, k);
    for e in 0..ni * k {
        beta.shape[e] = jitter(hyper.c);
        beta.rate[e] = beta_rate;
    }

    let zero_mass = vec![0.0; k];
    let (mu, _) = leftover_stats(hyper.s, hyper.tau_u, hyper.sigma_u, hyper.a, hyper.b, &zero_mass, cfg.leftover_form, cfg.mc_samples, hash3(cfg.seed, TAG_INIT, 1));
    let (rho, _) = leftover_stats(hyper.alpha, hyper.tau_i, hyper.sigma_i, hyper.c, hyper.d, &zero_mass, cfg.leftover_form, cfg.mc_samples, hash3(cfg.seed, TAG_INIT, 2));

    VariationalState {
        user_ids: g.user_ids().to_vec(),
        item_ids: g.item_ids().to_vec(),
        gamma,
        theta,
        omega,
        beta,
        mu,
        rho,
        hyper: *hyper,
        cfg: *cfg,
        iterations: 0,
        history: Vec::new(),
        converged: false,
    }
}

/// One full coordinate-ascent sweep, in fixed order: recompute the leftover
/// masses, compute the expected truncated-Poisson allocations of every
/// observed edge at the pre-sweep expectations, update the user factors,
/// then update the item factors against the refreshed user masses.
pub fn cavi_iteration(g: &BipartiteGraph, state: &VariationalState) -> Result<VariationalState, InferError> {
    if g.user_ids() != &state.user_ids[..] || g.item_ids() != &state.item_ids[..] {
        return Err(InferError::DimensionMismatch);
    }
    sweep(g, state, None, false)
}

fn sweep(
    g: &BipartiteGraph,
    state: &VariationalState,
    item_map: Option<&[u32]>,
    user_only: bool,
) -> Result<VariationalState, InferError> {
    let cfg = &state.cfg;
    let h = &state.hyper;
    let k = cfg.k;
    let nu = g.num_users();
    let n_state_items = state.omega.len();

    // Pre-sweep expectations.
    let e_gamma: Vec<f64> = (0..nu).map(|i| state.gamma.mean(i)).collect();
    let elog_gamma: Vec<f64> = (0..nu).map(|i| state.gamma.mean_log(i)).collect();
    let e_omega: Vec<f64> = (0..n_state_items).map(|j| state.omega.mean(j)).collect();
    let elog_omega: Vec<f64> = (0..n_state_items).map(|j| state.omega.mean_log(j)).collect();
    let e_theta: Vec<f64> = state.theta.shape.iter().zip(&state.theta.rate).map(|(s, r)| s / r).collect();
    let elog_theta: Vec<f64> = state
        .theta
        .shape
        .iter()
        .zip(&state.theta.rate)
        .map(|(&s, &r)| digamma(s) - log(r))
        .collect();
    let e_beta: Vec<f64> = state.beta.shape.iter().zip(&state.beta.rate).map(|(s, r)| s / r).collect();
    let elog_beta: Vec<f64> = state
        .beta
        .shape
        .iter()
        .zip(&state.beta.rate)
        .map(|(&s, &r)| digamma(s) - log(r))
        .collect();

    // Opposite-side masses at pre-sweep values. The coupling sums over the
    // items of the graph being fit (which is every state item for a full
    // fit, but only the holdout-fit subset when refitting users): the
    // conditionals sum over atoms that connect in the dataset at hand.
    let mut item_mass = vec![0.0; k];
    for jg in 0..g.num_items() {
        let j = match item_map {
            Some(m) => m[jg] as usize,
            None => jg,
        };
        for l in 0..k {
            item_mass[l] += e_omega[j] * e_beta[j * k + l];
        }
    }

    // Leftover masses recomputed first, from pre-sweep expectations. The
    // Monte Carlo draws use one fit-level seed rather than a per-sweep one:
    // the sweep is then a fixed deterministic map, so the iteration can
    // settle to a genuine fixed point instead of jittering at the MC noise
    // floor.
    let sweep_seed = hash2(cfg.seed, TAG_SWEEP);
    let (mu, _) = leftover_stats(h.s, h.tau_u, h.sigma_u, h.a, h.b, &item_mass, cfg.leftover_form, cfg.mc_samples, hash2(sweep_seed, 1));
    let rho = if user_only {
        state.rho.clone()
    } else {
        let mut user_mass = vec![0.0; k];
        for i in 0..nu {
            for l in 0..k {
                user_mass[l] += e_gamma[i] * e_theta[i * k + l];
            }
        }
        leftover_stats(h.alpha, h.tau_i, h.sigma_i, h.c, h.d, &user_mass, cfg.leftover_form, cfg.mc_samples, hash2(sweep_seed, 2)).0
    };

    // Expected allocations per edge, accumulated on both sides.
    let mut user_alloc = vec![0.0; nu * k];
    let mut user_total = vec![0.0; nu];
    let mut item_alloc = vec![0.0; n_state_items * k];
    let mut item_total = vec![0.0; n_state_items];
    let mut lambda = vec![0.0; k];
    for i in 0..nu {
        for &jg in g.user_items(i) {
            let j = match item_map {
                Some(m) => m[jg as usize] as usize,
                None => jg as usize,
            };
            let base = elog_gamma[i] + elog_omega[j];
            let mut total = 0.0;
            for l in 0..k {
                let v = exp(base + elog_theta[i * k + l] + elog_beta[j * k + l]);
                lambda[l] = v;
                total += v;
            }
            if !(total > 0.0) || !total.is_finite() {
                return Err(InferError::NonFinite { factor: "allocation rates" });
            }
            let expected = tpoi_expected_total(total);
            user_total[i] += expected;
            item_total[j] += expected;
            for l in 0..k {
                let e = expected * (lambda[l] / total);
                user_alloc[i * k + l] += e;
                item_alloc[j * k + l] += e;
            }
        }
    }

    // User factor updates from the pre-sweep snapshot.
    let mut new = state.clone();
    for i in 0..nu {
        let mut gamma_rate = h.tau_u;
        for l in 0..k {
            let coupling = item_mass[l] + rho[l];
            new.theta.shape[i * k + l] = h.a + user_alloc[i * k + l];
            new.theta.rate[i * k + l] = h.b + e_gamma[i] * coupling;
            gamma_rate += e_theta[i * k + l] * coupling;
        }
        new.gamma.shape[i] = -h.sigma_u + user_total[i];
        new.gamma.rate[i] = gamma_rate;
    }

    // Item factor updates against the refreshed user mass.
    if !user_only {
        let mut user_mass_new = vec![0.0; k];
        for i in 0..nu {
            let g_new = new.gamma.shape[i] / new.gamma.rate[i];
            for l in 0..k {
                user_mass_new[l] += g_new * new.theta.shape[i * k + l] / new.theta.rate[i * k + l];
            }
        }
        for j in 0..n_state_items {
            let mut omega_rate = h.tau_i;
            for l in 0..k {
                let coupling = user_mass_new[l] + mu[l];
                new.beta.shape[j * k + l] = h.c + item_alloc[j * k + l];
                new.beta.rate[j * k + l] = h.d + e_omega[j] * coupling;
                omega_rate += e_beta[j * k + l] * coupling;
            }
            new.omega.shape[j] = -h.sigma_i + item_total[j];
            new.omega.rate[j] = omega_rate;
        }
    }

    for (factor, values) in [
        ("gamma", &new.gamma.shape),
        ("gamma", &new.gamma.rate),
        ("theta", &new.theta.shape),
        ("theta", &new.theta.rate),
        ("omega", &new.omega.shape),
        ("omega", &new.omega.rate),
        ("beta", &new.beta.shape),
        ("beta", &new.beta.rate),
    ] {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(InferError::NonFinite { factor });
        }
    }

    // Mean absolute relative change of the affinity means.
    let mut change = 0.0;
    let mut count = 0usize;
    for e in 0..nu * k {
        let old = e_theta[e];
        let nw = new.theta.shape[e] / new.theta.rate[e];
        change += libm::fabs(nw - old) / old;
        count += 1;
    }
    if !user_only {
        for e in 0..n_state_items * k {
            let old = e_beta[e];
            let nw = new.beta.shape[e] / new.beta.rate[e];
            change += libm::fabs(nw - old) / old;
            count += 1;
        }
    }
    let metric = change / count as f64;

    new.mu = mu;
    new.rho = rho;
    new.iterations = state.iterations + 1;
    new.history.push(metric);
    Ok(new)
}

/// Effective hyperparameters for a fit: dense mode substitutes
/// `sigma_U = sigma_I = dense_sigma` and `s = alpha = 0`.
pub fn effective_hyper(hyper: &ModelHyperparams, cfg: &FitConfig) -> ModelHyperparams {
    match cfg.mode {
        FitMode::Sparse => *hyper,
        FitMode::Dense => {
            let mut h = *hyper;
            h.sigma_u = cfg.dense_sigma;
            h.sigma_i = cfg.dense_sigma;
            h.s = 0.0;
            h.alpha = 0.0;
            h
        }
    }
}

/// Run CAVI sweeps until the convergence metric drops below `cfg.conv_tol`
/// or `cfg.max_iters` is reached; non-convergence is flagged on the returned
/// state, not an error. Repeated fits with the same seed are bit-identical.
pub fn fit(g: &BipartiteGraph, cfg: &FitConfig, hyper: &ModelHyperparams) -> Result<VariationalState, InferError> {
    cfg.validate()?;
    let h = effective_hyper(hyper, cfg);
    let mut state = init_state(g, &h, cfg);
    for _ in 0..cfg.max_iters {
        state = sweep(g, &state, None, false)?;
        if *state.history.last().unwrap() < cfg.conv_tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Refit the user side on a holdout graph with the item factors, sigmas, and
/// item leftover mass frozen from a trained state.
///
/// `user_size` is the size of the user space the new users inhabit (the
/// test-part user size); a dense-mode state keeps its zero size, so no user
/// leftover mass or fresh predictive atoms appear. The returned state covers
/// the holdout users merged with the trained item factors, whose values are
/// carried over bit for bit.
pub fn fit_test_users(
    holdoutfit: &BipartiteGraph,
    trained: &VariationalState,
    cfg: &FitConfig,
    user_size: f64,
) -> Result<VariationalState, InferError> {
    cfg.validate()?;
    if cfg.k != trained.cfg.k {
        return Err(InferError::BadConfig { what: "k must match the trained state" });
    }
    let mut by_id: Vec<(VertexId, u32)> =
        trained.item_ids.iter().enumerate().map(|(p, &id)| (id, p as u32)).collect();
    by_id.sort_unstable();
    let mut unknown = Vec::new();
    let mut item_map = Vec::with_capacity(holdoutfit.num_items());
    for &id in holdoutfit.item_ids() {
        match by_id.binary_search_by_key(&id, |&(i, _)| i) {
            Ok(slot) => item_map.push(by_id[slot].1),
            Err(_) => unknown.push(id),
        }
    }
    if !unknown.is_empty() {
        return Err(InferError::UnknownItems(unknown));
    }

    let mut hyper = trained.hyper;
    hyper.s = match trained.cfg.mode {
        FitMode::Sparse => user_size,
        FitMode::Dense => 0.0,
    };
    let mut state = init_state(holdoutfit, &hyper, cfg);
    // Adopt the frozen globals: full trained item factors and leftover.
    state.item_ids = trained.item_ids.clone();
    state.omega = trained.omega.clone();
    state.beta = trained.beta.clone();
    state.rho = trained.rho.clone();

    for _ in 0..cfg.max_iters {
        state = sweep(holdoutfit, &state, Some(&item_map), true)?;
        if *state.history.last().unwrap() < cfg.conv_tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
