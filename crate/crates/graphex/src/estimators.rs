//! Plug-in estimation of the sparsity parameters `sigma_U`, `sigma_I` and
//! the sizes `s`, `alpha` from an observed graph.
//!
//! The sigma estimator is a function of the degree sequence alone. Size
//! estimation uses the asymptotic relation
//! `log U = C + sigma log e + (1 - sigma) log s` with the intercept `C`
//! calibrated by simulating from the model at a known size.

use alloc::vec::Vec;
use core::fmt;

use libm::{exp, log, pow};

use crate::math::mean_sd;
use crate::rng::hash3;
use crate::simulate::{simulate_graph, ModelHyperparams, SimError};

#[derive(Debug, Clone, PartialEq)]
pub enum EstimateError {
    EmptyDegrees,
    ZeroDegree,
    BadSigma(f64),
    BadCount { name: &'static str },
    BadSims(u32),
    /// Every calibration replicate yielded an empty graph.
    AllReplicatesEmpty,
    Sim(SimError),
}

impl fmt::Display for EstimateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimateError::EmptyDegrees => write!(f, "degree list is empty"),
            EstimateError::ZeroDegree => write!(f, "degree list contains a zero"),
            EstimateError::BadSigma(s) => write!(f, "sigma_hat={s} must be < 1"),
            EstimateError::BadCount { name } => write!(f, "count {name} must be >= 1"),
            EstimateError::BadSims(n) => write!(f, "n_sims={n} must be >= 1"),
            EstimateError::AllReplicatesEmpty => write!(f, "every calibration replicate was empty"),
            EstimateError::Sim(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for EstimateError {}

impl From<SimError> for EstimateError {
    fn from(e: SimError) -> Self {
        EstimateError::Sim(e)
    }
}

/// Degree-based estimator of the GGP sparsity parameter:
/// `[log U - log( sum_i (1 - 2^-d_i) )] / log 2`.
///
/// `sum_i (1 - 2^-d_i)` estimates the user count of a half-level item
/// subsample, which scales as `2^-sigma` relative to `U`, so the log-ratio
/// reads off sigma. (Thinning the users as well and keeping the extra `1/2`
/// inside the logarithm shifts the estimate up by exactly one.)
///
/// The raw value is returned even when it falls outside the model's
/// admissible range; consumers clamp before using it as a hyperparameter.
pub fn estimate_sigma(degrees: &[u64]) -> Result<f64, EstimateError> {
    if degrees.is_empty() {
        return Err(EstimateError::EmptyDegrees);
    }
    let mut sum = 0.0;
    for &d in degrees {
        if d == 0 {
            return Err(EstimateError::ZeroDegree);
        }
        sum += 1.0 - pow(2.0, -(d as f64));
    }
    Ok((log(degrees.len() as f64) - log(sum)) / core::f64::consts::LN_2)
}

/// Clamp a raw sigma estimate into the range usable as a hyperparameter.
pub fn clamp_sigma(sigma_hat: f64) -> f64 {
    sigma_hat.clamp(-0.99, 0.99)
}

/// Calibration of the size-relation intercept by simulation at a known size.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeCalibration {
    pub c_hat: f64,
    pub n_sims: u32,
    pub sim_params: ModelHyperparams,
    pub per_sim_c: Vec<f64>,
    /// Replicates dropped because the simulated graph was empty.
    pub dropped: u32,
}

impl SizeCalibration {
    /// Relative spread of the per-simulation intercepts, `sd / |mean|`.
    pub fn relative_spread(&self) -> f64 {
        let (m, s) = mean_sd(&self.per_sim_c);
        s / libm::fabs(m)
    }
}

const TAG_CALIBRATE: u64 = 0x6361_4c43;

/// One calibration replicate: simulate at the known size in `h` and return
/// `log U - sigma_hat log e - (1 - sigma_hat) log s`, or `None` when the
/// replicate came out empty. `h` must already carry the estimated sigma
/// values and be pre-validated.
pub fn calibrate_replicate(h: &ModelHyperparams, sigma_hat: f64, seed: u64, index: u32) -> Option<f64> {
    let (g, _) = simulate_graph(h, hash3(seed, TAG_CALIBRATE, index as u64)).ok()?;
    if g.is_empty() {
        return None;
    }
    Some(
        log(g.num_users() as f64) - sigma_hat * log(g.num_edges() as f64)
            - (1.0 - sigma_hat) * log(h.s),
    )
}

/// Estimate the intercept `C` by simulating `n_sims` graphs from `h` (whose
/// user size is known) and averaging the per-simulation values.
pub fn calibrate_c(
    h: &ModelHyperparams,
    sigma_hat: f64,
    n_sims: u32,
    seed: u64,
) -> Result<SizeCalibration, EstimateError> {
    if n_sims < 1 {
        return Err(EstimateError::BadSims(n_sims));
    }
    if !(h.s > 0.0) {
        return Err(EstimateError::Sim(SimError::BadHyperparam { name: "s", value: h.s }));
    }
    h.validate()?;
    let mut per_sim_c = Vec::with_capacity(n_sims as usize);
    let mut dropped = 0;
    for i in 0..n_sims {
        match calibrate_replicate(h, sigma_hat, seed, i) {
            Some(c) => per_sim_c.push(c),
            None => dropped += 1,
        }
    }
    if per_sim_c.is_empty() {
        return Err(EstimateError::AllReplicatesEmpty);
    }
    let (c_hat, _) = mean_sd(&per_sim_c);
    Ok(SizeCalibration { c_hat, n_sims, sim_params: *h, per_sim_c, dropped })
}

/// Solve the size relation for `s`:
/// `s_hat = exp[(log U - sigma_hat log E - C_hat) / (1 - sigma_hat)]`.
pub fn estimate_size(users: u64, edges: u64, sigma_hat: f64, c_hat: f64) -> Result<f64, EstimateError> {
    if users < 1 {
        return Err(EstimateError::BadCount { name: "users" });
    }
    if edges < 1 {
        return Err(EstimateError::BadCount { name: "edges" });
    }
    if !(sigma_hat < 1.0) {
        return Err(EstimateError::BadSigma(sigma_hat));
    }
    Ok(exp(
        (log(users as f64) - sigma_hat * log(edges as f64) - c_hat) / (1.0 - sigma_hat),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_formula_direct_value() {
        // degrees [1,2,3]: (log 3 - log(0.5 + 0.75 + 0.875)) / log 2
        let got = estimate_sigma(&[1, 2, 3]).unwrap();
        let want = (log(3.0) - log(2.125)) / core::f64::consts::LN_2;
        assert!((got - want).abs() < 1e-14);
        assert!((got - 0.4975).abs() < 1e-4);
    }

    #[test]
    fn sigma_limit_all_large_degrees() {
        // 2^-d underflows to 0, the sum becomes U and sigma_hat -> 0: with
        // every degree huge the half-sample keeps every user, the dense
        // regime.
        let got = estimate_sigma(&[5_000, 6_000, 7_000]).unwrap();
        assert!(got.abs() < 1e-12);
    }

    #[test]
    fn sigma_rejects_empty_and_zero() {
        assert!(matches!(estimate_sigma(&[]), Err(EstimateError::EmptyDegrees)));
        assert!(matches!(estimate_sigma(&[2, 0]), Err(EstimateError::ZeroDegree)));
    }

    #[test]
    fn sigma_is_permutation_invariant_and_scale_free() {
        let a = estimate_sigma(&[1, 5, 2, 9, 2]).unwrap();
        let b = estimate_sigma(&[9, 2, 2, 5, 1]).unwrap();
        assert_eq!(a, b);
        // duplicating every degree doubles U and the sum alike
        let doubled = estimate_sigma(&[1, 5, 2, 9, 2, 1, 5, 2, 9, 2]).unwrap();
        assert!((a - doubled).abs() < 1e-14);
    }

    #[test]
    fn size_formula_collapses_and_shifts() {
        // sigma=0, C=0: s_hat = U.
        assert!((estimate_size(123, 999, 0.0, 0.0).unwrap() - 123.0).abs() < 1e-9);
        // shifting C by +log 2 at sigma=0.5 scales s_hat by exp(-2 log 2) = 1/4.
        let base = estimate_size(1000, 50_000, 0.5, 0.3).unwrap();
        let shifted = estimate_size(1000, 50_000, 0.5, 0.3 + core::f64::consts::LN_2).unwrap();
        assert!((shifted / base - 0.25).abs() < 1e-12);
    }

    #[test]
    fn size_monotonicity() {
        let lo = estimate_size(100, 5_000, 0.2, 1.0).unwrap();
        let hi = estimate_size(200, 5_000, 0.2, 1.0).unwrap();
        assert!(hi > lo);
        let lower_c = estimate_size(100, 5_000, 0.2, 0.5).unwrap();
        assert!(lower_c > lo);
    }

    #[test]
    fn size_rejects_bad_inputs() {
        assert!(estimate_size(0, 10, 0.2, 0.0).is_err());
        assert!(estimate_size(10, 0, 0.2, 0.0).is_err());
        assert!(estimate_size(10, 10, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_sim_calibration_equals_its_replicate() {
        let h = ModelHyperparams::survey_defaults(30.0, 30.0);
        let cal = calibrate_c(&h, 0.2, 1, 99).unwrap();
        assert_eq!(cal.per_sim_c.len(), 1);
        assert_eq!(cal.c_hat, cal.per_sim_c[0]);
        let direct = calibrate_replicate(&h, 0.2, 99, 0).unwrap();
        assert_eq!(cal.c_hat, direct);
    }

    #[test]
    fn calibration_rejects_bad_config() {
        let h = ModelHyperparams::survey_defaults(30.0, 30.0);
        assert!(calibrate_c(&h, 0.2, 0, 1).is_err());
        let mut h0 = h;
        h0.s = 0.0;
        assert!(calibrate_c(&h0, 0.2, 5, 1).is_err());
    }

    #[test]
    fn doubling_known_size_shifts_intercept_relation() {
        // log U - sigma log e moves by (1 - sigma) log 2 when s doubles, so
        // the calibrated C (which subtracts (1 - sigma) log s) is unchanged.
        let mut h1 = ModelHyperparams::survey_defaults(40.0, 40.0);
        h1.k = 5;
        let mut h2 = h1;
        h2.s = 80.0;
        let sigma = 0.2;
        let c1 = calibrate_c(&h1, sigma, 24, 5).unwrap();
        let c2 = calibrate_c(&h2, sigma, 24, 6).unwrap();
        let (m1, s1) = mean_sd(&c1.per_sim_c);
        let (m2, s2) = mean_sd(&c2.per_sim_c);
        let n = c1.per_sim_c.len().min(c2.per_sim_c.len()) as f64;
        let se = ((s1 * s1 + s2 * s2) / n).sqrt();
        assert!((m1 - m2).abs() < 2.5 * se, "c at s={}: {m1}, s={}: {m2}, se {se}", h1.s, h2.s);
    }

    #[test]
    fn calibration_spread_is_usable_at_desk_scale() {
        let mut h = ModelHyperparams::survey_defaults(40.0, 40.0);
        h.k = 5;
        let cal = calibrate_c(&h, 0.2, 20, 7).unwrap();
        assert!(cal.relative_spread() < 0.2, "spread {}", cal.relative_spread());
    }
}
