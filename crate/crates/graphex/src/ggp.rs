//! Sampling the atoms of a generalized gamma process (GGP) restricted to a
//! bounded label interval `[0, size)`.
//!
//! The GGP is the Poisson process on weights with Lévy intensity
//! `u^-(1+sigma) exp(-tau u) / Gamma(1-sigma)`. For `sigma < 0` the process
//! has finite activity and its weights are i.i.d. `Gamma(-sigma, tau)`; for
//! `sigma` in `[0, 1)` activity is infinite and atoms above an adaptive
//! threshold `eps` are sampled exactly, with `eps` chosen so the expected
//! mass lost to truncation stays below a tolerance.

use alloc::vec::Vec;
use core::fmt;

use libm::{exp, log, pow, tgamma};

use crate::math::simpson;
use crate::rng::{hash2, Rng};

#[derive(Debug, Clone, PartialEq)]
pub enum GgpError {
    /// `(sigma, tau)` outside the region supported by this crate:
    /// `sigma < 1` and `tau > 0`.
    BadParams { sigma: f64, tau: f64 },
    BadSize(f64),
    BadTolerance(f64),
}

impl fmt::Display for GgpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GgpError::BadParams { sigma, tau } => {
                write!(f, "inadmissible GGP parameters sigma={sigma}, tau={tau} (need sigma < 1, tau > 0)")
            }
            GgpError::BadSize(s) => write!(f, "GGP size must be finite and >= 0, got {s}"),
            GgpError::BadTolerance(t) => write!(f, "truncation tolerance must be > 0, got {t}"),
        }
    }
}

impl core::error::Error for GgpError {}

/// Parameters of a size-restricted GGP.
///
/// The process itself admits `tau = 0` when `sigma <= 0`; this crate requires
/// `tau > 0` throughout because the inference conditionals and the simulator
/// assume finite weight moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgpParams {
    pub sigma: f64,
    pub tau: f64,
    pub size: f64,
}

impl GgpParams {
    pub fn new(sigma: f64, tau: f64, size: f64) -> Result<Self, GgpError> {
        let p = GgpParams { sigma, tau, size };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GgpError> {
        if !(self.sigma < 1.0) || !self.sigma.is_finite() || !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(GgpError::BadParams { sigma: self.sigma, tau: self.tau });
        }
        if !(self.size >= 0.0) || !self.size.is_finite() {
            return Err(GgpError::BadSize(self.size));
        }
        Ok(())
    }
}

/// Atoms of a size-restricted weighted point process.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAtoms {
    pub weights: Vec<f64>,
    pub labels: Vec<f64>,
}

impl WeightedAtoms {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Campbell first moment of the restricted process:
/// `size * integral of u g_{sigma,tau}(du) = size * tau^(sigma-1)`.
pub fn expected_total_mass(params: &GgpParams) -> f64 {
    params.size * pow(params.tau, params.sigma - 1.0)
}

/// Default truncation tolerance: 1e-6 of the expected total mass, so the
/// truncation error is negligible relative to the edge-probability scale.
pub fn default_trunc_tol(params: &GgpParams) -> f64 {
    1e-6 * expected_total_mass(params)
}

/// Expected mass below `eps`: `size * integral_0^eps u g_{sigma,tau}(du)`.
///
/// The substitution `u = t^(1/(1-sigma))` removes the endpoint singularity,
/// leaving a smooth integrand for Simpson quadrature.
pub fn truncated_mass_below(params: &GgpParams, eps: f64) -> f64 {
    if eps <= 0.0 || params.size == 0.0 {
        return 0.0;
    }
    let om = 1.0 - params.sigma;
    let upper = pow(eps, om);
    let integral = simpson(|t| exp(-params.tau * pow(t, 1.0 / om)), 0.0, upper, 128) / om;
    params.size * integral / tgamma(om)
}

/// Largest threshold (to ~1e-3 relative precision) whose truncated mass does
/// not exceed `trunc_tol`, found by bisection in log space.
///
/// The power-law part of the intensity gives a feasible starting point in
/// closed form (dropping `exp(-tau u) <= 1` only overestimates the mass), so
/// the bracket is tight before bisection starts.
pub fn truncation_threshold(params: &GgpParams, trunc_tol: f64) -> f64 {
    debug_assert!(trunc_tol > 0.0 && params.size > 0.0);
    let om = 1.0 - params.sigma;
    let mut lo = pow(trunc_tol * om * tgamma(om) / params.size, 1.0 / om).max(1e-300);
    debug_assert!(truncated_mass_below(params, lo) <= trunc_tol * 1.000_001);
    let mut hi = lo;
    while truncated_mass_below(params, hi) <= trunc_tol {
        lo = hi;
        hi *= 4.0;
        if hi > 1e30 {
            return hi;
        }
    }
    let (mut llo, mut lhi) = (log(lo), log(hi));
    for _ in 0..20 {
        let mid = 0.5 * (llo + lhi);
        if truncated_mass_below(params, exp(mid)) <= trunc_tol {
            llo = mid;
        } else {
            lhi = mid;
        }
    }
    exp(llo)
}

const TAG_GGP: u64 = 0x6767_7031;
const TAG_LABELS: u64 = 0x6767_7032;

/// Sample the atoms of the restricted GGP.
///
/// * `sigma < 0`: atom count is Poisson(`size * tau^sigma / (-sigma)`) with
///   i.i.d. `Gamma(-sigma, tau)` weights.
/// * `sigma in (0, 1)`: candidates above `eps` are drawn from the dominating
///   measure `u^-(1+sigma) / Gamma(1-sigma)` (closed-form tail inverse) and
///   accepted with probability `exp(-tau u)`.
/// * `sigma = 0` (gamma process limit): same `eps`-truncation, with a
///   two-piece dominating measure since `u^-1` has no normalizable tail:
///   `u^-1` on `[eps, 1)` accepted with `exp(-tau u)`, and `exp(-tau u)` on
///   `[1, inf)` accepted with `1/u`.
///
/// Labels are i.i.d. Uniform`[0, size)`. Deterministic given
/// `(params, trunc_tol, seed)`.
pub fn sample_ggp(params: &GgpParams, trunc_tol: f64, seed: u64) -> Result<WeightedAtoms, GgpError> {
    params.validate()?;
    if params.size == 0.0 {
        return Ok(WeightedAtoms { weights: Vec::new(), labels: Vec::new() });
    }
    if params.sigma >= 0.0 && !(trunc_tol > 0.0) {
        return Err(GgpError::BadTolerance(trunc_tol));
    }
    let mut rng = Rng::new(hash2(seed, TAG_GGP));
    let sigma = params.sigma;
    let tau = params.tau;

    let mut weights = Vec::new();
    if sigma < 0.0 {
        // Total Lévy mass: tau^sigma * Gamma(-sigma) / Gamma(1-sigma) = tau^sigma / (-sigma).
        let rate = params.size * pow(tau, sigma) / -sigma;
        let n = rng.poisson(rate);
        weights.reserve(n as usize);
        for _ in 0..n {
            weights.push(rng.gamma(-sigma, tau));
        }
    } else if sigma > 0.0 {
        let eps = truncation_threshold(params, trunc_tol);
        let candidate_rate = params.size * pow(eps, -sigma) / (sigma * tgamma(1.0 - sigma));
        let n = rng.poisson(candidate_rate);
        for _ in 0..n {
            let u = eps * pow(rng.next_f64(), -1.0 / sigma);
            if rng.bernoulli(exp(-tau * u)) {
                weights.push(u);
            }
        }
    } else {
        let eps = truncation_threshold(params, trunc_tol);
        if eps < 1.0 {
            let rate_inner = params.size * log(1.0 / eps);
            let n = rng.poisson(rate_inner);
            let leps = log(eps);
            for _ in 0..n {
                let u = exp(leps * (1.0 - rng.next_f64()));
                if rng.bernoulli(exp(-tau * u)) {
                    weights.push(u);
                }
            }
        }
        let lo = if eps > 1.0 { eps } else { 1.0 };
        let rate_tail = params.size * exp(-tau * lo) / tau;
        let n = rng.poisson(rate_tail);
        for _ in 0..n {
            let u = lo + rng.exponential(tau);
            if rng.bernoulli(1.0 / u) {
                weights.push(u);
            }
        }
    }

    let mut label_rng = Rng::new(hash2(seed, TAG_LABELS));
    let labels = (0..weights.len()).map(|_| label_rng.uniform(0.0, params.size)).collect();
    Ok(WeightedAtoms { weights, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::mean_sd;

    #[test]
    fn rejects_inadmissible_params() {
        assert!(GgpParams::new(1.0, 1.0, 1.0).is_err());
        assert!(GgpParams::new(1.5, 1.0, 1.0).is_err());
        assert!(GgpParams::new(0.5, 0.0, 1.0).is_err());
        assert!(GgpParams::new(0.5, -1.0, 1.0).is_err());
        assert!(GgpParams::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(GgpParams::new(0.5, 1.0, -2.0).is_err());
        assert!(GgpParams::new(-0.5, 1.0, 0.0).is_ok());
    }

    #[test]
    fn expected_mass_closed_form() {
        let p = GgpParams::new(0.2, 1.0, 1.0).unwrap();
        assert!((expected_total_mass(&p) - 1.0).abs() < 1e-15);
        let p = GgpParams::new(-0.1, 2.0, 1.0).unwrap();
        assert!((expected_total_mass(&p) - pow(2.0, -1.1)).abs() < 1e-15);
        assert!((expected_total_mass(&p) - 0.4665).abs() < 1e-4);
        let p = GgpParams::new(0.3, 1.0, 0.0).unwrap();
        assert_eq!(expected_total_mass(&p), 0.0);
    }

    #[test]
    fn negative_sigma_atom_count_and_weight_moments() {
        // sigma=-1, tau=1, size=10: expected count 10, weights Gamma(1,1).
        let p = GgpParams::new(-1.0, 1.0, 10.0).unwrap();
        let mut counts = Vec::new();
        let mut all = Vec::new();
        for seed in 0..400 {
            let atoms = sample_ggp(&p, 1e-9, seed).unwrap();
            counts.push(atoms.len() as f64);
            all.extend_from_slice(&atoms.weights);
        }
        let (mc, sc) = mean_sd(&counts);
        let se = sc / (counts.len() as f64).sqrt();
        assert!((mc - 10.0).abs() < 3.0 * se, "count mean {mc}, se {se}");
        let (mw, sw) = mean_sd(&all);
        assert!((mw - 1.0).abs() < 0.03, "weight mean {mw}");
        assert!((sw - 1.0).abs() < 0.05, "weight sd {sw}");
    }

    #[test]
    fn truncation_respects_threshold_and_tolerance() {
        // sigma=0.5 at this tolerance puts the threshold near 1e-12, with
        // about 1.3M atoms above it per sample; a few seeds suffice.
        let p = GgpParams::new(0.5, 1.0, 1.0).unwrap();
        let tol = 1e-6;
        let eps = truncation_threshold(&p, tol);
        assert!(truncated_mass_below(&p, eps) <= tol * 1.01);
        for seed in 0..3 {
            let atoms = sample_ggp(&p, tol, seed).unwrap();
            for &w in &atoms.weights {
                assert!(w >= eps, "weight {w} below threshold {eps}");
            }
        }
    }

    #[test]
    fn labels_fall_in_size_interval() {
        let p = GgpParams::new(0.2, 1.0, 7.5).unwrap();
        let atoms = sample_ggp(&p, default_trunc_tol(&p), 3).unwrap();
        assert_eq!(atoms.weights.len(), atoms.labels.len());
        for &l in &atoms.labels {
            assert!((0.0..7.5).contains(&l));
        }
    }

    #[test]
    fn empirical_mass_matches_campbell_moment() {
        // sigma=0.2, tau=1, size=1: first moment of the Lévy measure is 1.
        let p = GgpParams::new(0.2, 1.0, 1.0).unwrap();
        let masses: Vec<f64> = (0..200)
            .map(|seed| sample_ggp(&p, default_trunc_tol(&p), seed).unwrap().total_mass())
            .collect();
        let (m, s) = mean_sd(&masses);
        let se = s / (masses.len() as f64).sqrt();
        assert!((m - 1.0).abs() < 3.0 * se, "mass mean {m}, se {se}");
    }

    #[test]
    fn gamma_process_limit_mass() {
        // sigma=0: expected total mass is tau^-1 per unit size.
        let p = GgpParams::new(0.0, 2.0, 5.0).unwrap();
        let masses: Vec<f64> = (0..300)
            .map(|seed| sample_ggp(&p, default_trunc_tol(&p), seed).unwrap().total_mass())
            .collect();
        let (m, s) = mean_sd(&masses);
        let se = s / (masses.len() as f64).sqrt();
        assert!((m - 2.5).abs() < 3.0 * se, "mass mean {m}, se {se}");
    }

    #[test]
    fn truncation_bias_shrinks_with_tolerance() {
        // The bias between tolerances is at most the coarser tolerance; the
        // comparison of empirical means carries Monte Carlo noise on top.
        let p = GgpParams::new(0.3, 1.0, 1.0).unwrap();
        let tol = 0.02;
        let n = 2_000u64;
        let mut coarse = Vec::new();
        let mut fine = Vec::new();
        for seed in 0..n {
            coarse.push(sample_ggp(&p, tol, seed).unwrap().total_mass());
            fine.push(sample_ggp(&p, tol / 10.0, seed + 10_000).unwrap().total_mass());
        }
        let (mc, sc) = mean_sd(&coarse);
        let (mf, sf) = mean_sd(&fine);
        let se = ((sc * sc + sf * sf) / n as f64).sqrt();
        assert!((mc - mf).abs() < 10.0 * tol + 3.0 * se, "coarse {mc} fine {mf} se {se}");
        // and the coarser run must sit below the finer one in expectation
        assert!(mc <= mf + 3.0 * se, "coarse {mc} above fine {mf}");
    }

    #[test]
    fn atom_count_scales_linearly_in_size() {
        let tol = 1e-5;
        let mut c1 = Vec::new();
        let mut c2 = Vec::new();
        for seed in 0..300 {
            let p1 = GgpParams::new(0.4, 1.0, 1.0).unwrap();
            let p2 = GgpParams::new(0.4, 1.0, 2.0).unwrap();
            c1.push(sample_ggp(&p1, tol, seed).unwrap().len() as f64);
            c2.push(sample_ggp(&p2, 2.0 * tol, seed + 50_000).unwrap().len() as f64);
        }
        let (m1, s1) = mean_sd(&c1);
        let (m2, s2) = mean_sd(&c2);
        let se = (s2 * s2 / 300.0 + 4.0 * s1 * s1 / 300.0).sqrt();
        assert!((m2 - 2.0 * m1).abs() < 2.0 * se, "m1 {m1} m2 {m2} se {se}");
    }

    #[test]
    fn zero_size_yields_no_atoms() {
        let p = GgpParams::new(0.2, 1.0, 0.0).unwrap();
        assert!(sample_ggp(&p, 1.0, 0).unwrap().is_empty());
    }
}
