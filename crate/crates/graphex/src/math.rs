//! Scalar special functions and small numeric helpers shared across modules.

use alloc::vec::Vec;
use libm::log;

/// Digamma function for positive arguments.
///
/// Uses the recurrence to shift the argument above 10, then the asymptotic
/// series with Bernoulli terms through `x^-10`; absolute error is below
/// 1e-13 over the shapes that occur in the gamma factor updates.
pub fn digamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0, "digamma requires x > 0, got {x}");
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    acc + log(x) - 0.5 * inv - tail
}

/// Composite Simpson quadrature of `f` on `[a, b]` with `n` panels (`n` even).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    debug_assert!(n >= 2 && n.is_multiple_of(2));
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + h * i as f64);
    }
    sum * h / 3.0
}

/// Sample mean and (population = false) standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, libm::sqrt(ss / (n - 1.0)))
}

/// Index permutation that sorts `xs` descending, breaking ties by index.
pub fn argsort_desc(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[b].partial_cmp(&xs[a]).unwrap().then(a.cmp(&b)));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digamma_known_values() {
        // psi(1) = -EulerGamma, psi(0.5) = -EulerGamma - 2 ln 2
        assert!((digamma(1.0) + 0.577_215_664_901_532_9).abs() < 1e-12);
        assert!((digamma(0.5) + 1.963_510_026_021_423_5).abs() < 1e-12);
        // recurrence consistency: psi(x+1) = psi(x) + 1/x
        for &x in &[0.1, 0.37, 2.5, 11.0] {
            assert!((digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() < 1e-12);
        }
    }

    #[test]
    fn simpson_polynomial_exact() {
        // Simpson is exact on cubics.
        let got = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 2);
        let want = 4.0 - 4.0 + 2.0;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn mean_sd_basic() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-12);
        assert!((s - libm::sqrt(5.0 / 3.0)).abs() < 1e-12);
    }
}
