//! Polygamma functions for positive real arguments.
//!
//! Upward recurrence shifts the argument to `x >= 6`, where an 8-term
//! asymptotic series in Bernoulli numbers is accurate to double precision.

use crate::error::{Error, Result};

const SWITCHOVER: f64 = 6.0;

/// B_2, B_4, ..., B_16.
const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Digamma phi(x) = d/dx ln Gamma(x) for x > 0.
pub fn digamma(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut z = x;
    while z < SWITCHOVER {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut pow = inv2;
    let mut series = 0.0;
    for (k, b) in BERNOULLI.iter().enumerate() {
        series += b / (2.0 * (k as f64 + 1.0)) * pow;
        pow *= inv2;
    }
    acc + z.ln() - 0.5 / z - series
}

/// Trigamma phi'(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut z = x;
    while z < SWITCHOVER {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut pow = inv2 * inv;
    let mut series = 0.0;
    for b in BERNOULLI {
        series += b * pow;
        pow *= inv2;
    }
    acc + inv + 0.5 * inv2 + series
}

/// Tetragamma phi''(x) for x > 0.
pub fn tetragamma(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut z = x;
    while z < SWITCHOVER {
        acc -= 2.0 / (z * z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut pow = inv2 * inv2;
    let mut series = 0.0;
    for (k, b) in BERNOULLI.iter().enumerate() {
        series += (2.0 * (k as f64 + 1.0) + 1.0) * b * pow;
        pow *= inv2;
    }
    acc - inv2 - inv2 * inv - series
}

/// `polygamma(0, x)` is digamma, `polygamma(1, x)` trigamma and
/// `polygamma(2, x)` tetragamma.
pub fn polygamma(order: u32, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("polygamma requires finite x > 0, got {x}")));
    }
    match order {
        0 => Ok(digamma(x)),
        1 => Ok(trigamma(x)),
        2 => Ok(tetragamma(x)),
        _ => Err(Error::Domain(format!("polygamma order {order} not supported"))),
    }
}

/// ln Gamma(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    // Oracles are computed by direct summation, independent of the
    // recurrence/asymptotic route.

    /// Sum_{n>=1} 1/n^2 with an Euler-Maclaurin tail.
    fn zeta2_oracle() -> f64 {
        let n = 100_000u64;
        let mut s = 0.0;
        for k in (1..=n).rev() {
            let k = k as f64;
            s += 1.0 / (k * k);
        }
        let nf = n as f64;
        s + 1.0 / nf - 1.0 / (2.0 * nf * nf) + 1.0 / (6.0 * nf * nf * nf)
    }

    /// gamma = lim (H_n - ln n) with Euler-Maclaurin correction terms.
    fn euler_gamma_oracle() -> f64 {
        let n = 100_000u64;
        let mut h = 0.0;
        for k in (1..=n).rev() {
            h += 1.0 / k as f64;
        }
        let nf = n as f64;
        h - nf.ln() - 1.0 / (2.0 * nf) + 1.0 / (12.0 * nf * nf)
    }

    /// phi'(x) = Sum_{k>=0} 1/(x+k)^2, tail by Euler-Maclaurin.
    fn trigamma_series(x: f64) -> f64 {
        let n = 200_000usize;
        let mut s = 0.0;
        for k in (0..n).rev() {
            let z = x + k as f64;
            s += 1.0 / (z * z);
        }
        let z = x + n as f64;
        s + 1.0 / z + 1.0 / (2.0 * z * z) + 1.0 / (6.0 * z * z * z)
    }

    #[test]
    fn oracles_agree_with_known_constants() {
        assert!((zeta2_oracle() - PI * PI / 6.0).abs() < 1e-14);
        assert!((euler_gamma_oracle() - 0.577_215_664_901_532_9).abs() < 1e-13);
    }

    #[test]
    fn trigamma_at_one() {
        let v = polygamma(1, 1.0).unwrap();
        assert!((v - zeta2_oracle()).abs() / v < 1e-12);
        assert!((v - 1.644_934_066_848_226_4).abs() < 1e-12);
    }

    #[test]
    fn digamma_at_one() {
        let v = polygamma(0, 1.0).unwrap();
        assert!((v + euler_gamma_oracle()).abs() < 1e-12);
    }

    #[test]
    fn digamma_recurrence() {
        let d = polygamma(0, 2.0).unwrap() - polygamma(0, 1.0).unwrap();
        assert!((d - 1.0).abs() < 1e-14);
        for &x in &[0.1, 0.7, 3.3, 5.9, 6.1, 40.0] {
            let lhs = digamma(x + 1.0) - digamma(x);
            assert!((lhs - 1.0 / x).abs() < 1e-12 * (1.0 / x).max(1.0), "x={x}");
        }
    }

    #[test]
    fn trigamma_matches_series_across_switchover() {
        for &x in &[0.05, 0.5, 1.5, 5.99, 6.0, 6.01, 12.0, 100.0] {
            let a = trigamma(x);
            let b = trigamma_series(x);
            assert!((a - b).abs() / b < 1e-12, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn derivatives_are_consistent() {
        // digamma' = trigamma and trigamma' = tetragamma via central differences
        for &x in &[0.5, 1.0, 2.5, 7.0, 15.0] {
            let h = 1e-5 * x;
            let d1 = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((d1 - trigamma(x)).abs() / trigamma(x) < 1e-8, "x={x}");
            let d2 = (trigamma(x + h) - trigamma(x - h)) / (2.0 * h);
            assert!((d2 - tetragamma(x)).abs() / tetragamma(x).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn half_integer_values() {
        // phi(1/2) = -gamma - 2 ln 2, phi'(1/2) = pi^2/2, phi''(1) = -2 zeta(3)
        let g = 0.577_215_664_901_532_9;
        assert!((digamma(0.5) - (-g - 2.0 * 2f64.ln())).abs() < 1e-13);
        assert!((trigamma(0.5) - PI * PI / 2.0).abs() < 1e-12);
        assert!((tetragamma(1.0) + 2.0 * 1.202_056_903_159_594_2).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(polygamma(0, 0.0).is_err());
        assert!(polygamma(1, -1.5).is_err());
        assert!(polygamma(3, 1.0).is_err());
    }

    #[test]
    fn ln_gamma_values() {
        assert!(ln_gamma(1.0).abs() < 1e-15);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-14);
    }
}
