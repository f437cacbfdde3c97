//! Piecewise cubic Hermite interpolation on strictly increasing knots.

use crate::error::{Error, Result};

/// Three-point slopes, second-order accurate on non-uniform grids.
fn smooth_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 2 {
        let d = (y[1] - y[0]) / (x[1] - x[0]);
        return vec![d, d];
    }
    let mut out = vec![0.0; n];
    for k in 0..n {
        let (a, b, c) = if k == 0 {
            (0, 1, 2)
        } else if k == n - 1 {
            (n - 3, n - 2, n - 1)
        } else {
            (k - 1, k, k + 1)
        };
        // derivative of the quadratic through (a, b, c) evaluated at x[k]
        let (xa, xb, xc) = (x[a], x[b], x[c]);
        let xk = x[k];
        let la = (2.0 * xk - xb - xc) / ((xa - xb) * (xa - xc));
        let lb = (2.0 * xk - xa - xc) / ((xb - xa) * (xb - xc));
        let lc = (2.0 * xk - xa - xb) / ((xc - xa) * (xc - xb));
        out[k] = la * y[a] + lb * y[b] + lc * y[c];
    }
    out
}

/// Fritsch-Carlson monotone slopes.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let mut v = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if v * d0 <= 0.0 {
            v = 0.0;
        } else if d0 * d1 <= 0.0 && v.abs() > 3.0 * d0.abs() {
            v = 3.0 * d0;
        }
        v
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// Column-wise Hermite interpolant of a table `rows[k][j]` over knots `x[k]`.
pub(crate) struct Resampler {
    x: Vec<f64>,
    cols: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Resampler {
    /// Columns listed in `monotone` use shape-preserving slopes.
    pub(crate) fn new(x: Vec<f64>, rows: &[Vec<f64>], monotone: &[usize]) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: x.len(),
            });
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch("interpolation knots must increase".into()));
        }
        let width = rows[0].len();
        let cols = (0..width)
            .map(|j| {
                let y: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                let d = if monotone.contains(&j) {
                    pchip_slopes(&x, &y)
                } else {
                    smooth_slopes(&x, &y)
                };
                (y, d)
            })
            .collect();
        Ok(Resampler { x, cols })
    }

    pub(crate) fn eval(&self, xq: f64) -> Vec<f64> {
        let n = self.x.len();
        let k = match self.x.partition_point(|&v| v <= xq) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let u = (xq - self.x[k]) / h;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        self.cols
            .iter()
            .map(|(y, d)| h00 * y[k] + h10 * h * d[k] + h01 * y[k + 1] + h11 * h * d[k + 1])
            .collect()
    }
}

/// Cumulative integral of `f` over the knots `x`, starting at `start`.
/// Trapezoid rule with the endpoint-derivative correction, fourth order
/// for smooth integrands.
pub(crate) fn cumulative_integral(x: &[f64], f: &[f64], start: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    out.push(start);
    if x.len() < 2 {
        return out;
    }
    let df = smooth_slopes(x, f);
    let mut acc = start;
    for k in 0..x.len() - 1 {
        let h = x[k + 1] - x[k];
        acc += 0.5 * h * (f[k] + f[k + 1]) - h * h / 12.0 * (df[k + 1] - df[k]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubics() {
        let x: Vec<f64> = (0..11).map(|i| (i as f64 * 0.1).powf(1.3)).collect();
        let f = |v: f64| 1.0 + v - 2.0 * v * v;
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![f(v)]).collect();
        let r = Resampler::new(x.clone(), &rows, &[]).unwrap();
        for q in [0.0, 0.05, 0.33, 0.71, 1.0] {
            assert!((r.eval(q)[0] - f(q)).abs() < 1e-13, "q={q}");
        }
    }

    #[test]
    fn pchip_preserves_monotonicity() {
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let rows: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 1.0, 1.0].iter().map(|&v| vec![v]).collect();
        let r = Resampler::new(x, &rows, &[0]).unwrap();
        let mut prev = -1.0;
        for i in 0..=400 {
            let v = r.eval(i as f64 * 0.01)[0];
            assert!(v >= prev - 1e-15 && (-1e-15..=1.0 + 1e-15).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn smooth_interpolation_accuracy() {
        let x: Vec<f64> = (0..=1000).map(|i| i as f64 * 1e-3).collect();
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v.sin()]).collect();
        let r = Resampler::new(x, &rows, &[]).unwrap();
        let q = 0.123_456_7;
        assert!((r.eval(q)[0] - q.sin()).abs() < 1e-11);
    }

    #[test]
    fn corrected_trapezoid_is_accurate() {
        let x: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let f: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let c = cumulative_integral(&x, &f, 0.0);
        assert!((c[100] - (1f64.exp() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(Resampler::new(vec![0.0], &[vec![1.0]], &[]).is_err());
        assert!(Resampler::new(vec![0.0, 0.0], &[vec![1.0], vec![2.0]], &[]).is_err());
    }
}
