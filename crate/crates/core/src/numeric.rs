//! Quadrature rules and Monte Carlo summary statistics.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

/// Composite Simpson on equally spaced samples. An even number of intervals
/// uses plain Simpson; an odd number closes with Simpson's 3/8 rule on the
/// last three intervals. Two samples fall back to the trapezoid rule.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        4 => 3.0 * h / 8.0 * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3]),
        _ => {
            let intervals = n - 1;
            let simpson_end = if intervals.is_multiple_of(2) { n - 1 } else { n - 4 };
            let mut s = values[0] + values[simpson_end];
            for (k, v) in values.iter().enumerate().take(simpson_end).skip(1) {
                s += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = h / 3.0 * s;
            if simpson_end != n - 1 {
                let v = &values[simpson_end..];
                total += 3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3]);
            }
            total
        }
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Pairwise summation; result depends only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                samples: 0,
            };
        }
        let mean = pairwise_sum(values) / n as f64;
        let std_error = if n > 1 {
            let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&sq) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            samples: n,
        }
    }

    /// A value known without sampling error.
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std_error: 0.0,
            samples: 0,
        }
    }

    /// `|mean - target| <= k * SE`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }

    /// [`Estimate::within`] with an absolute allowance for bias that does not
    /// shrink with the path count.
    pub fn within_tol(&self, target: f64, k: f64, abs_tol: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error + abs_tol
    }

    /// `(mean - target) / SE`, or `None` when the standard error is zero.
    pub fn z_score(&self, target: f64) -> Option<f64> {
        if self.std_error > 0.0 {
            Some((self.mean - target) / self.std_error)
        } else {
            None
        }
    }
}
