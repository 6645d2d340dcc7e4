//! Deterministic chain analytics: transition matrices, marginal laws,
//! backward coupled linear ODEs and chain-expectation quadratures.
//!
//! The coupled system solved by [`solve_backward_coupled`] is
//!
//! ```text
//! v'(t, e_i) + B(t, e_i) v(t, e_i) + sum_j (v(t, e_j) - v(t, e_i)) mu_ij(t) = 0,
//! v(T, e_i) = g(e_i)
//! ```
//!
//! which, because rows of the generator sum to zero, is `v' = -(diag(B) + L(t)) v`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::chain::{ChainGenerator, RateSchedule};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::Matrix;
use crate::numeric::simpson;

#[allow(unused_imports)]
use num_traits::Float;

/// RK4 steps used for function-valued generators over `[0, T]`.
pub const DEFAULT_RK_STEPS: usize = 10_000;

const OVERFLOW_GUARD: f64 = 1e300;

/// `P(s, t)_{ik} = Prob(alpha(t) = e_k | alpha(s) = e_i)`.
///
/// Piecewise-constant generators use products of matrix exponentials;
/// function-valued ones integrate `dP/dt = P L(t)` with fixed-step RK4.
pub fn transition_matrix(gen: &ChainGenerator, s: f64, t: f64) -> Result<Matrix> {
    if t < s {
        return Err(Error::TimeOrderViolation { s, t });
    }
    if gen.is_piecewise_constant() {
        Ok(piecewise_exponential(gen, s, t))
    } else {
        let steps = ((t - s) / gen.horizon() * DEFAULT_RK_STEPS as f64).ceil().max(1.0) as usize;
        transition_matrix_rk4(gen, s, t, steps)
    }
}

/// Forward Kolmogorov equation `dP/dt = P L(t)` integrated with `steps` RK4 steps.
pub fn transition_matrix_rk4(gen: &ChainGenerator, s: f64, t: f64, steps: usize) -> Result<Matrix> {
    if t < s {
        return Err(Error::TimeOrderViolation { s, t });
    }
    let d = gen.dim();
    let mut p = Matrix::identity(d);
    if t == s {
        return Ok(p);
    }
    let cuts = cut_points(gen, s, t);
    let total = t - s;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = ((b - a) / total * steps as f64).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        let frozen = frozen_rates(gen, a, b);
        let rates = |tau: f64| frozen.clone().unwrap_or_else(|| gen.rates_at(tau));
        for k in 0..n {
            let t0 = a + h * k as f64;
            let k1 = p.mul(&rates(t0));
            let k2 = p.add(&k1.scale(h / 2.0)).mul(&rates(t0 + h / 2.0));
            let k3 = p.add(&k2.scale(h / 2.0)).mul(&rates(t0 + h / 2.0));
            let k4 = p.add(&k3.scale(h)).mul(&rates(t0 + h));
            let incr = k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4).scale(h / 6.0);
            p = p.add(&incr);
        }
    }
    Ok(p)
}

fn piecewise_exponential(gen: &ChainGenerator, s: f64, t: f64) -> Matrix {
    let mut p = Matrix::identity(gen.dim());
    for w in cut_points(gen, s, t).windows(2) {
        if w[1] > w[0] {
            let m = gen.rates_at(0.5 * (w[0] + w[1]));
            p = p.mul(&m.scale(w[1] - w[0]).expm());
        }
    }
    p
}

/// `[a, breakpoints in (a, b)..., b]`.
fn cut_points(gen: &ChainGenerator, a: f64, b: f64) -> Vec<f64> {
    let mut cuts = vec![a];
    cuts.extend(gen.breakpoints().into_iter().filter(|x| *x > a && *x < b));
    cuts.push(b);
    cuts
}

/// Constant rates on `[a, b]` when the generator is piecewise constant there.
fn frozen_rates(gen: &ChainGenerator, a: f64, b: f64) -> Option<Matrix> {
    match gen.schedule() {
        RateSchedule::Function { .. } => None,
        _ => Some(gen.rates_at(0.5 * (a + b))),
    }
}

pub(crate) fn check_distribution(dist: &[f64], dim: usize) -> Result<()> {
    if dist.len() != dim {
        return Err(Error::InvalidDistribution(format!(
            "expected {dim} entries, got {}",
            dist.len()
        )));
    }
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "negative or non-finite entry in {dist:?}"
        )));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// Law of `alpha(t)` started from `initial` at time 0.
pub fn marginal_law(gen: &ChainGenerator, initial: &[f64], t: f64) -> Result<Vec<f64>> {
    check_distribution(initial, gen.dim())?;
    let p = transition_matrix(gen, 0.0, t)?;
    Ok(p.vec_mul(initial))
}

/// Point mass on `state`.
pub fn point_mass(dim: usize, state: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[state] = 1.0;
    v
}

/// Marginal laws at every grid node, propagated step by step.
pub fn marginal_laws_on_grid(gen: &ChainGenerator, initial: &[f64], grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    check_distribution(initial, gen.dim())?;
    let mut out = Vec::with_capacity(grid.len());
    out.push(initial.to_vec());
    let homogeneous_step = if gen.is_homogeneous() {
        Some(gen.rates_at(0.0).scale(grid.step()).expm())
    } else {
        None
    };
    for k in 0..grid.steps() {
        let (a, b) = (grid.time(k), grid.time(k + 1));
        let p = match &homogeneous_step {
            Some(p) => p.clone(),
            None => transition_matrix(gen, a, b)?,
        };
        let next = p.vec_mul(&out[k]);
        out.push(next);
    }
    Ok(out)
}

/// Solution of a backward coupled system on a grid, with its time derivative.
#[derive(Debug, Clone)]
pub struct CoupledValue {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    derivatives: Vec<f64>,
}

impl CoupledValue {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `v(t_k, e_i)`.
    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.dim + i]
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// `v'(t_k, e_i)` from the ODE right-hand side.
    pub fn derivative(&self, k: usize, i: usize) -> f64 {
        self.derivatives[k * self.dim + i]
    }

    /// Cubic Hermite interpolation between nodes using the ODE derivatives;
    /// fourth-order accurate for smooth coefficients.
    pub fn value_at(&self, t: f64, i: usize) -> f64 {
        let h = self.grid.step();
        let t = t.clamp(0.0, self.grid.horizon());
        let k = ((t / h) as usize).min(self.grid.steps() - 1);
        let t0 = self.grid.time(k);
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        if s == 0.0 {
            return self.value(k, i);
        }
        if s == 1.0 {
            return self.value(k + 1, i);
        }
        let (y0, y1) = (self.value(k, i), self.value(k + 1, i));
        let (d0, d1) = (self.derivative(k, i) * h, self.derivative(k + 1, i) * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Integrates the coupled system backward from `v(T) = terminal` with fixed-step RK4.
/// Steps are split at generator breakpoints.
pub fn solve_backward_coupled<B>(
    gen: &ChainGenerator,
    potential: B,
    terminal: &[f64],
    grid: &TimeGrid,
) -> Result<CoupledValue>
where
    B: Fn(f64, usize) -> f64,
{
    let d = gen.dim();
    if terminal.len() != d {
        return Err(Error::DimensionMismatch {
            what: "terminal condition",
            expected: d,
            got: terminal.len(),
        });
    }
    if (grid.horizon() - gen.horizon()).abs() > 1e-12 * gen.horizon() {
        return Err(Error::InvalidGrid(format!(
            "grid horizon {} differs from generator horizon {}",
            grid.horizon(),
            gen.horizon()
        )));
    }
    let n = grid.len();
    let mut values = vec![0.0; n * d];
    let mut derivatives = vec![0.0; n * d];
    values[(n - 1) * d..].copy_from_slice(terminal);

    let rhs = |t: f64, m: &Matrix, v: &[f64]| -> Vec<f64> {
        let lv = m.mul_vec(v);
        (0..d).map(|i| -(potential(t, i) * v[i] + lv[i])).collect()
    };

    let mut v = terminal.to_vec();
    let m_end = gen.rates_at(grid.horizon());
    let end_rates = frozen_rates(gen, grid.time(n - 2), grid.horizon()).unwrap_or(m_end);
    derivatives[(n - 1) * d..].copy_from_slice(&rhs(grid.horizon(), &end_rates, &v));

    for k in (0..n - 1).rev() {
        let (a, b) = (grid.time(k), grid.time(k + 1));
        let cuts = cut_points(gen, a, b);
        for w in cuts.windows(2).rev() {
            let (lo, hi) = (w[0], w[1]);
            let h = hi - lo;
            if h <= 0.0 {
                continue;
            }
            let frozen = frozen_rates(gen, lo, hi);
            let rates = |tau: f64| frozen.clone().unwrap_or_else(|| gen.rates_at(tau));
            // backward: dv/d(-t) = -rhs
            let mid = hi - h / 2.0;
            let m_hi = rates(hi);
            let m_mid = rates(mid);
            let m_lo = rates(lo);
            let k1 = rhs(hi, &m_hi, &v);
            let v2: Vec<f64> = v.iter().zip(&k1).map(|(x, k)| x - h / 2.0 * k).collect();
            let k2 = rhs(mid, &m_mid, &v2);
            let v3: Vec<f64> = v.iter().zip(&k2).map(|(x, k)| x - h / 2.0 * k).collect();
            let k3 = rhs(mid, &m_mid, &v3);
            let v4: Vec<f64> = v.iter().zip(&k3).map(|(x, k)| x - h * k).collect();
            let k4 = rhs(lo, &m_lo, &v4);
            for i in 0..d {
                v[i] -= h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if v.iter().any(|x| !x.is_finite() || x.abs() > OVERFLOW_GUARD) {
            return Err(Error::NonFiniteBlowup { t: a });
        }
        values[k * d..(k + 1) * d].copy_from_slice(&v);
        let m = frozen_rates(gen, a, b).unwrap_or_else(|| gen.rates_at(a));
        derivatives[k * d..(k + 1) * d].copy_from_slice(&rhs(a, &m, &v));
    }
    Ok(CoupledValue {
        grid: grid.clone(),
        dim: d,
        values,
        derivatives,
    })
}

/// `E[int_0^T f(t, alpha(t)) dt]` by composite Simpson over the marginal laws.
pub fn chain_expectation_integral<F>(gen: &ChainGenerator, initial: &[f64], f: F, grid: &TimeGrid) -> Result<f64>
where
    F: Fn(f64, usize) -> f64,
{
    let laws = marginal_laws_on_grid(gen, initial, grid)?;
    let samples: Vec<f64> = laws
        .iter()
        .enumerate()
        .map(|(k, pi)| {
            let t = grid.time(k);
            pi.iter().enumerate().map(|(i, p)| p * f(t, i)).sum()
        })
        .collect();
    Ok(simpson(&samples, grid.step()))
}
