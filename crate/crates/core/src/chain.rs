//! Continuous-time finite-state Markov chains.
//!
//! A [`ChainGenerator`] is a validated (possibly time-dependent) rate matrix
//! `mu_ij(t)` on `[0, T]`. Paths are sampled exactly: by exponential holding
//! times when the generator is constant and by thinning against a dominating
//! rate otherwise. [`jump_counters`] rebuilds the jump-count processes
//! `J^ij`, the arrival counts `Phi_j`, their compensators `mu_j` and the
//! compensated martingales `Phi~_j = Phi_j - mu_j` from a sampled path.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::Matrix;

#[allow(unused_imports)]
use num_traits::Float;

pub type RateFn = Arc<dyn Fn(f64) -> Matrix + Send + Sync>;

/// Raw time dependence of a generator, before validation.
#[derive(Clone)]
pub enum RateSchedule {
    Constant(Matrix),
    /// `(t_start, matrix)` pairs; each matrix holds on `[t_start, next t_start)`.
    Piecewise(Vec<(f64, Matrix)>),
    /// Arbitrary rates. When `dominating_rate` is `None` it is estimated on
    /// the validation grid.
    Function {
        dim: usize,
        rates: RateFn,
        dominating_rate: Option<f64>,
    },
}

impl fmt::Debug for RateSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            Self::Piecewise(p) => f.debug_tuple("Piecewise").field(p).finish(),
            Self::Function {
                dim, dominating_rate, ..
            } => f
                .debug_struct("Function")
                .field("dim", dim)
                .field("dominating_rate", dominating_rate)
                .finish_non_exhaustive(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    /// Evaluation points on `[0, T]` for function-valued rates.
    pub grid_points: usize,
    /// Absolute tolerance on row sums.
    pub row_sum_tolerance: f64,
    /// Safety factor applied to a grid-estimated dominating rate.
    pub dominating_margin: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            grid_points: 1001,
            row_sum_tolerance: 1e-12,
            dominating_margin: 1.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainGenerator {
    dim: usize,
    horizon: f64,
    schedule: RateSchedule,
    dominating: f64,
}

pub fn validate_generator(schedule: RateSchedule, horizon: f64) -> Result<ChainGenerator> {
    validate_generator_with(schedule, horizon, ValidationOptions::default())
}

pub fn validate_generator_with(
    schedule: RateSchedule,
    horizon: f64,
    opts: ValidationOptions,
) -> Result<ChainGenerator> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: alloc::format!("{horizon} is not a positive finite time"),
        });
    }
    let tol = opts.row_sum_tolerance;
    let (dim, dominating) = match &schedule {
        RateSchedule::Constant(m) => {
            check_matrix(m, 0.0, tol)?;
            (m.dim(), max_exit_rate(m))
        }
        RateSchedule::Piecewise(pieces) => {
            let first = pieces.first().ok_or(Error::EmptyGenerator)?;
            if first.0 > 0.0 {
                return Err(Error::InvalidParameter {
                    name: "generator",
                    reason: alloc::format!("first piece starts at {} > 0", first.0),
                });
            }
            let dim = first.1.dim();
            let mut prev = f64::NEG_INFINITY;
            let mut dom: f64 = 0.0;
            for (t, m) in pieces {
                if !(*t > prev) {
                    return Err(Error::InvalidParameter {
                        name: "generator",
                        reason: alloc::format!("piece starts must increase ({t} after {prev})"),
                    });
                }
                prev = *t;
                if m.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        what: "generator piece",
                        expected: dim,
                        got: m.dim(),
                    });
                }
                if *t < horizon {
                    check_matrix(m, t.max(0.0), tol)?;
                    dom = dom.max(max_exit_rate(m));
                }
            }
            (dim, dom)
        }
        RateSchedule::Function {
            dim,
            rates,
            dominating_rate,
        } => {
            let grid = TimeGrid::uniform(horizon, opts.grid_points.max(2))?;
            let mut dom: f64 = 0.0;
            for t in grid.times() {
                let m = rates(t);
                if m.dim() != *dim {
                    return Err(Error::DimensionMismatch {
                        what: "generator",
                        expected: *dim,
                        got: m.dim(),
                    });
                }
                check_matrix(&m, t, tol)?;
                dom = dom.max(max_exit_rate(&m));
            }
            let dom = match dominating_rate {
                Some(d) => *d,
                None => dom * opts.dominating_margin,
            };
            if !dom.is_finite() {
                return Err(Error::DominatingRateNotFound);
            }
            (*dim, dom)
        }
    };
    if dim == 0 {
        return Err(Error::EmptyGenerator);
    }
    Ok(ChainGenerator {
        dim,
        horizon,
        schedule,
        dominating,
    })
}

fn check_matrix(m: &Matrix, t: f64, tol: f64) -> Result<()> {
    for i in 0..m.dim() {
        let mut sum = 0.0;
        for j in 0..m.dim() {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::DominatingRateNotFound);
            }
            if i != j && v < 0.0 {
                return Err(Error::NegativeOffDiagonal { t, i, j, value: v });
            }
            sum += v;
        }
        if sum.abs() > tol {
            return Err(Error::RowSumViolation { t, row: i, sum });
        }
    }
    Ok(())
}

fn max_exit_rate(m: &Matrix) -> f64 {
    (0..m.dim()).map(|i| -m[(i, i)]).fold(0.0, f64::max)
}

impl ChainGenerator {
    /// Constant generator from rows, validated on `[0, horizon]`.
    pub fn constant(rows: &[Vec<f64>], horizon: f64) -> Result<Self> {
        let m = Matrix::from_rows(rows).ok_or(Error::DimensionMismatch {
            what: "generator rows",
            expected: rows.len(),
            got: rows.iter().map(Vec::len).find(|l| *l != rows.len()).unwrap_or(0),
        })?;
        validate_generator(RateSchedule::Constant(m), horizon)
    }

    /// Generator with all rates zero: the chain never leaves its initial state.
    pub fn frozen(dim: usize, horizon: f64) -> Result<Self> {
        validate_generator(RateSchedule::Constant(Matrix::zeros(dim)), horizon)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn schedule(&self) -> &RateSchedule {
        &self.schedule
    }

    pub fn is_homogeneous(&self) -> bool {
        match &self.schedule {
            RateSchedule::Constant(_) => true,
            RateSchedule::Piecewise(p) => p.iter().filter(|(t, _)| *t < self.horizon).count() == 1,
            RateSchedule::Function { .. } => false,
        }
    }

    /// Upper bound on `-mu_ii(t)` over all states and `t` in `[0, T]`.
    pub fn dominating_rate(&self) -> f64 {
        self.dominating
    }

    pub fn rates_at(&self, t: f64) -> Matrix {
        match &self.schedule {
            RateSchedule::Constant(m) => m.clone(),
            RateSchedule::Piecewise(p) => piece_at(p, t).clone(),
            RateSchedule::Function { rates, .. } => rates(t),
        }
    }

    pub fn rate(&self, t: f64, i: usize, j: usize) -> f64 {
        match &self.schedule {
            RateSchedule::Constant(m) => m[(i, j)],
            RateSchedule::Piecewise(p) => piece_at(p, t)[(i, j)],
            RateSchedule::Function { rates, .. } => rates(t)[(i, j)],
        }
    }

    pub fn exit_rate(&self, t: f64, i: usize) -> f64 {
        -self.rate(t, i, i)
    }

    /// Times in `(0, T)` where piecewise rates change.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.schedule {
            RateSchedule::Piecewise(p) => p
                .iter()
                .map(|(t, _)| *t)
                .filter(|t| *t > 0.0 && *t < self.horizon)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Whether rates are constant between breakpoints.
    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self.schedule, RateSchedule::Function { .. })
    }

    /// `int_{t0}^{t1} mu_{state, j}(s) ds` for every `j` (zero at `j = state`).
    /// Exact for piecewise-constant rates, composite Simpson otherwise.
    pub fn integrated_rates(&self, state: usize, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if t1 <= t0 {
            return out;
        }
        if self.is_piecewise_constant() {
            let mut cuts: Vec<f64> = self.breakpoints().into_iter().filter(|b| *b > t0 && *b < t1).collect();
            cuts.insert(0, t0);
            cuts.push(t1);
            for w in cuts.windows(2) {
                let m = self.rates_at(w[0]);
                for (j, o) in out.iter_mut().enumerate() {
                    if j != state {
                        *o += m[(state, j)] * (w[1] - w[0]);
                    }
                }
            }
        } else {
            let n = 16;
            let h = (t1 - t0) / n as f64;
            for k in 0..=n {
                let w = if k == 0 || k == n {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let m = self.rates_at(t0 + h * k as f64);
                for (j, o) in out.iter_mut().enumerate() {
                    if j != state {
                        *o += w * h / 3.0 * m[(state, j)];
                    }
                }
            }
        }
        out
    }
}

fn piece_at(pieces: &[(f64, Matrix)], t: f64) -> &Matrix {
    let idx = pieces.partition_point(|(s, _)| *s <= t);
    &pieces[idx.saturating_sub(1)].1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub to: usize,
}

/// Right-continuous piecewise-constant regime trajectory on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    initial: usize,
    jumps: Vec<Jump>,
    horizon: f64,
}

impl ChainPath {
    pub fn new(initial: usize, jumps: Vec<Jump>, horizon: f64) -> Self {
        Self {
            initial,
            jumps,
            horizon,
        }
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    /// `alpha(t)`.
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jumps.partition_point(|j| j.time <= t);
        if k == 0 {
            self.initial
        } else {
            self.jumps[k - 1].to
        }
    }

    /// `alpha(t-)`.
    pub fn state_before(&self, t: f64) -> usize {
        let k = self.jumps.partition_point(|j| j.time < t);
        if k == 0 {
            self.initial
        } else {
            self.jumps[k - 1].to
        }
    }

    pub fn terminal_state(&self) -> usize {
        self.jumps.last().map_or(self.initial, |j| j.to)
    }

    /// Maximal intervals `(t0, t1, state)` of constant regime covering `[0, T]`.
    pub fn segments(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.jumps.len() + 1);
        let mut t0 = 0.0;
        let mut s = self.initial;
        for j in &self.jumps {
            out.push((t0, j.time, s));
            t0 = j.time;
            s = j.to;
        }
        out.push((t0, self.horizon, s));
        out
    }

    /// Jumps with `a < time <= b`.
    pub fn jumps_in(&self, a: f64, b: f64) -> &[Jump] {
        let lo = self.jumps.partition_point(|j| j.time <= a);
        let hi = self.jumps.partition_point(|j| j.time <= b);
        &self.jumps[lo..hi]
    }

    /// `Phi~_j(T)` for every state, with exactly integrated compensators.
    pub fn terminal_compensated(&self, gen: &ChainGenerator) -> Vec<f64> {
        let mut out = vec![0.0; gen.dim()];
        for (t0, t1, s) in self.segments() {
            for (o, c) in out.iter_mut().zip(gen.integrated_rates(s, t0, t1)) {
                *o -= c;
            }
        }
        for j in &self.jumps {
            out[j.to] += 1.0;
        }
        out
    }
}

fn check_state(gen: &ChainGenerator, initial: usize) -> Result<()> {
    if initial >= gen.dim() {
        return Err(Error::InvalidState {
            index: initial,
            states: gen.dim(),
        });
    }
    Ok(())
}

/// Samples an exact chain path on `[0, T]` from `initial`.
pub fn sample_chain_path<R: Rng + ?Sized>(gen: &ChainGenerator, initial: usize, rng: &mut R) -> Result<ChainPath> {
    check_state(gen, initial)?;
    if gen.is_homogeneous() {
        sample_homogeneous(gen, initial, rng)
    } else {
        sample_chain_path_thinning(gen, initial, rng)
    }
}

fn sample_homogeneous<R: Rng + ?Sized>(gen: &ChainGenerator, initial: usize, rng: &mut R) -> Result<ChainPath> {
    let m = gen.rates_at(0.0);
    let mut t = 0.0;
    let mut s = initial;
    let mut jumps = Vec::new();
    loop {
        let q = -m[(s, s)];
        if q <= 0.0 {
            break;
        }
        let e: f64 = Exp1.sample(rng);
        t += e / q;
        if t > gen.horizon() {
            break;
        }
        s = pick_target(&m, s, q, rng);
        jumps.push(Jump { time: t, to: s });
    }
    Ok(ChainPath::new(initial, jumps, gen.horizon()))
}

/// Samples by thinning a Poisson clock of rate `dominating_rate`; exact for
/// any generator whose exit rates stay below that bound.
pub fn sample_chain_path_thinning<R: Rng + ?Sized>(
    gen: &ChainGenerator,
    initial: usize,
    rng: &mut R,
) -> Result<ChainPath> {
    check_state(gen, initial)?;
    let bound = gen.dominating_rate();
    if !bound.is_finite() {
        return Err(Error::DominatingRateNotFound);
    }
    let mut jumps = Vec::new();
    if bound <= 0.0 {
        return Ok(ChainPath::new(initial, jumps, gen.horizon()));
    }
    let mut t = 0.0;
    let mut s = initial;
    loop {
        let e: f64 = Exp1.sample(rng);
        t += e / bound;
        if t > gen.horizon() {
            break;
        }
        let m = gen.rates_at(t);
        let q = -m[(s, s)];
        if q > bound * (1.0 + 1e-12) {
            return Err(Error::DominatingRateNotFound);
        }
        let u: f64 = rng.random();
        if u * bound < q {
            s = pick_target(&m, s, q, rng);
            jumps.push(Jump { time: t, to: s });
        }
    }
    Ok(ChainPath::new(initial, jumps, gen.horizon()))
}

fn pick_target<R: Rng + ?Sized>(m: &Matrix, from: usize, exit: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * exit;
    let mut acc = 0.0;
    let mut last = from;
    for j in 0..m.dim() {
        if j == from || m[(from, j)] <= 0.0 {
            continue;
        }
        acc += m[(from, j)];
        last = j;
        if u < acc {
            return j;
        }
    }
    last
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CounterOptions {
    /// Fail with [`Error::GridTooCoarse`] instead of flagging.
    pub strict_resolution: bool,
}

/// Counting processes of a chain path sampled on a grid.
#[derive(Debug, Clone)]
pub struct JumpCounters {
    dim: usize,
    times: Vec<f64>,
    transitions: Vec<u32>,
    arrivals: Vec<u32>,
    compensators: Vec<f64>,
    /// Grid step exceeded the mean holding time at the dominating rate.
    pub coarse: bool,
}

impl JumpCounters {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `J^ij(t_k)`.
    pub fn transitions(&self, k: usize, i: usize, j: usize) -> u32 {
        self.transitions[(k * self.dim + i) * self.dim + j]
    }

    /// `Phi_j(t_k)`.
    pub fn arrivals(&self, k: usize, j: usize) -> u32 {
        self.arrivals[k * self.dim + j]
    }

    /// `mu_j(t_k)`.
    pub fn compensator(&self, k: usize, j: usize) -> f64 {
        self.compensators[k * self.dim + j]
    }

    /// `Phi~_j(t_k) = Phi_j(t_k) - mu_j(t_k)`.
    pub fn compensated(&self, k: usize, j: usize) -> f64 {
        f64::from(self.arrivals(k, j)) - self.compensator(k, j)
    }
}

pub fn jump_counters(
    path: &ChainPath,
    gen: &ChainGenerator,
    grid: &TimeGrid,
    opts: CounterOptions,
) -> Result<JumpCounters> {
    let d = gen.dim();
    let resolution = if gen.dominating_rate() > 0.0 {
        1.0 / gen.dominating_rate()
    } else {
        f64::INFINITY
    };
    let coarse = grid.step() > resolution;
    if coarse && opts.strict_resolution {
        return Err(Error::GridTooCoarse {
            step: grid.step(),
            resolution,
        });
    }
    let times = grid.times();
    let n = times.len();
    let mut transitions = vec![0u32; n * d * d];
    let mut arrivals = vec![0u32; n * d];
    let mut compensators = vec![0.0; n * d];

    let mut trans = vec![0u32; d * d];
    let mut arr = vec![0u32; d];
    let mut comp = vec![0.0; d];
    let mut prev_state = path.initial();
    let mut jump_idx = 0;
    let jumps = path.jumps();
    let mut t_prev = 0.0;
    for (k, &t) in times.iter().enumerate() {
        // advance through jumps up to and including t
        while jump_idx < jumps.len() && jumps[jump_idx].time <= t {
            let jmp = jumps[jump_idx];
            for (c, r) in comp.iter_mut().zip(gen.integrated_rates(prev_state, t_prev, jmp.time)) {
                *c += r;
            }
            trans[prev_state * d + jmp.to] += 1;
            arr[jmp.to] += 1;
            prev_state = jmp.to;
            t_prev = jmp.time;
            jump_idx += 1;
        }
        for (c, r) in comp.iter_mut().zip(gen.integrated_rates(prev_state, t_prev, t)) {
            *c += r;
        }
        t_prev = t;
        transitions[k * d * d..(k + 1) * d * d].copy_from_slice(&trans);
        arrivals[k * d..(k + 1) * d].copy_from_slice(&arr);
        compensators[k * d..(k + 1) * d].copy_from_slice(&comp);
    }
    Ok(JumpCounters {
        dim: d,
        times,
        transitions,
        arrivals,
        compensators,
        coarse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::path_rng;

    fn sym(rate: f64) -> ChainGenerator {
        ChainGenerator::constant(&[vec![-rate, rate], vec![rate, -rate]], 1.0).unwrap()
    }

    #[test]
    fn accepts_valid_generator() {
        let g = ChainGenerator::constant(&[vec![-1.0, 1.0], vec![2.0, -2.0]], 1.0).unwrap();
        assert_eq!(g.dim(), 2);
        assert!(g.is_homogeneous());
        assert_eq!(g.dominating_rate(), 2.0);
    }

    #[test]
    fn rejects_row_sum_violation() {
        let err = ChainGenerator::constant(&[vec![-1.0, 2.0], vec![1.0, -1.0]], 1.0).unwrap_err();
        assert!(matches!(err, Error::RowSumViolation { row: 0, .. }));
    }

    #[test]
    fn rejects_negative_off_diagonal() {
        let err = ChainGenerator::constant(&[vec![1.0, -1.0], vec![1.0, -1.0]], 1.0).unwrap_err();
        assert!(matches!(err, Error::NegativeOffDiagonal { i: 0, j: 1, .. }));
    }

    #[test]
    fn function_rates_checked_on_grid() {
        // valid on [0, 0.5), broken afterwards
        let rates: RateFn = Arc::new(|t: f64| {
            let r = if t < 0.5 { 1.0 } else { -1.0 };
            Matrix::from_rows(&[vec![-r, r], vec![1.0, -1.0]]).unwrap()
        });
        let err = validate_generator(
            RateSchedule::Function {
                dim: 2,
                rates,
                dominating_rate: None,
            },
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NegativeOffDiagonal { .. }));
    }

    #[test]
    fn unbounded_rates_have_no_dominating_rate() {
        let rates: RateFn = Arc::new(|t: f64| {
            let r = 1.0 / (1.0 - t);
            Matrix::from_rows(&[vec![-r, r], vec![0.0, 0.0]]).unwrap()
        });
        let err = validate_generator(
            RateSchedule::Function {
                dim: 2,
                rates,
                dominating_rate: None,
            },
            1.0,
        )
        .unwrap_err();
        assert_eq!(err, Error::DominatingRateNotFound);
    }

    #[test]
    fn zero_generator_never_jumps() {
        let g = ChainGenerator::frozen(3, 2.0).unwrap();
        let mut rng = path_rng(1);
        for _ in 0..50 {
            let p = sample_chain_path(&g, 2, &mut rng).unwrap();
            assert_eq!(p.jump_count(), 0);
            assert_eq!(p.state_at(1.3), 2);
        }
    }

    #[test]
    fn absorbing_state_stops_the_path() {
        let g = ChainGenerator::constant(&[vec![-5.0, 5.0], vec![0.0, 0.0]], 10.0).unwrap();
        let mut rng = path_rng(2);
        for _ in 0..200 {
            let p = sample_chain_path(&g, 0, &mut rng).unwrap();
            assert!(p.jump_count() <= 1);
            if p.jump_count() == 1 {
                assert_eq!(p.terminal_state(), 1);
            }
        }
    }

    #[test]
    fn jump_targets_differ_from_previous_state() {
        let g =
            ChainGenerator::constant(&[vec![-3.0, 1.0, 2.0], vec![1.0, -1.5, 0.5], vec![2.0, 2.0, -4.0]], 3.0).unwrap();
        let mut rng = path_rng(3);
        for _ in 0..200 {
            let p = sample_chain_path(&g, 0, &mut rng).unwrap();
            let mut s = p.initial();
            let mut last_t = 0.0;
            for j in p.jumps() {
                assert_ne!(j.to, s);
                assert!(j.time > last_t && j.time <= 3.0);
                s = j.to;
                last_t = j.time;
            }
        }
    }

    #[test]
    fn invalid_initial_state() {
        let mut rng = path_rng(0);
        assert!(matches!(
            sample_chain_path(&sym(1.0), 2, &mut rng),
            Err(Error::InvalidState { index: 2, states: 2 })
        ));
    }

    #[test]
    fn left_and_right_limits() {
        let p = ChainPath::new(0, vec![Jump { time: 0.4, to: 1 }], 1.0);
        assert_eq!(p.state_before(0.4), 0);
        assert_eq!(p.state_at(0.4), 1);
        assert_eq!(p.state_at(0.39), 0);
        assert_eq!(p.segments(), vec![(0.0, 0.4, 0), (0.4, 1.0, 1)]);
    }

    #[test]
    fn constant_path_counters_are_zero() {
        let g = ChainGenerator::frozen(2, 1.0).unwrap();
        let p = ChainPath::new(1, Vec::new(), 1.0);
        let grid = TimeGrid::uniform(1.0, 11).unwrap();
        let c = jump_counters(&p, &g, &grid, CounterOptions::default()).unwrap();
        for k in 0..11 {
            for j in 0..2 {
                assert_eq!(c.arrivals(k, j), 0);
                assert_eq!(c.compensator(k, j), 0.0);
            }
        }
    }

    #[test]
    fn single_jump_counters() {
        let g = sym(1.0);
        let tau = 0.35;
        let p = ChainPath::new(0, vec![Jump { time: tau, to: 1 }], 1.0);
        let grid = TimeGrid::uniform(1.0, 21).unwrap();
        let c = jump_counters(&p, &g, &grid, CounterOptions::default()).unwrap();
        for (k, &t) in c.times().iter().enumerate() {
            let hit = u32::from(t >= tau);
            assert_eq!(c.transitions(k, 0, 1), hit);
            assert_eq!(c.arrivals(k, 1), hit);
            assert_eq!(c.arrivals(k, 0), 0);
            assert_eq!(c.transitions(k, 0, 0), 0);
            // mu_1 accrues while in state 0, mu_0 while in state 1
            assert!((c.compensator(k, 1) - t.min(tau)).abs() < 1e-14);
            assert!((c.compensator(k, 0) - (t - tau).max(0.0)).abs() < 1e-14);
        }
        assert_eq!(c.compensated(0, 0), 0.0);
    }

    #[test]
    fn strict_resolution_rejects_coarse_grid() {
        let g = sym(20.0);
        let p = ChainPath::new(0, Vec::new(), 1.0);
        let grid = TimeGrid::uniform(1.0, 5).unwrap();
        let err = jump_counters(
            &p,
            &g,
            &grid,
            CounterOptions {
                strict_resolution: true,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse { .. }));
        let c = jump_counters(&p, &g, &grid, CounterOptions::default()).unwrap();
        assert!(c.coarse);
    }

    #[test]
    fn piecewise_integrated_rates_are_exact() {
        let a = Matrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![-3.0, 3.0], vec![0.5, -0.5]]).unwrap();
        let g = validate_generator(RateSchedule::Piecewise(vec![(0.0, a), (0.5, b)]), 1.0).unwrap();
        assert!(!g.is_homogeneous());
        assert_eq!(g.dominating_rate(), 3.0);
        let r = g.integrated_rates(0, 0.25, 0.75);
        assert!((r[1] - (0.25 * 1.0 + 0.25 * 3.0)).abs() < 1e-15);
        assert_eq!(r[0], 0.0);
    }
}
