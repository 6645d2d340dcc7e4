//! Controlled regime-switching jump-diffusions.
//!
//! The state obeys
//!
//! ```text
//! dY = b dt + sigma dW + int eta(z) N~_alpha(dt, dz) + gamma dPhi~(t),  Y(0) = y0,
//! ```
//!
//! with all coefficients evaluated at `(t, Y(t-), alpha(t-), u1(t-), u2(t-))`.
//! Each grid step is split at the chain's jump times, so regime switches are
//! applied exactly where they occur. Additive components use Euler-Maruyama;
//! components flagged multiplicative (coefficients proportional to the
//! component itself) are advanced by the exact stochastic exponential of the
//! frozen rates, which keeps them positive whenever `1 + eta / y > 0`.
//!
//! All randomness of a path lives in a [`PathNoise`] generated from the path
//! seed alone; simulating the same noise under different controls gives common
//! random numbers.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::chain::{sample_chain_path, ChainGenerator, ChainPath};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::levy::LevyMeasureSpec;
use crate::numeric::Estimate;
use crate::runner::{path_rng, path_seed, PathRunner};

#[allow(unused_imports)]
use num_traits::Float;

/// Arguments shared by every coefficient and payoff.
#[derive(Debug, Clone, Copy)]
pub struct StatePoint<'a> {
    pub t: f64,
    pub y: &'a [f64],
    pub regime: usize,
    pub u1: f64,
    pub u2: f64,
}

/// Writes an `N` vector (drift) or row-major `N x M` matrix (diffusion).
pub type CoefFn = Arc<dyn Fn(&StatePoint<'_>, &mut [f64]) + Send + Sync>;
/// `eta(point, l, z)`: column `l` of the jump coefficient for mark `z`.
pub type JumpFn = Arc<dyn Fn(&StatePoint<'_>, usize, f64, &mut [f64]) + Send + Sync>;
/// `int eta(point, l, z) nu_l^regime(dz)` for column `l`.
pub type CompensatorFn = Arc<dyn Fn(&StatePoint<'_>, usize, &LevyMeasureSpec, &mut [f64]) + Send + Sync>;

/// Coefficients `b`, `sigma`, `eta`, `gamma` of the state equation.
#[derive(Clone)]
pub struct CoefficientSet {
    state_dim: usize,
    noise_dim: usize,
    drift: CoefFn,
    diffusion: CoefFn,
    jump: Option<JumpFn>,
    jump_compensator: Option<CompensatorFn>,
    regime_jump: Option<CoefFn>,
    log_components: Vec<bool>,
}

impl core::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_dim)
            .field("jumps", &self.jump.is_some())
            .field("regime_jumps", &self.regime_jump.is_some())
            .field("log_components", &self.log_components)
            .finish()
    }
}

impl CoefficientSet {
    pub fn new(state_dim: usize, noise_dim: usize, drift: CoefFn, diffusion: CoefFn) -> Self {
        Self {
            state_dim,
            noise_dim,
            drift,
            diffusion,
            jump: None,
            jump_compensator: None,
            regime_jump: None,
            log_components: vec![false; state_dim],
        }
    }

    /// All coefficients identically zero.
    pub fn zero(state_dim: usize) -> Self {
        Self::new(
            state_dim,
            1,
            Arc::new(|_, out| out.fill(0.0)),
            Arc::new(|_, out| out.fill(0.0)),
        )
    }

    pub fn with_jumps(mut self, jump: JumpFn) -> Self {
        self.jump = Some(jump);
        self
    }

    /// Closed-form `int eta nu(dz)`; without it the compensator is computed by quadrature.
    pub fn with_jump_compensator(mut self, comp: CompensatorFn) -> Self {
        self.jump_compensator = Some(comp);
        self
    }

    /// Row-major `N x D` regime-jump coefficient `gamma`.
    pub fn with_regime_jumps(mut self, gamma: CoefFn) -> Self {
        self.regime_jump = Some(gamma);
        self
    }

    pub fn with_log_components(mut self, flags: Vec<bool>) -> Self {
        self.log_components = flags;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn log_components(&self) -> &[bool] {
        &self.log_components
    }

    pub fn drift(&self, p: &StatePoint<'_>, out: &mut [f64]) {
        (self.drift)(p, out)
    }

    pub fn diffusion(&self, p: &StatePoint<'_>, out: &mut [f64]) {
        (self.diffusion)(p, out)
    }

    pub fn has_jumps(&self) -> bool {
        self.jump.is_some()
    }

    pub fn jump(&self, p: &StatePoint<'_>, l: usize, z: f64, out: &mut [f64]) {
        match &self.jump {
            Some(f) => f(p, l, z, out),
            None => out.fill(0.0),
        }
    }

    pub fn jump_compensator(&self, p: &StatePoint<'_>, l: usize, levy: &LevyMeasureSpec, out: &mut [f64]) {
        match (&self.jump_compensator, &self.jump) {
            (Some(c), _) => c(p, l, levy, out),
            (None, Some(j)) => {
                let mut buf = vec![0.0; self.state_dim];
                for (n, o) in out.iter_mut().enumerate() {
                    *o = levy.integrate(p.regime, |z| {
                        j(p, l, z, &mut buf);
                        buf[n]
                    });
                }
            }
            (None, None) => out.fill(0.0),
        }
    }

    pub fn has_regime_jumps(&self) -> bool {
        self.regime_jump.is_some()
    }

    pub fn regime_jump(&self, p: &StatePoint<'_>, out: &mut [f64]) {
        match &self.regime_jump {
            Some(g) => g(p, out),
            None => out.fill(0.0),
        }
    }
}

/// `u_k(t, regime, y)`.
pub type ControlFn = Arc<dyn Fn(f64, usize, &[f64]) -> f64 + Send + Sync>;

/// Feedback controls for both players.
#[derive(Clone)]
pub struct ControlPair {
    pub u1: ControlFn,
    pub u2: ControlFn,
    pub bounds1: Option<(f64, f64)>,
    pub bounds2: Option<(f64, f64)>,
    /// Whether either control reads the state `y` (not just `t` and the regime).
    pub state_feedback: bool,
}

impl core::fmt::Debug for ControlPair {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ControlPair")
            .field("bounds1", &self.bounds1)
            .field("bounds2", &self.bounds2)
            .field("state_feedback", &self.state_feedback)
            .finish_non_exhaustive()
    }
}

impl ControlPair {
    pub fn new(u1: ControlFn, u2: ControlFn) -> Self {
        Self {
            u1,
            u2,
            bounds1: None,
            bounds2: None,
            state_feedback: true,
        }
    }

    /// Controls depending only on `(t, regime)`.
    pub fn markov<F1, F2>(u1: F1, u2: F2) -> Self
    where
        F1: Fn(f64, usize) -> f64 + Send + Sync + 'static,
        F2: Fn(f64, usize) -> f64 + Send + Sync + 'static,
    {
        Self {
            u1: Arc::new(move |t, i, _| u1(t, i)),
            u2: Arc::new(move |t, i, _| u2(t, i)),
            bounds1: None,
            bounds2: None,
            state_feedback: false,
        }
    }

    pub fn constant(u1: f64, u2: f64) -> Self {
        Self::markov(move |_, _| u1, move |_, _| u2)
    }

    pub fn with_bounds(mut self, bounds1: Option<(f64, f64)>, bounds2: Option<(f64, f64)>) -> Self {
        self.bounds1 = bounds1;
        self.bounds2 = bounds2;
        self
    }

    pub fn control(&self, player: usize) -> &ControlFn {
        if player == 1 {
            &self.u1
        } else {
            &self.u2
        }
    }

    /// Replaces one player's control, keeping the other.
    pub fn replace(&self, player: usize, control: ControlFn, state_feedback: bool) -> Self {
        let mut out = self.clone();
        if player == 1 {
            out.u1 = control;
        } else {
            out.u2 = control;
        }
        out.state_feedback = self.state_feedback || state_feedback;
        out
    }

    /// Evaluates both controls and checks finiteness and bounds.
    pub fn evaluate(&self, t: f64, regime: usize, y: &[f64]) -> Result<(f64, f64)> {
        let u1 = (self.u1)(t, regime, y);
        let u2 = (self.u2)(t, regime, y);
        check_control(1, t, u1, self.bounds1)?;
        check_control(2, t, u2, self.bounds2)?;
        Ok((u1, u2))
    }
}

fn check_control(player: usize, t: f64, value: f64, bounds: Option<(f64, f64)>) -> Result<()> {
    let inside = bounds.is_none_or(|(lo, hi)| value >= lo && value <= hi);
    if value.is_finite() && inside {
        Ok(())
    } else {
        Err(Error::InadmissibleControl { player, t, value })
    }
}

/// Running payoff `f(t, y, e_i, u1, u2)`; errors signal points outside its domain.
pub type RunningFn = Arc<dyn Fn(&StatePoint<'_>) -> Result<f64> + Send + Sync>;
/// Terminal payoff `g(y, e_i)`.
pub type TerminalFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;

/// Performance functional `E[int_0^T f dt + g(Y(T), alpha(T))]` of one player.
#[derive(Clone)]
pub struct Payoff {
    pub running: RunningFn,
    pub terminal: TerminalFn,
}

impl Payoff {
    pub fn new(running: RunningFn, terminal: TerminalFn) -> Self {
        Self { running, terminal }
    }

    pub fn terminal_only(g: TerminalFn) -> Self {
        Self {
            running: Arc::new(|_| Ok(0.0)),
            terminal: g,
        }
    }
}

/// A state equation with its chain, jump measures and initial condition.
#[derive(Debug, Clone)]
pub struct JumpDiffusion {
    pub coeffs: CoefficientSet,
    /// One measure per jump column of `eta`.
    pub levy: Vec<LevyMeasureSpec>,
    pub generator: ChainGenerator,
    pub y0: Vec<f64>,
    pub initial_regime: usize,
}

/// A Poisson arrival with its jump column and mark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkedArrival {
    pub time: f64,
    pub component: usize,
    pub mark: f64,
}

/// All random inputs of one path: chain, Poisson arrivals and standard
/// normals for each (grid step, chain segment) sub-interval.
#[derive(Debug, Clone)]
pub struct PathNoise {
    pub seed: u64,
    pub chain: ChainPath,
    pub arrivals: Vec<MarkedArrival>,
    pub normals: Vec<f64>,
}

/// One simulated trajectory on the grid.
#[derive(Debug, Clone)]
pub struct SimPath {
    pub seed: u64,
    pub chain: ChainPath,
    dim: usize,
    states: Vec<f64>,
}

impl SimPath {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Y(t_k)`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        &self.states[self.states.len() - self.dim..]
    }

    pub fn terminal_regime(&self) -> usize {
        self.chain.terminal_state()
    }

    pub fn points(&self) -> usize {
        self.states.len() / self.dim
    }
}

/// Paths simulated on a common grid.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub y0: Vec<f64>,
    pub paths: Vec<SimPath>,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Visits the constant-regime pieces of `[a, b]`. The callback receives
/// `(s0, s1, regime, jump target at s1)`.
pub fn for_each_segment<F>(chain: &ChainPath, a: f64, b: f64, mut f: F) -> Result<()>
where
    F: FnMut(f64, f64, usize, Option<usize>) -> Result<()>,
{
    let mut s0 = a;
    let mut r = chain.state_at(a);
    for j in chain.jumps_in(a, b) {
        f(s0, j.time, r, Some(j.to))?;
        s0 = j.time;
        r = j.to;
    }
    if s0 < b {
        f(s0, b, r, None)?;
    }
    Ok(())
}

impl JumpDiffusion {
    pub fn new(
        coeffs: CoefficientSet,
        levy: Vec<LevyMeasureSpec>,
        generator: ChainGenerator,
        y0: Vec<f64>,
        initial_regime: usize,
    ) -> Result<Self> {
        let n = coeffs.state_dim();
        if y0.len() != n {
            return Err(Error::DimensionMismatch {
                what: "initial state",
                expected: n,
                got: y0.len(),
            });
        }
        if coeffs.log_components().len() != n {
            return Err(Error::DimensionMismatch {
                what: "log component flags",
                expected: n,
                got: coeffs.log_components().len(),
            });
        }
        for l in &levy {
            if l.dim() != generator.dim() {
                return Err(Error::DimensionMismatch {
                    what: "jump measure regimes",
                    expected: generator.dim(),
                    got: l.dim(),
                });
            }
        }
        if initial_regime >= generator.dim() {
            return Err(Error::InvalidState {
                index: initial_regime,
                states: generator.dim(),
            });
        }
        for (n, log) in coeffs.log_components().iter().enumerate() {
            if *log && !(y0[n] > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "y0",
                    reason: format!("multiplicative component {n} starts at {}", y0[n]),
                });
            }
        }
        Ok(Self {
            coeffs,
            levy,
            generator,
            y0,
            initial_regime,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.coeffs.state_dim()
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if (grid.horizon() - self.generator.horizon()).abs() > 1e-12 * self.generator.horizon() {
            return Err(Error::InvalidGrid(format!(
                "grid horizon {} differs from chain horizon {}",
                grid.horizon(),
                self.generator.horizon()
            )));
        }
        let lam = self.levy.iter().map(|l| l.max_intensity()).fold(0.0, f64::max);
        if grid.step() * lam > 0.5 {
            return Err(Error::StepTooLarge(format!(
                "h * jump intensity = {} exceeds 0.5",
                grid.step() * lam
            )));
        }
        Ok(())
    }

    /// Draws the noise of one path from its seed.
    pub fn noise(&self, grid: &TimeGrid, seed: u64) -> Result<PathNoise> {
        self.check_grid(grid)?;
        let mut rng = path_rng(seed);
        let chain = sample_chain_path(&self.generator, self.initial_regime, &mut rng)?;
        let mut arrivals = Vec::new();
        let horizon = grid.horizon();
        for (l, spec) in self.levy.iter().enumerate() {
            let bound = spec.max_intensity();
            if bound <= 0.0 {
                continue;
            }
            let mut t = 0.0;
            loop {
                let e: f64 = Exp1.sample(&mut rng);
                t += e / bound;
                if t > horizon {
                    break;
                }
                let regime = chain.state_before(t);
                let accept: f64 = rng.random();
                let jumps = spec.regime(regime);
                if accept * bound < jumps.intensity {
                    arrivals.push(MarkedArrival {
                        time: t,
                        component: l,
                        mark: jumps.law.sample(&mut rng),
                    });
                }
            }
        }
        arrivals.sort_by(|a, b| a.time.total_cmp(&b.time));
        let m = self.coeffs.noise_dim();
        let mut normals = Vec::with_capacity((grid.steps() + chain.jump_count()) * m);
        for k in 0..grid.steps() {
            for_each_segment(&chain, grid.time(k), grid.time(k + 1), |_, _, _, _| {
                for _ in 0..m {
                    normals.push(StandardNormal.sample(&mut rng));
                }
                Ok(())
            })?;
        }
        Ok(PathNoise {
            seed,
            chain,
            arrivals,
            normals,
        })
    }

    pub fn simulate_path(&self, controls: &ControlPair, grid: &TimeGrid, seed: u64) -> Result<SimPath> {
        let noise = self.noise(grid, seed)?;
        self.simulate_with_noise(controls, grid, &noise)
    }

    /// Simulates the state under `controls` driven by the given noise.
    pub fn simulate_with_noise(&self, controls: &ControlPair, grid: &TimeGrid, noise: &PathNoise) -> Result<SimPath> {
        let n = self.state_dim();
        let m = self.coeffs.noise_dim();
        let d = self.generator.dim();
        let h = grid.step();
        let logs = self.coeffs.log_components();
        let chain = &noise.chain;

        let mut y = self.y0.clone();
        let mut states = Vec::with_capacity(grid.len() * n);
        states.extend_from_slice(&y);

        let mut drift = vec![0.0; n];
        let mut sigma = vec![0.0; n * m];
        let mut comp = vec![0.0; n];
        let mut comp_l = vec![0.0; n];
        let mut jbuf = vec![0.0; n];
        let mut gamma = vec![0.0; n * d];
        let mut incr = vec![0.0; n];
        let mut normal_idx = 0;
        let mut arrival_idx = 0;
        let path_id = noise.seed as usize;

        for k in 0..grid.steps() {
            let (a, b) = (grid.time(k), grid.time(k + 1));
            for_each_segment(chain, a, b, |s0, s1, regime, jump_to| {
                let dt = s1 - s0;
                let sqrt_dt = dt.sqrt();
                let (u1, u2) = controls.evaluate(s0, regime, &y)?;
                let pt = StatePoint {
                    t: s0,
                    y: &y,
                    regime,
                    u1,
                    u2,
                };
                self.coeffs.drift(&pt, &mut drift);
                self.coeffs.diffusion(&pt, &mut sigma);

                comp.fill(0.0);
                for (l, spec) in self.levy.iter().enumerate() {
                    if spec.intensity(regime) > 0.0 {
                        self.coeffs.jump_compensator(&pt, l, spec, &mut comp_l);
                        for (c, x) in comp.iter_mut().zip(&comp_l) {
                            *c += x * dt;
                        }
                    }
                }
                if self.coeffs.has_regime_jumps() {
                    self.coeffs.regime_jump(&pt, &mut gamma);
                    let rates = self.generator.integrated_rates(regime, s0, s1);
                    for (nn, c) in comp.iter_mut().enumerate() {
                        for (j, r) in rates.iter().enumerate() {
                            *c += gamma[nn * d + j] * r;
                        }
                    }
                }

                let dw = &noise.normals[normal_idx..normal_idx + m];
                normal_idx += m;

                for nn in 0..n {
                    let guard = if logs[nn] { drift[nn] / y[nn] } else { drift[nn] };
                    if h * guard.abs() > 0.5 {
                        return Err(Error::StepTooLarge(format!(
                            "h * |b| = {} exceeds 0.5 for component {nn} at t = {s0}",
                            h * guard.abs()
                        )));
                    }
                    let row = &sigma[nn * m..(nn + 1) * m];
                    if logs[nn] {
                        let yn = y[nn];
                        let mut var = 0.0;
                        let mut noise_term = 0.0;
                        for (s, z) in row.iter().zip(dw) {
                            let v = s / yn;
                            var += v * v;
                            noise_term += v * z * sqrt_dt;
                        }
                        incr[nn] = (drift[nn] / yn - 0.5 * var) * dt + noise_term - comp[nn] / yn;
                    } else {
                        let noise_term: f64 = row.iter().zip(dw).map(|(s, z)| s * z * sqrt_dt).sum();
                        incr[nn] = drift[nn] * dt + noise_term - comp[nn];
                    }
                }

                while arrival_idx < noise.arrivals.len() && noise.arrivals[arrival_idx].time <= s1 {
                    let arr = noise.arrivals[arrival_idx];
                    arrival_idx += 1;
                    self.coeffs.jump(&pt, arr.component, arr.mark, &mut jbuf);
                    for nn in 0..n {
                        incr[nn] += if logs[nn] {
                            (1.0 + jbuf[nn] / y[nn]).ln()
                        } else {
                            jbuf[nn]
                        };
                    }
                }

                for nn in 0..n {
                    if logs[nn] {
                        y[nn] *= incr[nn].exp();
                    } else {
                        y[nn] += incr[nn];
                    }
                }

                if let Some(to) = jump_to {
                    let (u1, u2) = controls.evaluate(s1, regime, &y)?;
                    let pt = StatePoint {
                        t: s1,
                        y: &y,
                        regime,
                        u1,
                        u2,
                    };
                    self.coeffs.regime_jump(&pt, &mut gamma);
                    for nn in 0..n {
                        let g = gamma[nn * d + to];
                        if logs[nn] {
                            y[nn] *= 1.0 + g / y[nn];
                        } else {
                            y[nn] += g;
                        }
                    }
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteState { path: path_id, t: s1 });
                }
                Ok(())
            })?;
            states.extend_from_slice(&y);
        }
        Ok(SimPath {
            seed: noise.seed,
            chain: noise.chain.clone(),
            dim: n,
            states,
        })
    }
}

/// Simulates `n_paths` paths; path `i` uses seed `path_seed(master_seed, i)`.
pub fn simulate_paths<R: PathRunner>(
    model: &JumpDiffusion,
    controls: &ControlPair,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
    runner: &R,
) -> Result<PathEnsemble> {
    let paths = map_noise(model, grid, n_paths, master_seed, runner, |noise| {
        model.simulate_with_noise(controls, grid, noise)
    })?;
    Ok(PathEnsemble {
        grid: grid.clone(),
        y0: model.y0.clone(),
        paths,
    })
}

/// Generates each path's noise and applies `f` to it; the basis for
/// common-random-number comparisons.
pub fn map_noise<R, T, F>(
    model: &JumpDiffusion,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
    runner: &R,
    f: F,
) -> Result<Vec<T>>
where
    R: PathRunner,
    T: Send,
    F: Fn(&PathNoise) -> Result<T> + Sync + Send,
{
    runner
        .map_paths(n_paths, |i| {
            let noise = model.noise(grid, path_seed(master_seed, i as u64))?;
            f(&noise)
        })
        .into_iter()
        .collect()
}

/// `int_0^T f(t, Y(t), alpha(t), u1, u2) dt` along a path: trapezoid on every
/// constant-regime piece of every grid step, with `Y` interpolated linearly
/// between grid nodes.
pub fn integrate_along<F>(path: &SimPath, grid: &TimeGrid, controls: &ControlPair, f: F) -> Result<f64>
where
    F: Fn(&StatePoint<'_>) -> Result<f64>,
{
    let running = running_integral(path, grid, controls, f)?;
    Ok(running[running.len() - 1])
}

/// Like [`integrate_along`], returning `int_0^{t_k} f dt` at every grid node.
pub fn running_integral<F>(path: &SimPath, grid: &TimeGrid, controls: &ControlPair, f: F) -> Result<Vec<f64>>
where
    F: Fn(&StatePoint<'_>) -> Result<f64>,
{
    let n = path.dim();
    let mut buf = vec![0.0; n];
    let mut out = Vec::with_capacity(grid.len());
    out.push(0.0);
    let mut total = 0.0;
    for k in 0..grid.steps() {
        let (a, b) = (grid.time(k), grid.time(k + 1));
        let (ya, yb) = (path.state(k), path.state(k + 1));
        let eval = |s: f64, regime: usize, buf: &mut [f64]| -> Result<f64> {
            let w = (s - a) / (b - a);
            for ((o, p), q) in buf.iter_mut().zip(ya).zip(yb) {
                *o = p + w * (q - p);
            }
            let (u1, u2) = controls.evaluate(s, regime, buf)?;
            f(&StatePoint {
                t: s,
                y: buf,
                regime,
                u1,
                u2,
            })
        };
        for_each_segment(&path.chain, a, b, |s0, s1, regime, _| {
            let f0 = eval(s0, regime, &mut buf)?;
            let f1 = eval(s1, regime, &mut buf)?;
            total += 0.5 * (f0 + f1) * (s1 - s0);
            Ok(())
        })?;
        out.push(total);
    }
    Ok(out)
}

/// Realized payoff of one path.
pub fn path_payoff(path: &SimPath, grid: &TimeGrid, payoff: &Payoff, controls: &ControlPair) -> Result<f64> {
    let running = integrate_along(path, grid, controls, |p| (payoff.running)(p))?;
    let value = running + (payoff.terminal)(path.terminal(), path.terminal_regime());
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinitePayoff {
            path: path.seed as usize,
        })
    }
}

/// Monte Carlo estimate of the performance functional with its standard error.
pub fn evaluate_performance(ensemble: &PathEnsemble, payoff: &Payoff, controls: &ControlPair) -> Result<Estimate> {
    if ensemble.is_empty() {
        return Err(Error::InvalidParameter {
            name: "ensemble",
            reason: String::from("no paths"),
        });
    }
    let values = ensemble
        .paths
        .iter()
        .map(|p| path_payoff(p, &ensemble.grid, payoff, controls))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&values))
}

/// Sample integrability diagnostics along an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    /// `E[int |b| dt]`
    pub drift_abs: f64,
    /// `E[int |sigma|^2 dt]` (Frobenius norm)
    pub diffusion_sq: f64,
    /// `E[int int |eta|^2 nu(dz) dt]`
    pub jump_sq: f64,
    /// `E[sum_j int |gamma_j|^2 mu_j dt]`
    pub regime_jump_sq: f64,
    /// `E[int |u_k|^2 dt]`, `k = 1, 2`
    pub control_sq: [f64; 2],
    /// `E[int |f_k| dt]` per supplied payoff
    pub running_abs: Vec<f64>,
    /// `E[|g_k|]` per supplied payoff
    pub terminal_abs: Vec<f64>,
    /// Human-readable flags for non-finite or extreme diagnostics.
    pub flags: Vec<String>,
}

/// Diagnostics above this magnitude are flagged as extreme.
pub const EXTREME_DIAGNOSTIC: f64 = 1e12;

pub fn admissibility_report(
    ensemble: &PathEnsemble,
    model: &JumpDiffusion,
    controls: &ControlPair,
    payoffs: &[Payoff],
) -> Result<AdmissibilityReport> {
    let n = model.state_dim();
    let m = model.coeffs.noise_dim();
    let d = model.generator.dim();
    let grid = &ensemble.grid;
    let mut sums = vec![0.0; 6 + 2 * payoffs.len()];
    for path in &ensemble.paths {
        sums[0] += integrate_along(path, grid, controls, |p| {
            let mut b = vec![0.0; n];
            model.coeffs.drift(p, &mut b);
            Ok(b.iter().map(|x| x * x).sum::<f64>().sqrt())
        })?;
        sums[1] += integrate_along(path, grid, controls, |p| {
            let mut s = vec![0.0; n * m];
            model.coeffs.diffusion(p, &mut s);
            Ok(s.iter().map(|x| x * x).sum())
        })?;
        sums[2] += integrate_along(path, grid, controls, |p| {
            let mut total = 0.0;
            let mut j = vec![0.0; n];
            for (l, spec) in model.levy.iter().enumerate() {
                if spec.intensity(p.regime) > 0.0 {
                    total += spec.integrate(p.regime, |z| {
                        model.coeffs.jump(p, l, z, &mut j);
                        j.iter().map(|x| x * x).sum()
                    });
                }
            }
            Ok(total)
        })?;
        sums[3] += integrate_along(path, grid, controls, |p| {
            let mut g = vec![0.0; n * d];
            model.coeffs.regime_jump(p, &mut g);
            let mut total = 0.0;
            for j in 0..d {
                if j == p.regime {
                    continue;
                }
                let col: f64 = (0..n).map(|nn| g[nn * d + j] * g[nn * d + j]).sum();
                total += col * model.generator.rate(p.t, p.regime, j);
            }
            Ok(total)
        })?;
        sums[4] += integrate_along(path, grid, controls, |p| Ok(p.u1 * p.u1))?;
        sums[5] += integrate_along(path, grid, controls, |p| Ok(p.u2 * p.u2))?;
        for (k, pay) in payoffs.iter().enumerate() {
            sums[6 + k] += integrate_along(path, grid, controls, |p| Ok((pay.running)(p)?.abs()))?;
            sums[6 + payoffs.len() + k] += (pay.terminal)(path.terminal(), path.terminal_regime()).abs();
        }
    }
    let count = ensemble.len().max(1) as f64;
    let avg: Vec<f64> = sums.iter().map(|s| s / count).collect();
    let names = [
        "drift_abs",
        "diffusion_sq",
        "jump_sq",
        "regime_jump_sq",
        "control1_sq",
        "control2_sq",
    ];
    let mut flags = Vec::new();
    for (i, v) in avg.iter().enumerate() {
        let name = names.get(i).copied().unwrap_or("payoff");
        if !v.is_finite() {
            flags.push(format!("{name} is not finite"));
        } else if v.abs() > EXTREME_DIAGNOSTIC {
            flags.push(format!("{name} = {v} is extreme"));
        }
    }
    let p = payoffs.len();
    Ok(AdmissibilityReport {
        drift_abs: avg[0],
        diffusion_sq: avg[1],
        jump_sq: avg[2],
        regime_jump_sq: avg[3],
        control_sq: [avg[4], avg[5]],
        running_abs: avg[6..6 + p].to_vec(),
        terminal_abs: avg[6 + p..].to_vec(),
        flags,
    })
}
