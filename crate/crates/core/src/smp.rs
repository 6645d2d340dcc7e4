//! Maximum-principle checks: Hamiltonians, first-order and concavity
//! conditions, Monte Carlo deviation tests for Nash and saddle equilibria,
//! and martingale residuals of the adjoint ansatz.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::bancassurance::{Bancassurance, Equilibrium, PlayerAdjoint};
use crate::chain::ChainGenerator;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::jumpdiff::{
    map_noise, path_payoff, running_integral, CoefficientSet, ControlFn, ControlPair, JumpDiffusion, PathEnsemble,
    Payoff, RunningFn, StatePoint,
};
use crate::lagrange::lagrangian_objective;
use crate::numeric::Estimate;
use crate::runner::{path_rng, PathRunner};

#[allow(unused_imports)]
use num_traits::Float;

/// `r(n, l, z)`: jump adjoint for state component `n`, jump column `l`, mark `z`.
pub type AdjointJumpFn = Arc<dyn Fn(usize, usize, f64) -> f64 + Send + Sync>;

/// Adjoint values `(p, q, r, w)` of one player at one point.
#[derive(Clone)]
pub struct Adjoints {
    /// `N`
    pub p: Vec<f64>,
    /// Row-major `N x M`
    pub q: Vec<f64>,
    pub r: Option<AdjointJumpFn>,
    /// Row-major `N x D`
    pub w: Vec<f64>,
}

impl core::fmt::Debug for Adjoints {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Adjoints")
            .field("p", &self.p)
            .field("q", &self.q)
            .field("r", &self.r.is_some())
            .field("w", &self.w)
            .finish()
    }
}

impl Adjoints {
    pub fn zeros(n: usize, m: usize, d: usize) -> Self {
        Self {
            p: vec![0.0; n],
            q: vec![0.0; n * m],
            r: None,
            w: vec![0.0; n * d],
        }
    }
}

impl From<&PlayerAdjoint> for Adjoints {
    fn from(a: &PlayerAdjoint) -> Self {
        let a2 = a.clone();
        Self {
            p: a.p.to_vec(),
            q: a.q.to_vec(),
            r: Some(Arc::new(move |n, _, z| a2.r(n, z))),
            w: a.w.clone(),
        }
    }
}

/// Arguments of a Hamiltonian evaluation.
#[derive(Debug, Clone, Copy)]
pub struct HamiltonianInputs<'a> {
    pub t: f64,
    pub y: &'a [f64],
    pub u1: f64,
    pub u2: f64,
    pub regime: usize,
    pub adjoints: &'a Adjoints,
}

/// `H = f + b.p + tr(sigma^T q) + sum_l int sum_n eta_nl r_nl nu_l(dz) + sum_j sum_n gamma_nj w_nj mu_ij`.
pub fn hamiltonian(model: &JumpDiffusion, running: &RunningFn, x: &HamiltonianInputs<'_>) -> Result<f64> {
    let c = &model.coeffs;
    let n = c.state_dim();
    let m = c.noise_dim();
    let d = model.generator.dim();
    let adj = x.adjoints;
    let dims = [
        ("p", adj.p.len(), n),
        ("q", adj.q.len(), n * m),
        ("w", adj.w.len(), n * d),
        ("y", x.y.len(), n),
    ];
    for (what, got, expected) in dims {
        if got != expected {
            return Err(Error::DimensionMismatch { what, expected, got });
        }
    }
    if !(x.t.is_finite() && x.u1.is_finite() && x.u2.is_finite()) || x.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DomainError(String::from("Hamiltonian inputs must be finite")));
    }
    let pt = StatePoint {
        t: x.t,
        y: x.y,
        regime: x.regime,
        u1: x.u1,
        u2: x.u2,
    };
    let mut total = running(&pt)?;
    let mut buf = vec![0.0; n.max(n * m).max(n * d)];
    c.drift(&pt, &mut buf[..n]);
    total += buf[..n].iter().zip(&adj.p).map(|(b, p)| b * p).sum::<f64>();
    c.diffusion(&pt, &mut buf[..n * m]);
    total += buf[..n * m].iter().zip(&adj.q).map(|(s, q)| s * q).sum::<f64>();
    if let Some(r) = &adj.r {
        let mut eta = vec![0.0; n];
        for (l, spec) in model.levy.iter().enumerate() {
            total += spec.integrate(x.regime, |z| {
                c.jump(&pt, l, z, &mut eta);
                eta.iter().enumerate().map(|(k, e)| e * r(k, l, z)).sum()
            });
        }
    }
    if c.has_regime_jumps() {
        c.regime_jump(&pt, &mut buf[..n * d]);
        for j in 0..d {
            let mu = model.generator.rate(x.t, x.regime, j);
            let col: f64 = (0..n).map(|k| buf[k * d + j] * adj.w[k * d + j]).sum();
            total += col * mu;
        }
    }
    Ok(total)
}

/// A state at which first-order conditions are checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleState {
    pub t: f64,
    pub regime: usize,
    pub y: [f64; 2],
}

/// Seeded sample of `(t, regime, (x1, x2))` with `x1` in `[0, 2(u - c)]`
/// and `x2` in `[c/2, 2c]`.
pub fn sample_states(banc: &Bancassurance, n: usize, seed: u64) -> Vec<SampleState> {
    let p = banc.params();
    let mut rng = path_rng(seed);
    let [x1, x2] = p.initial_state();
    (0..n)
        .map(|_| SampleState {
            t: rng.random::<f64>() * p.horizon(),
            regime: rng.random_range(0..p.dim()),
            y: [rng.random::<f64>() * 2.0 * x1, x2 * (0.5 + 1.5 * rng.random::<f64>())],
        })
        .collect()
}

/// Relative spacing of the first-derivative differences.
pub const FIRST_ORDER_STEP: f64 = 1e-5;
/// Relative spacing of the concavity second differences.
pub const CONCAVITY_STEP: f64 = 1e-3;

/// Largest first-order residual and second difference per player.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderReport {
    /// `max |dH^k / du_k|`
    pub max_residual: [f64; 2],
    /// `max d2H^k / du_k^2`; negative means strictly concave at every sample.
    pub max_second_difference: [f64; 2],
    pub points: usize,
}

impl FirstOrderReport {
    pub fn concave(&self) -> [bool; 2] {
        [self.max_second_difference[0] < 0.0, self.max_second_difference[1] < 0.0]
    }
}

/// Central differences of each player's Hamiltonian in their own control at
/// the candidate controls, with the equilibrium adjoints.
pub fn check_first_order(
    banc: &Bancassurance,
    eq: &Equilibrium,
    candidate: &ControlPair,
    samples: &[SampleState],
    log_abs_rate: bool,
) -> Result<FirstOrderReport> {
    let model = banc.system()?;
    let payoffs = banc.payoffs(log_abs_rate);
    first_order_residuals(
        &model,
        &payoffs,
        |s| {
            let f = banc.adjoint_at(eq, s.t, s.regime, s.y)?;
            Ok([Adjoints::from(&f.insurer), Adjoints::from(&f.bank)])
        },
        candidate,
        samples,
    )
}

/// [`check_first_order`] for any model, payoffs and adjoint supplier.
pub fn first_order_residuals<A>(
    model: &JumpDiffusion,
    payoffs: &[Payoff; 2],
    adjoints: A,
    candidate: &ControlPair,
    samples: &[SampleState],
) -> Result<FirstOrderReport>
where
    A: Fn(&SampleState) -> Result<[Adjoints; 2]>,
{
    let mut max_residual = [0.0f64; 2];
    let mut max_second = [f64::NEG_INFINITY; 2];
    for s in samples {
        let (u1, u2) = candidate.evaluate(s.t, s.regime, &s.y)?;
        let adj = adjoints(s)?;
        for player in 1..=2 {
            let own = if player == 1 { u1 } else { u2 };
            let h = |v: f64| {
                let (a, b) = if player == 1 { (v, u2) } else { (u1, v) };
                hamiltonian(
                    model,
                    &payoffs[player - 1].running,
                    &HamiltonianInputs {
                        t: s.t,
                        y: &s.y,
                        u1: a,
                        u2: b,
                        regime: s.regime,
                        adjoints: &adj[player - 1],
                    },
                )
            };
            let e = FIRST_ORDER_STEP * own.abs().max(f64::MIN_POSITIVE);
            let grad = (h(own + e)? - h(own - e)?) / (2.0 * e);
            let e2 = CONCAVITY_STEP * own.abs().max(f64::MIN_POSITIVE);
            let second = (h(own + e2)? - 2.0 * h(own)? + h(own - e2)?) / (e2 * e2);
            max_residual[player - 1] = max_residual[player - 1].max(grad.abs());
            max_second[player - 1] = max_second[player - 1].max(second);
        }
    }
    Ok(FirstOrderReport {
        max_residual,
        max_second_difference: max_second,
        points: samples.len(),
    })
}

/// A substitution of one player's control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Scale(f64),
    Offset(f64),
    Constant(f64),
    /// Replaces the control in one regime by a constant.
    RegimeOverride {
        regime: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub player: usize,
    pub perturbation: Perturbation,
}

impl Deviation {
    pub fn name(&self) -> String {
        match self.perturbation {
            Perturbation::Scale(s) => format!("u{} x {s}", self.player),
            Perturbation::Offset(o) => format!("u{} + {o}", self.player),
            Perturbation::Constant(c) => format!("u{} = {c}", self.player),
            Perturbation::RegimeOverride { regime, value } => {
                format!("u{} = {value} in regime {regime}", self.player)
            }
        }
    }

    /// `base` with this player's control replaced.
    pub fn apply(&self, base: &ControlPair) -> ControlPair {
        let inner = base.control(self.player).clone();
        let f: ControlFn = match self.perturbation {
            Perturbation::Scale(s) => Arc::new(move |t, i, y| s * inner(t, i, y)),
            Perturbation::Offset(o) => Arc::new(move |t, i, y| o + inner(t, i, y)),
            Perturbation::Constant(c) => Arc::new(move |_, _, _| c),
            Perturbation::RegimeOverride { regime, value } => {
                Arc::new(move |t, i, y| if i == regime { value } else { inner(t, i, y) })
            }
        };
        base.replace(self.player, f, false)
    }
}

/// Finite family of unilateral deviations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviationFamily {
    pub deviations: Vec<Deviation>,
}

impl DeviationFamily {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scalings(player: usize, factors: &[f64]) -> Self {
        Self::from_perturbations(player, factors.iter().map(|f| Perturbation::Scale(*f)))
    }

    pub fn offsets(player: usize, offsets: &[f64]) -> Self {
        Self::from_perturbations(player, offsets.iter().map(|o| Perturbation::Offset(*o)))
    }

    pub fn from_perturbations(player: usize, perturbations: impl IntoIterator<Item = Perturbation>) -> Self {
        Self {
            deviations: perturbations
                .into_iter()
                .map(|perturbation| Deviation { player, perturbation })
                .collect(),
        }
    }

    pub fn with(mut self, other: DeviationFamily) -> Self {
        self.deviations.extend(other.deviations);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.deviations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.deviations.len()
    }
}

/// Direction in which a player's payoff improves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Maximize,
    Minimize,
}

/// Pass rule: a deviation improves when its gain exceeds `threshold * SE + abs_tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationSettings {
    pub threshold: f64,
    pub abs_tol: f64,
}

impl Default for DeviationSettings {
    fn default() -> Self {
        Self {
            threshold: 3.0,
            abs_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationResult {
    pub name: String,
    pub player: usize,
    /// `J(deviation) - J(candidate)` with its paired standard error.
    pub delta: Estimate,
    /// Gain in the improving direction divided by SE; `None` when SE is 0.
    pub z: Option<f64>,
    pub improves: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumVerdict {
    pub results: Vec<DeviationResult>,
    pub player_passed: [bool; 2],
    pub passed: bool,
}

/// Common-random-number deviation test: every path's noise is drawn once and
/// reused for the candidate and each deviation.
#[allow(clippy::too_many_arguments)]
pub fn verify_deviations<R: PathRunner>(
    model: &JumpDiffusion,
    objectives: [(&Payoff, Goal); 2],
    candidate: &ControlPair,
    family: &DeviationFamily,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    settings: DeviationSettings,
    runner: &R,
) -> Result<EquilibriumVerdict> {
    if family.is_empty() {
        return Ok(EquilibriumVerdict {
            results: Vec::new(),
            player_passed: [true, true],
            passed: true,
        });
    }
    if let Some(d) = family.deviations.iter().find(|d| d.player != 1 && d.player != 2) {
        return Err(Error::InvalidParameter {
            name: "deviation player",
            reason: format!("player must be 1 or 2, got {}", d.player),
        });
    }
    let variants: Vec<ControlPair> = family.deviations.iter().map(|d| d.apply(candidate)).collect();
    let needed = [
        family.deviations.iter().any(|d| d.player == 1),
        family.deviations.iter().any(|d| d.player == 2),
    ];
    let diffs = map_noise(model, grid, n_paths, seed, runner, |noise| {
        let base_path = model.simulate_with_noise(candidate, grid, noise)?;
        let mut base = [0.0; 2];
        for k in 0..2 {
            if needed[k] {
                base[k] = path_payoff(&base_path, grid, objectives[k].0, candidate)?;
            }
        }
        family
            .deviations
            .iter()
            .zip(&variants)
            .map(|(d, controls)| {
                let path = model.simulate_with_noise(controls, grid, noise)?;
                Ok(path_payoff(&path, grid, objectives[d.player - 1].0, controls)? - base[d.player - 1])
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let mut results = Vec::with_capacity(family.len());
    let mut player_passed = [true, true];
    for (idx, d) in family.deviations.iter().enumerate() {
        let column: Vec<f64> = diffs.iter().map(|row| row[idx]).collect();
        let delta = Estimate::from_samples(&column);
        let gain = match objectives[d.player - 1].1 {
            Goal::Maximize => delta.mean,
            Goal::Minimize => -delta.mean,
        };
        let z = (delta.std_error > 0.0).then(|| gain / delta.std_error);
        let improves = gain > settings.threshold * delta.std_error + settings.abs_tol;
        if improves {
            player_passed[d.player - 1] = false;
        }
        results.push(DeviationResult {
            name: d.name(),
            player: d.player,
            delta,
            z,
            improves,
        });
    }
    Ok(EquilibriumVerdict {
        results,
        player_passed,
        passed: player_passed[0] && player_passed[1],
    })
}

/// Nash test: both players maximize their own (Lagrangian) payoff.
#[allow(clippy::too_many_arguments)]
pub fn verify_nash<R: PathRunner>(
    model: &JumpDiffusion,
    payoffs: &[Payoff; 2],
    candidate: &ControlPair,
    family: &DeviationFamily,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    settings: DeviationSettings,
    runner: &R,
) -> Result<EquilibriumVerdict> {
    verify_deviations(
        model,
        [(&payoffs[0], Goal::Maximize), (&payoffs[1], Goal::Maximize)],
        candidate,
        family,
        grid,
        n_paths,
        seed,
        settings,
        runner,
    )
}

/// Saddle test on one payoff: player 1 maximizes, player 2 minimizes.
#[allow(clippy::too_many_arguments)]
pub fn verify_saddle<R: PathRunner>(
    model: &JumpDiffusion,
    payoff: &Payoff,
    candidate: &ControlPair,
    family: &DeviationFamily,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    settings: DeviationSettings,
    runner: &R,
) -> Result<EquilibriumVerdict> {
    verify_deviations(
        model,
        [(payoff, Goal::Maximize), (payoff, Goal::Minimize)],
        candidate,
        family,
        grid,
        n_paths,
        seed,
        settings,
        runner,
    )
}

/// Lagrangian payoffs `J_k + lambda_k M_k` of the insurer/bank game.
pub fn bancassurance_objectives(banc: &Bancassurance, eq: &Equilibrium, log_abs_rate: bool) -> [Payoff; 2] {
    let [p1, p2] = banc.payoffs(log_abs_rate);
    let [m1, m2] = banc.constraint_functionals();
    [
        lagrangian_objective(&p1, eq.lambda1, m1),
        lagrangian_objective(&p2, eq.lambda2, m2),
    ]
}

/// Zero-sum test game: `dY = (u1 - u2) dt + vol dW`, payoff
/// `E[int cost(alpha) (-u1^2 + u2^2) / 2 dt - penalty (Y(T) - y0)^2 / 2 + multiplier (Y(T) - y0)]`.
/// For `cost > penalty * T` the saddle is `u1 = u2 = multiplier / cost(alpha)`.
#[derive(Debug, Clone)]
pub struct SaddleToy {
    pub cost: Vec<f64>,
    pub vol: f64,
    pub penalty: f64,
    pub multiplier: f64,
    pub y0: f64,
    pub generator: ChainGenerator,
}

impl SaddleToy {
    /// Single regime, unit cost, `vol = 0.5`, `penalty = 0.5`, `T = 1`.
    pub fn plain() -> Self {
        Self {
            cost: vec![1.0],
            vol: 0.5,
            penalty: 0.5,
            multiplier: 0.0,
            y0: 0.0,
            generator: ChainGenerator::constant(&[vec![0.0]], 1.0).expect("valid generator"),
        }
    }

    /// Two regimes with costs `(1, 2)` switching at rate 1.
    pub fn regime_modulated() -> Self {
        Self {
            cost: vec![1.0, 2.0],
            generator: ChainGenerator::constant(&[vec![-1.0, 1.0], vec![1.0, -1.0]], 1.0).expect("valid generator"),
            ..Self::plain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cost.len() != self.generator.dim() {
            return Err(Error::DimensionMismatch {
                what: "saddle costs",
                expected: self.generator.dim(),
                got: self.cost.len(),
            });
        }
        let t = self.generator.horizon();
        if let Some(c) = self.cost.iter().find(|c| !(**c > self.penalty * t)) {
            return Err(Error::InvalidParameter {
                name: "cost",
                reason: format!("cost {c} must exceed penalty * T = {}", self.penalty * t),
            });
        }
        Ok(())
    }

    pub fn model(&self) -> Result<JumpDiffusion> {
        self.validate()?;
        let vol = self.vol;
        let coeffs = CoefficientSet::new(
            1,
            1,
            Arc::new(|p, out| out[0] = p.u1 - p.u2),
            Arc::new(move |_, out| out[0] = vol),
        );
        JumpDiffusion::new(coeffs, Vec::new(), self.generator.clone(), vec![self.y0], 0)
    }

    /// Lagrangian payoff including `multiplier * (Y(T) - y0)`.
    pub fn payoff(&self) -> Payoff {
        let cost = self.cost.clone();
        let (penalty, y0) = (self.penalty, self.y0);
        let base = Payoff::new(
            Arc::new(move |p| Ok(cost[p.regime] * 0.5 * (p.u2 * p.u2 - p.u1 * p.u1))),
            Arc::new(move |y, _| -0.5 * penalty * (y[0] - y0) * (y[0] - y0)),
        );
        lagrangian_objective(&base, self.multiplier, Arc::new(move |y, _| y[0] - y0))
    }

    pub fn saddle(&self) -> ControlPair {
        let (c1, c2) = (self.cost.clone(), self.cost.clone());
        let m = self.multiplier;
        ControlPair::markov(move |_, i| m / c1[i], move |_, i| m / c2[i])
    }

    /// Offsets `+-0.5` and a switch to 0 for each player, plus per-regime overrides.
    pub fn default_deviations(&self) -> DeviationFamily {
        let mut family = DeviationFamily::new();
        for player in 1..=2 {
            family =
                family
                    .with(DeviationFamily::offsets(player, &[-0.5, 0.5]))
                    .with(DeviationFamily::from_perturbations(
                        player,
                        [Perturbation::Constant(0.0)],
                    ));
            if self.cost.len() > 1 {
                family = family.with(DeviationFamily::from_perturbations(
                    player,
                    (0..self.cost.len()).map(|regime| Perturbation::RegimeOverride { regime, value: 0.5 }),
                ));
            }
        }
        family
    }
}

/// Martingale residuals of one player's `p2` at a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointResidual {
    pub t: f64,
    /// `p2(t) - p2(0) - int_0^t drift ds` for the insurer and the bank.
    pub residuals: [Estimate; 2],
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointReport {
    /// `max |p2^1(T) + 2 X2(T)|` over paths.
    pub insurer_terminal: f64,
    /// `max |p2^2(T) X2(T) - lambda2 exp(-r(alpha(T)))| / (lambda2 exp(-r))`.
    pub bank_terminal: f64,
    /// `max |p1^1(t) - lambda1| + |p1^2(t) - k2|` over paths and nodes.
    pub constant_components: f64,
    pub checkpoints: Vec<CheckpointResidual>,
    pub passed: bool,
}

/// Relative tolerance on the bank's terminal identity (rounding of `A / X2 * X2`).
pub const TERMINAL_REL_TOL: f64 = 1e-14;

/// Terminal identities and drift-compensated increments of the adjoint ansatz
/// along an ensemble simulated under `controls`.
pub fn adjoint_residuals(
    banc: &Bancassurance,
    eq: &Equilibrium,
    ensemble: &PathEnsemble,
    controls: &ControlPair,
    checkpoints: &[f64],
    threshold: f64,
) -> Result<AdjointReport> {
    let grid = &ensemble.grid;
    // Trapezoid quadrature of the drift leaves an O(h^2) bias.
    let bias = grid.step() * grid.step();
    let nodes: Vec<usize> = checkpoints.iter().map(|t| grid.nearest(*t)).collect();
    let p = banc.params();
    let mut insurer_terminal = 0.0f64;
    let mut bank_terminal = 0.0f64;
    let mut constant_components = 0.0f64;
    let mut samples = vec![[Vec::with_capacity(ensemble.len()), Vec::with_capacity(ensemble.len())]; nodes.len()];
    for path in &ensemble.paths {
        let frames = banc.adjoint_frame(eq, path, grid)?;
        let last = frames.last().expect("grid has nodes");
        insurer_terminal = insurer_terminal.max((last.insurer.p[1] + 2.0 * last.x[1]).abs());
        let target = eq.lambda2 * (-p.discount[last.regime]).exp();
        bank_terminal = bank_terminal.max(((last.bank.p[1] * last.x[1] - target) / target).abs());
        for f in &frames {
            constant_components =
                constant_components.max((f.insurer.p[0] - eq.lambda1).abs() + (f.bank.p[0] - p.cash_weight).abs());
        }
        let drifts: [Vec<f64>; 2] = [
            running_integral(path, grid, controls, |pt| {
                Ok(banc.adjoint_drift_at(eq, pt.t, pt.regime, pt.y[1], pt.u2)?[0])
            })?,
            running_integral(path, grid, controls, |pt| {
                Ok(banc.adjoint_drift_at(eq, pt.t, pt.regime, pt.y[1], pt.u2)?[1])
            })?,
        ];
        for (c, &k) in nodes.iter().enumerate() {
            let ins = frames[k].insurer.p[1] - frames[0].insurer.p[1] - drifts[0][k];
            let bank = frames[k].bank.p[1] - frames[0].bank.p[1] - drifts[1][k];
            samples[c][0].push(ins);
            samples[c][1].push(bank);
        }
    }
    let checkpoints: Vec<CheckpointResidual> = nodes
        .iter()
        .zip(&samples)
        .map(|(&k, s)| {
            let residuals = [Estimate::from_samples(&s[0]), Estimate::from_samples(&s[1])];
            let passed = residuals.iter().all(|e| e.within_tol(0.0, threshold, bias));
            CheckpointResidual {
                t: grid.time(k),
                residuals,
                passed,
            }
        })
        .collect();
    let passed = insurer_terminal == 0.0
        && bank_terminal <= TERMINAL_REL_TOL
        && constant_components == 0.0
        && checkpoints.iter().all(|c| c.passed);
    Ok(AdjointReport {
        insurer_terminal,
        bank_terminal,
        constant_components,
        checkpoints,
        passed,
    })
}
