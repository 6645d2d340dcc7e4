//! Terminal constraints: residuals of expectation constraints, scalar
//! multiplier search by bisection, almost-sure verification and Lagrangian
//! payoffs.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::bancassurance::{dividend_rule, Bancassurance};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::jumpdiff::{simulate_paths, ControlPair, JumpDiffusion, PathEnsemble, Payoff, TerminalFn};
use crate::numeric::Estimate;
use crate::runner::PathRunner;

#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `E[M(Y(T), alpha(T))] = 0`
    Expectation,
    /// `M(Y(T), alpha(T)) = 0` almost surely
    AlmostSure,
}

/// Known shape of a functional, which lets a deterministic backend compute its mean.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintForm {
    General,
    /// `y[component] - offset`
    Linear {
        component: usize,
        offset: f64,
    },
    /// `exp(-discount[i]) ln y[component] - offset`
    DiscountedLog {
        component: usize,
        discount: Vec<f64>,
        offset: f64,
    },
}

/// A terminal constraint `M(y, i)` with its target folded in.
#[derive(Clone)]
pub struct ConstraintSpec {
    pub name: String,
    pub kind: ConstraintKind,
    pub functional: TerminalFn,
    pub form: ConstraintForm,
}

impl core::fmt::Debug for ConstraintSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ConstraintSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("form", &self.form)
            .finish_non_exhaustive()
    }
}

impl ConstraintSpec {
    pub fn general(name: &str, kind: ConstraintKind, functional: TerminalFn) -> Self {
        Self {
            name: String::from(name),
            kind,
            functional,
            form: ConstraintForm::General,
        }
    }

    /// `E[y[component]] = target`.
    pub fn linear(name: &str, component: usize, target: f64) -> Self {
        Self {
            name: String::from(name),
            kind: ConstraintKind::Expectation,
            functional: Arc::new(move |y, _| y[component] - target),
            form: ConstraintForm::Linear {
                component,
                offset: target,
            },
        }
    }

    /// `E[exp(-discount[alpha(T)]) ln y[component]] = target`.
    pub fn discounted_log(name: &str, component: usize, discount: Vec<f64>, target: f64) -> Self {
        let d = discount.clone();
        Self {
            name: String::from(name),
            kind: ConstraintKind::Expectation,
            functional: Arc::new(move |y, i| (-d[i]).exp() * y[component].ln() - target),
            form: ConstraintForm::DiscountedLog {
                component,
                discount,
                offset: target,
            },
        }
    }

    pub fn with_kind(mut self, kind: ConstraintKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn evaluate(&self, y: &[f64], regime: usize) -> f64 {
        (self.functional)(y, regime)
    }
}

/// The two constraints of the insurer/bank game.
pub fn bancassurance_constraints(banc: &Bancassurance) -> [ConstraintSpec; 2] {
    let p = banc.params();
    [
        ConstraintSpec::linear("terminal cash", 0, p.cash_target),
        ConstraintSpec::discounted_log("discounted log wealth", 1, p.discount.clone(), p.log_target),
    ]
}

/// Exact means of terminal functionals under Markov controls.
pub trait ExpectationOracle {
    /// `E[M]`, or [`Error::BackendUnavailable`] when the form or controls are not covered.
    fn expectation(&self, constraint: &ConstraintSpec, controls: &ControlPair) -> Result<f64>;
}

impl ExpectationOracle for Bancassurance {
    fn expectation(&self, constraint: &ConstraintSpec, controls: &ControlPair) -> Result<f64> {
        if controls.state_feedback {
            return Err(Error::BackendUnavailable(String::from(
                "deterministic means need controls that depend only on time and regime",
            )));
        }
        let (u1, u2) = (controls.u1.clone(), controls.u2.clone());
        match &constraint.form {
            ConstraintForm::Linear { component: 0, offset } => {
                Ok(self.expected_terminal_cash(|t, i| u1(t, i, &[])) - offset)
            }
            ConstraintForm::DiscountedLog {
                component: 1,
                discount,
                offset,
            } if *discount == self.params().discount => Ok(self.expected_discounted_log(|t, i| u2(t, i, &[])) - offset),
            other => Err(Error::BackendUnavailable(format!(
                "no closed-form mean for {other:?} in this model"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Deterministic,
    MonteCarlo { grid: TimeGrid, n_paths: usize, seed: u64 },
}

/// `E[M(Y(T), alpha(T))]` under `controls`; the standard error is 0 on the
/// deterministic backend.
pub fn constraint_residual<R: PathRunner>(
    model: &JumpDiffusion,
    oracle: Option<&dyn ExpectationOracle>,
    constraint: &ConstraintSpec,
    controls: &ControlPair,
    backend: &Backend,
    runner: &R,
) -> Result<Estimate> {
    if constraint.kind != ConstraintKind::Expectation {
        return Err(Error::InvalidParameter {
            name: "constraint kind",
            reason: String::from("residuals are defined for expectation constraints"),
        });
    }
    match backend {
        Backend::Deterministic => {
            let oracle = oracle
                .ok_or_else(|| Error::BackendUnavailable(String::from("no deterministic oracle for this model")))?;
            Ok(Estimate::exact(oracle.expectation(constraint, controls)?))
        }
        Backend::MonteCarlo { grid, n_paths, seed } => {
            let ens = simulate_paths(model, controls, grid, *n_paths, *seed, runner)?;
            Ok(terminal_estimate(&ens, constraint))
        }
    }
}

/// Sample mean of `M` over an ensemble's terminal states.
pub fn terminal_estimate(ensemble: &PathEnsemble, constraint: &ConstraintSpec) -> Estimate {
    let values: Vec<f64> = ensemble
        .paths
        .iter()
        .map(|p| constraint.evaluate(p.terminal(), p.terminal_regime()))
        .collect();
    Estimate::from_samples(&values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionSettings {
    pub bracket: (f64, f64),
    /// Residual tolerance (deterministic) or standard-error ceiling (Monte Carlo).
    pub tol: f64,
    pub max_iterations: usize,
    /// Bisect `ln lambda` instead of `lambda`; needs a positive bracket.
    pub log_scale: bool,
}

impl Default for BisectionSettings {
    fn default() -> Self {
        Self {
            bracket: (1e-6, 1e6),
            tol: 1e-10,
            max_iterations: 200,
            log_scale: true,
        }
    }
}

/// One residual evaluation of the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub lambda: f64,
    pub lo: f64,
    pub hi: f64,
    pub residual: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone)]
pub struct MultiplierSolution {
    pub lambda: f64,
    pub residual: Estimate,
    pub controls: ControlPair,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

fn converged(r: &Estimate, tol: f64) -> bool {
    if r.std_error > 0.0 {
        r.std_error <= tol && r.mean.abs() <= 3.0 * r.std_error
    } else {
        r.mean.abs() <= tol
    }
}

/// Bisection for a root of `residual` inside `settings.bracket`. Iteration 0
/// of the trace holds the two bracket ends.
pub fn bisect<F>(mut residual: F, settings: &BisectionSettings) -> Result<(f64, Estimate, Vec<TraceRow>)>
where
    F: FnMut(f64) -> Result<Estimate>,
{
    let (mut lo, mut hi) = settings.bracket;
    if !(lo < hi) || (settings.log_scale && !(lo > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "bracket",
            reason: format!("need lo < hi (and lo > 0 on a log scale), got ({lo}, {hi})"),
        });
    }
    let mut trace = Vec::new();
    let r_lo = residual(lo)?;
    let r_hi = residual(hi)?;
    let row = |iteration, lambda, lo, hi, r: &Estimate| TraceRow {
        iteration,
        lambda,
        lo,
        hi,
        residual: r.mean,
        std_error: r.std_error,
    };
    trace.push(row(0, lo, lo, hi, &r_lo));
    trace.push(row(0, hi, lo, hi, &r_hi));
    for (x, r) in [(lo, r_lo), (hi, r_hi)] {
        if converged(&r, settings.tol) {
            return Ok((x, r, trace));
        }
    }
    if !(r_lo.mean * r_hi.mean < 0.0) {
        return Err(Error::NoSignChange {
            lo,
            hi,
            r_lo: r_lo.mean,
            r_hi: r_hi.mean,
        });
    }
    let lo_negative = r_lo.mean < 0.0;
    for iteration in 1..=settings.max_iterations {
        let mid = if settings.log_scale {
            (0.5 * (lo.ln() + hi.ln())).exp()
        } else {
            0.5 * (lo + hi)
        };
        let r = residual(mid)?;
        trace.push(row(iteration, mid, lo, hi, &r));
        if converged(&r, settings.tol) {
            return Ok((mid, r, trace));
        }
        if (r.mean < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::MaxIterations(settings.max_iterations))
}

/// Finds `lambda` with `E[M] = 0` under `solver(lambda)`: the unconstrained
/// problem is solved at each trial multiplier and the constraint is root-found.
#[allow(clippy::too_many_arguments)]
pub fn solve_multiplier<R, S>(
    model: &JumpDiffusion,
    oracle: Option<&dyn ExpectationOracle>,
    solver: S,
    constraint: &ConstraintSpec,
    settings: &BisectionSettings,
    backend: &Backend,
    runner: &R,
) -> Result<MultiplierSolution>
where
    R: PathRunner,
    S: Fn(f64) -> Result<ControlPair>,
{
    let (lambda, residual, trace) = bisect(
        |lambda| constraint_residual(model, oracle, constraint, &solver(lambda)?, backend, runner),
        settings,
    )?;
    Ok(MultiplierSolution {
        lambda,
        residual,
        controls: solver(lambda)?,
        iterations: trace.last().map_or(0, |r| r.iteration),
        trace,
    })
}

/// Multipliers of the insurer/bank game by root-finding: the bank's first
/// (it does not depend on the dividend), then the insurer's at the bank's root.
pub fn bancassurance_multipliers<R: PathRunner>(
    banc: &Bancassurance,
    settings: &BisectionSettings,
    backend: &Backend,
    runner: &R,
) -> Result<[MultiplierSolution; 2]> {
    let model = banc.system()?;
    let [cash, log] = bancassurance_constraints(banc);
    let oracle: &dyn ExpectationOracle = banc;
    let bank = solve_multiplier(
        &model,
        Some(oracle),
        |lambda2| {
            // Only the rate matters for the bank's constraint; the insurer's
            // coefficient is skipped because it is stiff for tiny multipliers.
            let a = Arc::new(banc.a_coefficient(lambda2)?);
            let h2 = banc.params().rate_weight.clone();
            let h1 = banc.params().dividend_weight.clone();
            let k1 = banc.params().risk_aversion;
            Ok(ControlPair::markov(
                move |t, i| dividend_rule(&h1, k1, 1.0, t, i),
                move |t, i| -h2.at(t, i) / a.value_at(t, i),
            ))
        },
        &log,
        settings,
        backend,
        runner,
    )?;
    let base = banc.equilibrium_with(1.0, bank.lambda)?;
    let insurer = solve_multiplier(
        &model,
        Some(oracle),
        |lambda1| {
            if !(lambda1 > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "lambda1",
                    reason: format!("multiplier must be positive, got {lambda1}"),
                });
            }
            Ok(base.with_lambda1(lambda1).controls())
        },
        &cash,
        settings,
        backend,
        runner,
    )?;
    Ok([insurer, bank])
}

/// Gauss-Seidel sweeps for coupled multipliers: `solve1(lambda2)` returns the
/// insurer's root given the bank's multiplier and vice versa. Stops when both
/// updates are within `tol` relative.
pub fn alternating_multipliers<F1, F2>(
    mut solve1: F1,
    mut solve2: F2,
    start: [f64; 2],
    tol: f64,
    max_sweeps: usize,
) -> Result<([f64; 2], usize)>
where
    F1: FnMut(f64) -> Result<f64>,
    F2: FnMut(f64) -> Result<f64>,
{
    let mut lambda = start;
    for sweep in 1..=max_sweeps {
        let l1 = solve1(lambda[1])?;
        let l2 = solve2(l1)?;
        let moved =
            (l1 - lambda[0]).abs() / lambda[0].abs().max(1.0) + (l2 - lambda[1]).abs() / lambda[1].abs().max(1.0);
        lambda = [l1, l2];
        if moved <= tol {
            return Ok((lambda, sweep));
        }
    }
    Err(Error::MaxIterations(max_sweeps))
}

pub const ALTERNATING_TOL: f64 = 1e-8;
pub const ALTERNATING_MAX_SWEEPS: usize = 50;

/// Outcome of an almost-sure constraint check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlmostSureReport {
    pub fraction_satisfied: f64,
    pub max_violation: f64,
}

/// Fraction of paths with `|M(Y(T), alpha(T))| <= tol`, and the largest `|M|`.
pub fn verify_as_constraint(ensemble: &PathEnsemble, constraint: &ConstraintSpec, tol: f64) -> AlmostSureReport {
    let mut ok = 0usize;
    let mut max_violation = 0.0f64;
    for p in &ensemble.paths {
        let v = constraint.evaluate(p.terminal(), p.terminal_regime()).abs();
        if v <= tol {
            ok += 1;
        }
        // NaN counts as the worst violation.
        max_violation = if v.is_nan() {
            f64::INFINITY
        } else {
            max_violation.max(v)
        };
    }
    AlmostSureReport {
        fraction_satisfied: if ensemble.is_empty() {
            1.0
        } else {
            ok as f64 / ensemble.len() as f64
        },
        max_violation,
    }
}

/// `(f, g + lambda M)`.
pub fn lagrangian_objective(payoff: &Payoff, multiplier: f64, constraint: TerminalFn) -> Payoff {
    if multiplier == 0.0 {
        return payoff.clone();
    }
    let g = payoff.terminal.clone();
    Payoff::new(
        payoff.running.clone(),
        Arc::new(move |y, i| g(y, i) + multiplier * constraint(y, i)),
    )
}

/// `(f, g + lambda(Y(T), alpha(T)) M)` for a terminal-measurable multiplier.
pub fn stochastic_lagrangian(payoff: &Payoff, multiplier: TerminalFn, constraint: TerminalFn) -> Payoff {
    let g = payoff.terminal.clone();
    Payoff::new(
        payoff.running.clone(),
        Arc::new(move |y, i| g(y, i) + multiplier(y, i) * constraint(y, i)),
    )
}
