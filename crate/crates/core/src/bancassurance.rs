//! Insurer/bank dividend game.
//!
//! State `(X1, X2)`: the insurer's cash and the bank's wealth built from the
//! commission. The insurer pays dividends at rate `delta`, the bank picks its
//! appreciation rate `u`:
//!
//! ```text
//! dX1 = (premium - payment(alpha) - delta) dt - claim_vol(alpha) dW1 - gamma(alpha) dPhi~
//! dX2 = X2(t-) (u dt + bank_vol(alpha) dW2 + int z N~(dt, dz)),   X(0) = (surplus - commission, commission)
//! ```
//!
//! Payoffs, with multipliers for the constraints `E[X1(T)] = K1` and
//! `E[exp(-r(alpha(T))) ln X2(T)] = K2`:
//!
//! ```text
//! J1 = E[ int h1 delta^(1-k1) / (1-k1) dt - X2(T)^2 ]
//! J2 = E[ int h2 ln u dt + k2 X1(T) ]
//! ```
//!
//! The equilibrium is `delta* = (lambda1 / h1)^(-1/k1)` and `u* = -h2 / A`,
//! where `A(t, i) = lambda2 E[exp(-r(alpha(T))) | alpha(t) = i]`; the
//! discount enters through this conditional expectation so that `u*` is
//! adapted.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chain::ChainGenerator;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::jumpdiff::{CoefficientSet, ControlPair, JumpDiffusion, Payoff, SimPath, StatePoint, TerminalFn};
use crate::kolmogorov::{marginal_laws_on_grid, point_mass, solve_backward_coupled, CoupledValue};
use crate::levy::LevyMeasureSpec;
use crate::numeric::simpson;

#[allow(unused_imports)]
use num_traits::Float;

/// Resolution of the deterministic quadratures and coefficient solves.
pub const DEFAULT_QUADRATURE_POINTS: usize = 2049;

/// Multiplier denominators within this relative distance of zero count as zero.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Right-continuous piecewise-constant function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTable {
    starts: Vec<f64>,
    values: Vec<f64>,
}

impl TimeTable {
    pub fn constant(value: f64) -> Self {
        Self {
            starts: vec![0.0],
            values: vec![value],
        }
    }

    /// `(start, value)` pieces; the first must start at 0 and starts must increase.
    pub fn piecewise(pieces: &[(f64, f64)]) -> Result<Self> {
        if pieces.is_empty() || pieces[0].0 != 0.0 {
            return Err(Error::InvalidParameter {
                name: "time table",
                reason: String::from("the first piece must start at t = 0"),
            });
        }
        if pieces.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidParameter {
                name: "time table",
                reason: String::from("piece start times must increase"),
            });
        }
        Ok(Self {
            starts: pieces.iter().map(|p| p.0).collect(),
            values: pieces.iter().map(|p| p.1).collect(),
        })
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.starts.partition_point(|s| *s <= t);
        self.values[k.saturating_sub(1)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            starts: self.starts.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }
}

/// One [`TimeTable`] per chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTable(pub Vec<TimeTable>);

impl StateTable {
    pub fn constants(values: &[f64]) -> Self {
        Self(values.iter().map(|v| TimeTable::constant(*v)).collect())
    }

    pub fn at(&self, t: f64, i: usize) -> f64 {
        self.0[i].at(t)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn all_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().flat_map(|t| t.values().iter().copied())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        Self(self.0.iter().map(|t| t.map(f)).collect())
    }
}

/// Model inputs. Chain states are 0-based.
#[derive(Debug, Clone)]
pub struct BancassuranceParams {
    pub premium: TimeTable,
    pub payment: StateTable,
    pub claim_vol: StateTable,
    pub bank_vol: StateTable,
    /// Jumps of the bank's relative wealth; the mark `z` is the relative jump size.
    pub jumps: LevyMeasureSpec,
    /// `claims[i][j]`: claim paid on a transition `i -> j`.
    pub claims: Vec<Vec<TimeTable>>,
    pub dividend_weight: StateTable,
    pub rate_weight: StateTable,
    /// Insurer risk parameter `k1 > 0`, `k1 != 1`.
    pub risk_aversion: f64,
    /// Weight `k2` of the insurer's terminal cash in the bank's payoff.
    pub cash_weight: f64,
    /// Terminal discount rates per state.
    pub discount: Vec<f64>,
    pub cash_target: f64,
    pub log_target: f64,
    pub surplus: f64,
    pub commission: f64,
    pub generator: ChainGenerator,
    pub initial_state: usize,
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

impl BancassuranceParams {
    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn horizon(&self) -> f64 {
        self.generator.horizon()
    }

    pub fn initial_state(&self) -> [f64; 2] {
        [self.surplus - self.commission, self.commission]
    }

    pub fn claim(&self, t: f64, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.claims[i][j].at(t)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let tables = [
            ("payment", &self.payment),
            ("claim_vol", &self.claim_vol),
            ("bank_vol", &self.bank_vol),
            ("dividend_weight", &self.dividend_weight),
            ("rate_weight", &self.rate_weight),
        ];
        for (name, table) in tables {
            if table.dim() != d {
                return Err(Error::DimensionMismatch {
                    what: name,
                    expected: d,
                    got: table.dim(),
                });
            }
            if table.all_values().any(|v| !v.is_finite()) {
                return Err(invalid(name, String::from("values must be finite")));
            }
        }
        for (name, table) in [
            ("dividend_weight", &self.dividend_weight),
            ("rate_weight", &self.rate_weight),
        ] {
            if let Some(v) = table.all_values().find(|v| !(*v > 0.0)) {
                return Err(invalid(name, format!("weights must be positive, found {v}")));
            }
        }
        if self.premium.values().iter().any(|v| !v.is_finite()) {
            return Err(invalid("premium", String::from("values must be finite")));
        }
        if self.jumps.dim() != d {
            return Err(Error::DimensionMismatch {
                what: "jump measure regimes",
                expected: d,
                got: self.jumps.dim(),
            });
        }
        if !self.jumps.above_minus_one() {
            return Err(Error::InvalidMarkLaw(String::from(
                "bank wealth jumps need 1 + z > 0 for every mark",
            )));
        }
        if self.claims.len() != d || self.claims.iter().any(|row| row.len() != d) {
            return Err(Error::DimensionMismatch {
                what: "claim matrix",
                expected: d,
                got: self.claims.len(),
            });
        }
        if self
            .claims
            .iter()
            .flatten()
            .any(|t| t.values().iter().any(|v| !v.is_finite()))
        {
            return Err(invalid("claims", String::from("values must be finite")));
        }
        if self.discount.len() != d {
            return Err(Error::DimensionMismatch {
                what: "discount",
                expected: d,
                got: self.discount.len(),
            });
        }
        if self.risk_aversion == 0.0 {
            return Err(Error::UnsupportedKappa);
        }
        if !(self.risk_aversion > 0.0 && self.risk_aversion.is_finite()) || self.risk_aversion == 1.0 {
            return Err(invalid(
                "risk_aversion",
                format!("must be positive and different from 1, got {}", self.risk_aversion),
            ));
        }
        let scalars = [
            ("cash_weight", self.cash_weight),
            ("cash_target", self.cash_target),
            ("log_target", self.log_target),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.discount.iter().any(|r| !r.is_finite()) {
            return Err(invalid("discount", String::from("values must be finite")));
        }
        if !(self.surplus > 0.0 && self.surplus.is_finite()) {
            return Err(invalid("surplus", format!("must be positive, got {}", self.surplus)));
        }
        if !(self.commission > 0.0 && self.commission < self.surplus) {
            return Err(invalid(
                "commission",
                format!("must lie in (0, surplus), got {}", self.commission),
            ));
        }
        if self.initial_state >= d {
            return Err(Error::InvalidState {
                index: self.initial_state,
                states: d,
            });
        }
        Ok(())
    }
}

/// Pieces of the bank's multiplier `lambda2 = D2 / (D1 + D3 - K2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierTerms {
    /// `E[exp(-r(alpha(T)))] ln c`
    pub d1: f64,
    /// `E[int h2 dt]`
    pub d2: f64,
    /// `E[int exp(-r(alpha(T))) (-bank_vol^2 / 2 + int (ln(1+z) - z) nu(dz)) dt]`
    pub d3: f64,
}

/// A validated model with its chain quantities precomputed on a grid.
#[derive(Debug, Clone)]
pub struct Bancassurance {
    params: BancassuranceParams,
    grid: TimeGrid,
    laws: Vec<Vec<f64>>,
    weights: CoupledValue,
}

impl Bancassurance {
    pub fn new(params: BancassuranceParams) -> Result<Self> {
        Self::with_resolution(params, DEFAULT_QUADRATURE_POINTS)
    }

    pub fn with_resolution(params: BancassuranceParams, points: usize) -> Result<Self> {
        params.validate()?;
        let grid = TimeGrid::uniform(params.horizon(), points)?;
        let laws = marginal_laws_on_grid(
            &params.generator,
            &point_mass(params.dim(), params.initial_state),
            &grid,
        )?;
        let terminal: Vec<f64> = params.discount.iter().map(|r| (-r).exp()).collect();
        let weights = solve_backward_coupled(&params.generator, |_, _| 0.0, &terminal, &grid)?;
        Ok(Self {
            params,
            grid,
            laws,
            weights,
        })
    }

    pub fn params(&self) -> &BancassuranceParams {
        &self.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `E[int_0^T f(t, alpha(t)) dt]`.
    pub fn chain_integral(&self, mut f: impl FnMut(f64, usize) -> f64) -> f64 {
        let samples: Vec<f64> = self
            .laws
            .iter()
            .enumerate()
            .map(|(k, pi)| {
                let t = self.grid.time(k);
                pi.iter().enumerate().map(|(i, p)| p * f(t, i)).sum()
            })
            .collect();
        simpson(&samples, self.grid.step())
    }

    /// `E[exp(-r(alpha(T))) | alpha(t) = i]`.
    pub fn discount_weights(&self) -> &CoupledValue {
        &self.weights
    }

    fn log_drift_correction(&self, t: f64, i: usize) -> f64 {
        let s = self.params.bank_vol.at(t, i);
        -0.5 * s * s + self.params.jumps.log_compensator(i)
    }

    pub fn multiplier_terms(&self) -> MultiplierTerms {
        let p = &self.params;
        let last = self.laws.last().expect("grid has nodes");
        let mean_discount: f64 = last.iter().zip(&p.discount).map(|(q, r)| q * (-r).exp()).sum();
        let w = &self.weights;
        let g = &self.grid;
        MultiplierTerms {
            d1: mean_discount * p.commission.ln(),
            d2: self.chain_integral(|t, i| p.rate_weight.at(t, i)),
            d3: self.chain_integral(|t, i| w.value(g.nearest(t), i) * self.log_drift_correction(t, i)),
        }
    }

    /// `lambda2 = D2 / (D1 + D3 - K2)`.
    pub fn lambda2(&self) -> Result<f64> {
        let m = self.multiplier_terms();
        let denominator = m.d1 + m.d3 - self.params.log_target;
        let scale = m.d1.abs().max(m.d3.abs()).max(self.params.log_target.abs()).max(1.0);
        if !(m.d2 > 0.0) || !(denominator > FEASIBILITY_TOL * scale) {
            return Err(Error::InfeasibleLambda2 { d2: m.d2, denominator });
        }
        Ok(m.d2 / denominator)
    }

    /// `u - c - K1 + E[int (premium - payment) dt]`, the expected dividend budget.
    pub fn dividend_budget(&self) -> f64 {
        let p = &self.params;
        p.surplus - p.commission - p.cash_target + self.chain_integral(|t, i| p.premium.at(t) - p.payment.at(t, i))
    }

    /// `lambda1 = budget^(-k1) E[int h1^(1/k1) dt]^k1`.
    pub fn lambda1(&self) -> Result<f64> {
        let p = &self.params;
        let k = p.risk_aversion;
        if k == 0.0 {
            return Err(Error::UnsupportedKappa);
        }
        let base = self.dividend_budget();
        let scale = (p.surplus - p.commission).abs().max(p.cash_target.abs()).max(1.0);
        if !(base > FEASIBILITY_TOL * scale) {
            return Err(Error::InfeasibleLambda1 { base });
        }
        let weight = self.chain_integral(|t, i| p.dividend_weight.at(t, i).powf(1.0 / k));
        Ok(base.powf(-k) * weight.powf(k))
    }

    pub fn optimal_dividend(&self, lambda1: f64, t: f64, i: usize) -> f64 {
        dividend_rule(&self.params.dividend_weight, self.params.risk_aversion, lambda1, t, i)
    }

    /// `A(t, i) = lambda2 E[exp(-r(alpha(T))) | alpha(t) = i]`.
    pub fn a_coefficient(&self, lambda2: f64) -> Result<CoupledValue> {
        let terminal: Vec<f64> = self.params.discount.iter().map(|r| lambda2 * (-r).exp()).collect();
        solve_backward_coupled(&self.params.generator, |_, _| 0.0, &terminal, &self.grid)
    }

    /// `u*(t, i) = -h2(t, i) / A(t, i)`.
    pub fn optimal_rate(&self, a: &CoupledValue, t: f64, i: usize) -> f64 {
        -self.params.rate_weight.at(t, i) / a.value_at(t, i)
    }

    /// Potential of the insurer's adjoint coefficient for a given bank rate.
    pub fn phi_potential(&self, rate: f64, t: f64, i: usize) -> f64 {
        let s = self.params.bank_vol.at(t, i);
        2.0 * rate + s * s + self.params.jumps.second_moment(i)
    }

    /// Solves `phi' + phi B + sum_j (phi_j - phi_i) mu_ij = 0`, `phi(T) = -2`,
    /// with `B = 2u* + bank_vol^2 + int z^2 nu(dz)`.
    pub fn phi_coefficient(&self, a: &CoupledValue) -> Result<CoupledValue> {
        let terminal = vec![-2.0; self.params.dim()];
        solve_backward_coupled(
            &self.params.generator,
            |t, i| self.phi_potential(self.optimal_rate(a, t, i), t, i),
            &terminal,
            &self.grid,
        )
    }

    /// Runs the closed-form pipeline: `lambda2`, `A`, `phi`, `lambda1`.
    pub fn equilibrium(&self) -> Result<Equilibrium> {
        let lambda2 = self.lambda2()?;
        let lambda1 = self.lambda1()?;
        self.equilibrium_with(lambda1, lambda2)
    }

    /// Controls and adjoint coefficients for given multipliers.
    pub fn equilibrium_with(&self, lambda1: f64, lambda2: f64) -> Result<Equilibrium> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("multiplier must be positive, got {v}")));
            }
        }
        let a = self.a_coefficient(lambda2)?;
        let phi = self.phi_coefficient(&a)?;
        Ok(Equilibrium {
            lambda1,
            lambda2,
            a: Arc::new(a),
            phi: Arc::new(phi),
            dividend_weight: self.params.dividend_weight.clone(),
            rate_weight: self.params.rate_weight.clone(),
            risk_aversion: self.params.risk_aversion,
        })
    }

    /// The controlled state equation; player 1 sets the dividend, player 2 the rate.
    pub fn system(&self) -> Result<JumpDiffusion> {
        let (coeffs, y0) = build_system(&self.params)?;
        JumpDiffusion::new(
            coeffs,
            vec![self.params.jumps.clone()],
            self.params.generator.clone(),
            y0,
            self.params.initial_state,
        )
    }

    /// `E[X1(T)]` under a dividend rule depending on `(t, regime)`.
    pub fn expected_terminal_cash(&self, dividend: impl Fn(f64, usize) -> f64) -> f64 {
        let p = &self.params;
        p.surplus - p.commission + self.chain_integral(|t, i| p.premium.at(t) - p.payment.at(t, i) - dividend(t, i))
    }

    /// `E[exp(-r(alpha(T))) ln X2(T)]` under a rate rule depending on `(t, regime)`.
    pub fn expected_discounted_log(&self, rate: impl Fn(f64, usize) -> f64) -> f64 {
        let w = &self.weights;
        let g = &self.grid;
        self.multiplier_terms().d1
            + self.chain_integral(|t, i| w.value(g.nearest(t), i) * (rate(t, i) + self.log_drift_correction(t, i)))
    }

    /// `[M1, M2]` with `M1 = X1 - K1` and `M2 = exp(-r(i)) ln X2 - K2`.
    pub fn constraint_functionals(&self) -> [TerminalFn; 2] {
        let k1 = self.params.cash_target;
        let k2 = self.params.log_target;
        let discount = self.params.discount.clone();
        [
            Arc::new(move |y: &[f64], _| y[0] - k1),
            Arc::new(move |y: &[f64], i| (-discount[i]).exp() * y[1].ln() - k2),
        ]
    }

    /// Unconstrained payoffs `[J1, J2]`. With `log_abs_rate` the bank's utility is
    /// evaluated at `ln |u|`; otherwise a nonpositive rate is a domain error.
    pub fn payoffs(&self, log_abs_rate: bool) -> [Payoff; 2] {
        let h1 = self.params.dividend_weight.clone();
        let h2 = self.params.rate_weight.clone();
        let k1 = self.params.risk_aversion;
        let k2 = self.params.cash_weight;
        let insurer = Payoff::new(
            Arc::new(move |p: &StatePoint<'_>| dividend_utility(h1.at(p.t, p.regime), k1, p.u1)),
            Arc::new(|y: &[f64], _| -y[1] * y[1]),
        );
        let bank = Payoff::new(
            Arc::new(move |p: &StatePoint<'_>| rate_utility(h2.at(p.t, p.regime), p.u2, log_abs_rate)),
            Arc::new(move |y: &[f64], _| k2 * y[0]),
        );
        [insurer, bank]
    }

    /// `[J1, J2]` at the equilibrium from chain quadratures:
    /// `E[X2(T)^2] = -c^2 phi(0, i0) / 2` and `E[X1(T)]` from the drift.
    pub fn deterministic_payoffs(&self, eq: &Equilibrium, log_abs_rate: bool) -> Result<[f64; 2]> {
        let p = &self.params;
        let mut err = None;
        let utility1 = self.chain_integral(|t, i| {
            dividend_utility(p.dividend_weight.at(t, i), p.risk_aversion, eq.dividend(t, i)).unwrap_or_else(|e| {
                err = Some(e);
                0.0
            })
        });
        let utility2 = self.chain_integral(|t, i| {
            rate_utility(p.rate_weight.at(t, i), eq.rate(t, i), log_abs_rate).unwrap_or_else(|e| {
                err = Some(e);
                0.0
            })
        });
        if let Some(e) = err {
            return Err(e);
        }
        let second_moment = -p.commission * p.commission * eq.phi.value(0, p.initial_state) / 2.0;
        let cash = self.expected_terminal_cash(|t, i| eq.dividend(t, i));
        Ok([utility1 - second_moment, utility2 + p.cash_weight * cash])
    }

    /// Adjoint values of both players at `(t, regime, x)` from the ansatz
    /// `p1 = (lambda1, phi X2)`, `p2 = (k2, A / X2)`.
    pub fn adjoint_at(&self, eq: &Equilibrium, t: f64, regime: usize, x: [f64; 2]) -> Result<AdjointFrame> {
        let x2 = x[1];
        if !(x2 > 0.0) {
            return Err(Error::NonpositiveX2 { t, value: x2 });
        }
        let d = self.params.dim();
        let s2 = self.params.bank_vol.at(t, regime);
        let phi_i = eq.phi.value_at(t, regime);
        let a_i = eq.a.value_at(t, regime);
        let mut w1 = vec![0.0; 2 * d];
        let mut w2 = vec![0.0; 2 * d];
        for j in 0..d {
            w1[d + j] = (eq.phi.value_at(t, j) - phi_i) * x2;
            w2[d + j] = (eq.a.value_at(t, j) - a_i) / x2;
        }
        Ok(AdjointFrame {
            t,
            regime,
            x,
            insurer: PlayerAdjoint {
                p: [eq.lambda1, phi_i * x2],
                q: [0.0, 0.0, 0.0, phi_i * x2 * s2],
                r_scale: [0.0, phi_i * x2],
                kernel: JumpKernel::Linear,
                w: w1,
            },
            bank: PlayerAdjoint {
                p: [self.params.cash_weight, a_i / x2],
                q: [0.0, 0.0, 0.0, -a_i * s2 / x2],
                r_scale: [0.0, a_i / x2],
                kernel: JumpKernel::InverseMinusOne,
                w: w2,
            },
        })
    }

    /// Frames at every grid node of a simulated path.
    pub fn adjoint_frame(&self, eq: &Equilibrium, path: &SimPath, grid: &TimeGrid) -> Result<Vec<AdjointFrame>> {
        (0..grid.len())
            .map(|k| {
                let t = grid.time(k);
                let y = path.state(k);
                self.adjoint_at(eq, t, path.chain.state_at(t), [y[0], y[1]])
            })
            .collect()
    }

    /// Drifts of `p2` for both players prescribed by their adjoint equations:
    /// `-(u p + bank_vol q22 + int z r2(z) nu(dz))`.
    pub fn adjoint_drifts(&self, frame: &AdjointFrame, rate: f64) -> [f64; 2] {
        let i = frame.regime;
        let s2 = self.params.bank_vol.at(frame.t, i);
        let jumps = &self.params.jumps;
        let ins = &frame.insurer;
        let bank = &frame.bank;
        [
            -(rate * ins.p[1] + s2 * ins.q[3] + ins.r_scale[1] * jumps.second_moment(i)),
            -(rate * bank.p[1] + s2 * bank.q[3] - bank.r_scale[1] * jumps.inverse_compensator(i)),
        ]
    }

    /// [`Bancassurance::adjoint_drifts`] without building a frame.
    pub fn adjoint_drift_at(&self, eq: &Equilibrium, t: f64, regime: usize, x2: f64, rate: f64) -> Result<[f64; 2]> {
        if !(x2 > 0.0) {
            return Err(Error::NonpositiveX2 { t, value: x2 });
        }
        let s2 = self.params.bank_vol.at(t, regime);
        let jumps = &self.params.jumps;
        let ins = eq.phi.value_at(t, regime) * x2;
        let bank = eq.a.value_at(t, regime) / x2;
        Ok([
            -ins * (rate + s2 * s2 + jumps.second_moment(regime)),
            -bank * (rate - s2 * s2 - jumps.inverse_compensator(regime)),
        ])
    }

    /// Closed-form Hamiltonians `H1` (player 1) and `H2` (player 2).
    #[allow(clippy::too_many_arguments)]
    pub fn hamiltonian(
        &self,
        player: usize,
        t: f64,
        regime: usize,
        x: [f64; 2],
        dividend: f64,
        rate: f64,
        adj: &PlayerAdjoint,
        log_abs_rate: bool,
    ) -> Result<f64> {
        let p = &self.params;
        let i = regime;
        let running = if player == 1 {
            dividend_utility(p.dividend_weight.at(t, i), p.risk_aversion, dividend)?
        } else {
            rate_utility(p.rate_weight.at(t, i), rate, log_abs_rate)?
        };
        let jump_term = match adj.kernel {
            JumpKernel::Linear => adj.r_scale[1] * p.jumps.second_moment(i),
            JumpKernel::InverseMinusOne => -adj.r_scale[1] * p.jumps.inverse_compensator(i),
        };
        let d = p.dim();
        let chain_term: f64 = (0..d)
            .filter(|j| *j != i)
            .map(|j| p.claim(t, i, j) * adj.w[j] * p.generator.rate(t, i, j))
            .sum();
        Ok(
            running + (p.premium.at(t) - p.payment.at(t, i) - dividend) * adj.p[0] + x[1] * rate * adj.p[1]
                - p.claim_vol.at(t, i) * adj.q[0]
                + x[1] * p.bank_vol.at(t, i) * adj.q[3]
                + x[1] * jump_term
                - chain_term,
        )
    }
}

/// `(lambda1 / h1)^(-1/k1)`.
pub fn dividend_rule(h1: &StateTable, k1: f64, lambda1: f64, t: f64, i: usize) -> f64 {
    (lambda1 / h1.at(t, i)).powf(-1.0 / k1)
}

/// `h1 delta^(1-k1) / (1-k1)`; needs `delta > 0`.
pub fn dividend_utility(h1: f64, k1: f64, dividend: f64) -> Result<f64> {
    if !(dividend > 0.0) {
        return Err(Error::DomainError(format!("dividend rate {dividend} must be positive")));
    }
    Ok(h1 * dividend.powf(1.0 - k1) / (1.0 - k1))
}

/// `h2 ln u`, or `h2 ln |u|` when `log_abs_rate` is set.
pub fn rate_utility(h2: f64, rate: f64, log_abs_rate: bool) -> Result<f64> {
    let arg = if log_abs_rate { rate.abs() } else { rate };
    if !(arg > 0.0) {
        return Err(Error::DomainError(format!(
            "ln of rate {rate} is undefined (set log_abs_rate to evaluate ln |u|)"
        )));
    }
    Ok(h2 * arg.ln())
}

/// Wires the state equation: drift `(premium - payment - delta, X2 u)`,
/// diffusion `diag(-claim_vol, X2 bank_vol)`, jump `(0, X2 z)`, regime jump
/// `(-claim_ij, 0)`; `X2` is multiplicative.
pub fn build_system(params: &BancassuranceParams) -> Result<(CoefficientSet, Vec<f64>)> {
    params.validate()?;
    let d = params.dim();
    let p = params.clone();
    let drift = {
        let p = p.clone();
        Arc::new(move |s: &StatePoint<'_>, out: &mut [f64]| {
            out[0] = p.premium.at(s.t) - p.payment.at(s.t, s.regime) - s.u1;
            out[1] = s.y[1] * s.u2;
        })
    };
    let diffusion = {
        let p = p.clone();
        Arc::new(move |s: &StatePoint<'_>, out: &mut [f64]| {
            out[0] = -p.claim_vol.at(s.t, s.regime);
            out[1] = 0.0;
            out[2] = 0.0;
            out[3] = s.y[1] * p.bank_vol.at(s.t, s.regime);
        })
    };
    let compensator = Arc::new(
        |s: &StatePoint<'_>, _l: usize, levy: &LevyMeasureSpec, out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = s.y[1] * levy.first_moment(s.regime);
        },
    );
    let regime_jump = Arc::new(move |s: &StatePoint<'_>, out: &mut [f64]| {
        for j in 0..d {
            out[j] = -p.claim(s.t, s.regime, j);
            out[d + j] = 0.0;
        }
    });
    let coeffs = CoefficientSet::new(2, 2, drift, diffusion)
        .with_jumps(Arc::new(|s: &StatePoint<'_>, _l, z, out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = s.y[1] * z;
        }))
        .with_jump_compensator(compensator)
        .with_regime_jumps(regime_jump)
        .with_log_components(vec![false, true]);
    Ok((coeffs, params.initial_state().to_vec()))
}

/// Closed-form equilibrium: multipliers and the coefficients `A` and `phi`.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub lambda1: f64,
    pub lambda2: f64,
    pub a: Arc<CoupledValue>,
    pub phi: Arc<CoupledValue>,
    dividend_weight: StateTable,
    rate_weight: StateTable,
    risk_aversion: f64,
}

impl Equilibrium {
    /// `delta*(t, i)`.
    pub fn dividend(&self, t: f64, i: usize) -> f64 {
        dividend_rule(&self.dividend_weight, self.risk_aversion, self.lambda1, t, i)
    }

    /// `u*(t, i) = -h2 / A`.
    pub fn rate(&self, t: f64, i: usize) -> f64 {
        -self.rate_weight.at(t, i) / self.a.value_at(t, i)
    }

    /// Same coefficients with another dividend multiplier; `A` and `phi` do not depend on it.
    pub fn with_lambda1(&self, lambda1: f64) -> Self {
        Self {
            lambda1,
            ..self.clone()
        }
    }

    /// Equilibrium feedback controls (Markov in the regime).
    pub fn controls(&self) -> ControlPair {
        let (e1, e2) = (self.clone(), self.clone());
        ControlPair::markov(move |t, i| e1.dividend(t, i), move |t, i| e2.rate(t, i))
    }
}

/// Form of the jump component `r_2(z)` of an adjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKernel {
    /// `r(z) = scale * z`
    Linear,
    /// `r(z) = scale * ((1 + z)^-1 - 1)`
    InverseMinusOne,
}

/// Adjoint values `(p, q, r, w)` of one player.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerAdjoint {
    pub p: [f64; 2],
    /// `[q11, q12, q21, q22]`
    pub q: [f64; 4],
    /// `r_n(z) = r_scale[n] * kernel(z)`
    pub r_scale: [f64; 2],
    pub kernel: JumpKernel,
    /// Row-major `2 x D`: `w[n * D + j]`.
    pub w: Vec<f64>,
}

impl PlayerAdjoint {
    pub fn r(&self, n: usize, z: f64) -> f64 {
        let k = match self.kernel {
            JumpKernel::Linear => z,
            JumpKernel::InverseMinusOne => 1.0 / (1.0 + z) - 1.0,
        };
        self.r_scale[n] * k
    }
}

/// Adjoints of both players at one time on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointFrame {
    pub t: f64,
    pub regime: usize,
    pub x: [f64; 2],
    pub insurer: PlayerAdjoint,
    pub bank: PlayerAdjoint,
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::jumpdiff::{evaluate_performance, simulate_paths};
    use crate::kolmogorov::transition_matrix;
    use crate::levy::{MarkLaw, RegimeJumps};
    use crate::runner::Sequential;

    /// One state, `premium - payment = 0.2`, `u - c = 1`, `c = e`.
    pub(crate) fn collapsed(cash_target: f64, log_target: f64) -> BancassuranceParams {
        let e = core::f64::consts::E;
        BancassuranceParams {
            premium: TimeTable::constant(1.2),
            payment: StateTable::constants(&[1.0]),
            claim_vol: StateTable::constants(&[0.0]),
            bank_vol: StateTable::constants(&[0.0]),
            jumps: LevyMeasureSpec::none(1),
            claims: vec![vec![TimeTable::constant(0.0)]],
            dividend_weight: StateTable::constants(&[1.0]),
            rate_weight: StateTable::constants(&[1.0]),
            risk_aversion: 2.0,
            cash_weight: 0.5,
            discount: vec![0.0],
            cash_target,
            log_target,
            surplus: 1.0 + e,
            commission: e,
            generator: ChainGenerator::constant(&[vec![0.0]], 1.0).unwrap(),
            initial_state: 0,
        }
    }

    pub(crate) fn two_state() -> BancassuranceParams {
        BancassuranceParams {
            premium: TimeTable::constant(1.5),
            payment: StateTable::constants(&[1.2, 1.0]),
            claim_vol: StateTable::constants(&[0.3, 0.4]),
            bank_vol: StateTable::constants(&[0.2, 0.3]),
            jumps: LevyMeasureSpec::new(vec![
                RegimeJumps {
                    intensity: 0.5,
                    law: MarkLaw::Uniform { low: -0.2, high: 0.1 },
                },
                RegimeJumps {
                    intensity: 1.0,
                    law: MarkLaw::Uniform { low: -0.2, high: 0.1 },
                },
            ])
            .unwrap(),
            claims: vec![
                vec![TimeTable::constant(0.0), TimeTable::constant(0.2)],
                vec![TimeTable::constant(0.1), TimeTable::constant(0.0)],
            ],
            dividend_weight: StateTable::constants(&[1.0, 2.0]),
            rate_weight: StateTable::constants(&[1.0, 0.5]),
            risk_aversion: 2.0,
            cash_weight: 0.5,
            discount: vec![0.0, 0.1],
            cash_target: 1.2,
            log_target: 0.0,
            surplus: 3.0,
            commission: 2.0,
            generator: ChainGenerator::constant(&[vec![-1.0, 1.0], vec![1.0, -1.0]], 1.0).unwrap(),
            initial_state: 0,
        }
    }

    #[test]
    fn collapsed_multipliers() {
        let m = Bancassurance::new(collapsed(1.0, 0.5)).unwrap();
        assert!((m.lambda1().unwrap() - 25.0).abs() < 1e-10);
        assert!((m.lambda2().unwrap() - 2.0).abs() < 1e-10);
        assert!((m.optimal_dividend(25.0, 0.3, 0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn infeasible_multipliers() {
        let m = Bancassurance::new(collapsed(1.2, 1.0)).unwrap();
        assert!(matches!(m.lambda1(), Err(Error::InfeasibleLambda1 { .. })));
        assert!(matches!(m.lambda2(), Err(Error::InfeasibleLambda2 { .. })));
    }

    #[test]
    fn zero_risk_aversion_is_rejected() {
        let mut p = collapsed(1.0, 0.5);
        p.risk_aversion = 0.0;
        assert!(matches!(Bancassurance::new(p), Err(Error::UnsupportedKappa)));
    }

    #[test]
    fn validation_errors() {
        let mut p = two_state();
        p.rate_weight = StateTable::constants(&[1.0, 0.0]);
        assert!(matches!(
            p.validate(),
            Err(Error::InvalidParameter {
                name: "rate_weight",
                ..
            })
        ));
        let mut p = two_state();
        p.risk_aversion = 1.0;
        assert!(p.validate().is_err());
        let mut p = two_state();
        p.commission = 3.0;
        assert!(p.validate().is_err());
        let mut p = two_state();
        p.jumps = LevyMeasureSpec::uniform_across(
            2,
            RegimeJumps {
                intensity: 1.0,
                law: MarkLaw::Uniform { low: -1.5, high: 0.0 },
            },
        )
        .unwrap();
        assert!(matches!(p.validate(), Err(Error::InvalidMarkLaw(_))));
    }

    #[test]
    fn initial_state_is_surplus_minus_commission() {
        let mut p = collapsed(1.0, 0.5);
        p.surplus = 2.0;
        p.commission = 1.0;
        assert_eq!(p.initial_state(), [1.0, 1.0]);
    }

    #[test]
    fn optimal_rate_examples() {
        let m = Bancassurance::new(collapsed(1.0, 0.5)).unwrap();
        let a = m.a_coefficient(2.0).unwrap();
        for k in 0..a.grid().len() {
            assert!((a.value(k, 0) - 2.0).abs() < 1e-12);
        }
        assert!((m.optimal_rate(&a, 0.4, 0) + 0.5).abs() < 1e-12);
        let mut p = collapsed(1.0, 0.5);
        p.rate_weight = StateTable::constants(&[3.0]);
        let m3 = Bancassurance::new(p).unwrap();
        assert!((m3.optimal_rate(&a, 0.4, 0) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn a_coefficient_matches_transition_matrix() {
        let m = Bancassurance::new(two_state()).unwrap();
        let a = m.a_coefficient(2.0).unwrap();
        let gen = &m.params().generator;
        for k in (0..a.grid().len()).step_by(64) {
            let t = a.grid().time(k);
            let p = transition_matrix(gen, t, 1.0).unwrap();
            for i in 0..2 {
                let exact = 2.0 * (p[(i, 0)] + p[(i, 1)] * (-0.1f64).exp());
                assert!((a.value(k, i) - exact).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn frozen_chain_keeps_terminal_discount() {
        let mut p = two_state();
        p.generator = ChainGenerator::frozen(2, 1.0).unwrap();
        let m = Bancassurance::new(p).unwrap();
        let a = m.a_coefficient(2.0).unwrap();
        for k in 0..a.grid().len() {
            assert!((a.value(k, 1) - 2.0 * (-0.1f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_scalar_closed_form() {
        // u* = -0.5, no volatility or jumps: B = -1, phi(0) = -2/e
        let m = Bancassurance::new(collapsed(1.0, 0.5)).unwrap();
        let a = m.a_coefficient(2.0).unwrap();
        let phi = m.phi_coefficient(&a).unwrap();
        assert!((phi.value(0, 0) + 2.0 / core::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn phi_satisfies_its_ode() {
        let m = Bancassurance::new(two_state()).unwrap();
        let eq = m.equilibrium().unwrap();
        let phi = &eq.phi;
        let g = phi.grid();
        let h = g.step();
        for k in 1..g.len() - 1 {
            let t = g.time(k);
            for i in 0..2 {
                let deriv = (phi.value(k + 1, i) - phi.value(k - 1, i)) / (2.0 * h);
                let coupling: f64 = (0..2)
                    .map(|j| (phi.value(k, j) - phi.value(k, i)) * m.params().generator.rate(t, i, j))
                    .sum();
                let res = deriv + phi.value(k, i) * m.phi_potential(eq.rate(t, i), t, i) + coupling;
                assert!(res.abs() < 1e-6, "residual {res} at t = {t}");
            }
        }
    }

    #[test]
    fn equilibrium_controls_have_expected_signs() {
        let m = Bancassurance::new(two_state()).unwrap();
        let eq = m.equilibrium().unwrap();
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            for i in 0..2 {
                assert!(eq.dividend(t, i) > 0.0);
                assert!(eq.rate(t, i) < 0.0);
                assert!(eq.a.value_at(t, i) > 0.0);
            }
        }
    }

    #[test]
    fn dividend_budget_is_exhausted() {
        let m = Bancassurance::new(collapsed(1.0, 0.5)).unwrap();
        let l1 = m.lambda1().unwrap();
        let cash = m.expected_terminal_cash(|t, i| m.optimal_dividend(l1, t, i));
        assert!((cash - 1.0).abs() < 1e-12);
        let m = Bancassurance::new(two_state()).unwrap();
        let eq = m.equilibrium().unwrap();
        let cash = m.expected_terminal_cash(|t, i| eq.dividend(t, i));
        assert!((cash - m.params().cash_target).abs() < 1e-10);
        let log = m.expected_discounted_log(|t, i| eq.rate(t, i));
        assert!((log - m.params().log_target).abs() < 1e-8, "{log}");
    }

    #[test]
    fn closed_form_hamiltonian_first_order_conditions() {
        let m = Bancassurance::new(two_state()).unwrap();
        let eq = m.equilibrium().unwrap();
        let x = [0.7, 1.3];
        for i in 0..2 {
            let t = 0.37;
            let f = m.adjoint_at(&eq, t, i, x).unwrap();
            let (d, u) = (eq.dividend(t, i), eq.rate(t, i));
            let e = 1e-5;
            let h1 = |dd| m.hamiltonian(1, t, i, x, dd, u, &f.insurer, true).unwrap();
            let h2 = |uu| m.hamiltonian(2, t, i, x, d, uu, &f.bank, true).unwrap();
            let g1 = (h1(d * (1.0 + e)) - h1(d * (1.0 - e))) / (2.0 * d * e);
            let g2 = (h2(u * (1.0 + e)) - h2(u * (1.0 - e))) / (2.0 * u * e);
            assert!(g1.abs() < 1e-6, "{g1}");
            assert!(g2.abs() < 1e-6, "{g2}");
        }
    }

    #[test]
    fn hamiltonian_collapses_without_adjoints() {
        let m = Bancassurance::new(collapsed(1.0, 0.5)).unwrap();
        let zero = PlayerAdjoint {
            p: [0.0; 2],
            q: [0.0; 4],
            r_scale: [0.0; 2],
            kernel: JumpKernel::Linear,
            w: vec![0.0; 2],
        };
        let h = m.hamiltonian(1, 0.5, 0, [1.0, 1.0], 0.5, 0.1, &zero, false).unwrap();
        assert!((h + 2.0).abs() < 1e-12);
        assert!(matches!(
            m.hamiltonian(1, 0.5, 0, [1.0, 1.0], 0.0, 0.1, &zero, false),
            Err(Error::DomainError(_))
        ));
        assert!(matches!(
            m.hamiltonian(2, 0.5, 0, [1.0, 1.0], 0.5, -0.1, &zero, false),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn adjoint_terminal_identities() {
        let m = Bancassurance::new(two_state()).unwrap();
        let eq = m.equilibrium().unwrap();
        let model = m.system().unwrap();
        let grid = TimeGrid::uniform(1.0, 101).unwrap();
        let ens = simulate_paths(&model, &eq.controls(), &grid, 50, 11, &Sequential).unwrap();
        for path in &ens.paths {
            let frames = m.adjoint_frame(&eq, path, &grid).unwrap();
            let last = frames.last().unwrap();
            assert_eq!(last.insurer.p[1] + 2.0 * last.x[1], 0.0);
            let lhs = last.bank.p[1] * last.x[1];
            let rhs = eq.lambda2 * (-m.params().discount[last.regime]).exp();
            assert!(((lhs - rhs) / rhs).abs() < 1e-14);
            assert!(frames.iter().all(|f| f.insurer.p[0] == eq.lambda1));
        }
    }

    #[test]
    fn frozen_wealth_without_dividend_or_noise() {
        let mut p = two_state();
        p.premium = TimeTable::constant(1.0);
        p.payment = StateTable::constants(&[1.0, 1.0]);
        p.claim_vol = StateTable::constants(&[0.0, 0.0]);
        p.claims = vec![vec![TimeTable::constant(0.0); 2]; 2];
        let m = Bancassurance::new(p).unwrap();
        let model = m.system().unwrap();
        let grid = TimeGrid::uniform(1.0, 65).unwrap();
        let ens = simulate_paths(&model, &ControlPair::constant(0.0, 0.0), &grid, 30, 2, &Sequential).unwrap();
        for path in &ens.paths {
            for k in 0..grid.len() {
                assert_eq!(path.state(k)[0], 1.0);
            }
        }
    }

    #[test]
    fn bank_wealth_growth_matches_lognormal_mean() {
        let mut p = two_state();
        p.jumps = LevyMeasureSpec::none(2);
        p.bank_vol = StateTable::constants(&[0.2, 0.2]);
        let m = Bancassurance::new(p).unwrap();
        let model = m.system().unwrap();
        let grid = TimeGrid::uniform(1.0, 65).unwrap();
        let ens = simulate_paths(&model, &ControlPair::constant(0.1, 0.1), &grid, 4000, 8, &Sequential).unwrap();
        let x2: Vec<f64> = ens.paths.iter().map(|p| p.terminal()[1]).collect();
        let est = crate::numeric::Estimate::from_samples(&x2);
        assert!(est.within(2.0 * 0.1f64.exp(), 3.0), "{est:?}");
    }

    #[test]
    fn deterministic_payoffs_match_simulation() {
        let m = Bancassurance::new(two_state()).unwrap();
        let eq = m.equilibrium().unwrap();
        let model = m.system().unwrap();
        let grid = TimeGrid::uniform(1.0, 129).unwrap();
        let controls = eq.controls();
        let ens = simulate_paths(&model, &controls, &grid, 4000, 21, &Sequential).unwrap();
        let exact = m.deterministic_payoffs(&eq, true).unwrap();
        let pays = m.payoffs(true);
        for k in 0..2 {
            let est = evaluate_performance(&ens, &pays[k], &controls).unwrap();
            assert!(est.within(exact[k], 3.5), "player {}: {est:?} vs {}", k + 1, exact[k]);
        }
        assert!(matches!(
            m.deterministic_payoffs(&eq, false),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn time_tables() {
        let t = TimeTable::piecewise(&[(0.0, 1.0), (0.5, 2.0)]).unwrap();
        assert_eq!(t.at(0.0), 1.0);
        assert_eq!(t.at(0.49), 1.0);
        assert_eq!(t.at(0.5), 2.0);
        assert_eq!(t.at(1.0), 2.0);
        assert!(TimeTable::piecewise(&[(0.1, 1.0)]).is_err());
        assert!(TimeTable::piecewise(&[(0.0, 1.0), (0.0, 2.0)]).is_err());
    }
}
