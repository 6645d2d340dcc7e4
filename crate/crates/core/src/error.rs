use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("generator has no states")]
    EmptyGenerator,
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("negative off-diagonal rate mu[{i}][{j}] = {value} at t = {t}")]
    NegativeOffDiagonal { t: f64, i: usize, j: usize, value: f64 },
    #[error("row {row} of the generator sums to {sum} at t = {t}")]
    RowSumViolation { t: f64, row: usize, sum: f64 },
    #[error("no finite dominating rate for the time-inhomogeneous generator")]
    DominatingRateNotFound,
    #[error("state index {index} out of range for {states} states")]
    InvalidState { index: usize, states: usize },
    #[error("grid step {step} exceeds holding-time resolution {resolution}")]
    GridTooCoarse { step: f64, resolution: f64 },
    #[error("time order violated: t = {t} < s = {s}")]
    TimeOrderViolation { s: f64, t: f64 },
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("backward solution left the finite range at t = {t}")]
    NonFiniteBlowup { t: f64 },
    #[error("step too large: {0}")]
    StepTooLarge(String),
    #[error("non-finite state on path {path} at t = {t}")]
    NonFiniteState { path: usize, t: f64 },
    #[error("non-finite payoff on path {path}")]
    NonFinitePayoff { path: usize },
    #[error("invalid mark law: {0}")]
    InvalidMarkLaw(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("lambda1 infeasible: base u - c - K1 + E[int(p - a)] = {base} is not positive")]
    InfeasibleLambda1 { base: f64 },
    #[error("lambda2 infeasible: D2 = {d2}, D1 + D3 - K2 = {denominator}")]
    InfeasibleLambda2 { d2: f64, denominator: f64 },
    #[error("kappa1 = 0 is not supported (dividend formula degenerates)")]
    UnsupportedKappa,
    #[error("X2 is not positive ({value}) at t = {t}")]
    NonpositiveX2 { t: f64, value: f64 },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("deterministic backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("residual has no sign change on [{lo}, {hi}] ({r_lo}, {r_hi})")]
    NoSignChange { lo: f64, hi: f64, r_lo: f64, r_hi: f64 },
    #[error("root finding did not converge in {0} iterations")]
    MaxIterations(usize),
    #[error("control {player} produced an inadmissible value {value} at t = {t}")]
    InadmissibleControl { player: usize, t: f64, value: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
