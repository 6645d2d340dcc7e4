//! Run configuration: a strict JSON document with `model`, `simulation`,
//! `verification` and `output` sections.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use jumpgame_core::bancassurance::{BancassuranceParams, StateTable, TimeTable};
use jumpgame_core::chain::{validate_generator, ChainGenerator, RateSchedule};
use jumpgame_core::levy::{LevyMeasureSpec, MarkLaw, RegimeJumps};
use jumpgame_core::linalg::Matrix;

use crate::error::AppError;

pub const MIN_GRID_POINTS: usize = 64;
pub const MIN_PATHS: usize = 100;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A number (constant in time) or `[[start, value], ...]` pieces starting at 0.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TableSpec {
    Constant(f64),
    Pieces(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum GeneratorSpec {
    Constant(Vec<Vec<f64>>),
    Piecewise(Vec<GeneratorPiece>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorPiece {
    pub start: f64,
    pub rates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum MarkLawSpec {
    TwoPoint { low: f64, high: f64, p_high: f64 },
    Uniform { low: f64, high: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub intensity: f64,
    pub law: MarkLawSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub horizon: f64,
    pub generator: GeneratorSpec,
    pub initial_state: usize,
    pub premium: TableSpec,
    pub payment: Vec<TableSpec>,
    pub claim_vol: Vec<TableSpec>,
    pub bank_vol: Vec<TableSpec>,
    /// One entry per regime.
    pub jumps: Vec<JumpSpec>,
    /// `claims[i][j]` paid on a switch `i -> j`; the diagonal is ignored.
    pub claims: Vec<Vec<TableSpec>>,
    pub dividend_weight: Vec<TableSpec>,
    pub rate_weight: Vec<TableSpec>,
    pub risk_aversion: f64,
    pub cash_weight: f64,
    pub discount: Vec<f64>,
    pub cash_target: f64,
    pub log_target: f64,
    pub surplus: f64,
    pub commission: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub grid_points: usize,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerificationConfig {
    pub deviation_scalings: Vec<f64>,
    pub checkpoints: Vec<f64>,
    pub threshold: f64,
    pub first_order_samples: usize,
    pub first_order_tol: f64,
    pub multiplier_tol: f64,
    pub log_abs_rate: bool,
    /// Replaces the candidate dividend by this multiple of the closed form.
    pub candidate_dividend_scale: Option<f64>,
    /// Replaces the candidate rate by this multiple of the closed form.
    pub candidate_rate_scale: Option<f64>,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            deviation_scalings: vec![0.5, 0.8, 1.25, 2.0],
            checkpoints: vec![0.2, 0.4, 0.6, 0.8],
            threshold: 3.0,
            first_order_samples: 100,
            first_order_tol: 1e-6,
            multiplier_tol: 1e-10,
            log_abs_rate: true,
            candidate_dividend_scale: None,
            candidate_rate_scale: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: String::from("out"),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// A parsed configuration with the hash of its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        Self::from_str(&text).map_err(|e| match e {
            AppError::Config(m) => AppError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, AppError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            AppError::Config(format!("{path}: {inner}"))
        })?;
        config.check()?;
        Ok(Self {
            config,
            hash: sha256_hex(text.as_bytes()),
        })
    }
}

fn table(spec: &TableSpec, field: &str) -> Result<TimeTable, AppError> {
    match spec {
        TableSpec::Constant(v) => Ok(TimeTable::constant(*v)),
        TableSpec::Pieces(p) => {
            let pieces: Vec<(f64, f64)> = p.iter().map(|[s, v]| (*s, *v)).collect();
            TimeTable::piecewise(&pieces).map_err(|e| AppError::Config(format!("model.{field}: {e}")))
        }
    }
}

fn state_table(specs: &[TableSpec], field: &str) -> Result<StateTable, AppError> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| table(s, &format!("{field}[{i}]")))
        .collect::<Result<Vec<_>, _>>()
        .map(StateTable)
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<Matrix, AppError> {
    Matrix::from_rows(rows).ok_or_else(|| AppError::Config(format!("model.{field}: rates must be a square matrix")))
}

impl RunConfig {
    fn check(&self) -> Result<(), AppError> {
        if self.simulation.grid_points < MIN_GRID_POINTS {
            return Err(AppError::Config(format!(
                "simulation.grid_points: {} is below the minimum {MIN_GRID_POINTS}",
                self.simulation.grid_points
            )));
        }
        if self.simulation.n_paths < MIN_PATHS {
            return Err(AppError::Config(format!(
                "simulation.n_paths: {} is below the minimum {MIN_PATHS}",
                self.simulation.n_paths
            )));
        }
        let v = &self.verification;
        if !(v.threshold > 0.0) {
            return Err(AppError::Config(String::from(
                "verification.threshold: must be positive",
            )));
        }
        if let Some(t) = v.checkpoints.iter().find(|t| !(**t > 0.0 && **t <= self.model.horizon)) {
            return Err(AppError::Config(format!(
                "verification.checkpoints: {t} is outside (0, horizon]"
            )));
        }
        if let Some(s) = v.deviation_scalings.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(AppError::Config(format!(
                "verification.deviation_scalings: {s} must be positive"
            )));
        }
        Ok(())
    }

    /// Overrides from the command line.
    pub fn apply_overrides(&mut self, seed: Option<u64>, paths: Option<usize>) -> Result<(), AppError> {
        if let Some(s) = seed {
            self.simulation.seed = s;
        }
        if let Some(n) = paths {
            self.simulation.n_paths = n;
        }
        self.check()
    }

    pub fn generator(&self) -> Result<ChainGenerator, AppError> {
        let m = &self.model;
        let schedule = match &m.generator {
            GeneratorSpec::Constant(rows) => RateSchedule::Constant(matrix(rows, "generator.constant")?),
            GeneratorSpec::Piecewise(pieces) => RateSchedule::Piecewise(
                pieces
                    .iter()
                    .enumerate()
                    .map(|(k, p)| Ok((p.start, matrix(&p.rates, &format!("generator.piecewise[{k}]"))?)))
                    .collect::<Result<_, AppError>>()?,
            ),
        };
        validate_generator(schedule, m.horizon).map_err(|e| AppError::Config(format!("model.generator: {e}")))
    }

    pub fn params(&self) -> Result<BancassuranceParams, AppError> {
        let m = &self.model;
        let generator = self.generator()?;
        let regimes = m
            .jumps
            .iter()
            .map(|j| RegimeJumps {
                intensity: j.intensity,
                law: match j.law {
                    MarkLawSpec::TwoPoint { low, high, p_high } => MarkLaw::TwoPoint { low, high, p_high },
                    MarkLawSpec::Uniform { low, high } => MarkLaw::Uniform { low, high },
                    MarkLawSpec::LogNormal { mu, sigma } => MarkLaw::LogNormal { mu, sigma },
                },
            })
            .collect();
        let jumps = LevyMeasureSpec::new(regimes).map_err(|e| AppError::Config(format!("model.jumps: {e}")))?;
        let claims = m
            .claims
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, s)| table(s, &format!("claims[{i}][{j}]")))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let params = BancassuranceParams {
            premium: table(&m.premium, "premium")?,
            payment: state_table(&m.payment, "payment")?,
            claim_vol: state_table(&m.claim_vol, "claim_vol")?,
            bank_vol: state_table(&m.bank_vol, "bank_vol")?,
            jumps,
            claims,
            dividend_weight: state_table(&m.dividend_weight, "dividend_weight")?,
            rate_weight: state_table(&m.rate_weight, "rate_weight")?,
            risk_aversion: m.risk_aversion,
            cash_weight: m.cash_weight,
            discount: m.discount.clone(),
            cash_target: m.cash_target,
            log_target: m.log_target,
            surplus: m.surplus,
            commission: m.commission,
            generator,
            initial_state: m.initial_state,
        };
        params.validate().map_err(|e| AppError::Config(format!("model: {e}")))?;
        Ok(params)
    }
}
