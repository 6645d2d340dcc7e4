//! `solve`, `simulate` and `verify`.

use std::path::Path;

use serde_json::{json, Value};

use jumpgame_core::bancassurance::{Bancassurance, Equilibrium};
use jumpgame_core::grid::TimeGrid;
use jumpgame_core::jumpdiff::{path_payoff, simulate_paths, ControlPair, PathEnsemble};
use jumpgame_core::lagrange::{
    bancassurance_constraints, bancassurance_multipliers, terminal_estimate, Backend, BisectionSettings,
    ExpectationOracle, MultiplierSolution,
};
use jumpgame_core::numeric::Estimate;
use jumpgame_core::runner::PathRunner;
use jumpgame_core::smp::{
    adjoint_residuals, bancassurance_objectives, check_first_order, sample_states, verify_nash, Deviation,
    DeviationFamily, DeviationSettings, Perturbation,
};
use jumpgame_core::Error as CoreError;

use crate::config::{LoadedConfig, RunConfig};
use crate::error::AppError;
use crate::output::{coupled_rows, estimate, fmt, state_rows, OutputDir, TABLE_HEADER};
use crate::runner::Parallel;

/// Relative agreement required between root-found and closed-form multipliers.
pub const MULTIPLIER_REL_TOL: f64 = 1e-6;
/// Absolute bound on a deterministic constraint residual.
pub const DETERMINISTIC_RESIDUAL_TOL: f64 = 1e-8;
/// Allowance added to `threshold * SE` so noiseless runs (SE = 0) are judged on rounding only.
pub const MC_ABS_TOL: f64 = 1e-10;

/// Command-line overrides shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<std::path::PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
}

/// A loaded configuration with overrides applied and the output directory created.
pub struct Run {
    pub config: RunConfig,
    pub hash: String,
    pub out: OutputDir,
}

impl Run {
    pub fn prepare(config_path: &Path, overrides: &Overrides) -> Result<Self, AppError> {
        let LoadedConfig { mut config, hash } = LoadedConfig::from_path(config_path)?;
        config.apply_overrides(overrides.seed, overrides.paths)?;
        let dir = overrides
            .out
            .clone()
            .unwrap_or_else(|| config.output.directory.clone().into());
        let out = OutputDir::create(&dir, &config.output)?;
        Ok(Self { config, hash, out })
    }

    fn provenance(&self) -> Value {
        json!({
            "config_hash": self.hash,
            "seed": self.config.simulation.seed,
            "n_paths": self.config.simulation.n_paths,
            "grid_points": self.config.simulation.grid_points,
            "versions": {
                "jumpgame": env!("CARGO_PKG_VERSION"),
                "jumpgame_core": jumpgame_core::VERSION,
            },
        })
    }

    fn grid(&self) -> Result<TimeGrid, AppError> {
        Ok(TimeGrid::uniform(
            self.config.model.horizon,
            self.config.simulation.grid_points,
        )?)
    }
}

fn model(cfg: &RunConfig) -> Result<(Bancassurance, Equilibrium), AppError> {
    let m = Bancassurance::new(cfg.params()?)?;
    let eq = m.equilibrium()?;
    Ok((m, eq))
}

/// Equilibrium controls, optionally scaled per player by the verification overrides.
pub fn candidate_controls(cfg: &RunConfig, eq: &Equilibrium) -> ControlPair {
    let mut c = eq.controls();
    let v = &cfg.verification;
    for (player, scale) in [(1, v.candidate_dividend_scale), (2, v.candidate_rate_scale)] {
        if let Some(s) = scale {
            c = Deviation {
                player,
                perturbation: Perturbation::Scale(s),
            }
            .apply(&c);
        }
    }
    c
}

fn overridden(cfg: &RunConfig) -> bool {
    cfg.verification.candidate_dividend_scale.is_some() || cfg.verification.candidate_rate_scale.is_some()
}

/// Closed-form pipeline: multipliers, coefficient tables and equilibrium controls.
pub fn solve(run: &Run) -> Result<Value, AppError> {
    let cfg = &run.config;
    let (m, eq) = model(cfg)?;
    let terms = m.multiplier_terms();
    let times = run.grid()?.times();
    let dim = m.params().dim();
    let tables = [
        ("wealth_coefficient.csv", coupled_rows(&times, &eq.phi)),
        ("rate_coefficient.csv", coupled_rows(&times, &eq.a)),
        ("dividend.csv", state_rows(&times, dim, |t, i| eq.dividend(t, i))),
        ("rate.csv", state_rows(&times, dim, |t, i| eq.rate(t, i))),
    ];
    let mut files = serde_json::Map::new();
    for (name, rows) in tables {
        let n = rows.len();
        if let Some(f) = run.out.write_csv(name, &TABLE_HEADER, rows)? {
            files.insert(f, json!(n));
        }
    }
    let summary = json!({
        "command": "solve",
        "lambda1": eq.lambda1,
        "lambda2": eq.lambda2,
        "dividend_budget": m.dividend_budget(),
        "multiplier_terms": { "d1": terms.d1, "d2": terms.d2, "d3": terms.d3 },
        "tables": files,
        "provenance": run.provenance(),
    });
    run.out.write_json("solve.json", &summary)?;
    Ok(summary)
}

/// `Some(value)` or `None` when the bank's log utility meets a nonpositive rate.
fn domain_tolerant(r: Result<f64, CoreError>) -> Result<Option<f64>, AppError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(CoreError::DomainError(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

struct PathPayoffs {
    insurer: Vec<f64>,
    bank: Vec<Option<f64>>,
}

fn path_payoffs(
    m: &Bancassurance,
    ens: &PathEnsemble,
    controls: &ControlPair,
    log_abs_rate: bool,
) -> Result<PathPayoffs, AppError> {
    let payoffs = m.payoffs(log_abs_rate);
    let rows = Parallel.map_paths(ens.len(), |n| {
        let p = &ens.paths[n];
        let j1 = path_payoff(p, &ens.grid, &payoffs[0], controls);
        let j2 = path_payoff(p, &ens.grid, &payoffs[1], controls);
        (j1, j2)
    });
    let mut out = PathPayoffs {
        insurer: Vec::with_capacity(rows.len()),
        bank: Vec::with_capacity(rows.len()),
    };
    for (j1, j2) in rows {
        out.insurer.push(j1?);
        out.bank.push(domain_tolerant(j2)?);
    }
    Ok(out)
}

fn bank_payoff_estimate(values: &[Option<f64>]) -> Value {
    match values.iter().copied().collect::<Option<Vec<f64>>>() {
        Some(v) => estimate(&Estimate::from_samples(&v)),
        None => json!({ "domain_conflict": "log utility of a nonpositive rate; set log_abs_rate to evaluate ln|u|" }),
    }
}

fn admissibility(ens: &PathEnsemble) -> Value {
    let mut min_bank = f64::INFINITY;
    let mut finite = true;
    for p in &ens.paths {
        for k in 0..p.points() {
            let y = p.state(k);
            finite &= y.iter().all(|v| v.is_finite());
            min_bank = min_bank.min(y[1]);
        }
    }
    json!({
        "finite": finite,
        "bank_wealth_positive": min_bank > 0.0,
        "min_bank_wealth": min_bank,
    })
}

/// Simulates the candidate controls and writes one row per path.
pub fn simulate(run: &Run) -> Result<Value, AppError> {
    let cfg = &run.config;
    let sim = &cfg.simulation;
    let (m, eq) = model(cfg)?;
    let controls = candidate_controls(cfg, &eq);
    let grid = run.grid()?;
    let ens = simulate_paths(&m.system()?, &controls, &grid, sim.n_paths, sim.seed, &Parallel)?;
    let payoffs = path_payoffs(&m, &ens, &controls, cfg.verification.log_abs_rate)?;
    let rows = ens.paths.iter().enumerate().map(|(n, p)| {
        let y = p.terminal();
        vec![
            n.to_string(),
            p.seed.to_string(),
            fmt(y[0]),
            fmt(y[1]),
            p.terminal_regime().to_string(),
            fmt(payoffs.insurer[n]),
            payoffs.bank[n].map(fmt).unwrap_or_default(),
        ]
    });
    run.out.write_csv(
        "paths.csv",
        &[
            "path_id",
            "seed",
            "X1_T",
            "X2_T",
            "regime_T",
            "J1_contrib",
            "J2_contrib",
        ],
        rows,
    )?;
    let threshold = cfg.verification.threshold;
    let constraints: serde_json::Map<String, Value> = bancassurance_constraints(&m)
        .iter()
        .map(|c| {
            let e = terminal_estimate(&ens, c);
            (
                c.name.clone(),
                json!({ "estimate": estimate(&e), "within_threshold": e.within_tol(0.0, threshold, MC_ABS_TOL) }),
            )
        })
        .collect();
    let cash: Vec<f64> = ens.paths.iter().map(|p| p.terminal()[0]).collect();
    let report = json!({
        "command": "simulate",
        "paths": ens.len(),
        "terminal_cash": estimate(&Estimate::from_samples(&cash)),
        "cash_target": m.params().cash_target,
        "constraints": constraints,
        "payoffs": {
            "insurer": estimate(&Estimate::from_samples(&payoffs.insurer)),
            "bank": bank_payoff_estimate(&payoffs.bank),
        },
        "admissibility": admissibility(&ens),
        "candidate_overridden": overridden(cfg),
        "provenance": run.provenance(),
    });
    run.out.write_json("simulate.json", &report)?;
    Ok(report)
}

/// Runs `f`, turning a log-utility domain error into a failed section.
fn section(f: impl FnOnce() -> Result<Value, AppError>) -> Result<Value, AppError> {
    match f() {
        Err(AppError::Runtime(CoreError::DomainError(msg))) => Ok(json!({ "passed": false, "domain_conflict": msg })),
        other => other,
    }
}

fn passed(v: &Value) -> bool {
    v.get("passed").and_then(Value::as_bool).unwrap_or(false)
}

fn multiplier_section(run: &Run, m: &Bancassurance, eq: &Equilibrium) -> Result<Value, AppError> {
    let settings = BisectionSettings {
        tol: run.config.verification.multiplier_tol,
        ..Default::default()
    };
    let solved = bancassurance_multipliers(m, &settings, &Backend::Deterministic, &Parallel)?;
    let closed = [eq.lambda1, eq.lambda2];
    let names = ["insurer", "bank"];
    let mut rows = Vec::new();
    let mut out = serde_json::Map::new();
    let mut all = true;
    for ((name, s), exact) in names.iter().zip(&solved).zip(closed) {
        let rel = (s.lambda / exact - 1.0).abs();
        let ok = rel <= MULTIPLIER_REL_TOL;
        all &= ok;
        rows.extend(trace_rows(name, s));
        out.insert(
            name.to_string(),
            json!({
                "closed_form": exact,
                "root_found": s.lambda,
                "relative_error": rel,
                "residual": estimate(&s.residual),
                "iterations": s.iterations,
                "passed": ok,
            }),
        );
    }
    run.out.write_csv(
        "lambda_trace.csv",
        &["player", "iteration", "lambda", "lo", "hi", "residual", "std_error"],
        rows,
    )?;
    out.insert("passed".into(), json!(all));
    Ok(Value::Object(out))
}

fn trace_rows(player: &str, s: &MultiplierSolution) -> Vec<Vec<String>> {
    s.trace
        .iter()
        .map(|r| {
            vec![
                player.to_string(),
                r.iteration.to_string(),
                fmt(r.lambda),
                fmt(r.lo),
                fmt(r.hi),
                fmt(r.residual),
                fmt(r.std_error),
            ]
        })
        .collect()
}

fn constraint_section(
    m: &Bancassurance,
    ens: &PathEnsemble,
    controls: &ControlPair,
    threshold: f64,
) -> Result<Value, AppError> {
    let mut out = serde_json::Map::new();
    let mut all = true;
    for c in bancassurance_constraints(m) {
        let det = m.expectation(&c, controls)?;
        let mc = terminal_estimate(ens, &c);
        let ok = det.abs() <= DETERMINISTIC_RESIDUAL_TOL && mc.within_tol(0.0, threshold, MC_ABS_TOL);
        all &= ok;
        out.insert(
            c.name.clone(),
            json!({ "deterministic": det, "monte_carlo": estimate(&mc), "passed": ok }),
        );
    }
    out.insert("passed".into(), json!(all));
    Ok(Value::Object(out))
}

/// Constraint residuals, first-order conditions, Nash deviations, adjoint
/// residuals and multiplier root-finding in one report. Failed checks give
/// `passed: false`, not an error.
pub fn verify(run: &Run) -> Result<Value, AppError> {
    let cfg = &run.config;
    let sim = &cfg.simulation;
    let v = &cfg.verification;
    let (m, eq) = model(cfg)?;
    let controls = candidate_controls(cfg, &eq);
    let system = m.system()?;
    let grid = run.grid()?;
    let ens = simulate_paths(&system, &controls, &grid, sim.n_paths, sim.seed, &Parallel)?;

    let multipliers = multiplier_section(run, &m, &eq)?;
    let constraints = constraint_section(&m, &ens, &controls, v.threshold)?;

    let payoffs = {
        let p = path_payoffs(&m, &ens, &controls, v.log_abs_rate)?;
        let mut out = json!({
            "insurer": estimate(&Estimate::from_samples(&p.insurer)),
            "bank": bank_payoff_estimate(&p.bank),
        });
        if !overridden(cfg) {
            if let Ok([j1, j2]) = m.deterministic_payoffs(&eq, v.log_abs_rate) {
                out["deterministic"] = json!({ "insurer": j1, "bank": j2 });
            }
        }
        out
    };

    let first_order = section(|| {
        let samples = sample_states(&m, v.first_order_samples, sim.seed);
        let r = check_first_order(&m, &eq, &controls, &samples, v.log_abs_rate)?;
        let concave = r.concave();
        let ok = r.max_residual.iter().all(|x| *x <= v.first_order_tol) && concave[0] && concave[1];
        Ok(json!({
            "points": r.points,
            "max_residual": { "insurer": r.max_residual[0], "bank": r.max_residual[1] },
            "max_second_difference": { "insurer": r.max_second_difference[0], "bank": r.max_second_difference[1] },
            "tolerance": v.first_order_tol,
            "passed": ok,
        }))
    })?;

    let nash = section(|| {
        let family = DeviationFamily::scalings(1, &v.deviation_scalings)
            .with(DeviationFamily::scalings(2, &v.deviation_scalings));
        let settings = DeviationSettings {
            threshold: v.threshold,
            ..Default::default()
        };
        let objectives = bancassurance_objectives(&m, &eq, v.log_abs_rate);
        let verdict = verify_nash(
            &system,
            &objectives,
            &controls,
            &family,
            &grid,
            sim.n_paths,
            sim.seed,
            settings,
            &Parallel,
        )?;
        let rows = verdict.results.iter().map(|r| {
            vec![
                r.name.clone(),
                r.player.to_string(),
                fmt(r.delta.mean),
                fmt(r.delta.std_error),
                r.z.map(fmt).unwrap_or_default(),
                r.improves.to_string(),
            ]
        });
        run.out.write_csv(
            "deviations.csv",
            &["deviation", "player", "gain", "std_error", "z", "improves"],
            rows,
        )?;
        let improving: Vec<Value> = verdict
            .results
            .iter()
            .filter(|r| r.improves)
            .map(|r| json!({ "deviation": r.name, "player": r.player, "z": r.z }))
            .collect();
        Ok(json!({
            "deviations": verdict.results.len(),
            "improving": improving,
            "insurer_passed": verdict.player_passed[0],
            "bank_passed": verdict.player_passed[1],
            "passed": verdict.passed,
        }))
    })?;

    let adjoint = section(|| {
        let r = adjoint_residuals(&m, &eq, &ens, &controls, &v.checkpoints, v.threshold)?;
        let rows = r.checkpoints.iter().flat_map(|c| {
            ["insurer", "bank"].iter().zip(&c.residuals).map(move |(who, e)| {
                vec![
                    fmt(c.t),
                    who.to_string(),
                    fmt(e.mean),
                    fmt(e.std_error),
                    c.passed.to_string(),
                ]
            })
        });
        run.out.write_csv(
            "adjoint_residuals.csv",
            &["t", "player", "mean", "std_error", "passed"],
            rows,
        )?;
        let checkpoints: Vec<Value> = r
            .checkpoints
            .iter()
            .map(|c| {
                json!({
                    "t": c.t,
                    "insurer": estimate(&c.residuals[0]),
                    "bank": estimate(&c.residuals[1]),
                    "passed": c.passed,
                })
            })
            .collect();
        Ok(json!({
            "insurer_terminal": r.insurer_terminal,
            "bank_terminal": r.bank_terminal,
            "constant_components": r.constant_components,
            "checkpoints": checkpoints,
            "passed": r.passed,
        }))
    })?;

    let all = [&multipliers, &constraints, &first_order, &nash, &adjoint]
        .iter()
        .all(|s| passed(s));
    let report = json!({
        "command": "verify",
        "lambda1": eq.lambda1,
        "lambda2": eq.lambda2,
        "candidate_overridden": overridden(cfg),
        "multipliers": multipliers,
        "constraints": constraints,
        "payoffs": payoffs,
        "first_order": first_order,
        "nash": nash,
        "adjoint": adjoint,
        "passed": all,
        "provenance": run.provenance(),
    });
    run.out.write_json("report.json", &report)?;
    Ok(report)
}
