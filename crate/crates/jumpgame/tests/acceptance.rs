//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use jumpgame::runner::Parallel;
use jumpgame::LoadedConfig;
use jumpgame_core::bancassurance::{Bancassurance, BancassuranceParams};
use jumpgame_core::chain::{sample_chain_path, ChainGenerator};
use jumpgame_core::grid::TimeGrid;
use jumpgame_core::jumpdiff::{simulate_paths, CoefficientSet, ControlPair, JumpDiffusion};
use jumpgame_core::kolmogorov::{solve_backward_coupled, transition_matrix};
use jumpgame_core::lagrange::{
    bancassurance_constraints, bancassurance_multipliers, terminal_estimate, Backend, BisectionSettings,
};
use jumpgame_core::levy::{LevyMeasureSpec, MarkLaw, RegimeJumps};
use jumpgame_core::numeric::Estimate;
use jumpgame_core::runner::{path_rng, path_seed, PathRunner};
use jumpgame_core::smp::{
    adjoint_residuals, bancassurance_objectives, check_first_order, sample_states, verify_nash, verify_saddle,
    Deviation, DeviationFamily, DeviationSettings, Perturbation, SaddleToy,
};

type Check = Result<String, String>;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn params(name: &str) -> BancassuranceParams {
    LoadedConfig::from_path(&config_path(name))
        .and_then(|c| c.config.params())
        .expect("shipped config is valid")
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn z(e: &Estimate, target: f64) -> f64 {
    e.z_score(target).unwrap_or(0.0)
}

fn transition_oracle() -> Check {
    let t = std::f64::consts::LN_2 / 2.0;
    let gen = ChainGenerator::constant(&[vec![-1.0, 1.0], vec![1.0, -1.0]], t).map_err(|e| e.to_string())?;
    let p = transition_matrix(&gen, 0.0, t).map_err(|e| e.to_string())?[(0, 0)];
    let stayed: Vec<f64> = Parallel.map_paths(100_000, |n| {
        let mut rng = path_rng(path_seed(1, n as u64));
        let path = sample_chain_path(&gen, 0, &mut rng).expect("valid generator");
        f64::from(u8::from(path.state_at(t) == 0))
    });
    let mc = Estimate::from_samples(&stayed);
    ensure(
        (p - 0.75).abs() <= 1e-8 && mc.within(0.75, 3.0),
        format!(
            "ODE error {:.1e}, sampled {:.4} (z = {:.2})",
            (p - 0.75).abs(),
            mc.mean,
            z(&mc, 0.75)
        ),
    )
}

fn coupled_ode_oracle() -> Check {
    let scalar = ChainGenerator::constant(&[vec![0.0]], 1.0).map_err(|e| e.to_string())?;
    let grid = TimeGrid::uniform(1.0, 129).map_err(|e| e.to_string())?;
    let v = solve_backward_coupled(&scalar, |_, _| 0.7, &[-2.0], &grid).map_err(|e| e.to_string())?;
    let closed = (0..grid.len())
        .map(|k| (v.value(k, 0) + 2.0 * (0.7 * (1.0 - grid.time(k))).exp()).abs())
        .fold(0.0, f64::max);

    let gen = ChainGenerator::constant(&[vec![-1.0, 0.6, 0.4], vec![0.3, -0.5, 0.2], vec![0.0, 2.0, -2.0]], 1.0)
        .map_err(|e| e.to_string())?;
    let terminal = [1.0, -0.5, 3.0];
    let w = solve_backward_coupled(&gen, |_, _| 0.0, &terminal, &grid).map_err(|e| e.to_string())?;
    let mut transition = 0.0f64;
    for k in 0..grid.len() {
        let expected = transition_matrix(&gen, grid.time(k), 1.0)
            .map_err(|e| e.to_string())?
            .mul_vec(&terminal);
        for (i, e) in expected.iter().enumerate() {
            transition = transition.max((w.value(k, i) - e).abs());
        }
    }

    let exact = (0.75 * 4f64.sin()).exp();
    let err = |points| -> Result<f64, String> {
        let g = TimeGrid::uniform(1.0, points).map_err(|e| e.to_string())?;
        let v = solve_backward_coupled(&scalar, |t, _| 3.0 * (4.0 * t).cos(), &[1.0], &g).map_err(|e| e.to_string())?;
        Ok((v.value(0, 0) - exact).abs())
    };
    let ratio = err(9)? / err(17)?;
    ensure(
        closed <= 1e-8 && transition <= 1e-8 && ratio >= 8.0,
        format!("closed form {closed:.1e}, transition matrix {transition:.1e}, step-halving ratio {ratio:.1}"),
    )
}

fn multiplier_closed_forms() -> Check {
    let m = Bancassurance::new(params("collapsed.json")).map_err(|e| e.to_string())?;
    let [ins, bank] = bancassurance_multipliers(&m, &BisectionSettings::default(), &Backend::Deterministic, &Parallel)
        .map_err(|e| e.to_string())?;
    let (r1, r2) = ((ins.lambda / 25.0 - 1.0).abs(), (bank.lambda / 2.0 - 1.0).abs());
    ensure(
        r1 <= 1e-6 && r2 <= 1e-6,
        format!(
            "lambda1 = {:.10} (rel {r1:.1e}), lambda2 = {:.10} (rel {r2:.1e})",
            ins.lambda, bank.lambda
        ),
    )
}

fn benchmark() -> Result<Bancassurance, String> {
    Bancassurance::new(params("benchmark.json")).map_err(|e| e.to_string())
}

fn constraint_satisfaction() -> Check {
    let m = benchmark()?;
    let eq = m.equilibrium().map_err(|e| e.to_string())?;
    let grid = TimeGrid::uniform(1.0, 129).map_err(|e| e.to_string())?;
    let system = m.system().map_err(|e| e.to_string())?;
    let ens = simulate_paths(&system, &eq.controls(), &grid, 100_000, 41, &Parallel).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for c in bancassurance_constraints(&m) {
        let e = terminal_estimate(&ens, &c);
        ok &= e.within(0.0, 3.0);
        parts.push(format!("{}: z = {:.2}", c.name, z(&e, 0.0)));
    }
    ensure(ok, parts.join(", "))
}

fn first_order_conditions() -> Check {
    let m = benchmark()?;
    let eq = m.equilibrium().map_err(|e| e.to_string())?;
    let samples = sample_states(&m, 120, 5);
    let r = check_first_order(&m, &eq, &eq.controls(), &samples, true).map_err(|e| e.to_string())?;
    let concave = r.concave();
    ensure(
        r.max_residual.iter().all(|x| *x <= 1e-6) && concave[0] && concave[1],
        format!(
            "{} samples, max residuals {:.1e} / {:.1e}, concave {concave:?}",
            r.points, r.max_residual[0], r.max_residual[1]
        ),
    )
}

fn nash_deviations() -> Check {
    let m = benchmark()?;
    let eq = m.equilibrium().map_err(|e| e.to_string())?;
    let system = m.system().map_err(|e| e.to_string())?;
    let objectives = bancassurance_objectives(&m, &eq, true);
    let grid = TimeGrid::uniform(1.0, 65).map_err(|e| e.to_string())?;
    let scalings = [0.5, 0.8, 1.25, 2.0];
    let family = DeviationFamily::scalings(1, &scalings).with(DeviationFamily::scalings(2, &scalings));
    let settings = DeviationSettings::default();
    let run = |candidate: &ControlPair| {
        verify_nash(
            &system,
            &objectives,
            candidate,
            &family,
            &grid,
            10_000,
            23,
            settings,
            &Parallel,
        )
        .map_err(|e| e.to_string())
    };
    let good = run(&eq.controls())?;
    let worst = good
        .results
        .iter()
        .filter_map(|r| r.z)
        .fold(f64::NEG_INFINITY, f64::max);
    let corrupted = Deviation {
        player: 1,
        perturbation: Perturbation::Scale(10.0),
    }
    .apply(&eq.controls());
    let bad = run(&corrupted)?;
    let caught = bad
        .results
        .iter()
        .filter(|r| r.player == 1)
        .filter_map(|r| r.z)
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(
        good.passed && !bad.player_passed[0] && caught > 3.0,
        format!("largest gain z at equilibrium {worst:.2}, corrupted candidate z = {caught:.1}"),
    )
}

fn adjoint_ansatz() -> Check {
    let m = benchmark()?;
    let eq = m.equilibrium().map_err(|e| e.to_string())?;
    let controls = eq.controls();
    let grid = TimeGrid::uniform(1.0, 101).map_err(|e| e.to_string())?;
    let system = m.system().map_err(|e| e.to_string())?;
    let ens = simulate_paths(&system, &controls, &grid, 10_000, 29, &Parallel).map_err(|e| e.to_string())?;
    let r = adjoint_residuals(&m, &eq, &ens, &controls, &[0.2, 0.4, 0.6, 0.8], 3.0).map_err(|e| e.to_string())?;
    let zs: Vec<String> = r
        .checkpoints
        .iter()
        .map(|c| format!("{:.2}/{:.2}", z(&c.residuals[0], 0.0), z(&c.residuals[1], 0.0)))
        .collect();
    ensure(
        r.passed,
        format!(
            "terminal {:.1e} / {:.1e}, checkpoint z {}",
            r.insurer_terminal,
            r.bank_terminal,
            zs.join(" ")
        ),
    )
}

fn martingale_plumbing() -> Check {
    let gen = ChainGenerator::constant(&[vec![-1.0, 1.0], vec![2.0, -2.0]], 1.0).map_err(|e| e.to_string())?;
    let compensated: Vec<Vec<f64>> = Parallel.map_paths(10_000, |n| {
        let mut rng = path_rng(path_seed(3, n as u64));
        sample_chain_path(&gen, 0, &mut rng)
            .expect("valid generator")
            .terminal_compensated(&gen)
    });
    let jumps = LevyMeasureSpec::new(vec![
        RegimeJumps {
            intensity: 2.0,
            law: MarkLaw::Uniform { low: 0.0, high: 1.0 },
        },
        RegimeJumps {
            intensity: 5.0,
            law: MarkLaw::TwoPoint {
                low: -1.0,
                high: 2.0,
                p_high: 0.25,
            },
        },
    ])
    .map_err(|e| e.to_string())?;
    let coeffs = CoefficientSet::new(1, 1, Arc::new(|_, out| out[0] = 0.0), Arc::new(|_, out| out[0] = 0.0))
        .with_jumps(Arc::new(|_, _, z, out| out[0] = z));
    let model = JumpDiffusion::new(coeffs, vec![jumps], gen.clone(), vec![0.0], 0).map_err(|e| e.to_string())?;
    let grid = TimeGrid::uniform(1.0, 65).map_err(|e| e.to_string())?;
    let ens = simulate_paths(&model, &ControlPair::constant(0.0, 0.0), &grid, 10_000, 4, &Parallel)
        .map_err(|e| e.to_string())?;
    let mut estimates: Vec<(String, Estimate)> = (0..2)
        .map(|j| {
            let v: Vec<f64> = compensated.iter().map(|c| c[j]).collect();
            (format!("chain {j}"), Estimate::from_samples(&v))
        })
        .collect();
    let poisson: Vec<f64> = ens.paths.iter().map(|p| p.terminal()[0]).collect();
    estimates.push((String::from("jumps"), Estimate::from_samples(&poisson)));
    let ok = estimates.iter().all(|(_, e)| e.std_error > 0.0 && e.within(0.0, 3.0));
    let parts: Vec<String> = estimates
        .iter()
        .map(|(n, e)| format!("{n}: z = {:.2}", z(e, 0.0)))
        .collect();
    ensure(ok, parts.join(", "))
}

fn saddle_toy() -> Check {
    let grid = TimeGrid::uniform(1.0, 65).map_err(|e| e.to_string())?;
    let settings = DeviationSettings::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (label, toy) in [("plain", SaddleToy::plain()), ("regime", SaddleToy::regime_modulated())] {
        let model = toy.model().map_err(|e| e.to_string())?;
        let family = toy.default_deviations();
        let run = |candidate: &ControlPair| {
            verify_saddle(
                &model,
                &toy.payoff(),
                candidate,
                &family,
                &grid,
                10_000,
                8,
                settings,
                &Parallel,
            )
            .map_err(|e| e.to_string())
        };
        let at_saddle = run(&toy.saddle())?;
        let corrupted = Deviation {
            player: 1,
            perturbation: Perturbation::Constant(1.0),
        }
        .apply(&toy.saddle());
        let bad = run(&corrupted)?;
        let caught = bad
            .results
            .iter()
            .filter(|r| r.player == 1)
            .filter_map(|r| r.z)
            .fold(f64::NEG_INFINITY, f64::max);
        ok &= at_saddle.passed && !bad.player_passed[0] && caught > 3.0;
        parts.push(format!(
            "{label}: saddle passed {}, corrupted z = {caught:.1}",
            at_saddle.passed
        ));
    }
    ensure(ok, parts.join("; "))
}

fn read_dir(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
        files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(files)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for command in ["solve", "verify"] {
        let mut outputs = Vec::new();
        for rerun in 0..2 {
            let out = tmp.path().join(format!("{command}-{rerun}"));
            let status = Command::new(env!("CARGO_BIN_EXE_jumpgame"))
                .args([command, "--config"])
                .arg(config_path("benchmark.json"))
                .arg("--out")
                .arg(&out)
                .args(["--paths", "2000", "--seed", "99"])
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{command} exited with {}", status.status));
            }
            outputs.push(read_dir(&out)?);
        }
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            return Err(format!("{command} outputs differ between reruns"));
        }
        compared += outputs[0].len();
    }
    Ok(format!("{compared} files byte-identical across reruns"))
}

fn main() {
    type Criterion = (&'static str, u64, fn() -> Check);
    let criteria: [Criterion; 10] = [
        ("transition-matrix oracle", 10, transition_oracle),
        ("coupled backward ODE oracle", 5, coupled_ode_oracle),
        ("multiplier closed forms", 5, multiplier_closed_forms),
        ("constraint satisfaction", 60, constraint_satisfaction),
        ("first-order conditions", 5, first_order_conditions),
        ("Nash deviation suite", 120, nash_deviations),
        ("adjoint ansatz", 60, adjoint_ansatz),
        ("martingale plumbing", 30, martingale_plumbing),
        ("saddle toy", 60, saddle_toy),
        ("determinism", 300, determinism),
    ];
    let mut failures = 0;
    for (n, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err(String::from("panicked")));
        let elapsed = start.elapsed();
        let result = match result {
            Ok(d) if elapsed > Duration::from_secs(*limit) => Err(format!("{d}; exceeded {limit} s")),
            other => other,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if result.is_err() {
            failures += 1;
        }
        println!(
            "criterion {:>2} {tag}  {name} ({:.2} s): {detail}",
            n + 1,
            elapsed.as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
