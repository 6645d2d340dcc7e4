use std::sync::Arc;

use jumpgame_core::chain::{sample_chain_path, validate_generator, ChainGenerator, RateSchedule};
use jumpgame_core::grid::TimeGrid;
use jumpgame_core::kolmogorov::{
    chain_expectation_integral, point_mass, solve_backward_coupled, transition_matrix, transition_matrix_rk4,
};
use jumpgame_core::linalg::Matrix;
use jumpgame_core::numeric::Estimate;
use jumpgame_core::runner::{path_rng, path_seed};

fn piecewise() -> ChainGenerator {
    let a = Matrix::from_rows(&[vec![-1.0, 0.6, 0.4], vec![0.3, -0.5, 0.2], vec![0.0, 2.0, -2.0]]).unwrap();
    let b = Matrix::from_rows(&[vec![-0.2, 0.1, 0.1], vec![1.0, -3.0, 2.0], vec![0.5, 0.5, -1.0]]).unwrap();
    validate_generator(RateSchedule::Piecewise(vec![(0.0, a), (0.7, b)]), 2.0).unwrap()
}

fn smooth() -> ChainGenerator {
    let rates = Arc::new(|t: f64| {
        let a = 1.0 + t.sin();
        Matrix::from_rows(&[vec![-a, a], vec![0.5, -0.5]]).unwrap()
    });
    validate_generator(
        RateSchedule::Function {
            dim: 2,
            rates,
            dominating_rate: Some(2.0),
        },
        2.0,
    )
    .unwrap()
}

#[test]
fn chapman_kolmogorov_holds() {
    let triples = [(0.0, 0.5, 2.0), (0.3, 0.7, 1.1), (0.65, 0.75, 1.9), (0.0, 1.0, 1.0)];
    for gen in [piecewise(), smooth()] {
        for (s, t, u) in triples {
            let direct = transition_matrix(&gen, s, u).unwrap();
            let split = transition_matrix(&gen, s, t)
                .unwrap()
                .mul(&transition_matrix(&gen, t, u).unwrap());
            assert!(direct.max_abs_diff(&split) < 1e-8, "({s}, {t}, {u})");
        }
    }
}

#[test]
fn exponential_and_rk4_transition_matrices_agree() {
    let gen = piecewise();
    let exact = transition_matrix(&gen, 0.2, 1.8).unwrap();
    let rk = transition_matrix_rk4(&gen, 0.2, 1.8, 2000).unwrap();
    assert!(exact.max_abs_diff(&rk) < 1e-10);
    assert!(transition_matrix(&gen, 1.0, 0.5).is_err());
}

#[test]
fn scalar_equation_matches_closed_form() {
    let gen = ChainGenerator::constant(&[vec![0.0]], 1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 129).unwrap();
    let v = solve_backward_coupled(&gen, |_, _| 0.7, &[-2.0], &grid).unwrap();
    for k in 0..grid.len() {
        let exact = -2.0 * (0.7 * (1.0 - grid.time(k))).exp();
        assert!((v.value(k, 0) - exact).abs() < 1e-8);
    }
}

#[test]
fn zero_potential_matches_transition_matrix() {
    let gen = piecewise();
    let terminal = [1.0, -0.5, 3.0];
    let grid = TimeGrid::uniform(2.0, 401).unwrap();
    let v = solve_backward_coupled(&gen, |_, _| 0.0, &terminal, &grid).unwrap();
    for k in [0, 100, 250, 400] {
        let p = transition_matrix(&gen, grid.time(k), 2.0).unwrap();
        let expected = p.mul_vec(&terminal);
        for i in 0..3 {
            assert!((v.value(k, i) - expected[i]).abs() < 1e-8);
        }
    }
}

#[test]
fn halving_the_step_cuts_the_error_at_least_eightfold() {
    let gen = ChainGenerator::constant(&[vec![0.0]], 1.0).unwrap();
    let potential = |t: f64, _: usize| 3.0 * (4.0 * t).cos();
    // v(0) = exp(int_0^1 B) with int_0^1 3 cos(4t) dt = 0.75 sin 4.
    let exact = (0.75 * 4f64.sin()).exp();
    let err = |points| {
        let grid = TimeGrid::uniform(1.0, points).unwrap();
        let v = solve_backward_coupled(&gen, potential, &[1.0], &grid).unwrap();
        (v.value(0, 0) - exact).abs()
    };
    let (coarse, fine) = (err(9), err(17));
    assert!(coarse / fine >= 8.0, "{coarse} / {fine}");
}

#[test]
fn chain_integral_matches_monte_carlo() {
    let gen = piecewise();
    let grid = TimeGrid::uniform(2.0, 401).unwrap();
    let fs: [fn(f64, usize) -> f64; 2] = [|_, i| i as f64, |t, i| if i == 1 { t * t } else { 1.0 - t }];
    for f in fs {
        let exact = chain_expectation_integral(&gen, &point_mass(3, 0), f, &grid).unwrap();
        let samples: Vec<f64> = (0..20_000)
            .map(|n| {
                let mut rng = path_rng(path_seed(13, n));
                let path = sample_chain_path(&gen, 0, &mut rng).unwrap();
                // Exact integral of f over each constant-regime segment by Simpson on the piece.
                path.segments()
                    .iter()
                    .map(|&(a, b, i)| (b - a) / 6.0 * (f(a, i) + 4.0 * f(0.5 * (a + b), i) + f(b, i)))
                    .sum()
            })
            .collect();
        let est = Estimate::from_samples(&samples);
        assert!(est.within(exact, 3.0), "{est:?} vs {exact}");
    }
}
