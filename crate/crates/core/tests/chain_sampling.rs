use std::sync::Arc;

use jumpgame_core::chain::{
    jump_counters, sample_chain_path, sample_chain_path_thinning, validate_generator, ChainGenerator, CounterOptions,
    RateSchedule,
};
use jumpgame_core::grid::TimeGrid;
use jumpgame_core::kolmogorov::{marginal_law, point_mass, transition_matrix};
use jumpgame_core::linalg::Matrix;
use jumpgame_core::numeric::Estimate;
use jumpgame_core::runner::{path_rng, path_seed};

fn three_state() -> ChainGenerator {
    ChainGenerator::constant(&[vec![-1.5, 1.0, 0.5], vec![0.4, -0.6, 0.2], vec![1.0, 2.0, -3.0]], 2.0).unwrap()
}

fn time_varying() -> ChainGenerator {
    let rates = Arc::new(|t: f64| {
        let a = 1.0 + t;
        let b = 2.0 - 0.5 * t;
        Matrix::from_rows(&[vec![-a, a], vec![b, -b]]).unwrap()
    });
    validate_generator(
        RateSchedule::Function {
            dim: 2,
            rates,
            dominating_rate: None,
        },
        1.0,
    )
    .unwrap()
}

fn terminal_counts(gen: &ChainGenerator, n: usize, seed: u64, thinning: bool) -> Vec<f64> {
    let mut counts = vec![0.0; gen.dim()];
    for i in 0..n {
        let mut rng = path_rng(path_seed(seed, i as u64));
        let path = if thinning {
            sample_chain_path_thinning(gen, 0, &mut rng).unwrap()
        } else {
            sample_chain_path(gen, 0, &mut rng).unwrap()
        };
        counts[path.terminal_state()] += 1.0;
    }
    counts
}

// Pearson statistic against expected probabilities.
fn chi_square(counts: &[f64], probs: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(c, p)| (c - n * p) * (c - n * p) / (n * p))
        .sum()
}

#[test]
fn symmetric_chain_stays_with_probability_three_quarters() {
    let gen = ChainGenerator::constant(&[vec![-1.0, 1.0], vec![1.0, -1.0]], 1.0).unwrap();
    let t = std::f64::consts::LN_2 / 2.0;
    let p = transition_matrix(&gen, 0.0, t).unwrap();
    assert!((p[(0, 0)] - 0.75).abs() < 1e-8);

    let short = ChainGenerator::constant(&[vec![-1.0, 1.0], vec![1.0, -1.0]], t).unwrap();
    let stays: Vec<f64> = (0..100_000)
        .map(|i| {
            let mut rng = path_rng(path_seed(7, i));
            f64::from(u8::from(
                sample_chain_path(&short, 0, &mut rng).unwrap().terminal_state() == 0,
            ))
        })
        .collect();
    let est = Estimate::from_samples(&stays);
    assert!(est.within(0.75, 3.0), "{est:?}");
}

#[test]
fn exact_and_thinning_samplers_agree_with_marginal_law() {
    let gen = three_state();
    let law = marginal_law(&gen, &point_mass(3, 0), gen.horizon()).unwrap();
    // Critical value of chi-square with 2 degrees of freedom at 0.01.
    let critical = 9.21;
    for thinning in [false, true] {
        let counts = terminal_counts(&gen, 100_000, 3, thinning);
        let stat = chi_square(&counts, &law);
        assert!(stat < critical, "thinning={thinning}: {stat}");
    }
}

#[test]
fn thinning_matches_time_varying_marginal_law() {
    let gen = time_varying();
    let law = marginal_law(&gen, &point_mass(2, 0), 1.0).unwrap();
    let counts = terminal_counts(&gen, 100_000, 5, false);
    // One degree of freedom at 0.01.
    assert!(chi_square(&counts, &law) < 6.63);
}

#[test]
fn arrivals_sum_transitions_and_compensate_to_zero() {
    let gen = three_state();
    let grid = TimeGrid::uniform(gen.horizon(), 201).unwrap();
    let n = 10_000;
    let mut terminal = vec![Vec::new(); 3];
    for i in 0..n {
        let mut rng = path_rng(path_seed(11, i as u64));
        let path = sample_chain_path(&gen, 0, &mut rng).unwrap();
        let c = jump_counters(&path, &gen, &grid, CounterOptions::default()).unwrap();
        for k in 0..grid.len() {
            for j in 0..3 {
                let sum: u32 = (0..3).filter(|i| *i != j).map(|i| c.transitions(k, i, j)).sum();
                assert_eq!(c.arrivals(k, j), sum);
            }
        }
        let last = grid.len() - 1;
        for (j, v) in terminal.iter_mut().enumerate() {
            v.push(c.compensated(last, j));
        }
        let direct = path.terminal_compensated(&gen);
        for j in 0..3 {
            assert!((direct[j] - c.compensated(last, j)).abs() < 1e-9);
        }
    }
    for (j, v) in terminal.iter().enumerate() {
        let est = Estimate::from_samples(v);
        assert!(est.within(0.0, 3.0), "state {j}: {est:?}");
    }
}

#[test]
fn invalid_generators_are_rejected() {
    assert!(ChainGenerator::constant(&[vec![-1.0, 0.5], vec![1.0, -1.0]], 1.0).is_err());
    assert!(ChainGenerator::constant(&[vec![1.0, -1.0], vec![1.0, -1.0]], 1.0).is_err());
    assert!(ChainGenerator::constant(&[], 1.0).is_err());
    let gen = three_state();
    let mut rng = path_rng(1);
    assert!(sample_chain_path(&gen, 3, &mut rng).is_err());
}
