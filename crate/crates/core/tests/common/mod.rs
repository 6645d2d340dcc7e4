#![allow(dead_code)]

use jumpgame_core::bancassurance::{BancassuranceParams, StateTable, TimeTable};
use jumpgame_core::chain::ChainGenerator;
use jumpgame_core::levy::{LevyMeasureSpec, MarkLaw, RegimeJumps};

/// Two regimes switching at rate 1 with jumps in the bank's wealth.
pub fn benchmark() -> BancassuranceParams {
    let jumps = |intensity| RegimeJumps {
        intensity,
        law: MarkLaw::Uniform { low: -0.2, high: 0.1 },
    };
    BancassuranceParams {
        premium: TimeTable::constant(1.5),
        payment: StateTable::constants(&[1.2, 1.0]),
        claim_vol: StateTable::constants(&[0.3, 0.4]),
        bank_vol: StateTable::constants(&[0.2, 0.3]),
        jumps: LevyMeasureSpec::new(vec![jumps(0.5), jumps(1.0)]).unwrap(),
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

/// One regime, no noise, `premium - payment = 0.2`, `surplus - commission = 1`, `commission = e`.
pub fn collapsed(cash_target: f64, log_target: f64) -> BancassuranceParams {
    let e = std::f64::consts::E;
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
