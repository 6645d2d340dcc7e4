//! Finite-activity jump measures `nu(dz) = intensity * law(dz)`, one per regime.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numeric::gauss_legendre;

#[allow(unused_imports)]
use num_traits::Float;

/// Law of a jump mark `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarkLaw {
    /// `z = low` with probability `1 - p_high`, `z = high` with probability `p_high`.
    TwoPoint { low: f64, high: f64, p_high: f64 },
    /// Uniform on `[low, high]`.
    Uniform { low: f64, high: f64 },
    /// `1 + z` log-normal: `z = exp(mu + sigma * N(0, 1)) - 1`.
    LogNormal { mu: f64, sigma: f64 },
}

const QUAD_POINTS: usize = 64;
const NORMAL_SPAN: f64 = 10.0;

impl MarkLaw {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: alloc::string::String| Err(Error::InvalidMarkLaw(reason));
        match *self {
            Self::TwoPoint { low, high, p_high } => {
                if !(low.is_finite() && high.is_finite()) {
                    return bad(format!("two-point marks must be finite ({low}, {high})"));
                }
                if !(0.0..=1.0).contains(&p_high) {
                    return bad(format!("probability {p_high} outside [0, 1]"));
                }
            }
            Self::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && high > low) {
                    return bad(format!("uniform needs finite low < high ({low}, {high})"));
                }
            }
            Self::LogNormal { mu, sigma } => {
                if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) {
                    return bad(format!("log-normal needs finite mu and sigma >= 0 ({mu}, {sigma})"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::TwoPoint { low, high, p_high } => {
                if rng.random::<f64>() < p_high {
                    high
                } else {
                    low
                }
            }
            Self::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            Self::LogNormal { mu, sigma } => {
                let x: f64 = StandardNormal.sample(rng);
                (mu + sigma * x).exp() - 1.0
            }
        }
    }

    /// Infimum of the support.
    pub fn min_mark(&self) -> f64 {
        match *self {
            Self::TwoPoint { low, high, p_high } => {
                if p_high >= 1.0 {
                    high
                } else if p_high <= 0.0 {
                    low
                } else {
                    low.min(high)
                }
            }
            Self::Uniform { low, .. } => low,
            Self::LogNormal { sigma, mu } => {
                if sigma == 0.0 {
                    mu.exp() - 1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Whether `1 + z > 0` almost surely.
    pub fn above_minus_one(&self) -> bool {
        match self {
            Self::LogNormal { .. } => true,
            _ => self.min_mark() > -1.0,
        }
    }

    /// `E[z]`.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::TwoPoint { low, high, p_high } => (1.0 - p_high) * low + p_high * high,
            Self::Uniform { low, high } => 0.5 * (low + high),
            Self::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp() - 1.0,
        }
    }

    /// `E[z^2]`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::TwoPoint { low, high, p_high } => (1.0 - p_high) * low * low + p_high * high * high,
            Self::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
            Self::LogNormal { mu, sigma } => {
                (2.0 * mu + 2.0 * sigma * sigma).exp() - 2.0 * (mu + 0.5 * sigma * sigma).exp() + 1.0
            }
        }
    }

    /// `E[ln(1 + z)]`; requires `1 + z > 0`.
    pub fn mean_log1p(&self) -> f64 {
        match *self {
            Self::TwoPoint { low, high, p_high } => weighted(p_high, (1.0 + low).ln(), (1.0 + high).ln()),
            Self::Uniform { low, high } => {
                let f = |x: f64| x * x.ln() - x;
                (f(1.0 + high) - f(1.0 + low)) / (high - low)
            }
            Self::LogNormal { mu, .. } => mu,
        }
    }

    /// `E[(1 + z)^-1]`; requires `1 + z > 0`.
    pub fn mean_inv1p(&self) -> f64 {
        match *self {
            Self::TwoPoint { low, high, p_high } => weighted(p_high, 1.0 / (1.0 + low), 1.0 / (1.0 + high)),
            Self::Uniform { low, high } => ((1.0 + high) / (1.0 + low)).ln() / (high - low),
            Self::LogNormal { mu, sigma } => (-mu + 0.5 * sigma * sigma).exp(),
        }
    }

    /// `E[f(z)]`: exact for two-point laws, 64-point Gauss-Legendre otherwise
    /// (on `[low, high]` for the uniform law, on `+-10` standard deviations of
    /// the underlying normal for the log-normal law).
    pub fn expect<F: FnMut(f64) -> f64>(&self, f: F) -> f64 {
        match *self {
            Self::TwoPoint { .. } => self.expect_with(&[], &[], f),
            _ => {
                let (x, w) = gauss_legendre(QUAD_POINTS);
                self.expect_with(&x, &w, f)
            }
        }
    }

    /// [`MarkLaw::expect`] with precomputed Gauss-Legendre nodes and weights on `[-1, 1]`.
    pub fn expect_with<F: FnMut(f64) -> f64>(&self, x: &[f64], w: &[f64], mut f: F) -> f64 {
        match *self {
            Self::TwoPoint { low, high, p_high } => {
                let (a, b) = (f(low), f(high));
                weighted(p_high, a, b)
            }
            Self::Uniform { low, high } => {
                let half = 0.5 * (high - low);
                let mid = 0.5 * (high + low);
                0.5 * x.iter().zip(w).map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
            }
            Self::LogNormal { mu, sigma } => {
                if sigma == 0.0 {
                    return f(mu.exp() - 1.0);
                }
                let norm = 1.0 / (2.0 * core::f64::consts::PI).sqrt();
                NORMAL_SPAN
                    * x.iter()
                        .zip(w)
                        .map(|(x, w)| {
                            let s = NORMAL_SPAN * x;
                            w * norm * (-0.5 * s * s).exp() * f((mu + sigma * s).exp() - 1.0)
                        })
                        .sum::<f64>()
            }
        }
    }
}

// Skips a zero-probability branch so that an infinite value there does not leak in.
fn weighted(p_high: f64, low: f64, high: f64) -> f64 {
    if p_high <= 0.0 {
        low
    } else if p_high >= 1.0 {
        high
    } else {
        (1.0 - p_high) * low + p_high * high
    }
}

/// Jump arrivals in one regime: rate `intensity`, marks drawn from `law`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeJumps {
    pub intensity: f64,
    pub law: MarkLaw,
}

impl RegimeJumps {
    pub fn none() -> Self {
        Self {
            intensity: 0.0,
            law: MarkLaw::TwoPoint {
                low: 0.0,
                high: 0.0,
                p_high: 0.0,
            },
        }
    }
}

/// Regime-indexed finite-activity Levy measure of one jump component.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyMeasureSpec {
    regimes: Vec<RegimeJumps>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl LevyMeasureSpec {
    pub fn new(regimes: Vec<RegimeJumps>) -> Result<Self> {
        for (i, r) in regimes.iter().enumerate() {
            if !(r.intensity.is_finite() && r.intensity >= 0.0) {
                return Err(Error::InvalidMarkLaw(format!(
                    "intensity {} in regime {i} must be finite and nonnegative",
                    r.intensity
                )));
            }
            r.law.validate()?;
            if r.intensity > 0.0 && !(r.law.second_moment().is_finite()) {
                return Err(Error::InvalidMarkLaw(format!(
                    "int z^2 nu(dz) is not finite in regime {i}"
                )));
            }
        }
        let (nodes, weights) = gauss_legendre(QUAD_POINTS);
        Ok(Self {
            regimes,
            nodes,
            weights,
        })
    }

    /// Same law in every regime.
    pub fn uniform_across(dim: usize, jumps: RegimeJumps) -> Result<Self> {
        Self::new(alloc::vec![jumps; dim])
    }

    /// No jumps in any of `dim` regimes.
    pub fn none(dim: usize) -> Self {
        Self {
            regimes: alloc::vec![RegimeJumps::none(); dim],
            nodes: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.regimes.len()
    }

    pub fn regime(&self, i: usize) -> &RegimeJumps {
        &self.regimes[i]
    }

    pub fn intensity(&self, i: usize) -> f64 {
        self.regimes[i].intensity
    }

    pub fn max_intensity(&self) -> f64 {
        self.regimes.iter().map(|r| r.intensity).fold(0.0, f64::max)
    }

    /// `int f(z) nu^i(dz)`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, i: usize, f: F) -> f64 {
        let r = &self.regimes[i];
        if r.intensity == 0.0 {
            return 0.0;
        }
        r.intensity * r.law.expect_with(&self.nodes, &self.weights, f)
    }

    /// `int z nu^i(dz)`.
    pub fn first_moment(&self, i: usize) -> f64 {
        let r = &self.regimes[i];
        if r.intensity == 0.0 {
            0.0
        } else {
            r.intensity * r.law.mean()
        }
    }

    /// `int z^2 nu^i(dz)`.
    pub fn second_moment(&self, i: usize) -> f64 {
        let r = &self.regimes[i];
        if r.intensity == 0.0 {
            0.0
        } else {
            r.intensity * r.law.second_moment()
        }
    }

    /// `int (ln(1 + z) - z) nu^i(dz)`.
    pub fn log_compensator(&self, i: usize) -> f64 {
        let r = &self.regimes[i];
        if r.intensity == 0.0 {
            0.0
        } else {
            r.intensity * (r.law.mean_log1p() - r.law.mean())
        }
    }

    /// `int z^2 / (1 + z) nu^i(dz)`, using `z^2/(1+z) = z - 1 + 1/(1+z)`.
    pub fn inverse_compensator(&self, i: usize) -> f64 {
        let r = &self.regimes[i];
        if r.intensity == 0.0 {
            0.0
        } else {
            r.intensity * (r.law.mean() - 1.0 + r.law.mean_inv1p())
        }
    }

    /// Whether `1 + z > 0` in every regime that has jumps.
    pub fn above_minus_one(&self) -> bool {
        self.regimes
            .iter()
            .all(|r| r.intensity == 0.0 || r.law.above_minus_one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::path_rng;
    use alloc::vec;

    fn laws() -> Vec<MarkLaw> {
        vec![
            MarkLaw::TwoPoint {
                low: -0.2,
                high: 0.15,
                p_high: 0.3,
            },
            MarkLaw::Uniform { low: -0.3, high: 0.2 },
            MarkLaw::LogNormal { mu: -0.05, sigma: 0.2 },
        ]
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for law in laws() {
            assert!((law.mean() - law.expect(|z| z)).abs() < 1e-12, "{law:?}");
            assert!((law.second_moment() - law.expect(|z| z * z)).abs() < 1e-12, "{law:?}");
            assert!(
                (law.mean_log1p() - law.expect(|z| (1.0 + z).ln())).abs() < 1e-12,
                "{law:?}"
            );
            assert!(
                (law.mean_inv1p() - law.expect(|z| 1.0 / (1.0 + z))).abs() < 1e-12,
                "{law:?}"
            );
        }
    }

    #[test]
    fn sample_means_agree() {
        let mut rng = path_rng(11);
        for law in laws() {
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            let est = crate::numeric::Estimate::from_samples(&xs);
            assert!(est.within(law.mean(), 4.0), "{law:?}: {est:?} vs {}", law.mean());
        }
    }

    #[test]
    fn validation() {
        assert!(MarkLaw::Uniform { low: 0.1, high: 0.1 }.validate().is_err());
        assert!(MarkLaw::TwoPoint {
            low: 0.0,
            high: 1.0,
            p_high: 1.5
        }
        .validate()
        .is_err());
        assert!(MarkLaw::LogNormal { mu: 0.0, sigma: -1.0 }.validate().is_err());
        assert!(LevyMeasureSpec::new(vec![RegimeJumps {
            intensity: -1.0,
            law: MarkLaw::Uniform { low: 0.0, high: 1.0 }
        }])
        .is_err());
    }

    #[test]
    fn minus_one_boundary() {
        assert!(!MarkLaw::Uniform { low: -1.0, high: 0.0 }.above_minus_one());
        assert!(MarkLaw::Uniform { low: -0.99, high: 0.0 }.above_minus_one());
        assert!(MarkLaw::LogNormal { mu: 0.0, sigma: 3.0 }.above_minus_one());
    }

    #[test]
    fn inverse_compensator_identity() {
        let spec = LevyMeasureSpec::uniform_across(
            1,
            RegimeJumps {
                intensity: 2.0,
                law: laws()[1],
            },
        )
        .unwrap();
        let direct = spec.integrate(0, |z| z * z / (1.0 + z));
        assert!((spec.inverse_compensator(0) - direct).abs() < 1e-12);
    }
}
