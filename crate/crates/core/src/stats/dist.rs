//! Seeded draws from the handful of distributions the samplers need.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use super::special::{ln_one_minus_exp, logaddexp};
use crate::error::{Error, Result};

/// Allele frequencies are kept inside [P_MIN, 1 − P_MIN].
pub const P_MIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dist {
    Beta { a: f64, b: f64 },
    Bernoulli { p: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Dist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Dist::Beta { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            Dist::Bernoulli { p } => (0.0..=1.0).contains(&p),
            Dist::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Dist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{self:?}")))
        }
    }
}

pub fn draw(dist: Dist, rng: &mut RngStream) -> Result<f64> {
    dist.validate()?;
    Ok(match dist {
        Dist::Beta { a, b } => beta_log(a, b, rng).p,
        Dist::Bernoulli { p } => {
            if rng.uniform() < p {
                1.0
            } else {
                0.0
            }
        }
        Dist::Normal { mean, sd } => mean + sd * std_normal(rng),
        Dist::Uniform { lo, hi } => lo + (hi - lo) * rng.uniform(),
    })
}

pub fn std_normal(rng: &mut RngStream) -> f64 {
    rng.sample(StandardNormal)
}

pub fn half_normal(scale: f64, rng: &mut RngStream) -> f64 {
    (scale * std_normal(rng)).abs()
}

pub fn chi_squared(df: f64, rng: &mut RngStream) -> f64 {
    ChiSquared::new(df)
        .expect("degrees of freedom checked by caller")
        .sample(rng)
}

/// ln of a Gamma(shape, 1) draw; stays finite for shapes far below 1.
pub fn ln_gamma_draw(shape: f64, rng: &mut RngStream) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0)
            .expect("shape checked by caller")
            .sample(rng)
            .ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0)
            .expect("shape checked by caller")
            .sample(rng);
        g.ln() + rng.uniform_open().ln() / shape
    }
}

/// A frequency drawn from a Beta distribution with both logs kept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFreq {
    pub p: f64,
    pub ln_p: f64,
    pub ln_q: f64,
}

impl LogFreq {
    pub fn new(p: f64) -> Self {
        let p = p.clamp(P_MIN, 1.0 - P_MIN);
        Self {
            p,
            ln_p: p.ln(),
            ln_q: (-p).ln_1p(),
        }
    }

    fn from_logs(ln_p: f64, ln_q: f64) -> Self {
        let lo = P_MIN.ln();
        let (ln_p, ln_q) = if ln_p < lo {
            (lo, ln_one_minus_exp(lo))
        } else if ln_q < lo {
            (ln_one_minus_exp(lo), lo)
        } else {
            (ln_p, ln_q)
        };
        Self {
            p: ln_p.exp(),
            ln_p,
            ln_q,
        }
    }
}

/// Beta(a, b) draw via two log-Gamma variates, clamped to [P_MIN, 1 − P_MIN].
pub fn beta_log(a: f64, b: f64, rng: &mut RngStream) -> LogFreq {
    let x = ln_gamma_draw(a, rng);
    let y = ln_gamma_draw(b, rng);
    let t = logaddexp(x, y);
    LogFreq::from_logs(x - t, y - t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn bernoulli_one_is_always_one() {
        let mut r = RngStream::new(1, 1);
        for _ in 0..1000 {
            assert_eq!(draw(Dist::Bernoulli { p: 1.0 }, &mut r).unwrap(), 1.0);
        }
    }

    #[test]
    fn uniform_support() {
        let mut r = RngStream::new(1, 2);
        for _ in 0..10_000 {
            let x = draw(Dist::Uniform { lo: -1.0, hi: 1.0 }, &mut r).unwrap();
            assert!((-1.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn beta_uniform_mean() {
        let mut r = RngStream::new(2, 3);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| draw(Dist::Beta { a: 1.0, b: 1.0 }, &mut r).unwrap())
            .collect();
        let (m, _) = moments(&xs);
        assert!((m - 0.5).abs() < 0.005, "{m}");
    }

    #[test]
    fn two_moment_checks() {
        // (dist, mean, variance); tolerance 5 standard errors
        let cases = [
            (Dist::Beta { a: 2.0, b: 5.0 }, 2.0 / 7.0, 10.0 / (49.0 * 8.0)),
            (Dist::Beta { a: 0.3, b: 0.6 }, 1.0 / 3.0, 0.18 / (0.81 * 1.9)),
            (Dist::Normal { mean: -1.0, sd: 2.0 }, -1.0, 4.0),
            (Dist::Uniform { lo: 2.0, hi: 5.0 }, 3.5, 0.75),
            (Dist::Bernoulli { p: 0.3 }, 0.3, 0.21),
        ];
        for (k, (d, mean, var)) in cases.iter().enumerate() {
            let mut r = RngStream::new(7, k as u64);
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| draw(*d, &mut r).unwrap()).collect();
            let (m, v) = moments(&xs);
            let se_m = (var / n as f64).sqrt();
            assert!((m - mean).abs() < 5.0 * se_m, "{d:?}: mean {m} vs {mean}");
            // variance of the sample variance, bounded via the fourth moment estimate
            let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
            let se_v = ((m4 - v * v) / n as f64).sqrt();
            assert!((v - var).abs() < 5.0 * se_v, "{d:?}: var {v} vs {var}");
        }
    }

    #[test]
    fn seeded_determinism() {
        let d = Dist::Beta { a: 0.7, b: 3.0 };
        let mut a = RngStream::new(5, 5);
        let mut b = RngStream::new(5, 5);
        for _ in 0..100 {
            assert_eq!(draw(d, &mut a).unwrap().to_bits(), draw(d, &mut b).unwrap().to_bits());
        }
    }

    #[test]
    fn invalid_parameters() {
        let mut r = RngStream::new(0, 0);
        assert!(draw(Dist::Beta { a: 0.0, b: 1.0 }, &mut r).is_err());
        assert!(draw(Dist::Bernoulli { p: 1.5 }, &mut r).is_err());
        assert!(draw(Dist::Normal { mean: 0.0, sd: -1.0 }, &mut r).is_err());
        assert!(draw(Dist::Uniform { lo: 1.0, hi: 1.0 }, &mut r).is_err());
    }

    #[test]
    fn tiny_shapes_stay_in_bounds() {
        let mut r = RngStream::new(9, 9);
        for _ in 0..1000 {
            let f = beta_log(1e-30, 1e-30, &mut r);
            assert!(f.p >= P_MIN && f.p <= 1.0 - P_MIN);
            assert!(f.ln_p.is_finite() && f.ln_q.is_finite());
            assert!(((f.ln_p.exp() + f.ln_q.exp()) - 1.0).abs() < 1e-9);
        }
    }
}
