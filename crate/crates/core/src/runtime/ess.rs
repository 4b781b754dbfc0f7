//! Effective sample size by Geyer's initial positive sequence estimator.

use crate::error::{Error, Result};

pub const MIN_SERIES: usize = 100;

fn autocovariance(d: &[f64], lag: usize) -> f64 {
    let n = d.len();
    d[..n - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
}

/// ESS of a chain. Sums autocorrelation pairs Γ_m = ρ_{2m} + ρ_{2m+1} while they stay
/// positive, with the monotone correction applied to the pair sums.
pub fn effective_sample_size(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < MIN_SERIES {
        return Err(Error::InsufficientSamples { needed: MIN_SERIES, have: n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("series contains non-finite values".into()));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = autocovariance(&d, 0);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if var <= (1e-14 * scale).powi(2) {
        return Err(Error::InvalidParameter("series is constant; ESS undefined".into()));
    }
    let rho = |lag: usize| autocovariance(&d, lag) / var;
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    // τ = −1 + 2 Σ Γ_m
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    Ok(n as f64 / tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{dist::std_normal, RngStream};

    #[test]
    fn iid_series_has_ess_near_n() {
        let mut rng = RngStream::new(11, 0);
        let x: Vec<f64> = (0..10_000).map(|_| std_normal(&mut rng)).collect();
        let ess = effective_sample_size(&x).unwrap();
        assert!((ess / 1e4 - 1.0).abs() < 0.15, "ess {ess}");
    }

    #[test]
    fn ar1_matches_analytic_ess() {
        let rho = 0.9;
        let n = 100_000;
        let mut rng = RngStream::new(12, 0);
        let mut x = Vec::with_capacity(n);
        let mut cur = std_normal(&mut rng);
        for _ in 0..n {
            cur = rho * cur + (1.0 - rho * rho).sqrt() * std_normal(&mut rng);
            x.push(cur);
        }
        let ess = effective_sample_size(&x).unwrap();
        let expect = n as f64 * (1.0 - rho) / (1.0 + rho);
        assert!((ess / expect - 1.0).abs() < 0.2, "ess {ess} expected {expect}");
    }

    #[test]
    fn constant_and_short_series_are_rejected() {
        assert!(matches!(
            effective_sample_size(&[1.5; 500]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            effective_sample_size(&[0.0; 99]),
            Err(Error::InsufficientSamples { needed: 100, have: 99 })
        ));
    }
}
