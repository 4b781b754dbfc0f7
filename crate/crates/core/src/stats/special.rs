//! Log-domain special functions.

pub use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// log[B(ν1 + s, ν2 + f) / B(ν1, ν2)]: the marginal probability of one ordered
/// sequence with `s` successes and `f` failures under a Beta(ν1, ν2) frequency.
pub fn log_beta_bernoulli_marginal(s: u64, f: u64, nu1: f64, nu2: f64) -> Result<f64> {
    if !(nu1 > 0.0 && nu2 > 0.0) || !nu1.is_finite() || !nu2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Beta parameters must be positive and finite, got ({nu1}, {nu2})"
        )));
    }
    Ok(beta_bernoulli_unchecked(s as f64, f as f64, nu1, nu2))
}

pub(crate) fn beta_bernoulli_unchecked(s: f64, f: f64, nu1: f64, nu2: f64) -> f64 {
    if s == 0.0 && f == 0.0 {
        return 0.0;
    }
    if s + f <= 64.0 {
        // product form: exact chain rule for small counts
        let rise = |a: f64, n: f64| (0..n as usize).map(|i| (a + i as f64).ln()).sum::<f64>();
        return rise(nu1, s) + rise(nu2, f) - rise(nu1 + nu2, s + f);
    }
    ln_beta(nu1 + s, nu2 + f) - ln_beta(nu1, nu2)
}

/// Beta(a, b) log-density at a point given as (ln p, ln(1 − p)).
pub fn beta_ln_pdf(ln_p: f64, ln_q: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * ln_p + (b - 1.0) * ln_q - ln_beta(a, b)
}

/// Σ of Beta(a, b) log-densities over points summarised by Σ ln p, Σ ln(1 − p) and their count.
pub fn beta_ln_pdf_sum(sum_ln_p: f64, sum_ln_q: f64, n: usize, a: f64, b: f64) -> f64 {
    (a - 1.0) * sum_ln_p + (b - 1.0) * sum_ln_q - n as f64 * ln_beta(a, b)
}

pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// ln Γ(α + n) − ln Γ(α) = Σ_{i<n} ln(α + i), from ln α without forming α.
pub fn log_rising(ln_alpha: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if ln_alpha > 30.0 {
        let inv = (-ln_alpha).exp();
        return (0..n).map(|i| ln_alpha + (i as f64 * inv).ln_1p()).sum();
    }
    if ln_alpha < 0.0 && n > 64 {
        let a = ln_alpha.exp();
        return ln_gamma(a + n as f64) - ln_gamma(a);
    }
    let a = ln_alpha.exp();
    if n > 64 {
        return ln_gamma(a + n as f64) - ln_gamma(a);
    }
    (0..n).map(|i| (a + i as f64).ln()).sum()
}

/// Log-probability of a Chinese-restaurant configuration with `tables` tables and
/// `customers` customers, up to the table-size factor: T ln α − Σ_{i<n} ln(α + i).
pub fn crp_log_likelihood(ln_alpha: f64, tables: usize, customers: usize) -> f64 {
    tables as f64 * ln_alpha - log_rising(ln_alpha, customers)
}

/// ln(1 − e^x) for x ≤ 0.
pub fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}
