//! Exact reference computations. Nothing here draws random numbers except
//! [`sample_crp_partition`], which is the sampler the exact law is checked against.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mixture::{pick_index, urn_assignment_probabilities, UnitData, UrnState};
use crate::stats::special::logsumexp;
use crate::stats::RngStream;

/// Finite mixture with fixed weights 1/M whose component frequencies are drawn from a
/// Dirichlet process with precision `alpha` and Beta(ν1, ν2) base measure, or iid from
/// the Beta when `alpha` is `None`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TinyModel {
    pub m: usize,
    pub nu1: f64,
    pub nu2: f64,
    pub alpha: Option<f64>,
    /// Grid points per frequency (odd, for Simpson's rule).
    pub grid: usize,
}

impl TinyModel {
    pub fn new(m: usize, nu1: f64, nu2: f64) -> Self {
        Self { m, nu1, nu2, alpha: None, grid: 101 }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }
}

/// Exact-to-grid posterior summaries of a tiny mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteForcePosterior {
    /// P(z_u = c), `[unit][component]`.
    pub allocation: Vec<Vec<f64>>,
    /// P(z_u = z_v).
    pub coallocation: Vec<Vec<f64>>,
    /// E[p_cr], `[component][locus]`.
    pub component_mean: Vec<Vec<f64>>,
    /// E[p_{z_u, r}]: the frequency of the unit's own component.
    pub unit_mean: Vec<Vec<f64>>,
    /// P(number of distinct frequency values among occupied components = c), index c.
    pub occupied: Vec<f64>,
}

/// Work done by the factorized enumeration: M^N allocations times M·L integrals of
/// `grid` points (times at most five tie patterns of the components).
pub const ORACLE_MAX_WORK: u128 = 100_000_000;

fn xlog(c: f64, ln: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * ln
    }
}

struct Quadrature {
    ln_x: Vec<f64>,
    ln_1mx: Vec<f64>,
    /// ln(Simpson weight × Beta density).
    ln_w: Vec<f64>,
    cache: HashMap<(u32, u32), f64>,
}

impl Quadrature {
    fn new(model: &TinyModel) -> Self {
        let g = model.grid;
        let h = 1.0 / (g - 1) as f64;
        let ln_b = crate::stats::special::ln_beta(model.nu1, model.nu2);
        let mut ln_x = Vec::with_capacity(g);
        let mut ln_1mx = Vec::with_capacity(g);
        let mut ln_w = Vec::with_capacity(g);
        for i in 0..g {
            let x = i as f64 * h;
            let simpson = if i == 0 || i == g - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let lx = x.ln();
            let l1 = (-x).ln_1p();
            ln_x.push(lx);
            ln_1mx.push(l1);
            ln_w.push((simpson * h / 3.0).ln() + xlog(model.nu1 - 1.0, lx) + xlog(model.nu2 - 1.0, l1) - ln_b);
        }
        Self { ln_x, ln_1mx, ln_w, cache: HashMap::new() }
    }

    /// ln ∫ p^s (1−p)^f Beta(p; ν1, ν2) dp.
    fn ln_integral(&mut self, s: u32, f: u32) -> f64 {
        if let Some(&v) = self.cache.get(&(s, f)) {
            return v;
        }
        let terms: Vec<f64> = (0..self.ln_x.len())
            .map(|i| self.ln_w[i] + xlog(s as f64, self.ln_x[i]) + xlog(f as f64, self.ln_1mx[i]))
            .collect();
        let v = logsumexp(&terms);
        self.cache.insert((s, f), v);
        v
    }
}

/// Enumerates every allocation and integrates the frequencies on a grid.
pub fn brute_force_posterior(data: &UnitData, model: &TinyModel) -> Result<BruteForcePosterior> {
    let n = data.n_units();
    let l = data.n_loci;
    let m = model.m;
    if m == 0 || m > 3 || n == 0 || n > 8 || l == 0 || l > 3 {
        return Err(Error::OracleTooLarge(format!("M = {m}, N = {n}, L = {l} (limits M ≤ 3, 1 ≤ N ≤ 8, 1 ≤ L ≤ 3)")));
    }
    if model.grid < 3 || model.grid % 2 == 0 {
        return Err(Error::InvalidParameter(format!("grid of {} points (need odd ≥ 3)", model.grid)));
    }
    if !(model.nu1 >= 1.0 && model.nu2 >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Beta({}, {}) has an unbounded density; the grid oracle needs ν ≥ 1",
            model.nu1, model.nu2
        )));
    }
    let work = (m as u128).pow(n as u32) * (m * l * model.grid) as u128;
    if work > ORACLE_MAX_WORK {
        return Err(Error::OracleTooLarge(format!("{work} grid evaluations")));
    }
    let mut quad = Quadrature::new(model);
    // tie patterns of the components with their prior probabilities
    let ties = match model.alpha {
        Some(a) => exact_crp_partition_probs(m, a)?,
        None => vec![((0..m).collect(), 1.0)],
    };
    let n_alloc = m.pow(n as u32);
    let mut z = vec![0usize; n];
    let mut ln_w = Vec::with_capacity(n_alloc * ties.len());
    let mut cond_mean = Vec::with_capacity(n_alloc * ties.len());
    for (tie, prior) in &ties {
        for code in 0..n_alloc {
            decode(code, m, &mut z);
            let mut s = vec![0u32; m * l];
            let mut f = vec![0u32; m * l];
            for (u, &zu) in z.iter().enumerate() {
                let k = tie[zu];
                for (r, &x) in data.unit(u).iter().enumerate() {
                    s[k * l + r] += x as u32;
                    f[k * l + r] += (data.trials - x) as u32;
                }
            }
            let n_values = tie.iter().max().map_or(0, |k| k + 1);
            let mut lw = prior.ln();
            let mut value_mean = vec![0.0; m * l];
            for i in 0..n_values * l {
                let base = quad.ln_integral(s[i], f[i]);
                lw += base;
                value_mean[i] = (quad.ln_integral(s[i] + 1, f[i]) - base).exp();
            }
            let mut mean = vec![0.0; m * l];
            for c in 0..m {
                mean[c * l..(c + 1) * l].copy_from_slice(&value_mean[tie[c] * l..(tie[c] + 1) * l]);
            }
            ln_w.push(lw);
            cond_mean.push((mean, tie));
        }
    }
    let ln_z = logsumexp(&ln_w);
    let mut out = BruteForcePosterior {
        allocation: vec![vec![0.0; m]; n],
        coallocation: vec![vec![0.0; n]; n],
        component_mean: vec![vec![0.0; l]; m],
        unit_mean: vec![vec![0.0; l]; n],
        occupied: vec![0.0; m + 1],
    };
    for (idx, (lw, (mean, tie))) in ln_w.iter().zip(&cond_mean).enumerate() {
        let w = (lw - ln_z).exp();
        decode(idx % n_alloc, m, &mut z);
        let mut used = vec![false; m];
        for u in 0..n {
            used[tie[z[u]]] = true;
            out.allocation[u][z[u]] += w;
            for v in 0..n {
                if z[u] == z[v] {
                    out.coallocation[u][v] += w;
                }
            }
            for r in 0..l {
                out.unit_mean[u][r] += w * mean[z[u] * l + r];
            }
        }
        for c in 0..m {
            for r in 0..l {
                out.component_mean[c][r] += w * mean[c * l + r];
            }
        }
        out.occupied[used.iter().filter(|&&b| b).count()] += w;
    }
    Ok(out)
}

fn decode(mut code: usize, m: usize, z: &mut [usize]) {
    for zu in z.iter_mut() {
        *zu = code % m;
        code /= m;
    }
}

/// Every set partition of {0..n} as a restricted growth string, with its probability
/// under a Chinese restaurant process: α^K Π(|b| − 1)! / Π_{i<n}(α + i).
pub fn exact_crp_partition_probs(n: usize, alpha: f64) -> Result<Vec<(Vec<usize>, f64)>> {
    if n == 0 || n > 8 {
        return Err(Error::OracleTooLarge(format!("n = {n} (need 1 ≤ n ≤ 8)")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("α = {alpha}")));
    }
    let denom: f64 = (0..n).map(|i| alpha + i as f64).product();
    let mut out = Vec::new();
    let mut rgs = vec![0usize; n];
    loop {
        let k = rgs.iter().max().unwrap() + 1;
        let mut sizes = vec![0usize; k];
        for &b in &rgs {
            sizes[b] += 1;
        }
        let fact: f64 = sizes.iter().map(|&s| (1..s).map(|x| x as f64).product::<f64>()).product();
        out.push((rgs.clone(), alpha.powi(k as i32) * fact / denom));
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            let max_prefix = rgs[..i].iter().max().copied().unwrap_or(0);
            if rgs[i] <= max_prefix {
                rgs[i] += 1;
                for x in &mut rgs[i + 1..] {
                    *x = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Seats n customers one at a time with the dp-mixture urn; labels are table
/// opening order, so the result is a restricted growth string.
pub fn sample_crp_partition(n: usize, alpha: f64, rng: &mut RngStream) -> Result<Vec<usize>> {
    let u: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    crp_partition_from_uniforms(alpha, &u)
}

/// The sequential urn driven by given uniforms, one per customer. With iid U(0, 1)
/// input this is [`sample_crp_partition`]; a low-discrepancy point set gives the same
/// law with far less sampling noise.
pub fn crp_partition_from_uniforms(alpha: f64, u: &[f64]) -> Result<Vec<usize>> {
    let n = u.len();
    let mut urn = UrnState { counts: Vec::new(), ln_alpha: alpha.ln() };
    let mut labels = Vec::with_capacity(n);
    for &ui in u {
        let probs = urn_assignment_probabilities(&urn)?;
        let t = pick_index(&probs, ui);
        if t == urn.counts.len() {
            urn.counts.push(0);
        }
        urn.counts[t] += 1;
        labels.push(t);
    }
    Ok(labels)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov distribution
/// and the usual small-sample correction of the argument.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, have: 0 });
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter("NaN in KS sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    Ok(KsResult { statistic: d, p_value: kolmogorov_q(lambda) })
}

/// Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn single_chromosome_posterior_mean() {
        let data = UnitData::new(1, 1, vec![1]).unwrap();
        let post = brute_force_posterior(&data, &TinyModel::new(1, 1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(post.component_mean[0][0], 2.0 / 3.0, epsilon = 1e-8);
    }

    #[test]
    fn symmetric_data_give_symmetric_allocations() {
        let data = UnitData::new(2, 2, vec![2, 0, 0, 2, 1, 1]).unwrap();
        let post = brute_force_posterior(&data, &TinyModel::new(2, 1.0, 1.0)).unwrap();
        for u in 0..3 {
            assert_abs_diff_eq!(post.allocation[u][0], 0.5, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(post.component_mean[0][0], post.component_mean[1][0], epsilon = 1e-12);
        assert_abs_diff_eq!(post.occupied.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_refinement_is_converged() {
        let data = UnitData::new(2, 2, vec![2, 0, 1, 2, 0, 0, 1, 1]).unwrap();
        let coarse = brute_force_posterior(&data, &TinyModel { grid: 101, ..TinyModel::new(2, 2.0, 1.0) }).unwrap();
        let fine = brute_force_posterior(&data, &TinyModel { grid: 201, ..TinyModel::new(2, 2.0, 1.0) }).unwrap();
        for u in 0..4 {
            for r in 0..2 {
                assert!((coarse.unit_mean[u][r] - fine.unit_mean[u][r]).abs() < 1e-4);
            }
            for v in 0..4 {
                assert!((coarse.coallocation[u][v] - fine.coallocation[u][v]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn tie_limits() {
        let data = UnitData::new(2, 2, vec![2, 0, 0, 2, 1, 1]).unwrap();
        let merged = brute_force_posterior(&data, &TinyModel::new(3, 1.0, 2.0).with_alpha(1e-12)).unwrap();
        let single = brute_force_posterior(&data, &TinyModel::new(1, 1.0, 2.0)).unwrap();
        let free = brute_force_posterior(&data, &TinyModel::new(3, 1.0, 2.0).with_alpha(1e12)).unwrap();
        let iid = brute_force_posterior(&data, &TinyModel::new(3, 1.0, 2.0)).unwrap();
        for u in 0..3 {
            for r in 0..2 {
                assert_abs_diff_eq!(merged.unit_mean[u][r], single.unit_mean[u][r], epsilon = 1e-9);
                assert_abs_diff_eq!(free.unit_mean[u][r], iid.unit_mean[u][r], epsilon = 1e-9);
            }
        }
        assert_abs_diff_eq!(merged.occupied[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn two_unit_tie_by_hand() {
        // M = 2, α = 1, one unit per component pattern; L = 1, ν = (1, 1), one trial each.
        // Patterns: tied (prob 1/2) or distinct (1/2); allocations uniform over 4.
        // Unit data x = (1, 0). Same value: ∫p(1−p) = 1/6. Different values: 1/2·1/2 = 1/4.
        let data = UnitData::new(1, 1, vec![1, 0]).unwrap();
        let post = brute_force_posterior(&data, &TinyModel::new(2, 1.0, 1.0).with_alpha(1.0)).unwrap();
        // weights: tied → every z gives 1/6; distinct → same component 1/6, split 1/4
        let tied = 4.0 / 6.0;
        let distinct = 2.0 / 6.0 + 2.0 / 4.0;
        let two = 0.5 * 2.0 / 4.0 / (0.5 * tied + 0.5 * distinct);
        assert_abs_diff_eq!(post.occupied[2], two, epsilon = 1e-9);
    }

    #[test]
    fn size_bound_and_prior_limits() {
        let data = UnitData::new(1, 1, vec![0; 9]).unwrap();
        assert!(matches!(brute_force_posterior(&data, &TinyModel::new(2, 1.0, 1.0)), Err(Error::OracleTooLarge(_))));
        let data = UnitData::new(1, 1, vec![0]).unwrap();
        assert!(brute_force_posterior(&data, &TinyModel::new(1, 0.5, 1.0)).is_err());
    }

    #[test]
    fn crp_partition_examples() {
        let one = exact_crp_partition_probs(1, 0.7).unwrap();
        assert_eq!(one, vec![(vec![0], 1.0)]);
        let two = exact_crp_partition_probs(2, 1.0).unwrap();
        assert_eq!(two.len(), 2);
        assert_abs_diff_eq!(two[0].1, 0.5);
        assert_abs_diff_eq!(two[1].1, 0.5);
        // Bell numbers
        assert_eq!(exact_crp_partition_probs(6, 1.0).unwrap().len(), 203);
        assert_eq!(exact_crp_partition_probs(8, 1.0).unwrap().len(), 4140);
        assert!(exact_crp_partition_probs(9, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn crp_probabilities_normalize(n in 1usize..=8, alpha in 0.05f64..20.0) {
            let total: f64 = exact_crp_partition_probs(n, alpha).unwrap().iter().map(|p| p.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ks_detects_shift_and_accepts_same_law() {
        let mut rng = RngStream::new(1, 1);
        let a: Vec<f64> = (0..500).map(|_| rng.uniform()).collect();
        let b: Vec<f64> = (0..500).map(|_| rng.uniform()).collect();
        let c: Vec<f64> = (0..500).map(|_| rng.uniform() + 0.2).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
        assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-6);
        let same = ks_two_sample(&a, &a).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098
        assert_abs_diff_eq!(kolmogorov_q(1.36), 0.0494, epsilon = 5e-4);
        assert_abs_diff_eq!(kolmogorov_q(1.63), 0.0098, epsilon = 5e-4);
    }
}
