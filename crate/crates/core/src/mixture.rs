//! Finite mixtures with fixed weights 1/M over Bernoulli allele data, Polya-urn
//! predictive probabilities and lazily extended stick-breaking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::dist::{beta_log, LogFreq};
use crate::stats::special::{ln_beta, ln_gamma, log_rising, logaddexp, logsumexp};
use crate::stats::RngStream;

/// Genotype units of one block. Each unit carries a minor-allele count per locus out
/// of `trials` Bernoulli draws (2 for a whole subject, 1 for a single chromosome).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitData {
    pub n_loci: usize,
    pub trials: u8,
    pub counts: Vec<u8>,
}

impl UnitData {
    pub fn new(n_loci: usize, trials: u8, counts: Vec<u8>) -> Result<Self> {
        if n_loci == 0 || counts.len() % n_loci != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} counts do not split into units of {n_loci} loci",
                counts.len()
            )));
        }
        if counts.iter().any(|&c| c > trials) {
            return Err(Error::InvalidParameter(format!("count exceeds {trials} trials")));
        }
        Ok(Self {
            n_loci,
            trials,
            counts,
        })
    }

    pub fn n_units(&self) -> usize {
        self.counts.len() / self.n_loci
    }

    pub fn unit(&self, u: usize) -> &[u8] {
        &self.counts[u * self.n_loci..(u + 1) * self.n_loci]
    }
}

/// Log-likelihood of one unit under a component's frequency vector.
#[inline]
pub fn unit_log_lik(x: &[u8], trials: u8, freq: &[LogFreq]) -> f64 {
    let t = trials as f64;
    x.iter()
        .zip(freq)
        .map(|(&c, f)| {
            let c = c as f64;
            c * f.ln_p + (t - c) * f.ln_q
        })
        .sum()
}

/// Posterior allocation probabilities of one unit over the M components. With equal
/// weights the prior cancels and only likelihood ratios matter.
pub fn allocation_probabilities(x: &[u8], trials: u8, freq: &[LogFreq], m: usize) -> Result<Vec<f64>> {
    if m == 0 || freq.len() != m * x.len() {
        return Err(Error::InvalidParameter(format!(
            "{} frequencies for {m} components of {} loci",
            freq.len(),
            x.len()
        )));
    }
    let l = x.len();
    let ll: Vec<f64> = (0..m)
        .map(|c| unit_log_lik(x, trials, &freq[c * l..(c + 1) * l]))
        .collect();
    normalize_log(&ll)
}

/// exp-normalise a vector of log weights.
pub fn normalize_log(ll: &[f64]) -> Result<Vec<f64>> {
    let z = logsumexp(ll);
    if !z.is_finite() {
        return Err(Error::Internal(format!("allocation weights cannot be normalised: {ll:?}")));
    }
    Ok(ll.iter().map(|v| (v - z).exp()).collect())
}

/// Index drawn from log weights by inversion.
pub fn sample_log_weights(ll: &[f64], rng: &mut RngStream) -> Result<usize> {
    let probs = normalize_log(ll)?;
    Ok(sample_probs(&probs, rng))
}

pub fn sample_probs(probs: &[f64], rng: &mut RngStream) -> usize {
    pick_index(probs, rng.uniform())
}

/// Inversion of a probability vector at the uniform deviate `u`.
pub fn pick_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the running total; take the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Conjugate update of a Beta(ν1, ν2) frequency after `s` successes in `n` trials.
pub fn component_posterior_update(nu1: f64, nu2: f64, s: u64, n: u64) -> Result<(f64, f64)> {
    if s > n {
        return Err(Error::InvalidParameter(format!("{s} successes in {n} trials")));
    }
    if !(nu1 > 0.0 && nu2 > 0.0) {
        return Err(Error::InvalidParameter(format!("Beta({nu1}, {nu2})")));
    }
    Ok((nu1 + s as f64, nu2 + (n - s) as f64))
}

/// Allocations and component frequencies of one block.
///
/// The M frequency vectors are draws from a Dirichlet process with Beta base measure,
/// so components can share a value. `cluster[c]` labels the distinct value used by
/// component c and every member of a cluster stores the same frequencies. With
/// `alpha = None` the components are independent Beta draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    pub m: usize,
    pub n_loci: usize,
    pub z: Vec<usize>,
    /// `[component][locus]`, flattened.
    pub freq: Vec<LogFreq>,
    pub occupancy: Vec<usize>,
    /// Cluster label in 0..M of each component.
    pub cluster: Vec<usize>,
    pub alpha: Option<f64>,
}

impl MixtureState {
    /// Uniform random allocations; component ties from the Polya urn and one
    /// Beta(ν1_r, ν2_r) draw per distinct value.
    pub fn init(m: usize, n_units: usize, nu1: &[f64], nu2: &[f64], alpha: Option<f64>, rng: &mut RngStream) -> Self {
        let n_loci = nu1.len();
        let z: Vec<usize> = (0..n_units).map(|_| rng.index(m)).collect();
        let mut occupancy = vec![0; m];
        for &c in &z {
            occupancy[c] += 1;
        }
        let mut cluster: Vec<usize> = (0..m).collect();
        if let Some(a) = alpha {
            let mut size = vec![0usize; m];
            for c in 0..m {
                let mut w: Vec<f64> = size.iter().map(|&n| n as f64).collect();
                w[c] = a;
                let t = w.iter().sum::<f64>();
                let probs: Vec<f64> = w.iter().map(|v| v / t).collect();
                let k = sample_probs(&probs, rng);
                cluster[c] = k;
                size[k] += 1;
            }
        }
        let mut value: Vec<Option<Vec<LogFreq>>> = vec![None; m];
        let mut freq = Vec::with_capacity(m * n_loci);
        for &k in &cluster {
            let v = value[k].get_or_insert_with(|| (0..n_loci).map(|r| beta_log(nu1[r], nu2[r], rng)).collect());
            freq.extend_from_slice(v);
        }
        Self {
            m,
            n_loci,
            z,
            freq,
            occupancy,
            cluster,
            alpha,
        }
    }

    pub fn component(&self, c: usize) -> &[LogFreq] {
        &self.freq[c * self.n_loci..(c + 1) * self.n_loci]
    }

    /// Distinct frequency values among components holding at least one unit: the
    /// number of subpopulations represented in the data.
    pub fn occupied(&self) -> usize {
        let mut seen = vec![false; self.m];
        for c in 0..self.m {
            if self.occupancy[c] > 0 {
                seen[self.cluster[c]] = true;
            }
        }
        seen.iter().filter(|&&b| b).count()
    }

    /// Components holding at least one unit.
    pub fn occupied_components(&self) -> usize {
        self.occupancy.iter().filter(|&&n| n > 0).count()
    }

    /// Distinct frequency values over all M components.
    pub fn n_values(&self) -> usize {
        self.representatives().len()
    }

    /// First component of every cluster, in component order.
    fn representatives(&self) -> Vec<usize> {
        let mut seen = vec![false; self.m];
        let mut out = Vec::new();
        for c in 0..self.m {
            if !seen[self.cluster[c]] {
                seen[self.cluster[c]] = true;
                out.push(c);
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let mut occ = vec![0; self.m];
        for &c in &self.z {
            if c >= self.m {
                return Err(Error::Internal(format!("allocation {c} out of range")));
            }
            occ[c] += 1;
        }
        if occ != self.occupancy {
            return Err(Error::Internal("occupancy counts disagree with allocations".into()));
        }
        if self.freq.iter().any(|f| !(f.p > 0.0 && f.p < 1.0)) {
            return Err(Error::Internal("frequency outside (0, 1)".into()));
        }
        if self.cluster.len() != self.m || self.cluster.iter().any(|&k| k >= self.m) {
            return Err(Error::Internal("cluster labels out of range".into()));
        }
        if self.alpha.is_none() && self.n_values() != self.m {
            return Err(Error::Internal("independent components share a cluster".into()));
        }
        let l = self.n_loci;
        let mut rep = vec![usize::MAX; self.m];
        for c in 0..self.m {
            let k = self.cluster[c];
            if rep[k] == usize::MAX {
                rep[k] = c;
            } else if self.freq[c * l..(c + 1) * l] != self.freq[rep[k] * l..(rep[k] + 1) * l] {
                return Err(Error::Internal(format!("components {} and {c} share a cluster but not frequencies", rep[k])));
            }
        }
        Ok(())
    }

    pub fn gibbs_allocation_update(&mut self, data: &UnitData, rng: &mut RngStream) -> Result<()> {
        let l = self.n_loci;
        let mut ll = vec![0.0; self.m];
        for u in 0..data.n_units() {
            let x = data.unit(u);
            for (c, v) in ll.iter_mut().enumerate() {
                *v = unit_log_lik(x, data.trials, &self.freq[c * l..(c + 1) * l]);
            }
            let c = sample_log_weights(&ll, rng)?;
            let old = self.z[u];
            self.occupancy[old] -= 1;
            self.occupancy[c] += 1;
            self.z[u] = c;
        }
        Ok(())
    }

    /// Minor-allele counts per (component, locus).
    pub fn successes(&self, data: &UnitData) -> Vec<u32> {
        let l = self.n_loci;
        let mut s = vec![0u32; self.m * l];
        for (u, &c) in self.z.iter().enumerate() {
            for (r, &x) in data.unit(u).iter().enumerate() {
                s[c * l + r] += x as u32;
            }
        }
        s
    }

    /// Redraws the frequencies given the allocations. Under the Dirichlet process each
    /// component is first reseated among the distinct values (an existing value with
    /// weight equal to its other members times the likelihood of the component's data,
    /// a new value with weight α times the Beta-Binomial marginal), then every distinct
    /// value is drawn from its conjugate Beta posterior given the pooled data.
    pub fn update_p_given_z(&mut self, data: &UnitData, nu1: &[f64], nu2: &[f64], rng: &mut RngStream) {
        let l = self.n_loci;
        let t = data.trials as f64;
        let s = self.successes(data);
        let n: Vec<f64> = self.occupancy.iter().map(|&o| o as f64 * t).collect();
        if let Some(alpha) = self.alpha {
            let ln_alpha = alpha.ln();
            let prior_ln_b: Vec<f64> = (0..l).map(|r| ln_beta(nu1[r], nu2[r])).collect();
            let mut size = vec![0usize; self.m];
            for &k in &self.cluster {
                size[k] += 1;
            }
            // value of each live cluster, read from any member
            let mut value: Vec<Vec<LogFreq>> = vec![Vec::new(); self.m];
            for c in 0..self.m {
                if value[self.cluster[c]].is_empty() {
                    value[self.cluster[c]] = self.freq[c * l..(c + 1) * l].to_vec();
                }
            }
            let mut labels = Vec::with_capacity(self.m + 1);
            let mut lw = Vec::with_capacity(self.m + 1);
            for c in 0..self.m {
                let old = self.cluster[c];
                size[old] -= 1;
                if size[old] == 0 {
                    value[old].clear();
                }
                let sc = &s[c * l..(c + 1) * l];
                labels.clear();
                lw.clear();
                for k in 0..self.m {
                    if size[k] > 0 {
                        let mut w = (size[k] as f64).ln();
                        if n[c] > 0.0 {
                            for r in 0..l {
                                let x = sc[r] as f64;
                                w += x * value[k][r].ln_p + (n[c] - x) * value[k][r].ln_q;
                            }
                        }
                        labels.push(k);
                        lw.push(w);
                    }
                }
                let mut w_new = ln_alpha;
                if n[c] > 0.0 {
                    for r in 0..l {
                        let x = sc[r] as f64;
                        w_new += ln_beta(nu1[r] + x, nu2[r] + n[c] - x) - prior_ln_b[r];
                    }
                }
                lw.push(w_new);
                // log weights are finite: every ln p, ln q is finite and α > 0
                let pick = sample_log_weights(&lw, rng).unwrap_or(lw.len() - 1);
                let k = if pick < labels.len() {
                    labels[pick]
                } else {
                    let free = (0..self.m).find(|&k| size[k] == 0).expect("a free label exists while c is unseated");
                    value[free] = (0..l)
                        .map(|r| {
                            let x = sc[r] as f64;
                            beta_log(nu1[r] + x, nu2[r] + n[c] - x, rng)
                        })
                        .collect();
                    free
                };
                self.cluster[c] = k;
                size[k] += 1;
            }
            let mut ps = vec![0.0; self.m * l];
            let mut pn = vec![0.0; self.m];
            for c in 0..self.m {
                let k = self.cluster[c];
                pn[k] += n[c];
                for r in 0..l {
                    ps[k * l + r] += s[c * l + r] as f64;
                }
            }
            for k in 0..self.m {
                if size[k] > 0 {
                    for r in 0..l {
                        let x = ps[k * l + r];
                        value[k][r] = beta_log(nu1[r] + x, nu2[r] + pn[k] - x, rng);
                    }
                }
            }
            for c in 0..self.m {
                self.freq[c * l..(c + 1) * l].copy_from_slice(&value[self.cluster[c]]);
            }
        } else {
            for c in 0..self.m {
                for r in 0..l {
                    let sc = s[c * l + r] as f64;
                    self.freq[c * l + r] = beta_log(nu1[r] + sc, nu2[r] + n[c] - sc, rng);
                }
            }
        }
    }

    /// Occupancy-weighted mean frequency at each locus.
    pub fn weighted_mean(&self) -> Vec<f64> {
        let n: usize = self.occupancy.iter().sum();
        let l = self.n_loci;
        let mut out = vec![0.0; l];
        if n == 0 {
            return out;
        }
        for c in 0..self.m {
            let w = self.occupancy[c] as f64 / n as f64;
            if w > 0.0 {
                for r in 0..l {
                    out[r] += w * self.freq[c * l + r].p;
                }
            }
        }
        out
    }

    /// Σ ln p_r and Σ ln(1 − p_r) per locus over the distinct values.
    pub fn log_sums(&self) -> (Vec<f64>, Vec<f64>) {
        let l = self.n_loci;
        let mut s1 = vec![0.0; l];
        let mut s2 = vec![0.0; l];
        for c in self.representatives() {
            for r in 0..l {
                s1[r] += self.freq[c * l + r].ln_p;
                s2[r] += self.freq[c * l + r].ln_q;
            }
        }
        (s1, s2)
    }

    /// ln p(data | z, p) + ln p(z) with weights 1/M, plus the Polya-urn probability
    /// of the component ties.
    pub fn log_lik(&self, data: &UnitData) -> f64 {
        let l = self.n_loci;
        let mut total = -(self.z.len() as f64) * (self.m as f64).ln();
        for (u, &c) in self.z.iter().enumerate() {
            total += unit_log_lik(data.unit(u), data.trials, &self.freq[c * l..(c + 1) * l]);
        }
        total + self.tie_log_prior()
    }

    /// ln of the Ewens probability of the cluster partition of the M components.
    pub fn tie_log_prior(&self) -> f64 {
        let Some(alpha) = self.alpha else {
            return 0.0;
        };
        let mut size = vec![0usize; self.m];
        for &k in &self.cluster {
            size[k] += 1;
        }
        let ln_alpha = alpha.ln();
        let mut t = -log_rising(ln_alpha, self.m);
        for &n in size.iter().filter(|&&n| n > 0) {
            t += ln_alpha + ln_gamma(n as f64);
        }
        t
    }
}

/// Table counts of one Chinese restaurant with precision α (held as ln α).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrnState {
    pub counts: Vec<usize>,
    pub ln_alpha: f64,
}

/// (existing tables…, new table) with probabilities n_t/(n+α) and α/(n+α).
pub fn urn_assignment_probabilities(urn: &UrnState) -> Result<Vec<f64>> {
    if urn.ln_alpha.is_nan() || urn.ln_alpha == f64::INFINITY {
        return Err(Error::InvalidParameter(format!("ln α = {}", urn.ln_alpha)));
    }
    let n: usize = urn.counts.iter().sum();
    let ln_denom = logaddexp((n as f64).ln(), urn.ln_alpha);
    let mut out: Vec<f64> = urn
        .counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { ((c as f64).ln() - ln_denom).exp() })
        .collect();
    out.push((urn.ln_alpha - ln_denom).exp());
    Ok(out)
}

/// Stick-breaking weights of a DP(α, base) draw, extended on demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StickBreaking<T> {
    pub alpha: f64,
    pub weights: Vec<f64>,
    /// Partial sums of `weights`.
    pub cumulative: Vec<f64>,
    pub atoms: Vec<T>,
    ln_remaining: f64,
    pub cap: usize,
}

pub const STICK_CAP: usize = 1_000_000;

impl<T: Clone> StickBreaking<T> {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("stick-breaking precision {alpha}")));
        }
        Ok(Self {
            alpha,
            weights: Vec::new(),
            cumulative: Vec::new(),
            atoms: Vec::new(),
            ln_remaining: 0.0,
            cap: STICK_CAP,
        })
    }

    fn extend<F: FnMut(&mut RngStream) -> T>(&mut self, base: &mut F, rng: &mut RngStream) -> Result<()> {
        if self.weights.len() >= self.cap {
            return Err(Error::StickExhaustion(self.cap));
        }
        let v = beta_log(1.0, self.alpha, rng);
        let w = (self.ln_remaining + v.ln_p).exp();
        self.ln_remaining += v.ln_q;
        self.weights.push(w);
        self.cumulative.push(-self.ln_remaining.exp_m1());
        self.atoms.push(base(rng));
        Ok(())
    }
}

/// Returns the first atom whose cumulative weight exceeds `u`, breaking new sticks
/// and drawing their atoms from `base` only as needed.
pub fn retrospective_draw<T: Clone, F: FnMut(&mut RngStream) -> T>(
    mut base: F,
    sb: &mut StickBreaking<T>,
    u: f64,
    rng: &mut RngStream,
) -> Result<(usize, T)> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidParameter(format!("u = {u} not in (0, 1)")));
    }
    let k = sb.cumulative.partition_point(|&c| c <= u);
    if k < sb.cumulative.len() {
        return Ok((k, sb.atoms[k].clone()));
    }
    loop {
        sb.extend(&mut base, rng)?;
        if *sb.cumulative.last().expect("just extended") > u {
            let k = sb.atoms.len() - 1;
            return Ok((k, sb.atoms[k].clone()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lf(ps: &[f64]) -> Vec<LogFreq> {
        ps.iter().map(|&p| LogFreq::new(p)).collect()
    }

    #[test]
    fn single_component() {
        let p = allocation_probabilities(&[1, 0], 1, &lf(&[0.3, 0.6]), 1).unwrap();
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn two_component_arithmetic() {
        let p = allocation_probabilities(&[1, 1], 1, &lf(&[0.9, 0.9, 0.1, 0.1]), 2).unwrap();
        assert_abs_diff_eq!(p[0], 0.81 / 0.82, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.01 / 0.82, epsilon = 1e-12);
        let p = allocation_probabilities(&[2, 0], 2, &lf(&[0.4, 0.7, 0.4, 0.7]), 2).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn dominant_component_is_chosen() {
        let data = UnitData::new(3, 2, vec![2, 2, 2]).unwrap();
        let mut rng = RngStream::new(0, 0);
        let mut st = MixtureState {
            m: 2,
            n_loci: 3,
            z: vec![1],
            freq: lf(&[0.999_999, 0.999_999, 0.999_999, 1e-6, 1e-6, 1e-6]),
            occupancy: vec![0, 1],
            cluster: vec![0, 1],
            alpha: None,
        };
        st.gibbs_allocation_update(&data, &mut rng).unwrap();
        assert_eq!(st.z, vec![0]);
        st.check().unwrap();
    }

    #[test]
    fn seeded_gibbs_is_reproducible() {
        let data = UnitData::new(2, 2, vec![0, 1, 2, 2, 1, 0, 0, 0]).unwrap();
        let run = || {
            let mut rng = RngStream::new(42, 1);
            let mut st = MixtureState::init(3, 4, &[1.0, 1.0], &[1.0, 1.0], Some(1.0), &mut rng);
            for _ in 0..50 {
                st.gibbs_allocation_update(&data, &mut rng).unwrap();
                st.update_p_given_z(&data, &[1.0, 1.0], &[1.0, 1.0], &mut rng);
            }
            st
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn tied_components_count_once() {
        let data = UnitData::new(2, 2, vec![0, 1, 2, 2, 1, 0, 0, 0, 2, 1]).unwrap();
        let mut rng = RngStream::new(9, 2);
        let nu = [1.0, 1.0];
        let mut st = MixtureState::init(3, 5, &nu, &nu, Some(0.7), &mut rng);
        st.cluster = vec![0, 0, 2];
        let shared = st.component(0).to_vec();
        st.freq = [shared.clone(), shared, st.component(2).to_vec()].concat();
        st.z = vec![0, 1, 1, 0, 1];
        st.occupancy = vec![2, 3, 0];
        st.check().unwrap();
        assert_eq!(st.occupied(), 1);
        assert_eq!(st.occupied_components(), 2);
        assert_eq!(st.n_values(), 2);
        // Ewens: α² · 1! · 0! / (α (α + 1) (α + 2))
        let a: f64 = 0.7;
        assert_abs_diff_eq!(st.tie_log_prior(), (a * a / (a * (a + 1.0) * (a + 2.0))).ln(), epsilon = 1e-12);
        for _ in 0..200 {
            st.gibbs_allocation_update(&data, &mut rng).unwrap();
            st.update_p_given_z(&data, &nu, &nu, &mut rng);
            st.check().unwrap();
            assert!(st.occupied() <= st.occupied_components());
        }
    }

    #[test]
    fn conjugate_updates() {
        assert_eq!(component_posterior_update(1.0, 1.0, 0, 0).unwrap(), (1.0, 1.0));
        assert_eq!(component_posterior_update(1.0, 1.0, 3, 4).unwrap(), (4.0, 2.0));
        let (a, b) = component_posterior_update(1.0, 1.0, 1, 1).unwrap();
        assert_abs_diff_eq!(a / (a + b), 2.0 / 3.0);
        assert!(component_posterior_update(1.0, 1.0, 5, 4).is_err());
    }

    #[test]
    fn urn_probabilities() {
        let p = urn_assignment_probabilities(&UrnState { counts: vec![], ln_alpha: 0.0 }).unwrap();
        assert_eq!(p, vec![1.0]);
        let p = urn_assignment_probabilities(&UrnState { counts: vec![2, 1], ln_alpha: 0.0 }).unwrap();
        for (a, b) in p.iter().zip([0.5, 0.25, 0.25]) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut last = 0.0;
        for k in -20..=60 {
            let la = k as f64 * 2.5;
            let p = urn_assignment_probabilities(&UrnState { counts: vec![3, 1, 4], ln_alpha: la }).unwrap();
            let new = *p.last().unwrap();
            assert!(new >= last);
            last = new;
        }
        assert!(last > 1.0 - 1e-12);
    }

    #[test]
    fn first_stick_covers_small_u() {
        let mut rng = RngStream::new(5, 5);
        let mut sb = StickBreaking::<u32>::new(1.0).unwrap();
        let mut next = 0;
        let (k, _) = retrospective_draw(|_| { next += 1; next }, &mut sb, 0.999, &mut rng).unwrap();
        let w0 = sb.weights[0];
        let (k0, a0) = retrospective_draw(|_| 0, &mut sb, w0 * 0.5, &mut rng).unwrap();
        assert_eq!((k0, a0), (0, 1));
        assert!(k < sb.atoms.len());
        let before = sb.atoms.len();
        retrospective_draw(|_| 0, &mut sb, w0 * 0.1, &mut rng).unwrap();
        assert_eq!(sb.atoms.len(), before);
    }

    #[test]
    fn stick_exhaustion_is_reported() {
        let mut rng = RngStream::new(5, 6);
        let mut sb = StickBreaking::<()>::new(1e9).unwrap();
        sb.cap = 1000;
        let e = retrospective_draw(|_| (), &mut sb, 0.9, &mut rng).unwrap_err();
        assert!(matches!(e, Error::StickExhaustion(1000)));
    }

    #[test]
    fn index_distribution_matches_realised_weights() {
        let mut rng = RngStream::new(77, 1);
        let mut sb = StickBreaking::<()>::new(2.0).unwrap();
        let n = 100_000;
        let mut hits: Vec<usize> = Vec::new();
        for _ in 0..n {
            let u = rng.uniform_open();
            let (k, _) = retrospective_draw(|_| (), &mut sb, u, &mut rng).unwrap();
            if hits.len() <= k {
                hits.resize(k + 1, 0);
            }
            hits[k] += 1;
        }
        let mut tv = 0.0;
        for (k, w) in sb.weights.iter().enumerate() {
            let h = hits.get(k).copied().unwrap_or(0) as f64 / n as f64;
            tv += (h - w).abs();
        }
        tv += 1.0 - sb.cumulative.last().unwrap();
        assert!(0.5 * tv < 0.01, "TV {}", 0.5 * tv);
    }

    proptest! {
        #[test]
        fn constant_likelihood_factor_cancels(
            x in proptest::collection::vec(0u8..=2, 3),
            ps in proptest::collection::vec(0.01f64..0.99, 12),
        ) {
            let f = lf(&ps);
            let p = allocation_probabilities(&x, 2, &f, 4).unwrap();
            // scaling every component's likelihood by the same factor leaves the output unchanged
            let l = x.len();
            let ll: Vec<f64> = (0..4).map(|c| unit_log_lik(&x, 2, &f[c * l..(c + 1) * l]) + 17.3).collect();
            let q = normalize_log(&ll).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn urn_closed_form(counts in proptest::collection::vec(0usize..20, 0..6), la in -5f64..5.0) {
            let p = urn_assignment_probabilities(&UrnState { counts: counts.clone(), ln_alpha: la }).unwrap();
            let n: usize = counts.iter().sum();
            let a = la.exp();
            for (t, &c) in counts.iter().enumerate() {
                prop_assert!((p[t] - c as f64 / (n as f64 + a)).abs() < 1e-12);
            }
            prop_assert!((p[counts.len()] - a / (n as f64 + a)).abs() < 1e-12);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn partial_sums_increase_below_one(alpha in 0.2f64..20.0, seed in 0u64..200) {
            let mut rng = RngStream::new(seed, 3);
            let mut sb = StickBreaking::<()>::new(alpha).unwrap();
            retrospective_draw(|_| (), &mut sb, 0.99, &mut rng).unwrap();
            for w in sb.cumulative.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
            prop_assert!(*sb.cumulative.last().unwrap() < 1.0);
        }
    }
}
