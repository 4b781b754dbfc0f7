//! Posterior decision rules computed from a finished chain.
//!
//! Every probability is the fraction of retained iterations (or bootstrap replicates)
//! on which an event holds. A null hypothesis is rejected when that fraction exceeds
//! one half. Thresholds ε come from null calibration: fit the same model to
//! datasets of the same shape with no group difference, pool the posterior draws of
//! the statistic and take the q-quantile.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::GenotypeDataset;
use crate::error::{Error, Result};
use crate::models::fit;
use crate::runtime::chain::RunControl;
use crate::runtime::config::RunConfig;
use crate::runtime::output::{ChainOutput, ModelKind};
use crate::runtime::schedule::Executor;
use crate::sim::{null_dataset, NullMode};
use crate::stats::{RngStream, Stage, StreamKey};

/// Calibration quantiles offered on the command line.
pub const QUANTILE_OPTIONS: [f64; 4] = [0.5, 0.55, 0.6, 0.75];

/// Minimum retained iterations for the subject interaction measure.
pub const MIN_INTERACTION_SAMPLES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMeta {
    pub seeds: Vec<u64>,
    pub quantile: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: String,
    pub probability: f64,
    pub threshold_name: String,
    pub threshold: f64,
    /// True when the null is rejected (or, for locus calls, the locus is flagged).
    pub reject: bool,
    pub decision: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationMeta>,
    /// Extra per-component values, e.g. each gene's P(d_j > ε) in the overall test.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
}

impl TestReport {
    fn new(test: String, statistic: &str, probability: f64, threshold_name: &str, threshold: f64, reject: bool) -> Self {
        let decision = if reject { "reject null" } else { "accept null" }.to_string();
        Self {
            test,
            statistic: statistic.to_string(),
            probability,
            threshold_name: threshold_name.to_string(),
            threshold,
            reject,
            decision,
            calibration: None,
            details: BTreeMap::new(),
            interval: None,
        }
    }

    pub fn with_calibration(mut self, meta: Option<&CalibrationMeta>) -> Self {
        self.calibration = meta.cloned();
        self
    }
}

fn fraction(values: impl Iterator<Item = bool>) -> Result<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for v in values {
        hit += usize::from(v);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, have: 0 });
    }
    Ok(hit as f64 / n as f64)
}

fn check_threshold(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v}")))
    }
}

fn gene_len(chain: &ChainOutput, j: usize) -> Result<usize> {
    chain
        .layout
        .loci_per_gene
        .get(j)
        .copied()
        .ok_or_else(|| Error::Index(format!("gene {j} of {}", chain.layout.n_genes())))
}

/// |p̄_{j,1,r} − p̄_{j,0,r}| per retained iteration, `[locus][iteration]`.
pub fn locus_differences(chain: &ChainOutput, j: usize) -> Result<Vec<Vec<f64>>> {
    let l = gene_len(chain, j)?;
    (0..l)
        .map(|r| {
            let case = chain.column(&format!("pbar.{j}.1.{r}"))?;
            let control = chain.column(&format!("pbar.{j}.0.{r}"))?;
            Ok(case.iter().zip(&control).map(|(a, b)| (a - b).abs()).collect())
        })
        .collect()
}

/// d_j = max_r |p̄_{j,1,r} − p̄_{j,0,r}| per retained iteration.
pub fn gene_distance_samples(chain: &ChainOutput, j: usize) -> Result<Vec<f64>> {
    let diffs = locus_differences(chain, j)?;
    let n = chain.n_retained();
    Ok((0..n).map(|s| diffs.iter().map(|d| d[s]).fold(0.0, f64::max)).collect())
}

/// d_max = max_j d_j per retained iteration.
pub fn overall_distance_samples(chain: &ChainOutput) -> Result<Vec<f64>> {
    let mut out = vec![0.0f64; chain.n_retained()];
    for j in 0..chain.layout.n_genes() {
        for (o, d) in out.iter_mut().zip(gene_distance_samples(chain, j)?) {
            *o = o.max(d);
        }
    }
    Ok(out)
}

pub fn gene_effect_test(chain: &ChainOutput, j: usize, eps: f64) -> Result<TestReport> {
    check_threshold("ε", eps)?;
    let d = gene_distance_samples(chain, j)?;
    let p = fraction(d.iter().map(|&x| x > eps))?;
    Ok(TestReport::new(format!("gene_effect.{j}"), "d_j", p, "epsilon", eps, p > 0.5))
}

/// Test on d_max; `details` holds each gene's own P(d_j > ε_j).
pub fn overall_genetic_effect_test(chain: &ChainOutput, eps: f64, gene_eps: &[f64]) -> Result<TestReport> {
    check_threshold("ε", eps)?;
    let d = overall_distance_samples(chain)?;
    let p = fraction(d.iter().map(|&x| x > eps))?;
    let mut rep = TestReport::new("overall_genetic_effect".into(), "d_max", p, "epsilon", eps, p > 0.5);
    for j in 0..chain.layout.n_genes() {
        let e = gene_eps.get(j).copied().unwrap_or(eps);
        rep.details.insert(format!("gene.{j}"), gene_effect_test(chain, j, e)?.probability);
    }
    Ok(rep)
}

/// Per-locus P(|p̄_case − p̄_control| > δ); a locus is flagged when this exceeds
/// `prob_threshold`.
pub fn dpl_identify(chain: &ChainOutput, j: usize, delta: f64, prob_threshold: f64) -> Result<Vec<TestReport>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("δ = {delta} must be positive")));
    }
    locus_differences(chain, j)?
        .iter()
        .enumerate()
        .map(|(r, d)| {
            let p = fraction(d.iter().map(|&x| x > delta))?;
            let mut rep = TestReport::new(format!("dpl.{j}.{r}"), "abs_freq_diff", p, "delta", delta, p > prob_threshold);
            rep.decision = if rep.reject { "flagged" } else { "not flagged" }.into();
            Ok(rep)
        })
        .collect()
}

fn a_name(a: usize, b: usize) -> String {
    let (lo, hi) = (a.min(b), a.max(b));
    format!("A.{lo}.{hi}")
}

/// ρ = A_{j1j2}/√(A_{j1j1} A_{j2j2}) per retained iteration.
pub fn interaction_correlation_samples(chain: &ChainOutput, j1: usize, j2: usize) -> Result<Vec<f64>> {
    if j1 == j2 {
        return Err(Error::InvalidParameter("interaction test needs two different genes".into()));
    }
    if chain.layout.model == ModelKind::Hdp {
        return Err(Error::InvalidParameter("the HDP model has no gene covariance matrix".into()));
    }
    let off = chain.column(&a_name(j1, j2))?;
    let d1 = chain.column(&a_name(j1, j1))?;
    let d2 = chain.column(&a_name(j2, j2))?;
    off.iter()
        .zip(d1.iter().zip(&d2))
        .map(|(&o, (&a, &b))| {
            if !(a > 0.0 && b > 0.0) || o * o > a * b * (1.0 + 1e-12) {
                return Err(Error::Internal(format!("non-SPD A sample: ({a}, {o}, {b})")));
            }
            Ok((o / (a * b).sqrt()).clamp(-1.0, 1.0))
        })
        .collect()
}

pub fn gg_interaction_test(chain: &ChainOutput, j1: usize, j2: usize, eps: f64) -> Result<TestReport> {
    check_threshold("ε_A", eps)?;
    let rho = interaction_correlation_samples(chain, j1, j2)?;
    let p = fraction(rho.iter().map(|r| r.abs() > eps))?;
    Ok(TestReport::new(format!("gg_interaction.{}.{}", j1.min(j2), j1.max(j2)), "abs_rho", p, "epsilon_A", eps, p > 0.5))
}

/// Which environmental coefficient vector a test looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvLevel {
    /// β_jk of the gene-environment model.
    GeneGroup(usize, usize),
    G,
    G0,
    H,
}

impl EnvLevel {
    pub fn name(self) -> String {
        match self {
            EnvLevel::GeneGroup(j, k) => format!("beta.{j}.{k}"),
            EnvLevel::G => "beta_G".into(),
            EnvLevel::G0 => "beta_G0".into(),
            EnvLevel::H => "beta_H".into(),
        }
    }

    /// Parses `G`, `G0`, `H` or `j.k`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "G" => Ok(EnvLevel::G),
            "G0" => Ok(EnvLevel::G0),
            "H" => Ok(EnvLevel::H),
            other => {
                let parts: Vec<&str> = other.split('.').collect();
                match parts.as_slice() {
                    [j, k] => match (j.parse(), k.parse()) {
                        (Ok(j), Ok(k)) if k < 2 => Ok(EnvLevel::GeneGroup(j, k)),
                        _ => Err(Error::Config(format!("environment level {other:?}"))),
                    },
                    _ => Err(Error::Config(format!("environment level {other:?} (expected G, G0, H or j.k)"))),
                }
            }
        }
    }
}

/// ‖β‖∞ per retained iteration.
pub fn env_norm_samples(chain: &ChainOutput, level: EnvLevel) -> Result<Vec<f64>> {
    let d = chain.layout.env_dim;
    if d == 0 {
        return Err(Error::EnvironmentRequired("environmental-coefficient test"));
    }
    let cols: Vec<Vec<f64>> = (0..d).map(|e| chain.column(&format!("{}.{e}", level.name()))).collect::<Result<_>>()?;
    Ok((0..chain.n_retained()).map(|s| cols.iter().map(|c| c[s].abs()).fold(0.0, f64::max)).collect())
}

/// P(‖β‖∞ < ε_β); the null of no environmental effect is kept when this exceeds 1/2.
pub fn env_coefficient_test(chain: &ChainOutput, level: EnvLevel, eps: f64) -> Result<TestReport> {
    check_threshold("ε_β", eps)?;
    let norms = env_norm_samples(chain, level)?;
    let p = fraction(norms.iter().map(|&b| b < eps))?;
    let mut rep = TestReport::new(format!("env_coefficient.{}", level.name()), "max_abs_beta_below", p, "epsilon_beta", eps, p <= 0.5);
    rep.decision = if rep.reject { "environmental effect" } else { "no environmental effect" }.into();
    Ok(rep)
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0)
}

fn abar_logits(chain: &ChainOutput, i: usize, j: usize) -> Result<Vec<f64>> {
    Ok(chain.column(&format!("abar.{i}.{j}"))?.into_iter().map(logit).collect())
}

fn check_subject(chain: &ChainOutput, i: usize, k: usize) -> Result<()> {
    if chain.layout.model != ModelKind::Hdp {
        return Err(Error::InvalidParameter("subject interaction needs an HDP chain".into()));
    }
    match chain.layout.subject_groups.get(i) {
        Some(&g) if g as usize == k => Ok(()),
        Some(&g) => Err(Error::InvalidParameter(format!("subject {i} is in group {g}, not {k}"))),
        None => Err(Error::Index(format!("subject {i}"))),
    }
}

/// C(i, j1, j2, k): across-iteration covariance of logit(ā_{ij1}) and logit(ā_{ij2}),
/// where ā is the mean of p over the loci and slots of subject i's restaurant.
pub fn subject_interaction_measure(chain: &ChainOutput, i: usize, j1: usize, j2: usize, k: usize) -> Result<f64> {
    check_subject(chain, i, k)?;
    let n = chain.n_retained();
    if n < MIN_INTERACTION_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_INTERACTION_SAMPLES, have: n });
    }
    Ok(covariance(&abar_logits(chain, i, j1)?, &abar_logits(chain, i, j2)?))
}

/// Moving-block bootstrap replicates of the covariance of two series.
pub fn block_bootstrap_covariance(x: &[f64], y: &[f64], replicates: usize, seed: u64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < MIN_INTERACTION_SAMPLES || y.len() != n {
        return Err(Error::InsufficientSamples { needed: MIN_INTERACTION_SAMPLES, have: n.min(y.len()) });
    }
    let block = ((n as f64).cbrt().ceil() as usize).max(1);
    let starts = n - block + 1;
    let mut out = Vec::with_capacity(replicates);
    let mut bx = Vec::with_capacity(n + block);
    let mut by = Vec::with_capacity(n + block);
    for b in 0..replicates {
        let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::Bootstrap, b, 0, 0, 0));
        bx.clear();
        by.clear();
        while bx.len() < n {
            let s = rng.index(starts);
            bx.extend_from_slice(&x[s..s + block]);
            by.extend_from_slice(&y[s..s + block]);
        }
        bx.truncate(n);
        by.truncate(n);
        out.push(covariance(&bx, &by));
    }
    Ok(out)
}

/// Block-bootstrap test of C(i, j1, j2, k) = 0: reject when P(|C| > ε_C) > 1/2 over
/// replicates; `interval` is the central 95% bootstrap interval.
pub fn hdp_subject_interaction_test(chain: &ChainOutput, i: usize, j1: usize, j2: usize, k: usize, eps: f64, seed: u64) -> Result<TestReport> {
    if j1 == j2 {
        return Err(Error::InvalidParameter("subject interaction test needs two different genes".into()));
    }
    check_threshold("ε_C", eps)?;
    let c = subject_interaction_measure(chain, i, j1, j2, k)?;
    let reps = block_bootstrap_covariance(&abar_logits(chain, i, j1)?, &abar_logits(chain, i, j2)?, 1000, seed)?;
    let p = fraction(reps.iter().map(|v| v.abs() > eps))?;
    let mut rep = TestReport::new(format!("subject_interaction.{i}.{j1}.{j2}.{k}"), "abs_C", p, "epsilon_C", eps, p > 0.5);
    let mut sorted = reps.clone();
    sorted.sort_by(f64::total_cmp);
    rep.interval = Some([quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975)]);
    rep.details.insert("C".into(), c);
    Ok(rep)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Empirical F⁻¹(q) = the smallest x with F(x) ≥ q.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, have: 0 });
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile {q}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, q))
}

/// Null-calibrated thresholds keyed by statistic name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: ModelKind,
    pub quantile: f64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub null_mode: NullMode,
    pub thresholds: BTreeMap<String, f64>,
}

impl Calibration {
    pub fn meta(&self) -> CalibrationMeta {
        CalibrationMeta { seeds: self.seeds.clone(), quantile: self.quantile }
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.thresholds
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("calibration has no threshold for {name}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration serializes")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Every calibrated statistic of a chain, pooled per name.
pub fn null_statistics(chain: &ChainOutput) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let n_genes = chain.layout.n_genes();
    for j in 0..n_genes {
        out.insert(format!("d.{j}"), gene_distance_samples(chain, j)?);
    }
    out.insert("d_max".into(), overall_distance_samples(chain)?);
    let d = chain.layout.env_dim;
    match chain.layout.model {
        ModelKind::Gg | ModelKind::Ge => {
            for j1 in 0..n_genes {
                for j2 in j1 + 1..n_genes {
                    let rho: Vec<f64> = interaction_correlation_samples(chain, j1, j2)?.iter().map(|r| r.abs()).collect();
                    out.insert(format!("rho.{j1}.{j2}"), rho);
                }
            }
            if chain.layout.model == ModelKind::Ge {
                for j in 0..n_genes {
                    for k in 0..2 {
                        let lev = EnvLevel::GeneGroup(j, k);
                        out.insert(lev.name(), env_norm_samples(chain, lev)?);
                    }
                }
            }
        }
        ModelKind::Hdp => {
            if d > 0 {
                for lev in [EnvLevel::G, EnvLevel::G0, EnvLevel::H] {
                    out.insert(lev.name(), env_norm_samples(chain, lev)?);
                }
            }
            if chain.n_retained() >= MIN_INTERACTION_SAMPLES && n_genes > 1 {
                let mut cs = Vec::new();
                for (i, &g) in chain.layout.subject_groups.iter().enumerate() {
                    for j1 in 0..n_genes {
                        for j2 in j1 + 1..n_genes {
                            cs.push(subject_interaction_measure(chain, i, j1, j2, g as usize)?.abs());
                        }
                    }
                }
                out.insert("C".into(), cs);
            }
        }
    }
    Ok(out)
}

/// Fits `cfg.model` to one null dataset per seed, made from `ds` as
/// `cfg.inference.null_mode` says, and returns ε = F⁻¹(q) for every statistic.
pub fn null_calibrate(ds: &GenotypeDataset, cfg: &RunConfig, seeds: &[u64], quantile: f64, exec: &Executor) -> Result<Calibration> {
    if seeds.is_empty() {
        return Err(Error::Config("null calibration needs at least one seed".into()));
    }
    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for &seed in seeds {
        let null = null_dataset(ds, cfg.inference.null_mode, seed)?;
        let mut c = cfg.clone();
        c.seed = seed;
        let chain = fit(&null, &c, exec, &RunControl::default())?;
        for (name, v) in null_statistics(&chain)? {
            pooled.entry(name).or_default().extend(v);
        }
    }
    let thresholds = pooled
        .into_iter()
        .map(|(k, v)| Ok((k, empirical_quantile(&v, quantile)?)))
        .collect::<Result<_>>()?;
    Ok(Calibration { model: cfg.model, quantile, seeds: seeds.to_vec(), null_mode: cfg.inference.null_mode, thresholds })
}

/// Gene, overall, interaction and environment tests at calibrated thresholds.
pub fn run_standard_tests(chain: &ChainOutput, cal: &Calibration, bootstrap_seed: u64) -> Result<Vec<TestReport>> {
    if cal.model != chain.layout.model {
        return Err(Error::Config(format!(
            "calibration is for the {} model but the chain is {}",
            cal.model.as_str(),
            chain.layout.model.as_str()
        )));
    }
    let meta = cal.meta();
    let n_genes = chain.layout.n_genes();
    let mut out = Vec::new();
    let mut gene_eps = Vec::new();
    for j in 0..n_genes {
        let eps = cal.get(&format!("d.{j}"))?;
        gene_eps.push(eps);
        out.push(gene_effect_test(chain, j, eps)?.with_calibration(Some(&meta)));
    }
    out.push(overall_genetic_effect_test(chain, cal.get("d_max")?, &gene_eps)?.with_calibration(Some(&meta)));
    match chain.layout.model {
        ModelKind::Gg | ModelKind::Ge => {
            for j1 in 0..n_genes {
                for j2 in j1 + 1..n_genes {
                    let eps = cal.get(&format!("rho.{j1}.{j2}"))?;
                    out.push(gg_interaction_test(chain, j1, j2, eps)?.with_calibration(Some(&meta)));
                }
            }
            if chain.layout.model == ModelKind::Ge {
                for j in 0..n_genes {
                    for k in 0..2 {
                        let lev = EnvLevel::GeneGroup(j, k);
                        out.push(env_coefficient_test(chain, lev, cal.get(&lev.name())?)?.with_calibration(Some(&meta)));
                    }
                }
            }
        }
        ModelKind::Hdp => {
            if chain.layout.env_dim > 0 {
                for lev in [EnvLevel::G, EnvLevel::G0, EnvLevel::H] {
                    out.push(env_coefficient_test(chain, lev, cal.get(&lev.name())?)?.with_calibration(Some(&meta)));
                }
            }
            if let Ok(eps) = cal.get("C") {
                for (i, &g) in chain.layout.subject_groups.iter().enumerate() {
                    for j1 in 0..n_genes {
                        for j2 in j1 + 1..n_genes {
                            out.push(
                                hdp_subject_interaction_test(chain, i, j1, j2, g as usize, eps, bootstrap_seed)?
                                    .with_calibration(Some(&meta)),
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    schema_version: u32,
    report: Vec<TestReport>,
}

/// Structured text: one `[[report]]` table per test.
pub fn reports_to_toml(reports: &[TestReport]) -> String {
    toml::to_string(&ReportFile { schema_version: 1, report: reports.to_vec() }).expect("reports serialize")
}

pub fn reports_from_toml(text: &str) -> Result<Vec<TestReport>> {
    let f: ReportFile = toml::from_str(text).map_err(|e| Error::Config(format!("report file: {e}")))?;
    Ok(f.report)
}

/// Fixed-width table for terminals.
pub fn summary_table(reports: &[TestReport]) -> String {
    let w = reports.iter().map(|r| r.test.len()).max().unwrap_or(4).max(4);
    let mut s = String::new();
    let _ = writeln!(s, "{:<w$}  {:>11}  {:>14}  {:>9}  decision", "test", "probability", "threshold", "value");
    for r in reports {
        let _ = writeln!(s, "{:<w$}  {:>11.4}  {:>14}  {:>9.4}  {}", r.test, r.probability, r.threshold_name, r.threshold, r.decision);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::output::Layout;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Chain with the given columns filled by `f(column, iteration)`.
    fn chain(model: ModelKind, loci: Vec<usize>, groups: Vec<u8>, env_dim: usize, cols: Vec<String>, n: usize, f: impl Fn(&str, usize) -> f64) -> ChainOutput {
        let layout = Layout { model, m: 3, loci_per_gene: loci, subject_groups: groups, env_dim };
        let mut c = ChainOutput::new(layout, 1, n as u64 + 1, 1, 1, cols.clone());
        for s in 0..n {
            c.sweeps.push(s as u64 + 1);
            c.samples.push(cols.iter().map(|name| f(name, s)).collect());
        }
        c
    }

    fn pbar_cols(loci: &[usize]) -> Vec<String> {
        let mut v = Vec::new();
        for (j, &l) in loci.iter().enumerate() {
            for k in 0..2 {
                for r in 0..l {
                    v.push(format!("pbar.{j}.{k}.{r}"));
                }
            }
        }
        v
    }

    #[test]
    fn identical_groups_give_zero_distance() {
        let c = chain(ModelKind::Gg, vec![2], vec![], 0, pbar_cols(&[2]), 50, |name, s| if name.ends_with(".0") { 0.3 } else { 0.1 + s as f64 * 1e-3 });
        let rep = gene_effect_test(&c, 0, 0.01).unwrap();
        assert_eq!(rep.probability, 0.0);
        assert!(!rep.reject);
    }

    #[test]
    fn decision_rule_and_dpl_examples() {
        // case frequency 0.4 above control at locus 0 on 98 of 100 iterations
        let c = chain(ModelKind::Gg, vec![2], vec![], 0, pbar_cols(&[2]), 100, |name, s| {
            if name == "pbar.0.1.0" && s >= 2 {
                0.6
            } else {
                0.2
            }
        });
        let rep = gene_effect_test(&c, 0, 0.1).unwrap();
        assert_abs_diff_eq!(rep.probability, 0.98);
        assert!(rep.reject);
        let dpl = dpl_identify(&c, 0, 0.1, 0.5).unwrap();
        assert_abs_diff_eq!(dpl[0].probability, 0.98);
        assert!(dpl[0].reject);
        assert_eq!(dpl[1].probability, 0.0);
        assert!(!dpl[1].reject);
        assert!(dpl_identify(&c, 0, 0.0, 0.5).is_err());
    }

    #[test]
    fn overall_distance_dominates_each_gene() {
        let loci = vec![2, 3];
        let c = chain(ModelKind::Gg, loci.clone(), vec![], 0, pbar_cols(&loci), 40, |name, s| {
            let h = name.bytes().map(|b| b as usize).sum::<usize>();
            ((h * 31 + s * 17) % 97) as f64 / 97.0
        });
        let dmax = overall_distance_samples(&c).unwrap();
        for j in 0..2 {
            for (a, b) in dmax.iter().zip(gene_distance_samples(&c, j).unwrap()) {
                assert!(*a >= b);
            }
        }
        let rep = overall_genetic_effect_test(&c, 0.2, &[0.2, 0.2]).unwrap();
        assert_eq!(rep.details.len(), 2);
    }

    #[test]
    fn monotone_in_thresholds() {
        let loci = vec![3];
        let c = chain(ModelKind::Gg, loci.clone(), vec![], 0, pbar_cols(&loci), 200, |name, s| {
            let h = name.bytes().map(|b| b as usize).sum::<usize>();
            ((h * 13 + s * 7) % 101) as f64 / 101.0
        });
        let mut last_g = 1.0;
        let mut last_d = vec![1.0; 3];
        for i in 1..50 {
            let t = i as f64 / 50.0;
            let g = gene_effect_test(&c, 0, t).unwrap().probability;
            assert!(g <= last_g);
            last_g = g;
            for (r, rep) in dpl_identify(&c, 0, t, 0.5).unwrap().iter().enumerate() {
                assert!(rep.probability <= last_d[r]);
                last_d[r] = rep.probability;
            }
        }
    }

    #[test]
    fn correlation_is_bounded_and_env_test_reads_beta() {
        let cols = vec!["A.0.0".into(), "A.0.1".into(), "A.1.1".into()];
        let c = chain(ModelKind::Gg, vec![1, 1], vec![], 0, cols, 30, |name, s| match name {
            "A.0.1" => 0.9 * (s as f64 / 30.0 - 0.5),
            _ => 1.0 + s as f64 / 30.0,
        });
        for r in interaction_correlation_samples(&c, 1, 0).unwrap() {
            assert!(r.abs() <= 1.0);
        }
        assert!(gg_interaction_test(&c, 0, 0, 0.1).is_err());
        let cols = vec!["beta_G.0".into(), "beta_H.0".into()];
        let c = chain(ModelKind::Hdp, vec![1], vec![], 1, cols, 20, |name, _| if name == "beta_G.0" { 0.0 } else { 0.8 });
        let g = env_coefficient_test(&c, EnvLevel::G, 0.1).unwrap();
        assert_eq!(g.probability, 1.0);
        assert_eq!(g.decision, "no environmental effect");
        let h = env_coefficient_test(&c, EnvLevel::H, 0.1).unwrap();
        assert_eq!(h.probability, 0.0);
        assert!(h.reject);
        assert_eq!(EnvLevel::parse("3.1").unwrap(), EnvLevel::GeneGroup(3, 1));
        assert!(EnvLevel::parse("3.2").is_err());
    }

    fn hdp_chain(n: usize, f: impl Fn(usize, usize) -> f64) -> ChainOutput {
        let cols = vec!["abar.0.0".into(), "abar.0.1".into(), "abar.0.2".into()];
        chain(ModelKind::Hdp, vec![1, 1, 1], vec![1], 0, cols, n, |name, s| f(name.as_bytes()[7] as usize - b'0' as usize, s))
    }

    #[test]
    fn subject_interaction_examples() {
        let stream = |j: usize, s: usize| {
            let mut r = RngStream::new(j as u64 + 1, s as u64);
            0.2 + 0.6 * r.uniform()
        };
        let c = hdp_chain(2000, stream);
        let var = subject_interaction_measure(&c, 0, 1, 1, 1).unwrap();
        assert!(var >= 0.0);
        // independent streams: C within 3 standard errors of zero
        let l0 = abar_logits(&c, 0, 0).unwrap();
        let l1 = abar_logits(&c, 0, 1).unwrap();
        let cv = subject_interaction_measure(&c, 0, 0, 1, 1).unwrap();
        let v0 = covariance(&l0, &l0);
        let v1 = covariance(&l1, &l1);
        let se = (v0 * v1 / 2000.0).sqrt();
        assert!(cv.abs() < 3.0 * se, "C = {cv}, se = {se}");
        // coupled: gene 2 copies gene 0
        let c2 = hdp_chain(500, |j, s| stream(if j == 2 { 0 } else { j }, s));
        let v = subject_interaction_measure(&c2, 0, 0, 0, 1).unwrap();
        assert_abs_diff_eq!(subject_interaction_measure(&c2, 0, 0, 2, 1).unwrap(), v, epsilon = 1e-12);
        assert!(hdp_subject_interaction_test(&c2, 0, 0, 2, 1, 0.5 * v, 3).unwrap().reject);
        assert!(!hdp_subject_interaction_test(&c2, 0, 0, 1, 1, 0.5 * v, 3).unwrap().reject);
        assert!(hdp_subject_interaction_test(&c2, 0, 1, 1, 1, 0.1, 3).is_err());
        assert!(matches!(
            subject_interaction_measure(&hdp_chain(9, stream), 0, 0, 1, 1),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(subject_interaction_measure(&c2, 0, 0, 1, 0).is_err());
    }

    #[test]
    fn uniform_quantile_and_monotonicity() {
        let v: Vec<f64> = (0..100_000).map(|i| (i as f64 + 0.5) / 100_000.0).collect();
        assert_abs_diff_eq!(empirical_quantile(&v, 0.55).unwrap(), 0.55, epsilon = 1e-4);
        let mut last = 0.0;
        for q in QUANTILE_OPTIONS {
            let e = empirical_quantile(&v, q).unwrap();
            assert!(e >= last);
            last = e;
        }
    }

    proptest! {
        #[test]
        fn probabilities_are_fractions(vals in proptest::collection::vec(0.0f64..1.0, 1..60), eps in 0.0f64..1.0) {
            let n = vals.len();
            let c = chain(ModelKind::Gg, vec![1], vec![], 0, pbar_cols(&[1]), n, |name, s| if name.contains(".1.") { vals[s] } else { 0.0 });
            let rep = gene_effect_test(&c, 0, eps).unwrap();
            let expect = vals.iter().filter(|&&v| v > eps).count() as f64 / n as f64;
            prop_assert!((0.0..=1.0).contains(&rep.probability));
            prop_assert_eq!(rep.probability, expect);
            prop_assert_eq!(rep.reject, rep.probability > 0.5);
        }
    }

    #[test]
    fn reports_round_trip_through_text() {
        let c = chain(ModelKind::Gg, vec![1], vec![], 0, pbar_cols(&[1]), 10, |_, s| s as f64 / 10.0);
        let mut rep = gene_effect_test(&c, 0, 0.1).unwrap();
        rep.calibration = Some(CalibrationMeta { seeds: vec![1, 2], quantile: 0.55 });
        let text = reports_to_toml(std::slice::from_ref(&rep));
        assert_eq!(reports_from_toml(&text).unwrap(), vec![rep.clone()]);
        assert!(summary_table(&[rep]).contains("gene_effect.0"));
    }
}
