//! Synthetic case-control data with planted truth, and exact oracles for testing
//! the samplers.
//!
//! Two generators are available. The subpopulation generator draws each subject's
//! membership in one of K latent subpopulations and then per-chromosome Bernoulli
//! genotypes, with optional disease-predisposing shifts in cases, a correlated
//! gene-gene coupling and environment-dependent frequencies. The HDP generator
//! draws a franchise from the hierarchical prior and genotypes from its atoms.

pub mod oracle;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Gene, GenotypeDataset, Group, Subject};
use crate::error::{Error, Result};
use crate::models::hdp::log_precision;
use crate::stats::dist::{beta_log, std_normal};
use crate::stats::special::logaddexp;
use crate::stats::{RngStream, Stage, StreamKey};

pub use oracle::{
    brute_force_posterior, exact_crp_partition_probs, ks_two_sample, sample_crp_partition, BruteForcePosterior,
    KsResult, TinyModel,
};

fn default_freq_range() -> [f64; 2] {
    [0.05, 0.5]
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    pub seed: u64,
    pub n_controls: usize,
    pub n_cases: usize,
    pub loci_per_gene: Vec<usize>,
    #[serde(default)]
    pub environment: EnvSpec,
    pub generator: Generator,
}

/// Environmental covariates: E_i ~ N(mean_k, sd²) per dimension, mean_k the group's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSpec {
    pub dim: usize,
    pub control_mean: f64,
    pub case_mean: f64,
    pub sd: f64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self { dim: 0, control_mean: 0.0, case_mean: 0.0, sd: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Subpopulation(SubpopSpec),
    Hdp(HdpSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubpopSpec {
    /// Number of subpopulations K.
    pub k: usize,
    /// Membership probabilities; uniform when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Range of the uniform draw for frequencies not given explicitly.
    #[serde(default = "default_freq_range")]
    pub freq_range: [f64; 2],
    /// Explicit frequencies `[subpopulation][global locus]`.
    #[serde(default)]
    pub frequencies: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub dpl: Vec<DplSpec>,
    #[serde(default)]
    pub coupling: Option<CouplingSpec>,
    #[serde(default)]
    pub env_effect: Option<EnvEffectSpec>,
}

/// Case frequency = control frequency + delta at one locus, in every subpopulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DplSpec {
    pub gene: usize,
    pub locus: usize,
    pub delta: f64,
}

/// Case subjects get logit shifts (η₁, η₂) ~ N(0, scale² [[1, ρ], [ρ, 1]]) shared by
/// all loci of the two genes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub genes: [usize; 2],
    pub rho: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

/// Logit shift βᵀE_i on every locus of the listed genes, in the listed groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvEffectSpec {
    pub genes: Vec<usize>,
    pub beta: Vec<f64>,
    #[serde(default = "both_groups")]
    pub groups: Vec<usize>,
}

fn both_groups() -> Vec<usize> {
    vec![0, 1]
}

fn default_m() -> usize {
    30
}

fn half3() -> [f64; 3] {
    [0.5; 3]
}

/// Forward draw from the three-level prior with precisions
/// ln α = ln s0 + c0 + μ + βᵀE at each level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HdpSpec {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub c0: f64,
    #[serde(default = "one")]
    pub s0: f64,
    #[serde(default = "one")]
    pub nu1: f64,
    #[serde(default = "one")]
    pub nu2: f64,
    /// (μ_G, μ_G0, μ_H).
    #[serde(default = "half3")]
    pub mu: [f64; 3],
    #[serde(default)]
    pub beta_g: Vec<f64>,
    #[serde(default)]
    pub beta_g0: Vec<f64>,
    #[serde(default)]
    pub beta_h: Vec<f64>,
}

impl Default for HdpSpec {
    fn default() -> Self {
        Self {
            m: 30,
            c0: 0.0,
            s0: 1.0,
            nu1: 1.0,
            nu2: 1.0,
            mu: [0.5; 3],
            beta_g: Vec::new(),
            beta_g0: Vec::new(),
            beta_h: Vec::new(),
        }
    }
}

/// What was planted, written beside a simulated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub spec: TruthSpec,
    /// Subpopulation of each subject (subpopulation generator).
    #[serde(default)]
    pub membership: Vec<usize>,
    /// Control frequencies `[subpopulation][global locus]`.
    #[serde(default)]
    pub frequencies: Vec<Vec<f64>>,
    /// Global names of planted disease-predisposing loci.
    #[serde(default)]
    pub dpl_loci: Vec<String>,
    /// Distinct atoms per group (HDP generator).
    #[serde(default)]
    pub hdp_atoms: Vec<usize>,
}

impl TruthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(format!("truth spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn n_subjects(&self) -> usize {
        self.n_controls + self.n_cases
    }

    pub fn n_loci(&self) -> usize {
        self.loci_per_gene.iter().sum()
    }

    fn global_locus(&self, gene: usize, r: usize) -> usize {
        self.loci_per_gene[..gene].iter().sum::<usize>() + r
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleTruth(m));
        if self.n_controls == 0 || self.n_cases == 0 {
            return bad("both groups need at least one subject".into());
        }
        if self.loci_per_gene.is_empty() || self.loci_per_gene.contains(&0) {
            return bad("every gene needs at least one locus".into());
        }
        if !(self.environment.sd >= 0.0) {
            return bad(format!("environment sd {}", self.environment.sd));
        }
        let d = self.environment.dim;
        let n_genes = self.loci_per_gene.len();
        match &self.generator {
            Generator::Subpopulation(s) => {
                if s.k == 0 {
                    return bad("K must be at least 1".into());
                }
                if let Some(w) = &s.weights {
                    if w.len() != s.k || w.iter().any(|&x| !(x >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
                        return bad(format!("membership weights {w:?} for K = {}", s.k));
                    }
                }
                let [lo, hi] = s.freq_range;
                if !(lo > 0.0 && lo <= hi && hi < 1.0) {
                    return bad(format!("frequency range [{lo}, {hi}]"));
                }
                if let Some(f) = &s.frequencies {
                    if f.len() != s.k || f.iter().any(|row| row.len() != self.n_loci()) {
                        return bad("explicit frequencies must be K x (total loci)".into());
                    }
                    if f.iter().flatten().any(|&p| !(p > 0.0 && p < 1.0)) {
                        return bad("frequencies must lie in (0, 1)".into());
                    }
                }
                for dpl in &s.dpl {
                    if dpl.gene >= n_genes || dpl.locus >= self.loci_per_gene[dpl.gene] {
                        return bad(format!("DPL at gene {} locus {} does not exist", dpl.gene, dpl.locus));
                    }
                    let (lo, hi) = match &s.frequencies {
                        Some(f) => {
                            let l = self.global_locus(dpl.gene, dpl.locus);
                            f.iter().map(|row| row[l]).fold((1.0f64, 0.0f64), |(a, b), p| (a.min(p), b.max(p)))
                        }
                        None => (lo, hi),
                    };
                    if !(lo + dpl.delta > 0.0 && hi + dpl.delta < 1.0) {
                        return bad(format!(
                            "Δp = {} at gene {} locus {} leaves (0, 1) for frequencies in [{lo}, {hi}]",
                            dpl.delta, dpl.gene, dpl.locus
                        ));
                    }
                }
                if let Some(c) = &s.coupling {
                    if c.genes[0] >= n_genes || c.genes[1] >= n_genes || c.genes[0] == c.genes[1] {
                        return bad(format!("coupling genes {:?}", c.genes));
                    }
                    if !(c.rho.abs() <= 1.0) || !(c.scale >= 0.0) {
                        return bad(format!("coupling ρ = {}, scale = {}", c.rho, c.scale));
                    }
                }
                if let Some(e) = &s.env_effect {
                    if e.beta.len() != d {
                        return bad(format!("environment effect has {} coefficients for {d} covariates", e.beta.len()));
                    }
                    if e.genes.iter().any(|&j| j >= n_genes) || e.groups.iter().any(|&k| k > 1) {
                        return bad("environment effect names a missing gene or group".into());
                    }
                }
            }
            Generator::Hdp(h) => {
                if h.m == 0 || !(h.nu1 > 0.0 && h.nu2 > 0.0) || !(h.s0 > 0.0) {
                    return bad(format!("HDP generator M = {}, ν = ({}, {}), s0 = {}", h.m, h.nu1, h.nu2, h.s0));
                }
                for (name, b) in [("beta_g", &h.beta_g), ("beta_g0", &h.beta_g0), ("beta_h", &h.beta_h)] {
                    if !b.is_empty() && b.len() != d {
                        return bad(format!("{name} has {} entries for {d} covariates", b.len()));
                    }
                }
            }
        }
        Ok(())
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn skeleton(spec: &TruthSpec) -> (Vec<Subject>, Vec<String>, Vec<Gene>, Vec<String>) {
    let subjects = (0..spec.n_subjects())
        .map(|i| Subject {
            id: format!("s{i:04}"),
            group: if i < spec.n_controls { Group::Control } else { Group::Case },
        })
        .collect();
    let locus_names = (0..spec.n_loci()).map(|l| format!("rs{l:05}")).collect();
    let mut start = 0;
    let genes = spec
        .loci_per_gene
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let g = Gene { name: format!("gene{j}"), loci: (start..start + l).collect() };
            start += l;
            g
        })
        .collect();
    let env_names = (0..spec.environment.dim).map(|e| format!("env{e}")).collect();
    (subjects, locus_names, genes, env_names)
}

fn draw_environment(spec: &TruthSpec, rng: &mut RngStream) -> Vec<f64> {
    let e = &spec.environment;
    let mut out = Vec::with_capacity(spec.n_subjects() * e.dim);
    for i in 0..spec.n_subjects() {
        let mean = if i < spec.n_controls { e.control_mean } else { e.case_mean };
        for _ in 0..e.dim {
            out.push(mean + e.sd * std_normal(rng));
        }
    }
    out
}

fn bernoulli(p: f64, rng: &mut RngStream) -> u8 {
    u8::from(rng.uniform() < p)
}

/// Draws a dataset and the record of what was planted. Same spec, same output.
pub fn simulate_dataset(spec: &TruthSpec) -> Result<(GenotypeDataset, TruthRecord)> {
    spec.validate()?;
    let (subjects, locus_names, genes, env_names) = skeleton(spec);
    let mut rng = RngStream::keyed(spec.seed, StreamKey::new(Stage::Simulation, 0, 0, 0, 0));
    let environment = draw_environment(spec, &mut rng);
    let mut record = TruthRecord {
        spec: spec.clone(),
        membership: Vec::new(),
        frequencies: Vec::new(),
        dpl_loci: Vec::new(),
        hdp_atoms: Vec::new(),
    };
    let alleles = match &spec.generator {
        Generator::Subpopulation(s) => simulate_subpop(spec, s, &environment, &mut record, &mut rng),
        Generator::Hdp(h) => {
            let d = spec.environment.dim;
            let env: Vec<Vec<f64>> = (0..spec.n_subjects()).map(|i| environment[i * d..(i + 1) * d].to_vec()).collect();
            let groups: Vec<usize> = (0..spec.n_subjects()).map(|i| usize::from(i >= spec.n_controls)).collect();
            let draw = forward_franchise(&env, &groups, &spec.loci_per_gene, h, &mut rng);
            record.hdp_atoms = draw.n_atoms.to_vec();
            let n_loci = spec.n_loci();
            let mut alleles = vec![0u8; spec.n_subjects() * n_loci * 2];
            for i in 0..spec.n_subjects() {
                for (j, gene) in genes.iter().enumerate() {
                    for chrom in 0..2 {
                        let slot = rng.index(h.m);
                        for (r, &l) in gene.loci.iter().enumerate() {
                            alleles[(i * n_loci + l) * 2 + chrom] = bernoulli(draw.p[i][j][slot][r], &mut rng);
                        }
                    }
                }
            }
            alleles
        }
    };
    let ds = GenotypeDataset::new(subjects, locus_names, genes, alleles, env_names, environment)?;
    Ok((ds, record))
}

fn simulate_subpop(spec: &TruthSpec, s: &SubpopSpec, environment: &[f64], record: &mut TruthRecord, rng: &mut RngStream) -> Vec<u8> {
    let n_loci = spec.n_loci();
    let d = spec.environment.dim;
    let freqs: Vec<Vec<f64>> = match &s.frequencies {
        Some(f) => f.clone(),
        None => {
            let [lo, hi] = s.freq_range;
            (0..s.k).map(|_| (0..n_loci).map(|_| lo + (hi - lo) * rng.uniform()).collect()).collect()
        }
    };
    let weights = s.weights.clone().unwrap_or_else(|| vec![1.0; s.k]);
    let total: f64 = weights.iter().sum();
    let mut shift = vec![0.0; n_loci];
    for dpl in &s.dpl {
        let l = spec.global_locus(dpl.gene, dpl.locus);
        shift[l] += dpl.delta;
        record.dpl_loci.push(format!("rs{l:05}"));
    }
    let gene_of: Vec<usize> = spec.loci_per_gene.iter().enumerate().flat_map(|(j, &l)| std::iter::repeat_n(j, l)).collect();
    let mut alleles = vec![0u8; spec.n_subjects() * n_loci * 2];
    for i in 0..spec.n_subjects() {
        let case = i >= spec.n_controls;
        let u = rng.uniform() * total;
        let mut acc = 0.0;
        let mut c = s.k - 1;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                c = k;
                break;
            }
        }
        record.membership.push(c);
        let mut logit_shift = vec![0.0; spec.loci_per_gene.len()];
        if let (true, Some(cp)) = (case, &s.coupling) {
            let z1 = std_normal(rng);
            let z2 = std_normal(rng);
            logit_shift[cp.genes[0]] += cp.scale * z1;
            logit_shift[cp.genes[1]] += cp.scale * (cp.rho * z1 + (1.0 - cp.rho * cp.rho).sqrt() * z2);
        }
        if let Some(e) = &s.env_effect {
            if e.groups.contains(&usize::from(case)) {
                let be: f64 = e.beta.iter().zip(&environment[i * d..(i + 1) * d]).map(|(b, x)| b * x).sum();
                for &j in &e.genes {
                    logit_shift[j] += be;
                }
            }
        }
        for l in 0..n_loci {
            let mut p = freqs[c][l] + if case { shift[l] } else { 0.0 };
            let t = logit_shift[gene_of[l]];
            if t != 0.0 {
                p = logistic(logit(p) + t);
            }
            for chrom in 0..2 {
                alleles[(i * n_loci + l) * 2 + chrom] = bernoulli(p, rng);
            }
        }
    }
    record.frequencies = freqs;
    alleles
}

/// A franchise drawn from the prior.
#[derive(Clone, Debug, PartialEq)]
pub struct FranchiseDraw {
    /// `[subject][gene][slot][locus]`.
    pub p: Vec<Vec<Vec<Vec<f64>>>>,
    /// Atom id of every slot, `[subject][gene][slot]`, ids per group.
    pub atom: Vec<Vec<Vec<usize>>>,
    pub n_atoms: [usize; 2],
}

/// Existing index ∝ counts, or `None` for a new one ∝ α.
fn crp_pick(counts: &[usize], ln_alpha: f64, rng: &mut RngStream) -> Option<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return None;
    }
    let p_new = (ln_alpha - logaddexp((n as f64).ln(), ln_alpha)).exp();
    if rng.uniform() < p_new {
        return None;
    }
    let target = rng.uniform() * n as f64;
    let mut acc = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        acc += c as f64;
        if target < acc {
            return Some(i);
        }
    }
    counts.iter().rposition(|&c| c > 0)
}

/// Seats the M slots of every (subject, gene) by the Chinese restaurant franchise.
/// Subjects are visited in index order within each gene.
pub fn forward_franchise(env: &[Vec<f64>], groups: &[usize], loci_per_gene: &[usize], h: &HdpSpec, rng: &mut RngStream) -> FranchiseDraw {
    let d = env.first().map_or(0, Vec::len);
    let coef = |b: &Vec<f64>| if b.is_empty() { vec![0.0; d] } else { b.clone() };
    let (bg, bg0, bh) = (coef(&h.beta_g), coef(&h.beta_g0), coef(&h.beta_h));
    let mut env_bar = [vec![0.0; d], vec![0.0; d]];
    let mut n_k = [0usize; 2];
    for (e, &k) in env.iter().zip(groups) {
        n_k[k] += 1;
        for (s, v) in env_bar[k].iter_mut().zip(e) {
            *s += v;
        }
    }
    for k in 0..2 {
        for s in &mut env_bar[k] {
            *s /= n_k[k].max(1) as f64;
        }
    }
    let env_bar2: Vec<f64> = (0..d).map(|e| 0.5 * (env_bar[0][e] + env_bar[1][e])).collect();
    let ln_h = log_precision(h.mu[2], &bh, &env_bar2, h.c0, h.s0);
    let max_l = loci_per_gene.iter().copied().max().unwrap_or(0);
    let n = env.len();
    let n_genes = loci_per_gene.len();
    let mut p = vec![vec![Vec::new(); n_genes]; n];
    let mut atom_of = vec![vec![Vec::new(); n_genes]; n];
    let mut n_atoms = [0; 2];
    for k in 0..2 {
        let ln_g0 = log_precision(h.mu[1], &bg0, &env_bar[k], h.c0, h.s0);
        let mut atom_counts: Vec<usize> = Vec::new();
        let mut atoms: Vec<Vec<f64>> = Vec::new();
        for j in 0..n_genes {
            let mut dish_counts: Vec<usize> = Vec::new();
            let mut dish_atom: Vec<usize> = Vec::new();
            for i in (0..n).filter(|&i| groups[i] == k) {
                let ln_g = log_precision(h.mu[0], &bg, &env[i], h.c0, h.s0);
                let mut table_counts: Vec<usize> = Vec::new();
                let mut table_dish: Vec<usize> = Vec::new();
                for _ in 0..h.m {
                    let t = match crp_pick(&table_counts, ln_g, rng) {
                        Some(t) => t,
                        None => {
                            let dish = match crp_pick(&dish_counts, ln_g0, rng) {
                                Some(dish) => dish,
                                None => {
                                    let a = match crp_pick(&atom_counts, ln_h, rng) {
                                        Some(a) => a,
                                        None => {
                                            atoms.push((0..max_l).map(|_| beta_log(h.nu1, h.nu2, rng).p).collect());
                                            atom_counts.push(0);
                                            atoms.len() - 1
                                        }
                                    };
                                    atom_counts[a] += 1;
                                    dish_counts.push(0);
                                    dish_atom.push(a);
                                    dish_counts.len() - 1
                                }
                            };
                            dish_counts[dish] += 1;
                            table_counts.push(0);
                            table_dish.push(dish);
                            table_counts.len() - 1
                        }
                    };
                    table_counts[t] += 1;
                    let a = dish_atom[table_dish[t]];
                    atom_of[i][j].push(a);
                    p[i][j].push(atoms[a][..loci_per_gene[j]].to_vec());
                }
            }
        }
        n_atoms[k] = atoms.len();
    }
    FranchiseDraw { p, atom: atom_of, n_atoms }
}

/// How null-calibration datasets are made.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMode {
    /// Observed genotypes dealt to randomly permuted subject slots, covariate rows
    /// permuted independently. Keeps linkage and population structure.
    #[default]
    Permute,
    /// Fresh iid genotypes at the pooled per-locus frequencies.
    Pooled,
}

impl std::str::FromStr for NullMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permute" => Ok(NullMode::Permute),
            "pooled" => Ok(NullMode::Pooled),
            other => Err(Error::Config(format!("unknown null mode '{other}' (permute or pooled)"))),
        }
    }
}

/// A dataset of the same shape with no group difference and no interactions.
pub fn null_dataset(ds: &GenotypeDataset, mode: NullMode, seed: u64) -> Result<GenotypeDataset> {
    match mode {
        NullMode::Permute => permuted_null(ds, seed),
        NullMode::Pooled => null_dataset_like(ds, seed),
    }
}

fn shuffled(n: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.index(i + 1));
    }
    p
}

/// Group labels stay with the subject slots; genotype rows and covariate rows are
/// reassigned by two independent permutations.
fn permuted_null(ds: &GenotypeDataset, seed: u64) -> Result<GenotypeDataset> {
    let n = ds.n_subjects();
    let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::Calibration, 1, 0, 0, 0));
    let geno = shuffled(n, &mut rng);
    let env_order = shuffled(n, &mut rng);
    let mut alleles = Vec::with_capacity(n * ds.n_loci() * 2);
    for &o in &geno {
        for l in 0..ds.n_loci() {
            alleles.push(ds.allele(o, l, 0));
            alleles.push(ds.allele(o, l, 1));
        }
    }
    let env: Vec<f64> = env_order.iter().flat_map(|&o| ds.env(o).to_vec()).collect();
    ds.with_tables(alleles, env)
}

/// A dataset of the same shape and covariates with no group difference and no
/// interactions: genotypes are iid Bernoulli at each locus's pooled frequency
/// (clamped to [0.01, 0.99]).
pub fn null_dataset_like(ds: &GenotypeDataset, seed: u64) -> Result<GenotypeDataset> {
    let n = ds.n_subjects();
    let n_loci = ds.n_loci();
    let mut freq = vec![0.0; n_loci];
    for (l, f) in freq.iter_mut().enumerate() {
        let mut s = 0usize;
        for i in 0..n {
            s += (ds.allele(i, l, 0) + ds.allele(i, l, 1)) as usize;
        }
        *f = (s as f64 / (2 * n) as f64).clamp(0.01, 0.99);
    }
    let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::Calibration, 0, 0, 0, 0));
    let mut alleles = Vec::with_capacity(n * n_loci * 2);
    for _ in 0..n {
        for &f in &freq {
            alleles.push(bernoulli(f, &mut rng));
            alleles.push(bernoulli(f, &mut rng));
        }
    }
    let env: Vec<f64> = (0..n).flat_map(|i| ds.env(i).to_vec()).collect();
    ds.with_tables(alleles, env)
}
