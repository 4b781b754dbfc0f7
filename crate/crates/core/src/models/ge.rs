//! Gene-environment interaction model.
//!
//! Every subject i has its own M-component mixture for each gene j, with
//! ν1_ijr = exp(u_jr + λ_ij + μ_jk + β_jkᵀE_i) and ν2_ijr the same with v_jr, where
//! k is the subject's group. The subject effects λ_ij are N(Λ̄_jk, σ_λ²) around a J×2
//! mean matrix Λ̄ that carries the matrix-normal gene-gene structure (A ⊗ Σ).
//! μ_jk and β_jk have independent normal priors.
//!
//! Covariates enter only through the exponent of ν. Centre them: with a constant E the
//! coefficient β is not identified apart from μ.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{GenotypeDataset, Group};
use crate::error::{Error, Result};
use crate::mixture::{MixtureState, UnitData};
use crate::models::gg::{block_beta_terms, GeneEffects};
use crate::models::{exp_pair, Interaction};
use crate::runtime::chain::{ChainModel, SweepContext};
use crate::runtime::config::RunConfig;
use crate::runtime::output::{Layout, ModelKind};
use crate::runtime::schedule::plan_schedule;
use crate::stats::dist::std_normal;
use crate::stats::linalg::spd_cholesky;
use crate::stats::special::{beta_ln_pdf_sum, normal_ln_pdf};
use crate::stats::{RngStream, Stage, StreamKey};
use crate::tmcmc::{block_update_cached, AcceptanceStats, ScaleTuner, TmcmcConfig, TmcmcStepRecord};

/// (ν1, ν2) = (exp(u + λ + μ + βᵀE), exp(v + λ + μ + βᵀE)).
pub fn nu_ge(u: f64, v: f64, lambda: f64, mu: f64, beta: &[f64], env: &[f64]) -> Result<(f64, f64)> {
    if beta.len() != env.len() {
        return Err(Error::InvalidParameter(format!(
            "β has {} entries, E has {}",
            beta.len(),
            env.len()
        )));
    }
    let c = lambda + mu + dot(beta, env);
    exp_pair(u + c, v + c, || format!("u = {u}, v = {v}, λ = {lambda}, μ = {mu}, β = {beta:?}, E = {env:?}"))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mixture of one (subject, gene) pair plus the subject effect λ_ij.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeBlock {
    pub subject: usize,
    pub gene: usize,
    pub group: usize,
    pub data: UnitData,
    pub mix: MixtureState,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub loglik: f64,
    pub lambda: f64,
    pub cfg: TmcmcConfig,
    pub tuner: ScaleTuner,
    last_step: Option<TmcmcStepRecord>,
}

impl GeBlock {
    fn refresh(&mut self) {
        let (s1, s2) = self.mix.log_sums();
        self.s1 = s1;
        self.s2 = s2;
        self.loglik = self.mix.log_lik(&self.data);
    }
}

/// μ_jk and β_jk with their samplers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneGroupEffects {
    pub mu: f64,
    pub beta: Vec<f64>,
    pub mu_cfg: TmcmcConfig,
    pub mu_tuner: ScaleTuner,
    pub beta_cfg: TmcmcConfig,
    pub beta_tuner: ScaleTuner,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeModel {
    pub m: usize,
    pub layout: Layout,
    pub env: Vec<Vec<f64>>,
    /// Subject indices per group.
    pub members: [Vec<usize>; 2],
    /// Index i·J + j.
    pub blocks: Vec<GeBlock>,
    pub effects: Vec<GeneEffects>,
    /// Index 2j + k.
    pub gene_group: Vec<GeneGroupEffects>,
    pub lambda_bar: DMatrix<f64>,
    pub interaction: Interaction,
    pub sigma_lambda: f64,
    pub sigma_mu: f64,
    pub sigma_beta: f64,
    pub uv_sd: f64,
    pub tune: bool,
}

impl GeModel {
    /// Initial state: uniform allocations, p from the prior, u, v ~ N(0, 1), λ = Λ̄ = 0,
    /// μ = β = 0, A = I, Σ = I.
    pub fn new(ds: &GenotypeDataset, cfg: &RunConfig) -> Result<Self> {
        ds.check_fittable()?;
        cfg.validate()?;
        let d = ds.env_dim();
        if d == 0 {
            return Err(Error::EnvironmentRequired("gene-environment"));
        }
        let n_genes = ds.n_genes();
        let seed = cfg.seed;
        let (scale, mix) = (cfg.tmcmc.scale, cfg.tmcmc.additive_prob);
        let sd = cfg.gg.uv_prior_sd;
        let effects: Vec<GeneEffects> = (0..n_genes)
            .map(|j| {
                let l = ds.gene_len(j);
                let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::Init, 1, j, 0, 0));
                let u: Vec<f64> = (0..l).map(|_| sd * std_normal(&mut rng)).collect();
                let v: Vec<f64> = (0..l).map(|_| sd * std_normal(&mut rng)).collect();
                GeneEffects {
                    u,
                    v,
                    cfg: vec![TmcmcConfig::new(2, scale, mix); l],
                    tuner: vec![ScaleTuner::default(); l],
                }
            })
            .collect();
        let gene_group = (0..2 * n_genes)
            .map(|_| GeneGroupEffects {
                mu: 0.0,
                beta: vec![0.0; d],
                mu_cfg: TmcmcConfig::new(1, scale, mix),
                mu_tuner: ScaleTuner::default(),
                beta_cfg: TmcmcConfig::new(d, scale, mix),
                beta_tuner: ScaleTuner::default(),
            })
            .collect();
        let env: Vec<Vec<f64>> = (0..ds.n_subjects()).map(|i| ds.env(i).to_vec()).collect();
        let mut blocks = Vec::with_capacity(ds.n_subjects() * n_genes);
        for i in 0..ds.n_subjects() {
            let k = ds.group(i).index();
            for (j, e) in effects.iter().enumerate() {
                let data = UnitData::new(ds.gene_len(j), 2, ds.gene_counts(i, j))?;
                let (nu1, nu2) = nu_vectors(e, 0.0)?;
                let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::Init, 0, i, j, 0));
                let mix_state = MixtureState::init(cfg.m, 1, &nu1, &nu2, Some(cfg.dp_alpha), &mut rng);
                let mut b = GeBlock {
                    subject: i,
                    gene: j,
                    group: k,
                    data,
                    mix: mix_state,
                    s1: vec![],
                    s2: vec![],
                    loglik: 0.0,
                    lambda: 0.0,
                    cfg: TmcmcConfig::new(1, scale, mix),
                    tuner: ScaleTuner::default(),
                    last_step: None,
                };
                b.refresh();
                blocks.push(b);
            }
        }
        Ok(Self {
            m: cfg.m,
            layout: Layout {
                model: ModelKind::Ge,
                m: cfg.m,
                loci_per_gene: ds.loci_per_gene(),
                subject_groups: (0..ds.n_subjects()).map(|i| ds.group(i).index() as u8).collect(),
                env_dim: d,
            },
            env,
            members: [ds.members(Group::Control), ds.members(Group::Case)],
            blocks,
            effects,
            gene_group,
            lambda_bar: DMatrix::zeros(n_genes, 2),
            interaction: Interaction::new(n_genes, &cfg.gg)?,
            sigma_lambda: cfg.ge.sigma_lambda,
            sigma_mu: cfg.ge.sigma_mu,
            sigma_beta: cfg.ge.sigma_beta,
            uv_sd: sd,
            tune: cfg.tmcmc.tune,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.effects.len()
    }

    pub fn block(&self, subject: usize, gene: usize) -> &GeBlock {
        &self.blocks[subject * self.n_genes() + gene]
    }

    /// μ_jk + β_jkᵀE_i for a block.
    fn fixed_offset(&self, b: &GeBlock) -> f64 {
        let g = &self.gene_group[2 * b.gene + b.group];
        g.mu + dot(&g.beta, &self.env[b.subject])
    }

    /// Mixture likelihoods plus the Beta densities of every p.
    pub fn mixture_log_joint(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let e = &self.effects[b.gene];
                b.loglik + block_beta_terms(&b.s1, &b.s2, b.mix.n_values(), &e.u, &e.v, b.lambda + self.fixed_offset(b))
            })
            .sum()
    }

    fn parameter_log_prior(&self) -> f64 {
        let uv: f64 = self
            .effects
            .iter()
            .flat_map(|e| e.u.iter().chain(&e.v))
            .map(|&x| normal_ln_pdf(x, 0.0, self.uv_sd))
            .sum();
        let gg: f64 = self
            .gene_group
            .iter()
            .map(|g| {
                normal_ln_pdf(g.mu, 0.0, self.sigma_mu)
                    + g.beta.iter().map(|&b| normal_ln_pdf(b, 0.0, self.sigma_beta)).sum::<f64>()
            })
            .sum();
        let lam: f64 = self
            .blocks
            .iter()
            .map(|b| normal_ln_pdf(b.lambda, self.lambda_bar[(b.gene, b.group)], self.sigma_lambda))
            .sum();
        uv + gg + lam
    }

    pub fn check(&self) -> Result<()> {
        for b in &self.blocks {
            b.mix.check()?;
            nu_vectors(&self.effects[b.gene], b.lambda + self.fixed_offset(b))?;
        }
        spd_cholesky(&self.interaction.a, "A")?;
        spd_cholesky(&self.interaction.sigma, "Σ")?;
        Ok(())
    }

    /// Parallel over (i, j): allocation, frequencies, then λ_ij.
    fn block_stage(&mut self, ctx: &mut SweepContext<'_>) -> Result<()> {
        let costs: Vec<u64> = self.blocks.iter().map(|b| b.data.n_loci.max(1) as u64).collect();
        let schedule = plan_schedule(&costs, ctx.exec.workers())?;
        let (seed, sweep, tuning) = (ctx.seed, ctx.sweep, ctx.tuning && self.tune);
        let offsets: Vec<f64> = self.blocks.iter().map(|b| self.fixed_offset(b)).collect();
        let (effects, lambda_bar, sl) = (&self.effects, &self.lambda_bar, self.sigma_lambda);
        ctx.exec.run(&mut self.blocks, &schedule, |idx, b| {
            let e = &effects[b.gene];
            let off = offsets[idx];
            let (nu1, nu2) = nu_vectors(e, b.lambda + off)?;
            let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::Mixture, b.subject, b.gene, 0, sweep));
            b.mix.gibbs_allocation_update(&b.data, &mut rng)?;
            b.mix.update_p_given_z(&b.data, &nu1, &nu2, &mut rng);
            b.refresh();
            let mean = lambda_bar[(b.gene, b.group)];
            let (s1, s2, nv) = (&b.s1, &b.s2, b.mix.n_values());
            let target = |x: &[f64]| normal_ln_pdf(x[0], mean, sl) + block_beta_terms(s1, s2, nv, &e.u, &e.v, x[0] + off);
            let x = [b.lambda];
            let lp = target(&x);
            let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::SubjectLambda, b.subject, b.gene, 0, sweep));
            let step = block_update_cached(&x, lp, target, &b.cfg, &mut rng);
            if tuning {
                b.tuner.observe_step(&step.record, &mut b.cfg.scales);
            }
            b.lambda = step.x[0];
            b.last_step = Some(step.record);
            Ok(())
        })?;
        let mut st = AcceptanceStats::default();
        for b in &self.blocks {
            if let Some(r) = &b.last_step {
                st.add(r);
            }
        }
        ctx.record_stats("subject_lambda", &st);
        Ok(())
    }

    /// Parallel over (j, k): μ_jk then β_jk.
    fn gene_group_stage(&mut self, ctx: &mut SweepContext<'_>) -> Result<()> {
        let jn = self.n_genes();
        let costs: Vec<u64> = (0..2 * jn).map(|idx| self.members[idx % 2].len().max(1) as u64).collect();
        let schedule = plan_schedule(&costs, ctx.exec.workers())?;
        let (seed, sweep, tuning) = (ctx.seed, ctx.sweep, ctx.tuning && self.tune);
        let (blocks, effects, members, env) = (&self.blocks, &self.effects, &self.members, &self.env);
        let (smu, sbeta) = (self.sigma_mu, self.sigma_beta);
        let mut stats = vec![[AcceptanceStats::default(), AcceptanceStats::default()]; 2 * jn];
        let mut work: Vec<_> = self.gene_group.iter_mut().zip(stats.iter_mut()).collect();
        ctx.exec.run(&mut work, &schedule, |idx, (g, st)| {
            let (j, k) = (idx / 2, idx % 2);
            let e = &effects[j];
            let mine: Vec<&GeBlock> = members[k].iter().map(|&i| &blocks[i * jn + j]).collect();
            let beta_terms = |mu: f64, beta: &[f64]| -> f64 {
                mine.iter()
                    .map(|b| block_beta_terms(&b.s1, &b.s2, b.mix.n_values(), &e.u, &e.v, b.lambda + mu + dot(beta, &env[b.subject])))
                    .sum()
            };
            let beta = g.beta.clone();
            let target = |x: &[f64]| normal_ln_pdf(x[0], 0.0, smu) + beta_terms(x[0], &beta);
            let x = [g.mu];
            let lp = target(&x);
            let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::Intercept, j, k, 0, sweep));
            let step = block_update_cached(&x, lp, target, &g.mu_cfg, &mut rng);
            st[0].add(&step.record);
            if tuning {
                g.mu_tuner.observe_step(&step.record, &mut g.mu_cfg.scales);
            }
            g.mu = step.x[0];

            let mu = g.mu;
            let target = |x: &[f64]| {
                x.iter().map(|&b| normal_ln_pdf(b, 0.0, sbeta)).sum::<f64>() + beta_terms(mu, x)
            };
            let lp = target(&g.beta);
            let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::EnvCoefficient, j, k, 0, sweep));
            let step = block_update_cached(&g.beta, lp, target, &g.beta_cfg, &mut rng);
            st[1].add(&step.record);
            if tuning {
                g.beta_tuner.observe_step(&step.record, &mut g.beta_cfg.scales);
            }
            g.beta = step.x;
            Ok(())
        })?;
        let (mut a, mut b) = (AcceptanceStats::default(), AcceptanceStats::default());
        for s in &stats {
            a.merge(&s[0]);
            b.merge(&s[1]);
        }
        ctx.record_stats("mu", &a);
        ctx.record_stats("beta", &b);
        Ok(())
    }

    /// Parallel over genes: per-locus (u, v) TMCMC.
    fn locus_effects_stage(&mut self, ctx: &mut SweepContext<'_>) -> Result<()> {
        let jn = self.n_genes();
        let costs: Vec<u64> = self.effects.iter().map(|e| (e.u.len() * self.env.len()).max(1) as u64).collect();
        let schedule = plan_schedule(&costs, ctx.exec.workers())?;
        let (seed, sweep, tuning) = (ctx.seed, ctx.sweep, ctx.tuning && self.tune);
        let offsets: Vec<f64> = self.blocks.iter().map(|b| b.lambda + self.fixed_offset(b)).collect();
        let (blocks, sd, n) = (&self.blocks, self.uv_sd, self.env.len());
        let mut stats = vec![AcceptanceStats::default(); jn];
        let mut work: Vec<_> = self.effects.iter_mut().zip(stats.iter_mut()).collect();
        ctx.exec.run(&mut work, &schedule, |j, (e, st)| {
            for r in 0..e.u.len() {
                let target = |x: &[f64]| {
                    let mut t = normal_ln_pdf(x[0], 0.0, sd) + normal_ln_pdf(x[1], 0.0, sd);
                    for i in 0..n {
                        let b = &blocks[i * jn + j];
                        let c = offsets[i * jn + j];
                        t += beta_ln_pdf_sum(b.s1[r], b.s2[r], b.mix.n_values(), (x[0] + c).exp(), (x[1] + c).exp());
                    }
                    t
                };
                let x = [e.u[r], e.v[r]];
                let lp = target(&x);
                let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::LocusEffects, j, r, 0, sweep));
                let step = block_update_cached(&x, lp, target, &e.cfg[r], &mut rng);
                st.add(&step.record);
                if tuning {
                    e.tuner[r].observe_step(&step.record, &mut e.cfg[r].scales);
                }
                e.u[r] = step.x[0];
                e.v[r] = step.x[1];
            }
            Ok(())
        })?;
        let mut total = AcceptanceStats::default();
        for s in &stats {
            total.merge(s);
        }
        ctx.record_stats("locus_effects", &total);
        Ok(())
    }

    /// Gaussian full conditional of vec(Λ̄): prior precision (A ⊗ Σ)⁻¹ plus n_k/σ_λ² on
    /// the diagonal entry of each (j, k).
    fn lambda_bar_stage(&mut self, ctx: &mut SweepContext<'_>) -> Result<()> {
        let jn = self.n_genes();
        let dim = 2 * jn;
        let cov = self.interaction.a.kronecker(&self.interaction.sigma);
        let prior_prec = spd_cholesky(&cov, "A ⊗ Σ")?.inverse();
        let mean0 = DVector::from_iterator(dim, (0..jn).flat_map(|j| [self.interaction.mean[(j, 0)], self.interaction.mean[(j, 1)]]));
        let mut prec = prior_prec.clone();
        let mut rhs = &prior_prec * mean0;
        let s2 = self.sigma_lambda * self.sigma_lambda;
        for b in &self.blocks {
            let idx = 2 * b.gene + b.group;
            prec[(idx, idx)] += 1.0 / s2;
            rhs[idx] += b.lambda / s2;
        }
        let chol = spd_cholesky(&prec, "Λ̄ posterior precision")?;
        let mean = chol.solve(&rhs);
        let mut rng = ctx.stream(StreamKey::new(Stage::LambdaMean, 0, 0, 0, ctx.sweep));
        let z = DVector::from_fn(dim, |_, _| std_normal(&mut rng));
        // x = mean + L⁻ᵀ z has covariance (L Lᵀ)⁻¹
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::NotSpd("Λ̄ posterior factor".into()))?;
        let x = mean + noise;
        self.lambda_bar = DMatrix::from_row_slice(jn, 2, x.as_slice());
        Ok(())
    }

    fn covariance_stage(&mut self, ctx: &mut SweepContext<'_>) -> Result<()> {
        let mut ra = ctx.stream(StreamKey::new(Stage::Covariance, 0, 0, 0, ctx.sweep));
        let mut rs = ctx.stream(StreamKey::new(Stage::Covariance, 1, 0, 0, ctx.sweep));
        self.interaction.gibbs(&self.lambda_bar, &mut ra, &mut rs)
    }

    /// Occupancy-weighted frequency per (j, k, r), averaged over the group's subjects.
    pub fn pbar(&self, gene: usize, group: usize) -> Vec<f64> {
        let jn = self.n_genes();
        let l = self.effects[gene].u.len();
        let mut out = vec![0.0; l];
        let mem = &self.members[group];
        for &i in mem {
            for (o, p) in out.iter_mut().zip(self.blocks[i * jn + gene].mix.weighted_mean()) {
                *o += p / mem.len() as f64;
            }
        }
        out
    }
}

fn nu_vectors(e: &GeneEffects, offset: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut nu1 = Vec::with_capacity(e.u.len());
    let mut nu2 = Vec::with_capacity(e.u.len());
    for r in 0..e.u.len() {
        let (a, b) = exp_pair(e.u[r] + offset, e.v[r] + offset, || format!("locus {r}, offset {offset}"))?;
        nu1.push(a);
        nu2.push(b);
    }
    Ok((nu1, nu2))
}

impl ChainModel for GeModel {
    fn layout(&self) -> Layout {
        self.layout.clone()
    }

    fn columns(&self) -> Vec<String> {
        let jn = self.n_genes();
        let d = self.layout.env_dim;
        let mut c = Vec::new();
        for j in 0..jn {
            for k in 0..2 {
                c.push(format!("lambda_bar.{j}.{k}"));
            }
        }
        c.extend(self.interaction.columns());
        for j in 0..jn {
            for k in 0..2 {
                c.push(format!("mu.{j}.{k}"));
                for e in 0..d {
                    c.push(format!("beta.{j}.{k}.{e}"));
                }
            }
        }
        for j in 0..jn {
            for k in 0..2 {
                for r in 0..self.effects[j].u.len() {
                    c.push(format!("pbar.{j}.{k}.{r}"));
                }
            }
        }
        for (j, e) in self.effects.iter().enumerate() {
            for r in 0..e.u.len() {
                c.push(format!("u.{j}.{r}"));
            }
            for r in 0..e.v.len() {
                c.push(format!("v.{j}.{r}"));
            }
        }
        c
    }

    fn sweep(&mut self, ctx: &mut SweepContext<'_>) -> Result<()> {
        ctx.timed("mixture", |ctx| self.block_stage(ctx))?;
        ctx.timed("mu_beta", |ctx| self.gene_group_stage(ctx))?;
        ctx.timed("locus_effects", |ctx| self.locus_effects_stage(ctx))?;
        ctx.timed("lambda_bar", |ctx| self.lambda_bar_stage(ctx))?;
        ctx.timed("covariance", |ctx| self.covariance_stage(ctx))
    }

    fn record(&self) -> Vec<f64> {
        let jn = self.n_genes();
        let mut out: Vec<f64> = (0..jn).flat_map(|j| [self.lambda_bar[(j, 0)], self.lambda_bar[(j, 1)]]).collect();
        self.interaction.record(&mut out);
        for g in &self.gene_group {
            out.push(g.mu);
            out.extend(&g.beta);
        }
        for j in 0..jn {
            for k in 0..2 {
                out.extend(self.pbar(j, k));
            }
        }
        for e in &self.effects {
            out.extend(&e.u);
            out.extend(&e.v);
        }
        out
    }

    fn log_joint(&self) -> f64 {
        let prior = self.interaction.log_prior(&self.lambda_bar).unwrap_or(f64::NAN);
        self.mixture_log_joint() + self.parameter_log_prior() + prior
    }

    fn log_joint_from_scratch(&self) -> Result<f64> {
        let mut total = self.parameter_log_prior() + self.interaction.log_prior(&self.lambda_bar)?;
        for b in &self.blocks {
            let e = &self.effects[b.gene];
            let (s1, s2) = b.mix.log_sums();
            total += b.mix.log_lik(&b.data) + block_beta_terms(&s1, &s2, b.mix.n_values(), &e.u, &e.v, b.lambda + self.fixed_offset(b));
        }
        Ok(total)
    }
}
