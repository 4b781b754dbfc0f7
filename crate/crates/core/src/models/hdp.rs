//! Three-level hierarchical Dirichlet process model.
//!
//! For subject i in group k and gene j the M component frequency vectors are iid
//! draws from G_ijk ~ DP(α_G,ik, G_0jk), with G_0jk ~ DP(α_G0,k, H_k) and
//! H_k ~ DP(α_H, H̃), H̃ = Beta(ν1, ν2) per locus. Precisions are log-linear in the
//! environment: ln α_G,ik = ln s0 + c0 + μ_G + β_Gᵀ E_i, ln α_G0,k uses the group mean
//! Ē_k and ln α_H the overall mean Ē̄ = (Ē_0 + Ē_1)/2.
//!
//! Sampling uses the Chinese restaurant franchise. The customers of restaurant (i,j,k)
//! are its M mixture slots; tables are served dishes from the gene-group menu (j,k);
//! dishes are served atoms from the group menu k; atoms carry frequency vectors.
//! Subject data are allocated to slots with weights 1/M, as in the finite mixtures of
//! the other models.
//!
//! Atoms are shared across genes of one group even though genes have different locus
//! counts: every atom stores `max_L` frequencies and a gene with L_j loci uses the
//! first L_j. Sharing statistics count atom ids.
//!
//! Customer updates run in parallel per (j,k). Within a block the gene-group menu is
//! exact; atom counts contributed by other genes of the group are frozen at their
//! values from the start of the stage and atoms created in the block stay private
//! until the stage ends, when they are merged in block order. Table, dish and atom
//! updates are central and exact.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{GenotypeDataset, Group};
use crate::error::{Error, Result};
use crate::mixture::{sample_log_weights, unit_log_lik, UnitData};
use crate::runtime::chain::{ChainModel, SweepContext};
use crate::runtime::config::{HdpUnit, RunConfig};
use crate::runtime::output::{Layout, ModelKind};
use crate::runtime::schedule::plan_schedule;
use crate::stats::dist::{beta_log, LogFreq};
use crate::stats::special::{beta_bernoulli_unchecked, beta_ln_pdf, crp_log_likelihood, logaddexp, logsumexp};
use crate::stats::{RngStream, Stage, StreamKey};
use crate::tmcmc::{block_update_cached, AcceptanceStats, ScaleTuner, TmcmcConfig};

/// ln α = ln s0 + c0 + μ + βᵀE, never exponentiated.
pub fn log_precision(mu: f64, beta: &[f64], env: &[f64], c0: f64, s0: f64) -> f64 {
    s0.ln() + c0 + mu + beta.iter().zip(env).map(|(b, e)| b * e).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub customers: u32,
    pub dish: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Restaurant {
    pub subject: usize,
    pub data: UnitData,
    /// Slot of each data unit.
    pub z: Vec<usize>,
    /// Table of each of the M slots.
    pub slot_table: Vec<u32>,
    pub tables: Vec<Table>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dish {
    /// Tables (across the gene-group's restaurants) serving this dish; 0 means dead.
    pub tables: u32,
    pub atom: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Live dishes (across genes of the group) served this atom.
    pub dishes: u32,
    pub freq: Vec<LogFreq>,
}

/// Restaurants and menu of one (gene, group).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneGroup {
    pub gene: usize,
    pub group: usize,
    pub n_loci: usize,
    pub restaurants: Vec<Restaurant>,
    pub dishes: Vec<Dish>,
    /// Live tables across restaurants.
    pub n_tables: u32,
    /// Atoms created during the current customer stage, not yet merged.
    #[serde(default)]
    pending: Vec<Atom>,
}

/// Minor/major allele counts per locus for a set of units.
#[derive(Clone, Debug, PartialEq)]
struct Suff {
    s: Vec<u32>,
    f: Vec<u32>,
}

impl Suff {
    fn zeros(l: usize) -> Self {
        Self { s: vec![0; l], f: vec![0; l] }
    }

    fn add_unit(&mut self, x: &[u8], trials: u8) {
        for (r, &c) in x.iter().enumerate() {
            self.s[r] += c as u32;
            self.f[r] += (trials - c) as u32;
        }
    }

    fn add(&mut self, o: &Suff) {
        for r in 0..self.s.len() {
            self.s[r] += o.s[r];
            self.f[r] += o.f[r];
        }
    }

    fn is_empty(&self) -> bool {
        self.s.iter().chain(&self.f).all(|&c| c == 0)
    }

    fn ll(&self, freq: &[LogFreq]) -> f64 {
        let mut t = 0.0;
        for r in 0..self.s.len() {
            t += self.s[r] as f64 * freq[r].ln_p + self.f[r] as f64 * freq[r].ln_q;
        }
        t
    }

    fn marginal(&self, nu1: f64, nu2: f64) -> f64 {
        (0..self.s.len())
            .map(|r| beta_bernoulli_unchecked(self.s[r] as f64, self.f[r] as f64, nu1, nu2))
            .sum()
    }
}

/// (per restaurant (subject, tables), per (j,k) (group, dishes, tables), per k (atoms, dishes)).
type UrnCounts = (Vec<(usize, usize)>, Vec<(usize, usize, usize)>, [(usize, usize); 2]);

/// Log precisions for one sweep.
#[derive(Clone, Debug)]
struct Precisions {
    ln_g: Vec<f64>,
    ln_g0: [f64; 2],
    ln_h: f64,
}

#[derive(Clone, Copy, Debug)]
struct Base {
    nu1: f64,
    nu2: f64,
    max_l: usize,
}

impl Base {
    /// Frequencies of a new atom: posterior given `data` on its loci, prior elsewhere.
    fn draw_atom(&self, data: Option<&Suff>, rng: &mut RngStream) -> Vec<LogFreq> {
        (0..self.max_l)
            .map(|r| match data {
                Some(d) if r < d.s.len() => beta_log(self.nu1 + d.s[r] as f64, self.nu2 + d.f[r] as f64, rng),
                _ => beta_log(self.nu1, self.nu2, rng),
            })
            .collect()
    }
}

/// Group-level atom list with counts; `base` atoms are read-only, `pending` ones new.
struct AtomWork<'a> {
    base: &'a [Atom],
    counts: Vec<u32>,
    pending: Vec<Atom>,
    total: u32,
}

impl<'a> AtomWork<'a> {
    fn snapshot(base: &'a [Atom]) -> Self {
        let counts: Vec<u32> = base.iter().map(|a| a.dishes).collect();
        let total = counts.iter().sum();
        Self { base, counts, pending: Vec::new(), total }
    }

    fn owned(atoms: Vec<Atom>) -> AtomWork<'static> {
        let counts: Vec<u32> = atoms.iter().map(|a| a.dishes).collect();
        let total = counts.iter().sum();
        AtomWork { base: &[], counts, pending: atoms, total }
    }

    fn freq(&self, a: usize) -> &[LogFreq] {
        if a < self.base.len() {
            &self.base[a].freq
        } else {
            &self.pending[a - self.base.len()].freq
        }
    }

    fn inc(&mut self, a: usize) {
        self.counts[a] += 1;
        self.total += 1;
    }

    fn dec(&mut self, a: usize) {
        self.counts[a] -= 1;
        self.total -= 1;
    }

    fn create(&mut self, freq: Vec<LogFreq>) -> usize {
        self.pending.push(Atom { dishes: 0, freq });
        self.counts.push(0);
        self.counts.len() - 1
    }

    fn into_atoms(self) -> Vec<Atom> {
        let mut atoms = self.pending;
        for (a, c) in atoms.iter_mut().zip(&self.counts) {
            a.dishes = *c;
        }
        atoms
    }
}

/// Log predictive weights for one piece of data at the atom and dish levels.
struct Pred {
    atom_ll: Vec<f64>,
    atom_lw: Vec<f64>,
    /// ln p(data | new dish) = ln[(Σ m_a f_a + α_H f_new) / (m + α_H)].
    atom_part: f64,
}

fn ln_count(c: u32) -> f64 {
    if c == 0 {
        f64::NEG_INFINITY
    } else {
        (c as f64).ln()
    }
}

impl Pred {
    fn new(w: &AtomWork<'_>, d: &Suff, ln_h: f64, base: Base) -> Self {
        let n = w.counts.len();
        let mut atom_ll = vec![f64::NEG_INFINITY; n];
        let mut atom_lw = Vec::with_capacity(n + 1);
        for a in 0..n {
            if w.counts[a] > 0 {
                atom_ll[a] = d.ll(w.freq(a));
            }
            atom_lw.push(ln_count(w.counts[a]) + atom_ll[a]);
        }
        atom_lw.push(ln_h + d.marginal(base.nu1, base.nu2));
        let atom_part = logsumexp(&atom_lw) - logaddexp(ln_count(w.total), ln_h);
        Self { atom_ll, atom_lw, atom_part }
    }

    /// (per-dish weights ln n_d + ll, new-dish weight, ln p(data | new table)).
    fn dish_weights(&self, dishes: &[Dish], n_tables: u32, ln_g0: f64) -> (Vec<f64>, f64) {
        let mut lw: Vec<f64> = dishes
            .iter()
            .map(|d| if d.tables == 0 { f64::NEG_INFINITY } else { ln_count(d.tables) + self.atom_ll[d.atom as usize] })
            .collect();
        lw.push(ln_g0 + self.atom_part);
        let part = logsumexp(&lw) - logaddexp(ln_count(n_tables), ln_g0);
        (lw, part)
    }
}

/// Index from counts (∝ c_i) or `None` for the new option (∝ α), without data.
fn pick_counts(counts: impl Iterator<Item = u32> + Clone, total: u32, ln_alpha: f64, rng: &mut RngStream) -> Option<usize> {
    let p_new = (ln_alpha - logaddexp(ln_count(total), ln_alpha)).exp();
    if total == 0 || rng.uniform() < p_new {
        return None;
    }
    let target = rng.uniform() * total as f64;
    let mut acc = 0.0;
    let mut last = None;
    for (i, c) in counts.enumerate() {
        if c > 0 {
            acc += c as f64;
            last = Some(i);
            if target < acc {
                return Some(i);
            }
        }
    }
    last
}

/// Chooses the atom of a new dish and increments its count.
fn draw_atom(w: &mut AtomWork<'_>, pred: Option<&Pred>, d: Option<&Suff>, ln_h: f64, base: Base, rng: &mut RngStream) -> Result<usize> {
    let choice = match pred {
        Some(p) => {
            let i = sample_log_weights(&p.atom_lw, rng)?;
            (i < w.counts.len()).then_some(i)
        }
        None => pick_counts(w.counts.iter().copied(), w.total, ln_h, rng),
    };
    let a = match choice {
        Some(a) => a,
        None => w.create(base.draw_atom(d, rng)),
    };
    w.inc(a);
    Ok(a)
}

/// Chooses a dish for a new table; new dishes are pushed with zero tables.
#[allow(clippy::too_many_arguments)]
fn draw_dish(
    dishes: &mut Vec<Dish>,
    n_tables: u32,
    w: &mut AtomWork<'_>,
    pred: Option<(&Pred, &[f64])>,
    d: Option<&Suff>,
    pr: (f64, f64),
    base: Base,
    rng: &mut RngStream,
) -> Result<usize> {
    let (ln_g0, ln_h) = pr;
    let choice = match pred {
        Some((_, lw)) => {
            let i = sample_log_weights(lw, rng)?;
            (i < dishes.len()).then_some(i)
        }
        None => pick_counts(dishes.iter().map(|d| d.tables), n_tables, ln_g0, rng),
    };
    match choice {
        Some(i) => Ok(i),
        None => {
            let a = draw_atom(w, pred.map(|p| p.0), d, ln_h, base, rng)?;
            dishes.push(Dish { tables: 0, atom: a as u32 });
            Ok(dishes.len() - 1)
        }
    }
}

/// New dishes arrive with zero tables; their atom count was taken in `draw_atom`.
fn attach_table(dishes: &mut [Dish], n_tables: &mut u32, dish: usize) {
    dishes[dish].tables += 1;
    *n_tables += 1;
}

fn detach_table(dishes: &mut [Dish], n_tables: &mut u32, w: &mut AtomWork<'_>, dish: usize) {
    dishes[dish].tables -= 1;
    *n_tables -= 1;
    if dishes[dish].tables == 0 {
        w.dec(dishes[dish].atom as usize);
    }
}

impl Restaurant {
    fn slot_suffs(&self, m: usize, l: usize) -> Vec<Suff> {
        let mut out = vec![Suff::zeros(l); m];
        for (u, &c) in self.z.iter().enumerate() {
            out[c].add_unit(self.data.unit(u), self.data.trials);
        }
        out
    }

    fn gc_tables(&mut self) {
        let mut remap = vec![u32::MAX; self.tables.len()];
        let mut kept = Vec::new();
        for (t, tab) in self.tables.iter().enumerate() {
            if tab.customers > 0 {
                remap[t] = kept.len() as u32;
                kept.push(tab.clone());
            }
        }
        for s in &mut self.slot_table {
            *s = remap[*s as usize];
        }
        self.tables = kept;
    }

    fn slot_freq<'b>(&self, slot: usize, dishes: &[Dish], w: &'b AtomWork<'_>) -> &'b [LogFreq] {
        let t = self.slot_table[slot] as usize;
        let d = self.tables[t].dish as usize;
        w.freq(dishes[d].atom as usize)
    }
}

/// Updates one restaurant: data allocations, then reseats every slot.
#[allow(clippy::too_many_arguments)]
fn update_restaurant(
    r: &mut Restaurant,
    dishes: &mut Vec<Dish>,
    n_tables: &mut u32,
    w: &mut AtomWork<'_>,
    m: usize,
    ln_g: f64,
    pr: (f64, f64),
    base: Base,
    rng: &mut RngStream,
) -> Result<()> {
    let l = r.data.n_loci;
    // allocations: weights 1/M cancel
    if r.data.n_units() > 0 {
        let mut ll = vec![0.0; m];
        for u in 0..r.data.n_units() {
            let x = r.data.unit(u);
            for (slot, v) in ll.iter_mut().enumerate() {
                *v = unit_log_lik(x, r.data.trials, r.slot_freq(slot, dishes, w));
            }
            r.z[u] = sample_log_weights(&ll, rng)?;
        }
    }
    let suffs = r.slot_suffs(m, l);
    for slot in 0..m {
        let t = r.slot_table[slot] as usize;
        r.tables[t].customers -= 1;
        if r.tables[t].customers == 0 {
            detach_table(dishes, n_tables, w, r.tables[t].dish as usize);
        }
        let d = &suffs[slot];
        let seated: u32 = r.tables.iter().map(|t| t.customers).sum();
        let new_table;
        let dish;
        if d.is_empty() {
            match pick_counts(r.tables.iter().map(|t| t.customers), seated, ln_g, rng) {
                Some(t) => {
                    r.tables[t].customers += 1;
                    r.slot_table[slot] = t as u32;
                    continue;
                }
                None => {
                    new_table = true;
                    dish = draw_dish(dishes, *n_tables, w, None, None, pr, base, rng)?;
                }
            }
        } else {
            let pred = Pred::new(w, d, pr.1, base);
            let (dish_lw, dish_part) = pred.dish_weights(dishes, *n_tables, pr.0);
            let mut tw: Vec<f64> = r
                .tables
                .iter()
                .map(|t| {
                    if t.customers == 0 {
                        f64::NEG_INFINITY
                    } else {
                        ln_count(t.customers) + pred.atom_ll[dishes[t.dish as usize].atom as usize]
                    }
                })
                .collect();
            tw.push(ln_g + dish_part);
            let choice = sample_log_weights(&tw, rng)?;
            if choice < r.tables.len() {
                r.tables[choice].customers += 1;
                r.slot_table[slot] = choice as u32;
                continue;
            }
            new_table = true;
            dish = draw_dish(dishes, *n_tables, w, Some((&pred, &dish_lw)), Some(d), pr, base, rng)?;
        }
        debug_assert!(new_table);
        attach_table(dishes, n_tables, dish);
        r.tables.push(Table { customers: 1, dish: dish as u32 });
        r.slot_table[slot] = (r.tables.len() - 1) as u32;
    }
    r.gc_tables();
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HdpModel {
    pub m: usize,
    pub layout: Layout,
    pub nu1: f64,
    pub nu2: f64,
    pub c0: f64,
    pub s0: f64,
    pub max_l: usize,
    pub env: Vec<Vec<f64>>,
    pub env_bar: [Vec<f64>; 2],
    pub env_bar2: Vec<f64>,
    /// Index 2j + k.
    pub blocks: Vec<GeneGroup>,
    pub atoms: [Vec<Atom>; 2],
    /// (μ_G, β_G, μ_G0, β_G0, μ_H, β_H).
    pub theta: Vec<f64>,
    /// One TMCMC block per level, (μ, β).
    pub theta_cfg: Vec<TmcmcConfig>,
    pub theta_tuner: Vec<ScaleTuner>,
    pub precision_steps: usize,
    pub tune: bool,
}

impl HdpModel {
    /// Initial state: μ = 0.5, β = 0, slots seated by the franchise prior, allocations
    /// uniform.
    pub fn new(ds: &GenotypeDataset, cfg: &RunConfig) -> Result<Self> {
        ds.check_fittable()?;
        cfg.validate()?;
        let d = ds.env_dim();
        let n_genes = ds.n_genes();
        let m = cfg.m;
        let h = &cfg.hdp;
        let env: Vec<Vec<f64>> = (0..ds.n_subjects()).map(|i| ds.env(i).to_vec()).collect();
        let env_bar = [ds.env_group_mean(Group::Control), ds.env_group_mean(Group::Case)];
        let env_bar2: Vec<f64> = (0..d).map(|e| 0.5 * (env_bar[0][e] + env_bar[1][e])).collect();
        let mut theta = Vec::with_capacity(3 + 3 * d);
        for _ in 0..3 {
            theta.push(0.5);
            theta.extend(std::iter::repeat_n(0.0, d));
        }
        let mut blocks = Vec::with_capacity(2 * n_genes);
        for j in 0..n_genes {
            for g in Group::BOTH {
                let l = ds.gene_len(j);
                let restaurants = ds
                    .members(g)
                    .into_iter()
                    .map(|i| {
                        let data = match h.unit {
                            HdpUnit::Chromosome => {
                                let mut c = ds.haplotype(i, j, 0);
                                c.extend(ds.haplotype(i, j, 1));
                                UnitData::new(l, 1, c)
                            }
                            HdpUnit::Subject => UnitData::new(l, 2, ds.gene_counts(i, j)),
                        }?;
                        let mut rng = RngStream::keyed(cfg.seed, StreamKey::new(Stage::Init, 0, i, j, 0));
                        let z = (0..data.n_units()).map(|_| rng.index(m)).collect();
                        Ok(Restaurant { subject: i, data, z, slot_table: vec![0; m], tables: Vec::new() })
                    })
                    .collect::<Result<Vec<_>>>()?;
                blocks.push(GeneGroup {
                    gene: j,
                    group: g.index(),
                    n_loci: l,
                    restaurants,
                    dishes: Vec::new(),
                    n_tables: 0,
                    pending: Vec::new(),
                });
            }
        }
        let mut model = Self {
            m,
            layout: Layout {
                model: ModelKind::Hdp,
                m,
                loci_per_gene: ds.loci_per_gene(),
                subject_groups: (0..ds.n_subjects()).map(|i| ds.group(i).index() as u8).collect(),
                env_dim: d,
            },
            nu1: h.nu1,
            nu2: h.nu2,
            c0: h.c0,
            s0: h.s0,
            max_l: ds.loci_per_gene().into_iter().max().unwrap_or(0),
            env,
            env_bar,
            env_bar2,
            blocks,
            atoms: [Vec::new(), Vec::new()],
            theta,
            theta_cfg: vec![TmcmcConfig::new(1 + d, cfg.tmcmc.scale, cfg.tmcmc.additive_prob); 3],
            theta_tuner: vec![ScaleTuner::default(); 3],
            precision_steps: h.precision_steps,
            tune: cfg.tmcmc.tune,
        };
        model.seat_from_prior(cfg.seed)?;
        Ok(model)
    }

    fn base(&self) -> Base {
        Base { nu1: self.nu1, nu2: self.nu2, max_l: self.max_l }
    }

    pub fn env_dim(&self) -> usize {
        self.layout.env_dim
    }

    /// Splits θ into (μ, β) for level 0 (G), 1 (G0) or 2 (H).
    fn level(theta: &[f64], d: usize, lev: usize) -> (f64, &[f64]) {
        let o = lev * (1 + d);
        (theta[o], &theta[o + 1..o + 1 + d])
    }

    fn precisions(&self, theta: &[f64]) -> Precisions {
        let d = self.env_dim();
        let (mg, bg) = Self::level(theta, d, 0);
        let (m0, b0) = Self::level(theta, d, 1);
        let (mh, bh) = Self::level(theta, d, 2);
        Precisions {
            ln_g: self.env.iter().map(|e| log_precision(mg, bg, e, self.c0, self.s0)).collect(),
            ln_g0: [
                log_precision(m0, b0, &self.env_bar[0], self.c0, self.s0),
                log_precision(m0, b0, &self.env_bar[1], self.c0, self.s0),
            ],
            ln_h: log_precision(mh, bh, &self.env_bar2, self.c0, self.s0),
        }
    }

    pub fn log_precisions(&self) -> (Vec<f64>, [f64; 2], f64) {
        let p = self.precisions(&self.theta);
        (p.ln_g, p.ln_g0, p.ln_h)
    }

    fn seat_from_prior(&mut self, seed: u64) -> Result<()> {
        let pr = self.precisions(&self.theta);
        let base = self.base();
        let m = self.m;
        for k in 0..2 {
            let mut w = AtomWork::owned(std::mem::take(&mut self.atoms[k]));
            for b in self.blocks.iter_mut().filter(|b| b.group == k) {
                for r in &mut b.restaurants {
                    let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::Init, 1, r.subject, b.gene, 0));
                    for slot in 0..m {
                        let seated = slot as u32;
                        match pick_counts(r.tables.iter().map(|t| t.customers), seated, pr.ln_g[r.subject], &mut rng) {
                            Some(t) => {
                                r.tables[t].customers += 1;
                                r.slot_table[slot] = t as u32;
                            }
                            None => {
                                let dish = draw_dish(&mut b.dishes, b.n_tables, &mut w, None, None, (pr.ln_g0[k], pr.ln_h), base, &mut rng)?;
                                attach_table(&mut b.dishes, &mut b.n_tables, dish);
                                r.tables.push(Table { customers: 1, dish: dish as u32 });
                                r.slot_table[slot] = (r.tables.len() - 1) as u32;
                            }
                        }
                    }
                }
            }
            self.atoms[k] = w.into_atoms();
        }
        self.check()
    }

    /// Franchise consistency: every count matches its assignments and no dead entries
    /// remain outside a stage.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Internal(format!("franchise inconsistency: {msg}")));
        let mut atom_counts = [vec![0u32; self.atoms[0].len()], vec![0u32; self.atoms[1].len()]];
        for b in &self.blocks {
            let mut dish_tables = vec![0u32; b.dishes.len()];
            for r in &b.restaurants {
                if r.slot_table.len() != self.m {
                    return bad(format!("restaurant {} has {} slots", r.subject, r.slot_table.len()));
                }
                let mut cust = vec![0u32; r.tables.len()];
                for &t in &r.slot_table {
                    let Some(c) = cust.get_mut(t as usize) else {
                        return bad(format!("slot seated at missing table {t}"));
                    };
                    *c += 1;
                }
                for (t, tab) in r.tables.iter().enumerate() {
                    if tab.customers != cust[t] || tab.customers == 0 {
                        return bad(format!("table {t} of restaurant {} has count {} but {} customers", r.subject, tab.customers, cust[t]));
                    }
                    let Some(c) = dish_tables.get_mut(tab.dish as usize) else {
                        return bad(format!("table serves missing dish {}", tab.dish));
                    };
                    *c += 1;
                }
                if r.z.iter().any(|&z| z >= self.m) {
                    return bad("allocation out of range".into());
                }
            }
            let total: u32 = dish_tables.iter().sum();
            if total != b.n_tables {
                return bad(format!("menu ({}, {}) counts {} tables, found {total}", b.gene, b.group, b.n_tables));
            }
            for (d, dish) in b.dishes.iter().enumerate() {
                if dish.tables != dish_tables[d] || dish.tables == 0 {
                    return bad(format!("dish {d} of ({}, {}) count {} vs {}", b.gene, b.group, dish.tables, dish_tables[d]));
                }
                let Some(c) = atom_counts[b.group].get_mut(dish.atom as usize) else {
                    return bad(format!("dish serves missing atom {}", dish.atom));
                };
                *c += 1;
            }
        }
        for k in 0..2 {
            for (a, atom) in self.atoms[k].iter().enumerate() {
                if atom.dishes != atom_counts[k][a] || atom.dishes == 0 {
                    return bad(format!("atom {a} of group {k} count {} vs {}", atom.dishes, atom_counts[k][a]));
                }
                if atom.freq.len() != self.max_l {
                    return bad(format!("atom {a} stores {} loci", atom.freq.len()));
                }
            }
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return bad("non-finite precision parameter".into());
        }
        Ok(())
    }

    fn customer_stage(&mut self, ctx: &mut SweepContext<'_>) -> Result<()> {
        let pr = self.precisions(&self.theta);
        let base = self.base();
        let m = self.m;
        let costs: Vec<u64> = self.blocks.iter().map(|b| (b.restaurants.len() * b.n_loci).max(1) as u64).collect();
        let schedule = plan_schedule(&costs, ctx.exec.workers())?;
        let (seed, sweep) = (ctx.seed, ctx.sweep);
        let atoms = &self.atoms;
        ctx.exec.run(&mut self.blocks, &schedule, |_, b| {
            let k = b.group;
            let mut w = AtomWork::snapshot(&atoms[k]);
            for r in &mut b.restaurants {
                let mut rng = RngStream::keyed(seed, StreamKey::new(Stage::Customer, r.subject, b.gene, 0, sweep));
                update_restaurant(r, &mut b.dishes, &mut b.n_tables, &mut w, m, pr.ln_g[r.subject], (pr.ln_g0[k], pr.ln_h), base, &mut rng)?;
            }
            b.pending = w.pending;
            Ok(())
        })?;
        // merge new atoms in block order and recount
        for k in 0..2 {
            let snap = self.atoms[k].len() as u32;
            for b in self.blocks.iter_mut().filter(|b| b.group == k) {
                let offset = self.atoms[k].len() as u32;
                for d in &mut b.dishes {
                    if d.atom >= snap {
                        d.atom = offset + (d.atom - snap);
                    }
                }
                self.atoms[k].append(&mut b.pending);
            }
        }
        self.recount_atoms();
        Ok(())
    }

    fn recount_atoms(&mut self) {
        for k in 0..2 {
            for a in &mut self.atoms[k] {
                a.dishes = 0;
            }
        }
        for b in &self.blocks {
            for d in &b.dishes {
                if d.tables > 0 {
                    self.atoms[b.group][d.atom as usize].dishes += 1;
                }
            }
        }
    }

    /// Table → dish, dish → atom and atom-value updates, then garbage collection.
    fn dish_stage(&mut self, ctx: &mut SweepContext<'_>) -> Result<()> {
        let pr = self.precisions(&self.theta);
        let base = self.base();
        let m = self.m;
        for k in 0..2 {
            let mut w = AtomWork::owned(std::mem::take(&mut self.atoms[k]));
            let mut dish_suffs: Vec<Vec<Suff>> = Vec::new();
            for b in self.blocks.iter_mut().filter(|b| b.group == k) {
                let mut rng = ctx.stream(StreamKey::new(Stage::Dish, 0, b.gene, k, ctx.sweep));
                let l = b.n_loci;
                let mut table_suffs: Vec<Vec<Suff>> = Vec::with_capacity(b.restaurants.len());
                for r in &mut b.restaurants {
                    let slots = r.slot_suffs(m, l);
                    let mut ts = vec![Suff::zeros(l); r.tables.len()];
                    for (slot, &t) in r.slot_table.iter().enumerate() {
                        ts[t as usize].add(&slots[slot]);
                    }
                    for (t, d) in ts.iter().enumerate() {
                        detach_table(&mut b.dishes, &mut b.n_tables, &mut w, r.tables[t].dish as usize);
                        let dish = if d.is_empty() {
                            draw_dish(&mut b.dishes, b.n_tables, &mut w, None, None, (pr.ln_g0[k], pr.ln_h), base, &mut rng)?
                        } else {
                            let pred = Pred::new(&w, d, pr.ln_h, base);
                            let (lw, _) = pred.dish_weights(&b.dishes, b.n_tables, pr.ln_g0[k]);
                            draw_dish(&mut b.dishes, b.n_tables, &mut w, Some((&pred, &lw)), Some(d), (pr.ln_g0[k], pr.ln_h), base, &mut rng)?
                        };
                        attach_table(&mut b.dishes, &mut b.n_tables, dish);
                        r.tables[t].dish = dish as u32;
                    }
                    table_suffs.push(ts);
                }
                // dish → atom
                let mut ds = vec![Suff::zeros(l); b.dishes.len()];
                for (r, ts) in b.restaurants.iter().zip(&table_suffs) {
                    for (t, s) in ts.iter().enumerate() {
                        ds[r.tables[t].dish as usize].add(s);
                    }
                }
                let mut rng = ctx.stream(StreamKey::new(Stage::Dish, 1, b.gene, k, ctx.sweep));
                for (di, d) in ds.iter().enumerate() {
                    if b.dishes[di].tables == 0 {
                        continue;
                    }
                    w.dec(b.dishes[di].atom as usize);
                    let a = if d.is_empty() {
                        draw_atom(&mut w, None, None, pr.ln_h, base, &mut rng)?
                    } else {
                        let pred = Pred::new(&w, d, pr.ln_h, base);
                        draw_atom(&mut w, Some(&pred), Some(d), pr.ln_h, base, &mut rng)?
                    };
                    b.dishes[di].atom = a as u32;
                }
                dish_suffs.push(ds);
            }
            // atom values from their conjugate posteriors
            let n_atoms = w.counts.len();
            let mut s = vec![0u64; n_atoms * self.max_l];
            let mut f = vec![0u64; n_atoms * self.max_l];
            for (b, ds) in self.blocks.iter().filter(|b| b.group == k).zip(&dish_suffs) {
                for (di, d) in ds.iter().enumerate() {
                    if b.dishes[di].tables == 0 {
                        continue;
                    }
                    let a = b.dishes[di].atom as usize;
                    for r in 0..b.n_loci {
                        s[a * self.max_l + r] += d.s[r] as u64;
                        f[a * self.max_l + r] += d.f[r] as u64;
                    }
                }
            }
            let mut rng = ctx.stream(StreamKey::new(Stage::Dish, 2, 0, k, ctx.sweep));
            let mut atoms = w.into_atoms();
            for (a, atom) in atoms.iter_mut().enumerate() {
                if atom.dishes == 0 {
                    continue;
                }
                for r in 0..self.max_l {
                    let i = a * self.max_l + r;
                    atom.freq[r] = beta_log(self.nu1 + s[i] as f64, self.nu2 + f[i] as f64, &mut rng);
                }
            }
            self.atoms[k] = atoms;
        }
        self.gc();
        Ok(())
    }

    /// Drops dead dishes and atoms, remapping ids.
    fn gc(&mut self) {
        let mut atom_map = [
            vec![u32::MAX; self.atoms[0].len()],
            vec![u32::MAX; self.atoms[1].len()],
        ];
        for k in 0..2 {
            let old = std::mem::take(&mut self.atoms[k]);
            for (a, atom) in old.into_iter().enumerate() {
                if atom.dishes > 0 {
                    atom_map[k][a] = self.atoms[k].len() as u32;
                    self.atoms[k].push(atom);
                }
            }
        }
        for b in &mut self.blocks {
            let mut map = vec![u32::MAX; b.dishes.len()];
            let old = std::mem::take(&mut b.dishes);
            for (d, mut dish) in old.into_iter().enumerate() {
                if dish.tables > 0 {
                    map[d] = b.dishes.len() as u32;
                    dish.atom = atom_map[b.group][dish.atom as usize];
                    b.dishes.push(dish);
                }
            }
            for r in &mut b.restaurants {
                for t in &mut r.tables {
                    t.dish = map[t.dish as usize];
                }
            }
        }
    }

    /// Table, dish and atom counts at the three urn levels:
    /// (per restaurant (subject, tables), per (j,k) (dishes, tables), per k (atoms, dishes)).
    fn urn_counts(&self) -> UrnCounts {
        let mut rest = Vec::new();
        let mut menus = Vec::new();
        let mut groups = [(0, 0); 2];
        for b in &self.blocks {
            for r in &b.restaurants {
                rest.push((r.subject, r.tables.len()));
            }
            let live = b.dishes.iter().filter(|d| d.tables > 0).count();
            menus.push((b.group, live, b.n_tables as usize));
            groups[b.group].1 += live;
        }
        for k in 0..2 {
            groups[k].0 = self.atoms[k].iter().filter(|a| a.dishes > 0).count();
        }
        (rest, menus, groups)
    }

    fn theta_log_prior(&self, theta: &[f64]) -> f64 {
        let d = self.env_dim();
        let mut lp = 0.0;
        for lev in 0..3 {
            let (mu, beta) = Self::level(theta, d, lev);
            if !(mu > 0.0 && mu < 1.0) {
                return f64::NEG_INFINITY;
            }
            for &b in beta {
                if !(b > -1.0 && b < 1.0) {
                    return f64::NEG_INFINITY;
                }
                lp -= std::f64::consts::LN_2;
            }
        }
        lp
    }

    /// Uniform priors plus the CRP likelihood of the current franchise at all levels.
    pub fn precision_log_target(&self, theta: &[f64]) -> f64 {
        let counts = self.urn_counts();
        let d = self.env_dim();
        (0..3).map(|lev| self.level_log_target(lev, &theta[lev * (1 + d)..(lev + 1) * (1 + d)], &counts)).sum()
    }

    /// Given the franchise the three levels are independent; this is the target of
    /// level `lev` (0 = G, 1 = G0, 2 = H) at `x` = (μ, β).
    fn level_log_target(&self, lev: usize, x: &[f64], counts: &UrnCounts) -> f64 {
        let (mu, beta) = (x[0], &x[1..]);
        if !(mu > 0.0 && mu < 1.0) || beta.iter().any(|b| !(*b > -1.0 && *b < 1.0)) {
            return f64::NEG_INFINITY;
        }
        let mut t = -(beta.len() as f64) * std::f64::consts::LN_2;
        let (rest, menus, groups) = counts;
        match lev {
            0 => {
                for &(i, tables) in rest {
                    t += crp_log_likelihood(log_precision(mu, beta, &self.env[i], self.c0, self.s0), tables, self.m);
                }
            }
            1 => {
                let ln = [0, 1].map(|k| log_precision(mu, beta, &self.env_bar[k], self.c0, self.s0));
                for &(k, dishes, tables) in menus {
                    t += crp_log_likelihood(ln[k], dishes, tables);
                }
            }
            _ => {
                let ln = log_precision(mu, beta, &self.env_bar2, self.c0, self.s0);
                for &(atoms, dishes) in groups {
                    t += crp_log_likelihood(ln, atoms, dishes);
                }
            }
        }
        t
    }

    /// `precision_steps` TMCMC moves on each level's (μ, β) block.
    fn precision_stage(&mut self, ctx: &mut SweepContext<'_>) -> Result<()> {
        let counts = self.urn_counts();
        let d = self.env_dim();
        for lev in 0..3 {
            let range = lev * (1 + d)..(lev + 1) * (1 + d);
            let mut x = self.theta[range.clone()].to_vec();
            let mut lp = self.level_log_target(lev, &x, &counts);
            if !lp.is_finite() {
                return Err(Error::Internal(format!("precision target of level {lev} is {lp} at the current state")));
            }
            let mut rng = ctx.stream(StreamKey::new(Stage::Precision, lev, 0, 0, ctx.sweep));
            // the step file keeps the first move per level; the rest only count
            let mut rest = AcceptanceStats::default();
            for n in 0..self.precision_steps {
                let step = block_update_cached(&x, lp, |t| self.level_log_target(lev, t, &counts), &self.theta_cfg[lev], &mut rng);
                if ctx.tuning && self.tune {
                    self.theta_tuner[lev].observe_step(&step.record, &mut self.theta_cfg[lev].scales);
                }
                if n == 0 {
                    ctx.record_step("precision", step.record);
                } else {
                    rest.add(&step.record);
                }
                x = step.x;
                lp = step.log_target;
            }
            ctx.record_stats("precision", &rest);
            self.theta[range].copy_from_slice(&x);
        }
        Ok(())
    }

    fn slot_p<'a>(&'a self, b: &GeneGroup, r: &Restaurant, slot: usize) -> &'a [LogFreq] {
        let t = r.slot_table[slot] as usize;
        let d = r.tables[t].dish as usize;
        &self.atoms[b.group][b.dishes[d].atom as usize].freq[..b.n_loci]
    }

    /// Allocation-weighted frequency per locus, averaged over the group's subjects.
    pub fn pbar(&self, gene: usize, group: usize) -> Vec<f64> {
        let b = &self.blocks[2 * gene + group];
        let mut out = vec![0.0; b.n_loci];
        let n = b.restaurants.len() as f64;
        for r in &b.restaurants {
            let units = r.z.len().max(1) as f64;
            for &slot in &r.z {
                for (o, f) in out.iter_mut().zip(self.slot_p(b, r, slot)) {
                    *o += f.p / units / n;
                }
            }
        }
        out
    }

    /// Mean of p over slots and loci for every (subject, gene).
    pub fn abar(&self) -> Vec<Vec<f64>> {
        let n_genes = self.blocks.len() / 2;
        let mut out = vec![vec![0.0; n_genes]; self.env.len()];
        for b in &self.blocks {
            for r in &b.restaurants {
                let mut s = 0.0;
                for slot in 0..self.m {
                    s += self.slot_p(b, r, slot).iter().map(|f| f.p).sum::<f64>();
                }
                out[r.subject][b.gene] = s / (self.m * b.n_loci) as f64;
            }
        }
        out
    }

    /// Live atoms per group, and those serving at least one data-bearing slot.
    pub fn atom_usage(&self) -> [(usize, usize); 2] {
        let mut used = [vec![false; self.atoms[0].len()], vec![false; self.atoms[1].len()]];
        for b in &self.blocks {
            for r in &b.restaurants {
                for &slot in &r.z {
                    let t = r.slot_table[slot] as usize;
                    used[b.group][b.dishes[r.tables[t].dish as usize].atom as usize] = true;
                }
            }
        }
        [0, 1].map(|k| (self.atoms[k].len(), used[k].iter().filter(|&&u| u).count()))
    }

    fn compute_log_joint(&self) -> f64 {
        let pr = self.precisions(&self.theta);
        let mut t = self.theta_log_prior(&self.theta);
        for b in &self.blocks {
            let k = b.group;
            for r in &b.restaurants {
                for (u, &slot) in r.z.iter().enumerate() {
                    t += unit_log_lik(r.data.unit(u), r.data.trials, self.slot_p(b, r, slot));
                }
                t -= r.z.len() as f64 * (self.m as f64).ln();
                t += crp_log_likelihood(pr.ln_g[r.subject], r.tables.len(), self.m);
                t += r.tables.iter().map(|x| ln_gamma(x.customers as f64)).sum::<f64>();
            }
            t += crp_log_likelihood(pr.ln_g0[k], b.dishes.len(), b.n_tables as usize);
            t += b.dishes.iter().map(|d| ln_gamma(d.tables as f64)).sum::<f64>();
        }
        for k in 0..2 {
            let dishes: usize = self.atoms[k].iter().map(|a| a.dishes as usize).sum();
            t += crp_log_likelihood(pr.ln_h, self.atoms[k].len(), dishes);
            for a in &self.atoms[k] {
                t += ln_gamma(a.dishes as f64);
                t += a.freq.iter().map(|f| beta_ln_pdf(f.ln_p, f.ln_q, self.nu1, self.nu2)).sum::<f64>();
            }
        }
        t
    }
}

impl ChainModel for HdpModel {
    fn layout(&self) -> Layout {
        self.layout.clone()
    }

    fn columns(&self) -> Vec<String> {
        let d = self.env_dim();
        let mut c = Vec::new();
        for name in ["G", "G0", "H"] {
            c.push(format!("mu_{name}"));
            for e in 0..d {
                c.push(format!("beta_{name}.{e}"));
            }
        }
        for k in 0..2 {
            c.push(format!("atoms.{k}"));
            c.push(format!("atoms_data.{k}"));
        }
        for b in &self.blocks {
            c.push(format!("dishes.{}.{}", b.gene, b.group));
            c.push(format!("tables.{}.{}", b.gene, b.group));
        }
        for b in &self.blocks {
            for r in 0..b.n_loci {
                c.push(format!("pbar.{}.{}.{r}", b.gene, b.group));
            }
        }
        let n_genes = self.blocks.len() / 2;
        for i in 0..self.env.len() {
            for j in 0..n_genes {
                c.push(format!("abar.{i}.{j}"));
            }
        }
        c
    }

    fn sweep(&mut self, ctx: &mut SweepContext<'_>) -> Result<()> {
        ctx.timed("customers", |ctx| self.customer_stage(ctx))?;
        ctx.timed("dishes", |ctx| self.dish_stage(ctx))?;
        ctx.timed("precision", |ctx| self.precision_stage(ctx))
    }

    fn record(&self) -> Vec<f64> {
        let mut out = self.theta.clone();
        for (atoms, used) in self.atom_usage() {
            out.push(atoms as f64);
            out.push(used as f64);
        }
        for b in &self.blocks {
            out.push(b.dishes.len() as f64);
            out.push(b.n_tables as f64);
        }
        for b in &self.blocks {
            out.extend(self.pbar(b.gene, b.group));
        }
        for row in self.abar() {
            out.extend(row);
        }
        out
    }

    fn log_joint(&self) -> f64 {
        self.compute_log_joint()
    }

    fn log_joint_from_scratch(&self) -> Result<f64> {
        self.check()?;
        Ok(self.compute_log_joint())
    }
}
