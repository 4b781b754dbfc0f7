//! Case-control genotype data: per-chromosome minor-allele indicators grouped
//! into genes, with optional numeric environmental covariates per subject.
//!
//! Genotypes are stored per chromosome rather than as 0/1/2 dosages because every
//! model in this crate has a chromosome-level Bernoulli likelihood. Missing values
//! are rejected at ingest.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Case-control status. Controls are group 0, cases group 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    Control,
    Case,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Control, Group::Case];

    pub fn index(self) -> usize {
        match self {
            Group::Control => 0,
            Group::Case => 1,
        }
    }

    pub fn from_index(k: usize) -> Result<Group> {
        match k {
            0 => Ok(Group::Control),
            1 => Ok(Group::Case),
            _ => Err(Error::Index(format!("group {k} (expected 0 or 1)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub group: Group,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gene {
    pub name: String,
    /// Global locus indices, in within-gene order.
    pub loci: Vec<usize>,
}

/// Conditional-independence unit of a sampler sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockKey {
    /// Gene-gene model mixtures: one block per (gene, group).
    GeneGroup { gene: usize, group: usize },
    /// Gene-environment and HDP models: one block per (subject, gene, group).
    SubjectGene {
        subject: usize,
        gene: usize,
        group: usize,
    },
}

impl BlockKey {
    pub fn check(&self, ds: &GenotypeDataset) -> Result<()> {
        let (gene, group) = match *self {
            BlockKey::GeneGroup { gene, group } => (gene, group),
            BlockKey::SubjectGene {
                subject,
                gene,
                group,
            } => {
                if subject >= ds.n_subjects() {
                    return Err(Error::Index(format!("subject {subject}")));
                }
                if ds.subjects[subject].group.index() != group {
                    return Err(Error::Index(format!(
                        "subject {subject} is not in group {group}"
                    )));
                }
                (gene, group)
            }
        };
        if gene >= ds.n_genes() {
            return Err(Error::Index(format!("gene {gene}")));
        }
        Group::from_index(group).map(|_| ())
    }
}

/// Validated genotype dataset. Read-only after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenotypeDataset {
    subjects: Vec<Subject>,
    locus_names: Vec<String>,
    genes: Vec<Gene>,
    /// locus -> (gene, position within gene)
    locus_gene: Vec<(usize, usize)>,
    /// Row order of the gene map file (global locus indices).
    map_order: Vec<usize>,
    /// `[subject][locus][chromosome]`, flattened.
    alleles: Vec<u8>,
    env_names: Vec<String>,
    /// `[subject][covariate]`, flattened.
    environment: Vec<f64>,
}

impl GenotypeDataset {
    /// Builds a dataset from in-memory tables.
    ///
    /// `alleles` is indexed `[subject][locus][chromosome]`; `genes` lists, for each gene,
    /// the global loci it contains. The genes must partition the locus set.
    pub fn new(
        subjects: Vec<Subject>,
        locus_names: Vec<String>,
        genes: Vec<Gene>,
        alleles: Vec<u8>,
        env_names: Vec<String>,
        environment: Vec<f64>,
    ) -> Result<Self> {
        let n_loci = locus_names.len();
        let n = subjects.len();
        if alleles.len() != n * n_loci * 2 {
            return Err(Error::Dataset(format!(
                "expected {} allele indicators ({} subjects x {} loci x 2 chromosomes), got {}",
                n * n_loci * 2,
                n,
                n_loci,
                alleles.len()
            )));
        }
        if let Some(pos) = alleles.iter().position(|&a| a > 1) {
            return Err(Error::Dataset(format!(
                "non-binary genotype value {} at subject {}, locus {}",
                alleles[pos],
                pos / (2 * n_loci),
                (pos / 2) % n_loci.max(1)
            )));
        }
        let d = env_names.len();
        if environment.len() != n * d {
            return Err(Error::Dataset(format!(
                "expected {} environmental values, got {}",
                n * d,
                environment.len()
            )));
        }
        if environment.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite environmental covariate".into()));
        }
        let mut locus_gene = vec![(usize::MAX, 0); n_loci];
        for (j, gene) in genes.iter().enumerate() {
            if gene.loci.is_empty() {
                return Err(Error::Dataset(format!("gene {} has no loci", gene.name)));
            }
            for (r, &l) in gene.loci.iter().enumerate() {
                if l >= n_loci {
                    return Err(Error::Dataset(format!(
                        "gene {} refers to unknown locus index {l}",
                        gene.name
                    )));
                }
                if locus_gene[l].0 != usize::MAX {
                    return Err(Error::Dataset(format!(
                        "locus {} assigned to more than one gene",
                        locus_names[l]
                    )));
                }
                locus_gene[l] = (j, r);
            }
        }
        if let Some(l) = locus_gene.iter().position(|&(j, _)| j == usize::MAX) {
            return Err(Error::Dataset(format!(
                "locus {} missing from gene map",
                locus_names[l]
            )));
        }
        let mut seen = HashMap::new();
        for s in &subjects {
            if seen.insert(s.id.as_str(), ()).is_some() {
                return Err(Error::Dataset(format!("duplicate subject id {}", s.id)));
            }
        }
        let map_order = genes.iter().flat_map(|g| g.loci.iter().copied()).collect();
        Ok(Self {
            subjects,
            locus_names,
            genes,
            locus_gene,
            map_order,
            alleles,
            env_names,
            environment,
        })
    }

    /// Builds a dataset from 0/1/2 minor-allele dosages, `[subject][locus]`.
    /// Heterozygotes are stored as (1, 0).
    pub fn from_dosages(
        subjects: Vec<Subject>,
        locus_names: Vec<String>,
        genes: Vec<Gene>,
        dosages: &[u8],
        env_names: Vec<String>,
        environment: Vec<f64>,
    ) -> Result<Self> {
        let mut alleles = Vec::with_capacity(dosages.len() * 2);
        for &d in dosages {
            let pair = match d {
                0 => [0, 0],
                1 => [1, 0],
                2 => [1, 1],
                other => {
                    return Err(Error::Dataset(format!("dosage {other} is not in 0..=2")));
                }
            };
            alleles.extend_from_slice(&pair);
        }
        Self::new(subjects, locus_names, genes, alleles, env_names, environment)
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn n_loci(&self) -> usize {
        self.locus_names.len()
    }

    pub fn gene_len(&self, j: usize) -> usize {
        self.genes[j].loci.len()
    }

    pub fn loci_per_gene(&self) -> Vec<usize> {
        self.genes.iter().map(|g| g.loci.len()).collect()
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn genes(&self) -> &[Gene] {
        &self.genes
    }

    pub fn locus_names(&self) -> &[String] {
        &self.locus_names
    }

    pub fn env_names(&self) -> &[String] {
        &self.env_names
    }

    pub fn env_dim(&self) -> usize {
        self.env_names.len()
    }

    pub fn group(&self, i: usize) -> Group {
        self.subjects[i].group
    }

    /// Subject indices belonging to `group`, in dataset order.
    pub fn members(&self, group: Group) -> Vec<usize> {
        (0..self.n_subjects())
            .filter(|&i| self.subjects[i].group == group)
            .collect()
    }

    pub fn group_sizes(&self) -> [usize; 2] {
        let mut n = [0; 2];
        for s in &self.subjects {
            n[s.group.index()] += 1;
        }
        n
    }

    /// Environmental covariate vector of subject `i` (empty when d = 0).
    pub fn env(&self, i: usize) -> &[f64] {
        let d = self.env_dim();
        &self.environment[i * d..(i + 1) * d]
    }

    /// Mean covariate vector of a group.
    pub fn env_group_mean(&self, group: Group) -> Vec<f64> {
        let d = self.env_dim();
        let members = self.members(group);
        let mut mean = vec![0.0; d];
        for &i in &members {
            for (m, v) in mean.iter_mut().zip(self.env(i)) {
                *m += v;
            }
        }
        if !members.is_empty() {
            for m in &mut mean {
                *m /= members.len() as f64;
            }
        }
        mean
    }

    pub fn allele(&self, i: usize, locus: usize, chrom: usize) -> u8 {
        self.alleles[(i * self.n_loci() + locus) * 2 + chrom]
    }

    /// Both chromosome indicators at position `r` of gene `j`, in stored order.
    pub fn diploid_view(&self, i: usize, j: usize, r: usize) -> Result<(u8, u8)> {
        if i >= self.n_subjects() {
            return Err(Error::Index(format!("subject {i}")));
        }
        if j >= self.n_genes() {
            return Err(Error::Index(format!("gene {j}")));
        }
        if r >= self.gene_len(j) {
            return Err(Error::Index(format!("locus {r} of gene {j}")));
        }
        let l = self.genes[j].loci[r];
        Ok((self.allele(i, l, 0), self.allele(i, l, 1)))
    }

    /// Minor-allele count (0..=2) at position `r` of gene `j`. Indices are not checked.
    pub fn minor_count(&self, i: usize, j: usize, r: usize) -> u8 {
        let l = self.genes[j].loci[r];
        let base = (i * self.n_loci() + l) * 2;
        self.alleles[base] + self.alleles[base + 1]
    }

    /// Minor-allele counts of gene `j` for subject `i`, one per locus.
    pub fn gene_counts(&self, i: usize, j: usize) -> Vec<u8> {
        (0..self.gene_len(j)).map(|r| self.minor_count(i, j, r)).collect()
    }

    /// Haplotype of gene `j` on chromosome `chrom` for subject `i`.
    pub fn haplotype(&self, i: usize, j: usize, chrom: usize) -> Vec<u8> {
        self.genes[j]
            .loci
            .iter()
            .map(|&l| self.allele(i, l, chrom))
            .collect()
    }

    /// Total minor-allele count per locus of gene `j`, over all subjects and chromosomes.
    pub fn gene_allele_totals(&self, j: usize) -> Vec<usize> {
        (0..self.gene_len(j))
            .map(|r| {
                (0..self.n_subjects())
                    .map(|i| self.minor_count(i, j, r) as usize)
                    .sum()
            })
            .collect()
    }

    /// Checks the invariants required before any model is fitted.
    pub fn check_fittable(&self) -> Result<()> {
        let [n0, n1] = self.group_sizes();
        if n0 == 0 || n1 == 0 {
            return Err(Error::Dataset(format!(
                "both groups must be non-empty (controls: {n0}, cases: {n1})"
            )));
        }
        if self.n_genes() == 0 {
            return Err(Error::Dataset("dataset has no genes".into()));
        }
        Ok(())
    }

    /// Returns a copy with subjects reordered: `order[new] = old`.
    pub fn reorder_subjects(&self, order: &[usize]) -> Result<Self> {
        let n = self.n_subjects();
        let mut check = order.to_vec();
        check.sort_unstable();
        if check != (0..n).collect::<Vec<_>>() {
            return Err(Error::InvalidParameter("order is not a permutation".into()));
        }
        let per = self.n_loci() * 2;
        let d = self.env_dim();
        let mut out = self.clone();
        out.subjects = order.iter().map(|&o| self.subjects[o].clone()).collect();
        out.alleles = order
            .iter()
            .flat_map(|&o| self.alleles[o * per..(o + 1) * per].iter().copied())
            .collect();
        out.environment = order
            .iter()
            .flat_map(|&o| self.environment[o * d..(o + 1) * d].iter().copied())
            .collect();
        Ok(out)
    }

    /// Same shape with every genotype and covariate replaced.
    pub(crate) fn with_tables(&self, alleles: Vec<u8>, environment: Vec<f64>) -> Result<Self> {
        Self::new(
            self.subjects.clone(),
            self.locus_names.clone(),
            self.genes.clone(),
            alleles,
            self.env_names.clone(),
            environment,
        )
    }
}

/// Seeded within-gene permutations: `perm[j][new_position] = old_position`.
///
/// Each gene is shuffled independently by Durstenfeld's Fisher-Yates (for i from the
/// top down, swap i with `random_range(0..=i)`), drawing from one ChaCha8 generator
/// seeded with `seed` and visiting genes in order.
pub fn locus_permutation(ds: &GenotypeDataset, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ds.genes
        .iter()
        .map(|g| {
            let mut p: Vec<usize> = (0..g.loci.len()).collect();
            for i in (1..p.len()).rev() {
                let j = rng.random_range(0..=i);
                p.swap(i, j);
            }
            p
        })
        .collect()
}

/// Permutes locus columns within each gene. Gene boundaries are unchanged; locus
/// names travel with their data columns.
pub fn permute_locus_labels(ds: &GenotypeDataset, seed: u64) -> GenotypeDataset {
    let perm = locus_permutation(ds, seed);
    log::info!("within-gene locus permutation (seed {seed}): {perm:?}");
    // new global locus order: gene by gene, positions permuted
    let mut new_to_old = Vec::with_capacity(ds.n_loci());
    let mut genes = Vec::with_capacity(ds.n_genes());
    for (g, p) in ds.genes.iter().zip(&perm) {
        let start = new_to_old.len();
        new_to_old.extend(p.iter().map(|&r| g.loci[r]));
        genes.push(Gene {
            name: g.name.clone(),
            loci: (start..new_to_old.len()).collect(),
        });
    }
    let n_loci = ds.n_loci();
    let mut alleles = Vec::with_capacity(ds.alleles.len());
    for i in 0..ds.n_subjects() {
        for &old in &new_to_old {
            let base = (i * n_loci + old) * 2;
            alleles.extend_from_slice(&ds.alleles[base..base + 2]);
        }
    }
    let locus_names = new_to_old
        .iter()
        .map(|&old| ds.locus_names[old].clone())
        .collect();
    GenotypeDataset::new(
        ds.subjects.clone(),
        locus_names,
        genes,
        alleles,
        ds.env_names.clone(),
        ds.environment.clone(),
    )
    .expect("permuting a valid dataset yields a valid dataset")
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::parse(path, 0, format!("cannot open: {e}")))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

fn records(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let mut out = Vec::new();
    for (n, rec) in reader(path)?.records().enumerate() {
        let line = n + 1;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        out.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(out)
}

/// Reads and validates the genotype, gene map and (optional) environment files.
pub fn load_dataset(
    genotype_path: &Path,
    genemap_path: &Path,
    env_path: Option<&Path>,
) -> Result<GenotypeDataset> {
    let rows = records(genotype_path)?;
    let Some((hline, header)) = rows.first() else {
        return Err(Error::parse(genotype_path, 1, "empty genotype file"));
    };
    if header.len() < 4 || header[0] != "subject" || header[1] != "group" || header[2] != "chrom"
    {
        return Err(Error::parse(
            genotype_path,
            *hline,
            "header must be subject,group,chrom,<locus_1>,...",
        ));
    }
    let locus_names: Vec<String> = header[3..].to_vec();
    let n_loci = locus_names.len();

    let mut subjects: Vec<Subject> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut chroms: Vec<[Option<Vec<u8>>; 2]> = Vec::new();
    for (line, rec) in &rows[1..] {
        let line = *line;
        if rec.len() != header.len() {
            return Err(Error::parse(
                genotype_path,
                line,
                format!("malformed row: expected {} fields, got {}", header.len(), rec.len()),
            ));
        }
        let group = match rec[1].as_str() {
            "0" => Group::Control,
            "1" => Group::Case,
            other => {
                return Err(Error::parse(
                    genotype_path,
                    line,
                    format!("group label must be 0 or 1, got {other:?}"),
                ))
            }
        };
        let chrom = match rec[2].as_str() {
            "1" => 0,
            "2" => 1,
            other => {
                return Err(Error::parse(
                    genotype_path,
                    line,
                    format!("chromosome must be 1 or 2, got {other:?}"),
                ))
            }
        };
        let mut values = Vec::with_capacity(n_loci);
        for (c, v) in rec[3..].iter().enumerate() {
            values.push(match v.as_str() {
                "0" => 0,
                "1" => 1,
                "" | "NA" | "." => {
                    return Err(Error::parse(
                        genotype_path,
                        line,
                        format!("missing genotype at locus {}", locus_names[c]),
                    ))
                }
                other => {
                    return Err(Error::parse(
                        genotype_path,
                        line,
                        format!("non-binary genotype {other:?} at locus {}", locus_names[c]),
                    ))
                }
            });
        }
        let id = rec[0].clone();
        let i = match index.get(&id) {
            Some(&i) => {
                if subjects[i].group != group {
                    return Err(Error::parse(
                        genotype_path,
                        line,
                        format!("subject {id} has conflicting group labels"),
                    ));
                }
                i
            }
            None => {
                index.insert(id.clone(), subjects.len());
                subjects.push(Subject { id: id.clone(), group });
                chroms.push([None, None]);
                subjects.len() - 1
            }
        };
        if chroms[i][chrom].is_some() {
            return Err(Error::parse(
                genotype_path,
                line,
                format!("duplicate chromosome {} for subject {id}", chrom + 1),
            ));
        }
        chroms[i][chrom] = Some(values);
    }
    let mut alleles = vec![0u8; subjects.len() * n_loci * 2];
    for (i, pair) in chroms.iter().enumerate() {
        for (s, c) in pair.iter().enumerate() {
            let Some(values) = c else {
                return Err(Error::parse(
                    genotype_path,
                    0,
                    format!("subject {} lacks chromosome {}", subjects[i].id, s + 1),
                ));
            };
            for (l, &v) in values.iter().enumerate() {
                alleles[(i * n_loci + l) * 2 + s] = v;
            }
        }
    }

    // gene map
    let map_rows = records(genemap_path)?;
    let Some((mline, mheader)) = map_rows.first() else {
        return Err(Error::parse(genemap_path, 1, "empty gene map"));
    };
    if mheader.len() != 2 || mheader[0] != "locus" || mheader[1] != "gene" {
        return Err(Error::parse(genemap_path, *mline, "header must be locus,gene"));
    }
    let locus_index: HashMap<&str, usize> = locus_names
        .iter()
        .enumerate()
        .map(|(l, n)| (n.as_str(), l))
        .collect();
    let mut gene_order: Vec<String> = Vec::new();
    let mut gene_loci: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut assigned = vec![false; n_loci];
    let mut map_order = Vec::with_capacity(n_loci);
    for (line, rec) in &map_rows[1..] {
        if rec.len() != 2 {
            return Err(Error::parse(genemap_path, *line, "malformed row: expected locus,gene"));
        }
        let Some(&l) = locus_index.get(rec[0].as_str()) else {
            return Err(Error::parse(
                genemap_path,
                *line,
                format!("locus {} is not present in the genotype file", rec[0]),
            ));
        };
        if assigned[l] {
            return Err(Error::parse(
                genemap_path,
                *line,
                format!("locus {} listed more than once", rec[0]),
            ));
        }
        assigned[l] = true;
        map_order.push(l);
        let j = match gene_order.iter().position(|g| *g == rec[1]) {
            Some(j) => j,
            None => {
                gene_order.push(rec[1].clone());
                gene_order.len() - 1
            }
        };
        gene_loci.entry(j).or_default().push(l);
    }
    if let Some(l) = assigned.iter().position(|a| !a) {
        return Err(Error::parse(
            genemap_path,
            0,
            format!("locus {} missing from gene map", locus_names[l]),
        ));
    }
    let genes = gene_order
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let mut loci = gene_loci.remove(&j).unwrap_or_default();
            // within-gene order follows the genotype columns
            loci.sort_unstable();
            Gene { name, loci }
        })
        .collect();

    // environment
    let (env_names, environment) = match env_path {
        None => (Vec::new(), Vec::new()),
        Some(path) => {
            let env_rows = records(path)?;
            let Some((eline, eheader)) = env_rows.first() else {
                return Err(Error::parse(path, 1, "empty environment file"));
            };
            if eheader.len() < 2 || eheader[0] != "subject" {
                return Err(Error::parse(path, *eline, "header must be subject,<cov_1>,..."));
            }
            let names: Vec<String> = eheader[1..].to_vec();
            let d = names.len();
            let mut values: Vec<Option<Vec<f64>>> = vec![None; subjects.len()];
            for (line, rec) in &env_rows[1..] {
                if rec.len() != d + 1 {
                    return Err(Error::parse(
                        path,
                        *line,
                        format!("malformed row: expected {} fields, got {}", d + 1, rec.len()),
                    ));
                }
                let Some(&i) = index.get(&rec[0]) else {
                    return Err(Error::parse(
                        path,
                        *line,
                        format!("subject {} is absent from the genotype file", rec[0]),
                    ));
                };
                if values[i].is_some() {
                    return Err(Error::parse(path, *line, format!("duplicate subject {}", rec[0])));
                }
                let mut row = Vec::with_capacity(d);
                for (c, v) in rec[1..].iter().enumerate() {
                    let x: f64 = v.parse().map_err(|_| {
                        Error::parse(path, *line, format!("covariate {} is not numeric: {v:?}", names[c]))
                    })?;
                    if !x.is_finite() {
                        return Err(Error::parse(path, *line, format!("covariate {} is not finite", names[c])));
                    }
                    row.push(x);
                }
                values[i] = Some(row);
            }
            let mut flat = Vec::with_capacity(subjects.len() * d);
            for (i, v) in values.into_iter().enumerate() {
                let Some(v) = v else {
                    return Err(Error::parse(
                        path,
                        0,
                        format!("subject {} has no environment row", subjects[i].id),
                    ));
                };
                flat.extend(v);
            }
            (names, flat)
        }
    };

    let mut ds = GenotypeDataset::new(subjects, locus_names, genes, alleles, env_names, environment)?;
    ds.map_order = map_order;
    Ok(ds)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes the dataset in the three-file text format read by [`load_dataset`].
/// The environment file is written only when `env_path` is given and d > 0.
pub fn write_dataset(
    ds: &GenotypeDataset,
    genotype_path: &Path,
    genemap_path: &Path,
    env_path: Option<&Path>,
) -> Result<()> {
    let mut w = create(genotype_path)?;
    write!(w, "subject,group,chrom")?;
    for name in &ds.locus_names {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (i, s) in ds.subjects.iter().enumerate() {
        for chrom in 0..2 {
            write!(w, "{},{},{}", s.id, s.group.index(), chrom + 1)?;
            for l in 0..ds.n_loci() {
                write!(w, ",{}", ds.allele(i, l, chrom))?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;

    let mut w = create(genemap_path)?;
    writeln!(w, "locus,gene")?;
    for &l in &ds.map_order {
        let (j, _) = ds.locus_gene[l];
        writeln!(w, "{},{}", ds.locus_names[l], ds.genes[j].name)?;
    }
    w.flush()?;

    if let Some(path) = env_path {
        if ds.env_dim() > 0 {
            let mut w = create(path)?;
            write!(w, "subject")?;
            for name in &ds.env_names {
                write!(w, ",{name}")?;
            }
            writeln!(w)?;
            for (i, s) in ds.subjects.iter().enumerate() {
                write!(w, "{}", s.id)?;
                for v in ds.env(i) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
