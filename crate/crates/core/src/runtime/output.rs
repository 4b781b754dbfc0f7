//! Chain output: retained samples, per-sweep log-joint, acceptance diagnostics and
//! stage timings, with a schema-versioned on-disk layout.
//!
//! Directory layout:
//! - `manifest.toml`: schema version, run settings, layout, output hash
//! - `samples.csv`: `sweep,<columns...>`, one row per retained sweep
//! - `logjoint.csv`: `sweep,log_joint`, every sweep
//! - `diagnostics.csv`: acceptance counts per sampler stage
//! - `steps.csv`: every central TMCMC step
//! - `timings.toml`: wall-clock seconds per stage (not part of the hash)

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tmcmc::{AcceptanceStats, MoveKind, TmcmcStepRecord};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gg,
    Ge,
    Hdp,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gg => "gg",
            ModelKind::Ge => "ge",
            ModelKind::Hdp => "hdp",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gg" => Ok(ModelKind::Gg),
            "ge" => Ok(ModelKind::Ge),
            "hdp" => Ok(ModelKind::Hdp),
            other => Err(Error::Config(format!("unknown model {other:?} (gg, ge, hdp)"))),
        }
    }
}

/// Dataset shape a chain was fitted to; enough for every post-processing step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub model: ModelKind,
    pub m: usize,
    pub loci_per_gene: Vec<usize>,
    /// Group (0/1) of each subject, in dataset order.
    pub subject_groups: Vec<u8>,
    pub env_dim: usize,
}

impl Layout {
    pub fn n_genes(&self) -> usize {
        self.loci_per_gene.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub sweep: u64,
    pub stage: String,
    pub record: TmcmcStepRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub schema_version: u32,
    pub layout: Layout,
    pub seed: u64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub completed_sweeps: u64,
    pub columns: Vec<String>,
    pub sweeps: Vec<u64>,
    pub samples: Vec<Vec<f64>>,
    pub log_joint: Vec<f64>,
    pub acceptance: BTreeMap<String, AcceptanceStats>,
    pub steps: Vec<StepRow>,
    pub timings: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    model: ModelKind,
    seed: u64,
    iterations: u64,
    burn_in: u64,
    thinning: u64,
    completed_sweeps: u64,
    retained: usize,
    hash: String,
    layout: Layout,
}

impl ChainOutput {
    pub fn new(layout: Layout, seed: u64, iterations: u64, burn_in: u64, thinning: u64, columns: Vec<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            layout,
            seed,
            iterations,
            burn_in,
            thinning,
            completed_sweeps: 0,
            columns,
            sweeps: Vec::new(),
            samples: Vec::new(),
            log_joint: Vec::new(),
            acceptance: BTreeMap::new(),
            steps: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    /// Retained sweeps: s ≥ burn-in with (s − burn-in + 1) divisible by the thinning.
    pub fn is_retained(&self, sweep: u64) -> bool {
        sweep >= self.burn_in && (sweep - self.burn_in + 1) % self.thinning == 0
    }

    pub fn expected_records(&self) -> usize {
        ((self.iterations - self.burn_in) / self.thinning) as usize
    }

    pub fn n_retained(&self) -> usize {
        self.samples.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Index(format!("no column {name:?} in chain output")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column_index(name)?;
        Ok(self.samples.iter().map(|row| row[c]).collect())
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    pub fn record_acceptance(&mut self, stage: &str, stats: &AcceptanceStats) {
        self.acceptance.entry(stage.to_string()).or_default().merge(stats);
    }

    /// SHA-256 over everything except timings.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.schema_version.to_le_bytes());
        h.update(self.layout.model.as_str().as_bytes());
        for v in [self.seed, self.iterations, self.burn_in, self.thinning, self.completed_sweeps] {
            h.update(v.to_le_bytes());
        }
        for c in &self.columns {
            h.update(c.as_bytes());
            h.update([0u8]);
        }
        for (s, row) in self.sweeps.iter().zip(&self.samples) {
            h.update(s.to_le_bytes());
            for v in row {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        for v in &self.log_joint {
            h.update(v.to_bits().to_le_bytes());
        }
        for (k, a) in &self.acceptance {
            h.update(k.as_bytes());
            for v in [a.proposed, a.accepted, a.multiplicative, a.fallbacks, a.nan_proposals] {
                h.update(v.to_le_bytes());
            }
        }
        for s in &self.steps {
            h.update(s.sweep.to_le_bytes());
            h.update(s.stage.as_bytes());
            h.update(s.record.kind.as_str().as_bytes());
            h.update(s.record.epsilon.to_bits().to_le_bytes());
            h.update(s.record.accept_prob.to_bits().to_le_bytes());
            h.update([s.record.accepted as u8, s.record.nan_proposal as u8]);
        }
        hex::encode(h.finalize())
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            schema_version: self.schema_version,
            model: self.layout.model,
            seed: self.seed,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thinning,
            completed_sweeps: self.completed_sweeps,
            retained: self.samples.len(),
            hash: self.hash(),
            layout: self.layout.clone(),
        };
        fs::write(
            dir.join("manifest.toml"),
            toml::to_string(&manifest).map_err(|e| Error::Internal(e.to_string()))?,
        )?;

        let mut w = BufWriter::new(fs::File::create(dir.join("samples.csv"))?);
        write!(w, "sweep")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (s, row) in self.sweeps.iter().zip(&self.samples) {
            write!(w, "{s}")?;
            for v in row {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;

        let mut w = BufWriter::new(fs::File::create(dir.join("logjoint.csv"))?);
        writeln!(w, "sweep,log_joint")?;
        for (s, v) in self.log_joint.iter().enumerate() {
            writeln!(w, "{s},{v:?}")?;
        }
        w.flush()?;

        let mut w = BufWriter::new(fs::File::create(dir.join("diagnostics.csv"))?);
        writeln!(w, "stage,proposed,accepted,rate,multiplicative,fallbacks,nan_proposals")?;
        for (k, a) in &self.acceptance {
            writeln!(
                w,
                "{k},{},{},{:.6},{},{},{}",
                a.proposed,
                a.accepted,
                a.rate(),
                a.multiplicative,
                a.fallbacks,
                a.nan_proposals
            )?;
        }
        w.flush()?;

        let mut w = BufWriter::new(fs::File::create(dir.join("steps.csv"))?);
        writeln!(w, "sweep,stage,move,epsilon,accept_prob,accepted,nan_proposal")?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{},{:?},{:?},{},{}",
                s.sweep,
                s.stage,
                s.record.kind.as_str(),
                s.record.epsilon,
                s.record.accept_prob,
                s.record.accepted as u8,
                s.record.nan_proposal as u8
            )?;
        }
        w.flush()?;

        fs::write(
            dir.join("timings.toml"),
            toml::to_string(&self.timings).map_err(|e| Error::Internal(e.to_string()))?,
        )?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.toml");
        let text = fs::read_to_string(&mpath).map_err(|e| Error::parse(&mpath, 0, e.to_string()))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| Error::parse(&mpath, 0, e.to_string()))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::parse(
                &mpath,
                0,
                format!("schema version {} (expected {SCHEMA_VERSION})", m.schema_version),
            ));
        }
        let mut out = ChainOutput::new(m.layout, m.seed, m.iterations, m.burn_in, m.thinning, Vec::new());
        out.completed_sweeps = m.completed_sweeps;

        let spath = dir.join("samples.csv");
        let rows = read_csv(&spath)?;
        let header = rows.first().ok_or_else(|| Error::parse(&spath, 1, "empty samples file"))?;
        if header.first().map(String::as_str) != Some("sweep") {
            return Err(Error::parse(&spath, 1, "first column must be sweep"));
        }
        out.columns = header[1..].to_vec();
        for (n, row) in rows.iter().enumerate().skip(1) {
            if row.len() != header.len() {
                return Err(Error::parse(&spath, n + 1, "malformed row"));
            }
            out.sweeps.push(parse_num(&spath, n + 1, &row[0])?);
            let vals = row[1..]
                .iter()
                .map(|v| parse_num(&spath, n + 1, v))
                .collect::<Result<Vec<f64>>>()?;
            out.samples.push(vals);
        }

        let lpath = dir.join("logjoint.csv");
        for (n, row) in read_csv(&lpath)?.iter().enumerate().skip(1) {
            if row.len() != 2 {
                return Err(Error::parse(&lpath, n + 1, "malformed row"));
            }
            out.log_joint.push(parse_num(&lpath, n + 1, &row[1])?);
        }

        let dpath = dir.join("diagnostics.csv");
        for (n, row) in read_csv(&dpath)?.iter().enumerate().skip(1) {
            if row.len() != 7 {
                return Err(Error::parse(&dpath, n + 1, "malformed row"));
            }
            let a = AcceptanceStats {
                proposed: parse_num(&dpath, n + 1, &row[1])?,
                accepted: parse_num(&dpath, n + 1, &row[2])?,
                multiplicative: parse_num(&dpath, n + 1, &row[4])?,
                fallbacks: parse_num(&dpath, n + 1, &row[5])?,
                nan_proposals: parse_num(&dpath, n + 1, &row[6])?,
            };
            out.acceptance.insert(row[0].clone(), a);
        }

        let tpath = dir.join("steps.csv");
        for (n, row) in read_csv(&tpath)?.iter().enumerate().skip(1) {
            if row.len() != 7 {
                return Err(Error::parse(&tpath, n + 1, "malformed row"));
            }
            let kind = match row[2].as_str() {
                "additive" => MoveKind::Additive,
                "multiplicative" => MoveKind::Multiplicative,
                "additive_fallback" => MoveKind::AdditiveFallback,
                other => return Err(Error::parse(&tpath, n + 1, format!("unknown move {other:?}"))),
            };
            out.steps.push(StepRow {
                sweep: parse_num(&tpath, n + 1, &row[0])?,
                stage: row[1].clone(),
                record: TmcmcStepRecord {
                    kind,
                    epsilon: parse_num(&tpath, n + 1, &row[3])?,
                    accept_prob: parse_num(&tpath, n + 1, &row[4])?,
                    accepted: row[5] == "1",
                    nan_proposal: row[6] == "1",
                },
            });
        }

        let ipath = dir.join("timings.toml");
        if let Ok(text) = fs::read_to_string(&ipath) {
            out.timings = toml::from_str(&text).map_err(|e| Error::parse(&ipath, 0, e.to_string()))?;
        }
        if out.hash() != m.hash {
            return Err(Error::parse(&mpath, 0, "output hash does not match file contents"));
        }
        Ok(out)
    }
}

fn read_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        out.push(rec.iter().map(str::to_string).collect());
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(path, line, format!("not a number: {s:?}")))
}
