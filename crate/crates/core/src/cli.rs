//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 runtime
//! failure (including an interrupted fit, which leaves a checkpoint behind).

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::data::{load_dataset, write_dataset, GenotypeDataset};
use crate::error::{Error, Result};
use crate::inference::{
    dpl_identify, null_calibrate, reports_to_toml, run_standard_tests, summary_table, Calibration, QUANTILE_OPTIONS,
};
use crate::models::{fit, resume};
use crate::runtime::chain::RunControl;
use crate::runtime::ess::effective_sample_size;
use crate::runtime::output::{ChainOutput, ModelKind};
use crate::runtime::schedule::Executor;
use crate::runtime::RunConfig;
use crate::sim::{simulate_dataset, NullMode, TruthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Parser)]
#[command(
    name = "bnpgi",
    version,
    about = "Bayesian nonparametric gene-gene and gene-environment interaction models for case-control data",
    after_help = "Defaults marked [heuristic default] are our own choices; the others follow the published analysis."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic dataset from a truth spec (TOML)
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an MCMC chain and write its output directory
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from the checkpoint in the output directory
        #[arg(long)]
        resume: bool,
    },
    /// Null-calibrate decision thresholds ε = F⁻¹(q)
    Calibrate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated null-run seeds [heuristic default: 1001]
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Calibration quantile q, one of 0.5, 0.55, 0.6, 0.75 [default: 0.55]
        #[arg(long, value_parser = parse_quantile)]
        quantile: Option<f64>,
        /// Null datasets: permute (shuffle labels and covariates of the observed data) or
        /// pooled (iid genotypes at pooled frequencies) [heuristic default: permute]
        #[arg(long)]
        null_mode: Option<NullMode>,
        /// Where to write the thresholds [default: <out>/calibration.toml]
        #[arg(long = "calibration-out")]
        calibration_out: Option<PathBuf>,
    },
    /// Run the gene, overall, interaction and environment tests on a fitted chain
    Test {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        /// Seed of the block bootstrap [heuristic default: 1]
        #[arg(long, default_value_t = 1)]
        bootstrap_seed: u64,
        /// Report file [default: <chain>/tests.toml]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flag disease-predisposing loci
    Dpl {
        #[arg(long)]
        chain: PathBuf,
        /// Gene index (all genes when absent)
        #[arg(long)]
        gene: Option<usize>,
        /// Clinically meaningful frequency difference δ [heuristic default: 0.05]
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Posterior probability needed to flag a locus [heuristic default: 0.5]
        #[arg(long, default_value_t = 0.5)]
        prob_threshold: f64,
        /// Report file [default: <chain>/dpl.toml]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a chain: acceptance, timings, posterior and ESS tables, traces
    Report {
        #[arg(long)]
        chain: PathBuf,
        /// Columns to trace (sweep, value); may repeat
        #[arg(long)]
        trace: Vec<String>,
        /// Only summarize columns starting with this prefix
        #[arg(long)]
        prefix: Option<String>,
    },
    /// Check a dataset without fitting
    Validate {
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    genotypes: Option<PathBuf>,
    #[arg(long)]
    genemap: Option<PathBuf>,
    #[arg(long)]
    environment: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration file (TOML); flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// gg, ge or hdp [heuristic default: gg]
    #[arg(long)]
    model: Option<ModelKind>,
    /// Worker threads for parallel stages [heuristic default: 1]
    #[arg(long)]
    workers: Option<usize>,
    /// Root random seed [heuristic default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [heuristic default: out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Total sweeps [default: 30000]
    #[arg(long)]
    iterations: Option<u64>,
    /// Sweeps discarded before retention [default: 10000]
    #[arg(long)]
    burn_in: Option<u64>,
    /// Keep every n-th post-burn-in sweep [heuristic default: 10]
    #[arg(long)]
    thinning: Option<u64>,
    /// Mixture components per block [default: 30]
    #[arg(long)]
    m: Option<usize>,
    /// Dirichlet-process precision tying the component frequencies of the gg and ge
    /// mixtures [heuristic default: 0.3]
    #[arg(long)]
    dp_alpha: Option<f64>,
    /// Sweeps between checkpoints, 0 to disable [heuristic default: 1000]
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[command(flatten)]
    data: DataArgs,
}

fn parse_quantile(s: &str) -> std::result::Result<f64, String> {
    let q: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if QUANTILE_OPTIONS.iter().any(|&o| (o - q).abs() < 1e-12) {
        Ok(q)
    } else {
        Err(format!("quantile must be one of {QUANTILE_OPTIONS:?}"))
    }
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out.dir = v.clone();
        }
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = self.thinning {
            cfg.thinning = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.dp_alpha {
            cfg.dp_alpha = v;
        }
        if let Some(v) = self.checkpoint_every {
            cfg.checkpoint_every = v;
        }
        if let Some(v) = &self.data.genotypes {
            cfg.data.genotypes = Some(v.clone());
        }
        if let Some(v) = &self.data.genemap {
            cfg.data.genemap = Some(v.clone());
        }
        if let Some(v) = &self.data.environment {
            cfg.data.environment = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load(genotypes: Option<&Path>, genemap: Option<&Path>, environment: Option<&Path>) -> Result<GenotypeDataset> {
    let g = genotypes.ok_or_else(|| Error::Config("no genotype file given (--genotypes or data.genotypes)".into()))?;
    let m = genemap.ok_or_else(|| Error::Config("no gene map given (--genemap or data.genemap)".into()))?;
    load_dataset(g, m, environment)
}

fn load_for(cfg: &RunConfig) -> Result<GenotypeDataset> {
    load(cfg.data.genotypes.as_deref(), cfg.data.genemap.as_deref(), cfg.data.environment.as_deref())
}

/// Parses `argv` (including the program name), runs the command and returns the
/// process exit code. Errors are printed to stderr.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_data_error() {
        EXIT_DATA
    } else if matches!(e, Error::Config(_)) {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

fn interrupt_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    // a second registration (tests running several fits in one process) is harmless
    if let Err(e) = ctrlc::set_handler(move || f.store(true, Ordering::SeqCst)) {
        log::debug!("interrupt handler not installed: {e}");
    }
    flag
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { spec, out } => {
            let spec = TruthSpec::from_file(&spec)?;
            let (ds, truth) = simulate_dataset(&spec)?;
            std::fs::create_dir_all(&out)?;
            write_dataset(&ds, &out.join("genotypes.csv"), &out.join("genemap.csv"), Some(&out.join("environment.csv")))?;
            std::fs::write(out.join("truth.toml"), toml::to_string(&truth).map_err(|e| Error::Internal(e.to_string()))?)?;
            println!(
                "simulated {} subjects, {} genes, {} loci into {}",
                ds.n_subjects(),
                ds.n_genes(),
                ds.n_loci(),
                out.display()
            );
            Ok(())
        }
        Command::Fit { run, resume: resume_run } => {
            let cfg = run.resolve()?;
            let ds = load_for(&cfg)?;
            let exec = Executor::new(cfg.workers)?;
            std::fs::create_dir_all(&cfg.out.dir)?;
            let control = RunControl {
                checkpoint_every: cfg.checkpoint_every,
                checkpoint_path: Some(cfg.out.dir.join(CHECKPOINT_FILE)),
                interrupt: Some(interrupt_flag()),
                stop_after: None,
            };
            log::info!("fitting the {} model to {} subjects with {} workers", cfg.model.as_str(), ds.n_subjects(), cfg.workers);
            let chain = if resume_run {
                resume(cfg.model, &cfg.out.dir.join(CHECKPOINT_FILE), &exec, &control)?
            } else {
                fit(&ds, &cfg, &exec, &control)?
            };
            chain.write_dir(&cfg.out.dir)?;
            std::fs::write(cfg.out.dir.join("config.toml"), cfg.to_toml())?;
            println!("wrote {} retained samples to {} (hash {})", chain.n_retained(), cfg.out.dir.display(), chain.hash());
            Ok(())
        }
        Command::Calibrate { run, seeds, quantile, null_mode, calibration_out } => {
            let mut cfg = run.resolve()?;
            if let Some(m) = null_mode {
                cfg.inference.null_mode = m;
            }
            let ds = load_for(&cfg)?;
            let exec = Executor::new(cfg.workers)?;
            let seeds = seeds.unwrap_or_else(|| cfg.inference.calibration_seeds.clone());
            let q = quantile.unwrap_or(cfg.inference.quantile);
            log::info!("calibrating the {} model on {} null datasets", cfg.model.as_str(), seeds.len());
            let cal = null_calibrate(&ds, &cfg, &seeds, q, &exec)?;
            let path = calibration_out.unwrap_or_else(|| cfg.out.dir.join("calibration.toml"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, cal.to_toml())?;
            println!("{} thresholds at q = {q} written to {}", cal.thresholds.len(), path.display());
            for (k, v) in &cal.thresholds {
                println!("  {k:<24} {v:.6}");
            }
            Ok(())
        }
        Command::Test { chain, calibration, bootstrap_seed, out } => {
            let c = ChainOutput::read_dir(&chain)?;
            let cal = Calibration::from_file(&calibration)?;
            let reports = run_standard_tests(&c, &cal, bootstrap_seed)?;
            let path = out.unwrap_or_else(|| chain.join("tests.toml"));
            std::fs::write(&path, reports_to_toml(&reports))?;
            print!("{}", summary_table(&reports));
            Ok(())
        }
        Command::Dpl { chain, gene, delta, prob_threshold, out } => {
            let c = ChainOutput::read_dir(&chain)?;
            let genes: Vec<usize> = match gene {
                Some(j) => vec![j],
                None => (0..c.layout.n_genes()).collect(),
            };
            let mut reports = Vec::new();
            for j in genes {
                reports.extend(dpl_identify(&c, j, delta, prob_threshold)?);
            }
            let path = out.unwrap_or_else(|| chain.join("dpl.toml"));
            std::fs::write(&path, reports_to_toml(&reports))?;
            print!("{}", summary_table(&reports));
            Ok(())
        }
        Command::Report { chain, trace, prefix } => {
            let c = ChainOutput::read_dir(&chain)?;
            print!("{}", report_text(&c, &trace, prefix.as_deref())?);
            Ok(())
        }
        Command::Validate { data } => {
            let ds = load(data.genotypes.as_deref(), data.genemap.as_deref(), data.environment.as_deref())?;
            ds.check_fittable()?;
            let [n0, n1] = ds.group_sizes();
            println!(
                "ok: {n0} controls, {n1} cases, {} genes, {} loci, {} environmental covariates",
                ds.n_genes(),
                ds.n_loci(),
                ds.env_dim()
            );
            Ok(())
        }
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 { x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, v.sqrt())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Human-readable chain summary.
pub fn report_text(c: &ChainOutput, trace: &[String], prefix: Option<&str>) -> Result<String> {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "model            {}", c.layout.model.as_str());
    let _ = writeln!(s, "sweeps           {} of {} (burn-in {}, thinning {})", c.completed_sweeps, c.iterations, c.burn_in, c.thinning);
    let _ = writeln!(s, "retained         {}", c.n_retained());
    let _ = writeln!(s, "hash             {}", c.hash());
    if let (Some(first), Some(last)) = (c.log_joint.first(), c.log_joint.last()) {
        let _ = writeln!(s, "log joint        first {first:.3}, last {last:.3}");
    }
    let _ = writeln!(s, "\nacceptance");
    for (stage, a) in &c.acceptance {
        let _ = writeln!(s, "  {stage:<20} {:>10} proposed  rate {:.3}", a.proposed, a.rate());
    }
    let _ = writeln!(s, "\ntimings (s)");
    for (stage, t) in &c.timings {
        let _ = writeln!(s, "  {stage:<20} {t:.3}");
    }
    let _ = writeln!(s, "\n{:<28} {:>11} {:>11} {:>11} {:>11} {:>9}", "column", "mean", "sd", "q2.5", "q97.5", "ess");
    for (k, name) in c.columns.iter().enumerate() {
        if prefix.is_some_and(|p| !name.starts_with(p)) {
            continue;
        }
        let x: Vec<f64> = c.samples.iter().map(|row| row[k]).collect();
        if x.is_empty() {
            continue;
        }
        let (m, sd) = mean_sd(&x);
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        let ess = match effective_sample_size(&x) {
            Ok(e) => format!("{e:.1}"),
            Err(_) => "n/a".into(),
        };
        let _ = writeln!(s, "{name:<28} {m:>11.5} {sd:>11.5} {:>11.5} {:>11.5} {ess:>9}", quantile(&sorted, 0.025), quantile(&sorted, 0.975));
    }
    for name in trace {
        let x = c.column(name)?;
        let _ = writeln!(s, "\ntrace {name}\n{:>8} {:>14}", "sweep", "value");
        for (sw, v) in c.sweeps.iter().zip(&x) {
            let _ = writeln!(s, "{sw:>8} {v:>14.6}");
        }
    }
    Ok(s)
}
