//! Fits the gene-gene model to a simulated study with three subpopulations and
//! prints the posterior of the occupied-component count per (gene, group).
//!
//! cargo run --release --example fit_gene_gene -- [sweeps] [workers]

use std::collections::BTreeMap;
use std::time::Instant;

use bnpgi::models::fit;
use bnpgi::runtime::{Executor, RunConfig, RunControl};
use bnpgi::sim::{simulate_dataset, TruthSpec};

const SPEC: &str = r#"
seed = 11
n_controls = 100
n_cases = 100
loci_per_gene = [20, 20, 20, 20]
[generator]
kind = "subpopulation"
k = 3
"#;

fn main() -> bnpgi::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let sweeps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let workers: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let (ds, truth) = simulate_dataset(&TruthSpec::from_toml(SPEC)?)?;
    println!("{} subjects, true subpopulations: 3", ds.n_subjects());
    let _ = truth;

    let cfg = RunConfig { iterations: sweeps, burn_in: sweeps / 2, thinning: 5, workers, ..Default::default() };
    let t = Instant::now();
    let chain = fit(&ds, &cfg, &Executor::new(workers)?, &RunControl::default())?;
    let secs = t.elapsed().as_secs_f64();
    println!("{sweeps} sweeps in {secs:.1} s ({:.2} ms/sweep)", 1e3 * secs / sweeps as f64);

    for j in 0..ds.n_genes() {
        for k in 0..2 {
            let occ = chain.column(&format!("occupied.{j}.{k}"))?;
            let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
            for v in occ {
                *hist.entry(v as usize).or_default() += 1;
            }
            let mode = hist.iter().max_by_key(|(_, &c)| c).map(|(&v, _)| v).unwrap_or(0);
            println!("gene {j} group {k}: occupied mode {mode}, posterior {hist:?}");
        }
    }
    for (stage, a) in &chain.acceptance {
        println!("{stage:<16} acceptance {:.3}", a.rate());
    }
    Ok(())
}
