//! Scans every locus for a case/control frequency difference larger than δ and
//! flags the disease-predisposing ones.
//!
//! cargo run --release --example dpl_scan -- [sweeps] [delta]

use bnpgi::inference::dpl_identify;
use bnpgi::models::fit;
use bnpgi::runtime::{Executor, RunConfig, RunControl};
use bnpgi::sim::{simulate_dataset, TruthSpec};

const SPEC: &str = r#"
seed = 51
n_controls = 150
n_cases = 150
loci_per_gene = [10, 10]
[generator]
kind = "subpopulation"
k = 3
dpl = [{ gene = 0, locus = 3, delta = 0.3 }, { gene = 1, locus = 7, delta = 0.2 }]
"#;

fn main() -> bnpgi::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let sweeps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let delta: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let (ds, truth) = simulate_dataset(&TruthSpec::from_toml(SPEC)?)?;
    let cfg = RunConfig { iterations: sweeps, burn_in: sweeps / 2, thinning: 5, ..Default::default() };
    let chain = fit(&ds, &cfg, &Executor::new(1)?, &RunControl::default())?;
    let _ = truth;
    println!("{:<10} {:>10}  flagged", "locus", "P(|d|>δ)");
    for j in 0..ds.n_genes() {
        for (r, rep) in dpl_identify(&chain, j, delta, 0.5)?.iter().enumerate() {
            let name = &ds.locus_names()[ds.genes()[j].loci[r]];
            println!("{name:<10} {:>10.3}  {}", rep.probability, if rep.reject { "yes" } else { "" });
        }
    }
    Ok(())
}
