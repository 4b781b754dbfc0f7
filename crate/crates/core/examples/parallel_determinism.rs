//! The same seed gives bit-identical chains for any worker count. Prints the
//! chain hash and per-stage timings for 1, 2 and 4 workers.
//!
//! cargo run --release --example parallel_determinism -- [sweeps]

use bnpgi::models::fit;
use bnpgi::runtime::{Executor, RunConfig, RunControl};
use bnpgi::sim::{simulate_dataset, TruthSpec};

const SPEC: &str = r#"
seed = 61
n_controls = 100
n_cases = 100
loci_per_gene = [10, 10, 10, 10, 10, 10, 10, 10]
[generator]
kind = "subpopulation"
k = 3
"#;

fn main() -> bnpgi::Result<()> {
    let sweeps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let (ds, _) = simulate_dataset(&TruthSpec::from_toml(SPEC)?)?;
    println!("hardware threads: {}", std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    for workers in [1, 2, 4] {
        let cfg = RunConfig { iterations: sweeps, burn_in: sweeps / 2, thinning: 5, workers, ..Default::default() };
        let chain = fit(&ds, &cfg, &Executor::new(workers)?, &RunControl::default())?;
        let timings: Vec<String> = chain.timings.iter().map(|(k, v)| format!("{k} {v:.2}s")).collect();
        println!("workers {workers}: hash {}  [{}]", chain.hash(), timings.join(", "));
    }
    Ok(())
}
