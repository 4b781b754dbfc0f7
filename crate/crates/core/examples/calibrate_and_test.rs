//! Full decision pipeline: fit, null-calibrate the thresholds on data with the
//! case/control labels shuffled out, then run the gene, overall and interaction tests.
//!
//! cargo run --release --example calibrate_and_test -- [sweeps] [quantile]

use bnpgi::inference::{null_calibrate, run_standard_tests, summary_table};
use bnpgi::models::fit;
use bnpgi::runtime::{Executor, RunConfig, RunControl};
use bnpgi::sim::{simulate_dataset, TruthSpec};

const SPEC: &str = r#"
seed = 41
n_controls = 120
n_cases = 120
loci_per_gene = [8, 8, 8]
[generator]
kind = "subpopulation"
k = 2
dpl = [{ gene = 0, locus = 2, delta = 0.3 }]
coupling = { genes = [1, 2], rho = 0.9, scale = 1.5 }
"#;

fn main() -> bnpgi::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let sweeps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let q: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.55);
    let (ds, _) = simulate_dataset(&TruthSpec::from_toml(SPEC)?)?;
    let cfg = RunConfig { iterations: sweeps, burn_in: sweeps / 2, thinning: 5, ..Default::default() };
    let exec = Executor::new(1)?;
    let chain = fit(&ds, &cfg, &exec, &RunControl::default())?;
    let cal = null_calibrate(&ds, &cfg, &[1001, 1002], q, &exec)?;
    println!("thresholds at q = {q}");
    for (k, v) in &cal.thresholds {
        println!("  {k:<12} {v:.5}");
    }
    println!();
    print!("{}", summary_table(&run_standard_tests(&chain, &cal, 1)?));
    Ok(())
}
