//! Gene-environment model on a study where one gene's case frequencies move with
//! an exposure. Prints the posterior of the exposure coefficients.
//!
//! cargo run --release --example fit_gene_environment -- [sweeps]

use bnpgi::inference::{env_norm_samples, EnvLevel};
use bnpgi::models::fit;
use bnpgi::runtime::{Executor, ModelKind, RunConfig, RunControl};
use bnpgi::sim::{simulate_dataset, TruthSpec};

const SPEC: &str = r#"
seed = 21
n_controls = 100
n_cases = 100
loci_per_gene = [8, 8]
[environment]
dim = 1
case_mean = 1.0
[generator]
kind = "subpopulation"
k = 2
env_effect = { genes = [0], beta = [1.0], groups = [1] }
"#;

fn main() -> bnpgi::Result<()> {
    let sweeps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let (ds, _) = simulate_dataset(&TruthSpec::from_toml(SPEC)?)?;
    let cfg = RunConfig { model: ModelKind::Ge, iterations: sweeps, burn_in: sweeps / 2, thinning: 5, ..Default::default() };
    let chain = fit(&ds, &cfg, &Executor::new(1)?, &RunControl::default())?;
    println!("{} retained samples", chain.n_retained());
    let mut names: Vec<&String> = chain.columns.iter().filter(|c| c.starts_with("beta") || c.starts_with("nu")).collect();
    names.sort();
    for name in names.into_iter().take(12) {
        let x = chain.column(name)?;
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        println!("{name:<16} posterior mean {mean:>8.4}");
    }
    if let Ok(norms) = env_norm_samples(&chain, EnvLevel::G) {
        println!("posterior mean |β| {:.4}", norms.iter().sum::<f64>() / norms.len() as f64);
    }
    for (stage, a) in &chain.acceptance {
        println!("{stage:<16} acceptance {:.3}", a.rate());
    }
    Ok(())
}
