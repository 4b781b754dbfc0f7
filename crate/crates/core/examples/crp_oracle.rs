//! Checks the Gibbs sampler of a tiny mixture against exact enumeration, and the
//! urn sampler against the exact partition law.
//!
//! cargo run --release --example crp_oracle

use std::collections::BTreeMap;

use bnpgi::mixture::{MixtureState, UnitData};
use bnpgi::sim::{brute_force_posterior, exact_crp_partition_probs, sample_crp_partition, TinyModel};
use bnpgi::stats::RngStream;

fn main() -> bnpgi::Result<()> {
    let (n, alpha, draws) = (5, 1.0, 200_000);
    let exact = exact_crp_partition_probs(n, alpha)?;
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut rng = RngStream::new(1, 0);
    for _ in 0..draws {
        *counts.entry(sample_crp_partition(n, alpha, &mut rng)?).or_default() += 1;
    }
    let tv: f64 = 0.5 * exact.iter().map(|(p, pr)| (*counts.get(p).unwrap_or(&0) as f64 / draws as f64 - pr).abs()).sum::<f64>();
    println!("{} partitions of {n} items, total variation of {draws} urn draws: {tv:.4}", exact.len());

    let data = UnitData::new(2, 1, vec![0, 1, 0, 1, 1, 1, 0, 0])?;
    let model = TinyModel::new(2, 1.0, 1.0).with_alpha(0.5);
    let post = brute_force_posterior(&data, &model)?;
    let (nu1, nu2) = ([1.0, 1.0], [1.0, 1.0]);
    let mut st = MixtureState::init(2, 4, &nu1, &nu2, Some(0.5), &mut rng);
    let sweeps = 100_000;
    let mut alloc = vec![[0.0; 2]; 4];
    for _ in 0..sweeps {
        st.gibbs_allocation_update(&data, &mut rng)?;
        st.update_p_given_z(&data, &nu1, &nu2, &mut rng);
        for (u, row) in alloc.iter_mut().enumerate() {
            row[st.z[u]] += 1.0 / sweeps as f64;
        }
    }
    for u in 0..4 {
        println!("unit {u}: P(z = 0) exact {:.4}, sampled {:.4}", post.allocation[u][0], alloc[u][0]);
    }
    Ok(())
}
