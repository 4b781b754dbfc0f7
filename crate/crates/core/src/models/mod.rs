//! The three case-control models and the pieces they share.

pub mod ge;
pub mod gg;
pub mod hdp;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use std::path::Path;

use crate::data::GenotypeDataset;
use crate::error::{Error, Result};
use crate::runtime::chain::{resume_chain, run_chain, RunControl};
use crate::runtime::config::{GgConfig, RunConfig};
use crate::runtime::output::{ChainOutput, ModelKind};
use crate::runtime::schedule::Executor;
use crate::stats::linalg::{
    col_cov_conditional, inverse_wishart_ln_pdf, row_cov_conditional, MatrixNormalEval,
};
use crate::stats::{sample_inverse_wishart, InverseWishartParams, MatrixNormalParams, RngStream};

/// Builds the model named in `cfg` and runs its chain.
pub fn fit(ds: &GenotypeDataset, cfg: &RunConfig, exec: &Executor, control: &RunControl) -> Result<ChainOutput> {
    cfg.validate()?;
    let settings = cfg.settings();
    Ok(match cfg.model {
        ModelKind::Gg => run_chain(gg::GgModel::new(ds, cfg)?, settings, exec, control)?.1,
        ModelKind::Ge => run_chain(ge::GeModel::new(ds, cfg)?, settings, exec, control)?.1,
        ModelKind::Hdp => run_chain(hdp::HdpModel::new(ds, cfg)?, settings, exec, control)?.1,
    })
}

/// Continues a checkpointed run of the given model.
pub fn resume(kind: ModelKind, checkpoint: &Path, exec: &Executor, control: &RunControl) -> Result<ChainOutput> {
    Ok(match kind {
        ModelKind::Gg => resume_chain::<gg::GgModel>(checkpoint, exec, control)?.1,
        ModelKind::Ge => resume_chain::<ge::GeModel>(checkpoint, exec, control)?.1,
        ModelKind::Hdp => resume_chain::<hdp::HdpModel>(checkpoint, exec, control)?.1,
    })
}

/// Largest exponent whose exp is finite.
pub(crate) const LN_MAX: f64 = 709.78;

/// Exponentiates a pair of log Beta parameters, failing on overflow.
pub(crate) fn exp_pair(ln1: f64, ln2: f64, dump: impl FnOnce() -> String) -> Result<(f64, f64)> {
    if !(ln1.is_finite() && ln2.is_finite()) || ln1 > LN_MAX || ln2 > LN_MAX {
        return Err(Error::Overflow(format!("ln ν = ({ln1}, {ln2}) from {}", dump())));
    }
    Ok((ln1.exp(), ln2.exp()))
}

/// Matrix-normal prior on a genes × groups matrix with inverse-Wishart priors on the
/// gene covariance A and the case-control covariance Σ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub mean: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub a_prior: InverseWishartParams,
    pub sigma_prior: InverseWishartParams,
}

impl Interaction {
    /// Starts at A = I, Σ = I.
    pub fn new(n_genes: usize, cfg: &GgConfig) -> Result<Self> {
        let xi = cfg.xi.unwrap_or(n_genes as f64 + 2.0);
        Ok(Self {
            mean: DMatrix::from_element(n_genes, 2, cfg.mu),
            a: DMatrix::identity(n_genes, n_genes),
            sigma: DMatrix::identity(2, 2),
            a_prior: InverseWishartParams::new(xi, DMatrix::identity(n_genes, n_genes) * cfg.a0_scale)?,
            sigma_prior: InverseWishartParams::new(cfg.zeta, DMatrix::identity(2, 2) * cfg.sigma0_scale)?,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.mean.nrows()
    }

    pub fn eval(&self) -> Result<MatrixNormalEval> {
        MatrixNormalEval::new(&MatrixNormalParams::new(self.mean.clone(), self.a.clone(), self.sigma.clone())?)
    }

    /// ln MN(x; μ, A, Σ) + ln IW(A) + ln IW(Σ).
    pub fn log_prior(&self, x: &DMatrix<f64>) -> Result<f64> {
        Ok(self.eval()?.logpdf(x)?
            + inverse_wishart_ln_pdf(&self.a, &self.a_prior)?
            + inverse_wishart_ln_pdf(&self.sigma, &self.sigma_prior)?)
    }

    /// Gibbs update A | Σ, x followed by Σ | A, x.
    pub fn gibbs(&mut self, x: &DMatrix<f64>, rng_a: &mut RngStream, rng_sigma: &mut RngStream) -> Result<()> {
        let r = [x - &self.mean];
        let pa = row_cov_conditional(&self.a_prior, &r, &self.sigma)?;
        self.a = sample_inverse_wishart(&pa, rng_a)?;
        let ps = col_cov_conditional(&self.sigma_prior, &r, &self.a)?;
        self.sigma = sample_inverse_wishart(&ps, rng_sigma)?;
        Ok(())
    }

    pub fn columns(&self) -> Vec<String> {
        let j = self.n_genes();
        let mut out = Vec::new();
        for a in 0..j {
            for b in a..j {
                out.push(format!("A.{a}.{b}"));
            }
        }
        for a in 0..2 {
            for b in a..2 {
                out.push(format!("Sigma.{a}.{b}"));
            }
        }
        out
    }

    pub fn record(&self, out: &mut Vec<f64>) {
        let j = self.n_genes();
        for a in 0..j {
            for b in a..j {
                out.push(self.a[(a, b)]);
            }
        }
        for a in 0..2 {
            for b in a..2 {
                out.push(self.sigma[(a, b)]);
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::data::{Gene, GenotypeDataset, Group, Subject};
    use crate::stats::dist::std_normal;
    use crate::stats::RngStream;

    /// Random genotypes (p = 1/2) with optional standard-normal covariates.
    pub fn random_dataset(seed: u64, n_per_group: usize, genes: &[usize], env_dim: usize) -> GenotypeDataset {
        let mut rng = RngStream::new(seed, 0);
        let n = 2 * n_per_group;
        let l: usize = genes.iter().sum();
        let subjects = (0..n)
            .map(|i| Subject {
                id: format!("s{i}"),
                group: if i < n_per_group { Group::Control } else { Group::Case },
            })
            .collect();
        let mut next = 0;
        let gene_list = genes
            .iter()
            .enumerate()
            .map(|(j, &len)| {
                let loci = (next..next + len).collect();
                next += len;
                Gene { name: format!("g{j}"), loci }
            })
            .collect();
        let dos: Vec<u8> = (0..n * l).map(|_| rng.coin() as u8 + rng.coin() as u8).collect();
        let env: Vec<f64> = (0..n * env_dim).map(|_| std_normal(&mut rng)).collect();
        GenotypeDataset::from_dosages(
            subjects,
            (0..l).map(|r| format!("rs{r}")).collect(),
            gene_list,
            &dos,
            (0..env_dim).map(|e| format!("e{e}")).collect(),
            env,
        )
        .unwrap()
    }
}
