//! Run configuration, read from a TOML file and overridable from the command line.
//!
//! M = 30, 30,000 iterations with 10,000 burn-in, c0 = 100, s0 = 0.1 and the 0.55
//! calibration quantile follow the published analysis. The remaining defaults are
//! our own choices and are tagged "[heuristic default]" in `--help`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::chain::ChainSettings;
use super::output::ModelKind;
use crate::error::{Error, Result};
use crate::sim::NullMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub m: usize,
    /// Precision of the Dirichlet process over the component frequencies of the
    /// gene-gene and gene-environment mixtures.
    pub dp_alpha: f64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub workers: usize,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub data: DataPaths,
    pub out: OutConfig,
    pub tmcmc: TmcmcSettings,
    pub gg: GgConfig,
    pub ge: GeConfig,
    pub hdp: HdpConfig,
    pub inference: InferenceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Gg,
            m: 30,
            dp_alpha: 0.3,
            iterations: 30_000,
            burn_in: 10_000,
            thinning: 10,
            workers: 1,
            seed: 1,
            checkpoint_every: 1000,
            data: DataPaths::default(),
            out: OutConfig::default(),
            tmcmc: TmcmcSettings::default(),
            gg: GgConfig::default(),
            ge: GeConfig::default(),
            hdp: HdpConfig::default(),
            inference: InferenceConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub genotypes: Option<PathBuf>,
    pub genemap: Option<PathBuf>,
    pub environment: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutConfig {
    pub dir: PathBuf,
}

impl Default for OutConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Initial TMCMC settings shared by every block update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmcmcSettings {
    /// Probability of the additive move.
    pub additive_prob: f64,
    /// Initial additive scale (adapted during burn-in).
    pub scale: f64,
    /// Adapt scales during burn-in.
    pub tune: bool,
}

impl Default for TmcmcSettings {
    fn default() -> Self {
        Self { additive_prob: 0.5, scale: 0.1, tune: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GgConfig {
    /// Degrees of freedom of the inverse-Wishart prior on A; `None` means J + 2.
    pub xi: Option<f64>,
    pub zeta: f64,
    /// Diagonal of the prior scale A₀ (identity times this).
    pub a0_scale: f64,
    pub sigma0_scale: f64,
    /// Constant value of every entry of the matrix-normal mean.
    pub mu: f64,
    pub uv_prior_sd: f64,
}

impl Default for GgConfig {
    fn default() -> Self {
        Self { xi: None, zeta: 4.0, a0_scale: 1.0, sigma0_scale: 1.0, mu: 0.0, uv_prior_sd: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeConfig {
    /// Standard deviation of λ_ijk around its gene-group mean.
    pub sigma_lambda: f64,
    pub sigma_mu: f64,
    pub sigma_beta: f64,
}

impl Default for GeConfig {
    fn default() -> Self {
        Self { sigma_lambda: 1.0, sigma_mu: 1.0, sigma_beta: 1.0 }
    }
}

/// What one customer of a subject-level restaurant sees as data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HdpUnit {
    /// Each chromosome of a subject is allocated to a mixture slot separately.
    Chromosome,
    /// Both chromosomes of a subject go to one slot.
    Subject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HdpConfig {
    /// Offset inside the exponent of every precision.
    pub c0: f64,
    /// Multiplicative scale of every precision.
    pub s0: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub unit: HdpUnit,
    /// TMCMC moves per level on (μ, β) each sweep.
    pub precision_steps: usize,
}

impl Default for HdpConfig {
    fn default() -> Self {
        Self { c0: 100.0, s0: 0.1, nu1: 1.0, nu2: 1.0, unit: HdpUnit::Chromosome, precision_steps: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Clinically meaningful allele-frequency difference for locus calls.
    pub delta: f64,
    pub prob_threshold: f64,
    /// Null-calibration quantile q in ε = F⁻¹(q).
    pub quantile: f64,
    pub calibration_seeds: Vec<u64>,
    /// How null datasets are made.
    pub null_mode: NullMode,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { delta: 0.05, prob_threshold: 0.5, quantile: 0.55, calibration_seeds: vec![1001], null_mode: NullMode::Permute }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn settings(&self) -> ChainSettings {
        ChainSettings {
            seed: self.seed,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thinning,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.settings().validate()?;
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !(self.dp_alpha > 0.0 && self.dp_alpha.is_finite()) {
            return Err(Error::Config(format!("dp_alpha must be positive and finite, got {}", self.dp_alpha)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tmcmc.additive_prob) {
            return Err(Error::Config("tmcmc.additive_prob must lie in [0, 1]".into()));
        }
        positive("tmcmc.scale", self.tmcmc.scale)?;
        if let Some(xi) = self.gg.xi {
            positive("gg.xi", xi)?;
        }
        positive("gg.zeta", self.gg.zeta)?;
        positive("gg.a0_scale", self.gg.a0_scale)?;
        positive("gg.sigma0_scale", self.gg.sigma0_scale)?;
        positive("gg.uv_prior_sd", self.gg.uv_prior_sd)?;
        if !self.gg.mu.is_finite() {
            return Err(Error::Config("gg.mu must be finite".into()));
        }
        positive("ge.sigma_lambda", self.ge.sigma_lambda)?;
        positive("ge.sigma_mu", self.ge.sigma_mu)?;
        positive("ge.sigma_beta", self.ge.sigma_beta)?;
        if !self.hdp.c0.is_finite() || self.hdp.c0 < 0.0 {
            return Err(Error::Config("hdp.c0 must be finite and non-negative".into()));
        }
        positive("hdp.s0", self.hdp.s0)?;
        positive("hdp.nu1", self.hdp.nu1)?;
        positive("hdp.nu2", self.hdp.nu2)?;
        if self.hdp.precision_steps == 0 {
            return Err(Error::Config("hdp.precision_steps must be at least 1".into()));
        }
        let inf = &self.inference;
        if !(inf.delta > 0.0 && inf.delta < 1.0) {
            return Err(Error::Config("inference.delta must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&inf.prob_threshold) {
            return Err(Error::Config("inference.prob_threshold must lie in [0, 1)".into()));
        }
        if !(inf.quantile > 0.0 && inf.quantile < 1.0) {
            return Err(Error::Config("inference.quantile must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.m, c.iterations, c.burn_in), (30, 30_000, 10_000));
        assert_eq!(c.hdp.c0, 100.0);
        assert_eq!(c.inference.quantile, 0.55);
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("model = \"hdp\"\niterations = 50\nburn_in = 10\n[hdp]\nunit = \"subject\"\n").unwrap();
        assert_eq!(c.model, ModelKind::Hdp);
        assert_eq!(c.hdp.unit, HdpUnit::Subject);
        assert_eq!(c.hdp.s0, 0.1);
        assert_eq!(c.m, 30);
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        let c = RunConfig { burn_in: 30_000, ..Default::default() };
        assert!(c.validate().unwrap_err().is_usage_error());
        let c = RunConfig { workers: 0, ..Default::default() };
        assert!(c.validate().unwrap_err().is_usage_error());
        assert!(RunConfig::from_toml("bogus = 1").unwrap_err().is_usage_error());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig { seed: 99, ..Default::default() };
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
