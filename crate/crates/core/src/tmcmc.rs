//! Transformation-based MCMC: one positive innovation ε moves every coordinate of a
//! block at once, either additively (x_i + b_i a_i ε) or multiplicatively (x_i ε^{b_i}),
//! with independent random signs b_i.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::dist::half_normal;
use crate::stats::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Innovation {
    HalfNormal { scale: f64 },
}

impl Innovation {
    fn draw(&self, rng: &mut RngStream) -> f64 {
        match *self {
            Innovation::HalfNormal { scale } => loop {
                let e = half_normal(scale, rng);
                if e > 0.0 {
                    return e;
                }
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmcmcConfig {
    /// Probability of choosing the additive move in [`block_update`].
    pub additive_prob: f64,
    /// Per-coordinate additive scales a_i.
    pub scales: Vec<f64>,
    pub innovation: Innovation,
}

impl TmcmcConfig {
    pub fn new(dim: usize, scale: f64, additive_prob: f64) -> Self {
        Self {
            additive_prob,
            scales: vec![scale; dim],
            innovation: Innovation::HalfNormal { scale: 1.0 },
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.additive_prob) {
            return Err(Error::InvalidParameter(format!(
                "move-mix probability {} not in [0, 1]",
                self.additive_prob
            )));
        }
        if self.scales.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "{} scales for a block of dimension {dim}",
                self.scales.len()
            )));
        }
        if self.scales.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidParameter("scales must be positive".into()));
        }
        let Innovation::HalfNormal { scale } = self.innovation;
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter("innovation scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Additive,
    Multiplicative,
    /// Multiplicative move requested at a point with a zero coordinate.
    AdditiveFallback,
}

impl MoveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MoveKind::Additive => "additive",
            MoveKind::Multiplicative => "multiplicative",
            MoveKind::AdditiveFallback => "additive_fallback",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmcmcStepRecord {
    pub kind: MoveKind,
    pub epsilon: f64,
    pub accept_prob: f64,
    pub accepted: bool,
    /// The target was NaN at the proposal; the step was rejected.
    pub nan_proposal: bool,
}

/// Result of a step when the caller tracks the current log-target.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub x: Vec<f64>,
    pub log_target: f64,
    pub record: TmcmcStepRecord,
}

fn signs(n: usize, rng: &mut RngStream) -> Vec<i8> {
    (0..n).map(|_| if rng.coin() { 1 } else { -1 }).collect()
}

fn finish<F: FnMut(&[f64]) -> f64>(
    x: &[f64],
    lp_x: f64,
    proposal: Vec<f64>,
    log_jacobian: f64,
    kind: MoveKind,
    epsilon: f64,
    mut target: F,
    rng: &mut RngStream,
) -> Step {
    let lp_new = target(&proposal);
    let nan = lp_new.is_nan();
    let log_ratio = lp_new - lp_x + log_jacobian;
    let accept_prob = if nan || lp_new == f64::NEG_INFINITY {
        0.0
    } else if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    };
    if nan {
        log::debug!("TMCMC proposal produced a NaN target; rejected");
    }
    let u = rng.uniform();
    let accepted = accept_prob > 0.0 && u < accept_prob;
    let record = TmcmcStepRecord {
        kind,
        epsilon,
        accept_prob,
        accepted,
        nan_proposal: nan,
    };
    if accepted {
        Step {
            x: proposal,
            log_target: lp_new,
            record,
        }
    } else {
        Step {
            x: x.to_vec(),
            log_target: lp_x,
            record,
        }
    }
}

/// Additive move with an explicit innovation and signs.
pub fn additive_forced<F: FnMut(&[f64]) -> f64>(
    x: &[f64],
    lp_x: f64,
    target: F,
    cfg: &TmcmcConfig,
    epsilon: f64,
    signs: &[i8],
    rng: &mut RngStream,
) -> Step {
    additive_kind(x, lp_x, target, cfg, epsilon, signs, MoveKind::Additive, rng)
}

#[allow(clippy::too_many_arguments)]
fn additive_kind<F: FnMut(&[f64]) -> f64>(
    x: &[f64],
    lp_x: f64,
    target: F,
    cfg: &TmcmcConfig,
    epsilon: f64,
    signs: &[i8],
    kind: MoveKind,
    rng: &mut RngStream,
) -> Step {
    let proposal = x
        .iter()
        .zip(&cfg.scales)
        .zip(signs)
        .map(|((xi, a), &b)| xi + b as f64 * a * epsilon)
        .collect();
    finish(x, lp_x, proposal, 0.0, kind, epsilon, target, rng)
}

/// Multiplicative move with an explicit innovation and signs.
pub fn multiplicative_forced<F: FnMut(&[f64]) -> f64>(
    x: &[f64],
    lp_x: f64,
    target: F,
    epsilon: f64,
    signs: &[i8],
    rng: &mut RngStream,
) -> Step {
    let proposal = x
        .iter()
        .zip(signs)
        .map(|(xi, &b)| if b > 0 { xi * epsilon } else { xi / epsilon })
        .collect();
    let sum_b: i64 = signs.iter().map(|&b| b as i64).sum();
    let log_jacobian = sum_b as f64 * epsilon.ln();
    finish(
        x,
        lp_x,
        proposal,
        log_jacobian,
        MoveKind::Multiplicative,
        epsilon,
        target,
        rng,
    )
}

pub fn additive_cached<F: FnMut(&[f64]) -> f64>(
    x: &[f64],
    lp_x: f64,
    target: F,
    cfg: &TmcmcConfig,
    rng: &mut RngStream,
) -> Step {
    let eps = cfg.innovation.draw(rng);
    let b = signs(x.len(), rng);
    additive_kind(x, lp_x, target, cfg, eps, &b, MoveKind::Additive, rng)
}

pub fn multiplicative_cached<F: FnMut(&[f64]) -> f64>(
    x: &[f64],
    lp_x: f64,
    target: F,
    cfg: &TmcmcConfig,
    rng: &mut RngStream,
) -> Step {
    let eps = cfg.innovation.draw(rng);
    let b = signs(x.len(), rng);
    if x.iter().any(|&v| v == 0.0) {
        log::debug!("multiplicative TMCMC move at a zero coordinate; using the additive move");
        return additive_kind(x, lp_x, target, cfg, eps, &b, MoveKind::AdditiveFallback, rng);
    }
    multiplicative_forced(x, lp_x, target, eps, &b, rng)
}

/// Mixture of the two moves, tracking the current log-target.
pub fn block_update_cached<F: FnMut(&[f64]) -> f64>(
    x: &[f64],
    lp_x: f64,
    target: F,
    cfg: &TmcmcConfig,
    rng: &mut RngStream,
) -> Step {
    let additive = cfg.additive_prob >= 1.0 || rng.uniform() < cfg.additive_prob;
    if additive {
        additive_cached(x, lp_x, target, cfg, rng)
    } else {
        multiplicative_cached(x, lp_x, target, cfg, rng)
    }
}

fn initial<F: FnMut(&[f64]) -> f64>(x: &[f64], target: &mut F) -> Result<f64> {
    let lp = target(x);
    if lp.is_nan() || lp == f64::NEG_INFINITY || lp == f64::INFINITY {
        return Err(Error::InvalidParameter(format!(
            "TMCMC target is not finite at the current point ({lp})"
        )));
    }
    Ok(lp)
}

pub fn additive_step<F: FnMut(&[f64]) -> f64>(
    x: &[f64],
    mut target: F,
    cfg: &TmcmcConfig,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, TmcmcStepRecord)> {
    cfg.validate(x.len())?;
    let lp = initial(x, &mut target)?;
    let s = additive_cached(x, lp, target, cfg, rng);
    Ok((s.x, s.record))
}

pub fn multiplicative_step<F: FnMut(&[f64]) -> f64>(
    x: &[f64],
    mut target: F,
    cfg: &TmcmcConfig,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, TmcmcStepRecord)> {
    cfg.validate(x.len())?;
    let lp = initial(x, &mut target)?;
    let s = multiplicative_cached(x, lp, target, cfg, rng);
    Ok((s.x, s.record))
}

pub fn block_update<F: FnMut(&[f64]) -> f64>(
    x: &[f64],
    mut target: F,
    cfg: &TmcmcConfig,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, TmcmcStepRecord)> {
    cfg.validate(x.len())?;
    let lp = initial(x, &mut target)?;
    let s = block_update_cached(x, lp, target, cfg, rng);
    Ok((s.x, s.record))
}

/// Burn-in scale adaptation toward an acceptance band; frozen once burn-in ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleTuner {
    pub window: usize,
    pub low: f64,
    pub high: f64,
    proposed: usize,
    accepted: usize,
}

impl Default for ScaleTuner {
    fn default() -> Self {
        Self {
            window: 50,
            low: 0.15,
            high: 0.40,
            proposed: 0,
            accepted: 0,
        }
    }
}

impl ScaleTuner {
    /// Like [`observe`](Self::observe) but skips multiplicative moves, whose
    /// proposals do not depend on the scales.
    pub fn observe_step(&mut self, record: &TmcmcStepRecord, scales: &mut [f64]) {
        if record.kind != MoveKind::Multiplicative {
            self.observe(record.accepted, scales);
        }
    }

    /// Records one step; at the end of each window rescales `scales` if the window's
    /// acceptance rate left the band.
    pub fn observe(&mut self, accepted: bool, scales: &mut [f64]) {
        self.proposed += 1;
        self.accepted += accepted as usize;
        if self.proposed < self.window {
            return;
        }
        let rate = self.accepted as f64 / self.proposed as f64;
        let factor = if rate < self.low {
            0.7
        } else if rate > self.high {
            1.3
        } else {
            1.0
        };
        for a in scales.iter_mut() {
            *a = (*a * factor).clamp(1e-8, 1e4);
        }
        self.proposed = 0;
        self.accepted = 0;
    }
}

/// Acceptance counts aggregated over many steps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub proposed: u64,
    pub accepted: u64,
    pub multiplicative: u64,
    pub fallbacks: u64,
    pub nan_proposals: u64,
}

impl AcceptanceStats {
    pub fn add(&mut self, r: &TmcmcStepRecord) {
        self.proposed += 1;
        self.accepted += r.accepted as u64;
        self.multiplicative += (r.kind == MoveKind::Multiplicative) as u64;
        self.fallbacks += (r.kind == MoveKind::AdditiveFallback) as u64;
        self.nan_proposals += r.nan_proposal as u64;
    }

    pub fn merge(&mut self, o: &AcceptanceStats) {
        self.proposed += o.proposed;
        self.accepted += o.accepted;
        self.multiplicative += o.multiplicative;
        self.fallbacks += o.fallbacks;
        self.nan_proposals += o.nan_proposals;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}
