//! Generic chain driver with burn-in tuning, thinning, checkpoints and resume.
//!
//! Every random draw comes from a stream keyed by (stage, block, sweep), so a model's
//! state after sweep s is a pure function of the seed, the data and s. A checkpoint
//! therefore only needs the model state and the output accumulated so far.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::output::{ChainOutput, Layout, StepRow};
use super::schedule::Executor;
use crate::error::{Error, Result};
use crate::stats::{RngStream, StreamKey};
use crate::tmcmc::{AcceptanceStats, TmcmcStepRecord};

/// State handed to a model for one sweep.
pub struct SweepContext<'a> {
    pub sweep: u64,
    pub seed: u64,
    /// True during burn-in: TMCMC scales adapt.
    pub tuning: bool,
    pub exec: &'a Executor,
    timings: &'a mut BTreeMap<String, f64>,
    acceptance: &'a mut BTreeMap<String, AcceptanceStats>,
    steps: &'a mut Vec<StepRow>,
}

impl<'a> SweepContext<'a> {
    pub fn stream(&self, key: StreamKey) -> RngStream {
        RngStream::keyed(self.seed, key)
    }

    /// Runs `f` and adds its wall-clock time to `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let t = Instant::now();
        let out = f(self);
        *self.timings.entry(stage.to_string()).or_default() += t.elapsed().as_secs_f64();
        out
    }

    /// Logs one central TMCMC step (written to the step file).
    pub fn record_step(&mut self, stage: &str, record: TmcmcStepRecord) {
        self.acceptance.entry(stage.to_string()).or_default().add(&record);
        self.steps.push(StepRow { sweep: self.sweep, stage: stage.to_string(), record });
    }

    /// Adds aggregated acceptance counts from a parallel stage.
    pub fn record_stats(&mut self, stage: &str, stats: &AcceptanceStats) {
        self.acceptance.entry(stage.to_string()).or_default().merge(stats);
    }
}

/// A sampler that the chain driver can run.
pub trait ChainModel: Serialize + DeserializeOwned {
    fn layout(&self) -> Layout;
    fn columns(&self) -> Vec<String>;
    fn sweep(&mut self, ctx: &mut SweepContext<'_>) -> Result<()>;
    /// Current values of every column, in `columns()` order.
    fn record(&self) -> Vec<f64>;
    /// Log-joint density from the model's cached sufficient statistics.
    fn log_joint(&self) -> f64;
    /// The same quantity recomputed from the raw state and data.
    fn log_joint_from_scratch(&self) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub seed: u64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunControl {
    /// Sweeps between checkpoints (0 disables them).
    pub checkpoint_every: u64,
    pub checkpoint_path: Option<PathBuf>,
    /// Checked after every sweep; when set the run checkpoints and stops.
    pub interrupt: Option<Arc<AtomicBool>>,
    /// Stop (as if interrupted) once this many sweeps are complete.
    pub stop_after: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint<M> {
    settings: ChainSettings,
    model: M,
    output: ChainOutput,
}

fn write_checkpoint<M: ChainModel>(path: &Path, settings: ChainSettings, model: &M, output: &ChainOutput) -> Result<()> {
    #[derive(Serialize)]
    struct Ref<'a, M> {
        settings: ChainSettings,
        model: &'a M,
        output: &'a ChainOutput,
    }
    let text = serde_json::to_string(&Ref { settings, model, output })
        .map_err(|e| Error::Internal(format!("checkpoint serialization: {e}")))?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs a fresh chain from `model`'s initial state.
pub fn run_chain<M: ChainModel>(
    model: M,
    settings: ChainSettings,
    exec: &Executor,
    control: &RunControl,
) -> Result<(M, ChainOutput)> {
    settings.validate()?;
    let output = ChainOutput::new(
        model.layout(),
        settings.seed,
        settings.iterations,
        settings.burn_in,
        settings.thinning,
        model.columns(),
    );
    drive(model, output, settings, exec, control)
}

/// Continues a run from a checkpoint file.
pub fn resume_chain<M: ChainModel>(path: &Path, exec: &Executor, control: &RunControl) -> Result<(M, ChainOutput)> {
    let text = std::fs::read_to_string(path)?;
    let ck: Checkpoint<M> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    drive(ck.model, ck.output, ck.settings, exec, control)
}

fn drive<M: ChainModel>(
    mut model: M,
    mut output: ChainOutput,
    settings: ChainSettings,
    exec: &Executor,
    control: &RunControl,
) -> Result<(M, ChainOutput)> {
    let mut timings = std::mem::take(&mut output.timings);
    let mut acceptance = std::mem::take(&mut output.acceptance);
    let mut steps = std::mem::take(&mut output.steps);
    let start = output.completed_sweeps;
    for s in start..settings.iterations {
        let mut ctx = SweepContext {
            sweep: s,
            seed: settings.seed,
            tuning: s < settings.burn_in,
            exec,
            timings: &mut timings,
            acceptance: &mut acceptance,
            steps: &mut steps,
        };
        model.sweep(&mut ctx)?;
        let lj = model.log_joint();
        if !lj.is_finite() {
            return Err(Error::Internal(format!("log-joint is {lj} after sweep {s}")));
        }
        output.log_joint.push(lj);
        if output.is_retained(s) {
            output.sweeps.push(s);
            output.samples.push(model.record());
        }
        output.completed_sweeps = s + 1;

        let done = s + 1;
        let interrupted = control
            .interrupt
            .as_ref()
            .is_some_and(|f| f.load(Ordering::SeqCst))
            || control.stop_after == Some(done);
        let periodic = control.checkpoint_every > 0 && done % control.checkpoint_every == 0;
        if (periodic || interrupted) && done < settings.iterations {
            if let Some(path) = &control.checkpoint_path {
                output.timings = timings.clone();
                output.acceptance = acceptance.clone();
                output.steps = steps.clone();
                write_checkpoint(path, settings, &model, &output)?;
                output.steps.clear();
                log::info!("checkpoint after sweep {done} written to {}", path.display());
            }
        }
        if interrupted && done < settings.iterations {
            return Err(Error::Interrupted(done));
        }
    }
    output.timings = timings;
    output.acceptance = acceptance;
    output.steps = steps;
    Ok((model, output))
}
