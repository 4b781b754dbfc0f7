//! Execution machinery: scheduling, chain driver, configuration and output files.

pub mod chain;
pub mod config;
pub mod ess;
pub mod output;
pub mod schedule;

pub use chain::{run_chain, ChainModel, RunControl, SweepContext};
pub use config::RunConfig;
pub use ess::effective_sample_size;
pub use output::{ChainOutput, Layout, ModelKind};
pub use schedule::{plan_schedule, Executor, Schedule};
