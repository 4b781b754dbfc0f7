//! Bayesian nonparametric models for gene-gene and gene-environment interaction in
//! case-control genotype data.

pub mod cli;
pub mod data;
pub mod error;
pub mod inference;
pub mod mixture;
pub mod models;
pub mod runtime;
pub mod sim;
pub mod stats;
pub mod tmcmc;

pub use error::{Error, Result};
