//! Numerical kernels and random samplers shared by every model.

pub mod dist;
pub mod linalg;
pub mod rng;
pub mod special;

pub use dist::{draw, Dist};
pub use linalg::{
    matrix_normal_logpdf, sample_inverse_wishart, InverseWishartParams, MatrixNormalParams,
};
pub use rng::{RngStream, Stage, StreamKey};
pub use special::log_beta_bernoulli_marginal;
