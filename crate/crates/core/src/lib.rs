//! Cluster enumeration for Gaussian data with Bayesian information criteria.
//!
//! The pipeline is: fit candidate models with `l = L_min..=L_max` clusters,
//! score each with one or more criteria, and pick the number of clusters.
//!
//! - [`numkernel`]: small dense linear algebra (Cholesky, Gaussian densities, duplication matrices)
//! - [`clustering`]: K-means++, Lloyd, EM for Gaussian mixtures, random swap
//! - [`criteria`]: `bic_n`, `bic_o`, `bic_os`, `bic_ns`, `bic_g`
//! - [`enumeration`]: candidate enumeration, argmax and knee-point selection
//! - [`synthdata`]: the two synthetic mixture generators
//! - [`harness`]: CSV ingest, Monte Carlo runs and reports

pub mod clustering;
pub mod criteria;
pub mod enumeration;
pub mod float_serde;
pub mod harness;
pub mod numkernel;
pub mod stream;
pub mod synthdata;
