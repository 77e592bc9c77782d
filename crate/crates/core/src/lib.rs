//! Joint estimation of mixed time-series models (nonlinear fixed mean plus
//! stationary correlated error) with a debiased, missing-data aware Whittle
//! likelihood, alongside exact Gaussian maximum likelihood and two-stage
//! baselines, AEP-distributed errors, Kriging and a simulation-study harness.

pub mod aep;
pub mod cli;
pub mod covariance;
pub mod design;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod optim;
pub mod predict;
pub mod simstudy;
pub mod special;
pub mod spectral;

#[cfg(test)]
mod testutil;

pub use covariance::{CovParam, CovarianceFamily, CovarianceSpec};
pub use error::{Error, Result};
