//! Positivity-preserving drift-implicit Euler simulation of SDEs driven by
//! fractional Brownian motion with drifts singular at zero.
//!
//! The crate covers exact fBM generation ([`fbm`]), transformed drifts and
//! their assumption certificates ([`drift`], [`assumptions`]), Lamperti
//! transformed interest-rate models ([`model`]), the implicit scheme itself
//! ([`solver`]), strong-convergence and moment experiments ([`convergence`],
//! [`moments`]) and a reproducible command-line runner ([`config`], [`cli`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod cli;
pub mod config;
pub mod convergence;
pub mod drift;
pub mod error;
pub mod fbm;
pub mod model;
pub mod moments;
pub mod output;
pub mod rng;
pub mod solver;

pub use assumptions::{audit_assumptions, AlphaRegime, AssumptionCertificate, AuditReport};
pub use drift::{ait_sahalia_drift, mean_reverting_drift, Drift, DriftFn, PowerTerm, RawDrift};
pub use error::{Error, Result};
pub use fbm::{
    empirical_increment_moment, fbm_covariance, sample_fbm_cholesky, sample_fbm_circulant, FbmMethod, FbmPath, Hurst,
    IncrementArray, TimeGrid,
};
pub use model::{ModelParams, ModelSpec};
pub use rng::SeedProvenance;
pub use solver::{implicit_step, integrate, power_path, RootOptions, SchemeConfig, SolutionPath, StepRoot};
