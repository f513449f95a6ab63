//! Latent space models for indirectly observed bipartite compatibility networks.
//!
//! A compatibility network has donor and recipient nodes whose node and edge
//! weights are themselves estimates (log hazard ratios from a Cox model) and
//! carry standard errors. The crate covers the whole loop:
//!
//! * [`network`]: the network data model and its CSV format
//! * [`lsm`]: the latent space model, its likelihood, gradient and fitting
//! * [`mds`]: classical MDS initialisation of latent positions
//! * [`align`]: Procrustes alignment against ground truth
//! * [`sim`]: the synthetic network generator and replicate harness
//! * [`baselines`]: PCA and NMTF refinement baselines
//! * [`metrics`]: RMSE, mean log-probability, sign accuracy and the
//!   train/test refinement protocol
//! * [`survival`]: ridge Cox regression, Harrell's C-index, synthetic
//!   transplant cohorts and the coefficient substitution pipeline

pub mod align;
pub mod baselines;
pub mod error;
pub mod io;
pub mod lsm;
pub mod mds;
pub mod metrics;
pub mod network;
pub mod refine;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod survival;

pub use error::{Error, Result};
pub use lsm::{fit, FitConfig, FitResult, LsmParams, RefinedEstimates};
pub use network::CompatibilityNetwork;
