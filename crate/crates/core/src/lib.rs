//! Cause-of-death distribution estimation from verbal-autopsy surveys with a
//! Bayesian probit factor model whose symptom associations depend on age and
//! sex.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: model quantities and deterministic model math,
//! * [`samplers`]: seeded random-variate generation,
//! * [`gibbs`]: the MCMC sweep and chain orchestration,
//! * [`predict`]: cause posteriors and cause-fraction draws for targets,
//! * [`relevance`]: entropy, mutual information and conditional mutual
//!   information of each predictor with the cause,
//! * [`evalmetrics`]: CSMF accuracy, interval coverage and Cramér's V,
//! * [`io`], [`cv`], [`pipeline`]: ingestion, K selection and the end-to-end
//!   runs behind the command-line tool.

pub mod cv;
pub mod data;
pub mod error;
pub mod evalmetrics;
pub mod gibbs;
pub mod io;
pub mod math;
pub mod model;
pub mod pipeline;
pub mod predict;
pub mod relevance;
pub mod samplers;
pub mod snapshot;
pub mod synth;

pub use data::{Record, Split, VaDataset};
pub use error::{Result, VaError};
pub use gibbs::{run_chain, CausePriorUpdate, ChainConfig, ChainOutput, GibbsSampler, ModelState};
pub use model::{
    CategoricalModels, CovariateVector, LatentState, Loadings, ModelParams, ShrinkagePrecisions,
    Standardizer,
};
pub use samplers::RngStream;
