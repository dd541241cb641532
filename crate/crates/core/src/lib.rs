//! Mixed-events disease progression modelling.
//!
//! A single event-based likelihood that combines three biomarker trajectory
//! shapes: binary (normal to abnormal), ordinal (stepwise through scores) and
//! z-score (piecewise linear through user-defined z milestones). On top of it
//! sits subtype-and-stage inference: a mixture of event sequences fitted by
//! multi-start greedy ascent, hierarchical subtype splitting and
//! Metropolis-Hastings sampling.
//!
//! Module map:
//!
//! - [`model`]: biomarker specs, the event table, sequences, cohorts, subtype models
//! - [`likelihood`]: per-kind kernels and the stage likelihood matrix, in log space
//! - [`gmm`]: two-component Gaussian mixtures turning raw values into binary event densities
//! - [`inference`]: greedy ascent, MCMC, hierarchical subtype fitting and staging
//! - [`simulation`]: synthetic ground truth and cohorts
//! - [`evaluation`]: Kendall tau, subtype matching, cross-validation, AUC, Pearson, PVDs
//! - [`io`]: configuration, CSV and JSON file formats

pub mod error;
pub mod evaluation;
pub mod gmm;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
pub use model::{
    build_event_table, random_valid_sequence, validate_sequence, BiomarkerModelKind, BiomarkerSpec, Cell, CohortData,
    Event, EventTable, McmcSample, MixedEventSequence, SubtypeModel,
};
