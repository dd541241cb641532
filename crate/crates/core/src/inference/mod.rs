//! Sequence estimation and subject staging.
//!
//! The objective is the mixture likelihood with `1e-250` added to every
//! subject's likelihood (see [`SUBJECT_LOG_FLOOR`]), so that a sequence ruling
//! out a handful of subjects is still ranked against other sequences instead
//! of collapsing to negative infinity.

mod greedy;
mod mcmc;
mod staging;
mod sustain;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{floored, log_add_exp, LikelihoodEvaluator, SUBJECT_LOG_FLOOR};
use crate::model::MixedEventSequence;

pub use greedy::{greedy_ascent, multistart_greedy};
pub use mcmc::{mcmc_sequences, McmcResult};
pub use staging::{subject_posteriors, subject_posteriors_with, subtype_sizes, Staging, SubjectPosterior};
pub use sustain::{fit_sustain, fit_sustain_with, FittedModel, SustainFit};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    #[serde(rename = "startpoints")]
    pub n_startpoints: usize,
    #[serde(rename = "greedy_passes")]
    pub n_greedy_passes: usize,
    pub mcmc_iterations: usize,
    #[serde(rename = "seed")]
    pub rng_seed: u64,
    pub max_subtypes: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_startpoints: 25,
            n_greedy_passes: 10,
            mcmc_iterations: 100_000,
            rng_seed: 0,
            max_subtypes: 1,
        }
    }
}

impl FitConfig {
    /// Laptop-scale profile: 10 startpoints and 10k MCMC iterations.
    pub fn desk() -> Self {
        FitConfig {
            n_startpoints: 10,
            mcmc_iterations: 10_000,
            ..FitConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("startpoints", self.n_startpoints),
            ("greedy_passes", self.n_greedy_passes),
            ("mcmc_iterations", self.mcmc_iterations),
            ("max_subtypes", self.max_subtypes),
        ] {
            if v < 1 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Scores candidate sequences for one subtype with every other subtype held
/// fixed. `others[j]` is `log sum_{c' != c} P(c') P(X_j | S_c')`.
pub(crate) struct SubtypeObjective<'a> {
    eval: &'a LikelihoodEvaluator,
    log_fraction: f64,
    others: Option<&'a [f64]>,
    scratch: Vec<f64>,
    subject_ll: Vec<f64>,
}

impl<'a> SubtypeObjective<'a> {
    pub(crate) fn single(eval: &'a LikelihoodEvaluator) -> Self {
        Self::new(eval, 0.0, None)
    }

    pub(crate) fn new(eval: &'a LikelihoodEvaluator, log_fraction: f64, others: Option<&'a [f64]>) -> Self {
        SubtypeObjective {
            eval,
            log_fraction,
            others,
            scratch: Vec::new(),
            subject_ll: vec![0.0; eval.n_subjects()],
        }
    }

    pub(crate) fn score(&mut self, seq: &MixedEventSequence) -> f64 {
        self.eval
            .subject_log_likelihoods_into(seq, &mut self.scratch, &mut self.subject_ll);
        match self.others {
            None => self.subject_ll.iter().map(|l| floored(*l)).sum(),
            Some(others) => self
                .subject_ll
                .iter()
                .zip(others)
                .map(|(l, o)| floored(log_add_exp(self.log_fraction + l, *o)))
                .sum(),
        }
    }
}

/// Floored mixture objective from per-subtype subject log-likelihoods.
pub(crate) fn mixture_objective(per_subtype: &[Vec<f64>], log_fractions: &[f64]) -> f64 {
    let n_subjects = per_subtype.first().map_or(0, Vec::len);
    (0..n_subjects)
        .map(|j| {
            let mut acc = f64::NEG_INFINITY;
            for (ll, lf) in per_subtype.iter().zip(log_fractions) {
                acc = log_add_exp(acc, lf + ll[j]);
            }
            log_add_exp(acc, SUBJECT_LOG_FLOOR)
        })
        .sum()
}
