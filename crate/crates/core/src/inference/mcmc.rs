use rand::Rng as _;

use super::greedy::relocation_slots;
use super::mixture_objective;
use crate::error::{Error, Result};
use crate::likelihood::LikelihoodEvaluator;
use crate::model::{levels_in_order, validate_sequence, EventTable, McmcSample, MixedEventSequence};
use crate::rng;

#[derive(Debug, Clone)]
pub struct McmcResult {
    /// The chain state after every iteration.
    pub samples: Vec<McmcSample>,
    pub map_sequences: Vec<MixedEventSequence>,
    pub map_log_likelihood: f64,
    pub acceptance_rate: f64,
}

/// Metropolis-Hastings over the subtype sequences with fixed fractions.
///
/// Each iteration picks a subtype and an event uniformly and moves the event
/// to a uniformly chosen slot among those that keep its biomarker's levels
/// in order. The set of such slots depends only on the other events, so the
/// forward and reverse proposals have equal probability and the acceptance
/// ratio is the likelihood ratio.
pub fn mcmc_sequences(
    eval: &LikelihoodEvaluator,
    table: &EventTable,
    init: &[MixedEventSequence],
    fractions: &[f64],
    iterations: usize,
    rng_seed: u64,
) -> Result<McmcResult> {
    if init.is_empty() || init.len() != fractions.len() {
        return Err(Error::InvalidArgument("need one fraction per initial sequence".into()));
    }
    for seq in init {
        if !validate_sequence(seq, table)? {
            return Err(Error::InvalidSequence("initial sequence violates level order".into()));
        }
    }
    let mut rng = rng::seeded(rng_seed);
    let n_subtypes = init.len();
    let n_events = table.n_events();
    let log_fractions: Vec<f64> = fractions.iter().map(|f| f.ln()).collect();

    let mut state: Vec<MixedEventSequence> = init.to_vec();
    let mut per_subtype: Vec<Vec<f64>> = state.iter().map(|s| eval.subject_log_likelihoods(s)).collect();
    let mut current = mixture_objective(&per_subtype, &log_fractions);

    let mut map_sequences = state.clone();
    let mut map_log_likelihood = current;
    let mut samples = Vec::with_capacity(iterations);
    let mut accepted = 0usize;
    let mut scratch = Vec::new();
    let mut proposal_ll = vec![0.0; eval.n_subjects()];

    for _ in 0..iterations {
        let c = rng.random_range(0..n_subtypes);
        let e = rng.random_range(0..n_events);
        let mut order = state[c].order().to_vec();
        let (from, lo, hi) = relocation_slots(&mut order, e, table);
        let slot = rng.random_range(lo..=hi);
        // Drawn before the shortcut below so the stream does not depend on it.
        let u: f64 = rng.random();
        if slot == from {
            accepted += 1;
        } else {
            order.insert(slot, e);
            debug_assert!(levels_in_order(&order, table));
            let proposal = MixedEventSequence::from_order_unchecked(order);
            eval.subject_log_likelihoods_into(&proposal, &mut scratch, &mut proposal_ll);
            std::mem::swap(&mut per_subtype[c], &mut proposal_ll);
            let candidate = mixture_objective(&per_subtype, &log_fractions);
            if u.ln() < candidate - current {
                state[c] = proposal;
                current = candidate;
                accepted += 1;
                if current > map_log_likelihood {
                    map_log_likelihood = current;
                    map_sequences = state.clone();
                }
            } else {
                std::mem::swap(&mut per_subtype[c], &mut proposal_ll);
            }
        }
        samples.push(McmcSample {
            sequences: state.clone(),
            log_likelihood: current,
        });
    }

    Ok(McmcResult {
        samples,
        map_sequences,
        map_log_likelihood,
        acceptance_rate: if iterations == 0 {
            0.0
        } else {
            accepted as f64 / iterations as f64
        },
    })
}
