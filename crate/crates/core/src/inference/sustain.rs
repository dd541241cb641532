use log::{debug, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::greedy::{best_of, greedy_with, multistart_greedy};
use super::{mcmc_sequences, mixture_objective, FitConfig, SubtypeObjective};
use crate::error::{Error, Result};
use crate::likelihood::{log_sum_exp, LikelihoodEvaluator};
use crate::model::{CohortData, EventTable, MixedEventSequence, SubtypeModel};
use crate::rng::{self, derive_seed, Rng};

const REFINE_TOLERANCE: f64 = 1e-6;
const MAX_REFINE_ROUNDS: usize = 100;
const MIN_SPLIT_SUBJECTS: usize = 2;

/// A fitted `C`-subtype model and its objective value on the training data.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub model: SubtypeModel,
    pub log_likelihood: f64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SustainFit {
    /// Models for `C = 1, 2, ...` in order; may stop short of `max_subtypes`.
    pub models: Vec<FittedModel>,
    pub warnings: Vec<String>,
}

pub fn fit_sustain(cohort: &CohortData, table: &EventTable, config: &FitConfig) -> Result<SustainFit> {
    let eval = LikelihoodEvaluator::new(cohort, table)?;
    fit_sustain_with(&eval, table, config)
}

/// Hierarchical subtype fitting.
///
/// `C = 1` is fitted by multi-start greedy ascent. Each later `C` tries
/// splitting every existing subtype: its hard-assigned subjects are halved
/// at random, each half gets its own multi-start fit, and the enlarged model
/// is refined jointly. The best split is kept. Every `C` ends with an MCMC
/// run whose best visited state becomes the model.
pub fn fit_sustain_with(eval: &LikelihoodEvaluator, table: &EventTable, config: &FitConfig) -> Result<SustainFit> {
    config.validate()?;
    if eval.n_subjects() == 0 {
        return Err(Error::InvalidCohort("cohort has no subjects".into()));
    }
    let seed = config.rng_seed;
    let mut warnings = Vec::new();
    let mut models: Vec<FittedModel> = Vec::new();

    let (seq, ll) = multistart_greedy(
        eval,
        table,
        config.n_startpoints,
        config.n_greedy_passes,
        derive_seed(seed, 1),
    );
    debug!("C=1 greedy log-likelihood {ll:.4}");
    models.push(finish(
        eval,
        table,
        vec![seq],
        vec![1.0],
        ll,
        config,
        derive_seed(seed, 101),
    )?);

    for n_subtypes in 2..=config.max_subtypes {
        let prev = models.last().expect("C=1 fitted");
        let candidate = grow(eval, table, prev, config, derive_seed(seed, 1000 + n_subtypes as u64));
        let Some((seqs, fractions, ll)) = candidate else {
            let msg = format!(
                "every split of the {}-subtype model left a half with fewer than {MIN_SPLIT_SUBJECTS} subjects; stopping at C={}",
                n_subtypes - 1,
                n_subtypes - 1
            );
            warn!("{msg}");
            warnings.push(msg);
            break;
        };
        debug!("C={n_subtypes} refined log-likelihood {ll:.4}");
        models.push(finish(
            eval,
            table,
            seqs,
            fractions,
            ll,
            config,
            derive_seed(seed, 100 + n_subtypes as u64),
        )?);
    }
    Ok(SustainFit { models, warnings })
}

fn finish(
    eval: &LikelihoodEvaluator,
    table: &EventTable,
    seqs: Vec<MixedEventSequence>,
    fractions: Vec<f64>,
    ll: f64,
    config: &FitConfig,
    seed: u64,
) -> Result<FittedModel> {
    let chain = mcmc_sequences(eval, table, &seqs, &fractions, config.mcmc_iterations, seed)?;
    debug_assert!(chain.map_log_likelihood >= ll - 1e-9 * ll.abs().max(1.0));
    let model = SubtypeModel::new(chain.map_sequences, fractions, table)?.with_mcmc_samples(chain.samples);
    Ok(FittedModel {
        model,
        log_likelihood: chain.map_log_likelihood,
        acceptance_rate: chain.acceptance_rate,
    })
}

type Candidate = (Vec<MixedEventSequence>, Vec<f64>, f64);

fn grow(
    eval: &LikelihoodEvaluator,
    table: &EventTable,
    prev: &FittedModel,
    config: &FitConfig,
    seed: u64,
) -> Option<Candidate> {
    let seqs = prev.model.sequences();
    let fractions = prev.model.fractions();
    let n_prev = seqs.len();
    let per_subtype: Vec<Vec<f64>> = seqs.iter().map(|s| eval.subject_log_likelihoods(s)).collect();
    let assignment = hard_assign(&per_subtype, fractions);

    let candidates: Vec<(Option<Candidate>, usize)> = (0..n_prev)
        .into_par_iter()
        .map(|c| {
            let split_seed = derive_seed(seed, c as u64);
            let mut rng = rng::seeded(split_seed);
            let mut members: Vec<usize> = (0..assignment.len()).filter(|&j| assignment[j] == c).collect();
            members.shuffle(&mut rng);
            let half = members.len() / 2;
            let (a, b) = members.split_at(half);
            if a.len() < MIN_SPLIT_SUBJECTS || b.len() < MIN_SPLIT_SUBJECTS {
                return (None, c);
            }
            let fit_half = |subjects: &[usize], stream: u64| {
                multistart_greedy(
                    &eval.restrict(subjects),
                    table,
                    config.n_startpoints,
                    config.n_greedy_passes,
                    derive_seed(split_seed, stream),
                )
                .0
            };
            let (seq_a, seq_b) = (fit_half(a, 1), fit_half(b, 2));
            let mut new_seqs = seqs.to_vec();
            new_seqs[c] = seq_a;
            new_seqs.push(seq_b);
            let uniform = vec![1.0 / (n_prev + 1) as f64; n_prev + 1];
            (Some(refine(eval, table, new_seqs, uniform, config, &mut rng)), c)
        })
        .collect();

    let viable: Vec<(Candidate, f64)> = candidates
        .into_iter()
        .filter_map(|(cand, _)| cand)
        .map(|cand| {
            let ll = cand.2;
            (cand, ll)
        })
        .collect();
    if viable.is_empty() {
        return None;
    }
    let (best, best_ll) = best_of(viable);
    if best_ll >= prev.log_likelihood {
        return Some(best);
    }
    // The split lost ground against the smaller model. Duplicating the largest
    // subtype reproduces the smaller model's likelihood exactly, and refinement
    // never decreases it.
    let largest = (0..n_prev)
        .max_by(|&x, &y| fractions[x].total_cmp(&fractions[y]).then(y.cmp(&x)))
        .expect("non-empty");
    let mut dup_seqs = seqs.to_vec();
    dup_seqs.push(seqs[largest].clone());
    let mut dup_fractions = fractions.to_vec();
    dup_fractions[largest] /= 2.0;
    dup_fractions.push(fractions[largest] / 2.0);
    let mut rng = rng::seeded(derive_seed(seed, u64::MAX));
    let dup = refine(eval, table, dup_seqs, dup_fractions, config, &mut rng);
    Some(if dup.2 > best_ll { dup } else { best })
}

/// Maximum-likelihood subtype of every subject; ties go to the lowest index.
fn hard_assign(per_subtype: &[Vec<f64>], fractions: &[f64]) -> Vec<usize> {
    let n_subjects = per_subtype[0].len();
    (0..n_subjects)
        .map(|j| {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (c, ll) in per_subtype.iter().enumerate() {
                let v = fractions[c].ln() + ll[j];
                if v > best_v {
                    best = c;
                    best_v = v;
                }
            }
            best
        })
        .collect()
}

/// Alternates per-subtype greedy ascent (others fixed) with the
/// responsibility update of the fractions until the gain drops below
/// tolerance.
fn refine(
    eval: &LikelihoodEvaluator,
    table: &EventTable,
    mut seqs: Vec<MixedEventSequence>,
    mut fractions: Vec<f64>,
    config: &FitConfig,
    rng: &mut Rng,
) -> Candidate {
    let n_subtypes = seqs.len();
    let mut per_subtype: Vec<Vec<f64>> = seqs.iter().map(|s| eval.subject_log_likelihoods(s)).collect();
    let mut log_f: Vec<f64> = fractions.iter().map(|f| f.ln()).collect();
    let mut ll = mixture_objective(&per_subtype, &log_f);
    let n_subjects = eval.n_subjects();
    let mut others = vec![0.0; n_subjects];
    let mut terms = vec![0.0; n_subtypes];

    for _ in 0..MAX_REFINE_ROUNDS {
        let start = ll;
        for c in 0..n_subtypes {
            for (j, o) in others.iter_mut().enumerate() {
                for (cc, t) in terms.iter_mut().enumerate() {
                    *t = if cc == c {
                        f64::NEG_INFINITY
                    } else {
                        log_f[cc] + per_subtype[cc][j]
                    };
                }
                *o = log_sum_exp(&terms);
            }
            let mut objective = SubtypeObjective::new(eval, log_f[c], Some(&others));
            let (seq, _) = greedy_with(&mut objective, table, &seqs[c], config.n_greedy_passes, rng);
            per_subtype[c] = eval.subject_log_likelihoods(&seq);
            seqs[c] = seq;
        }
        ll = mixture_objective(&per_subtype, &log_f);

        let updated = update_fractions(&per_subtype, &fractions);
        let updated_log: Vec<f64> = updated.iter().map(|f| f.ln()).collect();
        let updated_ll = mixture_objective(&per_subtype, &updated_log);
        if updated_ll >= ll {
            fractions = updated;
            log_f = updated_log;
            ll = updated_ll;
        }
        if ll - start < REFINE_TOLERANCE {
            break;
        }
    }
    (seqs, fractions, ll)
}

/// `P(c) <- mean_j P(c | X_j)`, renormalised onto the simplex.
fn update_fractions(per_subtype: &[Vec<f64>], fractions: &[f64]) -> Vec<f64> {
    let n_subtypes = fractions.len();
    let n_subjects = per_subtype[0].len();
    let log_f: Vec<f64> = fractions.iter().map(|f| f.ln()).collect();
    let mut totals = vec![0.0; n_subtypes];
    let mut terms = vec![0.0; n_subtypes];
    for j in 0..n_subjects {
        for (t, (lf, ll)) in terms.iter_mut().zip(log_f.iter().zip(per_subtype)) {
            *t = lf + ll[j];
        }
        let norm = log_sum_exp(&terms);
        if norm == f64::NEG_INFINITY {
            // Impossible under every subtype: leave the fractions as they are.
            for (t, f) in totals.iter_mut().zip(fractions) {
                *t += f;
            }
        } else {
            for (t, x) in totals.iter_mut().zip(&terms) {
                *t += (x - norm).exp();
            }
        }
    }
    let sum: f64 = totals.iter().sum();
    totals.iter().map(|t| t / sum).collect()
}
