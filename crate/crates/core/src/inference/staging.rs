use log::warn;

use crate::error::Result;
use crate::likelihood::{log_sum_exp, LikelihoodEvaluator};
use crate::model::{validate_sequence, CohortData, EventTable, SubtypeModel};
use crate::Error;

/// Joint posterior of one subject over (subtype, stage).
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPosterior {
    n_stages: usize,
    /// `C x (K + 1)`, row-major by subtype.
    probabilities: Vec<f64>,
    pub ml_subtype: usize,
    pub ml_stage: usize,
    /// Posterior mean stage given each subtype; `None` where the subject is
    /// impossible under that subtype's sequence.
    pub expected_stage: Vec<Option<f64>>,
}

impl SubjectPosterior {
    pub fn probability(&self, subtype: usize, stage: usize) -> f64 {
        self.probabilities[subtype * self.n_stages + stage]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    pub fn n_subtypes(&self) -> usize {
        self.probabilities.len() / self.n_stages
    }

    /// Posterior probability of each subtype.
    pub fn subtype_probabilities(&self) -> Vec<f64> {
        self.probabilities
            .chunks_exact(self.n_stages)
            .map(|row| row.iter().sum())
            .collect()
    }

    /// Expected stage under the maximum-likelihood subtype.
    pub fn ml_expected_stage(&self) -> f64 {
        self.expected_stage[self.ml_subtype].expect("ML subtype has positive mass")
    }
}

#[derive(Debug, Clone)]
pub struct Staging {
    /// `None` for subjects with zero likelihood under every (subtype, stage).
    pub subjects: Vec<Option<SubjectPosterior>>,
    pub excluded: Vec<usize>,
}

pub fn subject_posteriors(cohort: &CohortData, model: &SubtypeModel, table: &EventTable) -> Result<Staging> {
    for seq in model.sequences() {
        if !validate_sequence(seq, table)? {
            return Err(Error::InvalidModel("sequence violates level order".into()));
        }
    }
    Ok(subject_posteriors_with(
        &LikelihoodEvaluator::new(cohort, table)?,
        model,
    ))
}

/// `P(c, k | X_j) ∝ P(c) P(k) prod_i P(x_ij | S_c, k)`.
pub fn subject_posteriors_with(eval: &LikelihoodEvaluator, model: &SubtypeModel) -> Staging {
    let n_stages = eval.n_stages();
    let n_subtypes = model.n_subtypes();
    let matrices: Vec<_> = model.sequences().iter().map(|s| eval.stage_matrix(s)).collect();
    let log_prior = eval.log_stage_prior();
    let log_f: Vec<f64> = model.fractions().iter().map(|f| f.ln()).collect();

    let mut subjects = Vec::with_capacity(eval.n_subjects());
    let mut excluded = Vec::new();
    let mut joint = vec![0.0; n_subtypes * n_stages];
    for j in 0..eval.n_subjects() {
        for (c, m) in matrices.iter().enumerate() {
            for (k, lp) in log_prior.iter().enumerate() {
                joint[c * n_stages + k] = log_f[c] + lp + m.get(j, k);
            }
        }
        let norm = log_sum_exp(&joint);
        if norm == f64::NEG_INFINITY {
            warn!("subject {j} has zero likelihood under every subtype and stage; excluded");
            excluded.push(j);
            subjects.push(None);
            continue;
        }
        let mut probabilities: Vec<f64> = joint.iter().map(|x| (x - norm).exp()).collect();
        let total: f64 = probabilities.iter().sum();
        for p in probabilities.iter_mut() {
            *p /= total;
        }

        let mut best = 0;
        for (idx, p) in probabilities.iter().enumerate() {
            if *p > probabilities[best] {
                best = idx;
            }
        }

        let expected_stage = (0..n_subtypes)
            .map(|c| {
                let row = &joint[c * n_stages..(c + 1) * n_stages];
                let z = log_sum_exp(row);
                (z > f64::NEG_INFINITY).then(|| row.iter().enumerate().map(|(k, x)| k as f64 * (x - z).exp()).sum())
            })
            .collect();
        subjects.push(Some(SubjectPosterior {
            n_stages,
            probabilities,
            ml_subtype: best / n_stages,
            ml_stage: best % n_stages,
            expected_stage,
        }));
    }
    Staging { subjects, excluded }
}

/// Per subtype: subjects whose ML subtype it is, and the summed posterior
/// subtype probabilities.
pub fn subtype_sizes(staging: &Staging, n_subtypes: usize) -> (Vec<usize>, Vec<f64>) {
    let mut hard = vec![0; n_subtypes];
    let mut soft = vec![0.0; n_subtypes];
    for p in staging.subjects.iter().flatten() {
        hard[p.ml_subtype] += 1;
        for (s, q) in soft.iter_mut().zip(p.subtype_probabilities()) {
            *s += q;
        }
    }
    (hard, soft)
}
