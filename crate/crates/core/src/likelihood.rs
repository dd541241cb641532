//! The mixed-events likelihood.
//!
//! For a subject `j` and sequence `S`,
//! `P(X_j | S) = sum_k P(k) prod_i P(x_ij | S, k, M(i))`, where the per-biomarker
//! term depends on the biomarker kind:
//!
//! - binary: `p(x | E)` once the biomarker's event has occurred by stage `k`,
//!   `p(x | not E)` before;
//! - ordinal: the probability of the highest score reached by stage `k`;
//! - z-score: a Gaussian density around a piecewise-linear trajectory through
//!   `(0, 0)`, `(t_w, z_w)` for each milestone and `(K + 1, z_max)`.
//!
//! Everything is accumulated in log space. Missing cells contribute a factor
//! of one. Zero probabilities stay exact and map to negative infinity.

use crate::error::{Error, Result};
use crate::model::{
    validate_sequence, BiomarkerModelKind, BiomarkerSpec, Cell, CohortData, EventTable, MixedEventSequence,
    SubtypeModel,
};

/// `ln(1e-250)`. Optimisers add `1e-250` to each subject's likelihood so that
/// sequences ruling out some subject remain comparable.
pub const SUBJECT_LOG_FLOOR: f64 = -575.646_273_248_511_4;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `ln(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum exp(x))`; negative infinity for an empty slice or all `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Subject log-likelihood with the optimiser floor added in probability space.
#[inline]
pub fn floored(log_likelihood: f64) -> f64 {
    log_add_exp(log_likelihood, SUBJECT_LOG_FLOOR)
}

/// Uniform prior over the `K + 1` stages.
pub fn stage_prior(n_events: usize) -> Result<Vec<f64>> {
    if n_events < 1 {
        return Err(Error::InvalidArgument("stage prior needs at least one event".into()));
    }
    let n = n_events + 1;
    Ok(vec![1.0 / n as f64; n])
}

/// Binary event kernel. `event_position` is the 1-based stage at which the
/// event occurs; the event has happened at stage `k` when it is `<= k`.
pub fn binary_event_likelihood(cell: (f64, f64), event_position: usize, k: usize) -> f64 {
    let (p_not_event, p_event) = cell;
    if event_position <= k {
        p_event
    } else {
        p_not_event
    }
}

/// Ordinal kernel: the entry of `probs` for the highest level reached
/// (0-based abnormal level), or the normal score when none has been reached.
pub fn ordinal_event_likelihood(probs: &[f64], highest_level_reached: Option<usize>) -> f64 {
    match highest_level_reached {
        None => probs[0],
        Some(w) => probs[w + 1],
    }
}

/// Point estimate of a z-score biomarker's trajectory at stage `k`.
///
/// `event_positions` are the 1-based stages of the biomarker's milestones in
/// level order. The trajectory reaches `z_max` at stage `K + 1`, one past the
/// last stage of the model.
pub fn zscore_trajectory_value(
    spec: &BiomarkerSpec,
    event_positions: &[usize],
    k: usize,
    n_events: usize,
) -> Result<f64> {
    let z_values = spec.z_values();
    if spec.kind != BiomarkerModelKind::ZScore || event_positions.len() != z_values.len() {
        return Err(Error::InvalidArgument(format!(
            "`{}`: need one stage per z milestone",
            spec.name
        )));
    }
    if k > n_events {
        return Err(Error::InvalidArgument(format!("stage {k} beyond K = {n_events}")));
    }
    let mut prev = 0usize;
    for &t in event_positions {
        if t <= prev || t > n_events {
            return Err(Error::InvalidSequence(format!(
                "`{}`: milestone stages must be strictly increasing within 1..=K",
                spec.name
            )));
        }
        prev = t;
    }
    Ok(interpolate(z_values, spec.z_max(), event_positions, n_events, k as f64))
}

fn interpolate(z_values: &[f64], z_max: f64, stages: &[usize], n_events: usize, k: f64) -> f64 {
    let mut x0 = 0.0;
    let mut y0 = 0.0;
    for (i, &z) in z_values.iter().enumerate() {
        let x1 = stages[i] as f64;
        if k <= x1 {
            return (y0 + (z - y0) * (k - x0) / (x1 - x0)).clamp(0.0, z_max);
        }
        x0 = x1;
        y0 = z;
    }
    let x1 = (n_events + 1) as f64;
    (y0 + (z_max - y0) * (k - x0) / (x1 - x0)).clamp(0.0, z_max)
}

/// Gaussian density of `value` around `mu`.
pub fn zscore_event_likelihood(value: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let d = (value - mu) / sigma;
    Ok((-0.5 * d * d).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
}

/// `J x (K + 1)` matrix of `sum_i log P(x_ij | S, k, M(i))`, row-major by subject.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLikelihoodMatrix {
    n_subjects: usize,
    n_stages: usize,
    values: Vec<f64>,
}

impl StageLikelihoodMatrix {
    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    pub fn get(&self, subject: usize, stage: usize) -> f64 {
        self.values[subject * self.n_stages + stage]
    }

    pub fn row(&self, subject: usize) -> &[f64] {
        &self.values[subject * self.n_stages..(subject + 1) * self.n_stages]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Total log-likelihood with per-subject terms.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortLogLikelihood {
    pub value: f64,
    pub per_subject: Vec<f64>,
    /// Subjects with zero likelihood at every stage (and subtype).
    pub impossible_subjects: Vec<usize>,
}

impl CohortLogLikelihood {
    fn from_subjects(per_subject: Vec<f64>) -> Self {
        let impossible_subjects = per_subject
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == f64::NEG_INFINITY)
            .map(|(j, _)| j)
            .collect();
        CohortLogLikelihood {
            value: per_subject.iter().sum(),
            per_subject,
            impossible_subjects,
        }
    }
}

#[derive(Debug, Clone)]
struct DiscreteTerm {
    biomarker: usize,
    n_levels: usize,
    /// `J x (n_levels + 1)` log-probabilities of each reachable level.
    log_probs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ZScoreTerm {
    biomarker: usize,
    /// NaN marks a missing cell.
    values: Vec<f64>,
    log_norm: f64,
    inv_two_var: f64,
    z_values: Vec<f64>,
    z_max: f64,
}

/// Cohort data preprocessed for repeated likelihood evaluation.
///
/// Per-cell kernels are tabulated once; each sequence evaluation is then a
/// gather over discrete levels plus a squared distance for z-scores.
#[derive(Debug, Clone)]
pub struct LikelihoodEvaluator {
    n_subjects: usize,
    n_events: usize,
    log_prior: Vec<f64>,
    event_biomarker: Vec<usize>,
    discrete: Vec<DiscreteTerm>,
    zscore: Vec<ZScoreTerm>,
}

impl LikelihoodEvaluator {
    pub fn new(cohort: &CohortData, table: &EventTable) -> Result<Self> {
        if cohort.n_biomarkers() != table.n_biomarkers() {
            return Err(Error::InvalidCohort(format!(
                "cohort has {} biomarkers, table has {}",
                cohort.n_biomarkers(),
                table.n_biomarkers()
            )));
        }
        let n_subjects = cohort.n_subjects();
        let mut discrete = Vec::new();
        let mut zscore = Vec::new();
        for (i, spec) in table.specs().iter().enumerate() {
            let mismatch = |j: usize| {
                Error::InvalidCohort(format!(
                    "subject `{}`: cell for `{}` is not a {} observation",
                    cohort.subject_ids()[j],
                    spec.name,
                    spec.kind
                ))
            };
            match spec.kind {
                BiomarkerModelKind::Binary | BiomarkerModelKind::Ordinal => {
                    let n_levels = spec.n_events();
                    let width = n_levels + 1;
                    let mut log_probs = vec![0.0; n_subjects * width];
                    for j in 0..n_subjects {
                        let dst = &mut log_probs[j * width..(j + 1) * width];
                        match (cohort.cell(j, i), spec.kind) {
                            (Cell::Missing, _) => {}
                            (Cell::Binary { p_not_event, p_event }, BiomarkerModelKind::Binary) => {
                                dst[0] = p_not_event.ln();
                                dst[1] = p_event.ln();
                            }
                            (Cell::Ordinal(p), BiomarkerModelKind::Ordinal) if p.len() == width => {
                                for (d, v) in dst.iter_mut().zip(p) {
                                    *d = v.ln();
                                }
                            }
                            _ => return Err(mismatch(j)),
                        }
                    }
                    discrete.push(DiscreteTerm {
                        biomarker: i,
                        n_levels,
                        log_probs,
                    });
                }
                BiomarkerModelKind::ZScore => {
                    let sigma = spec.sigma();
                    let mut values = vec![f64::NAN; n_subjects];
                    for (j, v) in values.iter_mut().enumerate() {
                        match cohort.cell(j, i) {
                            Cell::Missing => {}
                            Cell::ZScore(x) => *v = *x,
                            _ => return Err(mismatch(j)),
                        }
                    }
                    zscore.push(ZScoreTerm {
                        biomarker: i,
                        values,
                        log_norm: -0.5 * LN_2PI - sigma.ln(),
                        inv_two_var: 1.0 / (2.0 * sigma * sigma),
                        z_values: spec.z_values().to_vec(),
                        z_max: spec.z_max(),
                    });
                }
            }
        }
        let n_events = table.n_events();
        let prior = stage_prior(n_events)?;
        Ok(LikelihoodEvaluator {
            n_subjects,
            n_events,
            log_prior: prior.iter().map(|p| p.ln()).collect(),
            event_biomarker: table.events().iter().map(|e| e.biomarker).collect(),
            discrete,
            zscore,
        })
    }

    /// Replaces the uniform stage prior.
    pub fn with_stage_prior(mut self, prior: &[f64]) -> Result<Self> {
        if prior.len() != self.n_events + 1 {
            return Err(Error::InvalidArgument(format!(
                "stage prior needs {} entries",
                self.n_events + 1
            )));
        }
        let total: f64 = prior.iter().sum();
        if prior.iter().any(|p| p.is_nan() || *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("stage prior must be a distribution".into()));
        }
        self.log_prior = prior.iter().map(|p| p.ln()).collect();
        Ok(self)
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_stages(&self) -> usize {
        self.n_events + 1
    }

    pub fn log_stage_prior(&self) -> &[f64] {
        &self.log_prior
    }

    /// Evaluator over a subset of subjects, in the given order.
    pub fn restrict(&self, subjects: &[usize]) -> LikelihoodEvaluator {
        let discrete = self
            .discrete
            .iter()
            .map(|d| {
                let width = d.n_levels + 1;
                let mut log_probs = Vec::with_capacity(subjects.len() * width);
                for &j in subjects {
                    log_probs.extend_from_slice(&d.log_probs[j * width..(j + 1) * width]);
                }
                DiscreteTerm { log_probs, ..d.clone() }
            })
            .collect();
        let zscore = self
            .zscore
            .iter()
            .map(|z| ZScoreTerm {
                values: subjects.iter().map(|&j| z.values[j]).collect(),
                z_values: z.z_values.clone(),
                ..*z
            })
            .collect();
        LikelihoodEvaluator {
            n_subjects: subjects.len(),
            n_events: self.n_events,
            log_prior: self.log_prior.clone(),
            event_biomarker: self.event_biomarker.clone(),
            discrete,
            zscore,
        }
    }

    /// Fills `out` (length `J * (K + 1)`) with the stage likelihood matrix.
    /// The sequence is assumed valid.
    pub fn stage_matrix_into(&self, seq: &MixedEventSequence, out: &mut [f64]) {
        let n_stages = self.n_events + 1;
        debug_assert_eq!(out.len(), self.n_subjects * n_stages);
        debug_assert_eq!(seq.len(), self.n_events);
        out.fill(0.0);

        // Stages (1-based) at which each biomarker's levels are reached, in
        // level order; valid sequences list a biomarker's events in level order.
        let mut stages_of: Vec<Vec<usize>> = vec![Vec::new(); self.discrete.len() + self.zscore.len()];
        for (p, &e) in seq.order().iter().enumerate() {
            stages_of[self.event_biomarker[e]].push(p + 1);
        }

        let mut levels = vec![0usize; n_stages];
        for term in &self.discrete {
            let stages = &stages_of[term.biomarker];
            let mut reached = 0;
            for (k, level) in levels.iter_mut().enumerate() {
                while reached < stages.len() && stages[reached] <= k {
                    reached += 1;
                }
                *level = reached;
            }
            let width = term.n_levels + 1;
            for (j, row) in out.chunks_exact_mut(n_stages).enumerate() {
                let tbl = &term.log_probs[j * width..(j + 1) * width];
                for (cell, &level) in row.iter_mut().zip(&levels) {
                    *cell += tbl[level];
                }
            }
        }

        let mut trajectory = vec![0.0; n_stages];
        for term in &self.zscore {
            let stages = &stages_of[term.biomarker];
            for (k, g) in trajectory.iter_mut().enumerate() {
                *g = interpolate(&term.z_values, term.z_max, stages, self.n_events, k as f64);
            }
            for (row, &x) in out.chunks_exact_mut(n_stages).zip(&term.values) {
                if x.is_nan() {
                    continue;
                }
                for (cell, &g) in row.iter_mut().zip(&trajectory) {
                    let d = x - g;
                    *cell += term.log_norm - d * d * term.inv_two_var;
                }
            }
        }
    }

    pub fn stage_matrix(&self, seq: &MixedEventSequence) -> StageLikelihoodMatrix {
        let n_stages = self.n_events + 1;
        let mut values = vec![0.0; self.n_subjects * n_stages];
        self.stage_matrix_into(seq, &mut values);
        StageLikelihoodMatrix {
            n_subjects: self.n_subjects,
            n_stages,
            values,
        }
    }

    /// `log P(X_j | S)` for every subject, using `scratch` for the matrix.
    pub fn subject_log_likelihoods_into(&self, seq: &MixedEventSequence, scratch: &mut Vec<f64>, out: &mut [f64]) {
        let n_stages = self.n_events + 1;
        scratch.resize(self.n_subjects * n_stages, 0.0);
        self.stage_matrix_into(seq, scratch);
        for (row, o) in scratch.chunks_exact_mut(n_stages).zip(out.iter_mut()) {
            for (cell, lp) in row.iter_mut().zip(&self.log_prior) {
                *cell += lp;
            }
            *o = log_sum_exp(row);
        }
    }

    pub fn subject_log_likelihoods(&self, seq: &MixedEventSequence) -> Vec<f64> {
        let mut out = vec![0.0; self.n_subjects];
        self.subject_log_likelihoods_into(seq, &mut Vec::new(), &mut out);
        out
    }

    pub fn sequence_log_likelihood(&self, seq: &MixedEventSequence) -> CohortLogLikelihood {
        CohortLogLikelihood::from_subjects(self.subject_log_likelihoods(seq))
    }

    /// `log sum_c P(c) P(X_j | S_c)` for every subject.
    pub fn mixture_subject_log_likelihoods(&self, model: &SubtypeModel) -> Vec<f64> {
        let per_subtype: Vec<Vec<f64>> = model
            .sequences()
            .iter()
            .map(|s| self.subject_log_likelihoods(s))
            .collect();
        combine_subtypes(&per_subtype, model.fractions())
    }

    pub fn mixture_log_likelihood(&self, model: &SubtypeModel) -> CohortLogLikelihood {
        CohortLogLikelihood::from_subjects(self.mixture_subject_log_likelihoods(model))
    }
}

/// Per subject, `log sum_c fractions[c] * exp(per_subtype[c][j])`.
pub fn combine_subtypes(per_subtype: &[Vec<f64>], fractions: &[f64]) -> Vec<f64> {
    let n_subjects = per_subtype.first().map_or(0, Vec::len);
    let log_f: Vec<f64> = fractions.iter().map(|f| f.ln()).collect();
    let mut terms = vec![0.0; per_subtype.len()];
    (0..n_subjects)
        .map(|j| {
            for (c, t) in terms.iter_mut().enumerate() {
                *t = log_f[c] + per_subtype[c][j];
            }
            log_sum_exp(&terms)
        })
        .collect()
}

fn checked_evaluator(
    cohort: &CohortData,
    sequences: &[MixedEventSequence],
    table: &EventTable,
) -> Result<LikelihoodEvaluator> {
    for seq in sequences {
        if !validate_sequence(seq, table)? {
            return Err(Error::InvalidSequence(
                "levels of a biomarker occur out of order".into(),
            ));
        }
    }
    LikelihoodEvaluator::new(cohort, table)
}

pub fn stage_likelihood_matrix(
    cohort: &CohortData,
    seq: &MixedEventSequence,
    table: &EventTable,
) -> Result<StageLikelihoodMatrix> {
    Ok(checked_evaluator(cohort, std::slice::from_ref(seq), table)?.stage_matrix(seq))
}

/// `sum_j log P(X_j | S)`. Subjects impossible under `seq` make the total
/// negative infinity and are listed in the result.
pub fn sequence_log_likelihood(
    cohort: &CohortData,
    seq: &MixedEventSequence,
    table: &EventTable,
) -> Result<CohortLogLikelihood> {
    Ok(checked_evaluator(cohort, std::slice::from_ref(seq), table)?.sequence_log_likelihood(seq))
}

/// `sum_j log sum_c P(c) P(X_j | S_c)`.
pub fn mixture_log_likelihood(
    cohort: &CohortData,
    model: &SubtypeModel,
    table: &EventTable,
) -> Result<CohortLogLikelihood> {
    Ok(checked_evaluator(cohort, model.sequences(), table)?.mixture_log_likelihood(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_event_table, random_valid_sequence};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn stage_prior_is_uniform() {
        assert_eq!(stage_prior(1).unwrap(), vec![0.5, 0.5]);
        assert!(stage_prior(10).unwrap().iter().all(|p| *p == 1.0 / 11.0));
        for k in 1..=100 {
            let s: f64 = stage_prior(k).unwrap().iter().sum();
            assert!(close(s, 1.0, 1e-12));
        }
        assert!(stage_prior(0).is_err());
    }

    #[test]
    fn binary_kernel() {
        assert_eq!(binary_event_likelihood((0.2, 0.9), 3, 5), 0.9);
        assert_eq!(binary_event_likelihood((0.2, 0.9), 3, 2), 0.2);
        assert_eq!(binary_event_likelihood((0.2, 0.9), 3, 3), 0.9);
        for k in 0..5 {
            assert_eq!(binary_event_likelihood((0.5, 0.5), 2, k), 0.5);
        }
    }

    #[test]
    fn ordinal_kernel() {
        let v = [0.1, 0.2, 0.7];
        assert_eq!(ordinal_event_likelihood(&v, None), 0.1);
        assert_eq!(ordinal_event_likelihood(&v, Some(1)), 0.7);
        assert_eq!(ordinal_event_likelihood(&v, Some(0)), 0.2);
    }

    #[test]
    fn ordinal_with_one_score_reproduces_binary() {
        for event_position in 1..=4 {
            for k in 0..=4 {
                let reached = (event_position <= k).then_some(0);
                assert_eq!(
                    ordinal_event_likelihood(&[0.3, 0.7], reached),
                    binary_event_likelihood((0.3, 0.7), event_position, k)
                );
            }
        }
    }

    #[test]
    fn trajectory_values() {
        let spec = BiomarkerSpec::zscore("z", vec![1.0, 2.0, 3.0], 4.0);
        let f = |k| zscore_trajectory_value(&spec, &[1, 2, 3], k, 10).unwrap();
        assert_eq!(f(0), 0.0);
        assert_eq!(f(2), 2.0);
        assert!(close(f(7), 3.5, 1e-15));
        assert!(close(f(10), 3.875, 1e-15));
        // Milestones spread out: halfway between (0,0) and (4,1).
        assert!(close(
            zscore_trajectory_value(&spec, &[4, 6, 8], 2, 10).unwrap(),
            0.5,
            1e-15
        ));
        assert!(zscore_trajectory_value(&spec, &[2, 2, 3], 0, 10).is_err());
        assert!(zscore_trajectory_value(&spec, &[1, 2, 11], 0, 10).is_err());
    }

    #[test]
    fn gaussian_kernel() {
        assert!(close(
            zscore_event_likelihood(0.0, 0.0, 1.0).unwrap(),
            0.398_942_280_4,
            1e-10
        ));
        assert!(close(
            zscore_event_likelihood(1.5, 1.5, 2.0).unwrap(),
            0.199_471_140_2,
            1e-10
        ));
        assert!(close(
            zscore_event_likelihood(1.0, 0.0, 1.0).unwrap(),
            0.241_970_724_5,
            1e-10
        ));
        assert!(zscore_event_likelihood(0.0, 0.0, 0.0).is_err());
        assert!(zscore_event_likelihood(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn log_sum_exp_edges() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!(close(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln(), 1e-12));
        assert!(close(log_add_exp(0.0, f64::NEG_INFINITY), 0.0, 0.0));
        assert!(close(SUBJECT_LOG_FLOOR, 1e-250f64.ln(), 1e-12));
    }

    fn one_binary() -> (EventTable, CohortData) {
        let t = build_event_table(&[BiomarkerSpec::binary("b")]).unwrap();
        let c = CohortData::new(
            &t,
            vec!["s".into()],
            vec![vec![Cell::Binary {
                p_not_event: 0.2,
                p_event: 0.9,
            }]],
        )
        .unwrap();
        (t, c)
    }

    #[test]
    fn single_binary_matrix_and_likelihood() {
        let (t, c) = one_binary();
        let s = MixedEventSequence::new(vec![0], &t).unwrap();
        let m = stage_likelihood_matrix(&c, &s, &t).unwrap();
        assert_eq!(m.row(0), &[0.2f64.ln(), 0.9f64.ln()]);
        let ll = sequence_log_likelihood(&c, &s, &t).unwrap();
        assert!(close(ll.value, 0.55f64.ln(), 1e-15));
        assert!(ll.impossible_subjects.is_empty());
    }

    #[test]
    fn missing_cells_give_zero_matrix() {
        let t = build_event_table(&[
            BiomarkerSpec::zscore("z", vec![1.0, 2.0], 3.0),
            BiomarkerSpec::ordinal("o", vec![1]),
            BiomarkerSpec::binary("b"),
        ])
        .unwrap();
        let c = CohortData::new(
            &t,
            vec!["a".into(), "b".into()],
            vec![vec![Cell::Missing; 3], vec![Cell::Missing; 3]],
        )
        .unwrap();
        let s = random_valid_sequence(&t, 1);
        let m = stage_likelihood_matrix(&c, &s, &t).unwrap();
        assert!(m.values().iter().all(|v| *v == 0.0));
        assert_eq!(m.n_stages(), 5);
    }

    #[test]
    fn uninformative_cohort_ignores_sequence() {
        let t = build_event_table(&[
            BiomarkerSpec::binary("a"),
            BiomarkerSpec::binary("b"),
            BiomarkerSpec::binary("c"),
        ])
        .unwrap();
        let cell = Cell::Binary {
            p_not_event: 0.3,
            p_event: 0.3,
        };
        let c = CohortData::new(&t, (0..4).map(|j| j.to_string()).collect(), vec![vec![cell; 3]; 4]).unwrap();
        for seed in 0..5 {
            let s = random_valid_sequence(&t, seed);
            let ll = sequence_log_likelihood(&c, &s, &t).unwrap().value;
            // Three binary biomarkers per subject: c^3 per subject.
            assert!(close(ll, 4.0 * 3.0 * 0.3f64.ln(), 1e-12));
        }
    }

    #[test]
    fn impossible_subject_is_flagged() {
        let t = build_event_table(&[BiomarkerSpec::ordinal("o", vec![1]), BiomarkerSpec::binary("b")]).unwrap();
        // Score 1 observed with certainty, binary certainly not abnormal:
        // impossible when the binary event precedes the ordinal one.
        let c = CohortData::new(
            &t,
            vec!["x".into(), "y".into()],
            vec![
                vec![
                    Cell::Ordinal(vec![0.0, 1.0]),
                    Cell::Binary {
                        p_not_event: 1.0,
                        p_event: 0.0,
                    },
                ],
                vec![Cell::Missing, Cell::Missing],
            ],
        )
        .unwrap();
        let s = MixedEventSequence::new(vec![1, 0], &t).unwrap();
        let ll = sequence_log_likelihood(&c, &s, &t).unwrap();
        assert_eq!(ll.value, f64::NEG_INFINITY);
        assert_eq!(ll.impossible_subjects, vec![0]);
        assert!(ll.per_subject.iter().all(|v| !v.is_nan()));
        let ok = MixedEventSequence::new(vec![0, 1], &t).unwrap();
        assert!(sequence_log_likelihood(&c, &ok, &t).unwrap().value.is_finite());
    }

    #[test]
    fn shape_and_validity_errors() {
        let (t, c) = one_binary();
        let t2 = build_event_table(&[BiomarkerSpec::binary("a"), BiomarkerSpec::binary("b")]).unwrap();
        let s = MixedEventSequence::from_order_unchecked(vec![0, 1]);
        assert!(sequence_log_likelihood(&c, &s, &t2).is_err());
        let s = MixedEventSequence::from_order_unchecked(vec![0, 0]);
        assert!(sequence_log_likelihood(&c, &s, &t).is_err());
    }

    #[test]
    fn mixture_degenerate_cases() {
        let t = build_event_table(&[
            BiomarkerSpec::zscore("z", vec![1.0, 2.0], 3.0),
            BiomarkerSpec::binary("b"),
        ])
        .unwrap();
        let c = CohortData::new(
            &t,
            vec!["a".into(), "b".into()],
            vec![
                vec![
                    Cell::ZScore(1.3),
                    Cell::Binary {
                        p_not_event: 0.4,
                        p_event: 0.8,
                    },
                ],
                vec![
                    Cell::ZScore(-0.2),
                    Cell::Binary {
                        p_not_event: 1.1,
                        p_event: 0.1,
                    },
                ],
            ],
        )
        .unwrap();
        let s = random_valid_sequence(&t, 5);
        let single = sequence_log_likelihood(&c, &s, &t).unwrap().value;
        let m1 = SubtypeModel::new(vec![s.clone()], vec![1.0], &t).unwrap();
        assert_eq!(mixture_log_likelihood(&c, &m1, &t).unwrap().value, single);
        let m2 = SubtypeModel::new(vec![s.clone(), s], vec![0.5, 0.5], &t).unwrap();
        assert!(close(mixture_log_likelihood(&c, &m2, &t).unwrap().value, single, 1e-12));
    }

    #[test]
    fn restrict_selects_rows() {
        let t = build_event_table(&[BiomarkerSpec::zscore("z", vec![1.0], 2.0), BiomarkerSpec::binary("b")]).unwrap();
        let rows: Vec<Vec<Cell>> = (0..5)
            .map(|j| {
                vec![
                    Cell::ZScore(j as f64 * 0.4),
                    Cell::Binary {
                        p_not_event: 0.5 + j as f64 * 0.1,
                        p_event: 0.3,
                    },
                ]
            })
            .collect();
        let c = CohortData::new(&t, (0..5).map(|j| j.to_string()).collect(), rows).unwrap();
        let ev = LikelihoodEvaluator::new(&c, &t).unwrap();
        let s = random_valid_sequence(&t, 0);
        let full = ev.subject_log_likelihoods(&s);
        let sub = ev.restrict(&[4, 1]).subject_log_likelihoods(&s);
        assert_eq!(sub, vec![full[4], full[1]]);
    }

    #[test]
    fn custom_stage_prior() {
        let (t, c) = one_binary();
        let ev = LikelihoodEvaluator::new(&c, &t)
            .unwrap()
            .with_stage_prior(&[0.25, 0.75])
            .unwrap();
        let s = MixedEventSequence::new(vec![0], &t).unwrap();
        assert!(close(
            ev.sequence_log_likelihood(&s).value,
            (0.25 * 0.2 + 0.75 * 0.9f64).ln(),
            1e-15
        ));
        assert!(LikelihoodEvaluator::new(&c, &t)
            .unwrap()
            .with_stage_prior(&[0.5, 0.6])
            .is_err());
    }
}
