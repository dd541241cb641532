//! Recovery scoring, subtype-count selection and validation metrics.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{fit_sustain_with, mixture_objective, FitConfig};
use crate::likelihood::LikelihoodEvaluator;
use crate::model::{CohortData, EventTable, McmcSample, MixedEventSequence, SubtypeModel};
use crate::rng::{self, derive_seed};

/// Largest `C` accepted by [`match_subtypes`]; the search is over all `C!`
/// assignments.
pub const MAX_MATCHED_SUBTYPES: usize = 8;

fn positions_checked(seq: &MixedEventSequence) -> Result<Vec<usize>> {
    let n = seq.len();
    let mut pos = vec![usize::MAX; n];
    for (p, &e) in seq.order().iter().enumerate() {
        if e >= n || pos[e] != usize::MAX {
            return Err(Error::InvalidSequence(format!(
                "`{seq}` is not a permutation of 0..{n}"
            )));
        }
        pos[e] = p;
    }
    Ok(pos)
}

/// Kendall tau-a between the event positions of two sequences.
pub fn kendall_tau(a: &MixedEventSequence, b: &MixedEventSequence) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "sequences cover {} and {} events",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument("Kendall tau needs at least two events".into()));
    }
    let pa = positions_checked(a)?;
    let pb = positions_checked(b)?;
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let same = (pa[i] < pa[j]) == (pb[i] < pb[j]);
            score += if same { 1 } else { -1 };
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubtypeMatch {
    /// `assignment[t]` is the estimated subtype matched to true subtype `t`.
    pub assignment: Vec<usize>,
    /// Tau of each matched pair, indexed by true subtype.
    pub taus: Vec<f64>,
    pub mean_tau: f64,
}

/// One-to-one matching of estimated to true subtypes maximising mean tau.
/// Ties keep the lexicographically first assignment.
pub fn match_subtypes(estimated: &SubtypeModel, truth: &SubtypeModel) -> Result<SubtypeMatch> {
    let c = truth.n_subtypes();
    if estimated.n_subtypes() != c {
        return Err(Error::InvalidArgument(format!(
            "cannot match {} estimated subtypes to {c} true subtypes",
            estimated.n_subtypes()
        )));
    }
    if c > MAX_MATCHED_SUBTYPES {
        return Err(Error::InvalidArgument(format!(
            "matching supports at most {MAX_MATCHED_SUBTYPES} subtypes"
        )));
    }
    let mut tau = vec![vec![0.0; c]; c];
    for (t, row) in tau.iter_mut().enumerate() {
        for (e, v) in row.iter_mut().enumerate() {
            *v = kendall_tau(estimated.sequence(e), truth.sequence(t))?;
        }
    }

    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut perm: Vec<usize> = (0..c).collect();
    loop {
        let total: f64 = perm.iter().enumerate().map(|(t, &e)| tau[t][e]).sum();
        if best.as_ref().is_none_or(|(_, b)| total > *b) {
            best = Some((perm.clone(), total));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (assignment, total) = best.expect("at least one permutation");
    let taus = assignment.iter().enumerate().map(|(t, &e)| tau[t][e]).collect();
    Ok(SubtypeMatch {
        assignment,
        taus,
        mean_tau: total / c as f64,
    })
}

/// Advances to the next permutation in lexicographic order.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).expect("pivot has a successor");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    /// Held-out fold of every subject.
    pub fold_of: Vec<usize>,
    /// `per_fold[f][c - 1]`: held-out objective of the `c`-subtype model fitted
    /// without fold `f`. Negative infinity where the fit stopped before `c`.
    pub per_fold: Vec<Vec<f64>>,
    /// Sum over folds for each `C = 1..=max_subtypes`.
    pub held_out: Vec<f64>,
    pub selected: usize,
    pub warnings: Vec<String>,
}

/// K-fold cross-validation of the number of subtypes.
///
/// Subjects are shuffled once from `config.rng_seed` and cut into `folds`
/// contiguous blocks. For each fold a hierarchical fit up to
/// `config.max_subtypes` is run on the remaining subjects and every `C` is
/// scored on the held-out block with the same floored mixture objective the
/// optimiser uses.
pub fn cross_validate_subtypes(
    cohort: &CohortData,
    table: &EventTable,
    config: &FitConfig,
    folds: usize,
) -> Result<CrossValidation> {
    config.validate()?;
    let n = cohort.n_subjects();
    if folds < 2 {
        return Err(Error::InvalidArgument("folds must be at least 2".into()));
    }
    if folds > n {
        return Err(Error::InvalidArgument(format!(
            "{folds} folds leave a fold with zero subjects among {n}"
        )));
    }
    let eval = LikelihoodEvaluator::new(cohort, table)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(derive_seed(config.rng_seed, 0)));
    let mut fold_of = vec![0; n];
    for f in 0..folds {
        for &j in &order[f * n / folds..(f + 1) * n / folds] {
            fold_of[j] = f;
        }
    }

    let results: Vec<Result<(Vec<f64>, Vec<String>)>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&j| fold_of[j] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&j| fold_of[j] == f).collect();
            let fold_config = FitConfig {
                rng_seed: derive_seed(config.rng_seed, 1 + f as u64),
                ..config.clone()
            };
            let fit = fit_sustain_with(&eval.restrict(&train), table, &fold_config)?;
            let held = eval.restrict(&test);
            let mut scores = vec![f64::NEG_INFINITY; config.max_subtypes];
            for (c, fitted) in fit.models.iter().enumerate() {
                let per_subtype: Vec<Vec<f64>> = fitted
                    .model
                    .sequences()
                    .iter()
                    .map(|s| held.subject_log_likelihoods(s))
                    .collect();
                let log_f: Vec<f64> = fitted.model.fractions().iter().map(|x| x.ln()).collect();
                scores[c] = mixture_objective(&per_subtype, &log_f);
            }
            let warnings = fit.warnings.into_iter().map(|w| format!("fold {f}: {w}")).collect();
            Ok((scores, warnings))
        })
        .collect();

    let mut per_fold = Vec::with_capacity(folds);
    let mut warnings = Vec::new();
    for r in results {
        let (scores, w) = r?;
        per_fold.push(scores);
        warnings.extend(w);
    }
    let held_out: Vec<f64> = (0..config.max_subtypes)
        .map(|c| per_fold.iter().map(|s| s[c]).sum())
        .collect();
    let mut selected = 0;
    for (c, v) in held_out.iter().enumerate() {
        if *v > held_out[selected] {
            selected = c;
        }
    }
    Ok(CrossValidation {
        fold_of,
        per_fold,
        held_out,
        selected: selected + 1,
        warnings,
    })
}

/// Area under the ROC curve: `P(s+ > s-) + P(s+ = s-) / 2`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mid-ranks (1-based) over tied blocks.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        rank_sum_pos += mid * idx[start..end].iter().filter(|&&i| labels[i]).count() as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} x values but {} y values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument("correlation needs at least 3 points".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("values must be finite".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateData("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `K x K` matrix whose entry `[event][position]` is the fraction of samples
/// placing `event` at `position` in subtype `subtype`.
pub fn positional_variance_matrix(samples: &[McmcSample], subtype: usize) -> Result<Vec<Vec<f64>>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty chain".into()))?;
    let n_events = first
        .sequences
        .get(subtype)
        .ok_or_else(|| Error::InvalidArgument(format!("chain has no subtype {subtype}")))?
        .len();
    let mut counts = vec![vec![0usize; n_events]; n_events];
    for s in samples {
        let seq = s
            .sequences
            .get(subtype)
            .ok_or_else(|| Error::InvalidArgument(format!("chain has no subtype {subtype}")))?;
        if seq.len() != n_events {
            return Err(Error::InvalidArgument("chain sequences differ in length".into()));
        }
        for (p, &e) in seq.order().iter().enumerate() {
            counts[e][p] += 1;
        }
    }
    let n = samples.len() as f64;
    Ok(counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / n).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_event_table, random_valid_sequence, BiomarkerSpec};
    use proptest::prelude::*;

    fn seq(order: &[usize]) -> MixedEventSequence {
        MixedEventSequence::from_order_unchecked(order.to_vec())
    }

    fn binary_table(k: usize) -> EventTable {
        build_event_table(
            &(0..k)
                .map(|i| BiomarkerSpec::binary(format!("b{i}")))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn tau_examples() {
        assert_eq!(kendall_tau(&seq(&[0, 1, 2, 3]), &seq(&[0, 1, 2, 3])).unwrap(), 1.0);
        assert_eq!(kendall_tau(&seq(&[0, 1, 2, 3]), &seq(&[3, 2, 1, 0])).unwrap(), -1.0);
        let t = kendall_tau(&seq(&[0, 1, 2, 3]), &seq(&[0, 2, 1, 3])).unwrap();
        assert!((t - 4.0 / 6.0).abs() < 1e-15);
        assert!(kendall_tau(&seq(&[0, 1]), &seq(&[0, 1, 2])).is_err());
        assert!(kendall_tau(&seq(&[0, 0, 1]), &seq(&[0, 1, 2])).is_err());
    }

    #[test]
    fn matching_examples() {
        let t = binary_table(5);
        let a = seq(&[0, 1, 2, 3, 4]);
        let b = seq(&[4, 3, 2, 1, 0]);
        let truth = SubtypeModel::uniform(vec![a.clone(), b.clone()], &t).unwrap();
        let m = match_subtypes(&truth, &truth).unwrap();
        assert_eq!((m.assignment, m.mean_tau), (vec![0, 1], 1.0));
        let swapped = SubtypeModel::uniform(vec![b, a], &t).unwrap();
        let m = match_subtypes(&swapped, &truth).unwrap();
        assert_eq!((m.assignment, m.mean_tau), (vec![1, 0], 1.0));
        let one = SubtypeModel::uniform(vec![seq(&[0, 1, 2, 3, 4])], &t).unwrap();
        assert!(match_subtypes(&one, &truth).is_err());
    }

    #[test]
    fn matching_is_exhaustive() {
        let t = binary_table(6);
        for s in 0..20u64 {
            let draw = |o: u64| {
                SubtypeModel::uniform((0..3).map(|c| random_valid_sequence(&t, s * 100 + o + c)).collect(), &t).unwrap()
            };
            let (est, truth) = (draw(0), draw(50));
            let m = match_subtypes(&est, &truth).unwrap();
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let best = perms
                .iter()
                .map(|p| {
                    (0..3)
                        .map(|i| kendall_tau(est.sequence(p[i]), truth.sequence(i)).unwrap())
                        .sum::<f64>()
                        / 3.0
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((m.mean_tau - best).abs() < 1e-12);
        }
    }

    #[test]
    fn permutations_are_lexicographic() {
        let mut p = vec![0, 1, 2];
        let mut all = vec![p.clone()];
        while next_permutation(&mut p) {
            all.push(p.clone());
        }
        assert_eq!(all.len(), 6);
        assert_eq!(all[1], vec![0, 2, 1]);
        assert_eq!(all[5], vec![2, 1, 0]);
    }

    #[test]
    fn auc_examples() {
        let l = [false, false, true, true];
        assert_eq!(auc(&[1.0, 2.0, 3.0, 4.0], &l).unwrap(), 1.0);
        assert_eq!(auc(&[1.0, 3.0, 2.0, 4.0], &l).unwrap(), 0.75);
        assert_eq!(auc(&[2.0; 4], &l).unwrap(), 0.5);
        assert!(auc(&[1.0, 2.0], &[true, true]).is_err());
        assert!(auc(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pvd_examples() {
        let sample = |o: &[usize]| McmcSample {
            sequences: vec![seq(o)],
            log_likelihood: 0.0,
        };
        let m = positional_variance_matrix(&[sample(&[2, 0, 1])], 0).unwrap();
        assert_eq!(m, vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]);
        let m = positional_variance_matrix(&[sample(&[0, 1, 2]), sample(&[1, 0, 2])], 0).unwrap();
        assert_eq!(m[0][..2], [0.5, 0.5]);
        assert_eq!(m[1][..2], [0.5, 0.5]);
        assert_eq!(m[2], vec![0.0, 0.0, 1.0]);
        assert!(positional_variance_matrix(&[], 0).is_err());
        assert!(positional_variance_matrix(&[sample(&[0, 1])], 1).is_err());
    }

    proptest! {
        #[test]
        fn tau_symmetric_and_relabel_invariant(k in 2usize..9, s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000) {
            let t = binary_table(k);
            let a = random_valid_sequence(&t, s1);
            let b = random_valid_sequence(&t, s2);
            let relabel = random_valid_sequence(&t, s3);
            let map = |s: &MixedEventSequence| seq(&s.order().iter().map(|&e| relabel.order()[e]).collect::<Vec<_>>());
            let ab = kendall_tau(&a, &b).unwrap();
            prop_assert_eq!(ab, kendall_tau(&b, &a).unwrap());
            prop_assert_eq!(ab, kendall_tau(&map(&a), &map(&b)).unwrap());
            prop_assert_eq!(ab == 1.0, a == b);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn auc_monotone_invariant(scores in prop::collection::vec(-5.0f64..5.0, 4..30), flip in 0usize..30) {
            let labels: Vec<bool> = (0..scores.len()).map(|i| (i + flip) % 3 == 0).collect();
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let transformed: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - auc(&transformed, &labels).unwrap()).abs() < 1e-12);
            let mut pairs = 0.0;
            for (i, si) in scores.iter().enumerate() {
                for (j, sj) in scores.iter().enumerate() {
                    if labels[i] && !labels[j] {
                        pairs += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                    }
                }
            }
            let n_pos = labels.iter().filter(|l| **l).count() as f64;
            prop_assert!((a - pairs / (n_pos * (labels.len() as f64 - n_pos))).abs() < 1e-12);
        }

        #[test]
        fn pvd_rows_and_columns_sum_to_one(k in 2usize..7, n in 1usize..20, seed in 0u64..1000) {
            let t = binary_table(k);
            let samples: Vec<McmcSample> = (0..n as u64)
                .map(|i| McmcSample { sequences: vec![random_valid_sequence(&t, seed * 50 + i)], log_likelihood: 0.0 })
                .collect();
            let m = positional_variance_matrix(&samples, 0).unwrap();
            for i in 0..k {
                prop_assert!((m[i].iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!((m.iter().map(|r| r[i]).sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
