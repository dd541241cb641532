mod common;

use mixed_sustain::likelihood::{
    mixture_log_likelihood, sequence_log_likelihood, stage_likelihood_matrix, LikelihoodEvaluator,
};
use mixed_sustain::{
    random_valid_sequence, BiomarkerModelKind, BiomarkerSpec, Cell, CohortData, EventTable, SubtypeModel,
};
use proptest::prelude::*;
use rand::Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn sequence_likelihood_matches_enumeration() {
    let mut rng = common::rng(11);
    for case in 0..200 {
        let table = EventTable::new(common::random_specs(&mut rng, 6)).unwrap();
        let n_subjects = rng.random_range(1..=8);
        let cohort = common::random_cohort(&table, n_subjects, 0.15, &mut rng);
        let seq = random_valid_sequence(&table, case);
        let got = sequence_log_likelihood(&cohort, &seq, &table).unwrap().value;
        let want = common::sequence_log_likelihood(&table, &cohort, &seq);
        assert!(close(got, want, 1e-10), "case {case}: {got} vs {want}");
    }
}

#[test]
fn stage_matrix_matches_enumeration() {
    let mut rng = common::rng(12);
    for case in 0..50 {
        let table = EventTable::new(common::random_specs(&mut rng, 6)).unwrap();
        let cohort = common::random_cohort(&table, 5, 0.2, &mut rng);
        let seq = random_valid_sequence(&table, 1000 + case);
        let m = stage_likelihood_matrix(&cohort, &seq, &table).unwrap();
        for j in 0..5 {
            for k in 0..table.n_stages() {
                let want: f64 = (0..table.n_biomarkers())
                    .map(|i| common::cell_probability(&table, &seq, i, cohort.cell(j, i), k).ln())
                    .sum();
                assert!(close(m.get(j, k), want, 1e-10), "case {case} j {j} k {k}");
            }
        }
    }
}

#[test]
fn mixture_likelihood_matches_double_loop() {
    let mut rng = common::rng(13);
    for case in 0..100 {
        let table = EventTable::new(common::random_specs(&mut rng, 6)).unwrap();
        let cohort = common::random_cohort(&table, rng.random_range(1..=8), 0.15, &mut rng);
        let f: f64 = rng.random_range(0.05..0.95);
        let model = SubtypeModel::new(
            vec![
                random_valid_sequence(&table, 2 * case),
                random_valid_sequence(&table, 2 * case + 1),
            ],
            vec![f, 1.0 - f],
            &table,
        )
        .unwrap();
        let got = mixture_log_likelihood(&cohort, &model, &table).unwrap().value;
        let want = common::mixture_log_likelihood(&table, &cohort, &model);
        assert!(close(got, want, 1e-10), "case {case}: {got} vs {want}");
    }
}

/// Rewrites every binary biomarker as an ordinal with a single score, its
/// density pair normalised to a probability vector.
fn binary_as_ordinal(table: &EventTable, cohort: &CohortData) -> (EventTable, CohortData) {
    let specs = table
        .specs()
        .iter()
        .map(|s| match s.kind {
            BiomarkerModelKind::Binary => BiomarkerSpec::ordinal(s.name.clone(), vec![1]),
            _ => s.clone(),
        })
        .collect();
    let rows = (0..cohort.n_subjects())
        .map(|j| {
            cohort
                .row(j)
                .iter()
                .map(|c| match c {
                    Cell::Binary { p_not_event, p_event } => {
                        let s = p_not_event + p_event;
                        Cell::Ordinal(vec![p_not_event / s, p_event / s])
                    }
                    other => other.clone(),
                })
                .collect()
        })
        .collect();
    let t = EventTable::new(specs).unwrap();
    let c = CohortData::new(&t, cohort.subject_ids().to_vec(), rows).unwrap();
    (t, c)
}

#[test]
fn ordinal_generalises_binary() {
    let mut rng = common::rng(14);
    for case in 0..50 {
        let mut specs = common::random_specs(&mut rng, 5);
        specs.push(BiomarkerSpec::binary("extra"));
        let table = EventTable::new(specs).unwrap();
        let cohort = common::random_cohort(&table, 6, 0.1, &mut rng);
        let (otable, ocohort) = binary_as_ordinal(&table, &cohort);
        // Event ids coincide: a binary and a one-score ordinal both carry one event.
        assert_eq!(table.n_events(), otable.n_events());

        let eval = LikelihoodEvaluator::new(&cohort, &table).unwrap();
        let oeval = LikelihoodEvaluator::new(&ocohort, &otable).unwrap();
        let seqs = common::all_valid_sequences(&table);
        let lls: Vec<(f64, f64)> = seqs
            .iter()
            .map(|s| {
                (
                    eval.sequence_log_likelihood(s).value,
                    oeval.sequence_log_likelihood(s).value,
                )
            })
            .collect();
        for w in lls.windows(2) {
            let (d_bin, d_ord) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(close(d_bin, d_ord, 1e-10), "case {case}: {d_bin} vs {d_ord}");
        }
        let argmax = |i: usize| {
            (0..lls.len())
                .max_by(|&a, &b| {
                    let (x, y) = if i == 0 {
                        (lls[a].0, lls[b].0)
                    } else {
                        (lls[a].1, lls[b].1)
                    };
                    x.total_cmp(&y)
                })
                .unwrap()
        };
        assert_eq!(seqs[argmax(0)], seqs[argmax(1)], "case {case}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_subtype_mixture_is_the_sequence_likelihood(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let table = EventTable::new(common::random_specs(&mut rng, 6)).unwrap();
        let cohort = common::random_cohort(&table, 6, 0.2, &mut rng);
        let seq = random_valid_sequence(&table, seed);
        let model = SubtypeModel::uniform(vec![seq.clone()], &table).unwrap();
        let a = sequence_log_likelihood(&cohort, &seq, &table).unwrap().value;
        let b = mixture_log_likelihood(&cohort, &model, &table).unwrap().value;
        prop_assert!(close(a, b, 1e-12));
    }

    #[test]
    fn missing_biomarker_equals_dropping_it(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let mut specs = common::random_specs(&mut rng, 5);
        specs.push(BiomarkerSpec::binary("gone"));
        let table = EventTable::new(specs).unwrap();
        let cohort = common::random_cohort(&table, 5, 0.1, &mut rng);
        let last = table.n_biomarkers() - 1;
        let rows: Vec<Vec<Cell>> = (0..5)
            .map(|j| {
                let mut r = cohort.row(j).to_vec();
                r[last] = Cell::Missing;
                r
            })
            .collect();
        let blanked = CohortData::new(&table, cohort.subject_ids().to_vec(), rows).unwrap();
        let seq = random_valid_sequence(&table, seed);
        let got = sequence_log_likelihood(&blanked, &seq, &table).unwrap().value;
        // Uninformative binary evidence: equal densities at every stage.
        let rows: Vec<Vec<Cell>> = (0..5)
            .map(|j| {
                let mut r = cohort.row(j).to_vec();
                r[last] = Cell::Binary { p_not_event: 1.0, p_event: 1.0 };
                r
            })
            .collect();
        let flat = CohortData::new(&table, cohort.subject_ids().to_vec(), rows).unwrap();
        let want = sequence_log_likelihood(&flat, &seq, &table).unwrap().value;
        prop_assert!(close(got, want, 1e-10));
    }

    #[test]
    fn subjects_contribute_additively(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let table = EventTable::new(common::random_specs(&mut rng, 6)).unwrap();
        let cohort = common::random_cohort(&table, 8, 0.1, &mut rng);
        let seq = random_valid_sequence(&table, seed);
        let whole = sequence_log_likelihood(&cohort, &seq, &table).unwrap().value;
        let a = sequence_log_likelihood(&cohort.subset(&[0, 1, 2]), &seq, &table).unwrap().value;
        let b = sequence_log_likelihood(&cohort.subset(&[3, 4, 5, 6, 7]), &seq, &table).unwrap().value;
        prop_assert!(close(whole, a + b, 1e-10));
    }
}
