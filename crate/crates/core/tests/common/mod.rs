//! Independent reference implementations used as test oracles. Everything
//! here works in probability space with plain loops and shares no code with
//! the library's likelihood path beyond the data types.

#![allow(dead_code)]

use mixed_sustain::{
    validate_sequence, BiomarkerModelKind, BiomarkerSpec, Cell, CohortData, EventTable, MixedEventSequence,
    SubtypeModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random mixed biomarker specs with between 2 and `max_events` events.
pub fn random_specs(rng: &mut ChaCha8Rng, max_events: usize) -> Vec<BiomarkerSpec> {
    loop {
        let mut specs = Vec::new();
        let mut k = 0;
        let target = rng.random_range(2..=max_events);
        while k < target {
            let name = format!("m{}", specs.len());
            let room = target - k;
            let spec = match rng.random_range(0..3) {
                0 => BiomarkerSpec::binary(name),
                1 => {
                    let n = rng.random_range(1..=room.min(3));
                    BiomarkerSpec::ordinal(name, (1..=n as u32).collect())
                }
                _ => {
                    let n = rng.random_range(1..=room.min(3));
                    let zs: Vec<f64> = (1..=n).map(|z| z as f64).collect();
                    let spec = BiomarkerSpec::zscore(name, zs, n as f64 + rng.random_range(0.5..2.0));
                    spec.with_sigma(rng.random_range(0.5..1.5))
                }
            };
            k += spec.n_events();
            specs.push(spec);
        }
        if k >= 2 {
            return specs;
        }
    }
}

/// Random observations; about `missing` of cells are absent.
pub fn random_cohort(table: &EventTable, n_subjects: usize, missing: f64, rng: &mut ChaCha8Rng) -> CohortData {
    let rows = (0..n_subjects)
        .map(|_| {
            table
                .specs()
                .iter()
                .map(|spec| {
                    if rng.random::<f64>() < missing {
                        return Cell::Missing;
                    }
                    match spec.kind {
                        BiomarkerModelKind::ZScore => Cell::ZScore(rng.random_range(-1.0..spec.z_max() + 1.0)),
                        BiomarkerModelKind::Binary => Cell::Binary {
                            p_not_event: rng.random_range(0.01..1.0),
                            p_event: rng.random_range(0.01..1.0),
                        },
                        BiomarkerModelKind::Ordinal => {
                            let mut v: Vec<f64> =
                                (0..=spec.scores().len()).map(|_| rng.random_range(0.01..1.0)).collect();
                            let s: f64 = v.iter().sum();
                            v.iter_mut().for_each(|x| *x /= s);
                            Cell::Ordinal(v)
                        }
                    }
                })
                .collect()
        })
        .collect();
    let ids = (0..n_subjects).map(|j| format!("s{j}")).collect();
    CohortData::new(table, ids, rows).unwrap()
}

/// Piecewise-linear curve through `(0, 0)`, `(stage_i, z_i)` and
/// `(K + 1, z_max)`, clamped to `[0, z_max]`.
pub fn trajectory(z_values: &[f64], z_max: f64, stages: &[usize], n_events: usize, k: usize) -> f64 {
    let mut xs = vec![0.0];
    let mut ys = vec![0.0];
    for (z, s) in z_values.iter().zip(stages) {
        xs.push(*s as f64);
        ys.push(*z);
    }
    xs.push((n_events + 1) as f64);
    ys.push(z_max);
    let k = k as f64;
    for w in 0..xs.len() - 1 {
        if xs[w] <= k && k <= xs[w + 1] {
            let t = (k - xs[w]) / (xs[w + 1] - xs[w]);
            return (ys[w] * (1.0 - t) + ys[w + 1] * t).clamp(0.0, z_max);
        }
    }
    unreachable!("k within [0, K + 1]")
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// `P(x_ij | S, k)` for one biomarker.
pub fn cell_probability(table: &EventTable, seq: &MixedEventSequence, i: usize, cell: &Cell, k: usize) -> f64 {
    let spec = table.spec(i);
    // 1-based stages at which this biomarker's events occur, in level order.
    let mut stages: Vec<(usize, usize)> = seq
        .order()
        .iter()
        .enumerate()
        .filter(|(_, e)| table.event(**e).biomarker == i)
        .map(|(p, e)| (table.event(*e).level, p + 1))
        .collect();
    stages.sort();
    let stages: Vec<usize> = stages.into_iter().map(|(_, s)| s).collect();
    let reached = stages.iter().filter(|s| **s <= k).count();
    match cell {
        Cell::Missing => 1.0,
        Cell::Binary { p_not_event, p_event } => {
            if reached == 1 {
                *p_event
            } else {
                *p_not_event
            }
        }
        Cell::Ordinal(v) => v[reached],
        Cell::ZScore(x) => {
            let mu = trajectory(spec.z_values(), spec.z_max(), &stages, table.n_events(), k);
            normal_pdf(*x, mu, spec.sigma())
        }
    }
}

/// `P(X_j | S) = sum_k P(k) prod_i P(x_ij | S, k)` with a uniform stage prior.
pub fn subject_probability(table: &EventTable, cohort: &CohortData, j: usize, seq: &MixedEventSequence) -> f64 {
    let n_stages = table.n_events() + 1;
    let mut total = 0.0;
    for k in 0..n_stages {
        let mut p = 1.0 / n_stages as f64;
        for i in 0..table.n_biomarkers() {
            p *= cell_probability(table, seq, i, cohort.cell(j, i), k);
        }
        total += p;
    }
    total
}

pub fn sequence_log_likelihood(table: &EventTable, cohort: &CohortData, seq: &MixedEventSequence) -> f64 {
    (0..cohort.n_subjects())
        .map(|j| subject_probability(table, cohort, j, seq).ln())
        .sum()
}

pub fn mixture_log_likelihood(table: &EventTable, cohort: &CohortData, model: &SubtypeModel) -> f64 {
    let mut total = 0.0;
    for j in 0..cohort.n_subjects() {
        let mut p = 0.0;
        for (c, seq) in model.sequences().iter().enumerate() {
            p += model.fractions()[c] * subject_probability(table, cohort, j, seq);
        }
        total += p.ln();
    }
    total
}

/// Joint posterior `P(c, k | X_j)` as a `C x (K + 1)` table.
pub fn posterior(table: &EventTable, cohort: &CohortData, j: usize, model: &SubtypeModel) -> Vec<Vec<f64>> {
    let n_stages = table.n_events() + 1;
    let mut joint: Vec<Vec<f64>> = model
        .sequences()
        .iter()
        .zip(model.fractions())
        .map(|(seq, f)| {
            (0..n_stages)
                .map(|k| {
                    let mut p = f / n_stages as f64;
                    for i in 0..table.n_biomarkers() {
                        p *= cell_probability(table, seq, i, cohort.cell(j, i), k);
                    }
                    p
                })
                .collect()
        })
        .collect();
    let z: f64 = joint.iter().flatten().sum();
    for row in joint.iter_mut() {
        row.iter_mut().for_each(|p| *p /= z);
    }
    joint
}

/// Every permutation of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for e in 0..used.len() {
            if !used[e] {
                used[e] = true;
                prefix.push(e);
                rec(prefix, used, out);
                prefix.pop();
                used[e] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

pub fn all_valid_sequences(table: &EventTable) -> Vec<MixedEventSequence> {
    permutations(table.n_events())
        .into_iter()
        .map(MixedEventSequence::from_order_unchecked)
        .filter(|s| validate_sequence(s, table).unwrap())
        .collect()
}
