//! Synthetic ground truth and cohorts.
//!
//! Subjects draw a subtype from the mixing fractions and a stage uniformly
//! from `0..=K`. Z-score cells are the subtype trajectory at that stage plus
//! Gaussian noise; ordinal cells are the reached score, moved one level up or
//! down with probability `ordinal_confusion`, encoded as the normalised
//! likelihood of each true score; binary cells are raw values drawn from the
//! normal or abnormal component and converted to the two component densities.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::zscore_trajectory_value;
use crate::model::{
    random_valid_sequence_with, BiomarkerModelKind, BiomarkerSpec, Cell, CohortData, EventTable, MixedEventSequence,
    SubtypeModel,
};
use crate::rng::{self, derive_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    fn pdf(&self, x: f64) -> f64 {
        let d = (x - self.mean) / self.sd;
        (-0.5 * d * d).exp() / (self.sd * (2.0 * std::f64::consts::PI).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_subjects: usize,
    pub n_subtypes: usize,
    /// Uniform when absent.
    pub fractions: Option<Vec<f64>>,
    pub ordinal_confusion: f64,
    pub binary_normal: Gaussian,
    pub binary_abnormal: Gaussian,
    /// Noise sd of z-score cells; each biomarker's `sigma` when absent.
    pub z_noise_sd: Option<f64>,
    /// Probability that any cell is dropped.
    pub dropout_rate: f64,
    #[serde(rename = "seed")]
    pub rng_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_subjects: 500,
            n_subtypes: 3,
            fractions: None,
            ordinal_confusion: 0.1,
            binary_normal: Gaussian { mean: 0.0, sd: 1.0 },
            binary_abnormal: Gaussian { mean: 3.0, sd: 1.0 },
            z_noise_sd: None,
            dropout_rate: 0.0,
            rng_seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn fractions(&self) -> Vec<f64> {
        self.fractions
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.n_subtypes as f64; self.n_subtypes])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_subjects < 1 {
            return bad("n_subjects must be at least 1");
        }
        if self.n_subtypes < 1 {
            return bad("n_subtypes must be at least 1");
        }
        if let Some(f) = &self.fractions {
            if f.len() != self.n_subtypes {
                return bad("fractions must have one entry per subtype");
            }
            if f.iter().any(|x| x.is_nan() || *x < 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("fractions must be non-negative and sum to 1");
            }
        }
        if !(0.0..=1.0).contains(&self.ordinal_confusion) {
            return bad("ordinal_confusion must lie in [0, 1]");
        }
        for g in [self.binary_normal, self.binary_abnormal] {
            if !g.mean.is_finite() || !g.sd.is_finite() || g.sd <= 0.0 {
                return bad("binary component sds must be positive");
            }
        }
        if let Some(sd) = self.z_noise_sd {
            if !sd.is_finite() || sd < 0.0 {
                return bad("z_noise_sd must be non-negative");
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        Ok(())
    }
}

/// `n_z` z-score, `n_ordinal` ordinal and `n_binary` binary biomarkers named
/// `z1..`, `o1..`, `b1..`. Z-score biomarkers saturate one unit above their
/// last milestone.
pub fn standard_biomarkers(
    n_z: usize,
    n_ordinal: usize,
    n_binary: usize,
    z_values: &[f64],
    scores: &[u32],
) -> Vec<BiomarkerSpec> {
    let z_max = z_values.last().copied().unwrap_or(0.0) + 1.0;
    let mut specs = Vec::with_capacity(n_z + n_ordinal + n_binary);
    specs.extend((1..=n_z).map(|i| BiomarkerSpec::zscore(format!("z{i}"), z_values.to_vec(), z_max)));
    specs.extend((1..=n_ordinal).map(|i| BiomarkerSpec::ordinal(format!("o{i}"), scores.to_vec())));
    specs.extend((1..=n_binary).map(|i| BiomarkerSpec::binary(format!("b{i}"))));
    specs
}

/// Random subtype sequences, pairwise distinct when the space allows.
pub fn generate_ground_truth(config: &SimulationConfig, table: &EventTable) -> Result<SubtypeModel> {
    config.validate()?;
    let mut rng = rng::seeded(derive_seed(config.rng_seed, 0));
    let mut seqs: Vec<MixedEventSequence> = Vec::with_capacity(config.n_subtypes);
    for _ in 0..config.n_subtypes {
        let mut seq = random_valid_sequence_with(table, &mut rng);
        for _ in 0..1000 {
            if !seqs.contains(&seq) {
                break;
            }
            seq = random_valid_sequence_with(table, &mut rng);
        }
        seqs.push(seq);
    }
    SubtypeModel::new(seqs, config.fractions(), table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubjectTruth {
    pub subtype: usize,
    pub stage: usize,
}

#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    pub cohort: CohortData,
    pub truth: Vec<SubjectTruth>,
}

pub fn simulate_cohort(model: &SubtypeModel, table: &EventTable, config: &SimulationConfig) -> Result<SimulatedCohort> {
    config.validate()?;
    let n_events = table.n_events();
    // Per subtype and biomarker: stages (1-based) at which each level is reached.
    let level_stages: Vec<Vec<Vec<usize>>> = model
        .sequences()
        .iter()
        .map(|seq| {
            let mut stages = vec![Vec::new(); table.n_biomarkers()];
            for (p, &e) in seq.order().iter().enumerate() {
                stages[table.event(e).biomarker].push(p + 1);
            }
            stages
        })
        .collect();
    let cumulative: Vec<f64> = model
        .fractions()
        .iter()
        .scan(0.0, |acc, f| {
            *acc += f;
            Some(*acc)
        })
        .collect();
    let subject_seed = derive_seed(config.rng_seed, 1);

    let mut rows = Vec::with_capacity(config.n_subjects);
    let mut truth = Vec::with_capacity(config.n_subjects);
    for j in 0..config.n_subjects {
        let mut rng = rng::seeded(derive_seed(subject_seed, j as u64));
        let u: f64 = rng.random();
        let subtype = cumulative.iter().position(|c| u < *c).unwrap_or(model.n_subtypes() - 1);
        let stage = rng.random_range(0..=n_events);
        truth.push(SubjectTruth { subtype, stage });

        let mut row = Vec::with_capacity(table.n_biomarkers());
        for (i, spec) in table.specs().iter().enumerate() {
            let stages = &level_stages[subtype][i];
            let reached = stages.iter().filter(|t| **t <= stage).count();
            let cell = match spec.kind {
                BiomarkerModelKind::ZScore => {
                    let mean = zscore_trajectory_value(spec, stages, stage, n_events)?;
                    let sd = config.z_noise_sd.unwrap_or_else(|| spec.sigma());
                    let noise = if sd > 0.0 {
                        Normal::new(0.0, sd).expect("sd > 0").sample(&mut rng)
                    } else {
                        0.0
                    };
                    Cell::ZScore(mean + noise)
                }
                BiomarkerModelKind::Ordinal => {
                    let top = spec.scores().len();
                    let observed = confuse(reached, top, config.ordinal_confusion, &mut rng);
                    Cell::Ordinal(score_likelihoods(observed, top, config.ordinal_confusion))
                }
                BiomarkerModelKind::Binary => {
                    let component = if reached > 0 {
                        config.binary_abnormal
                    } else {
                        config.binary_normal
                    };
                    let raw = Normal::new(component.mean, component.sd)
                        .expect("validated sd")
                        .sample(&mut rng);
                    Cell::Binary {
                        p_not_event: config.binary_normal.pdf(raw),
                        p_event: config.binary_abnormal.pdf(raw),
                    }
                }
            };
            // Drawn unconditionally so the dropout rate does not shift the stream.
            let drop: f64 = rng.random();
            row.push(if drop < config.dropout_rate {
                Cell::Missing
            } else {
                cell
            });
        }
        rows.push(row);
    }
    let ids = (0..config.n_subjects).map(|j| format!("S{:04}", j + 1)).collect();
    let cohort = CohortData::new(table, ids, rows)?;
    Ok(SimulatedCohort { cohort, truth })
}

/// Observed level index for true level `level` in `0..=top`: unchanged with
/// probability `1 - rate`, otherwise one step up or down (towards the only
/// neighbour at either end).
fn confuse<R: Rng>(level: usize, top: usize, rate: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let up: bool = rng.random();
    if u >= rate {
        return level;
    }
    if level == 0 {
        1
    } else if level == top || !up {
        level - 1
    } else {
        level + 1
    }
}

/// `P(observed | true level)` over every true level, normalised.
fn score_likelihoods(observed: usize, top: usize, rate: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=top)
        .map(|t| {
            if t == observed {
                1.0 - rate
            } else if t.abs_diff(observed) == 1 {
                if t == 0 || t == top {
                    rate
                } else {
                    rate / 2.0
                }
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = v.iter().sum();
    for p in v.iter_mut() {
        *p /= total;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::kendall_tau;
    use crate::model::{validate_sequence, EventTable};

    fn default_table() -> EventTable {
        EventTable::new(standard_biomarkers(4, 2, 2, &[1.0, 2.0, 3.0], &[1, 2, 3])).unwrap()
    }

    #[test]
    fn ground_truth_shapes() {
        let t = default_table();
        let one = SimulationConfig {
            n_subtypes: 1,
            ..Default::default()
        };
        let m = generate_ground_truth(&one, &t).unwrap();
        assert_eq!(m.n_subtypes(), 1);
        assert_eq!(m, generate_ground_truth(&one, &t).unwrap());

        let m = generate_ground_truth(&SimulationConfig::default(), &t).unwrap();
        assert_eq!(m.n_subtypes(), 3);
        for (a, s) in m.sequences().iter().enumerate() {
            assert!(validate_sequence(s, &t).unwrap());
            for b in &m.sequences()[a + 1..] {
                assert!(kendall_tau(s, b).unwrap() < 1.0);
            }
        }
    }

    #[test]
    fn confusion_likelihoods_are_distributions() {
        for top in 1..4 {
            for o in 0..=top {
                for rate in [0.0, 0.1, 0.5] {
                    let v = score_likelihoods(o, top, rate);
                    assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    assert!(v[o] > 0.0);
                }
            }
        }
        assert_eq!(score_likelihoods(2, 3, 0.0), vec![0.0, 0.0, 1.0, 0.0]);
        // Observed 0 with rate 0.1: true 0 -> 0.9, true 1 (interior) -> 0.05.
        let v = score_likelihoods(0, 3, 0.1);
        assert!((v[0] - 0.9 / 0.95).abs() < 1e-12);
        assert!((v[1] - 0.05 / 0.95).abs() < 1e-12);
    }

    #[test]
    fn stage_zero_subjects_look_normal() {
        let t = default_table();
        let config = SimulationConfig {
            n_subtypes: 1,
            n_subjects: 3000,
            ..Default::default()
        };
        let m = generate_ground_truth(&config, &t).unwrap();
        let sim = simulate_cohort(&m, &t, &config).unwrap();
        let mut zs = Vec::new();
        for (j, truth) in sim.truth.iter().enumerate() {
            if truth.stage != 0 {
                continue;
            }
            if let Cell::ZScore(x) = sim.cohort.cell(j, 0) {
                zs.push(*x);
            }
            match sim.cohort.cell(j, 6) {
                Cell::Binary { p_not_event, p_event } => assert!(p_not_event.is_finite() && p_event.is_finite()),
                other => panic!("{other:?}"),
            }
        }
        assert!(zs.len() > 100);
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let var = zs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / zs.len() as f64;
        assert!(mean.abs() < 4.0 / (zs.len() as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.3, "var {var}");
    }

    #[test]
    fn noise_free_cells_are_exact() {
        let t = default_table();
        let config = SimulationConfig {
            n_subtypes: 1,
            n_subjects: 50,
            ordinal_confusion: 0.0,
            z_noise_sd: Some(0.0),
            binary_normal: Gaussian { mean: 0.0, sd: 1e-6 },
            binary_abnormal: Gaussian { mean: 3.0, sd: 1e-6 },
            ..Default::default()
        };
        let m = generate_ground_truth(&config, &t).unwrap();
        let sim = simulate_cohort(&m, &t, &config).unwrap();
        let stages_of = |i: usize| -> Vec<usize> {
            let pos = m.sequence(0).positions();
            t.event_ids(i).map(|e| pos[e] + 1).collect()
        };
        for (j, truth) in sim.truth.iter().enumerate() {
            let expected = zscore_trajectory_value(t.spec(0), &stages_of(0), truth.stage, 20).unwrap();
            assert_eq!(sim.cohort.cell(j, 0), &Cell::ZScore(expected));
            let reached = stages_of(4).iter().filter(|s| **s <= truth.stage).count();
            match sim.cohort.cell(j, 4) {
                Cell::Ordinal(v) => assert_eq!(v[reached], 1.0),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn stage_histogram_is_uniform() {
        let t = EventTable::new(standard_biomarkers(1, 0, 1, &[1.0, 2.0], &[])).unwrap();
        let config = SimulationConfig {
            n_subtypes: 1,
            n_subjects: 10_000,
            ..Default::default()
        };
        let m = generate_ground_truth(&config, &t).unwrap();
        let sim = simulate_cohort(&m, &t, &config).unwrap();
        let mut counts = vec![0usize; 4];
        for s in &sim.truth {
            counts[s.stage] += 1;
        }
        let n: f64 = 10_000.0;
        let p = 0.25;
        let sd = (n * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n * p).abs() <= 3.0 * sd, "{c}");
        }
    }

    #[test]
    fn dropout_and_determinism() {
        let t = default_table();
        let config = SimulationConfig {
            n_subjects: 200,
            dropout_rate: 0.3,
            ..Default::default()
        };
        let m = generate_ground_truth(&config, &t).unwrap();
        let a = simulate_cohort(&m, &t, &config).unwrap();
        let b = simulate_cohort(&m, &t, &config).unwrap();
        assert_eq!(a.cohort, b.cohort);
        let missing = (0..200)
            .flat_map(|j| (0..8).map(move |i| (j, i)))
            .filter(|&(j, i)| a.cohort.cell(j, i).is_missing())
            .count();
        assert!((missing as f64 / 1600.0 - 0.3).abs() < 0.05);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SimulationConfig {
                n_subjects: 0,
                ..Default::default()
            },
            SimulationConfig {
                n_subtypes: 0,
                ..Default::default()
            },
            SimulationConfig {
                fractions: Some(vec![0.5, 0.5]),
                ..Default::default()
            },
            SimulationConfig {
                ordinal_confusion: 1.5,
                ..Default::default()
            },
            SimulationConfig {
                dropout_rate: 1.0,
                ..Default::default()
            },
            SimulationConfig {
                binary_normal: Gaussian { mean: 0.0, sd: 0.0 },
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
