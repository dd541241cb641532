//! Domain types: biomarker declarations, the flattened event table, event
//! sequences, cohort data and subtype models.
//!
//! Events are identified by dense ids assigned in (biomarker, level) order.
//! Stage `k` of a sequence means the first `k` events have occurred, so a
//! sequence over `K` events has `K + 1` stages and stage 0 is "no events".

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Tolerance on ordinal probability vectors and mixing fractions summing to one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BiomarkerModelKind {
    #[serde(rename = "binary")]
    Binary,
    #[serde(rename = "ordinal")]
    Ordinal,
    #[serde(rename = "zscore")]
    ZScore,
}

impl fmt::Display for BiomarkerModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BiomarkerModelKind::Binary => write!(f, "binary"),
            BiomarkerModelKind::Ordinal => write!(f, "ordinal"),
            BiomarkerModelKind::ZScore => write!(f, "zscore"),
        }
    }
}

/// One biomarker and the levels at which it generates events.
///
/// Z-score biomarkers pass through `z_values` and saturate at `z_max`.
/// Ordinal biomarkers step through `scores`; score 0 is the implicit normal
/// level and never an event. Binary biomarkers carry a single event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiomarkerSpec {
    pub name: String,
    pub kind: BiomarkerModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<u32>>,
}

impl BiomarkerSpec {
    pub fn zscore(name: impl Into<String>, z_values: Vec<f64>, z_max: f64) -> Self {
        BiomarkerSpec {
            name: name.into(),
            kind: BiomarkerModelKind::ZScore,
            z_values: Some(z_values),
            z_max: Some(z_max),
            sigma: None,
            scores: None,
        }
    }

    pub fn ordinal(name: impl Into<String>, scores: Vec<u32>) -> Self {
        BiomarkerSpec {
            name: name.into(),
            kind: BiomarkerModelKind::Ordinal,
            z_values: None,
            z_max: None,
            sigma: None,
            scores: Some(scores),
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        BiomarkerSpec {
            name: name.into(),
            kind: BiomarkerModelKind::Binary,
            z_values: None,
            z_max: None,
            sigma: None,
            scores: None,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    /// Noise scale of a z-score biomarker.
    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(DEFAULT_SIGMA)
    }

    pub fn z_values(&self) -> &[f64] {
        self.z_values.as_deref().unwrap_or(&[])
    }

    pub fn z_max(&self) -> f64 {
        self.z_max.unwrap_or(f64::NAN)
    }

    /// Abnormal scores of an ordinal biomarker (score 0 excluded).
    pub fn scores(&self) -> &[u32] {
        self.scores.as_deref().unwrap_or(&[])
    }

    pub fn n_events(&self) -> usize {
        match self.kind {
            BiomarkerModelKind::Binary => 1,
            BiomarkerModelKind::Ordinal => self.scores().len(),
            BiomarkerModelKind::ZScore => self.z_values().len(),
        }
    }

    /// Label for one of this biomarker's events, e.g. `hippocampus:z2`.
    pub fn level_label(&self, level: usize) -> String {
        match self.kind {
            BiomarkerModelKind::Binary => self.name.clone(),
            BiomarkerModelKind::Ordinal => format!("{}:s{}", self.name, self.scores()[level]),
            BiomarkerModelKind::ZScore => format!("{}:z{}", self.name, self.z_values()[level]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.name.as_str();
        if name.trim().is_empty() {
            return Err(Error::biomarker(name, "name must not be empty"));
        }
        if name.contains(':') || name.contains(',') {
            return Err(Error::biomarker(name, "name must not contain ':' or ','"));
        }
        match self.kind {
            BiomarkerModelKind::ZScore => {
                if self.scores.is_some() {
                    return Err(Error::biomarker(name, "zscore biomarker cannot declare scores"));
                }
                let zs = self
                    .z_values
                    .as_deref()
                    .ok_or_else(|| Error::biomarker(name, "missing z_values"))?;
                if zs.is_empty() {
                    return Err(Error::biomarker(name, "z_values must not be empty"));
                }
                if zs.iter().any(|z| !z.is_finite() || *z <= 0.0) {
                    return Err(Error::biomarker(name, "z_values must be positive and finite"));
                }
                if zs.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::biomarker(name, "z_values must be strictly increasing"));
                }
                let z_max = self.z_max.ok_or_else(|| Error::biomarker(name, "missing z_max"))?;
                let last = zs[zs.len() - 1];
                if !z_max.is_finite() || z_max <= last {
                    return Err(Error::biomarker(
                        name,
                        format!("z_max ({z_max}) must exceed the largest z_value ({last})"),
                    ));
                }
                if let Some(s) = self.sigma {
                    if !s.is_finite() || s <= 0.0 {
                        return Err(Error::biomarker(name, "sigma must be positive"));
                    }
                }
            }
            BiomarkerModelKind::Ordinal => {
                if self.z_values.is_some() || self.z_max.is_some() || self.sigma.is_some() {
                    return Err(Error::biomarker(
                        name,
                        "ordinal biomarker cannot declare z_values, z_max or sigma",
                    ));
                }
                let scores = self
                    .scores
                    .as_deref()
                    .ok_or_else(|| Error::biomarker(name, "missing scores"))?;
                if scores.is_empty() {
                    return Err(Error::biomarker(name, "at least one abnormal score required"));
                }
                if scores[0] == 0 {
                    return Err(Error::biomarker(
                        name,
                        "score 0 is the implicit normal level and must not be listed",
                    ));
                }
                if scores.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::biomarker(name, "scores must be strictly increasing"));
                }
            }
            BiomarkerModelKind::Binary => {
                if self.z_values.is_some() || self.z_max.is_some() || self.sigma.is_some() || self.scores.is_some() {
                    return Err(Error::biomarker(name, "binary biomarker carries no level lists"));
                }
            }
        }
        Ok(())
    }
}

/// One event: biomarker `biomarker` reaching its `level`-th abnormal level
/// (0-based; binary biomarkers only have level 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub biomarker: usize,
    pub level: usize,
}

/// The flattened universe of events.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTable {
    specs: Vec<BiomarkerSpec>,
    events: Vec<Event>,
    first_event: Vec<usize>,
}

impl EventTable {
    pub fn new(specs: Vec<BiomarkerSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidArgument("at least one biomarker required".into()));
        }
        for (i, spec) in specs.iter().enumerate() {
            spec.validate()?;
            if specs[..i].iter().any(|s| s.name == spec.name) {
                return Err(Error::biomarker(&spec.name, "duplicate biomarker name"));
            }
        }
        let mut events = Vec::new();
        let mut first_event = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            first_event.push(events.len());
            events.extend((0..spec.n_events()).map(|level| Event { biomarker: i, level }));
        }
        Ok(EventTable {
            specs,
            events,
            first_event,
        })
    }

    /// Total event count `K`.
    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn n_stages(&self) -> usize {
        self.events.len() + 1
    }

    pub fn n_biomarkers(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[BiomarkerSpec] {
        &self.specs
    }

    pub fn spec(&self, biomarker: usize) -> &BiomarkerSpec {
        &self.specs[biomarker]
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event(&self, id: usize) -> Event {
        self.events[id]
    }

    pub fn n_levels(&self, biomarker: usize) -> usize {
        self.specs[biomarker].n_events()
    }

    /// Ids of a biomarker's events, in level order.
    pub fn event_ids(&self, biomarker: usize) -> Range<usize> {
        let start = self.first_event[biomarker];
        start..start + self.n_levels(biomarker)
    }

    /// `s(i, w)`: the event of biomarker `i` reaching level `w`.
    pub fn event_id(&self, biomarker: usize, level: usize) -> Option<usize> {
        if biomarker < self.specs.len() && level < self.n_levels(biomarker) {
            Some(self.first_event[biomarker] + level)
        } else {
            None
        }
    }

    /// `s(i)`: the single event of a binary biomarker.
    pub fn binary_event_id(&self, biomarker: usize) -> Option<usize> {
        match self.specs.get(biomarker)?.kind {
            BiomarkerModelKind::Binary => Some(self.first_event[biomarker]),
            _ => None,
        }
    }

    pub fn biomarker_index(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn event_label(&self, id: usize) -> String {
        let e = self.events[id];
        self.specs[e.biomarker].level_label(e.level)
    }
}

pub fn build_event_table(specs: &[BiomarkerSpec]) -> Result<EventTable> {
    EventTable::new(specs.to_vec())
}

/// An ordering of all events; position 0 is the earliest event.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MixedEventSequence {
    order: Vec<usize>,
}

impl MixedEventSequence {
    /// Checked constructor: the order must be a permutation that respects
    /// level ordering within every biomarker.
    pub fn new(order: Vec<usize>, table: &EventTable) -> Result<Self> {
        let seq = MixedEventSequence { order };
        if validate_sequence(&seq, table)? {
            Ok(seq)
        } else {
            Err(Error::InvalidSequence(
                "levels of a biomarker occur out of order".into(),
            ))
        }
    }

    pub fn from_order_unchecked(order: Vec<usize>) -> Self {
        MixedEventSequence { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn into_order(self) -> Vec<usize> {
        self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn n_stages(&self) -> usize {
        self.order.len() + 1
    }

    /// 0-based position of every event id. The event at position `p`
    /// occurs at stage `p + 1`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (p, &e) in self.order.iter().enumerate() {
            pos[e] = p;
        }
        pos
    }
}

impl fmt::Display for MixedEventSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, e) in self.order.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Parses a comma-separated id list. The result is not validated against
/// any table.
impl FromStr for MixedEventSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(MixedEventSequence { order: Vec::new() });
        }
        let order = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidSequence(format!("bad event id `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MixedEventSequence { order })
    }
}

/// `Ok(true)` when `seq` respects level order within every biomarker.
///
/// A wrong length, an out-of-range id or a repeated id is an error rather
/// than `false`: such an order is not a sequence at all.
pub fn validate_sequence(seq: &MixedEventSequence, table: &EventTable) -> Result<bool> {
    let k = table.n_events();
    if seq.order.len() != k {
        return Err(Error::InvalidSequence(format!(
            "expected {k} events, got {}",
            seq.order.len()
        )));
    }
    let mut seen = vec![false; k];
    for &e in &seq.order {
        if e >= k {
            return Err(Error::InvalidSequence(format!("event id {e} out of range")));
        }
        if seen[e] {
            return Err(Error::InvalidSequence(format!("duplicate event id {e}")));
        }
        seen[e] = true;
    }
    Ok(levels_in_order(&seq.order, table))
}

pub(crate) fn levels_in_order(order: &[usize], table: &EventTable) -> bool {
    let mut next_level = vec![0usize; table.n_biomarkers()];
    for &e in order {
        let ev = table.event(e);
        if ev.level != next_level[ev.biomarker] {
            return false;
        }
        next_level[ev.biomarker] += 1;
    }
    true
}

/// Uniform draw from the valid sequences of `table`.
pub fn random_valid_sequence(table: &EventTable, rng_seed: u64) -> MixedEventSequence {
    random_valid_sequence_with(table, &mut rng::seeded(rng_seed))
}

/// Shuffles all ids, then relabels each biomarker's slots in level order.
/// Each valid sequence is the image of the same number of permutations, so
/// the result is uniform over valid sequences.
pub fn random_valid_sequence_with<R: Rng + ?Sized>(table: &EventTable, rng: &mut R) -> MixedEventSequence {
    let mut order: Vec<usize> = (0..table.n_events()).collect();
    order.shuffle(rng);
    let mut next_level = vec![0usize; table.n_biomarkers()];
    for slot in order.iter_mut() {
        let b = table.event(*slot).biomarker;
        *slot = table.first_event[b] + next_level[b];
        next_level[b] += 1;
    }
    MixedEventSequence { order }
}

/// One observation `x_{i,j}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    ZScore(f64),
    /// Class-conditional densities of the observed value.
    Binary {
        p_not_event: f64,
        p_event: f64,
    },
    /// Probability of each score, normal score 0 first.
    Ordinal(Vec<f64>),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// Per-subject observations for every biomarker of an event table.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortData {
    subject_ids: Vec<String>,
    n_biomarkers: usize,
    cells: Vec<Cell>,
}

impl CohortData {
    /// Validates every row against the table's biomarker kinds.
    pub fn new(table: &EventTable, subject_ids: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self> {
        if subject_ids.len() != rows.len() {
            return Err(Error::InvalidCohort(format!(
                "{} subject ids for {} rows",
                subject_ids.len(),
                rows.len()
            )));
        }
        let n_biomarkers = table.n_biomarkers();
        let mut cells = Vec::with_capacity(rows.len() * n_biomarkers);
        for (row, id) in rows.into_iter().zip(&subject_ids) {
            if row.len() != n_biomarkers {
                return Err(Error::InvalidCohort(format!(
                    "subject `{id}` has {} cells, expected {n_biomarkers}",
                    row.len()
                )));
            }
            for (i, cell) in row.iter().enumerate() {
                validate_cell(cell, table.spec(i)).map_err(|reason| {
                    Error::InvalidCohort(format!("subject `{id}`, biomarker `{}`: {reason}", table.spec(i).name))
                })?;
            }
            cells.extend(row);
        }
        Ok(CohortData {
            subject_ids,
            n_biomarkers,
            cells,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_biomarkers(&self) -> usize {
        self.n_biomarkers
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn cell(&self, subject: usize, biomarker: usize) -> &Cell {
        &self.cells[subject * self.n_biomarkers + biomarker]
    }

    pub fn row(&self, subject: usize) -> &[Cell] {
        let start = subject * self.n_biomarkers;
        &self.cells[start..start + self.n_biomarkers]
    }

    /// The cohort restricted to `subjects`, in the given order.
    pub fn subset(&self, subjects: &[usize]) -> CohortData {
        let mut cells = Vec::with_capacity(subjects.len() * self.n_biomarkers);
        for &j in subjects {
            cells.extend_from_slice(self.row(j));
        }
        CohortData {
            subject_ids: subjects.iter().map(|&j| self.subject_ids[j].clone()).collect(),
            n_biomarkers: self.n_biomarkers,
            cells,
        }
    }
}

fn validate_cell(cell: &Cell, spec: &BiomarkerSpec) -> std::result::Result<(), String> {
    match (cell, spec.kind) {
        (Cell::Missing, _) => Ok(()),
        (Cell::ZScore(x), BiomarkerModelKind::ZScore) => {
            if x.is_finite() {
                Ok(())
            } else {
                Err(format!("non-finite z-score {x}"))
            }
        }
        (Cell::Binary { p_not_event, p_event }, BiomarkerModelKind::Binary) => {
            for p in [p_not_event, p_event] {
                if !p.is_finite() || *p < 0.0 {
                    return Err(format!("binary likelihood {p} must be finite and >= 0"));
                }
            }
            Ok(())
        }
        (Cell::Ordinal(v), BiomarkerModelKind::Ordinal) => {
            let expected = spec.scores().len() + 1;
            if v.len() != expected {
                return Err(format!("expected {expected} score probabilities, got {}", v.len()));
            }
            if v.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err("score probabilities must be finite and >= 0".into());
            }
            let total: f64 = v.iter().sum();
            if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(format!("score probabilities sum to {total}, not 1"));
            }
            Ok(())
        }
        (_, kind) => Err(format!("cell does not match biomarker kind {kind}")),
    }
}

/// One state of a sampler chain: a sequence per subtype and its log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcSample {
    pub sequences: Vec<MixedEventSequence>,
    pub log_likelihood: f64,
}

/// `C` event sequences with mixing fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtypeModel {
    sequences: Vec<MixedEventSequence>,
    fractions: Vec<f64>,
    mcmc_samples: Vec<McmcSample>,
}

impl SubtypeModel {
    pub fn new(sequences: Vec<MixedEventSequence>, fractions: Vec<f64>, table: &EventTable) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::InvalidModel("at least one subtype required".into()));
        }
        if sequences.len() != fractions.len() {
            return Err(Error::InvalidModel(format!(
                "{} sequences but {} fractions",
                sequences.len(),
                fractions.len()
            )));
        }
        if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::InvalidModel("fractions must be finite and >= 0".into()));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidModel(format!("fractions sum to {total}, not 1")));
        }
        for (c, seq) in sequences.iter().enumerate() {
            if !validate_sequence(seq, table)? {
                return Err(Error::InvalidModel(format!(
                    "sequence of subtype {c} violates level ordering"
                )));
            }
        }
        Ok(SubtypeModel {
            sequences,
            fractions,
            mcmc_samples: Vec::new(),
        })
    }

    /// A model with equal fractions.
    pub fn uniform(sequences: Vec<MixedEventSequence>, table: &EventTable) -> Result<Self> {
        let c = sequences.len().max(1);
        Self::new(sequences, vec![1.0 / c as f64; c], table)
    }

    pub fn with_mcmc_samples(mut self, samples: Vec<McmcSample>) -> Self {
        self.mcmc_samples = samples;
        self
    }

    pub fn n_subtypes(&self) -> usize {
        self.sequences.len()
    }

    pub fn sequences(&self) -> &[MixedEventSequence] {
        &self.sequences
    }

    pub fn sequence(&self, subtype: usize) -> &MixedEventSequence {
        &self.sequences[subtype]
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn mcmc_samples(&self) -> &[McmcSample] {
        &self.mcmc_samples
    }
}

/// Derives z milestones from a column of z-scores: the positive integers up
/// to the 95% quantile become `z_values` and the 99% quantile rounded to the
/// nearest integer becomes `z_max` (bumped to one past the last milestone if
/// it would not exceed it).
pub fn derive_z_levels(values: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::DegenerateData("no finite values to derive z levels from".into()));
    }
    finite.sort_by(|a, b| a.total_cmp(b));
    let q95 = quantile_sorted(&finite, 0.95);
    let q99 = quantile_sorted(&finite, 0.99);
    let top = q95.floor();
    if top < 1.0 {
        return Err(Error::DegenerateData(format!(
            "95% quantile {q95:.3} is below the first z milestone 1"
        )));
    }
    let z_values: Vec<f64> = (1..=top as u32).map(f64::from).collect();
    let last = *z_values.last().expect("non-empty");
    let mut z_max = q99.round();
    if z_max <= last {
        z_max = last + 1.0;
    }
    Ok((z_values, z_max))
}

/// Linear interpolation between order statistics.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
