use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::SubtypeObjective;
use crate::likelihood::LikelihoodEvaluator;
use crate::model::{levels_in_order, random_valid_sequence_with, EventTable, MixedEventSequence};
use crate::rng::{self, Rng};

/// Removes `event` from `order` and returns the slot range (inclusive, in
/// the coordinates of the shortened order) where it can be reinserted
/// without breaking level order.
pub(crate) fn relocation_slots(order: &mut Vec<usize>, event: usize, table: &EventTable) -> (usize, usize, usize) {
    let from = order.iter().position(|&e| e == event).expect("event in order");
    order.remove(from);
    let ev = table.event(event);
    let lo = ev
        .level
        .checked_sub(1)
        .and_then(|l| table.event_id(ev.biomarker, l))
        .map_or(0, |prev| order.iter().position(|&e| e == prev).expect("prev level") + 1);
    let hi = table.event_id(ev.biomarker, ev.level + 1).map_or(order.len(), |next| {
        order.iter().position(|&e| e == next).expect("next level")
    });
    (from, lo, hi)
}

pub(crate) fn greedy_with(
    objective: &mut SubtypeObjective<'_>,
    table: &EventTable,
    init: &MixedEventSequence,
    n_passes: usize,
    rng: &mut Rng,
) -> (MixedEventSequence, f64) {
    let mut current = init.clone();
    let mut best = objective.score(&current);
    let mut events: Vec<usize> = (0..table.n_events()).collect();
    let mut reduced = Vec::with_capacity(table.n_events());
    for _ in 0..n_passes {
        let mut improved = false;
        events.shuffle(rng);
        for &e in &events {
            reduced.clear();
            reduced.extend_from_slice(current.order());
            let (from, lo, hi) = relocation_slots(&mut reduced, e, table);
            let mut best_move: Option<(MixedEventSequence, f64)> = None;
            for slot in lo..=hi {
                if slot == from {
                    continue;
                }
                let mut order = reduced.clone();
                order.insert(slot, e);
                debug_assert!(levels_in_order(&order, table));
                let candidate = MixedEventSequence::from_order_unchecked(order);
                let score = objective.score(&candidate);
                if best_move.as_ref().is_none_or(|(_, s)| score > *s) {
                    best_move = Some((candidate, score));
                }
            }
            if let Some((candidate, score)) = best_move {
                if score > best {
                    current = candidate;
                    best = score;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    (current, best)
}

/// Greedy ascent of the single-sequence objective from `init`.
///
/// Each pass visits the events in random order and moves each to its best
/// valid position. Stops after `n_passes` or a pass without improvement.
pub fn greedy_ascent(
    eval: &LikelihoodEvaluator,
    table: &EventTable,
    init: &MixedEventSequence,
    n_passes: usize,
    rng_seed: u64,
) -> (MixedEventSequence, f64) {
    let mut objective = SubtypeObjective::single(eval);
    greedy_with(&mut objective, table, init, n_passes, &mut rng::seeded(rng_seed))
}

/// Best of `n_starts` greedy ascents from random valid sequences. Start `i`
/// uses seed `rng_seed + i`; ties go to the lowest start index.
pub fn multistart_greedy(
    eval: &LikelihoodEvaluator,
    table: &EventTable,
    n_starts: usize,
    n_passes: usize,
    rng_seed: u64,
) -> (MixedEventSequence, f64) {
    let results: Vec<(MixedEventSequence, f64)> = (0..n_starts.max(1))
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::seeded(rng_seed.wrapping_add(i as u64));
            let init = random_valid_sequence_with(table, &mut rng);
            let mut objective = SubtypeObjective::single(eval);
            greedy_with(&mut objective, table, &init, n_passes, &mut rng)
        })
        .collect();
    best_of(results)
}

pub(crate) fn best_of<T>(results: Vec<(T, f64)>) -> (T, f64) {
    let mut best: Option<(T, f64)> = None;
    for r in results {
        if best.as_ref().is_none_or(|b| r.1 > b.1) {
            best = Some(r);
        }
    }
    best.expect("at least one result")
}
