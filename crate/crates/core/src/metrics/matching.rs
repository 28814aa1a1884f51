//! Note-level matching of estimated against reference notes.

use std::collections::BTreeMap;

use super::PRF;
use crate::dataset::NoteEvent;

/// Onsets must agree within this many seconds for a pair to be admissible.
pub const ONSET_TOLERANCE: f64 = 0.05;

/// Whether offsets participate in the admissibility test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OffsetRule {
    /// Offsets are ignored; pitch and onset alone decide.
    None,
    /// Offsets must agree within max(50 ms, 20% of the reference duration).
    Standard,
}

/// A maximum-cardinality matching and its derived scores.
#[derive(Clone, Debug)]
pub struct NoteMatching {
    pub prf: PRF,
    /// Matched (reference index, estimate index) pairs, sorted.
    pub pairs: Vec<(usize, usize)>,
}

fn admissible(r: &NoteEvent, e: &NoteEvent, rule: OffsetRule) -> bool {
    if r.pitch != e.pitch || (r.onset - e.onset).abs() > ONSET_TOLERANCE {
        return false;
    }
    match rule {
        OffsetRule::None => true,
        OffsetRule::Standard => {
            let tolerance = (0.2 * (r.offset - r.onset)).max(ONSET_TOLERANCE);
            (r.offset - e.offset).abs() <= tolerance
        }
    }
}

/// Matches estimated notes to reference notes one-to-one. A pair is
/// admissible iff the pitches are equal, the onsets agree within
/// [`ONSET_TOLERANCE`], and the offsets satisfy the chosen rule; among all
/// one-to-one pairings the returned matching has maximum cardinality (a
/// greedy assignment can strand matchable notes). Precision is |M|/|est|,
/// recall |M|/|ref|, with 0/0 defined as 0.
pub fn match_notes(
    reference: &[NoteEvent],
    estimate: &[NoteEvent],
    rule: OffsetRule,
) -> NoteMatching {
    // Estimate indices grouped by pitch and sorted by onset, so each
    // reference note only examines the onset window that can match it.
    let mut by_pitch: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (e, note) in estimate.iter().enumerate() {
        by_pitch.entry(note.pitch).or_default().push(e);
    }
    for group in by_pitch.values_mut() {
        group.sort_by(|&a, &b| estimate[a].onset.total_cmp(&estimate[b].onset));
    }

    let adjacency: Vec<Vec<usize>> = reference
        .iter()
        .map(|r| {
            let Some(group) = by_pitch.get(&r.pitch) else {
                return Vec::new();
            };
            let lo = group.partition_point(|&e| estimate[e].onset < r.onset - ONSET_TOLERANCE);
            group[lo..]
                .iter()
                .take_while(|&&e| estimate[e].onset <= r.onset + ONSET_TOLERANCE)
                .filter(|&&e| admissible(r, &estimate[e], rule))
                .copied()
                .collect()
        })
        .collect();

    let mut est_to_ref = vec![usize::MAX; estimate.len()];
    let mut seen = vec![false; estimate.len()];
    for r in 0..reference.len() {
        seen.fill(false);
        augment(r, &adjacency, &mut est_to_ref, &mut seen);
    }

    let mut pairs: Vec<(usize, usize)> = est_to_ref
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r != usize::MAX)
        .map(|(e, &r)| (r, e))
        .collect();
    pairs.sort_unstable();
    let prf = PRF::new(pairs.len(), estimate.len(), reference.len());
    NoteMatching { prf, pairs }
}

/// One augmenting-path pass: tries to match reference note `r`, displacing
/// already-matched estimates onto alternatives where possible.
fn augment(r: usize, adjacency: &[Vec<usize>], est_to_ref: &mut [usize], seen: &mut [bool]) -> bool {
    for &e in &adjacency[r] {
        if seen[e] {
            continue;
        }
        seen[e] = true;
        if est_to_ref[e] == usize::MAX || augment(est_to_ref[e], adjacency, est_to_ref, seen) {
            est_to_ref[e] = r;
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn note(pitch: u8, onset: f64, offset: f64) -> NoteEvent {
        NoteEvent { pitch, onset, offset }
    }

    /// Exhaustive maximum matching over all admissible pairings.
    fn brute_force(reference: &[NoteEvent], estimate: &[NoteEvent], rule: OffsetRule) -> usize {
        fn go(
            r: usize,
            used: u32,
            reference: &[NoteEvent],
            estimate: &[NoteEvent],
            rule: OffsetRule,
        ) -> usize {
            if r == reference.len() {
                return 0;
            }
            let mut best = go(r + 1, used, reference, estimate, rule);
            for (e, est) in estimate.iter().enumerate() {
                if used & (1 << e) == 0 && admissible(&reference[r], est, rule) {
                    best = best.max(1 + go(r + 1, used | (1 << e), reference, estimate, rule));
                }
            }
            best
        }
        go(0, 0, reference, estimate, rule)
    }

    #[test]
    fn identical_lists_match_perfectly_under_both_rules() {
        let notes = vec![note(60, 0.0, 1.0), note(64, 0.5, 0.9), note(60, 1.2, 2.0)];
        for rule in [OffsetRule::None, OffsetRule::Standard] {
            let m = match_notes(&notes, &notes, rule);
            assert_eq!(m.pairs, vec![(0, 0), (1, 1), (2, 2)]);
            assert_eq!(m.prf, PRF { precision: 1.0, recall: 1.0, f1: 1.0 });
        }
    }

    #[test]
    fn onset_beyond_tolerance_does_not_match() {
        let reference = [note(60, 0.0, 1.0)];
        let estimate = [note(60, 0.06, 1.0)];
        let m = match_notes(&reference, &estimate, OffsetRule::None);
        assert!(m.pairs.is_empty());
        let close = [note(60, 0.05, 1.0)];
        assert_eq!(match_notes(&reference, &close, OffsetRule::None).pairs.len(), 1);
    }

    #[test]
    fn pitch_must_be_exactly_equal() {
        let m = match_notes(&[note(60, 0.0, 1.0)], &[note(61, 0.0, 1.0)], OffsetRule::None);
        assert!(m.pairs.is_empty());
    }

    #[test]
    fn greedy_first_fit_would_lose_this_instance() {
        // Taking B–a first strands b; the maximum matching pairs A–a, B–b.
        let reference = [note(60, 0.00, 1.0), note(60, 0.05, 1.0)];
        let estimate = [note(60, 0.04, 1.0), note(60, 0.10, 1.0)];
        let m = match_notes(&reference, &estimate, OffsetRule::None);
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn offset_rule_uses_a_fifth_of_the_reference_duration() {
        // Duration 1.0 s → offset tolerance 0.2 s.
        let reference = [note(60, 0.0, 1.0)];
        let within = [note(60, 0.0, 1.19)];
        let beyond = [note(60, 0.0, 1.21)];
        assert_eq!(match_notes(&reference, &within, OffsetRule::Standard).pairs.len(), 1);
        assert_eq!(match_notes(&reference, &beyond, OffsetRule::Standard).pairs.len(), 0);
        // Both match when offsets are ignored.
        assert_eq!(match_notes(&reference, &beyond, OffsetRule::None).pairs.len(), 1);
    }

    #[test]
    fn offset_tolerance_never_drops_below_fifty_ms() {
        // Duration 0.1 s → 20% is 0.02 s, but the floor is 0.05 s.
        let reference = [note(60, 0.0, 0.1)];
        let within = [note(60, 0.0, 0.149)];
        let beyond = [note(60, 0.0, 0.151)];
        assert_eq!(match_notes(&reference, &within, OffsetRule::Standard).pairs.len(), 1);
        assert_eq!(match_notes(&reference, &beyond, OffsetRule::Standard).pairs.len(), 0);
    }

    #[test]
    fn empty_lists_score_zero_by_convention() {
        let m = match_notes(&[], &[], OffsetRule::None);
        assert_eq!(m.prf, PRF { precision: 0.0, recall: 0.0, f1: 0.0 });
        let n = match_notes(&[note(60, 0.0, 1.0)], &[], OffsetRule::None);
        assert_eq!(n.prf, PRF { precision: 0.0, recall: 0.0, f1: 0.0 });
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<NoteEvent>, Vec<NoteEvent>) {
        let draw = |rng: &mut ChaCha8Rng| {
            let n = rng.gen_range(0..=6);
            (0..n)
                .map(|_| {
                    let onset = rng.gen_range(0.0..0.3);
                    let duration = rng.gen_range(0.01..0.5);
                    note(rng.gen_range(60..=62), onset, onset + duration)
                })
                .collect::<Vec<_>>()
        };
        (draw(rng), draw(rng))
    }

    #[test]
    fn matching_size_equals_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..1000 {
            let (reference, estimate) = random_instance(&mut rng);
            for rule in [OffsetRule::None, OffsetRule::Standard] {
                let got = match_notes(&reference, &estimate, rule).pairs.len();
                let want = brute_force(&reference, &estimate, rule);
                assert_eq!(got, want, "case {case} rule {rule:?}: {reference:?} {estimate:?}");
            }
        }
    }

    #[test]
    fn swapping_the_lists_swaps_precision_and_recall() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let (a, b) = random_instance(&mut rng);
            let forward = match_notes(&a, &b, OffsetRule::None);
            let backward = match_notes(&b, &a, OffsetRule::None);
            assert_eq!(forward.prf.precision, backward.prf.recall);
            assert_eq!(forward.prf.recall, backward.prf.precision);
        }
    }

    #[test]
    fn extra_estimates_move_the_scores_the_expected_way() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (reference, mut estimate) = random_instance(&mut rng);
            if reference.is_empty() {
                continue;
            }
            let before = match_notes(&reference, &estimate, OffsetRule::Standard).prf;
            // A copy of a reference note can only help recall.
            estimate.push(reference[0]);
            let with_copy = match_notes(&reference, &estimate, OffsetRule::Standard).prf;
            assert!(with_copy.recall >= before.recall);
            // An unmatchable note can only hurt precision.
            estimate.push(note(108, 500.0, 501.0));
            let with_junk = match_notes(&reference, &estimate, OffsetRule::Standard).prf;
            assert!(with_junk.precision <= with_copy.precision);
        }
    }
}
