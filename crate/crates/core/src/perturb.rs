//! Local and global event permutation used to probe order sensitivity.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Event, EventSequence};
use crate::error::{Error, Result};
use crate::seed;

/// Neighbourhood radius of a local shuffle: `0` leaves the sequence alone,
/// `-1` permutes the whole sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleSpec {
    pub w: i64,
    pub seed: u64,
}

impl ShuffleSpec {
    pub const FULL: i64 = -1;

    pub fn new(w: i64, seed: u64) -> Result<Self> {
        if w < -1 {
            return Err(Error::Config(format!("shuffle radius must be >= -1, got {w}")));
        }
        Ok(ShuffleSpec { w, seed })
    }
}

/// Returns the permutation applied by [`local_shuffle`]: output position `t`
/// receives the payload of input position `perm[t]`.
pub fn shuffle_permutation(len: usize, spec: &ShuffleSpec) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    let mut rng = seed::rng(spec.seed);
    match spec.w {
        0 => {}
        ShuffleSpec::FULL => perm.shuffle(&mut rng),
        w => {
            let w = w as usize;
            for t in 0..len {
                let lo = t.saturating_sub(w);
                let hi = (t + w).min(len - 1);
                let j = rng.random_range(lo..=hi);
                perm.swap(t, j);
            }
        }
    }
    perm
}

/// Permutes event payloads (category and numeric features) within the
/// configured neighbourhood. Timestamps stay on their original grid.
pub fn local_shuffle(seq: &EventSequence, spec: &ShuffleSpec) -> Result<EventSequence> {
    if seq.is_empty() {
        return Err(Error::Empty("cannot shuffle an empty sequence"));
    }
    let perm = shuffle_permutation(seq.len(), spec);
    let events = perm
        .iter()
        .zip(&seq.events)
        .map(|(&src, slot)| Event {
            timestamp: slot.timestamp,
            category: seq.events[src].category,
            numeric: seq.events[src].numeric.clone(),
        })
        .collect();
    Ok(EventSequence {
        user_id: seq.user_id.clone(),
        events,
    })
}

/// Shuffles every sequence with a per-user seed derived from `spec.seed`.
pub fn shuffle_dataset(dataset: &Dataset, spec: &ShuffleSpec) -> Result<Dataset> {
    let sequences = dataset
        .sequences
        .iter()
        .map(|s| {
            let per_user = ShuffleSpec {
                w: spec.w,
                seed: seed::derive(spec.seed, &["shuffle", &s.user_id]),
            };
            local_shuffle(s, &per_user)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        sequences,
        ..dataset.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(cats: &[usize]) -> EventSequence {
        EventSequence::from_categories("u", cats)
    }

    fn sorted(mut v: Vec<usize>) -> Vec<usize> {
        v.sort_unstable();
        v
    }

    #[test]
    fn zero_radius_is_identity() {
        let s = seq(&[3, 1, 4, 1, 5, 9, 2, 6]);
        assert_eq!(local_shuffle(&s, &ShuffleSpec::new(0, 7).unwrap()).unwrap(), s);
    }

    #[test]
    fn full_shuffle_conserves_multiset_and_time_grid() {
        let s = seq(&[3, 1, 4, 1, 5, 9, 2, 6]);
        let out = local_shuffle(&s, &ShuffleSpec::new(-1, 7).unwrap()).unwrap();
        assert_eq!(sorted(out.categories()), sorted(s.categories()));
        let ts: Vec<f64> = out.events.iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, (0..8).map(|t| t as f64).collect::<Vec<_>>());
    }

    #[test]
    fn numeric_features_travel_with_category() {
        let s = EventSequence {
            user_id: "u".into(),
            events: (0..10)
                .map(|t| Event {
                    timestamp: t as f64,
                    category: t,
                    numeric: vec![t as f64 * 10.0],
                })
                .collect(),
        };
        let out = local_shuffle(&s, &ShuffleSpec::new(2, 1).unwrap()).unwrap();
        for e in &out.events {
            assert_eq!(e.numeric[0], e.category as f64 * 10.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ShuffleSpec::new(-2, 0).is_err());
        assert!(local_shuffle(&seq(&[]), &ShuffleSpec::new(1, 0).unwrap()).is_err());
    }

    #[test]
    fn full_shuffle_is_uniform_on_three_events() {
        let trials = 100_000;
        let mut hits = std::collections::HashMap::new();
        for s in 0..trials {
            let p = shuffle_permutation(3, &ShuffleSpec { w: -1, seed: s });
            *hits.entry(p).or_insert(0usize) += 1;
        }
        assert_eq!(hits.len(), 6);
        for (p, n) in hits {
            let f = n as f64 / trials as f64;
            assert!((f - 1.0 / 6.0).abs() < 0.02, "{p:?}: {f}");
        }
    }

    #[test]
    fn displacement_grows_with_radius() {
        let len = 100;
        let mean_disp = |w: i64| -> f64 {
            let mut total = 0usize;
            for s in 0..1000 {
                let p = shuffle_permutation(len, &ShuffleSpec { w, seed: s });
                total += p.iter().enumerate().map(|(t, &src)| t.abs_diff(src)).sum::<usize>();
            }
            total as f64 / (1000 * len) as f64
        };
        let d: Vec<f64> = [0, 1, 4, 16, -1].into_iter().map(mean_disp).collect();
        assert_eq!(d[0], 0.0);
        assert!(d.windows(2).all(|p| p[0] <= p[1]), "{d:?}");
    }

    #[test]
    fn dataset_shuffle_is_per_user_deterministic() {
        let d = Dataset::new(
            vec![
                EventSequence::from_categories("a", &[0, 1, 2, 3, 4, 5]),
                EventSequence::from_categories("b", &[0, 1, 2, 3, 4, 5]),
            ],
            crate::data::Vocabulary::from_labels(["0", "1", "2", "3", "4", "5"]),
        );
        let spec = ShuffleSpec::new(-1, 11).unwrap();
        let x = shuffle_dataset(&d, &spec).unwrap();
        assert_eq!(x, shuffle_dataset(&d, &spec).unwrap());
        // reversing user order does not change any user's result
        let mut rev = d.clone();
        rev.sequences.reverse();
        let y = shuffle_dataset(&rev, &spec).unwrap();
        assert_eq!(x.sequences[0], y.sequences[1]);
    }
}
