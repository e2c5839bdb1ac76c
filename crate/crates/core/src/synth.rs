//! Seeded synthetic event-sequence generators.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{CategoricalDistribution, Dataset, Event, EventSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::forecast::sample_categorical;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// I.i.d. draws from one fixed distribution.
    Exchangeable,
    /// First-order chain with a dominant successor per state.
    Markov,
    /// Mixture that slides from one distribution to a disjoint one.
    Drift,
    /// A deterministic repeating pattern with a per-user phase.
    Cycle,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown generator {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub users: usize,
    pub length: usize,
    /// Category distribution for `exchangeable`, and the starting
    /// distribution for `drift`.
    pub probs: Vec<f64>,
    /// Alphabet size for `markov` and `cycle`.
    pub k: usize,
    /// Probability of the dominant successor in `markov`.
    pub strength: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            kind: SynthKind::Exchangeable,
            users: 100,
            length: 128,
            probs: vec![0.6, 0.3, 0.1],
            k: 6,
            strength: 0.9,
        }
    }
}

impl SynthSpec {
    pub fn num_categories(&self) -> usize {
        match self.kind {
            SynthKind::Exchangeable => self.probs.len(),
            SynthKind::Drift => 2 * self.probs.len(),
            SynthKind::Markov | SynthKind::Cycle => self.k,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.users == 0 || self.length == 0 {
            return Err(Error::Config("users and length must be positive".into()));
        }
        match self.kind {
            SynthKind::Exchangeable | SynthKind::Drift => {
                CategoricalDistribution::new(self.probs.clone())?;
            }
            SynthKind::Markov => {
                if self.k < 2 || !(0.0..=1.0).contains(&self.strength) {
                    return Err(Error::Config("markov needs k >= 2 and strength in [0, 1]".into()));
                }
            }
            SynthKind::Cycle => {
                if self.k == 0 {
                    return Err(Error::Config("cycle needs k >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Generates a dataset with labels `c0..c{K-1}` and timestamps `0..length`.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let k = spec.num_categories();
    let succ = markov_successors(k, seed);
    let sequences = (0..spec.users)
        .map(|u| {
            let user = format!("u{u:05}");
            let mut rng = seed::derived_rng(seed, &["synth", &user]);
            let cats = match spec.kind {
                SynthKind::Exchangeable => (0..spec.length)
                    .map(|_| sample_categorical(&spec.probs, &mut rng))
                    .collect(),
                SynthKind::Drift => {
                    let m = spec.probs.len();
                    let denom = (spec.length.max(2) - 1) as f64;
                    (0..spec.length)
                        .map(|t| {
                            let late = rng.random_bool((t as f64 / denom).clamp(0.0, 1.0));
                            sample_categorical(&spec.probs, &mut rng) + if late { m } else { 0 }
                        })
                        .collect()
                }
                SynthKind::Markov => {
                    let mut x = rng.random_range(0..k);
                    let mut out = Vec::with_capacity(spec.length);
                    for _ in 0..spec.length {
                        out.push(x);
                        x = if rng.random_bool(spec.strength) {
                            succ[x]
                        } else {
                            rng.random_range(0..k)
                        };
                    }
                    out
                }
                SynthKind::Cycle => {
                    let phase = rng.random_range(0..k);
                    (0..spec.length).map(|t| (t + phase) % k).collect()
                }
            };
            EventSequence {
                user_id: user,
                events: cats
                    .into_iter()
                    .enumerate()
                    .map(|(t, c): (usize, usize)| Event::new(t as f64, c))
                    .collect(),
            }
        })
        .collect();
    Ok(Dataset::new(sequences, Vocabulary::from_labels((0..k).map(|i| format!("c{i}")))))
}

// A random cyclic permutation, so no state is its own dominant successor.
fn markov_successors(k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut seed::derived_rng(seed, &["synth", "successors"]));
    let mut succ = vec![0; k];
    for i in 0..k {
        succ[order[i]] = order[(i + 1) % k];
    }
    succ
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::counts;

    fn spec(kind: SynthKind) -> SynthSpec {
        SynthSpec {
            kind,
            users: 20,
            length: 50,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn generators_are_seeded() {
        for kind in [SynthKind::Exchangeable, SynthKind::Markov, SynthKind::Drift, SynthKind::Cycle] {
            let a = generate(&spec(kind), 3).unwrap();
            assert_eq!(a, generate(&spec(kind), 3).unwrap());
            assert_eq!(a.sequences.len(), 20);
            assert!(a.sequences.iter().all(|s| s.len() == 50));
            assert_eq!(a.num_categories(), spec(kind).num_categories());
        }
        assert_ne!(generate(&spec(SynthKind::Markov), 3).unwrap(), generate(&spec(SynthKind::Markov), 4).unwrap());
    }

    #[test]
    fn exchangeable_frequencies() {
        let d = generate(
            &SynthSpec {
                users: 200,
                length: 100,
                ..SynthSpec::default()
            },
            1,
        )
        .unwrap();
        let all: Vec<usize> = d.sequences.iter().flat_map(|s| s.categories()).collect();
        let c = counts(&all, 3).unwrap();
        for (ci, p) in c.iter().zip([0.6, 0.3, 0.1]) {
            assert!((*ci as f64 / all.len() as f64 - p).abs() < 0.01);
        }
    }

    #[test]
    fn drift_moves_to_the_second_block() {
        let d = generate(&spec(SynthKind::Drift), 2).unwrap();
        for s in &d.sequences {
            let c = s.categories();
            assert!(c[0] < 3);
            assert!(c[49] >= 3);
        }
    }

    #[test]
    fn cycle_and_successors() {
        let d = generate(&spec(SynthKind::Cycle), 0).unwrap();
        let c = d.sequences[0].categories();
        assert!(c.windows(2).all(|w| w[1] == (w[0] + 1) % 6));
        let s = markov_successors(6, 9);
        assert!((0..6).all(|i| s[i] != i));
        let mut sorted = s.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut s = spec(SynthKind::Exchangeable);
        s.probs = vec![0.5, 0.6];
        assert!(generate(&s, 0).is_err());
        s = spec(SynthKind::Markov);
        s.k = 1;
        assert!(generate(&s, 0).is_err());
        assert!("nope".parse::<SynthKind>().is_err());
        assert_eq!("drift".parse::<SynthKind>().unwrap(), SynthKind::Drift);
    }
}
