//! Dataset diagnostics computed before any model is trained: window-level
//! Shape similarity, drift curves, the multi-anchor staticity index, and the
//! exponential decay rate of the category frequency profile.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CategoricalDistribution, Dataset, Event, EventSequence};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_WINDOW: usize = 64;
pub const DEFAULT_STRIDE: usize = 32;
pub const DEFAULT_ANCHORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
        }
    }
}

impl WindowSpec {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        let spec = WindowSpec { window, stride };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 || self.stride > self.window {
            return Err(Error::Config(format!(
                "window spec needs 1 <= stride <= window, got window {} stride {}",
                self.window, self.stride
            )));
        }
        Ok(())
    }

    /// Number of full windows over a sequence of length `len`; tail windows
    /// shorter than `window` are dropped.
    pub fn count(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.stride + 1
        }
    }

    fn windows<'a>(&self, events: &'a [Event]) -> impl Iterator<Item = &'a [Event]> + 'a {
        let (w, s) = (self.window, self.stride);
        (0..self.count(events.len())).map(move |i| &events[i * s..i * s + w])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Numeric,
}

/// Feature layout of a dataset: the category first, then each numeric column.
pub fn feature_kinds(dataset: &Dataset) -> Vec<FeatureKind> {
    std::iter::once(FeatureKind::Categorical)
        .chain(std::iter::repeat_n(FeatureKind::Numeric, dataset.num_features))
        .collect()
}

/// `1 - TV(p0, pi)`.
pub fn tv_similarity(p0: &CategoricalDistribution, pi: &CategoricalDistribution) -> Result<f64> {
    if p0.k() != pi.k() {
        return Err(Error::DimensionMismatch {
            expected: p0.k(),
            got: pi.k(),
        });
    }
    let l1: f64 = p0
        .probs()
        .iter()
        .zip(pi.probs())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok((1.0 - 0.5 * l1).clamp(0.0, 1.0))
}

/// `1 - sup_x |F0(x) - Fi(x)|` over the two empirical CDFs.
pub fn ks_similarity(x0: &[f64], xi: &[f64]) -> Result<f64> {
    if x0.is_empty() || xi.is_empty() {
        return Err(Error::Empty("KS similarity needs two non-empty samples"));
    }
    if x0.iter().chain(xi).any(|x| x.is_nan()) {
        return Err(Error::NonFinite("NaN in KS sample".into()));
    }
    let mut a = x0.to_vec();
    let mut b = xi.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(1.0 - ks_sorted(&a, &b))
}

fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    // once one sample is exhausted the gap only shrinks toward zero
    d
}

/// Per-window summary of every feature, reusable across many comparisons.
#[derive(Debug, Clone)]
struct Profile {
    len: usize,
    features: Vec<FeatureProfile>,
}

#[derive(Debug, Clone)]
enum FeatureProfile {
    /// Sorted (value key, count) pairs.
    Counts(Vec<(u64, usize)>),
    /// Sorted sample.
    Sample(Vec<f64>),
}

fn feature_value(e: &Event, j: usize) -> f64 {
    if j == 0 {
        e.category as f64
    } else {
        e.numeric[j - 1]
    }
}

fn value_key(v: f64) -> u64 {
    // normalise -0.0 so it shares a bucket with 0.0
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

impl Profile {
    fn build(win: &[Event], kinds: &[FeatureKind]) -> Result<Self> {
        if win.is_empty() {
            return Err(Error::Empty("window has no events"));
        }
        let width = kinds.len();
        if width == 0 || win.iter().any(|e| e.numeric.len() + 1 != width) {
            return Err(Error::Schema(format!(
                "{} feature kinds for events carrying {} features",
                width,
                win[0].numeric.len() + 1
            )));
        }
        let features = kinds
            .iter()
            .enumerate()
            .map(|(j, kind)| {
                let mut vals: Vec<f64> = win.iter().map(|e| feature_value(e, j)).collect();
                if vals.iter().any(|v| v.is_nan()) {
                    return Err(Error::NonFinite(format!("NaN in feature {j}")));
                }
                vals.sort_by(f64::total_cmp);
                Ok(match kind {
                    FeatureKind::Numeric => FeatureProfile::Sample(vals),
                    FeatureKind::Categorical => {
                        let mut counts: Vec<(u64, usize)> = Vec::new();
                        let mut keys: Vec<u64> = vals.into_iter().map(value_key).collect();
                        keys.sort_unstable();
                        for k in keys {
                            match counts.last_mut() {
                                Some((last, c)) if *last == k => *c += 1,
                                _ => counts.push((k, 1)),
                            }
                        }
                        FeatureProfile::Counts(counts)
                    }
                })
            })
            .collect::<Result<_>>()?;
        Ok(Profile {
            len: win.len(),
            features,
        })
    }

    fn shape(&self, other: &Profile) -> f64 {
        let m = self.features.len();
        let total: f64 = self
            .features
            .iter()
            .zip(&other.features)
            .map(|(a, b)| match (a, b) {
                (FeatureProfile::Counts(a), FeatureProfile::Counts(b)) => {
                    1.0 - tv_counts(a, self.len as f64, b, other.len as f64)
                }
                (FeatureProfile::Sample(a), FeatureProfile::Sample(b)) => 1.0 - ks_sorted(a, b),
                _ => unreachable!("profiles built from the same kinds"),
            })
            .sum();
        (total / m as f64).clamp(0.0, 1.0)
    }
}

fn tv_counts(a: &[(u64, usize)], na: f64, b: &[(u64, usize)], nb: f64) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut l1 = 0.0;
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(ka, ca)), Some(&(kb, cb))) if ka == kb => {
                l1 += (ca as f64 / na - cb as f64 / nb).abs();
                i += 1;
                j += 1;
            }
            (Some(&(ka, ca)), Some(&(kb, _))) if ka < kb => {
                l1 += ca as f64 / na;
                i += 1;
            }
            (Some(&(_, ca)), None) => {
                l1 += ca as f64 / na;
                i += 1;
            }
            (_, Some(&(_, cb))) => {
                l1 += cb as f64 / nb;
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    0.5 * l1
}

/// Mean per-feature similarity between two windows: `1 - TV` for categorical
/// features and `1 - KS` for numeric ones.
pub fn shape_score(win0: &[Event], wini: &[Event], kinds: &[FeatureKind]) -> Result<f64> {
    let a = Profile::build(win0, kinds)?;
    let b = Profile::build(wini, kinds)?;
    Ok(a.shape(&b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCurve {
    pub values: Vec<f64>,
}

fn profiles(seq: &EventSequence, spec: &WindowSpec, kinds: &[FeatureKind]) -> Result<Vec<Profile>> {
    spec.validate()?;
    if seq.len() < spec.window {
        return Err(Error::TooShort {
            len: seq.len(),
            horizon: spec.window,
        });
    }
    spec.windows(&seq.events)
        .map(|w| Profile::build(w, kinds))
        .collect()
}

/// Shape similarity of every window against the first one.
pub fn drift_curve(seq: &EventSequence, spec: &WindowSpec, kinds: &[FeatureKind]) -> Result<DriftCurve> {
    let p = profiles(seq, spec, kinds)?;
    Ok(DriftCurve {
        values: p.iter().map(|pi| p[0].shape(pi)).collect(),
    })
}

/// Per-sequence staticity for an explicit list of anchor windows.
pub fn staticity_with_anchors(
    seq: &EventSequence,
    spec: &WindowSpec,
    kinds: &[FeatureKind],
    anchors: &[usize],
) -> Result<f64> {
    let p = profiles(seq, spec, kinds)?;
    if anchors.is_empty() {
        return Err(Error::Config("at least one anchor is required".into()));
    }
    if let Some(&a) = anchors.iter().find(|&&a| a >= p.len()) {
        return Err(Error::Config(format!("anchor {a} out of range for {} windows", p.len())));
    }
    let total: f64 = anchors
        .iter()
        .map(|&r| p.iter().map(|pi| p[r].shape(pi)).sum::<f64>())
        .sum();
    Ok((total / (anchors.len() * p.len()) as f64).clamp(0.0, 1.0))
}

/// Per-sequence staticity with `anchors` windows drawn uniformly with
/// replacement. The anchor itself is part of the inner average.
pub fn staticity_sequence(
    seq: &EventSequence,
    spec: &WindowSpec,
    kinds: &[FeatureKind],
    anchors: usize,
    seed: u64,
) -> Result<f64> {
    if anchors == 0 {
        return Err(Error::Config("at least one anchor is required".into()));
    }
    let windows = spec.count(seq.len());
    if windows == 0 {
        return Err(Error::TooShort {
            len: seq.len(),
            horizon: spec.window,
        });
    }
    let mut rng = seed::rng(seed);
    let picks: Vec<usize> = (0..anchors).map(|_| rng.random_range(0..windows)).collect();
    staticity_with_anchors(seq, spec, kinds, &picks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Staticity {
    pub index: f64,
    pub included: usize,
    pub skipped: usize,
}

/// Dataset-level staticity: mean of per-sequence scores over sequences with at
/// least one full window. Each sequence draws anchors from a seed derived from
/// `(seed, user_id)`.
pub fn staticity_dataset(dataset: &Dataset, spec: &WindowSpec, anchors: usize, seed: u64) -> Result<Staticity> {
    spec.validate()?;
    let kinds = feature_kinds(dataset);
    let scores: Vec<Option<f64>> = dataset
        .sequences
        .par_iter()
        .map(|s| {
            if spec.count(s.len()) == 0 {
                return Ok(None);
            }
            let sd = seed::derive(seed, &["staticity", &s.user_id]);
            staticity_sequence(s, spec, &kinds, anchors, sd).map(Some)
        })
        .collect::<Result<_>>()?;
    let included: Vec<f64> = scores.iter().flatten().copied().collect();
    if included.is_empty() {
        return Err(Error::Empty("no sequence is long enough for one window"));
    }
    Ok(Staticity {
        index: included.iter().sum::<f64>() / included.len() as f64,
        included: included.len(),
        skipped: scores.len() - included.len(),
    })
}

/// Decay rate of rank-ordered frequencies: least-squares slope of
/// `ln f_r` against `r - 1` over positive entries, negated and clipped at 0.
pub fn fit_decay_lambda_from_frequencies(freqs: &[f64]) -> Result<f64> {
    if freqs.len() < 2 {
        return Err(Error::Config(format!(
            "decay fit needs at least 2 categories, got {}",
            freqs.len()
        )));
    }
    if freqs.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::InvalidDistribution("frequencies must be finite and non-negative".into()));
    }
    let mut sorted = freqs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let pts: Vec<(f64, f64)> = sorted
        .iter()
        .take_while(|&&f| f > 0.0)
        .enumerate()
        .map(|(r, f)| (r as f64, f.ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(0.0);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Ok((-sxy / sxx).max(0.0))
}

pub fn category_frequencies(dataset: &Dataset) -> Vec<f64> {
    let mut c = vec![0.0; dataset.num_categories()];
    for e in dataset.sequences.iter().flat_map(|s| &s.events) {
        if let Some(slot) = c.get_mut(e.category) {
            *slot += 1.0;
        }
    }
    c
}

pub fn fit_decay_lambda(dataset: &Dataset) -> Result<f64> {
    fit_decay_lambda_from_frequencies(&category_frequencies(dataset))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub lambda: f64,
    pub staticity: f64,
    pub tcd: usize,
    pub mean_len: f64,
    pub sequences: usize,
    pub skipped_sequences: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppl_ratio: Option<f64>,
}

/// Assembles the dataset statistics table row. A vocabulary with a single
/// category has no decay profile and reports `lambda = 0`.
pub fn dataset_summary(dataset: &Dataset, spec: &WindowSpec, anchors: usize, seed: u64) -> Result<DatasetSummary> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset has no sequences"));
    }
    let lambda = if dataset.num_categories() < 2 {
        0.0
    } else {
        fit_decay_lambda(dataset)?
    };
    let st = staticity_dataset(dataset, spec, anchors, seed)?;
    Ok(DatasetSummary {
        lambda,
        staticity: st.index,
        tcd: dataset.num_categories(),
        mean_len: dataset.mean_len(),
        sequences: dataset.sequences.len(),
        skipped_sequences: st.skipped,
        ppl_ratio: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Vocabulary;

    const CAT: &[FeatureKind] = &[FeatureKind::Categorical];

    fn dist(p: &[f64]) -> CategoricalDistribution {
        CategoricalDistribution::new(p.to_vec()).unwrap()
    }

    fn seq(cats: &[usize]) -> EventSequence {
        EventSequence::from_categories("u", cats)
    }

    #[test]
    fn tv_cases() {
        let a = dist(&[0.5, 0.5]);
        assert_eq!(tv_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(tv_similarity(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap(), 0.0);
        // |0.5-0.75| + |0.5-0.25| = 0.5, half of it is 0.25
        assert!((tv_similarity(&a, &dist(&[0.75, 0.25])).unwrap() - 0.75).abs() < 1e-15);
        assert!(tv_similarity(&a, &dist(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn ks_cases() {
        assert_eq!(ks_similarity(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(ks_similarity(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        // CDFs differ by 1/4 on [4, 8)
        assert!((ks_similarity(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 8.0]).unwrap() - 0.75).abs() < 1e-15);
        assert!(ks_similarity(&[], &[1.0]).is_err());
    }

    #[test]
    fn ks_handles_ties_and_unequal_sizes() {
        // F0 jumps to 1 at 0; Fi is 1/3 at 0 and 1 at 1 -> sup gap 2/3
        let s = ks_similarity(&[0.0, 0.0], &[0.0, 1.0, 1.0]).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn shape_reduces_to_tv_for_single_categorical_feature() {
        let w0 = seq(&[0, 0, 1, 2]).events;
        let w1 = seq(&[0, 1, 1, 1]).events;
        let tv = tv_similarity(&dist(&[0.5, 0.25, 0.25]), &dist(&[0.25, 0.75, 0.0])).unwrap();
        assert!((shape_score(&w0, &w1, CAT).unwrap() - tv).abs() < 1e-15);
        assert_eq!(shape_score(&w0, &w0, CAT).unwrap(), 1.0);
    }

    #[test]
    fn shape_averages_features() {
        let mk = |cats: &[usize], nums: &[f64]| -> Vec<Event> {
            cats.iter()
                .zip(nums)
                .enumerate()
                .map(|(t, (&c, &x))| Event {
                    timestamp: t as f64,
                    category: c,
                    numeric: vec![x],
                })
                .collect()
        };
        let kinds = [FeatureKind::Categorical, FeatureKind::Numeric];
        // categorical: (0.8, 0.2) vs (0.6, 0.4) -> TV 0.2 -> 0.8
        // numeric: KS of {1..5} vs {1,2,3,9,9}: gap 0.4 on [3,..) -> 0.6
        let a = mk(&[0, 0, 0, 0, 1], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = mk(&[0, 0, 0, 1, 1], &[1.0, 2.0, 3.0, 9.0, 9.0]);
        assert!((shape_score(&a, &b, &kinds).unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(shape_score(&a, &b, CAT), Err(Error::Schema(_))));
    }

    #[test]
    fn drift_curve_counts_and_values() {
        let spec = WindowSpec::new(64, 32).unwrap();
        let c = drift_curve(&seq(&[3; 100]), &spec, CAT).unwrap();
        assert_eq!(c.values, [1.0, 1.0]);

        let mut cats = vec![0; 50];
        cats.extend([1; 50]);
        let c = drift_curve(&seq(&cats), &WindowSpec::new(50, 50).unwrap(), CAT).unwrap();
        assert_eq!(c.values, [1.0, 0.0]);

        assert!(drift_curve(&seq(&[0; 10]), &spec, CAT).is_err());
    }

    #[test]
    fn window_spec_validation() {
        assert!(WindowSpec::new(0, 1).is_err());
        assert!(WindowSpec::new(4, 5).is_err());
        assert!(WindowSpec::new(4, 0).is_err());
        assert_eq!(WindowSpec::new(64, 32).unwrap().count(100), 2);
    }

    #[test]
    fn staticity_of_constant_sequence_is_one() {
        let spec = WindowSpec::new(8, 4).unwrap();
        for s in 0..5 {
            assert_eq!(staticity_sequence(&seq(&[1; 40]), &spec, CAT, 3, s).unwrap(), 1.0);
        }
    }

    #[test]
    fn staticity_is_seed_deterministic() {
        let cats: Vec<usize> = (0..120).map(|i| (i * i / 7) % 4).collect();
        let spec = WindowSpec::new(16, 8).unwrap();
        let a = staticity_sequence(&seq(&cats), &spec, CAT, 3, 42).unwrap();
        assert_eq!(a, staticity_sequence(&seq(&cats), &spec, CAT, 3, 42).unwrap());
    }

    #[test]
    fn all_anchor_staticity_matches_pairwise_oracle() {
        let cats: Vec<usize> = (0..90).map(|i| (i * 7 + i / 13) % 5).collect();
        let s = seq(&cats);
        let spec = WindowSpec::new(20, 10).unwrap();
        let n = spec.count(s.len());
        // brute force: explicit windows, explicit empirical distributions, 1 - TV
        let wins: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut h = vec![0.0; 5];
                for &c in &cats[i * 10..i * 10 + 20] {
                    h[c] += 1.0 / 20.0;
                }
                h
            })
            .collect();
        let mut total = 0.0;
        for a in &wins {
            for b in &wins {
                total += 1.0 - 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
            }
        }
        let oracle = total / (n * n) as f64;
        let all: Vec<usize> = (0..n).collect();
        let got = staticity_with_anchors(&s, &spec, CAT, &all).unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }

    #[test]
    fn staticity_dataset_mean_and_skips() {
        let vocab = Vocabulary::from_labels(["a", "b"]);
        let d = Dataset::new(
            vec![
                EventSequence::from_categories("x", &[0; 30]),
                EventSequence::from_categories("y", &[1; 5]),
            ],
            vocab.clone(),
        );
        let st = staticity_dataset(&d, &WindowSpec::new(10, 5).unwrap(), 3, 1).unwrap();
        assert_eq!((st.index, st.included, st.skipped), (1.0, 1, 1));

        let short = Dataset::new(vec![EventSequence::from_categories("y", &[1; 5])], vocab);
        assert!(staticity_dataset(&short, &WindowSpec::new(10, 5).unwrap(), 3, 1).is_err());
    }

    #[test]
    fn staticity_dataset_averages_sequences() {
        // first: window profiles (1,0),(0,1) -> all-anchor mean 0.5
        // second: constant -> 1
        let spec = WindowSpec::new(2, 2).unwrap();
        let a = seq(&[0, 0, 1, 1]);
        let s0 = staticity_with_anchors(&a, &spec, CAT, &[0, 1]).unwrap();
        assert_eq!(s0, 0.5);
        let d = Dataset::new(
            vec![
                EventSequence::from_categories("a", &[0, 0, 0, 0]),
                EventSequence::from_categories("b", &[1, 1, 1, 1]),
            ],
            Vocabulary::from_labels(["a", "b"]),
        );
        assert_eq!(staticity_dataset(&d, &spec, 3, 0).unwrap().index, 1.0);
    }

    #[test]
    fn decay_fit_recovers_lambda() {
        let freqs: Vec<f64> = (0..20).map(|r| (-0.3 * r as f64).exp()).collect();
        let lambda = fit_decay_lambda_from_frequencies(&freqs).unwrap();
        assert!((lambda - 0.3).abs() < 1e-6, "{lambda}");
        assert_eq!(fit_decay_lambda_from_frequencies(&[5.0; 10]).unwrap(), 0.0);
        assert!(fit_decay_lambda_from_frequencies(&[1.0]).is_err());
        // zero tail excluded
        let mut f = freqs.clone();
        f.extend([0.0; 5]);
        assert!((fit_decay_lambda_from_frequencies(&f).unwrap() - 0.3).abs() < 1e-6);
    }

    #[test]
    fn summary_fields() {
        let d = Dataset::new(
            vec![
                EventSequence::from_categories("a", &[0; 10]),
                EventSequence::from_categories("b", &[1; 30]),
            ],
            Vocabulary::from_labels(["a", "b"]),
        );
        let s = dataset_summary(&d, &WindowSpec::new(5, 5).unwrap(), 3, 9).unwrap();
        assert_eq!(s.mean_len, 20.0);
        assert_eq!(s.tcd, 2);
        assert_eq!(s.staticity, 1.0);
        assert!(s.ppl_ratio.is_none());
        assert_eq!(s, dataset_summary(&d, &WindowSpec::new(5, 5).unwrap(), 3, 9).unwrap());

        let constant = Dataset::new(
            vec![EventSequence::from_categories("a", &[0; 10])],
            Vocabulary::from_labels(["a"]),
        );
        assert!(fit_decay_lambda(&constant).is_err());
        let s = dataset_summary(&constant, &WindowSpec::new(5, 5).unwrap(), 3, 9).unwrap();
        assert_eq!((s.staticity, s.lambda), (1.0, 0.0));
    }
}
