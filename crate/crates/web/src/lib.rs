//! WebAssembly bindings for the browser demo. Every export takes plain
//! numbers or strings and returns a JSON string; failures come back as
//! `{"error": "..."}`.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use seqdist::data::{counts, CategoricalDistribution, EventSequence};
use seqdist::diagnostics::{self, FeatureKind, WindowSpec};
use seqdist::forecast;
use seqdist::perturb::{shuffle_permutation, ShuffleSpec};
use seqdist::synth::{self, SynthKind, SynthSpec};

fn respond<T: Serialize>(r: Result<T, seqdist::Error>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn parse_probs(text: &str) -> Result<CategoricalDistribution, seqdist::Error> {
    let raw: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| seqdist::Error::Config(format!("bad probability list: {e}")))?;
    let total: f64 = raw.iter().sum();
    if total.is_nan() || total <= 0.0 || raw.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(seqdist::Error::Config("weights must be non-negative with a positive sum".into()));
    }
    CategoricalDistribution::new(raw.iter().map(|p| p / total).collect())
}

#[derive(Serialize)]
struct Apportionment {
    probs: Vec<f64>,
    quotas: Vec<f64>,
    hamilton: Vec<usize>,
    greedy: Vec<usize>,
    sampled: Vec<usize>,
    sequence: Vec<usize>,
}

/// Compares the counts that a repeated argmax, i.i.d. sampling and
/// largest-remainder apportionment give for the same distribution.
/// `weights` is a comma-separated list; it is normalised first.
#[wasm_bindgen]
pub fn apportion(weights: &str, n: usize, seed: u32) -> String {
    respond(parse_probs(weights).and_then(|pi| {
        let k = pi.k();
        let sequence = forecast::decode_dist(&pi, n, u64::from(seed));
        let draws = synth::generate(
            &SynthSpec {
                kind: SynthKind::Exchangeable,
                users: 1,
                length: n.max(1),
                probs: pi.probs().to_vec(),
                ..SynthSpec::default()
            },
            u64::from(seed),
        )?;
        let mut sampled = counts(&draws.sequences[0].categories(), k)?;
        if n == 0 {
            sampled = vec![0; k];
        }
        let mut greedy = vec![0; k];
        greedy[pi.argmax()] = n;
        Ok(Apportionment {
            quotas: pi.probs().iter().map(|p| p * n as f64).collect(),
            hamilton: forecast::hamilton_counts(&pi, n),
            probs: pi.probs().to_vec(),
            greedy,
            sampled,
            sequence,
        })
    }))
}

#[derive(Serialize)]
struct DriftView {
    categories: Vec<usize>,
    curve: Vec<f64>,
    staticity: f64,
}

/// Generates one synthetic sequence and returns its drift curve and
/// staticity. `kind` is `exchangeable`, `markov`, `drift` or `cycle`.
#[wasm_bindgen]
pub fn drift(kind: &str, length: usize, window: usize, stride: usize, seed: u32) -> String {
    respond((|| {
        let spec = SynthSpec {
            kind: kind.parse()?,
            users: 1,
            length,
            ..SynthSpec::default()
        };
        let seq: EventSequence = synth::generate(&spec, u64::from(seed))?.sequences.remove(0);
        let w = WindowSpec::new(window, stride)?;
        let kinds = [FeatureKind::Categorical];
        let curve = diagnostics::drift_curve(&seq, &w, &kinds)?;
        let staticity = diagnostics::staticity_sequence(&seq, &w, &kinds, diagnostics::DEFAULT_ANCHORS, u64::from(seed))?;
        Ok(DriftView {
            categories: seq.categories(),
            curve: curve.values,
            staticity,
        })
    })())
}

#[derive(Serialize)]
struct ShuffleView {
    permutation: Vec<usize>,
    displacement: Vec<usize>,
    mean_displacement: f64,
    max_displacement: usize,
}

/// The bounded-swap shuffle of `0..length` with width `w` (`-1` = full).
#[wasm_bindgen]
pub fn shuffle(length: usize, w: i32, seed: u32) -> String {
    respond(ShuffleSpec::new(i64::from(w), u64::from(seed)).map(|spec| {
        let permutation = shuffle_permutation(length, &spec);
        let displacement: Vec<usize> = permutation.iter().enumerate().map(|(t, &s)| t.abs_diff(s)).collect();
        ShuffleView {
            mean_displacement: displacement.iter().sum::<usize>() as f64 / length.max(1) as f64,
            max_displacement: displacement.iter().copied().max().unwrap_or(0),
            permutation,
            displacement,
        }
    }))
}
