//! Decoders that turn a trained model into a length-N forecast, and the
//! reference baselines.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{argmax, counts, softmax, CategoricalDistribution, ForecastTask};
use crate::error::{Error, Result};
use crate::micronet::{self, ModelParameters, Objective, Stepper};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forecast {
    pub tokens: Vec<usize>,
    /// Method tag, e.g. `ntp/greedy` or `baseline/mode`.
    pub method: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// Decoder applied to a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    Greedy,
    Sample,
    /// Largest-remainder counts from a single predicted distribution.
    Hamilton,
}

impl Decoder {
    pub const ALL: [Decoder; 3] = [Decoder::Greedy, Decoder::Sample, Decoder::Hamilton];

    pub fn name(&self) -> &'static str {
        match self {
            Decoder::Greedy => "greedy",
            Decoder::Sample => "sample",
            Decoder::Hamilton => "hamilton",
        }
    }
}

impl std::str::FromStr for Decoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Decoder::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown decoder {s:?}")))
    }
}

/// Order in which [`decode_dist`] emits the apportioned multiset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionOrder {
    #[default]
    Random,
    Sorted,
    RoundRobin,
}

pub(crate) fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in rounding slack at the top; take the last category with mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn pick(logits: &[f64], mode: DecodeMode, rng: &mut Rng) -> usize {
    match mode {
        DecodeMode::Greedy => argmax(logits),
        DecodeMode::Sample => sample_categorical(&softmax(logits), rng),
    }
}

/// Generates `n` tokens, feeding each emitted token back into the model.
pub fn decode_autoregressive(
    params: &ModelParameters,
    prefix: &[usize],
    n: usize,
    mode: DecodeMode,
    seed: u64,
) -> Result<Vec<usize>> {
    if prefix.is_empty() {
        return Err(Error::Empty("decoding needs a non-empty prefix"));
    }
    let mut rng = seed::rng(seed);
    let mut st = Stepper::new(params);
    for &x in prefix {
        st.feed(x)?;
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = pick(&st.next_logits(), mode, &mut rng);
        out.push(x);
        if i + 1 < n {
            st.feed(x)?;
        }
    }
    Ok(out)
}

/// Per-position argmax or draw from each row of the block head.
pub fn decode_block(params: &ModelParameters, prefix: &[usize], n: usize, mode: DecodeMode, seed: u64) -> Result<Vec<usize>> {
    let logits = micronet::forward_block_logits(params, prefix, n)?;
    let mut rng = seed::rng(seed);
    Ok((0..n).map(|i| pick(logits.row(i), mode, &mut rng)).collect())
}

/// Largest-remainder apportionment of `total` slots: floor every quota
/// `total * pi_k`, then hand the remaining slots to the largest fractional
/// parts (lower index first on ties).
pub fn hamilton_counts(pi: &CategoricalDistribution, total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = pi.probs().iter().map(|p| p * total as f64).collect();
    let mut out: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let rem: Vec<f64> = quotas.iter().zip(&out).map(|(q, &f)| q - f as f64).collect();
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| rem[b].total_cmp(&rem[a]).then(a.cmp(&b)));
    let assigned: usize = out.iter().sum();
    if assigned <= total {
        for &k in order.iter().take(total - assigned) {
            out[k] += 1;
        }
    } else {
        // only reachable when the probabilities sum slightly above one
        let mut excess = assigned - total;
        for &k in order.iter().rev() {
            if excess > 0 && out[k] > 0 {
                out[k] -= 1;
                excess -= 1;
            }
        }
    }
    out
}

/// Emits the apportioned multiset of `n` tokens.
pub fn decode_dist(pi: &CategoricalDistribution, n: usize, seed: u64) -> Vec<usize> {
    decode_dist_ordered(pi, n, EmissionOrder::Random, seed)
}

pub fn decode_dist_ordered(pi: &CategoricalDistribution, n: usize, order: EmissionOrder, seed: u64) -> Vec<usize> {
    let c = hamilton_counts(pi, n);
    match order {
        EmissionOrder::Sorted | EmissionOrder::Random => {
            let mut out: Vec<usize> = c
                .iter()
                .enumerate()
                .flat_map(|(k, &m)| std::iter::repeat_n(k, m))
                .collect();
            if order == EmissionOrder::Random {
                out.shuffle(&mut seed::rng(seed));
            }
            out
        }
        EmissionOrder::RoundRobin => {
            let mut left = c;
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                for (k, m) in left.iter_mut().enumerate() {
                    if *m > 0 {
                        *m -= 1;
                        out.push(k);
                    }
                }
            }
            out
        }
    }
}

/// Forecast from a model trained on `objective` with the given decoder.
///
/// Greedy and sampled decoding use the head the objective trained: the step
/// head autoregressively for `ntp`/`uniform`, the block rows for
/// `target`/`matched`, and the distribution head (argmax repeated, or i.i.d.
/// draws) for `dist`. Hamilton decoding apportions a single distribution: the
/// distribution head, the first-step distribution, or the mean block row.
pub fn model_forecast(
    params: &ModelParameters,
    objective: Objective,
    decoder: Decoder,
    prefix: &[usize],
    n: usize,
    seed: u64,
) -> Result<Forecast> {
    let method = format!("{}/{}", objective.name(), decoder.name());
    let mode = match decoder {
        Decoder::Sample => DecodeMode::Sample,
        _ => DecodeMode::Greedy,
    };
    let tokens = match (objective, decoder) {
        (Objective::Ntp | Objective::Uniform, Decoder::Greedy | Decoder::Sample) => {
            decode_autoregressive(params, prefix, n, mode, seed)?
        }
        (Objective::Target | Objective::Matched, Decoder::Greedy | Decoder::Sample) => {
            decode_block(params, prefix, n, mode, seed)?
        }
        (Objective::Dist, Decoder::Greedy) => {
            vec![micronet::forward_dist(params, prefix)?.argmax(); n]
        }
        (Objective::Dist, Decoder::Sample) => {
            let pi = micronet::forward_dist(params, prefix)?;
            let mut rng = seed::rng(seed);
            (0..n).map(|_| sample_categorical(pi.probs(), &mut rng)).collect()
        }
        (_, Decoder::Hamilton) => {
            let pi = single_distribution(params, objective, prefix, n)?;
            decode_dist(&pi, n, seed)
        }
    };
    Ok(Forecast { tokens, method })
}

fn single_distribution(params: &ModelParameters, objective: Objective, prefix: &[usize], n: usize) -> Result<CategoricalDistribution> {
    match objective {
        Objective::Dist => micronet::forward_dist(params, prefix),
        Objective::Ntp | Objective::Uniform => {
            let m = micronet::forward_step_logits(params, prefix)?;
            Ok(CategoricalDistribution::from_logits(m.row(m.rows - 1)))
        }
        Objective::Target | Objective::Matched => {
            let m = micronet::forward_block_logits(params, prefix, n)?;
            let mut mean = vec![0.0; m.cols];
            for i in 0..m.rows {
                for (a, p) in mean.iter_mut().zip(softmax(m.row(i))) {
                    *a += p / m.rows as f64;
                }
            }
            let s: f64 = mean.iter().sum();
            mean.iter_mut().for_each(|p| *p /= s);
            CategoricalDistribution::new(mean)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// The ground-truth horizon itself.
    Gt,
    /// The prefix's most frequent category, repeated.
    Mode,
    /// The most recent prefix events, copied forward.
    Repeat,
    /// I.i.d. draws from the prefix histogram.
    Hist,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [BaselineKind::Gt, BaselineKind::Mode, BaselineKind::Repeat, BaselineKind::Hist];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Gt => "gt",
            BaselineKind::Mode => "mode",
            BaselineKind::Repeat => "repeat",
            BaselineKind::Hist => "hist",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline {s:?}")))
    }
}

/// Baseline forecast of `task.horizon_len()` tokens.
pub fn baseline_forecast(kind: BaselineKind, task: &ForecastTask<'_>, seed: u64) -> Result<Forecast> {
    baseline_forecast_smoothed(kind, task, None, seed)
}

/// As [`baseline_forecast`]; `laplace = Some((alpha, k))` adds `alpha` pseudo
/// counts to each of `k` categories in the histogram sampler.
pub fn baseline_forecast_smoothed(
    kind: BaselineKind,
    task: &ForecastTask<'_>,
    laplace: Option<(f64, usize)>,
    seed: u64,
) -> Result<Forecast> {
    let n = task.horizon_len();
    let prefix = task.prefix_categories();
    if kind != BaselineKind::Gt && prefix.is_empty() {
        return Err(Error::Empty("baseline needs a non-empty prefix"));
    }
    let tokens = match kind {
        BaselineKind::Gt => task.horizon_categories(),
        BaselineKind::Mode => {
            let k = prefix.iter().max().map_or(0, |m| m + 1);
            let c = counts(&prefix, k)?;
            let best = (0..k).fold(0, |b, i| if c[i] > c[b] { i } else { b });
            vec![best; n]
        }
        BaselineKind::Repeat => {
            if prefix.len() >= n {
                prefix[prefix.len() - n..].to_vec()
            } else {
                prefix.iter().cycle().take(n).copied().collect()
            }
        }
        BaselineKind::Hist => {
            let mut rng = seed::rng(seed);
            match laplace {
                None => (0..n).map(|_| prefix[rng.random_range(0..prefix.len())]).collect(),
                Some((alpha, k)) => {
                    let mut w: Vec<f64> = vec![alpha; k];
                    for &x in &prefix {
                        *w.get_mut(x).ok_or(Error::CategoryOutOfRange { index: x, size: k })? += 1.0;
                    }
                    (0..n).map(|_| sample_categorical(&w, &mut rng)).collect()
                }
            }
        }
    };
    Ok(Forecast {
        tokens,
        method: format!("baseline/{}", kind.name()),
    })
}
