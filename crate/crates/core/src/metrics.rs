//! Order-free set metrics, diversity, edit distance and perplexity.

use serde::{Deserialize, Serialize};

use crate::data::{counts, log_softmax, EventSequence, ForecastTask};
use crate::error::{Error, Result};
use crate::micronet::{self, ModelParameters};
use crate::perturb::{local_shuffle, ShuffleSpec};
use crate::seed;

/// Per-class multiset-matching counts, summed over any number of pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
}

impl ClassCounts {
    pub fn new(k: usize) -> Self {
        ClassCounts {
            tp: vec![0; k],
            fp: vec![0; k],
            fn_: vec![0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.tp.len()
    }

    pub fn merge(&mut self, other: &ClassCounts) -> Result<()> {
        if other.k() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                got: other.k(),
            });
        }
        for c in 0..self.k() {
            self.tp[c] += other.tp[c];
            self.fp[c] += other.fp[c];
            self.fn_[c] += other.fn_[c];
        }
        Ok(())
    }

    pub fn totals(&self) -> (usize, usize, usize) {
        (self.tp.iter().sum(), self.fp.iter().sum(), self.fn_.iter().sum())
    }
}

/// Counts for one (ground truth, prediction) pair: `TP_c = min(g_c, p_c)`.
pub fn matched_counts(gt: &[usize], pred: &[usize], k: usize) -> Result<ClassCounts> {
    if gt.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            got: pred.len(),
        });
    }
    let g = counts(gt, k)?;
    let p = counts(pred, k)?;
    let mut out = ClassCounts::new(k);
    for c in 0..k {
        let tp = g[c].min(p[c]);
        out.tp[c] = tp;
        out.fp[c] = p[c] - tp;
        out.fn_[c] = g[c] - tp;
    }
    Ok(out)
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let d = 2 * tp + fp + fn_;
    if d == 0 {
        0.0
    } else {
        2.0 * tp as f64 / d as f64
    }
}

/// Micro F1 from pooled counts.
pub fn f1_micro(c: &ClassCounts) -> f64 {
    let (tp, fp, fn_) = c.totals();
    f1(tp, fp, fn_)
}

/// Which classes enter the macro average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroClasses {
    /// Classes present in either the ground truth or the predictions.
    #[default]
    Observed,
    /// Every class of the vocabulary, absent ones scoring 0.
    All,
}

/// Unweighted mean of per-class F1.
pub fn f1_macro(c: &ClassCounts, classes: MacroClasses) -> f64 {
    let scores: Vec<f64> = (0..c.k())
        .filter(|&i| classes == MacroClasses::All || c.tp[i] + c.fp[i] + c.fn_[i] > 0)
        .map(|i| f1(c.tp[i], c.fp[i], c.fn_[i]))
        .collect();
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// Distinct categories per forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cardinality {
    pub mean: f64,
    /// Distinct categories across all forecasts together.
    pub overall: usize,
}

pub fn cardinality(forecasts: &[Vec<usize>]) -> Result<Cardinality> {
    if forecasts.is_empty() {
        return Err(Error::Empty("no forecasts"));
    }
    let distinct = |xs: &mut dyn Iterator<Item = usize>| {
        let mut v: Vec<usize> = xs.collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    let total: usize = forecasts.iter().map(|f| distinct(&mut f.iter().copied())).sum();
    Ok(Cardinality {
        mean: total as f64 / forecasts.len() as f64,
        overall: distinct(&mut forecasts.iter().flatten().copied()),
    })
}

/// Unit-cost edit distance.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (diag + usize::from(x != y)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Aggregate scores of one method over a set of tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: usize,
    pub f1_micro: f64,
    pub f1_macro: f64,
    /// Micro F1 computed per sequence, then averaged.
    pub f1_micro_per_sequence: f64,
    pub cardinality: f64,
    pub cardinality_overall: usize,
    pub gt_cardinality: f64,
    pub levenshtein: f64,
}

pub fn evaluate(gt: &[Vec<usize>], pred: &[Vec<usize>], k: usize, classes: MacroClasses) -> Result<EvalReport> {
    if gt.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::Empty("no tasks to evaluate"));
    }
    let mut pooled = ClassCounts::new(k);
    let mut per_seq = 0.0;
    let mut lev = 0usize;
    for (g, p) in gt.iter().zip(pred) {
        let c = matched_counts(g, p, k)?;
        per_seq += f1_micro(&c);
        pooled.merge(&c)?;
        lev += levenshtein(g, p);
    }
    let n = gt.len() as f64;
    let card = cardinality(pred)?;
    Ok(EvalReport {
        tasks: gt.len(),
        f1_micro: f1_micro(&pooled),
        f1_macro: f1_macro(&pooled, classes),
        f1_micro_per_sequence: per_seq / n,
        cardinality: card.mean,
        cardinality_overall: card.overall,
        gt_cardinality: cardinality(gt)?.mean,
        levenshtein: lev as f64 / n,
    })
}

/// Teacher-forced perplexity of the next-step head over the horizon tokens
/// of every task.
pub fn perplexity(params: &ModelParameters, tasks: &[ForecastTask<'_>]) -> Result<f64> {
    let mut nll = 0.0;
    let mut n = 0usize;
    for task in tasks {
        let p = task.prefix.len();
        if p == 0 {
            return Err(Error::Empty("perplexity needs a non-empty prefix"));
        }
        let mut tokens = task.prefix_categories();
        tokens.extend(task.horizon_categories());
        let logits = micronet::forward_step_logits(params, &tokens[..tokens.len() - 1])?;
        for (t, &x) in tokens.iter().enumerate().skip(p) {
            nll -= log_softmax(logits.row(t - 1))[x];
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no horizon tokens"));
    }
    Ok((nll / n as f64).exp())
}

/// Perplexity on fully shuffled copies of the task sequences divided by the
/// perplexity on the originals. Near 1 means order carries no signal the
/// model uses.
pub fn ppl_shuffle_ratio(params: &ModelParameters, tasks: &[ForecastTask<'_>], seed: u64) -> Result<f64> {
    let shuffled: Vec<(EventSequence, usize)> = tasks
        .iter()
        .map(|t| {
            let whole = EventSequence {
                user_id: t.user_id.to_string(),
                events: t.prefix.iter().chain(t.horizon).cloned().collect(),
            };
            let spec = ShuffleSpec::new(ShuffleSpec::FULL, seed::derive(seed, &["ppl-shuffle", t.user_id]))?;
            Ok((local_shuffle(&whole, &spec)?, t.horizon.len()))
        })
        .collect::<Result<_>>()?;
    let shuffled_tasks: Vec<ForecastTask<'_>> = shuffled
        .iter()
        .map(|(s, n)| crate::data::split_prefix_horizon(s, *n))
        .collect::<Result<_>>()?;
    Ok(perplexity(params, &shuffled_tasks)? / perplexity(params, tasks)?)
}
