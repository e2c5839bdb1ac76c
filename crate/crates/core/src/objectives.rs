//! Training losses and their gradients with respect to head logits, plus the
//! band-limited assignment solver behind the matched loss.
//!
//! Summed losses add their per-token terms in ascending order, so two
//! assignments that select the same multiset of terms report bit-identical
//! values regardless of which rows they pair up.

use serde::{Deserialize, Serialize};

use crate::data::{log_softmax, softmax, CategoricalDistribution};
use crate::error::{Error, Result};
use crate::micronet::Matrix;

/// Cost placed on assignments outside the matching band.
pub const BAND_SENTINEL: f64 = 1e12;

fn stable_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

fn check_shape(logits: &Matrix, targets: &[usize]) -> Result<()> {
    if logits.rows != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: logits.rows,
            got: targets.len(),
        });
    }
    if let Some(&x) = targets.iter().find(|&&x| x >= logits.cols) {
        return Err(Error::CategoryOutOfRange {
            index: x,
            size: logits.cols,
        });
    }
    Ok(())
}

/// Per-row negative log-likelihoods of `targets`.
fn row_nll(logits: &Matrix, targets: &[usize]) -> Vec<f64> {
    targets
        .iter()
        .enumerate()
        .map(|(t, &x)| -log_softmax(logits.row(t))[x])
        .collect()
}

/// `dL/dlogits` of `scale * sum_t -log softmax(row t)[target t]`.
fn ce_grad(logits: &Matrix, targets: &[usize], scale: f64) -> Matrix {
    let mut g = Matrix::zeros(logits.rows, logits.cols);
    for (t, &x) in targets.iter().enumerate() {
        let row = g.row_mut(t);
        row.copy_from_slice(&softmax(logits.row(t)));
        row[x] -= 1.0;
        row.iter_mut().for_each(|v| *v *= scale);
    }
    g
}

/// Mean next-token cross-entropy.
pub fn ntp_loss(step_logits: &Matrix, targets: &[usize]) -> Result<f64> {
    Ok(ntp_loss_grad(step_logits, targets)?.0)
}

pub fn ntp_loss_grad(step_logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    check_shape(step_logits, targets)?;
    if targets.is_empty() {
        return Err(Error::Empty("next-token loss over zero positions"));
    }
    let n = targets.len() as f64;
    let loss = stable_sum(row_nll(step_logits, targets)) / n;
    Ok((loss, ce_grad(step_logits, targets, 1.0 / n)))
}

/// Summed block cross-entropy at the ground-truth order.
pub fn target_loss(block_logits: &Matrix, horizon: &[usize]) -> Result<f64> {
    check_shape(block_logits, horizon)?;
    Ok(stable_sum(row_nll(block_logits, horizon)))
}

/// [`target_loss`] divided by the horizon length.
pub fn target_loss_mean(block_logits: &Matrix, horizon: &[usize]) -> Result<f64> {
    if horizon.is_empty() {
        return Err(Error::Empty("block loss over zero positions"));
    }
    Ok(target_loss(block_logits, horizon)? / horizon.len() as f64)
}

pub fn target_loss_grad(block_logits: &Matrix, horizon: &[usize]) -> Result<(f64, Matrix)> {
    let loss = target_loss(block_logits, horizon)?;
    Ok((loss, ce_grad(block_logits, horizon, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `assignment[i]` is the prediction row matched to target `i`.
    pub assignment: Vec<usize>,
    /// Sum of matched costs taken in target order.
    pub cost: f64,
}

/// Cost matrix `cost[i][j] = -log p_j(x_i)` for target `i` and block row `j`.
pub fn match_costs(block_logits: &Matrix, horizon: &[usize]) -> Result<Matrix> {
    check_shape(block_logits, horizon)?;
    let n = horizon.len();
    let logp: Vec<Vec<f64>> = (0..n).map(|j| log_softmax(block_logits.row(j))).collect();
    let mut c = Matrix::zeros(n, n);
    for (i, &x) in horizon.iter().enumerate() {
        for (j, lp) in logp.iter().enumerate() {
            c.row_mut(i)[j] = -lp[x];
        }
    }
    Ok(c)
}

/// Block cross-entropy minimised over permutations with `|sigma(i) - i| <= band`.
pub fn matched_loss(block_logits: &Matrix, horizon: &[usize], band: usize) -> Result<(f64, MatchResult)> {
    let (loss, _, m) = matched_loss_grad(block_logits, horizon, band)?;
    Ok((loss, m))
}

/// Matched loss, its logit gradient (flowing only through matched pairs), and
/// the assignment.
pub fn matched_loss_grad(block_logits: &Matrix, horizon: &[usize], band: usize) -> Result<(f64, Matrix, MatchResult)> {
    if horizon.is_empty() {
        return Err(Error::Empty("matched loss over zero positions"));
    }
    let costs = match_costs(block_logits, horizon)?;
    let m = hungarian_band(&costs, band)?;
    let loss = stable_sum(
        m.assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| costs.row(i)[j])
            .collect(),
    );
    // each block row j is scored against the target matched to it
    let mut row_targets = vec![0usize; horizon.len()];
    for (i, &j) in m.assignment.iter().enumerate() {
        row_targets[j] = horizon[i];
    }
    let grad = ce_grad(block_logits, &row_targets, 1.0);
    Ok((loss, grad, m))
}

/// KL divergence `D(p_hat || pi)` with `0 ln 0 = 0`.
pub fn dist_kl_loss(pi: &CategoricalDistribution, p_hat: &CategoricalDistribution) -> Result<f64> {
    if pi.k() != p_hat.k() {
        return Err(Error::DimensionMismatch {
            expected: p_hat.k(),
            got: pi.k(),
        });
    }
    let mut terms = Vec::with_capacity(pi.k());
    for (&q, &p) in pi.probs().iter().zip(p_hat.probs()) {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Err(Error::InvalidDistribution(
                "predicted probability is zero where the target has mass".into(),
            ));
        }
        terms.push(p * (p.ln() - q.ln()));
    }
    Ok(terms.into_iter().sum())
}

/// KL loss from head logits; the gradient is `softmax(logits) - p_hat`.
pub fn dist_kl_loss_grad(logits: &[f64], p_hat: &CategoricalDistribution) -> Result<(f64, Vec<f64>)> {
    if logits.len() != p_hat.k() {
        return Err(Error::DimensionMismatch {
            expected: p_hat.k(),
            got: logits.len(),
        });
    }
    let logq = log_softmax(logits);
    let loss = p_hat
        .probs()
        .iter()
        .zip(&logq)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &lq)| p * (p.ln() - lq))
        .sum();
    let grad = softmax(logits)
        .iter()
        .zip(p_hat.probs())
        .map(|(q, p)| q - p)
        .collect();
    Ok((loss, grad))
}

/// Mean negative log-likelihood of every window token under one distribution.
pub fn horizon_uniform_loss(logits: &[f64], window: &[usize]) -> Result<f64> {
    Ok(horizon_uniform_loss_grad(logits, window)?.0)
}

pub fn horizon_uniform_loss_grad(logits: &[f64], window: &[usize]) -> Result<(f64, Vec<f64>)> {
    if window.is_empty() {
        return Err(Error::Empty("horizon-uniform loss over an empty window"));
    }
    let k = logits.len();
    let p_hat = crate::data::empirical_distribution(window, k)?;
    let logq = log_softmax(logits);
    let loss = stable_sum(window.iter().map(|&x| -logq[x]).collect()) / window.len() as f64;
    let grad = softmax(logits)
        .iter()
        .zip(p_hat.probs())
        .map(|(q, p)| q - p)
        .collect();
    Ok((loss, grad))
}

/// Minimum-cost assignment with `|sigma(i) - i| <= band`. Among optimal
/// assignments the lexicographically smallest is returned.
pub fn hungarian_band(cost: &Matrix, band: usize) -> Result<MatchResult> {
    let n = cost.rows;
    if n == 0 {
        return Err(Error::Empty("assignment over an empty cost matrix"));
    }
    if cost.cols != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cost.cols,
        });
    }
    let in_band = |i: usize, j: usize| i.abs_diff(j) <= band;
    let mut scale: f64 = 1.0;
    for i in 0..n {
        for j in 0..n {
            let c = cost.row(i)[j];
            if in_band(i, j) {
                if !c.is_finite() {
                    return Err(Error::NonFinite(format!("cost[{i}][{j}] = {c}")));
                }
                scale = scale.max(c.abs());
            }
        }
    }
    let a = |i: usize, j: usize| {
        if in_band(i, j) {
            cost.row(i)[j]
        } else {
            BAND_SENTINEL
        }
    };

    // Shortest-augmenting-path Hungarian with row potentials u and column
    // potentials v (1-based; index 0 is the virtual root column).
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    if assignment.iter().enumerate().any(|(i, &j)| !in_band(i, j)) {
        unreachable!("identity is feasible, so an optimal assignment stays in band");
    }

    // Every optimal assignment uses only edges that are tight under optimal
    // potentials, so the lexicographic minimum can be found there.
    let tol = 1e-9 * scale;
    let tight = |i: usize, j: usize| in_band(i, j) && a(i, j) - u[i + 1] - v[j + 1] <= tol;
    let canonical = lex_smallest(n, &assignment, tight);
    let terms = |asg: &[usize]| -> Vec<f64> { asg.iter().enumerate().map(|(i, &j)| a(i, j)).collect() };
    if stable_sum(terms(&canonical)) <= stable_sum(terms(&assignment)) {
        assignment = canonical;
    }
    let cost = terms(&assignment).into_iter().sum();
    Ok(MatchResult { assignment, cost })
}

/// Lexicographically smallest perfect matching in the graph `edge`, starting
/// from the perfect matching `start`.
fn lex_smallest(n: usize, start: &[usize], edge: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut asg = start.to_vec();
    let mut owner = vec![0usize; n];
    for (i, &j) in asg.iter().enumerate() {
        owner[j] = i;
    }
    for i in 0..n {
        for j in 0..asg[i] {
            if !edge(i, j) || owner[j] < i {
                continue;
            }
            // Give column j to row i; its current owner must reach the column
            // row i releases through an alternating path over unfixed rows.
            let target = asg[i];
            let from = owner[j];
            let mut prev_row = vec![usize::MAX; n];
            let mut seen_col = vec![false; n];
            seen_col[j] = true;
            let mut queue = std::collections::VecDeque::from([from]);
            let mut found = None;
            'bfs: while let Some(r) = queue.pop_front() {
                for c in 0..n {
                    if seen_col[c] || !edge(r, c) {
                        continue;
                    }
                    if c == target {
                        prev_row[c] = r;
                        found = Some(c);
                        break 'bfs;
                    }
                    let o = owner[c];
                    if o <= i {
                        continue;
                    }
                    seen_col[c] = true;
                    prev_row[c] = r;
                    queue.push_back(o);
                }
            }
            if let Some(mut c) = found {
                // walk back: each row on the path takes the column it reached
                loop {
                    let r = prev_row[c];
                    let old = asg[r];
                    asg[r] = c;
                    owner[c] = r;
                    if r == from {
                        break;
                    }
                    c = old;
                }
                asg[i] = j;
                owner[j] = i;
                break;
            }
        }
    }
    asg
}
