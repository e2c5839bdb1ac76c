//! A small embedding -> GRU -> linear-head network with hand-written
//! reverse-mode gradients. All parameters live in one flat `f64` vector so the
//! optimiser and the finite-difference checker can treat the model as a point
//! in R^n.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CategoricalDistribution, Dataset};
use crate::error::{Error, Result};
use crate::objectives;
use crate::seed;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Vocabulary size.
    pub k: usize,
    pub embed: usize,
    pub hidden: usize,
    /// Rows produced by the block head.
    pub horizon: usize,
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone)]
struct Layout {
    emb: Range<usize>,
    wz: Range<usize>,
    wr: Range<usize>,
    wh: Range<usize>,
    uz: Range<usize>,
    ur: Range<usize>,
    uh: Range<usize>,
    bz: Range<usize>,
    br: Range<usize>,
    bh: Range<usize>,
    ar_w: Range<usize>,
    ar_b: Range<usize>,
    blk_w: Range<usize>,
    blk_b: Range<usize>,
    dist_w: Range<usize>,
    dist_b: Range<usize>,
    total: usize,
}

impl Layout {
    fn new(d: &Dims) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let (k, e, h, n) = (d.k, d.embed, d.hidden, d.horizon);
        let emb = take(k * e);
        let wz = take(h * e);
        let wr = take(h * e);
        let wh = take(h * e);
        let uz = take(h * h);
        let ur = take(h * h);
        let uh = take(h * h);
        let bz = take(h);
        let br = take(h);
        let bh = take(h);
        let ar_w = take(k * h);
        let ar_b = take(k);
        let blk_w = take(n * k * h);
        let blk_b = take(n * k);
        let dist_w = take(k * h);
        let dist_b = take(k);
        Layout {
            emb,
            wz,
            wr,
            wh,
            uz,
            ur,
            uh,
            bz,
            br,
            bh,
            ar_w,
            ar_b,
            blk_w,
            blk_b,
            dist_w,
            dist_b,
            total: at,
        }
    }

    fn biases(&self) -> [&Range<usize>; 6] {
        [&self.bz, &self.br, &self.bh, &self.ar_b, &self.blk_b, &self.dist_b]
    }
}

/// Embedding table, GRU weights, and the three output heads (per-step,
/// block, and single-distribution).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    dims: Dims,
    data: Vec<f64>,
}

impl ModelParameters {
    pub fn zeros(dims: Dims) -> Self {
        let n = Layout::new(&dims).total;
        ModelParameters {
            dims,
            data: vec![0.0; n],
        }
    }

    /// Weights uniform in `±1/sqrt(hidden)`, biases zero.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let layout = Layout::new(&dims);
        let bound = 1.0 / (dims.hidden as f64).sqrt();
        let mut rng = seed::rng(seed);
        let mut data: Vec<f64> = (0..layout.total)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        for r in layout.biases() {
            data[r.clone()].iter_mut().for_each(|x| *x = 0.0);
        }
        ModelParameters { dims, data }
    }

    pub fn from_flat(dims: Dims, data: Vec<f64>) -> Result<Self> {
        let n = Layout::new(&dims).total;
        if data.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: data.len(),
            });
        }
        Ok(ModelParameters { dims, data })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.dims)
    }

    /// Bias of the next-step head, for building hand-set models in tests.
    #[cfg(test)]
    pub(crate) fn ar_bias_mut(&mut self) -> &mut [f64] {
        let r = self.layout().ar_b;
        &mut self.data[r]
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&x| x >= self.dims.k) {
            Some(&x) => Err(Error::CategoryOutOfRange {
                index: x,
                size: self.dims.k,
            }),
            None => Ok(()),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += W x` for a row-major `W` with `out.len()` rows.
fn gemv_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W^T y` for a row-major `W` with `y.len()` rows.
fn gemv_t_acc(w: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (&yi, row) in y.iter().zip(w.chunks_exact(cols)) {
        if yi != 0.0 {
            out.iter_mut().zip(row).for_each(|(o, a)| *o += yi * a);
        }
    }
}

/// `G += y x^T`.
fn outer_acc(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&yi, row) in y.iter().zip(g.chunks_exact_mut(cols)) {
        if yi != 0.0 {
            row.iter_mut().zip(x).for_each(|(a, b)| *a += yi * b);
        }
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    x: usize,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
}

/// Hidden states of the encoder over a token sequence, with everything the
/// backward pass needs.
#[derive(Debug, Clone)]
pub struct Trace {
    steps: Vec<StepCache>,
    /// `states[t]` is the hidden state after consuming token `t`.
    states: Vec<Vec<f64>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trace of a non-empty prefix")
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t]
    }
}

fn gru_step(p: &ModelParameters, l: &Layout, h_prev: &[f64], x: usize) -> StepCache {
    let (e, hd) = (p.dims.embed, p.dims.hidden);
    let d = &p.data;
    let emb = &d[l.emb.start + x * e..l.emb.start + (x + 1) * e];

    let mut z = d[l.bz.clone()].to_vec();
    gemv_acc(&d[l.wz.clone()], emb, &mut z);
    gemv_acc(&d[l.uz.clone()], h_prev, &mut z);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut r = d[l.br.clone()].to_vec();
    gemv_acc(&d[l.wr.clone()], emb, &mut r);
    gemv_acc(&d[l.ur.clone()], h_prev, &mut r);
    r.iter_mut().for_each(|v| *v = sigmoid(*v));

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut cand = d[l.bh.clone()].to_vec();
    gemv_acc(&d[l.wh.clone()], emb, &mut cand);
    gemv_acc(&d[l.uh.clone()], &rh, &mut cand);
    cand.iter_mut().for_each(|v| *v = v.tanh());
    debug_assert_eq!(cand.len(), hd);

    StepCache {
        x,
        h_prev: h_prev.to_vec(),
        z,
        r,
        cand,
    }
}

fn next_state(c: &StepCache) -> Vec<f64> {
    c.h_prev
        .iter()
        .zip(&c.z)
        .zip(&c.cand)
        .map(|((h, z), hc)| (1.0 - z) * h + z * hc)
        .collect()
}

/// Runs the GRU over `tokens` from a zero initial state.
pub fn encode(p: &ModelParameters, tokens: &[usize]) -> Result<Trace> {
    if tokens.is_empty() {
        return Err(Error::Empty("model input needs at least one event"));
    }
    p.check_tokens(tokens)?;
    let l = p.layout();
    let mut h = vec![0.0; p.dims.hidden];
    let mut steps = Vec::with_capacity(tokens.len());
    let mut states = Vec::with_capacity(tokens.len());
    for &x in tokens {
        let c = gru_step(p, &l, &h, x);
        h = next_state(&c);
        steps.push(c);
        states.push(h.clone());
    }
    Ok(Trace { steps, states })
}

/// Incremental encoder for decoding: one token at a time.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    params: &'a ModelParameters,
    layout: Layout,
    h: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(params: &'a ModelParameters) -> Self {
        Stepper {
            params,
            layout: params.layout(),
            h: vec![0.0; params.dims.hidden],
        }
    }

    pub fn feed(&mut self, x: usize) -> Result<()> {
        self.params.check_tokens(&[x])?;
        let c = gru_step(self.params, &self.layout, &self.h, x);
        self.h = next_state(&c);
        Ok(())
    }

    pub fn hidden(&self) -> &[f64] {
        &self.h
    }

    /// Per-step head logits for the next position.
    pub fn next_logits(&self) -> Vec<f64> {
        affine(&self.params.data, &self.layout.ar_w, &self.layout.ar_b, &self.h)
    }
}

fn affine(d: &[f64], w: &Range<usize>, b: &Range<usize>, h: &[f64]) -> Vec<f64> {
    let mut out = d[b.clone()].to_vec();
    gemv_acc(&d[w.clone()], h, &mut out);
    out
}

/// Row `t` holds the logits of position `t + 1` given `prefix[..=t]`.
pub fn forward_step_logits(p: &ModelParameters, prefix: &[usize]) -> Result<Matrix> {
    let trace = encode(p, prefix)?;
    Ok(step_logits_from(p, &trace))
}

fn step_logits_from(p: &ModelParameters, trace: &Trace) -> Matrix {
    let l = p.layout();
    let mut m = Matrix::zeros(trace.len(), p.dims.k);
    for (t, h) in trace.states.iter().enumerate() {
        m.row_mut(t)
            .copy_from_slice(&affine(&p.data, &l.ar_w, &l.ar_b, h));
    }
    m
}

/// Block-head logits for `horizon` future positions, all conditioned on the
/// final prefix state.
pub fn forward_block_logits(p: &ModelParameters, prefix: &[usize], horizon: usize) -> Result<Matrix> {
    if horizon != p.dims.horizon {
        return Err(Error::DimensionMismatch {
            expected: p.dims.horizon,
            got: horizon,
        });
    }
    let trace = encode(p, prefix)?;
    Ok(block_logits_from(p, trace.last()))
}

fn block_logits_from(p: &ModelParameters, h: &[f64]) -> Matrix {
    let l = p.layout();
    Matrix {
        rows: p.dims.horizon,
        cols: p.dims.k,
        data: affine(&p.data, &l.blk_w, &l.blk_b, h),
    }
}

pub fn forward_dist_logits(p: &ModelParameters, prefix: &[usize]) -> Result<Vec<f64>> {
    let trace = encode(p, prefix)?;
    let l = p.layout();
    Ok(affine(&p.data, &l.dist_w, &l.dist_b, trace.last()))
}

/// Softmax of the distribution head at the final prefix state.
pub fn forward_dist(p: &ModelParameters, prefix: &[usize]) -> Result<CategoricalDistribution> {
    Ok(CategoricalDistribution::from_logits(&forward_dist_logits(p, prefix)?))
}

/// Backpropagates head gradients through time. `dstates[t]` is the gradient of
/// the loss with respect to `states[t]` coming from the heads.
fn backprop(p: &ModelParameters, l: &Layout, trace: &Trace, dstates: &[Vec<f64>], grad: &mut [f64]) {
    let (e, hd) = (p.dims.embed, p.dims.hidden);
    let d = &p.data;
    let mut carry = vec![0.0; hd];
    for t in (0..trace.len()).rev() {
        let c = &trace.steps[t];
        let dh: Vec<f64> = carry.iter().zip(&dstates[t]).map(|(a, b)| a + b).collect();

        let mut da_z = vec![0.0; hd];
        let mut da_h = vec![0.0; hd];
        let mut dprev = vec![0.0; hd];
        for i in 0..hd {
            let z = c.z[i];
            da_z[i] = dh[i] * (c.cand[i] - c.h_prev[i]) * z * (1.0 - z);
            da_h[i] = dh[i] * z * (1.0 - c.cand[i] * c.cand[i]);
            dprev[i] = dh[i] * (1.0 - z);
        }

        let rh: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(a, b)| a * b).collect();
        outer_acc(&mut grad[l.uh.clone()], &da_h, &rh);
        let mut drh = vec![0.0; hd];
        gemv_t_acc(&d[l.uh.clone()], &da_h, &mut drh);
        let mut da_r = vec![0.0; hd];
        for i in 0..hd {
            da_r[i] = drh[i] * c.h_prev[i] * c.r[i] * (1.0 - c.r[i]);
            dprev[i] += drh[i] * c.r[i];
        }

        gemv_t_acc(&d[l.uz.clone()], &da_z, &mut dprev);
        gemv_t_acc(&d[l.ur.clone()], &da_r, &mut dprev);
        outer_acc(&mut grad[l.uz.clone()], &da_z, &c.h_prev);
        outer_acc(&mut grad[l.ur.clone()], &da_r, &c.h_prev);

        let emb_at = l.emb.start + c.x * e;
        let emb = &d[emb_at..emb_at + e];
        outer_acc(&mut grad[l.wz.clone()], &da_z, emb);
        outer_acc(&mut grad[l.wr.clone()], &da_r, emb);
        outer_acc(&mut grad[l.wh.clone()], &da_h, emb);
        let mut demb = vec![0.0; e];
        gemv_t_acc(&d[l.wz.clone()], &da_z, &mut demb);
        gemv_t_acc(&d[l.wr.clone()], &da_r, &mut demb);
        gemv_t_acc(&d[l.wh.clone()], &da_h, &mut demb);
        grad[emb_at..emb_at + e]
            .iter_mut()
            .zip(&demb)
            .for_each(|(g, v)| *g += v);

        for (range, da) in [(&l.bz, &da_z), (&l.br, &da_r), (&l.bh, &da_h)] {
            grad[range.clone()].iter_mut().zip(da).for_each(|(g, v)| *g += v);
        }
        carry = dprev;
    }
}

/// Accumulates an affine head's parameter gradient and returns `dL/dh`.
fn affine_backward(
    d: &[f64],
    w: &Range<usize>,
    b: &Range<usize>,
    h: &[f64],
    dlogits: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    outer_acc(&mut grad[w.clone()], dlogits, h);
    grad[b.clone()].iter_mut().zip(dlogits).for_each(|(g, v)| *g += v);
    let mut dh = vec![0.0; h.len()];
    gemv_t_acc(&d[w.clone()], dlogits, &mut dh);
    dh
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Next-token prediction with teacher forcing.
    Ntp,
    /// Block cross-entropy at the ground-truth ordering.
    Target,
    /// Block cross-entropy under the best band-limited reordering.
    Matched,
    /// KL from the horizon histogram to a single predicted distribution.
    Dist,
    /// Mean NLL of every horizon token under the next-step distribution.
    Uniform,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::Ntp,
        Objective::Target,
        Objective::Matched,
        Objective::Dist,
        Objective::Uniform,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Objective::Ntp => "ntp",
            Objective::Target => "target",
            Objective::Matched => "matched",
            Objective::Dist => "dist",
            Objective::Uniform => "uniform",
        }
    }

    /// Whether training examples are (prefix, horizon) pairs rather than
    /// whole sequences.
    pub fn uses_horizon(&self) -> bool {
        !matches!(self, Objective::Ntp)
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown objective {s:?}")))
    }
}

/// One training instance. For [`Objective::Ntp`] the horizon is empty and the
/// prefix is the whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub prefix: Vec<usize>,
    pub horizon: Vec<usize>,
}

/// Loss and flat parameter gradient of one example.
pub fn loss_and_grad(p: &ModelParameters, objective: Objective, band: usize, ex: &Example) -> Result<(f64, Vec<f64>)> {
    let l = p.layout();
    let mut grad = vec![0.0; l.total];
    let hd = p.dims.hidden;
    p.check_tokens(&ex.horizon)?;
    let loss = match objective {
        Objective::Ntp => {
            if ex.prefix.len() < 2 {
                return Err(Error::Empty("next-token loss needs at least two events"));
            }
            let (inputs, targets) = (&ex.prefix[..ex.prefix.len() - 1], &ex.prefix[1..]);
            let trace = encode(p, inputs)?;
            let logits = step_logits_from(p, &trace);
            let (loss, dlogits) = objectives::ntp_loss_grad(&logits, targets)?;
            let dstates: Vec<Vec<f64>> = (0..trace.len())
                .map(|t| affine_backward(&p.data, &l.ar_w, &l.ar_b, trace.state(t), dlogits.row(t), &mut grad))
                .collect();
            backprop(p, &l, &trace, &dstates, &mut grad);
            loss
        }
        _ => {
            let trace = encode(p, &ex.prefix)?;
            let h = trace.last();
            let (loss, dh) = match objective {
                Objective::Target | Objective::Matched => {
                    let logits = block_logits_from(p, h);
                    let (loss, dlogits) = if objective == Objective::Target {
                        objectives::target_loss_grad(&logits, &ex.horizon)?
                    } else {
                        let (loss, dlogits, _) = objectives::matched_loss_grad(&logits, &ex.horizon, band)?;
                        (loss, dlogits)
                    };
                    let dh = affine_backward(&p.data, &l.blk_w, &l.blk_b, h, &dlogits.data, &mut grad);
                    (loss, dh)
                }
                Objective::Dist => {
                    let logits = affine(&p.data, &l.dist_w, &l.dist_b, h);
                    let target = crate::data::empirical_distribution(&ex.horizon, p.dims.k)?;
                    let (loss, dlogits) = objectives::dist_kl_loss_grad(&logits, &target)?;
                    let dh = affine_backward(&p.data, &l.dist_w, &l.dist_b, h, &dlogits, &mut grad);
                    (loss, dh)
                }
                Objective::Uniform => {
                    let logits = affine(&p.data, &l.ar_w, &l.ar_b, h);
                    let (loss, dlogits) = objectives::horizon_uniform_loss_grad(&logits, &ex.horizon)?;
                    let dh = affine_backward(&p.data, &l.ar_w, &l.ar_b, h, &dlogits, &mut grad);
                    (loss, dh)
                }
                Objective::Ntp => unreachable!(),
            };
            let mut dstates = vec![vec![0.0; hd]; trace.len()];
            *dstates.last_mut().expect("non-empty trace") = dh;
            backprop(p, &l, &trace, &dstates, &mut grad);
            loss
        }
    };
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("{objective} loss is {loss}")));
    }
    Ok((loss, grad))
}

/// Loss only (no gradient), used by finite differences.
pub fn loss_value(p: &ModelParameters, objective: Objective, band: usize, ex: &Example) -> Result<f64> {
    Ok(loss_and_grad(p, objective, band, ex)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

/// Floor on the relative-error denominator so coordinates whose gradient is
/// essentially zero are judged on absolute error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

/// Compares an analytic gradient against central finite differences on up to
/// `coords` randomly chosen coordinates (all of them when the vector is
/// smaller).
pub fn grad_check<F>(theta: &[f64], loss: F, eps: f64, coords: usize, seed: u64) -> Result<GradCheck>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (value, analytic) = loss(theta)?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss is {value}")));
    }
    let mut idx: Vec<usize> = (0..theta.len()).collect();
    idx.shuffle(&mut seed::rng(seed));
    idx.truncate(coords.max(1));
    let mut work = theta.to_vec();
    let mut worst: f64 = 0.0;
    for &i in &idx {
        let orig = work[i];
        work[i] = orig + eps;
        let up = loss(&work)?.0;
        work[i] = orig - eps;
        let down = loss(&work)?.0;
        work[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss at coordinate {i}")));
        }
        let numeric = (up - down) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(GradCheck {
        max_rel_error: worst,
        coords_checked: idx.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub embed: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub objective: Objective,
    /// Matching band for [`Objective::Matched`].
    pub band: usize,
    pub horizon: usize,
    /// Spacing between cut points when slicing a training sequence into
    /// (prefix, horizon) examples; defaults to the horizon length.
    pub cut_stride: Option<usize>,
    pub optimizer: Optimizer,
    /// Global gradient-norm clip applied before each update.
    pub clip_norm: Option<f64>,
    /// Compute per-example gradients on the rayon pool. They are still summed
    /// in batch order, so results match the single-threaded run bit for bit.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed: 32,
            hidden: 64,
            lr: 0.3,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            objective: Objective::Ntp,
            band: 8,
            horizon: crate::data::DEFAULT_HORIZON,
            cut_stride: None,
            optimizer: Optimizer::Sgd,
            clip_norm: Some(5.0),
            parallel: false,
        }
    }
}

/// Fixed model and optimiser sizes used in place of a hyperparameter search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// A few seconds on small synthetic data; for smoke tests.
    Tiny,
    /// [`TrainConfig::default`].
    Small,
    /// Wider network, denser training cuts and more epochs.
    Medium,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Tiny, Preset::Small, Preset::Medium];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Tiny => "tiny",
            Preset::Small => "small",
            Preset::Medium => "medium",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}")))
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = TrainConfig::default();
        match preset {
            Preset::Tiny => TrainConfig {
                embed: 8,
                hidden: 16,
                epochs: 3,
                ..base
            },
            Preset::Small => base,
            Preset::Medium => TrainConfig {
                embed: 64,
                hidden: 128,
                epochs: 20,
                lr: 0.2,
                cut_stride: Some(8),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed", self.embed),
            ("hidden", self.hidden),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("horizon", self.horizon),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.cut_stride == Some(0) {
            return Err(Error::Config("cut_stride must be positive".into()));
        }
        Ok(())
    }
}

/// Slices each sequence into training examples for `objective`. Horizon
/// objectives take cut points `T - N, T - 2N, ...` (spacing `stride`) while the
/// prefix stays non-empty.
pub fn training_examples(dataset: &Dataset, objective: Objective, horizon: usize, stride: usize) -> Vec<Example> {
    let mut out = Vec::new();
    for s in &dataset.sequences {
        let cats = s.categories();
        if !objective.uses_horizon() {
            if cats.len() >= 2 {
                out.push(Example {
                    prefix: cats,
                    horizon: Vec::new(),
                });
            }
            continue;
        }
        let mut cut = cats.len() as isize - horizon as isize;
        while cut >= 1 {
            let c = cut as usize;
            out.push(Example {
                prefix: cats[..c].to_vec(),
                horizon: cats[c..c + horizon].to_vec(),
            });
            cut -= stride as isize;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParameters,
    /// Mean example loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub examples: usize,
}

/// Minibatch training on `k` categories. Deterministic for a fixed config:
/// example order is drawn from the config seed and per-example gradients are
/// summed in batch order.
pub fn train(dataset: &Dataset, k: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let stride = config.cut_stride.unwrap_or(config.horizon);
    let examples = training_examples(dataset, config.objective, config.horizon, stride);
    train_examples(&examples, k, config)
}

pub fn train_examples(examples: &[Example], k: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("no training examples (sequences too short?)"));
    }
    let dims = Dims {
        k,
        embed: config.embed,
        hidden: config.hidden,
        horizon: config.horizon,
    };
    let mut params = ModelParameters::init(dims, seed::derive(config.seed, &["init"]));
    let n = params.len();
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut updates = 0i32;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut seed::derived_rng(config.seed, &["epoch", &epoch.to_string()]));
        let mut epoch_total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let one = |&i: &usize| loss_and_grad(&params, config.objective, config.band, &examples[i]);
            let results: Result<Vec<(f64, Vec<f64>)>> = if config.parallel {
                batch.par_iter().map(one).collect()
            } else {
                batch.iter().map(one).collect()
            };
            let results = results.map_err(|e| match e {
                    Error::NonFinite(_) => Error::Diverged {
                        epoch,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
            let scale = 1.0 / batch.len() as f64;
            let mut grad = vec![0.0; n];
            for (loss, g) in &results {
                epoch_total += loss;
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b * scale);
            }
            if let Some(clip) = config.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    grad.iter_mut().for_each(|g| *g *= clip / norm);
                }
            }
            updates += 1;
            let theta = params.flat_mut();
            match config.optimizer {
                Optimizer::Sgd => theta
                    .iter_mut()
                    .zip(&grad)
                    .for_each(|(w, g)| *w -= config.lr * g),
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(updates);
                    let c2 = 1.0 - beta2.powi(updates);
                    for i in 0..n {
                        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                        theta[i] -= config.lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
        let mean = epoch_total / examples.len() as f64;
        if !mean.is_finite() || params.flat().iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
        examples: examples.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub dims: Dims,
    pub config: TrainConfig,
    pub seed: u64,
    pub len: usize,
    /// Category labels in index order.
    pub labels: Vec<String>,
}

const CHECKPOINT_FORMAT: &str = "seqdist-params";

/// Writes a one-line JSON header followed by the parameters as little-endian
/// `f64` values.
pub fn save_checkpoint<W: Write>(
    mut w: W,
    params: &ModelParameters,
    config: &TrainConfig,
    labels: Vec<String>,
) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: 1,
        dims: params.dims,
        config: config.clone(),
        seed: config.seed,
        len: params.len(),
        labels,
    };
    let io = |e| Error::io("<checkpoint>", e);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(io)?;
    for x in params.flat() {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_checkpoint<R: Read>(r: R) -> Result<(CheckpointHeader, ModelParameters)> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)
        .map_err(|e| Error::io("<checkpoint>", e))?;
    let header: CheckpointHeader = serde_json::from_slice(&line)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unexpected format {:?}", header.format)));
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body)
        .map_err(|e| Error::io("<checkpoint>", e))?;
    if body.len() != header.len * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            header.len * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let params = ModelParameters::from_flat(header.dims, data)?;
    Ok((header, params))
}

pub fn save_checkpoint_file(path: &Path, params: &ModelParameters, config: &TrainConfig, labels: Vec<String>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    save_checkpoint(std::io::BufWriter::new(f), params, config, labels)
}

pub fn load_checkpoint_file(path: &Path) -> Result<(CheckpointHeader, ModelParameters)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    load_checkpoint(f)
}
