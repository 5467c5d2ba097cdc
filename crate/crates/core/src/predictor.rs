//! Sliding-window LSTM regressor: r past intent samples in, the sample m
//! steps ahead out.
//!
//! Each step feeds `z = [x_t, h_{t−1}, 1]` to four gate matrices
//! (candidate, input, forget, output), `c = i⊛x' + f⊛c_prev`,
//! `h = o⊛tanh(c)`. The last hidden state passes through a 10-unit ReLU
//! layer, a 10-unit linear layer and a scalar output.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal;

pub const DENSE: usize = 10;
pub const DEFAULT_HIDDEN: usize = 20;
pub const DEFAULT_WINDOW: usize = 20;
pub const DEFAULT_HORIZON: usize = 10;
/// Glove rate 200 Hz decimated by 12.
pub const DEFAULT_PERIOD_S: f64 = 0.06;

/// Supervised samples from one scalar series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub signal: Vec<f64>,
    pub r: usize,
    pub m: usize,
    pub period_s: f64,
}

pub fn make_windows(signal: &[f64], r: usize, m: usize) -> Result<WindowDataset> {
    if r == 0 || signal.len() < r + m {
        return Err(Error::SeriesTooShort {
            len: signal.len(),
            r,
            m,
        });
    }
    Ok(WindowDataset {
        signal: signal.to_vec(),
        r,
        m,
        period_s: DEFAULT_PERIOD_S,
    })
}

impl WindowDataset {
    pub fn len(&self) -> usize {
        self.signal.len() + 1 - self.r - self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Window `i` covers indices `i..i + r`.
    pub fn window(&self, i: usize) -> &[f64] {
        &self.signal[i..i + self.r]
    }

    /// Index of the last sample in window `i`.
    pub fn end_index(&self, i: usize) -> usize {
        i + self.r - 1
    }

    pub fn target(&self, i: usize) -> f64 {
        self.signal[self.end_index(i) + self.m]
    }
}

/// All weights in one flat buffer. Layout: four gate matrices `h × (h+2)`
/// (row-major, columns `[x, h_prev.., bias]`), dense1 `10 × h`, dense1 bias,
/// dense2 `10 × 10`, dense2 bias, output `1 × 10`, output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub hidden: usize,
    pub data: Vec<f64>,
}

struct Layout {
    h: usize,
}

impl Layout {
    fn gate_len(&self) -> usize {
        self.h * (self.h + 2)
    }
    fn gate(&self, k: usize) -> std::ops::Range<usize> {
        let n = self.gate_len();
        k * n..(k + 1) * n
    }
    fn d1w(&self) -> std::ops::Range<usize> {
        let s = 4 * self.gate_len();
        s..s + DENSE * self.h
    }
    fn d1b(&self) -> std::ops::Range<usize> {
        let s = self.d1w().end;
        s..s + DENSE
    }
    fn d2w(&self) -> std::ops::Range<usize> {
        let s = self.d1b().end;
        s..s + DENSE * DENSE
    }
    fn d2b(&self) -> std::ops::Range<usize> {
        let s = self.d2w().end;
        s..s + DENSE
    }
    fn ow(&self) -> std::ops::Range<usize> {
        let s = self.d2b().end;
        s..s + DENSE
    }
    fn ob(&self) -> usize {
        self.ow().end
    }
    fn total(&self) -> usize {
        self.ob() + 1
    }
}

impl LstmParams {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            data: vec![0.0; Layout { h: hidden }.total()],
        }
    }

    /// Uniform `±1/√fan_in` weights, forget-gate bias 1.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut p = Self::zeros(hidden);
        let l = p.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |range: std::ops::Range<usize>, scale: f64, data: &mut [f64]| {
            for v in &mut data[range] {
                *v = rng.random_range(-scale..scale);
            }
        };
        let gate_scale = 1.0 / (hidden as f64).sqrt();
        for k in 0..4 {
            fill(l.gate(k), gate_scale, &mut p.data);
        }
        fill(l.d1w(), 1.0 / (hidden as f64).sqrt(), &mut p.data);
        fill(l.d2w(), 1.0 / (DENSE as f64).sqrt(), &mut p.data);
        fill(l.ow(), 1.0 / (DENSE as f64).sqrt(), &mut p.data);
        let stride = hidden + 2;
        let forget = l.gate(2).start;
        for row in 0..hidden {
            p.data[forget + row * stride + hidden + 1] = 1.0;
        }
        p
    }

    fn layout(&self) -> Layout {
        Layout { h: self.hidden }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn gate(&self, k: usize) -> &[f64] {
        &self.data[self.layout().gate(k)]
    }

    pub fn gate_mut(&mut self, k: usize) -> &mut [f64] {
        let r = self.layout().gate(k);
        &mut self.data[r]
    }

    /// Rewrites weights trained on `(x − μ)/σ` so they act on raw inputs and
    /// produce raw outputs.
    pub fn fold_normalization(&mut self, mu: f64, sigma: f64) {
        let h = self.hidden;
        let stride = h + 2;
        for k in 0..4 {
            let g = self.gate_mut(k);
            for row in 0..h {
                let wx = g[row * stride];
                g[row * stride] = wx / sigma;
                g[row * stride + h + 1] -= wx * mu / sigma;
            }
        }
        let l = self.layout();
        for v in &mut self.data[l.ow()] {
            *v *= sigma;
        }
        let ob = l.ob();
        self.data[ob] = self.data[ob] * sigma + mu;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `tanh` through a single `exp`, noticeably cheaper than the libm call.
fn tanh(x: f64) -> f64 {
    if x.abs() < 0.02 {
        return x.tanh();
    }
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    h: usize,
    steps: usize,
    /// Per step: `z = [x, h_prev, 1]`.
    z: Vec<f64>,
    /// Per step: candidate, input, forget and output activations, `h` each.
    act: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
    hidden_out: Vec<f64>,
    d1_pre: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    pub output: f64,
}

impl ForwardCache {
    pub fn new(hidden: usize, steps: usize) -> Self {
        let n = hidden * steps;
        Self {
            h: hidden,
            steps,
            z: vec![0.0; (hidden + 2) * steps],
            act: vec![0.0; 4 * n],
            c: vec![0.0; n],
            tc: vec![0.0; n],
            hidden_out: vec![0.0; hidden],
            d1_pre: vec![0.0; DENSE],
            d1: vec![0.0; DENSE],
            d2: vec![0.0; DENSE],
            output: 0.0,
        }
    }

    /// Final LSTM block output (input to the dense head).
    pub fn hidden_state(&self) -> &[f64] {
        &self.hidden_out
    }

    /// Gate activations at step t: (candidate, input, forget, output).
    pub fn gates_at(&self, t: usize) -> (&[f64], &[f64], &[f64], &[f64]) {
        let a = &self.act[4 * self.h * t..4 * self.h * (t + 1)];
        let (g, rest) = a.split_at(self.h);
        let (i, rest) = rest.split_at(self.h);
        let (f, o) = rest.split_at(self.h);
        (g, i, f, o)
    }

    pub fn dense_sizes(&self) -> (usize, usize, usize) {
        (self.hidden_out.len(), self.d1.len(), self.d2.len())
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Runs the network over `window`, filling `cache`.
pub fn lstm_forward_into(params: &LstmParams, window: &[f64], cache: &mut ForwardCache) -> Result<f64> {
    let h = params.hidden;
    if window.is_empty() {
        return Err(Error::Invalid("empty input window".into()));
    }
    if cache.h != h || cache.steps != window.len() {
        *cache = ForwardCache::new(h, window.len());
    }
    let stride = h + 2;
    let l = params.layout();
    // The four gate blocks are contiguous: one (4h × stride) matrix.
    let gates = &params.data[l.gate(0).start..l.gate(3).end];
    for (t, &x) in window.iter().enumerate() {
        let z = &mut cache.z[t * stride..(t + 1) * stride];
        z[0] = x;
        if t == 0 {
            z[1..=h].iter_mut().for_each(|v| *v = 0.0);
        } else {
            let prev = (t - 1) * h;
            let (o, tc) = (&cache.act[4 * prev + 3 * h..4 * prev + 4 * h], &cache.tc[prev..prev + h]);
            for ((zv, ov), tv) in z[1..=h].iter_mut().zip(o).zip(tc) {
                *zv = ov * tv;
            }
        }
        z[h + 1] = 1.0;
        let act = &mut cache.act[4 * h * t..4 * h * (t + 1)];
        for (r, a) in act.iter_mut().enumerate() {
            let pre = dot(&gates[r * stride..(r + 1) * stride], z);
            *a = if r < h { tanh(pre) } else { sigmoid(pre) };
        }
        // NaN passes through so training can report divergence.
        debug_assert!(act[..h].iter().all(|v| !(v.abs() > 1.0)));
        debug_assert!(act[h..].iter().all(|v| !(*v < 0.0 || *v > 1.0)));
        for j in 0..h {
            let k = t * h + j;
            let c_prev = if t == 0 { 0.0 } else { cache.c[k - h] };
            let c = act[h + j] * act[j] + act[2 * h + j] * c_prev;
            cache.c[k] = c;
            cache.tc[k] = tanh(c);
        }
    }
    let last = window.len() - 1;
    for j in 0..h {
        cache.hidden_out[j] = cache.act[4 * h * last + 3 * h + j] * cache.tc[last * h + j];
    }
    let (d1w, d1b) = (&params.data[l.d1w()], &params.data[l.d1b()]);
    for u in 0..DENSE {
        let pre = d1b[u] + dot(&d1w[u * h..(u + 1) * h], &cache.hidden_out);
        cache.d1_pre[u] = pre;
        cache.d1[u] = pre.max(0.0);
    }
    let (d2w, d2b) = (&params.data[l.d2w()], &params.data[l.d2b()]);
    for u in 0..DENSE {
        cache.d2[u] = d2b[u] + dot(&d2w[u * DENSE..(u + 1) * DENSE], &cache.d1);
    }
    cache.output = params.data[l.ob()] + dot(&params.data[l.ow()], &cache.d2);
    Ok(cache.output)
}

pub fn lstm_forward(params: &LstmParams, window: &[f64]) -> Result<(f64, ForwardCache)> {
    let mut cache = ForwardCache::new(params.hidden, window.len());
    let y = lstm_forward_into(params, window, &mut cache)?;
    Ok((y, cache))
}

/// Accumulates `scale · ∂y/∂θ` into `grad` by backpropagation through time.
/// `scratch` is reused between calls.
fn backward(params: &LstmParams, cache: &ForwardCache, scale: f64, grad: &mut [f64], scratch: &mut Vec<f64>) {
    let h = params.hidden;
    let stride = h + 2;
    let l = params.layout();
    let dy = scale;
    let (ow, d2w, d1w) = (&params.data[l.ow()], &params.data[l.d2w()], &params.data[l.d1w()]);

    grad[l.ob()] += dy;
    axpy(dy, &cache.d2, &mut grad[l.ow()]);
    let mut dd2 = [0.0; DENSE];
    for u in 0..DENSE {
        dd2[u] = dy * ow[u];
    }
    let mut dd1 = [0.0; DENSE];
    let (d2wr, d2br) = (l.d2w(), l.d2b());
    for u in 0..DENSE {
        grad[d2br.start + u] += dd2[u];
        let row = d2wr.start + u * DENSE;
        axpy(dd2[u], &cache.d1, &mut grad[row..row + DENSE]);
        axpy(dd2[u], &d2w[u * DENSE..(u + 1) * DENSE], &mut dd1);
    }
    for (d, &pre) in dd1.iter_mut().zip(&cache.d1_pre) {
        if pre <= 0.0 {
            *d = 0.0;
        }
    }
    scratch.clear();
    scratch.resize(6 * h, 0.0);
    let (dh, rest) = scratch.split_at_mut(h);
    let (dc, da) = rest.split_at_mut(h);
    let (d1wr, d1br) = (l.d1w(), l.d1b());
    for u in 0..DENSE {
        grad[d1br.start + u] += dd1[u];
        let row = d1wr.start + u * h;
        axpy(dd1[u], &cache.hidden_out, &mut grad[row..row + h]);
        axpy(dd1[u], &d1w[u * h..(u + 1) * h], dh);
    }

    let gate_range = l.gate(0).start..l.gate(3).end;
    let gates = &params.data[gate_range.clone()];
    for t in (0..cache.steps).rev() {
        let z = &cache.z[t * stride..(t + 1) * stride];
        let act = &cache.act[4 * h * t..4 * h * (t + 1)];
        for j in 0..h {
            let k = t * h + j;
            let (g, i, f, o, tc) = (act[j], act[h + j], act[2 * h + j], act[3 * h + j], cache.tc[k]);
            let c_prev = if t == 0 { 0.0 } else { cache.c[k - h] };
            let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
            da[j] = dcj * i * (1.0 - g * g);
            da[h + j] = dcj * g * i * (1.0 - i);
            da[2 * h + j] = dcj * c_prev * f * (1.0 - f);
            da[3 * h + j] = dh[j] * tc * o * (1.0 - o);
            dc[j] = dcj * f;
        }
        dh.iter_mut().for_each(|v| *v = 0.0);
        let grad_gates = &mut grad[gate_range.clone()];
        for (r, &a) in da.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            axpy(a, z, &mut grad_gates[r * stride..(r + 1) * stride]);
            axpy(a, &gates[r * stride + 1..r * stride + 1 + h], dh);
        }
    }
}

/// Squared-error loss `(y − target)²` of one window and its gradient.
pub fn loss_and_gradient(params: &LstmParams, window: &[f64], target: f64) -> Result<(f64, Vec<f64>)> {
    let (y, cache) = lstm_forward(params, window)?;
    let mut grad = vec![0.0; params.len()];
    backward(params, &cache, 2.0 * (y - target), &mut grad, &mut Vec::new());
    Ok(((y - target) * (y - target), grad))
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences of the loss, over every parameter.
pub fn gradient_check(params: &LstmParams, window: &[f64], target: f64, epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(Error::Invalid(format!("epsilon {epsilon} outside [1e-7, 1e-4]")));
    }
    let (_, analytic) = loss_and_gradient(params, window, target)?;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (p, &a) in analytic.iter().enumerate() {
        let orig = probe.data[p];
        probe.data[p] = orig + epsilon;
        let (yp, _) = lstm_forward(&probe, window)?;
        probe.data[p] = orig - epsilon;
        let (ym, _) = lstm_forward(&probe, window)?;
        probe.data[p] = orig;
        let numeric = ((yp - target).powi(2) - (ym - target).powi(2)) / (2.0 * epsilon);
        let scale = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / scale);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of windows (the most recent) held out for validation.
    pub validation_split: f64,
    /// `None` is full-batch.
    pub batch_size: Option<usize>,
    pub optimizer: Optimizer,
    pub hidden_size: usize,
    /// Gradient norm cap per update; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            seed: 0,
            validation_split: 0.2,
            batch_size: None,
            optimizer: Optimizer::Adam,
            hidden_size: DEFAULT_HIDDEN,
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning rate must be non-negative".into()));
        }
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return Err(Error::Invalid("validation split must lie in (0, 1)".into()));
        }
        if self.hidden_size == 0 || self.batch_size == Some(0) {
            return Err(Error::Invalid("hidden size and batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean squared error on the training windows, signal units².
    pub train_mse: f64,
    pub validation_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Acts on raw (unnormalized) signal values.
    pub params: LstmParams,
    pub r: usize,
    pub m: usize,
    pub period_s: f64,
    pub history: Vec<EpochLoss>,
}

impl TrainedModel {
    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        Ok(lstm_forward(&self.params, window)?.0)
    }
}

#[derive(Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn reset_moments(&mut self) {
        *self = Self::new(self.m.len());
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
        }
    }
}

/// Mean loss over `set` in normalized units. With `grad`, the mean gradient
/// is written there as well.
#[allow(clippy::too_many_arguments)]
fn batch_pass(
    params: &LstmParams,
    set: &[(usize, f64)],
    data: &[f64],
    r: usize,
    cache: &mut ForwardCache,
    mut grad: Option<&mut [f64]>,
    scratch: &mut Vec<f64>,
) -> Result<f64> {
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    if set.is_empty() {
        return Ok(0.0);
    }
    let scale = 1.0 / set.len() as f64;
    let mut total = 0.0;
    for &(start, target) in set {
        let y = lstm_forward_into(params, &data[start..start + r], cache)?;
        total += (y - target) * (y - target);
        if let Some(g) = grad.as_deref_mut() {
            backward(params, cache, 2.0 * (y - target) * scale, g, scratch);
        }
    }
    Ok(total * scale)
}

fn clip(grad: &mut [f64], cap: Option<f64>) {
    if let Some(cap) = cap {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > cap {
            grad.iter_mut().for_each(|g| *g *= cap / norm);
        }
    }
}

fn apply(optimizer: Optimizer, adam: &mut Adam, params: &mut LstmParams, grad: &[f64], lr: f64) {
    match optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.data.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam => adam.step(&mut params.data, grad, lr),
    }
}

/// Chronological split: training windows first, then a gap of `r + m − 1`
/// windows so validation inputs and targets never overlap training ones.
pub fn split_indices(dataset: &WindowDataset, validation_split: f64) -> (Vec<usize>, Vec<usize>) {
    let n = dataset.len();
    let n_val = ((n as f64) * validation_split).round() as usize;
    let gap = dataset.r + dataset.m - 1;
    let n_train = n.saturating_sub(n_val + gap).max(1).min(n);
    let train: Vec<usize> = (0..n_train).collect();
    let val: Vec<usize> = ((n_train + gap).min(n)..n).collect();
    (train, val)
}

/// Trains on normalized values with backpropagation through time and folds
/// the normalization into the returned weights.
///
/// Full-batch training only keeps an update if it does not raise the training
/// loss; a rejected step restores the previous weights and optimizer state and
/// halves the step size, which recovers gradually on later accepted steps. The
/// recorded training loss is therefore non-increasing. Mini-batch training
/// takes every step and records the loss after each epoch.
pub fn train(dataset: &WindowDataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Invalid("empty dataset".into()));
    }
    let (train_idx, val_idx) = split_indices(dataset, cfg.validation_split);
    let train_values = &dataset.signal[..dataset.end_index(*train_idx.last().unwrap()) + dataset.m + 1];
    let mu = signal::mean(train_values);
    let var = train_values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / train_values.len() as f64;
    let sigma = if var > 1e-12 { var.sqrt() } else { 1.0 };
    let data: Vec<f64> = dataset.signal.iter().map(|v| (v - mu) / sigma).collect();
    let norm_target = |i: usize| data[dataset.end_index(i) + dataset.m];
    let train_set: Vec<(usize, f64)> = train_idx.iter().map(|&i| (i, norm_target(i))).collect();
    let val_set: Vec<(usize, f64)> = val_idx.iter().map(|&i| (i, norm_target(i))).collect();

    let r = dataset.r;
    let mut params = LstmParams::init(cfg.hidden_size, cfg.seed);
    let mut adam = Adam::new(params.len());
    let mut grad = vec![0.0; params.len()];
    let mut cache = ForwardCache::new(cfg.hidden_size, r);
    let mut scratch = Vec::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    let to_raw = sigma * sigma;

    match cfg.batch_size {
        None => {
            let mut loss = batch_pass(&params, &train_set, &data, r, &mut cache, Some(&mut grad), &mut scratch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch: 0, loss });
            }
            clip(&mut grad, cfg.clip_norm);
            let mut kept = (params.clone(), adam.clone(), grad.clone());
            let mut lr = cfg.learning_rate;
            let mut rejected = 0;
            for epoch in 1..=cfg.epochs {
                apply(cfg.optimizer, &mut adam, &mut params, &kept.2, lr);
                let trial = batch_pass(&params, &train_set, &data, r, &mut cache, Some(&mut grad), &mut scratch)?;
                if trial <= loss {
                    loss = trial;
                    clip(&mut grad, cfg.clip_norm);
                    kept = (params.clone(), adam.clone(), grad.clone());
                    lr = (lr * 1.1).min(cfg.learning_rate);
                    rejected = 0;
                } else {
                    params.data.copy_from_slice(&kept.0.data);
                    adam = kept.1.clone();
                    lr *= 0.5;
                    rejected += 1;
                    if rejected % 4 == 0 {
                        // The stored moments may no longer point downhill.
                        adam.reset_moments();
                        kept.1 = adam.clone();
                    }
                }
                let validation = batch_pass(&params, &val_set, &data, r, &mut cache, None, &mut scratch)?;
                history.push(EpochLoss {
                    epoch,
                    train_mse: loss * to_raw,
                    validation_mse: validation * to_raw,
                });
            }
        }
        Some(batch) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut order: Vec<usize> = (0..train_set.len()).collect();
            let mut chunk_set = Vec::with_capacity(batch);
            for epoch in 1..=cfg.epochs {
                order.shuffle(&mut rng);
                for chunk in order.chunks(batch) {
                    chunk_set.clear();
                    chunk_set.extend(chunk.iter().map(|&k| train_set[k]));
                    batch_pass(&params, &chunk_set, &data, r, &mut cache, Some(&mut grad), &mut scratch)?;
                    clip(&mut grad, cfg.clip_norm);
                    apply(cfg.optimizer, &mut adam, &mut params, &grad, cfg.learning_rate);
                }
                let train_mse = batch_pass(&params, &train_set, &data, r, &mut cache, None, &mut scratch)? * to_raw;
                if !train_mse.is_finite() || !params.is_finite() {
                    return Err(Error::Diverged { epoch, loss: train_mse });
                }
                let validation = batch_pass(&params, &val_set, &data, r, &mut cache, None, &mut scratch)?;
                history.push(EpochLoss {
                    epoch,
                    train_mse,
                    validation_mse: validation * to_raw,
                });
            }
        }
    }
    params.fold_normalization(mu, sigma);
    Ok(TrainedModel {
        params,
        r,
        m: dataset.m,
        period_s: dataset.period_s,
        history,
    })
}

/// Prediction for every index `n ≥ r − 1`: `(n + m, ŷ)` from the window ending at `n`.
pub fn predict_series(model: &TrainedModel, series: &[f64]) -> Result<Vec<(usize, f64)>> {
    let mut cache = ForwardCache::new(model.params.hidden, model.r);
    (model.r.saturating_sub(1)..series.len())
        .map(|n| {
            let y = lstm_forward_into(&model.params, &series[n + 1 - model.r..=n], &mut cache)?;
            Ok((n + model.m, y))
        })
        .collect()
}

/// Online predictor: once `r` samples are buffered, each new sample yields a
/// prediction stamped `m` periods ahead.
#[derive(Debug, Clone)]
pub struct StreamPredictor {
    model: TrainedModel,
    buffer: VecDeque<f64>,
    window: Vec<f64>,
    cache: ForwardCache,
}

impl StreamPredictor {
    pub fn new(model: TrainedModel) -> Self {
        let cache = ForwardCache::new(model.params.hidden, model.r);
        Self {
            buffer: VecDeque::with_capacity(model.r),
            window: Vec::with_capacity(model.r),
            cache,
            model,
        }
    }

    pub fn push(&mut self, t: f64, value: f64) -> Result<Option<(f64, f64)>> {
        if self.buffer.len() == self.model.r {
            self.buffer.pop_front();
        }
        self.buffer.push_back(value);
        if self.buffer.len() < self.model.r {
            return Ok(None);
        }
        self.window.clear();
        self.window.extend(self.buffer.iter());
        let y = lstm_forward_into(&self.model.params, &self.window, &mut self.cache)?;
        Ok(Some((t + self.model.m as f64 * self.model.period_s, y)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayJson {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ArrayJson {
    fn new(shape: Vec<usize>, data: &[f64]) -> Self {
        Self {
            shape,
            data: data.to_vec(),
        }
    }

    fn expect(&self, shape: &[usize], name: &str) -> Result<&[f64]> {
        if self.shape != shape || self.data.len() != shape.iter().product::<usize>() {
            return Err(Error::Invalid(format!(
                "model array {name}: expected shape {shape:?}, found {:?} with {} values",
                self.shape,
                self.data.len()
            )));
        }
        Ok(&self.data)
    }
}

/// Model file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub w1: ArrayJson,
    pub w2: ArrayJson,
    pub w3: ArrayJson,
    pub w4: ArrayJson,
    pub dense1_w: ArrayJson,
    pub dense1_b: ArrayJson,
    pub dense2_w: ArrayJson,
    pub dense2_b: ArrayJson,
    pub out_w: ArrayJson,
    pub out_b: ArrayJson,
    pub hidden_size: usize,
    pub r: usize,
    pub m: usize,
    pub period_s: f64,
}

impl From<&TrainedModel> for ModelFile {
    fn from(model: &TrainedModel) -> Self {
        let p = &model.params;
        let h = p.hidden;
        let l = p.layout();
        let gate = |k| ArrayJson::new(vec![h, h + 2], p.gate(k));
        Self {
            w1: gate(0),
            w2: gate(1),
            w3: gate(2),
            w4: gate(3),
            dense1_w: ArrayJson::new(vec![DENSE, h], &p.data[l.d1w()]),
            dense1_b: ArrayJson::new(vec![DENSE], &p.data[l.d1b()]),
            dense2_w: ArrayJson::new(vec![DENSE, DENSE], &p.data[l.d2w()]),
            dense2_b: ArrayJson::new(vec![DENSE], &p.data[l.d2b()]),
            out_w: ArrayJson::new(vec![1, DENSE], &p.data[l.ow()]),
            out_b: ArrayJson::new(vec![1], &p.data[l.ob()..l.ob() + 1]),
            hidden_size: h,
            r: model.r,
            m: model.m,
            period_s: model.period_s,
        }
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<TrainedModel> {
        let h = self.hidden_size;
        if h == 0 || self.r == 0 || !(self.period_s > 0.0) {
            return Err(Error::Invalid("model sizes and period must be positive".into()));
        }
        let mut data = Vec::with_capacity(LstmParams::zeros(h).len());
        for (name, a) in [("w1", &self.w1), ("w2", &self.w2), ("w3", &self.w3), ("w4", &self.w4)] {
            data.extend_from_slice(a.expect(&[h, h + 2], name)?);
        }
        data.extend_from_slice(self.dense1_w.expect(&[DENSE, h], "dense1_w")?);
        data.extend_from_slice(self.dense1_b.expect(&[DENSE], "dense1_b")?);
        data.extend_from_slice(self.dense2_w.expect(&[DENSE, DENSE], "dense2_w")?);
        data.extend_from_slice(self.dense2_b.expect(&[DENSE], "dense2_b")?);
        data.extend_from_slice(self.out_w.expect(&[1, DENSE], "out_w")?);
        data.extend_from_slice(self.out_b.expect(&[1], "out_b")?);
        let params = LstmParams { hidden: h, data };
        if !params.is_finite() {
            return Err(Error::Invalid("model weights are not finite".into()));
        }
        Ok(TrainedModel {
            params,
            r: self.r,
            m: self.m,
            period_s: self.period_s,
            history: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_counts_and_overlap() {
        let s: Vec<f64> = (0..40).map(f64::from).collect();
        let ds = make_windows(&s, 20, 10).unwrap();
        let brute = (0..40).filter(|&n| n + 1 >= 20 && n + 10 < 40).count();
        assert_eq!(ds.len(), 11);
        assert_eq!(ds.len(), brute);
        for i in 1..ds.len() {
            assert_eq!(ds.window(i - 1)[1..], ds.window(i)[..19]);
        }
        assert_eq!(ds.target(0), 29.0);
        assert_eq!(ds.target(10), 39.0);
        assert!(matches!(make_windows(&s[..25], 20, 10), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn zero_weights_predict_zero() {
        let p = LstmParams::zeros(20);
        let (y, cache) = lstm_forward(&p, &[0.3; 20]).unwrap();
        assert_eq!(y, 0.0);
        assert_eq!(cache.dense_sizes(), (20, 10, 10));
    }

    /// Independent scalar recurrence for h = 1 written straight from the gate equations.
    #[test]
    fn hand_set_weights_match_manual_recurrence() {
        let mut p = LstmParams::zeros(1);
        // columns [x, h_prev, bias]
        p.gate_mut(0).copy_from_slice(&[0.5, -0.3, 0.1]);
        p.gate_mut(1).copy_from_slice(&[0.2, 0.4, -0.2]);
        p.gate_mut(2).copy_from_slice(&[-0.1, 0.3, 0.5]);
        p.gate_mut(3).copy_from_slice(&[0.7, -0.6, 0.0]);
        let l = p.layout();
        for (k, idx) in l.d1w().enumerate() {
            p.data[idx] = 0.1 * (k as f64 + 1.0) * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        for idx in l.d2w() {
            p.data[idx] = 0.05;
        }
        for idx in l.ow() {
            p.data[idx] = 0.3;
        }
        let ob = l.ob();
        p.data[ob] = -0.2;

        let xs = [0.4, -1.0, 2.0];
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut h, mut c) = (0.0f64, 0.0f64);
        for &x in &xs {
            let g = (0.5 * x - 0.3 * h + 0.1).tanh();
            let i = s(0.2 * x + 0.4 * h - 0.2);
            let f = s(-0.1 * x + 0.3 * h + 0.5);
            let o = s(0.7 * x - 0.6 * h);
            c = i * g + f * c;
            h = o * c.tanh();
        }
        let d1: Vec<f64> = (0..10)
            .map(|k| (0.1 * (k as f64 + 1.0) * if k % 2 == 0 { 1.0 } else { -1.0 } * h).max(0.0))
            .collect();
        let d2 = 0.05 * d1.iter().sum::<f64>();
        let expected = 0.3 * 10.0 * d2 - 0.2;
        let (y, _) = lstm_forward(&p, &xs).unwrap();
        assert!((y - expected).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = LstmParams::init(6, 3);
        let window: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let err = gradient_check(&p, &window, 0.4, 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
        assert!(gradient_check(&p, &window, 0.4, 1e-2).is_err());
    }

    #[test]
    fn exact_fit_has_zero_gradient() {
        let p = LstmParams::zeros(5);
        let (loss, g) = loss_and_gradient(&p, &[0.1, 0.2, 0.3], 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn directional_derivative() {
        let p = LstmParams::init(4, 11);
        let window = [0.2, -0.5, 0.9, 0.1];
        let (l0, g) = loss_and_gradient(&p, &window, 0.7).unwrap();
        let idx = p.layout().gate(2).start + 3;
        for delta in [1e-3, 1e-4] {
            let mut q = p.clone();
            q.data[idx] += delta;
            let (l1, _) = loss_and_gradient(&q, &window, 0.7).unwrap();
            assert!((l1 - l0 - g[idx] * delta).abs() < 10.0 * delta * delta);
        }
    }

    #[test]
    fn gates_are_bounded() {
        let p = LstmParams::init(8, 1);
        let (_, cache) = lstm_forward(&p, &[5.0, -3.0, 10.0, 0.0]).unwrap();
        for t in 0..4 {
            let (g, i, f, o) = cache.gates_at(t);
            assert!(g.iter().all(|v| v.abs() < 1.0));
            assert!(i.iter().chain(f).chain(o).all(|v| *v > 0.0 && *v < 1.0));
        }
    }

    #[test]
    fn normalization_folding_is_exact() {
        let p = LstmParams::init(5, 2);
        let (mu, sigma) = (3.0, 2.5);
        let raw = [4.0, 1.0, 2.5, 7.0];
        let normed: Vec<f64> = raw.iter().map(|v| (v - mu) / sigma).collect();
        let (yn, _) = lstm_forward(&p, &normed).unwrap();
        let mut folded = p.clone();
        folded.fold_normalization(mu, sigma);
        let (yr, _) = lstm_forward(&folded, &raw).unwrap();
        assert!((yr - (yn * sigma + mu)).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_loss() {
        let s: Vec<f64> = (0..80).map(|i| (i as f64 * 0.2).sin()).collect();
        let ds = make_windows(&s, 10, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 4,
            hidden_size: 4,
            ..TrainConfig::default()
        };
        let m = train(&ds, &cfg).unwrap();
        assert!(m.history.windows(2).all(|w| w[0].train_mse == w[1].train_mse));
    }

    #[test]
    fn training_is_deterministic() {
        let s: Vec<f64> = (0..80).map(|i| (i as f64 * 0.2).sin()).collect();
        let ds = make_windows(&s, 10, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            hidden_size: 4,
            seed: 9,
            ..TrainConfig::default()
        };
        assert_eq!(train(&ds, &cfg).unwrap().params, train(&ds, &cfg).unwrap().params);
    }

    #[test]
    fn full_batch_loss_never_rises() {
        let s: Vec<f64> = (0..150).map(|i| 5.0 / (1.0 + (-(((i % 50) as f64) - 25.0) / 4.0).exp())).collect();
        let ds = make_windows(&s, 10, 4).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            hidden_size: 6,
            learning_rate: 0.3,
            ..TrainConfig::default()
        };
        let m = train(&ds, &cfg).unwrap();
        assert!(m.history.windows(2).all(|w| w[1].train_mse <= w[0].train_mse));
        assert!(m.history.last().unwrap().train_mse < m.history[0].train_mse);
    }

    #[test]
    fn constant_signal_is_learned() {
        let ds = make_windows(&[3.0; 60], 8, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 40,
            hidden_size: 4,
            ..TrainConfig::default()
        };
        let m = train(&ds, &cfg).unwrap();
        let mut s = StreamPredictor::new(m);
        let mut last = None;
        for n in 0..30 {
            if let Some((_, y)) = s.push(n as f64 * 0.06, 3.0).unwrap() {
                last = Some(y);
            }
        }
        assert!((last.unwrap() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn runaway_steps_report_divergence() {
        let s: Vec<f64> = (0..60).map(|i| (i as f64 * 0.3).sin()).collect();
        let ds = make_windows(&s, 6, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            hidden_size: 3,
            learning_rate: 1e300,
            batch_size: Some(4),
            optimizer: Optimizer::Sgd,
            clip_norm: None,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&ds, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn stream_waits_for_a_full_window() {
        let model = TrainedModel {
            params: LstmParams::init(4, 0),
            r: 5,
            m: 10,
            period_s: 0.06,
            history: Vec::new(),
        };
        let mut s = StreamPredictor::new(model.clone());
        for n in 0..4 {
            assert!(s.push(n as f64 * 0.06, 1.0).unwrap().is_none());
        }
        let (t, y) = s.push(0.24, 1.0).unwrap().unwrap();
        assert!((t - (0.24 + 0.6)).abs() < 1e-12);
        assert_eq!(y, model.predict(&[1.0; 5]).unwrap());
    }

    #[test]
    fn model_file_round_trip() {
        let model = TrainedModel {
            params: LstmParams::init(3, 5),
            r: 20,
            m: 10,
            period_s: 0.06,
            history: Vec::new(),
        };
        let file = ModelFile::from(&model);
        let json = serde_json::to_string(&file).unwrap();
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.w1.shape, vec![3, 5]);
        assert_eq!(back.into_model().unwrap().params, model.params);

        let mut broken = file.clone();
        broken.dense2_w.shape = vec![10, 9];
        assert!(broken.into_model().is_err());
    }
}
